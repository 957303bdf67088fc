fn main() {
    std::process::exit(kaqa::cli::run(std::env::args_os()));
}
