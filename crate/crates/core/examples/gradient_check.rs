//! Reverse-mode gradients against central differences: every autodiff
//! kernel, then every trainable coordinate of each model variant.

use kaqa::autodiff::{kernel_suite, KERNEL_STEP};
use kaqa::model::fixture::{full_loss_grad_error, GRAD_STEP};
use kaqa::model::Variant;

fn main() -> kaqa::Result<()> {
    println!("kernel\tmax_rel_error (step {KERNEL_STEP:e})");
    for (name, err) in kernel_suite(7)? {
        println!("{name}\t{err:.2e}");
    }
    println!("variant\tmax_rel_error (step {GRAD_STEP:e})");
    for variant in Variant::ALL {
        println!("{variant}\t{:.2e}", full_loss_grad_error(variant)?);
    }
    Ok(())
}
