//! Whitespace tokenization with lowercasing and punctuation detachment.

/// Lowercases `text`, splits on whitespace and emits every ASCII punctuation
/// character other than `_` as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if ch.is_ascii_punctuation() && ch != '_' {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(ch.to_string());
            } else {
                current.extend(ch.to_lowercase());
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(
            tokenize("Who founded  the Nobel Prize?"),
            ["who", "founded", "the", "nobel", "prize", "?"]
        );
        assert_eq!(
            tokenize("rock-n-roll, (ok)"),
            ["rock", "-", "n", "-", "roll", ",", "(", "ok", ")"]
        );
        assert_eq!(tokenize("snake_case"), ["snake_case"]);
        assert!(tokenize("   ").is_empty());
    }
}
