//! Tokenisation shared by the oracle matcher and the overlap metrics.
//!
//! Text is lowercased and split into maximal runs of alphanumeric
//! characters; whitespace, underscores and punctuation separate tokens.

use alloc::string::String;
use alloc::vec::Vec;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Tokens joined by single spaces.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_underscores() {
        assert_eq!(tokenize("Sand/carve the leg_diameter, ok?"), ["sand", "carve", "the", "leg", "diameter", "ok"]);
        assert!(tokenize(" ,;- ").is_empty());
        assert_eq!(normalize("  Budget   Available! "), "budget available");
    }
}
