//! Language-neutral tokenization shared by corpus statistics, lexicon
//! matching and the BM25 index.
//!
//! Text is NFKC-normalized and lowercased, then split on whitespace and on
//! any character in a Unicode punctuation or symbol category. No stemming
//! and no stopword removal are applied.

use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategory, GeneralCategoryGroup, UnicodeGeneralCategory};

// Format characters (ZWNJ in Persian script) stay inside tokens.
fn is_separator(c: char) -> bool {
    c.is_whitespace()
        || c.general_category() == GeneralCategory::Control
        || matches!(
            c.general_category_group(),
            GeneralCategoryGroup::Punctuation
                | GeneralCategoryGroup::Symbol
                | GeneralCategoryGroup::Separator
        )
}

/// Splits `text` into normalized tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfkc().flat_map(char::to_lowercase).collect();
    normalized
        .split(is_separator)
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Canonical form of a word or phrase: its tokens joined by single spaces.
///
/// Used as the lookup key for lemmas and word embeddings, so
/// `"Lily-of-the-valley_tree"` and `"lily of the valley tree"` collide.
pub fn normalize_phrase(text: &str) -> String {
    tokenize(text).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_splits_on_punctuation() {
        assert_eq!(tokenize("Andromeda tree, ok!"), ["andromeda", "tree", "ok"]);
        assert_eq!(
            tokenize("lily-of-the-valley_tree"),
            ["lily", "of", "the", "valley", "tree"]
        );
    }

    #[test]
    fn nfkc_folds_compatibility_forms() {
        // fullwidth latin and the "fi" ligature
        assert_eq!(tokenize("ＡＢＣ ﬁre"), ["abc", "fire"]);
    }

    #[test]
    fn keeps_non_latin_scripts_intact() {
        assert_eq!(tokenize("albero di Natale"), ["albero", "di", "natale"]);
        // Persian words with the Arabic comma between them
        assert_eq!(tokenize("درخت،کاج"), ["درخت", "کاج"]);
        assert_eq!(tokenize("می\u{200c}روم"), ["می\u{200c}روم"]);
    }

    #[test]
    fn empty_and_separator_only_inputs() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ,;  -- ").is_empty());
        assert_eq!(normalize_phrase("  Pieris   japonica "), "pieris japonica");
    }
}
