//! Word tokenization shared by retrieval, style metrics and source filtering.

/// Lowercased maximal runs of alphanumeric characters.
///
/// No stemming and no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn word_count(text: &str) -> usize {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_non_alphanumerics_and_folds_case() {
        assert_eq!(tokenize("The cat's  BIG-toy, 2024!"), vec!["the", "cat", "s", "big", "toy", "2024"]);
        assert!(tokenize(" ... ").is_empty());
        assert_eq!(tokenize("Über straße"), vec!["über", "straße"]);
    }

    #[test]
    fn counts_words() {
        assert_eq!(word_count("Nice paper."), 2);
        assert_eq!(word_count(""), 0);
    }
}
