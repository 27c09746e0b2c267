//! Small deterministic word-level heuristics: vowel-group syllabification,
//! a function-word list and a lexicon for compound breaks.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

fn is_vowel(c: char, pos: usize) -> bool {
    match c.to_lowercase().next().unwrap_or(c) {
        'a' | 'e' | 'i' | 'o' | 'u' => true,
        'ä' | 'ö' | 'ü' | 'à' | 'á' | 'â' | 'è' | 'é' | 'ê' | 'ì' | 'í' | 'î' | 'ò' | 'ó' | 'ô' | 'ù' | 'ú' | 'û' => true,
        'y' => pos > 0,
        _ => false,
    }
}

fn vowel_groups(word: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = word.chars().collect();
    let mut groups = Vec::new();
    let mut p = 0;
    while p < chars.len() {
        if is_vowel(chars[p], p) {
            let start = p;
            while p < chars.len() && is_vowel(chars[p], p) {
                p += 1;
            }
            groups.push((start, p));
        } else {
            p += 1;
        }
    }
    groups
}

/// Character offsets where a new syllable starts (never 0).
///
/// Between two vowel groups a single consonant opens the next syllable
/// (`to|day`); a longer cluster is split after its first consonant
/// (`win|ter`).
pub fn syllable_boundaries(word: &str) -> Vec<usize> {
    vowel_groups(word)
        .windows(2)
        .map(|w| {
            let cluster = w[1].0 - w[0].1;
            if cluster <= 1 {
                w[0].1
            } else {
                w[0].1 + 1
            }
        })
        .collect()
}

pub fn syllable_count(word: &str) -> usize {
    vowel_groups(word).len().max(1)
}

const FUNCTION_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have", "having", "he",
    "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "me", "might", "more", "most", "must", "my", "myself", "no", "nor", "not", "now", "of", "off",
    "on", "once", "only", "or", "other", "our", "ours", "out", "over", "own", "same", "shall", "she", "should", "so",
    "some", "such", "than", "that", "the", "their", "theirs", "them", "then", "there", "these", "they", "this",
    "those", "through", "to", "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where",
    "which", "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
];

pub fn is_function_word(word: &str) -> bool {
    let lower = word.to_lowercase();
    FUNCTION_WORDS.binary_search(&lower.as_str()).is_ok()
}

/// Word list used for the compound-break feature.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    words: HashSet<String>,
}

impl Lexicon {
    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        Self { words: words.into_iter().map(|w| w.as_ref().trim().to_lowercase()).filter(|w| !w.is_empty()).collect() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_words(text.lines()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_word_list_is_sorted() {
        assert!(FUNCTION_WORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(is_function_word("The"));
        assert!(!is_function_word("cat"));
    }

    #[test]
    fn syllables() {
        assert_eq!(syllable_boundaries("today"), vec![2]);
        assert_eq!(syllable_boundaries("winter"), vec![3]);
        assert_eq!(syllable_boundaries("cat"), Vec::<usize>::new());
        assert_eq!(syllable_count("cat"), 1);
        assert_eq!(syllable_count("banana"), 3);
        assert_eq!(syllable_count("rhythm"), 1);
        assert_eq!(syllable_count("yes"), 1);
    }

    #[test]
    fn lexicon_is_case_insensitive() {
        let lex = Lexicon::from_words(["Sun", "flower", ""]);
        assert_eq!(lex.len(), 2);
        assert!(lex.contains("sun") && lex.contains("FLOWER"));
    }
}
