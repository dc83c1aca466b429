use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Fractions of the text assigned to train, valid and test, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

/// A character-level corpus with contiguous splits. Ids `0..charset.len()`
/// follow `charset`; id `charset.len()` is reserved for characters that do
/// not occur in the training split.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub charset: Vec<char>,
    index: HashMap<char, usize>,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Corpus {
    pub fn from_text(text: &str, fractions: SplitFractions) -> Result<Self, HarnessError> {
        let SplitFractions { train, valid, test } = fractions;
        if [train, valid, test].iter().any(|f| !(0.0..=1.0).contains(f)) || ((train + valid + test) - 1.0).abs() > 1e-9 {
            return Err(HarnessError::BadFractions(fractions));
        }
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return Err(HarnessError::EmptyCorpus);
        }
        let n = chars.len();
        let n_train = ((n as f64) * train).floor() as usize;
        let n_valid = (((n as f64) * valid).floor() as usize).min(n - n_train);
        let (train_chars, rest) = chars.split_at(n_train);
        let (valid_chars, test_chars) = rest.split_at(n_valid);

        let mut charset: Vec<char> = train_chars.to_vec();
        charset.sort_unstable();
        charset.dedup();
        let index: HashMap<char, usize> = charset.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut corpus = Self {
            charset,
            index,
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
        };
        corpus.train = corpus.encode(train_chars.iter().copied());
        corpus.valid = corpus.encode(valid_chars.iter().copied());
        corpus.test = corpus.encode(test_chars.iter().copied());
        Ok(corpus)
    }

    pub fn unknown_id(&self) -> usize {
        self.charset.len()
    }

    /// Output vocabulary size, including the unknown id.
    pub fn vocab(&self) -> usize {
        self.charset.len() + 1
    }

    pub fn encode(&self, chars: impl IntoIterator<Item = char>) -> Vec<usize> {
        chars
            .into_iter()
            .map(|c| self.index.get(&c).copied().unwrap_or(self.unknown_id()))
            .collect()
    }

    /// Unknown ids decode to U+FFFD.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.charset.get(i).copied().unwrap_or(char::REPLACEMENT_CHARACTER))
            .collect()
    }
}

pub fn load_corpus(path: &Path, fractions: SplitFractions) -> Result<Corpus, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Corpus::from_text(&text, fractions)
}

/// The bundled public-domain text (Cicero, *De finibus*, book I).
pub const BUNDLED_TEXT: &str = include_str!("../../data/de_finibus_book1.txt");

pub fn bundled_corpus() -> Corpus {
    Corpus::from_text(BUNDLED_TEXT, SplitFractions::default()).expect("bundled text is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fr(train: f64, valid: f64, test: f64) -> SplitFractions {
        SplitFractions { train, valid, test }
    }

    #[test]
    fn abab() {
        let c = Corpus::from_text("abab", fr(0.5, 0.25, 0.25)).unwrap();
        assert_eq!(c.charset, vec!['a', 'b']);
        assert_eq!(c.decode(&c.train), "ab");
        assert_eq!(c.decode(&c.valid), "a");
        assert_eq!(c.decode(&c.test), "b");
    }

    #[test]
    fn unseen_characters_map_to_unknown() {
        let c = Corpus::from_text("aaaaaaaaxy", fr(0.8, 0.1, 0.1)).unwrap();
        assert_eq!(c.charset, vec!['a']);
        assert_eq!(c.valid, vec![c.unknown_id()]);
        assert_eq!(c.test, vec![1]);
        assert_eq!(c.vocab(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Corpus::from_text("", fr(0.8, 0.1, 0.1)), Err(HarnessError::EmptyCorpus)));
        assert!(matches!(Corpus::from_text("ab", fr(0.8, 0.3, 0.1)), Err(HarnessError::BadFractions(_))));
        assert!(matches!(Corpus::from_text("ab", fr(1.2, -0.1, -0.1)), Err(HarnessError::BadFractions(_))));
    }

    #[test]
    fn bundled_charset_size() {
        let c = bundled_corpus();
        assert!((40..=90).contains(&c.charset.len()), "{}", c.charset.len());
        let total = c.train.len() + c.valid.len() + c.test.len();
        assert_eq!(total, BUNDLED_TEXT.chars().count());
    }
}
