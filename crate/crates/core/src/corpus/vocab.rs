use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{Document, Token};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;
pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"];
/// First id available to ordinary words.
pub const FIRST_WORD_ID: u32 = SPECIAL_TOKENS.len() as u32;

/// Lowercased word vocabulary. Ids `0..5` are the special tokens; the rest
/// follow descending frequency with ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < SPECIAL_TOKENS.len() || words.iter().zip(SPECIAL_TOKENS).any(|(w, s)| w != s) {
            return Err(Error::Config(
                "vocabulary must start with the five special tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry `{w}`")));
            }
        }
        Ok(Vocab { words, index })
    }

    /// Counts lowercased keys; words seen fewer than `min_count` times are
    /// left out and map to `[UNK]`.
    pub fn build<'a, I>(keys: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for k in keys {
            *counts.entry(k.to_lowercase()).or_default() += 1;
        }
        let mut entries: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count.max(1) && !SPECIAL_TOKENS.contains(&w.as_str()))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let words = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(entries.into_iter().map(|(w, _)| w))
            .collect();
        Vocab::from_words(words).expect("specials are prepended")
    }

    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a Document>, min_count: usize) -> Self {
        let keys: Vec<String> = docs.into_iter().flat_map(|d| d.tokens().map(Token::key)).collect();
        Vocab::build(keys.iter().map(String::as_str), min_count)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> u32 {
        match self.index.get(word) {
            Some(&i) => i,
            None => self.index.get(&word.to_lowercase()).copied().unwrap_or(UNK),
        }
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Fills in `vocab_id` on every token.
    pub fn annotate(&self, docs: &mut [Document]) {
        for d in docs {
            for s in &mut d.sentences {
                for t in &mut s.tokens {
                    t.vocab_id = self.id(&t.key());
                }
            }
        }
    }

    pub fn ids(&self, tokens: &[Token]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(&t.key())).collect()
    }

    /// One word per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.words.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::from_words(text.lines().map(str::to_string).collect())
    }
}
