use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusTag {
    Encyclopedia,
    Books,
    News,
    Dialog,
    IrRelevance,
    Discourse,
}

impl CorpusTag {
    pub const ALL: [CorpusTag; 6] = [
        CorpusTag::Encyclopedia,
        CorpusTag::Books,
        CorpusTag::News,
        CorpusTag::Dialog,
        CorpusTag::IrRelevance,
        CorpusTag::Discourse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorpusTag::Encyclopedia => "encyclopedia",
            CorpusTag::Books => "books",
            CorpusTag::News => "news",
            CorpusTag::Dialog => "dialog",
            CorpusTag::IrRelevance => "ir_relevance",
            CorpusTag::Discourse => "discourse",
        }
    }
}

impl fmt::Display for CorpusTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorpusTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownCorpusTag(s.to_string()))
    }
}

/// Membership of a token in an annotated span; `k` indexes the span within
/// its document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SpanTag {
    #[default]
    None,
    Entity(u32),
    Phrase(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Surface form with original casing.
    pub surface: String,
    pub vocab_id: u32,
    pub was_capitalized: bool,
    pub span: SpanTag,
}

impl Token {
    pub fn new(surface: impl Into<String>, was_capitalized: bool) -> Self {
        Token {
            surface: surface.into(),
            vocab_id: 0,
            was_capitalized,
            span: SpanTag::None,
        }
    }

    /// Vocabulary key: the lowercased surface.
    pub fn key(&self) -> String {
        self.surface.to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub source: CorpusTag,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    /// Builds a document from raw sentences, recording casing per token.
    pub fn from_text(id: &str, source: CorpusTag, sentences: &[&str]) -> Result<Self> {
        let doc = Document {
            id: id.to_string(),
            source,
            sentences: sentences.iter().map(|s| Sentence { tokens: tokenize(s) }).collect(),
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::InvalidDocument {
            id: self.id.clone(),
            message,
        };
        if self.sentences.is_empty() {
            return Err(bad("document has no sentences".into()));
        }
        let mut seen = HashSet::new();
        for (si, s) in self.sentences.iter().enumerate() {
            if s.tokens.is_empty() {
                return Err(bad(format!("sentence {si} is empty")));
            }
            let mut prev = SpanTag::None;
            for t in &s.tokens {
                if t.span != SpanTag::None && t.span != prev && !seen.insert(t.span) {
                    return Err(bad(format!("span {:?} is not contiguous", t.span)));
                }
                prev = t.span;
            }
        }
        Ok(())
    }

    fn to_record(&self) -> DocumentRecord {
        let mut entity_spans = Vec::new();
        let mut phrase_spans = Vec::new();
        for (si, s) in self.sentences.iter().enumerate() {
            let mut i = 0;
            while i < s.tokens.len() {
                let tag = s.tokens[i].span;
                let mut j = i + 1;
                while tag != SpanTag::None && j < s.tokens.len() && s.tokens[j].span == tag {
                    j += 1;
                }
                match tag {
                    SpanTag::Entity(_) => entity_spans.push([si, i, j]),
                    SpanTag::Phrase(_) => phrase_spans.push([si, i, j]),
                    SpanTag::None => {}
                }
                i = j;
            }
        }
        DocumentRecord {
            id: self.id.clone(),
            corpus: self.source.as_str().to_string(),
            sentences: self
                .sentences
                .iter()
                .map(|s| {
                    s.tokens
                        .iter()
                        .map(|t| TokenRecord::Flagged(t.surface.clone(), t.was_capitalized))
                        .collect()
                })
                .collect(),
            entity_spans,
            phrase_spans,
        }
    }
}

/// Whitespace split, then every ASCII punctuation character becomes its own
/// token. Casing is recorded from the first character.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if ch.is_ascii_punctuation() {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(ch.to_string());
            } else {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out.into_iter()
        .map(|w| {
            let cap = w.chars().next().is_some_and(char::is_uppercase);
            Token::new(w, cap)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum TokenRecord {
    Flagged(String, bool),
    Bare(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRecord {
    id: String,
    corpus: String,
    sentences: Vec<Vec<TokenRecord>>,
    #[serde(default)]
    entity_spans: Vec<[usize; 3]>,
    #[serde(default)]
    phrase_spans: Vec<[usize; 3]>,
}

fn parse_record(rec: DocumentRecord) -> Result<Document> {
    let source: CorpusTag = rec.corpus.parse()?;
    let mut sentences: Vec<Sentence> = rec
        .sentences
        .into_iter()
        .map(|s| Sentence {
            tokens: s
                .into_iter()
                .map(|t| match t {
                    TokenRecord::Flagged(w, cap) => Token::new(w, cap),
                    TokenRecord::Bare(w) => {
                        let cap = w.chars().next().is_some_and(char::is_uppercase);
                        Token::new(w, cap)
                    }
                })
                .collect(),
        })
        .collect();
    let bad = |message: String| Error::InvalidDocument {
        id: rec.id.clone(),
        message,
    };
    let spans = rec
        .entity_spans
        .iter()
        .map(|s| (s, true))
        .chain(rec.phrase_spans.iter().map(|s| (s, false)));
    for (k, (&[si, start, end], is_entity)) in spans.enumerate() {
        let sentence = sentences
            .get_mut(si)
            .ok_or_else(|| bad(format!("span refers to missing sentence {si}")))?;
        if start >= end || end > sentence.tokens.len() {
            return Err(bad(format!("span [{si}, {start}, {end}) out of bounds")));
        }
        for t in &mut sentence.tokens[start..end] {
            if t.span != SpanTag::None {
                return Err(bad(format!("span [{si}, {start}, {end}) overlaps another")));
            }
            t.span = if is_entity {
                SpanTag::Entity(k as u32)
            } else {
                SpanTag::Phrase(k as u32)
            };
        }
    }
    let doc = Document {
        id: rec.id,
        source,
        sentences,
    };
    doc.validate()?;
    Ok(doc)
}

/// Reads one JSON document record per line. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: DocumentRecord = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        let doc = parse_record(rec).map_err(|e| match e {
            Error::UnknownCorpusTag(_) => e,
            other => at(other.to_string()),
        })?;
        if !ids.insert(doc.id.clone()) {
            return Err(Error::DuplicateDocument(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for d in docs {
        serde_json::to_writer(&mut out, &d.to_record())?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
