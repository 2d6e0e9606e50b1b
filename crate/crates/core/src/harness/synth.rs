//! Seeded synthetic corpora with planted, learnable regularities.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_corpus, CorpusTag, Document, Sentence, SpanTag, Token};
use crate::error::{Error, Result};

/// Sentence openers, indexed by sentence position within a document.
pub const OPENERS: [&str; 5] = ["first", "next", "then", "later", "finally"];

/// Discourse relations and the connective that opens the second sentence.
pub const CONNECTIVES: [(&str, &str); 4] = [
    ("cause", "because"),
    ("contrast", "however"),
    ("elaboration", "specifically"),
    ("sequence", "afterwards"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub docs: usize,
    pub tag: CorpusTag,
    pub topics: usize,
    pub nouns_per_topic: usize,
    pub entities_per_topic: usize,
    pub filler_words: usize,
    pub phrases: usize,
    /// Inclusive range of sentences per document.
    pub sentences: [usize; 2],
    /// Inclusive range of body words per sentence (opener and entity excluded).
    pub sentence_words: [usize; 2],
    /// Probability that a body word is one of the document topic's nouns.
    pub topical_density: f64,
    /// Probability that a sentence mentions a topic entity.
    pub entity_rate: f64,
    /// Probability that a sentence contains a fixed two-word phrase.
    pub phrase_rate: f64,
    pub openers: bool,
    pub punctuation: bool,
    pub ir_pairs: usize,
    pub discourse_pairs: usize,
    pub finetune_train: usize,
    pub finetune_test: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            docs: 400,
            tag: CorpusTag::Encyclopedia,
            topics: 8,
            nouns_per_topic: 8,
            entities_per_topic: 3,
            filler_words: 300,
            phrases: 20,
            sentences: [3, 5],
            sentence_words: [4, 7],
            topical_density: 0.4,
            entity_rate: 0.6,
            phrase_rate: 0.3,
            openers: true,
            punctuation: true,
            ir_pairs: 600,
            discourse_pairs: 600,
            finetune_train: 300,
            finetune_test: 200,
        }
    }
}

impl SynthSpec {
    /// All planted signals switched off.
    pub fn without_signals(mut self) -> Self {
        self.topical_density = 0.0;
        self.entity_rate = 0.0;
        self.phrase_rate = 0.0;
        self.openers = false;
        self.punctuation = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSynthSpec(m.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.topical_density) || !prob(self.entity_rate) || !prob(self.phrase_rate) {
            return bad("densities and rates must lie in [0, 1]");
        }
        if self.sentences[0] == 0 || self.sentences[0] > self.sentences[1] {
            return bad("sentence range must be 1 <= min <= max");
        }
        if self.sentence_words[0] == 0 || self.sentence_words[0] > self.sentence_words[1] {
            return bad("sentence word range must be 1 <= min <= max");
        }
        if self.topics < 2 || self.nouns_per_topic == 0 || self.entities_per_topic == 0 {
            return bad("need at least 2 topics with nouns and entities");
        }
        if self.filler_words < 10 || self.phrases == 0 {
            return bad("need at least 10 filler words and one phrase");
        }
        if !matches!(
            self.tag,
            CorpusTag::Encyclopedia | CorpusTag::Books | CorpusTag::News | CorpusTag::Dialog
        ) {
            return bad("documents must use a free-text corpus tag");
        }
        Ok(())
    }
}

/// Paths written by [`gen_synthetic_corpus`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthFiles {
    pub corpus: PathBuf,
    pub ir_pairs: PathBuf,
    pub discourse_pairs: PathBuf,
    pub finetune_train: PathBuf,
    pub finetune_test: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path, tag: CorpusTag) -> Self {
        SynthFiles {
            corpus: dir.join(format!("{tag}.jsonl")),
            ir_pairs: dir.join("ir_pairs.tsv"),
            discourse_pairs: dir.join("discourse_pairs.tsv"),
            finetune_train: dir.join("finetune_train.tsv"),
            finetune_test: dir.join("finetune_test.tsv"),
        }
    }
}

struct Lexicon {
    filler: Vec<String>,
    nouns: Vec<Vec<String>>,
    entities: Vec<Vec<[String; 2]>>,
    phrases: Vec<[String; 2]>,
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl Lexicon {
    fn new(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Self {
        let reserved: Vec<&str> = OPENERS.iter().copied().chain(CONNECTIVES.iter().map(|c| c.1)).collect();
        let mut seen = std::collections::HashSet::new();
        let mut word = |rng: &mut ChaCha8Rng| loop {
            let syl = rng.gen_range(2..=3);
            let w: String = (0..syl)
                .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), NUCLEI.choose(rng).unwrap()))
                .collect();
            if !reserved.contains(&w.as_str()) && seen.insert(w.clone()) {
                return w;
            }
        };
        let filler = (0..spec.filler_words).map(|_| word(rng)).collect();
        let nouns = (0..spec.topics)
            .map(|_| (0..spec.nouns_per_topic).map(|_| word(rng)).collect())
            .collect();
        let entities = (0..spec.topics)
            .map(|_| {
                (0..spec.entities_per_topic)
                    .map(|_| [capitalize(&word(rng)), capitalize(&word(rng))])
                    .collect()
            })
            .collect();
        let phrases = (0..spec.phrases).map(|_| [word(rng), word(rng)]).collect();
        Lexicon {
            filler,
            nouns,
            entities,
            phrases,
        }
    }

    fn body_word(&self, spec: &SynthSpec, topic: usize, rng: &mut ChaCha8Rng) -> String {
        if rng.gen::<f64>() < spec.topical_density {
            self.nouns[topic].choose(rng).unwrap().clone()
        } else {
            self.filler.choose(rng).unwrap().clone()
        }
    }
}

fn plain(w: &str) -> Token {
    Token::new(w, false)
}

/// Sentence `position` of a document about `topic`.
fn sentence(
    spec: &SynthSpec,
    lex: &Lexicon,
    topic: usize,
    position: usize,
    span_base: &mut u32,
    rng: &mut ChaCha8Rng,
) -> Sentence {
    let n = rng.gen_range(spec.sentence_words[0]..=spec.sentence_words[1]);
    let mut tokens: Vec<Token> = (0..n).map(|_| plain(&lex.body_word(spec, topic, rng))).collect();
    if rng.gen::<f64>() < spec.phrase_rate {
        let p = lex.phrases.choose(rng).unwrap();
        let at = rng.gen_range(0..=tokens.len());
        let tag = SpanTag::Phrase(*span_base);
        *span_base += 1;
        for (k, w) in p.iter().enumerate() {
            let mut t = plain(w);
            t.span = tag;
            tokens.insert(at + k, t);
        }
    }
    if rng.gen::<f64>() < spec.entity_rate {
        let e = lex.entities[topic].choose(rng).unwrap();
        // Entities never split a phrase.
        let slots: Vec<usize> = (0..=tokens.len())
            .filter(|&i| {
                i == 0
                    || i == tokens.len()
                    || tokens[i - 1].span == SpanTag::None
                    || tokens[i].span != tokens[i - 1].span
            })
            .collect();
        let at = *slots.choose(rng).unwrap();
        let tag = SpanTag::Entity(*span_base);
        *span_base += 1;
        for (k, w) in e.iter().enumerate() {
            let mut t = Token::new(w.clone(), true);
            t.span = tag;
            tokens.insert(at + k, t);
        }
    }
    if spec.openers {
        tokens.insert(0, plain(OPENERS[position.min(OPENERS.len() - 1)]));
    }
    if let Some(first) = tokens.first_mut() {
        if !first.was_capitalized {
            first.surface = capitalize(&first.surface);
            first.was_capitalized = true;
        }
    }
    if spec.punctuation {
        tokens.push(plain("."));
    }
    Sentence { tokens }
}

/// Numbers entity spans first, then phrases, each in reading order, as the
/// corpus reader does.
fn canonical_spans(doc: &mut Document) {
    let mut entities = std::collections::HashMap::new();
    let mut phrases = std::collections::HashMap::new();
    for t in doc.tokens() {
        match t.span {
            SpanTag::Entity(k) => {
                let n = entities.len() as u32;
                entities.entry(k).or_insert(n);
            }
            SpanTag::Phrase(k) => {
                let n = phrases.len() as u32;
                phrases.entry(k).or_insert(n);
            }
            SpanTag::None => {}
        }
    }
    let offset = entities.len() as u32;
    for s in &mut doc.sentences {
        for t in &mut s.tokens {
            t.span = match t.span {
                SpanTag::Entity(k) => SpanTag::Entity(entities[&k]),
                SpanTag::Phrase(k) => SpanTag::Phrase(offset + phrases[&k]),
                SpanTag::None => SpanTag::None,
            };
        }
    }
}

fn text(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ")
}

fn topic_sentence(spec: &SynthSpec, lex: &Lexicon, topic: usize, rng: &mut ChaCha8Rng) -> Vec<Token> {
    let mut base = 0;
    let mut s = spec.clone();
    s.openers = false;
    sentence(&s, lex, topic, 0, &mut base, rng).tokens
}

/// Documents plus pair and fine-tuning rows, all from one seed.
pub struct SynthCorpus {
    pub documents: Vec<Document>,
    /// `(query, title, label)`
    pub ir_rows: Vec<(String, String, u32)>,
    /// `(first, second, relation)`
    pub discourse_rows: Vec<(String, String, String)>,
    /// `(text, label)`
    pub finetune_train: Vec<(String, u32)>,
    pub finetune_test: Vec<(String, u32)>,
}

pub fn synthesize(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = Lexicon::new(spec, &mut rng);

    let documents = (0..spec.docs)
        .map(|d| {
            let topic = rng.gen_range(0..spec.topics);
            let n = rng.gen_range(spec.sentences[0]..=spec.sentences[1]);
            let mut span_base = 0;
            let sentences = (0..n)
                .map(|i| sentence(spec, &lex, topic, i, &mut span_base, &mut rng))
                .collect();
            let mut doc = Document {
                id: format!("doc-{d:05}"),
                source: spec.tag,
                sentences,
            };
            canonical_spans(&mut doc);
            doc
        })
        .collect();

    let mut ir_rows = Vec::with_capacity(spec.ir_pairs);
    for _ in 0..spec.ir_pairs {
        let topic = rng.gen_range(0..spec.topics);
        let mut q: Vec<String> = lex.nouns[topic].choose_multiple(&mut rng, 2).cloned().collect();
        let label = rng.gen_range(0..3u32);
        let title_topic = if label == 2 {
            (topic + rng.gen_range(1..spec.topics)) % spec.topics
        } else {
            topic
        };
        let e = lex.entities[title_topic].choose(&mut rng).unwrap();
        let mut title = vec![e[0].clone(), e[1].clone()];
        let pool: Vec<&String> = lex.nouns[title_topic]
            .iter()
            .filter(|w| label != 1 || !q.contains(w))
            .collect();
        if label == 0 {
            title.push(q[0].clone());
        }
        if let Some(w) = pool.choose(&mut rng) {
            title.push((*w).clone());
        }
        title.push(lex.filler.choose(&mut rng).unwrap().clone());
        q.push(lex.filler.choose(&mut rng).unwrap().clone());
        ir_rows.push((q.join(" "), title.join(" "), label));
    }

    let mut discourse_rows = Vec::with_capacity(spec.discourse_pairs);
    for _ in 0..spec.discourse_pairs {
        let topic = rng.gen_range(0..spec.topics);
        let (relation, connective) = *CONNECTIVES.choose(&mut rng).unwrap();
        let a = topic_sentence(spec, &lex, topic, &mut rng);
        let mut b = topic_sentence(spec, &lex, topic, &mut rng);
        if let Some(first) = b.first_mut() {
            if first.span == SpanTag::None {
                first.surface = first.surface.to_lowercase();
            }
        }
        b.insert(0, Token::new(capitalize(connective), true));
        discourse_rows.push((text(&a), text(&b), relation.to_string()));
    }

    // Fine-tuning: which half of the topics a sentence is drawn from.
    let finetune = |n: usize, rng: &mut ChaCha8Rng| -> Vec<(String, u32)> {
        (0..n)
            .map(|_| {
                let topic = rng.gen_range(0..spec.topics);
                let label = (topic >= spec.topics / 2) as u32;
                let mut s = spec.clone();
                s.topical_density = s.topical_density.max(0.3);
                (text(&topic_sentence(&s, &lex, topic, rng)), label)
            })
            .collect()
    };
    let finetune_train = finetune(spec.finetune_train, &mut rng);
    let finetune_test = finetune(spec.finetune_test, &mut rng);

    Ok(SynthCorpus {
        documents,
        ir_rows,
        discourse_rows,
        finetune_train,
        finetune_test,
    })
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes the corpus, pair files and fine-tuning split into `dir`.
pub fn gen_synthetic_corpus(spec: &SynthSpec, seed: u64, dir: impl AsRef<Path>) -> Result<SynthFiles> {
    let dir = dir.as_ref();
    let corpus = synthesize(spec, seed)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SynthFiles::in_dir(dir, spec.tag);
    write_corpus(&files.corpus, &corpus.documents)?;
    write_lines(
        &files.ir_pairs,
        corpus.ir_rows.iter().map(|(q, t, l)| format!("{q}\t{t}\t{l}")),
    )?;
    write_lines(
        &files.discourse_pairs,
        corpus.discourse_rows.iter().map(|(a, b, r)| format!("{a}\t{b}\t{r}")),
    )?;
    write_lines(
        &files.finetune_train,
        corpus.finetune_train.iter().map(|(t, l)| format!("{t}\t{l}")),
    )?;
    write_lines(
        &files.finetune_test,
        corpus.finetune_test.iter().map(|(t, l)| format!("{t}\t{l}")),
    )?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, load_discourse_pairs, load_ir_pairs};

    fn small() -> SynthSpec {
        SynthSpec {
            docs: 30,
            ir_pairs: 20,
            discourse_pairs: 20,
            finetune_train: 10,
            finetune_test: 10,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn files_load_and_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = gen_synthetic_corpus(&small(), 5, a.path()).unwrap();
        let fb = gen_synthetic_corpus(&small(), 5, b.path()).unwrap();
        for (x, y) in [
            (&fa.corpus, &fb.corpus),
            (&fa.ir_pairs, &fb.ir_pairs),
            (&fa.discourse_pairs, &fb.discourse_pairs),
            (&fa.finetune_train, &fb.finetune_train),
        ] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let docs = load_corpus(&fa.corpus).unwrap();
        assert_eq!(docs.len(), 30);
        assert_eq!(docs, synthesize(&small(), 5).unwrap().documents);
        assert_eq!(load_ir_pairs(&fa.ir_pairs).unwrap().len(), 20);
        assert_eq!(load_discourse_pairs(&fa.discourse_pairs).unwrap().len(), 20);
    }

    #[test]
    fn zero_docs_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { docs: 0, ..small() };
        let files = gen_synthetic_corpus(&spec, 1, dir.path()).unwrap();
        assert!(load_corpus(&files.corpus).unwrap().is_empty());
    }

    #[test]
    fn bad_spec_is_rejected() {
        let spec = SynthSpec {
            topical_density: 1.5,
            ..small()
        };
        assert!(matches!(synthesize(&spec, 0), Err(Error::InvalidSynthSpec(_))));
    }

    #[test]
    fn casing_flags_match_surface() {
        for d in synthesize(&small(), 2).unwrap().documents {
            for t in d.tokens() {
                assert_eq!(t.was_capitalized, t.surface.chars().next().unwrap().is_uppercase());
            }
        }
    }
}
