//! Constructors turning documents and pair records into labeled
//! [`TaskInstance`]s, one per pre-training task.
//!
//! Every generator is a pure function of its inputs and the RNG it is handed;
//! [`instance_rng`] derives that RNG from `(seed, document id, task, pass)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pairs::{DiscourseRecord, IrRecord, RelationVocab};
use super::vocab::{Vocab, FIRST_WORD_ID, MASK};
use super::{Document, ReorderingLabelSpace, SpanTag, TaskInstance, TaskKind, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overflow {
    /// Keep the leading sentences that fit.
    Truncate,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub max_seq_len: usize,
    /// Fraction of real tokens selected for knowledge masking.
    pub mask_ratio: f64,
    /// Of the selected positions: share replaced by `[MASK]`...
    pub mask_token_prob: f64,
    /// ...and share replaced by a random word; the rest stay unchanged.
    pub random_token_prob: f64,
    pub overflow: Overflow,
    pub reorder_max_segments: usize,
    /// Sampling weights of sentence-distance classes 0, 1, 2.
    pub distance_class_weights: [f64; 3],
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_seq_len: 64,
            mask_ratio: 0.15,
            mask_token_prob: 0.8,
            random_token_prob: 0.1,
            overflow: Overflow::Truncate,
            reorder_max_segments: 3,
            distance_class_weights: [1.0, 1.0, 1.0],
        }
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with any number of 64-bit words.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ p))
}

/// RNG for one generated instance; independent across documents, tasks and
/// passes over the corpus.
pub fn instance_rng(seed: u64, doc_id: &str, task: TaskKind, pass: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[fnv1a(doc_id.as_bytes()), task.id() as u64, pass]))
}

/// Sentences that fit in `budget` tokens.
fn fit_sentences(doc: &Document, budget: usize, overflow: Overflow) -> Result<Vec<&[Token]>> {
    let total = doc.token_count();
    if total <= budget {
        return Ok(doc.sentences.iter().map(|s| s.tokens.as_slice()).collect());
    }
    if overflow == Overflow::Reject {
        return Err(Error::DocumentTooLong {
            id: doc.id.clone(),
            len: total,
            max: budget,
        });
    }
    let mut out = Vec::new();
    let mut used = 0;
    for s in &doc.sentences {
        if used + s.tokens.len() > budget {
            break;
        }
        used += s.tokens.len();
        out.push(s.tokens.as_slice());
    }
    if out.is_empty() {
        // First sentence alone is too long: cut it, but never through a span.
        let toks = &doc.sentences[0].tokens;
        let mut cut = budget.min(toks.len());
        while cut > 0 && cut < toks.len() && toks[cut].span != SpanTag::None && toks[cut].span == toks[cut - 1].span {
            cut -= 1;
        }
        if cut == 0 {
            return Err(Error::DocumentTooLong {
                id: doc.id.clone(),
                len: total,
                max: budget,
            });
        }
        out.push(&toks[..cut]);
    }
    Ok(out)
}

fn single_segment(task: TaskKind, tokens: &[&Token]) -> TaskInstance {
    let ids: Vec<u32> = tokens.iter().map(|t| t.vocab_id).collect();
    TaskInstance::from_segments(task.id(), &[&ids])
}

fn set_token_labels(inst: &mut TaskInstance, labels: Vec<Option<u32>>) {
    inst.loss_mask = labels.iter().map(Option::is_some).collect();
    inst.token_labels.insert(inst.task_id, labels);
}

/// Selectable unit: a whole entity, a whole phrase, or one free word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum UnitKind {
    Entity,
    Phrase,
    Word,
}

/// Masks about `mask_ratio` of the tokens, selecting whole entity spans
/// first, then whole phrases, then single words, as the budget allows.
pub fn make_knowledge_masking<R: Rng>(
    doc: &Document,
    vocab_size: usize,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<TaskInstance> {
    let sentences = fit_sentences(doc, config.max_seq_len.saturating_sub(2), config.overflow)?;
    let tokens: Vec<&Token> = sentences.iter().flat_map(|s| s.iter()).collect();
    let mut inst = single_segment(TaskKind::KnowledgeMasking, &tokens);

    // Units as (kind, start, len) over `tokens`, never crossing sentences.
    let mut units = Vec::new();
    let mut base = 0;
    for s in &sentences {
        let mut i = 0;
        while i < s.len() {
            let tag = s[i].span;
            let mut j = i + 1;
            if tag != SpanTag::None {
                while j < s.len() && s[j].span == tag {
                    j += 1;
                }
            }
            let kind = match tag {
                SpanTag::Entity(_) => UnitKind::Entity,
                SpanTag::Phrase(_) => UnitKind::Phrase,
                SpanTag::None => UnitKind::Word,
            };
            units.push((kind, base + i, j - i));
            i = j;
        }
        base += s.len();
    }

    let exact = config.mask_ratio * tokens.len() as f64;
    let mut budget = exact.floor() as usize;
    if rng.gen::<f64>() < exact - exact.floor() {
        budget += 1;
    }

    let mut selected = vec![false; tokens.len()];
    let mut used = 0;
    for kind in [UnitKind::Entity, UnitKind::Phrase, UnitKind::Word] {
        let mut pool: Vec<_> = units.iter().filter(|u| u.0 == kind).copied().collect();
        pool.shuffle(rng);
        for (_, start, len) in pool {
            if used + len <= budget {
                selected[start..start + len].iter_mut().for_each(|s| *s = true);
                used += len;
            }
        }
    }

    let mut labels = vec![None; inst.len()];
    for (k, tok) in tokens.iter().enumerate() {
        if !selected[k] {
            continue;
        }
        let pos = k + 1;
        labels[pos] = Some(tok.vocab_id);
        let r: f64 = rng.gen();
        if r < config.mask_token_prob {
            inst.token_ids[pos] = MASK;
        } else if r < config.mask_token_prob + config.random_token_prob && vocab_size > FIRST_WORD_ID as usize {
            inst.token_ids[pos] = rng.gen_range(FIRST_WORD_ID..vocab_size as u32);
        }
    }
    set_token_labels(&mut inst, labels);
    Ok(inst)
}

/// Binary label per real token: was it capitalized in the source text.
pub fn make_capitalization(doc: &Document, config: &GeneratorConfig) -> Result<TaskInstance> {
    let sentences = fit_sentences(doc, config.max_seq_len.saturating_sub(2), config.overflow)?;
    let tokens: Vec<&Token> = sentences.iter().flat_map(|s| s.iter()).collect();
    let mut inst = single_segment(TaskKind::Capitalization, &tokens);
    let mut labels = vec![None; inst.len()];
    for (k, t) in tokens.iter().enumerate() {
        labels[k + 1] = Some(t.was_capitalized as u32);
    }
    set_token_labels(&mut inst, labels);
    Ok(inst)
}

/// Labels each token of sentence `segment_index` with whether its word also
/// occurs in another sentence of the document.
pub fn make_token_document_relation(
    doc: &Document,
    segment_index: usize,
    config: &GeneratorConfig,
) -> Result<TaskInstance> {
    if doc.sentences.len() < 2 {
        return Err(Error::SingleSegment(doc.id.clone()));
    }
    let segment = doc.sentences.get(segment_index).ok_or_else(|| Error::InvalidDocument {
        id: doc.id.clone(),
        message: format!("no segment {segment_index}"),
    })?;
    let budget = config.max_seq_len.saturating_sub(2);
    let mut tokens: Vec<&Token> = segment.tokens.iter().collect();
    if tokens.len() > budget {
        if config.overflow == Overflow::Reject {
            return Err(Error::DocumentTooLong {
                id: doc.id.clone(),
                len: tokens.len(),
                max: budget,
            });
        }
        tokens.truncate(budget);
    }
    let elsewhere: std::collections::HashSet<u32> = doc
        .sentences
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != segment_index)
        .flat_map(|(_, s)| s.tokens.iter().map(|t| t.vocab_id))
        .collect();
    let mut inst = single_segment(TaskKind::TokenDocumentRelation, &tokens);
    let mut labels = vec![None; inst.len()];
    for (k, t) in tokens.iter().enumerate() {
        labels[k + 1] = Some(elsewhere.contains(&t.vocab_id) as u32);
    }
    set_token_labels(&mut inst, labels);
    Ok(inst)
}

/// Splits the document into `n` contiguous segments (`n` uniform in
/// `1..=min(m, sentences)`), shuffles them and labels the arrangement.
pub fn make_sentence_reordering<R: Rng>(
    doc: &Document,
    space: &ReorderingLabelSpace,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<TaskInstance> {
    let m = space.max_segments();
    let budget = config.max_seq_len.saturating_sub(1 + m.min(doc.sentences.len()));
    let sentences = fit_sentences(doc, budget, config.overflow)?;
    let count = sentences.len();
    let n = rng.gen_range(1..=m.min(count));

    let mut cuts: Vec<usize> = (1..count).collect::<Vec<_>>();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(n - 1).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(count);
    let segments: Vec<Vec<u32>> = bounds
        .windows(2)
        .map(|w| {
            sentences[w[0]..w[1]]
                .iter()
                .flat_map(|s| s.iter().map(|t| t.vocab_id))
                .collect()
        })
        .collect();

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let shown: Vec<&[u32]> = perm.iter().map(|&p| segments[p].as_slice()).collect();
    let mut inst = TaskInstance::from_segments(TaskKind::SentenceReordering.id(), &shown);
    inst.sentence_label = Some(space.label(&perm)?);
    Ok(inst)
}

fn truncate_pair(a: &mut Vec<u32>, b: &mut Vec<u32>, max_seq_len: usize) {
    let budget = max_seq_len.saturating_sub(3);
    while a.len() + b.len() > budget {
        if a.len() >= b.len() {
            a.pop();
        } else {
            b.pop();
        }
    }
}

/// `[CLS] a [SEP] b [SEP]` with a sentence label, longest-first truncation.
pub fn make_pair_instance(
    task: TaskKind,
    first: &[u32],
    second: &[u32],
    label: u32,
    max_seq_len: usize,
) -> Result<TaskInstance> {
    let (mut a, mut b) = (first.to_vec(), second.to_vec());
    truncate_pair(&mut a, &mut b, max_seq_len);
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInstance(format!(
            "pair does not fit max_seq_len {max_seq_len}"
        )));
    }
    let mut inst = TaskInstance::from_segments(task.id(), &[&a, &b]);
    inst.sentence_label = Some(label);
    Ok(inst)
}

fn sentence_ids(doc: &Document, i: usize) -> Vec<u32> {
    doc.sentences[i].tokens.iter().map(|t| t.vocab_id).collect()
}

/// Sentence pair labelled 0 (adjacent, same document), 1 (same document, not
/// adjacent) or 2 (different documents); the class is drawn from
/// `distance_class_weights`.
pub fn make_sentence_distance<R: Rng>(
    corpus: &[Document],
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<TaskInstance> {
    let w = config.distance_class_weights;
    let total: f64 = w.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    let mut class = 2;
    for (c, &wc) in w.iter().enumerate() {
        if r < wc {
            class = c as u32;
            break;
        }
        r -= wc;
    }
    make_sentence_distance_class(corpus, class, config, rng)
}

pub fn make_sentence_distance_class<R: Rng>(
    corpus: &[Document],
    class: u32,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<TaskInstance> {
    let (a, b) = match class {
        0 | 1 => {
            let need = if class == 0 { 2 } else { 3 };
            let docs: Vec<&Document> = corpus.iter().filter(|d| d.sentences.len() >= need).collect();
            let doc = *docs.choose(rng).ok_or(Error::ClassUnavailable(class))?;
            let n = doc.sentences.len();
            let (i, j) = if class == 0 {
                let i = rng.gen_range(0..n - 1);
                (i, i + 1)
            } else {
                let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 2..n).map(move |j| (i, j))).collect();
                *pairs.choose(rng).unwrap()
            };
            (sentence_ids(doc, i), sentence_ids(doc, j))
        }
        2 => {
            if corpus.len() < 2 {
                return Err(Error::ClassUnavailable(2));
            }
            let i = rng.gen_range(0..corpus.len());
            let mut j = rng.gen_range(0..corpus.len() - 1);
            if j >= i {
                j += 1;
            }
            let (da, db) = (&corpus[i], &corpus[j]);
            let sa = rng.gen_range(0..da.sentences.len());
            let sb = rng.gen_range(0..db.sentences.len());
            (sentence_ids(da, sa), sentence_ids(db, sb))
        }
        other => return Err(Error::ClassUnavailable(other)),
    };
    make_pair_instance(TaskKind::SentenceDistance, &a, &b, class, config.max_seq_len)
}

pub fn make_discourse_relation(
    record: &DiscourseRecord,
    relations: &RelationVocab,
    vocab: &Vocab,
    config: &GeneratorConfig,
) -> Result<TaskInstance> {
    let label = relations.id(&record.relation)?;
    make_pair_instance(
        TaskKind::DiscourseRelation,
        &vocab.ids(&record.first),
        &vocab.ids(&record.second),
        label,
        config.max_seq_len,
    )
}

/// Query as the first segment, title as the second.
pub fn make_ir_relevance(query: &[u32], title: &[u32], label: i64, config: &GeneratorConfig) -> Result<TaskInstance> {
    if !(0..=2).contains(&label) {
        return Err(Error::InvalidRelevanceLabel(label));
    }
    make_pair_instance(TaskKind::IrRelevance, query, title, label as u32, config.max_seq_len)
}

pub fn make_ir_from_record(record: &IrRecord, vocab: &Vocab, config: &GeneratorConfig) -> Result<TaskInstance> {
    make_ir_relevance(
        &vocab.ids(&record.query),
        &vocab.ids(&record.title),
        record.label as i64,
        config,
    )
}
