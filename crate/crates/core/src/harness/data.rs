use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::generators::{fnv1a, make_ir_from_record, make_sentence_distance};
use crate::corpus::{
    applicable_tasks, instance_rng, load_corpus, load_discourse_pairs, load_ir_pairs, make_capitalization,
    make_discourse_relation, make_knowledge_masking, make_sentence_reordering, make_token_document_relation,
    write_instances, Document, InstanceFormat, RelationVocab, ReorderingLabelSpace, TaskInstance, TaskKind, Vocab,
};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::scheduler::DataStream;

use super::RunConfig;

/// Vocabulary plus per-task train and held-out instances.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocab,
    pub relations: RelationVocab,
    pub train: BTreeMap<u16, Vec<TaskInstance>>,
    pub heldout: BTreeMap<u16, Vec<TaskInstance>>,
    pub arities: BTreeMap<u16, usize>,
}

fn is_heldout(key: &str, percent: u64) -> bool {
    fnv1a(key.as_bytes()) % 100 < percent
}

pub fn task_arity(kind: TaskKind, vocab: &Vocab, relations: &RelationVocab, max_segments: usize) -> Result<usize> {
    Ok(match kind {
        TaskKind::KnowledgeMasking => vocab.len(),
        TaskKind::Capitalization | TaskKind::TokenDocumentRelation => 2,
        TaskKind::SentenceReordering => ReorderingLabelSpace::new(max_segments)?.class_count(),
        TaskKind::SentenceDistance | TaskKind::IrRelevance => 3,
        TaskKind::DiscourseRelation => relations.len().max(1),
    })
}

fn doc_instances(kind: TaskKind, docs: &[&Document], vocab: &Vocab, config: &RunConfig) -> Result<Vec<TaskInstance>> {
    let g = &config.generator;
    let seed = config.seed;
    let mut out = Vec::new();
    match kind {
        TaskKind::KnowledgeMasking => {
            for pass in 0..config.data.passes {
                for d in docs {
                    let mut rng = instance_rng(seed, &d.id, kind, pass);
                    out.push(make_knowledge_masking(d, vocab.len(), g, &mut rng)?);
                }
            }
        }
        TaskKind::Capitalization => {
            for d in docs {
                out.push(make_capitalization(d, g)?);
            }
        }
        TaskKind::TokenDocumentRelation => {
            for d in docs.iter().filter(|d| d.sentences.len() > 1) {
                for i in 0..d.sentences.len() {
                    out.push(make_token_document_relation(d, i, g)?);
                }
            }
        }
        TaskKind::SentenceReordering => {
            let space = ReorderingLabelSpace::new(g.reorder_max_segments)?;
            for pass in 0..config.data.passes {
                for d in docs {
                    let mut rng = instance_rng(seed, &d.id, kind, pass);
                    out.push(make_sentence_reordering(d, &space, g, &mut rng)?);
                }
            }
        }
        TaskKind::SentenceDistance => {
            let pool: Vec<Document> = docs.iter().map(|d| (*d).clone()).collect();
            let count = docs.len() as u64 * config.data.passes;
            for i in 0..count {
                let mut rng = instance_rng(seed, &format!("distance-{i}"), kind, 0);
                out.push(make_sentence_distance(&pool, g, &mut rng)?);
            }
        }
        TaskKind::DiscourseRelation | TaskKind::IrRelevance => unreachable!("pair tasks"),
    }
    Ok(out)
}

/// Encoder dimensions from `config` with no output heads.
pub fn architecture(config: &RunConfig, vocab_size: usize) -> ModelConfig {
    let s = &config.model;
    ModelConfig {
        layers: s.layers,
        heads: s.heads,
        d_model: s.d_model,
        d_ff: s.d_ff,
        max_seq_len: s.max_seq_len.max(config.generator.max_seq_len),
        vocab_size,
        max_segments: config.generator.reorder_max_segments.max(2),
        task_count: TaskKind::ALL.len(),
        output_heads: Vec::new(),
    }
}

/// Loads every configured input and generates instances for the scheduled
/// tasks. Documents and pair rows are split by a hash of their id.
pub fn build_dataset(config: &RunConfig) -> Result<Dataset> {
    config.validate()?;
    let mut docs: Vec<Document> = Vec::new();
    for path in config.data.corpora.values() {
        docs.extend(load_corpus(path)?);
    }
    let ir = match &config.data.ir_pairs {
        Some(p) => load_ir_pairs(p)?,
        None => Vec::new(),
    };
    let discourse = match &config.data.discourse_pairs {
        Some(p) => load_discourse_pairs(p)?,
        None => Vec::new(),
    };

    let mut keys: Vec<String> = docs.iter().flat_map(|d| d.tokens().map(|t| t.key())).collect();
    for r in &ir {
        keys.extend(r.query.iter().chain(&r.title).map(|t| t.key()));
    }
    for r in &discourse {
        keys.extend(r.first.iter().chain(&r.second).map(|t| t.key()));
    }
    let vocab = Vocab::build(keys.iter().map(String::as_str), config.data.min_count);
    vocab.annotate(&mut docs);
    let relations = RelationVocab::from_records(&discourse);

    let pct = config.data.heldout_percent;
    let mut train = BTreeMap::new();
    let mut heldout = BTreeMap::new();
    let mut arities = BTreeMap::new();
    for &kind in &config.schedule.tasks {
        let id = kind.id();
        arities.insert(
            id,
            task_arity(kind, &vocab, &relations, config.generator.reorder_max_segments)?,
        );
        let (tr, mut ho) = match kind {
            TaskKind::IrRelevance => {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for (i, r) in ir.iter().enumerate() {
                    let inst = make_ir_from_record(r, &vocab, &config.generator)?;
                    if is_heldout(&format!("ir-{i}"), pct) {
                        b.push(inst)
                    } else {
                        a.push(inst)
                    }
                }
                (a, b)
            }
            TaskKind::DiscourseRelation => {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for (i, r) in discourse.iter().enumerate() {
                    let inst = make_discourse_relation(r, &relations, &vocab, &config.generator)?;
                    if is_heldout(&format!("discourse-{i}"), pct) {
                        b.push(inst)
                    } else {
                        a.push(inst)
                    }
                }
                (a, b)
            }
            _ => {
                let usable: Vec<&Document> = docs
                    .iter()
                    .filter(|d| applicable_tasks(d.source).contains(&kind))
                    .collect();
                let (ho_docs, tr_docs): (Vec<&Document>, Vec<&Document>) =
                    usable.into_iter().partition(|d| is_heldout(&d.id, pct));
                (
                    doc_instances(kind, &tr_docs, &vocab, config)?,
                    doc_instances(kind, &ho_docs, &vocab, config)?,
                )
            }
        };
        if tr.is_empty() {
            return Err(Error::NoData(id));
        }
        if ho.is_empty() {
            return Err(Error::EmptyHeldout(id));
        }
        ho.truncate(config.data.max_heldout);
        train.insert(id, tr);
        heldout.insert(id, ho);
    }
    Ok(Dataset {
        vocab,
        relations,
        train,
        heldout,
        arities,
    })
}

impl Dataset {
    /// Model configuration with one head per scheduled task.
    pub fn model_config(&self, config: &RunConfig) -> ModelConfig {
        let mut m = architecture(config, self.vocab.len());
        for &kind in &config.schedule.tasks {
            m = m.with_task_head(kind, self.arities[&kind.id()]);
            if !config.model.tie_masking_head {
                m.output_heads.last_mut().unwrap().tied = false;
            }
        }
        m
    }

    pub fn streams(&self, seed: u64) -> Result<BTreeMap<u16, DataStream>> {
        self.train
            .iter()
            .map(|(&t, insts)| Ok((t, DataStream::new(t, insts.clone(), seed)?)))
            .collect()
    }

    /// Writes `<task>.train.swti` and `<task>.heldout.swti` per task.
    pub fn write_instances(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (split, sets) in [("train", &self.train), ("heldout", &self.heldout)] {
            for (&t, insts) in sets {
                let name = TaskKind::from_id(t).map_or("task", TaskKind::name);
                write_instances(dir.join(format!("{name}.{split}.swti")), insts, InstanceFormat::Binary)?;
            }
        }
        Ok(())
    }
}
