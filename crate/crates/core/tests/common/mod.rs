#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stagewise::corpus::{CorpusTag, Document, TaskInstance, TaskKind, Vocab};
use stagewise::model::{HeadSpec, Model, ModelConfig};
use stagewise::numerics::{Graph, ParamStore, Tensor};

pub const TOY_WORDS: [&str; 24] = [
    "amber", "basin", "cedar", "delta", "ember", "fjord", "grove", "heath", "inlet", "jetty", "knoll", "lagoon",
    "marsh", "north", "oasis", "prairie", "quarry", "ridge", "savanna", "tundra", "upland", "valley", "willow",
    "yarrow",
];

/// Random documents over a small word list with random casing; sentences are
/// unique across the whole set.
pub fn toy_docs(count: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut docs: Vec<Document> = (0..count)
        .map(|d| {
            let n = rng.gen_range(1..=5);
            let mut sentences = Vec::new();
            while sentences.len() < n {
                let len = rng.gen_range(3..=7);
                let words: Vec<String> = (0..len)
                    .map(|_| {
                        let w = *TOY_WORDS.choose(&mut rng).unwrap();
                        if rng.gen_bool(0.3) {
                            let mut c = w.chars();
                            let first = c.next().unwrap().to_ascii_uppercase();
                            std::iter::once(first).chain(c).collect()
                        } else {
                            w.to_string()
                        }
                    })
                    .collect();
                let text = words.join(" ");
                if seen.insert(text.to_lowercase()) {
                    sentences.push(text);
                }
            }
            let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
            Document::from_text(&format!("toy-{d}"), CorpusTag::Encyclopedia, &refs).unwrap()
        })
        .collect();
    Vocab::from_documents(&docs, 1).annotate(&mut docs);
    docs
}

pub fn all_heads_config(vocab: usize) -> ModelConfig {
    let mut c = ModelConfig::desk(vocab);
    c.layers = 2;
    c.heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.max_seq_len = 16;
    c.max_segments = 3;
    let arities = [vocab, 2, 2, 9, 3, 4, 3];
    for (kind, arity) in TaskKind::ALL.into_iter().zip(arities) {
        c = c.with_task_head(kind, arity);
    }
    c.output_heads.push(HeadSpec::classifier("classifier", 2));
    c
}

/// A model whose parameters are large enough for well-conditioned
/// finite-difference checks.
pub fn gradcheck_model(seed: u64) -> Model<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = all_heads_config(24);
    let base: Model<f64> = Model::new(config.clone(), &mut rng).unwrap();
    let mut params = ParamStore::new();
    for (_, name, t) in base.params().iter() {
        let mut fresh = Tensor::<f64>::uniform(t.shape(), 0.4, &mut rng);
        if name.ends_with("gamma") {
            fresh = fresh.map(|x| 1.0 + x);
        }
        params.insert(name, fresh).unwrap();
    }
    Model::from_params(config, params).unwrap()
}

fn ids(rng: &mut ChaCha8Rng, n: usize, vocab: u32) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(5..vocab)).collect()
}

/// Two instances that exercise `head`, one of them padded.
pub fn head_batch(head: &HeadSpec, vocab: u32, seed: u64) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2)
        .map(|b| {
            let task = head.task_id.unwrap_or(0);
            let mut inst = match head.level {
                stagewise::corpus::LossLevel::Token => {
                    let body = ids(&mut rng, 5 + b, vocab);
                    let mut inst = TaskInstance::from_segments(task, &[&body]);
                    let labels: Vec<Option<u32>> = (0..inst.len())
                        .map(|i| {
                            (inst.is_real(i) && (i % 2 == 1 || b == 0)).then(|| rng.gen_range(0..head.arity as u32))
                        })
                        .collect();
                    inst.loss_mask = labels.iter().map(Option::is_some).collect();
                    inst.token_labels.insert(task, labels);
                    inst
                }
                stagewise::corpus::LossLevel::Sentence => {
                    let a = ids(&mut rng, 3, vocab);
                    let c = ids(&mut rng, 2 + b, vocab);
                    let mut inst = TaskInstance::from_segments(task, &[&a, &c]);
                    inst.sentence_label = Some(rng.gen_range(0..head.arity as u32));
                    inst
                }
            };
            if b == 1 {
                inst.pad_to(12);
            }
            inst
        })
        .collect()
}

pub fn head_loss_value(
    model: &Model<f64>,
    head: &str,
    batch: &[TaskInstance],
) -> (f64, Graph<f64>, stagewise::numerics::NodeId) {
    let mut g = Graph::new();
    let loss = model.combined_loss(&mut g, batch, &[(head, 1.0)]).unwrap();
    (g.value(loss).item(), g, loss)
}

/// Largest relative error between analytic and central-difference gradients
/// of one head's loss over every parameter, with the parameter name.
#[allow(clippy::needless_range_loop)]
pub fn head_gradcheck(
    model: &mut Model<f64>,
    head: &str,
    batch: &[TaskInstance],
    eps: f64,
    floor: f64,
) -> (f64, String) {
    let (_, g, loss) = head_loss_value(model, head, batch);
    let grads = g.backward(loss).unwrap();
    let ids: Vec<_> = model
        .params()
        .iter()
        .map(|(id, name, t)| (id, name.to_string(), t.numel()))
        .collect();
    let mut worst = (0.0, String::new());
    for (id, name, n) in ids {
        let analytic = grads.get(id).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        for k in 0..n {
            let orig = model.params().get(id).unwrap().data()[k];
            model.params_mut().get_mut(id).unwrap().data_mut()[k] = orig + eps;
            let up = head_loss_value(model, head, batch).0;
            model.params_mut().get_mut(id).unwrap().data_mut()[k] = orig - eps;
            let down = head_loss_value(model, head, batch).0;
            model.params_mut().get_mut(id).unwrap().data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{k}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

/// Token-level ids of each `[SEP]`-delimited segment.
pub fn segments(inst: &TaskInstance) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &t in &inst.token_ids[1..inst.attention_length] {
        if t == stagewise::corpus::vocab::SEP {
            out.push(Vec::new());
        } else {
            out.last_mut().unwrap().push(t);
        }
    }
    out.pop();
    out
}
