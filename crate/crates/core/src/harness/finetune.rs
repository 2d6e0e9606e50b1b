use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FineTuneTask;
use crate::corpus::generators::{derive_seed, make_pair_instance};
use crate::corpus::vocab::Vocab;
use crate::corpus::{tokenize, TaskInstance, TaskKind};
use crate::error::{Error, Result};
use crate::model::{HeadSpec, Model};
use crate::numerics::{Adam, AdamConfig, Graph};
use crate::scheduler::majority_baseline;

const FINETUNE_SALT: u64 = 0xf1e7;

/// Reads `text \t label` or `text_a \t text_b \t label` rows.
pub fn load_finetune_rows(
    path: &Path,
    vocab: &Vocab,
    task: &FineTuneTask,
    max_seq_len: usize,
) -> Result<Vec<TaskInstance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        let (texts, label) = match cols.as_slice() {
            [a, l] => (vec![*a], *l),
            [a, b, l] => (vec![*a, *b], *l),
            _ => return Err(at(format!("expected 2 or 3 columns, found {}", cols.len()))),
        };
        let label: u32 = label
            .trim()
            .parse()
            .map_err(|_| at(format!("label `{label}` is not a class index")))?;
        if label as usize >= task.classes {
            return Err(at(format!("label {label} >= {} classes", task.classes)));
        }
        let ids: Vec<Vec<u32>> = texts.iter().map(|t| vocab.ids(&tokenize(t))).collect();
        let mut inst = if ids.len() == 2 {
            make_pair_instance(TaskKind::IrRelevance, &ids[0], &ids[1], label, max_seq_len)?
        } else {
            let mut body = ids[0].clone();
            body.truncate(max_seq_len.saturating_sub(2));
            if body.is_empty() {
                return Err(at("empty text".into()));
            }
            let mut inst = TaskInstance::from_segments(0, &[&body]);
            inst.sentence_label = Some(label);
            inst
        };
        inst.task_id = task.task_id;
        out.push(inst);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneReport {
    pub task: String,
    pub accuracy: f64,
    pub chance: f64,
    pub steps: u64,
    pub final_loss: Option<f64>,
}

pub fn head_name(task: &FineTuneTask) -> String {
    format!("finetune_{}", task.name)
}

/// Attaches a `[CLS]` classifier to `model` and trains it with the encoder
/// on `train`; reports accuracy on `test`.
pub fn finetune_model(
    mut model: Model<f32>,
    task: &FineTuneTask,
    train: &[TaskInstance],
    test: &[TaskInstance],
    seed: u64,
) -> Result<(Model<f32>, FineTuneReport)> {
    if task.classes < 2 {
        return Err(Error::Config("fine-tuning needs at least 2 classes".into()));
    }
    if (task.task_id as usize) >= model.config().task_count {
        return Err(Error::Config(format!("task id {} out of range", task.task_id)));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("fine-tuning needs train and test rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[FINETUNE_SALT]));
    let head = head_name(task);
    model.add_head(HeadSpec::classifier(&head, task.classes), &mut rng)?;
    let mut adam = Adam::new(AdamConfig {
        peak_lr: task.peak_lr,
        warmup_steps: task.warmup_steps,
        ..AdamConfig::default()
    });
    let bs = task.batch_size.max(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut last = None;
    for _ in 0..task.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(bs) {
            let batch: Vec<TaskInstance> = chunk.iter().map(|&i| train[i].clone()).collect();
            let mut g = Graph::new();
            let loss = model.combined_loss(&mut g, &batch, &[(&head, 1.0)])?;
            last = Some(g.value(loss).item() as f64);
            let grads = g.backward(loss)?;
            adam.step(model.params_mut(), &grads)?;
        }
    }
    let mut hit = 0;
    for inst in test {
        for (p, t) in model.predict(inst, &head)? {
            hit += usize::from(p == t);
        }
    }
    let report = FineTuneReport {
        task: task.name.clone(),
        accuracy: hit as f64 / test.len() as f64,
        chance: majority_baseline(test),
        steps: adam.step_count(),
        final_loss: last,
    };
    Ok((model, report))
}
