use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{LossLevel, TaskInstance, TaskKind};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::Scalar;

/// Held-out metric snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub stage: usize,
    pub task_id: u16,
    pub metric: String,
    pub value: f64,
}

pub fn metric_name(task_id: u16) -> &'static str {
    match TaskKind::from_id(task_id) {
        Some(TaskKind::KnowledgeMasking) => "masked_token_accuracy",
        Some(k) if k.level() == LossLevel::Token => "token_accuracy",
        _ => "accuracy",
    }
}

/// Targets the own-task head is scored on.
fn targets(inst: &TaskInstance) -> Vec<u32> {
    match inst.token_labels.get(&inst.task_id) {
        Some(labels) => (0..inst.len())
            .filter(|&i| inst.loss_mask[i])
            .filter_map(|i| labels[i])
            .collect(),
        None => inst.sentence_label.into_iter().collect(),
    }
}

/// Accuracy of always predicting the most frequent target.
pub fn majority_baseline(instances: &[TaskInstance]) -> f64 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut total = 0;
    for t in instances.iter().flat_map(targets) {
        *counts.entry(t).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    *counts.values().max().unwrap() as f64 / total as f64
}

/// Accuracy of the model's own-task head over `instances`, pooled over
/// scored positions for token-level tasks.
pub fn task_accuracy<T: Scalar>(model: &Model<T>, task_id: u16, instances: &[TaskInstance]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::EmptyHeldout(task_id));
    }
    let head = model.config().head_for_task(task_id)?.name.clone();
    let (mut hit, mut total) = (0usize, 0usize);
    for inst in instances {
        for (pred, target) in model.predict(inst, &head)? {
            hit += usize::from(pred == target);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyHeldout(task_id));
    }
    Ok(hit as f64 / total as f64)
}

/// One accuracy per held-out task.
pub fn evaluate_all_tasks<T: Scalar>(
    model: &Model<T>,
    heldout: &BTreeMap<u16, Vec<TaskInstance>>,
) -> Result<BTreeMap<u16, f64>> {
    heldout
        .iter()
        .map(|(&task, insts)| Ok((task, task_accuracy(model, task, insts)?)))
        .collect()
}
