use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{next_task, DataStream, StagePlan};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, Checkpoint, CheckpointMeta, Model};
use crate::numerics::{Adam, AdamConfig, Graph, Scalar};

/// One scheduled iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub global_step: u64,
    pub stage: usize,
    pub task_id: u16,
    pub loss: f64,
    pub lr: f64,
}

/// Performs the work behind each scheduled iteration.
pub trait StageExecutor {
    fn begin_stage(&mut self, _stage: usize) -> Result<()> {
        Ok(())
    }

    /// One optimizer step on `task_id`; returns `(loss, lr)`.
    fn train_step(&mut self, stage: usize, task_id: u16) -> Result<(f64, f64)>;

    /// Called after the last iteration of a stage.
    fn end_stage(&mut self, _stage: usize, _rows: &[TraceRow]) -> Result<()> {
        Ok(())
    }

    /// Whether the current stage should stop before its allocation is spent.
    fn plateaued(&self) -> bool {
        false
    }
}

/// Records the schedule without training.
#[derive(Debug, Default, Clone)]
pub struct DryRun {
    pub counts: BTreeMap<u16, u64>,
}

impl StageExecutor for DryRun {
    fn train_step(&mut self, _stage: usize, task_id: u16) -> Result<(f64, f64)> {
        *self.counts.entry(task_id).or_default() += 1;
        Ok((0.0, 0.0))
    }
}

/// Runs every iteration of `stage`, numbering them from `first_step + 1`.
pub fn run_stage<E: StageExecutor>(
    plan: &StagePlan,
    stage: usize,
    executor: &mut E,
    first_step: u64,
) -> Result<Vec<TraceRow>> {
    run_stage_with(plan, stage, executor, first_step, |_, _| Ok(()))
}

/// [`run_stage`] with a callback after each iteration.
pub fn run_stage_with<E: StageExecutor>(
    plan: &StagePlan,
    stage: usize,
    executor: &mut E,
    first_step: u64,
    mut on_step: impl FnMut(&mut E, &TraceRow) -> Result<()>,
) -> Result<Vec<TraceRow>> {
    if stage >= plan.stage_count() {
        return Err(Error::InvalidSchedule(format!(
            "stage {stage} outside plan of {} stages",
            plan.stage_count()
        )));
    }
    let at = |step: u64, e: Error| Error::AtStep {
        stage,
        step,
        source: Box::new(e),
    };
    let mut remaining = plan.allocation[stage].clone();
    let mut rows = Vec::with_capacity(plan.stage_total(stage) as usize);
    executor.begin_stage(stage).map_err(|e| at(first_step, e))?;
    let mut step = first_step;
    while let Some(task_id) = next_task(plan, stage, &mut remaining) {
        step += 1;
        let (loss, lr) = executor.train_step(stage, task_id).map_err(|e| at(step, e))?;
        let row = TraceRow {
            global_step: step,
            stage,
            task_id,
            loss,
            lr,
        };
        on_step(executor, &row).map_err(|e| at(step, e))?;
        rows.push(row);
        if executor.plateaued() {
            break;
        }
    }
    executor.end_stage(stage, &rows).map_err(|e| at(step, e))?;
    Ok(rows)
}

/// Stop a stage once the mean loss of the last `window` steps improves on
/// the preceding window by less than `min_rel_improvement`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub window: usize,
    pub min_rel_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerOptions {
    pub batch_size: usize,
    /// Clear Adam moments and step count at the start of every stage after
    /// the first.
    pub reset_optimizer: bool,
    pub plateau: Option<Plateau>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainerOptions {
    fn default() -> Self {
        TrainerOptions {
            batch_size: 8,
            reset_optimizer: false,
            plateau: None,
            checkpoint_dir: None,
        }
    }
}

/// Trains a model on per-task data streams.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: Model<T>,
    pub adam: Adam<T>,
    pub options: TrainerOptions,
    streams: BTreeMap<u16, DataStream>,
    completed: BTreeMap<u16, u64>,
    stages_done: usize,
    global_step: u64,
    seed: u64,
    stage_losses: Vec<f64>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(
        model: Model<T>,
        adam: AdamConfig,
        streams: BTreeMap<u16, DataStream>,
        options: TrainerOptions,
        seed: u64,
    ) -> Self {
        Trainer {
            model,
            adam: Adam::new(adam),
            options,
            streams,
            completed: BTreeMap::new(),
            stages_done: 0,
            global_step: 0,
            seed,
            stage_losses: Vec::new(),
        }
    }

    /// Continues from a stage-boundary checkpoint: weights, optimizer state,
    /// and stream positions all pick up where the saved run stopped.
    pub fn resume(
        checkpoint: Checkpoint<T>,
        adam: AdamConfig,
        mut streams: BTreeMap<u16, DataStream>,
        options: TrainerOptions,
    ) -> Self {
        let mut opt = Adam::new(adam);
        checkpoint.restore_optimizer(&mut opt);
        for (task, &n) in &checkpoint.meta.completed {
            if let Some(s) = streams.get_mut(task) {
                s.seek(n * options.batch_size as u64);
            }
        }
        Trainer {
            model: checkpoint.model,
            adam: opt,
            options,
            streams,
            completed: checkpoint.meta.completed,
            stages_done: checkpoint.meta.stage,
            global_step: checkpoint.meta.global_step,
            seed: checkpoint.meta.seed,
            stage_losses: Vec::new(),
        }
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn stages_done(&self) -> usize {
        self.stages_done
    }

    pub fn completed(&self) -> &BTreeMap<u16, u64> {
        &self.completed
    }

    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            stage: self.stages_done,
            completed: self.completed.clone(),
            global_step: self.global_step,
            adam_step: self.adam.step_count(),
            seed: self.seed,
        }
    }

    pub fn checkpoint_path(&self, stage: usize) -> Option<PathBuf> {
        self.options
            .checkpoint_dir
            .as_ref()
            .map(|d| d.join(format!("stage-{stage}.ckpt")))
    }

    /// Runs stages `stages_done..` of `plan`, returning all trace rows.
    pub fn run_plan(&mut self, plan: &StagePlan) -> Result<Vec<TraceRow>> {
        let mut rows = Vec::new();
        for stage in self.stages_done..plan.stage_count() {
            let start = self.global_step;
            rows.extend(run_stage(plan, stage, self, start)?);
        }
        Ok(rows)
    }
}

impl<T: Scalar> StageExecutor for Trainer<T> {
    fn begin_stage(&mut self, stage: usize) -> Result<()> {
        if stage > 0 && self.options.reset_optimizer {
            self.adam.reset();
        }
        self.stage_losses.clear();
        Ok(())
    }

    fn train_step(&mut self, _stage: usize, task_id: u16) -> Result<(f64, f64)> {
        let stream = self.streams.get_mut(&task_id).ok_or(Error::NoData(task_id))?;
        let batch = stream.next_batch(self.options.batch_size.max(1));
        let mut g = Graph::new();
        let loss = self.model.batch_loss(&mut g, &batch)?;
        let value = g.value(loss).item().as_f64();
        let grads = g.backward(loss)?;
        let lr = self.adam.step(self.model.params_mut(), &grads)?;
        *self.completed.entry(task_id).or_default() += 1;
        self.global_step += 1;
        self.stage_losses.push(value);
        Ok((value, lr))
    }

    fn end_stage(&mut self, stage: usize, _rows: &[TraceRow]) -> Result<()> {
        self.stages_done = stage + 1;
        if let Some(path) = self.checkpoint_path(stage) {
            save_checkpoint(path, &self.model, Some(&self.adam), &self.meta())?;
        }
        Ok(())
    }

    fn plateaued(&self) -> bool {
        let Some(p) = self.options.plateau else {
            return false;
        };
        let n = self.stage_losses.len();
        if p.window == 0 || n < 2 * p.window {
            return false;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let last = mean(&self.stage_losses[n - p.window..]);
        let prev = mean(&self.stage_losses[n - 2 * p.window..n - p.window]);
        prev > 0.0 && (prev - last) / prev < p.min_rel_improvement
    }
}
