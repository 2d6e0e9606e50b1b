use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{build_dataset, Dataset};
use super::RunConfig;
use crate::corpus::generators::derive_seed;
use crate::error::{Error, Result};
use crate::model::{load_checkpoint_for, Model, ModelConfig};
use crate::scheduler::{
    build_schedule, evaluate_all_tasks, majority_baseline, metric_name, run_stage_with, MetricRow, StagePlan, Strategy,
    TraceRow, Trainer,
};

/// Salt separating the initialization stream from data streams.
const INIT_SALT: u64 = 0x1a17;

/// Everything a pre-training run produces.
#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub plan: StagePlan,
    pub trace: Vec<TraceRow>,
    pub metrics: Vec<MetricRow>,
    /// Majority-class accuracy per task on the held-out set.
    pub chance: BTreeMap<u16, f64>,
    pub model: Model<f32>,
}

/// Files written under the output directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }
    pub fn trace(&self) -> PathBuf {
        self.root.join("trace.jsonl")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn checkpoint(&self, stage: usize) -> PathBuf {
        self.checkpoints().join(format!("stage-{stage}.ckpt"))
    }
    pub fn instances(&self) -> PathBuf {
        self.root.join("instances")
    }
    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.txt")
    }
    pub fn plan(&self) -> PathBuf {
        self.root.join("plan.json")
    }
    pub fn chance(&self) -> PathBuf {
        self.root.join("chance.json")
    }
    /// Wall-clock timings; the only non-deterministic output.
    pub fn timing(&self) -> PathBuf {
        self.root.join("timing.json")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Timing {
    seconds: f64,
    steps: u64,
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn append_jsonl<T: Serialize>(file: &mut Option<fs::File>, row: &T) -> Result<()> {
    if let Some(f) = file {
        let mut line = serde_json::to_vec(row)?;
        line.push(b'\n');
        f.write_all(&line).map_err(|e| Error::io("log", e))?;
    }
    Ok(())
}

pub fn initial_model(config: &ModelConfig, seed: u64) -> Result<Model<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[INIT_SALT]));
    Model::new(config.clone(), &mut rng)
}

pub fn plan_for(config: &RunConfig) -> Result<StagePlan> {
    let s = &config.schedule;
    build_schedule(&s.task_ids(), s.budget, s.stages, s.strategy, s.reserve)
}

fn snapshot(model: &Model<f32>, dataset: &Dataset, stage: usize) -> Result<Vec<MetricRow>> {
    Ok(evaluate_all_tasks(model, &dataset.heldout)?
        .into_iter()
        .map(|(task_id, value)| MetricRow {
            stage,
            task_id,
            metric: metric_name(task_id).to_string(),
            value,
        })
        .collect())
}

/// Global steps after which a single-stage plan is evaluated, so that it
/// reports as many snapshots as the configured stage count.
fn reporting_points(plan: &StagePlan, stages: usize) -> Vec<u64> {
    let total = plan.total();
    let k = stages.max(1) as u64;
    (1..=k).map(|i| total * i / k).collect()
}

/// Pre-trains on `dataset`. With `out`, writes logs, checkpoints and
/// instance files there; with `resume`, continues from a stage checkpoint.
pub fn pretrain_on(
    config: &RunConfig,
    dataset: &Dataset,
    out: Option<&RunPaths>,
    resume: Option<&Path>,
) -> Result<PretrainOutput> {
    let started = Instant::now();
    let plan = plan_for(config)?;
    let model_config = dataset.model_config(config);
    let streams = dataset.streams(config.seed)?;
    let options = config.schedule.trainer_options(out.map(RunPaths::checkpoints));

    let mut trace: Vec<TraceRow> = Vec::new();
    let mut metrics: Vec<MetricRow> = Vec::new();
    let mut trainer = match resume {
        Some(path) => {
            let ck = load_checkpoint_for::<f32>(path, &model_config)?;
            if let Some(o) = out {
                if o.trace().exists() {
                    trace = read_jsonl(&o.trace())?;
                    trace.retain(|r: &TraceRow| r.global_step <= ck.meta.global_step);
                }
                if o.metrics().exists() {
                    metrics = read_jsonl(&o.metrics())?;
                    metrics.retain(|m: &MetricRow| m.stage < ck.meta.stage);
                }
            }
            Trainer::resume(ck, config.optimizer, streams, options)
        }
        None => Trainer::new(
            initial_model(&model_config, config.seed)?,
            config.optimizer,
            streams,
            options,
            config.seed,
        ),
    };

    let chance: BTreeMap<u16, f64> = dataset
        .heldout
        .iter()
        .map(|(&t, insts)| (t, majority_baseline(insts)))
        .collect();

    let mut trace_file = None;
    let mut metric_file = None;
    if let Some(o) = out {
        fs::create_dir_all(o.checkpoints()).map_err(|e| Error::io(o.checkpoints(), e))?;
        dataset.vocab.save(o.vocab())?;
        dataset.write_instances(&o.instances())?;
        fs::write(o.plan(), serde_json::to_vec_pretty(&plan)?).map_err(|e| Error::io(o.plan(), e))?;
        fs::write(o.chance(), serde_json::to_vec_pretty(&chance)?).map_err(|e| Error::io(o.chance(), e))?;
        write_jsonl(&o.trace(), &trace)?;
        write_jsonl(&o.metrics(), &metrics)?;
        let open = |p: PathBuf| {
            fs::OpenOptions::new()
                .append(true)
                .open(&p)
                .map_err(|e| Error::io(p, e))
        };
        trace_file = Some(open(o.trace())?);
        metric_file = Some(open(o.metrics())?);
    }

    let single_stage = plan.strategy == Strategy::Multitask;
    let points = reporting_points(&plan, config.schedule.stages);
    for stage in trainer.stages_done()..plan.stage_count() {
        let start = trainer.global_step();
        let rows = run_stage_with(&plan, stage, &mut trainer, start, |t, row| {
            append_jsonl(&mut trace_file, row)?;
            if single_stage {
                if let Some(k) = points.iter().position(|&p| p == row.global_step) {
                    for m in snapshot(&t.model, dataset, k)? {
                        append_jsonl(&mut metric_file, &m)?;
                        metrics.push(m);
                    }
                }
            }
            Ok(())
        })?;
        trace.extend(rows);
        if !single_stage {
            for m in snapshot(&trainer.model, dataset, stage)? {
                append_jsonl(&mut metric_file, &m)?;
                metrics.push(m);
            }
        }
    }

    if let Some(o) = out {
        let timing = Timing {
            seconds: started.elapsed().as_secs_f64(),
            steps: trace.len() as u64,
        };
        fs::write(o.timing(), serde_json::to_vec_pretty(&timing)?).map_err(|e| Error::io(o.timing(), e))?;
    }
    Ok(PretrainOutput {
        plan,
        trace,
        metrics,
        chance,
        model: trainer.model,
    })
}

/// Builds the dataset from `config` and pre-trains into its output directory.
pub fn pretrain(config: &RunConfig, resume: Option<&Path>) -> Result<PretrainOutput> {
    let dataset = build_dataset(config)?;
    pretrain_on(config, &dataset, Some(&RunPaths::new(&config.output_dir)), resume)
}

/// Strategy override helper for the CLI and comparisons.
pub fn with_strategy(config: &RunConfig, strategy: Strategy) -> RunConfig {
    let mut c = config.clone();
    c.schedule.strategy = strategy;
    c
}
