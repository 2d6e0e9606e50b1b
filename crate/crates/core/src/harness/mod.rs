//! End-to-end workflow: synthetic data, pre-training, fine-tuning,
//! evaluation and strategy comparison.

mod compare;
mod config;
mod data;
mod finetune;
mod pretrain;
pub mod synth;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub use compare::{compare_strategies, median, ComparisonReport, StrategyRun};
pub use config::{CompareConfig, DataConfig, FineTuneTask, ModelShape, RunConfig, ScheduleConfig};
pub use data::{architecture, build_dataset, task_arity, Dataset};
pub use finetune::{finetune_model, head_name, load_finetune_rows, FineTuneReport};
pub use pretrain::{
    initial_model, plan_for, pretrain, pretrain_on, read_jsonl, with_strategy, write_jsonl, PretrainOutput, RunPaths,
};
pub use synth::{gen_synthetic_corpus, synthesize, SynthFiles, SynthSpec};

use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::model::{load_checkpoint_for, save_checkpoint, CheckpointMeta, Model};
use crate::scheduler::evaluate_all_tasks;

fn last_checkpoint(paths: &RunPaths) -> Result<PathBuf> {
    let dir = paths.checkpoints();
    let mut found: Vec<(usize, PathBuf)> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let stage = name.strip_prefix("stage-")?.strip_suffix(".ckpt")?.parse().ok()?;
            Some((stage, e.path()))
        })
        .collect();
    found.sort();
    found
        .pop()
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Checkpoint(format!("no checkpoints in {}", dir.display())))
}

/// Fine-tunes from `checkpoint` (default: the run's last stage checkpoint),
/// or from fresh parameters when `random_init` is set. Writes the tuned
/// checkpoint and a JSON report under `<output_dir>/finetune`.
pub fn finetune(config: &RunConfig, checkpoint: Option<&Path>, random_init: bool) -> Result<FineTuneReport> {
    let paths = RunPaths::new(&config.output_dir);
    let vocab = Vocab::load(paths.vocab())?;
    let expected = architecture(config, vocab.len());
    let model: Model<f32> = if random_init {
        initial_model(&expected, config.seed)?
    } else {
        let path = match checkpoint {
            Some(p) => p.to_path_buf(),
            None => last_checkpoint(&paths)?,
        };
        load_checkpoint_for(&path, &expected)?.model
    };
    let task = &config.finetune;
    let train = load_finetune_rows(&task.train, &vocab, task, expected.max_seq_len)?;
    let test = load_finetune_rows(&task.test, &vocab, task, expected.max_seq_len)?;
    let (model, report) = finetune_model(model, task, &train, &test, config.seed)?;
    let dir = config.output_dir.join("finetune");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    save_checkpoint(
        dir.join(format!("{}.ckpt", task.name)),
        &model,
        None,
        &CheckpointMeta::default(),
    )?;
    let json = dir.join(format!("{}.json", task.name));
    fs::write(&json, serde_json::to_vec_pretty(&report)?).map_err(|e| Error::io(&json, e))?;
    Ok(report)
}

/// Held-out accuracy of a checkpoint on every scheduled task it has a head for.
pub fn eval(config: &RunConfig, checkpoint: Option<&Path>) -> Result<BTreeMap<u16, f64>> {
    let paths = RunPaths::new(&config.output_dir);
    let path = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => last_checkpoint(&paths)?,
    };
    let dataset = build_dataset(config)?;
    let expected = architecture(config, dataset.vocab.len());
    let model: Model<f32> = load_checkpoint_for(&path, &expected)?.model;
    let heldout = dataset
        .heldout
        .into_iter()
        .filter(|(t, _)| model.config().head_for_task(*t).is_ok())
        .collect();
    evaluate_all_tasks(&model, &heldout)
}
