use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SynthSpec;
use crate::corpus::{CorpusTag, GeneratorConfig, TaskKind};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::AdamConfig;
use crate::scheduler::{Plateau, Strategy, TrainerOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Document corpus file per corpus tag.
    pub corpora: BTreeMap<CorpusTag, PathBuf>,
    pub ir_pairs: Option<PathBuf>,
    pub discourse_pairs: Option<PathBuf>,
    /// Share of documents (by id hash) held out for evaluation, in percent.
    pub heldout_percent: u64,
    /// Instances generated per document and task (stochastic tasks only).
    pub passes: u64,
    pub min_count: usize,
    /// Cap on held-out instances per task.
    pub max_heldout: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            corpora: BTreeMap::new(),
            ir_pairs: None,
            discourse_pairs: None,
            heldout_percent: 15,
            passes: 2,
            min_count: 1,
            max_heldout: 300,
        }
    }
}

/// Encoder dimensions; vocabulary size and heads are filled in from data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    /// Tie the knowledge-masking output to the token embedding.
    pub tie_masking_head: bool,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelConfig::desk(6);
        ModelShape {
            layers: d.layers,
            heads: d.heads,
            d_model: d.d_model,
            d_ff: d.d_ff,
            max_seq_len: d.max_seq_len,
            tie_masking_head: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub strategy: Strategy,
    /// Task names in introduction order.
    pub tasks: Vec<TaskKind>,
    /// Iterations per task, N.
    pub budget: u64,
    pub stages: usize,
    pub reserve: u64,
    pub batch_size: usize,
    pub reset_optimizer: bool,
    pub plateau: Option<Plateau>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            strategy: Strategy::ContinualMultitask,
            tasks: vec![
                TaskKind::KnowledgeMasking,
                TaskKind::Capitalization,
                TaskKind::TokenDocumentRelation,
                TaskKind::SentenceReordering,
            ],
            budget: 500,
            stages: 4,
            reserve: 100,
            batch_size: 8,
            reset_optimizer: false,
            plateau: None,
        }
    }
}

impl ScheduleConfig {
    pub fn task_ids(&self) -> Vec<u16> {
        self.tasks.iter().map(|t| t.id()).collect()
    }

    pub fn trainer_options(&self, checkpoint_dir: Option<PathBuf>) -> TrainerOptions {
        TrainerOptions {
            batch_size: self.batch_size,
            reset_optimizer: self.reset_optimizer,
            plateau: self.plateau,
            checkpoint_dir,
        }
    }
}

/// Downstream classification task read from `text \t label` or
/// `text_a \t text_b \t label` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineTuneTask {
    pub name: String,
    pub train: PathBuf,
    pub test: PathBuf,
    pub classes: usize,
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub batch_size: usize,
    /// Task embedding row used for fine-tuning inputs.
    pub task_id: u16,
}

impl Default for FineTuneTask {
    fn default() -> Self {
        FineTuneTask {
            name: "topic".into(),
            train: PathBuf::from("data/finetune_train.tsv"),
            test: PathBuf::from("data/finetune_test.tsv"),
            classes: 2,
            epochs: 3,
            peak_lr: 5e-4,
            warmup_steps: 20,
            batch_size: 8,
            task_id: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub seeds: Vec<u64>,
    /// Fine-tune every final checkpoint on the `finetune` task.
    pub finetune: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            seeds: vec![1, 2, 3],
            finetune: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub generator: GeneratorConfig,
    pub model: ModelShape,
    pub optimizer: AdamConfig,
    pub schedule: ScheduleConfig,
    pub finetune: FineTuneTask,
    pub compare: CompareConfig,
    /// Used by `gen-data`.
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            output_dir: PathBuf::from("runs/desk"),
            data: DataConfig::default(),
            generator: GeneratorConfig::default(),
            model: ModelShape::default(),
            optimizer: AdamConfig {
                peak_lr: 1e-3,
                warmup_steps: 100,
                ..AdamConfig::default()
            },
            schedule: ScheduleConfig::default(),
            finetune: FineTuneTask::default(),
            compare: CompareConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config; relative data paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.data.corpora.values_mut().for_each(fix);
        self.data.ir_pairs.as_mut().map(fix);
        self.data.discourse_pairs.as_mut().map(fix);
        fix(&mut self.finetune.train);
        fix(&mut self.finetune.test);
        fix(&mut self.output_dir);
    }

    /// Points every data path at the files `gen-data` writes into `dir`.
    pub fn use_synthetic_dir(&mut self, dir: &Path) {
        let files = super::synth::SynthFiles::in_dir(dir, self.synth.tag);
        self.data.corpora = [(self.synth.tag, files.corpus)].into_iter().collect();
        self.data.ir_pairs = Some(files.ir_pairs);
        self.data.discourse_pairs = Some(files.discourse_pairs);
        self.finetune.train = files.finetune_train;
        self.finetune.test = files.finetune_test;
    }

    /// Checks invariants and that referenced pre-training inputs exist.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schedule.tasks.is_empty() {
            return bad("schedule.tasks is empty".into());
        }
        if self.schedule.batch_size == 0 {
            return bad("schedule.batch_size must be positive".into());
        }
        if self.data.heldout_percent >= 100 {
            return bad("data.heldout_percent must be below 100".into());
        }
        if self.data.passes == 0 {
            return bad("data.passes must be positive".into());
        }
        for (tag, path) in &self.data.corpora {
            if !path.exists() {
                return bad(format!("corpus for {tag} not found: {}", path.display()));
            }
        }
        for task in &self.schedule.tasks {
            let served = match task {
                TaskKind::IrRelevance => self.data.ir_pairs.is_some(),
                TaskKind::DiscourseRelation => self.data.discourse_pairs.is_some(),
                _ => self
                    .data
                    .corpora
                    .keys()
                    .any(|tag| crate::corpus::applicable_tasks(*tag).contains(task)),
            };
            if !served {
                return bad(format!("no input data for task {}", task.name()));
            }
        }
        for p in self.data.ir_pairs.iter().chain(&self.data.discourse_pairs) {
            if !p.exists() {
                return bad(format!("pair file not found: {}", p.display()));
            }
        }
        if self.finetune.classes < 2 {
            return bad("finetune.classes must be at least 2".into());
        }
        Ok(())
    }
}
