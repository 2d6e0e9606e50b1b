use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{build_dataset, Dataset};
use super::finetune::{finetune_model, load_finetune_rows};
use super::pretrain::{plan_for, pretrain_on, with_strategy, RunPaths};
use super::RunConfig;
use crate::corpus::TaskKind;
use crate::error::{Error, Result};
use crate::scheduler::{MetricRow, Strategy};

/// One strategy trained under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub seed: u64,
    pub iterations: u64,
    pub metrics: Vec<MetricRow>,
    pub finetune_accuracy: Option<f64>,
}

impl StrategyRun {
    pub fn metric(&self, stage: usize, task_id: u16) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.stage == stage && m.task_id == task_id)
            .map(|m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub stages: usize,
    pub tasks: Vec<u16>,
    /// Median over seeds, `cells[strategy][stage][k]` for `tasks[k]`.
    pub cells: BTreeMap<Strategy, Vec<Vec<f64>>>,
    /// Median first-task metric at the first snapshot minus at the last.
    pub first_task_drop: BTreeMap<Strategy, f64>,
    pub finetune: BTreeMap<Strategy, f64>,
    pub chance: BTreeMap<u16, f64>,
    pub runs: Vec<StrategyRun>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs all three strategies from identical initial parameters for every
/// seed. Writes per-run logs under `out` when given.
pub fn compare_strategies(config: &RunConfig, out: Option<&Path>) -> Result<ComparisonReport> {
    let totals: Vec<(Strategy, u64)> = Strategy::ALL
        .iter()
        .map(|&s| Ok((s, plan_for(&with_strategy(config, s))?.total())))
        .collect::<Result<_>>()?;
    if totals.iter().any(|&(_, t)| t != totals[0].1) {
        return Err(Error::BudgetMismatch(format!("{totals:?}")));
    }
    let stages = config.schedule.stages;
    let tasks = config.schedule.task_ids();
    let mut runs = Vec::new();
    let mut chance = BTreeMap::new();
    for &seed in &config.compare.seeds {
        let mut seeded = config.clone();
        seeded.seed = seed;
        let dataset: Dataset = build_dataset(&seeded)?;
        let finetune_data = if config.compare.finetune {
            let ft = &config.finetune;
            let len = dataset.model_config(&seeded).max_seq_len;
            Some((
                load_finetune_rows(&ft.train, &dataset.vocab, ft, len)?,
                load_finetune_rows(&ft.test, &dataset.vocab, ft, len)?,
            ))
        } else {
            None
        };
        for strategy in Strategy::ALL {
            let c = with_strategy(&seeded, strategy);
            let paths = out.map(|o| RunPaths::new(o.join(format!("seed-{seed}")).join(strategy.name())));
            let result = pretrain_on(&c, &dataset, paths.as_ref(), None)?;
            if chance.is_empty() {
                chance = result.chance.clone();
            }
            let finetune_accuracy = match &finetune_data {
                Some((train, test)) => Some(finetune_model(result.model, &c.finetune, train, test, seed)?.1.accuracy),
                None => None,
            };
            runs.push(StrategyRun {
                strategy,
                seed,
                iterations: result.trace.len() as u64,
                metrics: result.metrics,
                finetune_accuracy,
            });
        }
    }

    let mut cells = BTreeMap::new();
    let mut first_task_drop = BTreeMap::new();
    let mut finetune = BTreeMap::new();
    for strategy in Strategy::ALL {
        let mine: Vec<&StrategyRun> = runs.iter().filter(|r| r.strategy == strategy).collect();
        let grid: Vec<Vec<f64>> = (0..stages)
            .map(|s| {
                tasks
                    .iter()
                    .map(|&t| median(&mine.iter().filter_map(|r| r.metric(s, t)).collect::<Vec<_>>()))
                    .collect()
            })
            .collect();
        cells.insert(strategy, grid);
        if let Some(&t0) = tasks.first() {
            let drops: Vec<f64> = mine
                .iter()
                .filter_map(|r| Some(r.metric(0, t0)? - r.metric(stages.checked_sub(1)?, t0)?))
                .collect();
            first_task_drop.insert(strategy, median(&drops));
        }
        let ft: Vec<f64> = mine.iter().filter_map(|r| r.finetune_accuracy).collect();
        if !ft.is_empty() {
            finetune.insert(strategy, median(&ft));
        }
    }
    let report = ComparisonReport {
        seeds: config.compare.seeds.clone(),
        stages,
        tasks,
        cells,
        first_task_drop,
        finetune,
        chance,
        runs,
    };
    if let Some(o) = out {
        fs::create_dir_all(o).map_err(|e| Error::io(o, e))?;
        let json = o.join("report.json");
        fs::write(&json, serde_json::to_vec_pretty(&report)?).map_err(|e| Error::io(&json, e))?;
        let txt = o.join("report.txt");
        fs::write(&txt, report.table()).map_err(|e| Error::io(&txt, e))?;
    }
    Ok(report)
}

impl ComparisonReport {
    /// Plain-text table: one block per strategy, tasks as rows, stages as
    /// columns.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seeds: {:?} (medians)", self.seeds);
        for (strategy, grid) in &self.cells {
            let _ = writeln!(s, "\n{strategy}");
            let _ = write!(s, "{:<26}", "task");
            for st in 0..self.stages {
                let _ = write!(s, "{:>9}", format!("stage {}", st + 1));
            }
            let _ = writeln!(s, "{:>9}", "chance");
            for (k, &t) in self.tasks.iter().enumerate() {
                let name = TaskKind::from_id(t).map_or("?", TaskKind::name);
                let _ = write!(s, "{name:<26}");
                for row in grid {
                    let _ = write!(s, "{:>9.3}", row[k]);
                }
                let _ = writeln!(s, "{:>9.3}", self.chance.get(&t).copied().unwrap_or(f64::NAN));
            }
            if let Some(d) = self.first_task_drop.get(strategy) {
                let _ = writeln!(s, "first-task drop: {d:+.3}");
            }
            if let Some(f) = self.finetune.get(strategy) {
                let _ = writeln!(s, "fine-tune accuracy: {f:.3}");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
