use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One task per stage, trained alone.
    Continual,
    /// All tasks jointly in a single stage.
    Multitask,
    /// Each new task joins the previous ones, which keep a reserve slice.
    ContinualMultitask,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Continual, Strategy::Multitask, Strategy::ContinualMultitask];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Continual => "continual",
            Strategy::Multitask => "multitask",
            Strategy::ContinualMultitask => "continual_multitask",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == norm)
            .ok_or_else(|| Error::InvalidSchedule(format!("unknown strategy `{s}`")))
    }
}

/// Iteration allocation over stages for an ordered task list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub strategy: Strategy,
    /// `(task_id, intro_stage)` in introduction order.
    pub tasks: Vec<(u16, usize)>,
    pub budget: u64,
    pub reserve: u64,
    /// `allocation[stage][k]` iterations for `tasks[k]`.
    pub allocation: Vec<Vec<u64>>,
}

impl StagePlan {
    pub fn stage_count(&self) -> usize {
        self.allocation.len()
    }

    pub fn task_ids(&self) -> Vec<u16> {
        self.tasks.iter().map(|&(t, _)| t).collect()
    }

    pub fn cell(&self, stage: usize, task_id: u16) -> u64 {
        self.tasks
            .iter()
            .position(|&(t, _)| t == task_id)
            .map_or(0, |k| self.allocation[stage][k])
    }

    pub fn stage_total(&self, stage: usize) -> u64 {
        self.allocation[stage].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.allocation.iter().flatten().sum()
    }

    /// Iterations of each task scheduled before `stage`.
    pub fn completed_before(&self, stage: usize) -> Vec<(u16, u64)> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(k, &(t, _))| (t, self.allocation[..stage].iter().map(|row| row[k]).sum()))
            .collect()
    }
}

/// Allocates `budget` iterations per task over `stages` stages.
///
/// Task `k` is introduced at stage `k` (stage 0 for all tasks under
/// `Multitask`, which uses a single stage).
pub fn build_schedule(
    tasks: &[u16],
    budget: u64,
    stages: usize,
    strategy: Strategy,
    reserve: u64,
) -> Result<StagePlan> {
    let bad = |m: String| Err(Error::InvalidSchedule(m));
    if tasks.is_empty() {
        return bad("no tasks".into());
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(t) = tasks.iter().find(|&&t| !seen.insert(t)) {
        return bad(format!("task {t} listed twice"));
    }
    if budget == 0 {
        return bad("per-task budget must be positive".into());
    }
    let t = tasks.len();
    let (allocation, intro): (Vec<Vec<u64>>, Vec<usize>) = match strategy {
        Strategy::Multitask => (vec![vec![budget; t]], vec![0; t]),
        Strategy::Continual | Strategy::ContinualMultitask => {
            if t > stages {
                return bad(format!("{t} tasks need at least {t} stages, got {stages}"));
            }
            let mut alloc = vec![vec![0; t]; stages];
            for k in 0..t {
                if strategy == Strategy::Continual {
                    alloc[k][k] = budget;
                    continue;
                }
                let later = (stages - 1 - k) as u64;
                let kept = reserve
                    .checked_mul(later)
                    .filter(|&r| r <= budget)
                    .ok_or(Error::InfeasibleReserve {
                        task: tasks[k],
                        budget,
                        reserve,
                        later_stages: later,
                    })?;
                alloc[k][k] = budget - kept;
                for row in alloc.iter_mut().skip(k + 1) {
                    row[k] = reserve;
                }
            }
            (alloc, (0..t).collect())
        }
    };
    Ok(StagePlan {
        strategy,
        tasks: tasks.iter().copied().zip(intro).collect(),
        budget,
        reserve,
        allocation,
    })
}

/// Picks the task with the largest `remaining / initial` ratio in `stage`,
/// lowest task id on ties, and decrements it. `None` once the stage is done.
pub fn next_task(plan: &StagePlan, stage: usize, remaining: &mut [u64]) -> Option<u16> {
    let initial = &plan.allocation[stage];
    let mut best: Option<usize> = None;
    for k in 0..initial.len() {
        if remaining[k] == 0 {
            continue;
        }
        best = Some(match best {
            None => k,
            Some(b) => {
                // remaining[k]/initial[k] vs remaining[b]/initial[b]
                let lhs = remaining[k] as u128 * initial[b] as u128;
                let rhs = remaining[b] as u128 * initial[k] as u128;
                if lhs > rhs || (lhs == rhs && plan.tasks[k].0 < plan.tasks[b].0) {
                    k
                } else {
                    b
                }
            }
        });
    }
    best.map(|k| {
        remaining[k] -= 1;
        plan.tasks[k].0
    })
}

/// Full iteration order of one stage.
pub fn stage_order(plan: &StagePlan, stage: usize) -> Vec<u16> {
    let mut remaining = plan.allocation[stage].clone();
    std::iter::from_fn(|| next_task(plan, stage, &mut remaining)).collect()
}
