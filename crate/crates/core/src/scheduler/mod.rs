//! Stage planning and the training loop for the three pre-training regimes.

mod eval;
mod plan;
mod runner;
mod stream;

pub use eval::{evaluate_all_tasks, majority_baseline, metric_name, task_accuracy, MetricRow};
pub use plan::{build_schedule, next_task, stage_order, StagePlan, Strategy};
pub use runner::{run_stage, run_stage_with, DryRun, Plateau, StageExecutor, TraceRow, Trainer, TrainerOptions};
pub use stream::DataStream;
