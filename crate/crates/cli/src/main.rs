use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stagewise::corpus::TaskKind;
use stagewise::harness::{self, RunConfig};
use stagewise::scheduler::Strategy;

#[derive(Parser)]
#[command(
    name = "stagewise",
    version,
    about = "Continual multi-task pre-training at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Directory written by `gen-data`; overrides every data path.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus, pair files and a fine-tuning split.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Destination directory.
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Pre-train under the configured (or overridden) strategy.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Continue from a stage checkpoint of the same run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fine-tune a checkpoint on the configured classification task.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Defaults to the run's last stage checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Start from freshly initialized parameters instead.
        #[arg(long)]
        random_init: bool,
    },
    /// Held-out accuracy of a checkpoint on every scheduled task.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run all three strategies over the configured seeds and report.
    CompareStrategies {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> stagewise::Result<RunConfig> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
        config.compare.seeds = vec![s];
    }
    if let Some(o) = &common.output_dir {
        config.output_dir = o.clone();
    }
    if let Some(d) = &common.data_dir {
        config.use_synthetic_dir(d);
    }
    Ok(config)
}

fn task_name(t: u16) -> &'static str {
    TaskKind::from_id(t).map_or("?", TaskKind::name)
}

fn run(cli: Cli) -> stagewise::Result<()> {
    match cli.command {
        Command::GenData { common, out } => {
            let config = load(&common)?;
            let files = harness::gen_synthetic_corpus(&config.synth, config.seed, &out)?;
            println!("corpus           {}", files.corpus.display());
            println!("ir pairs         {}", files.ir_pairs.display());
            println!("discourse pairs  {}", files.discourse_pairs.display());
            println!("fine-tune train  {}", files.finetune_train.display());
            println!("fine-tune test   {}", files.finetune_test.display());
        }
        Command::Pretrain {
            common,
            strategy,
            resume,
        } => {
            let mut config = load(&common)?;
            if let Some(s) = strategy {
                config.schedule.strategy = s;
            }
            let out = harness::pretrain(&config, resume.as_deref())?;
            println!(
                "{} iterations over {} stages ({})",
                out.trace.len(),
                out.plan.stage_count(),
                out.plan.strategy
            );
            let last = out.metrics.iter().map(|m| m.stage).max();
            for m in out.metrics.iter().filter(|m| Some(m.stage) == last) {
                println!(
                    "{:<26} {:<22} {:.3} (chance {:.3})",
                    task_name(m.task_id),
                    m.metric,
                    m.value,
                    out.chance.get(&m.task_id).copied().unwrap_or(f64::NAN)
                );
            }
            println!("logs in {}", config.output_dir.display());
        }
        Command::Finetune {
            common,
            checkpoint,
            random_init,
        } => {
            let config = load(&common)?;
            let r = harness::finetune(&config, checkpoint.as_deref(), random_init)?;
            println!(
                "{}: accuracy {:.3} (chance {:.3}) after {} steps",
                r.task, r.accuracy, r.chance, r.steps
            );
        }
        Command::Eval { common, checkpoint } => {
            let config = load(&common)?;
            for (t, v) in harness::eval(&config, checkpoint.as_deref())? {
                println!("{:<26} {v:.4}", task_name(t));
            }
        }
        Command::CompareStrategies { common } => {
            let config = load(&common)?;
            let out = config.output_dir.join("compare");
            let report = harness::compare_strategies(&config, Some(&out))?;
            print!("{}", report.table());
            println!("report in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
