mod common;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stagewise::model::{load_checkpoint, Model, ModelConfig};
use stagewise::numerics::AdamConfig;
use stagewise::scheduler::{build_schedule, stage_order, DataStream, Plateau, Strategy, Trainer, TrainerOptions};
use stagewise::Trainer64;

fn streams(model: &ModelConfig) -> BTreeMap<u16, DataStream> {
    model
        .output_heads
        .iter()
        .filter_map(|h| h.task_id.map(|t| (t, h)))
        .filter(|(t, _)| [1u16, 3, 4].contains(t))
        .map(|(t, h)| {
            let insts = (0..4).flat_map(|s| common::head_batch(h, 24, s)).collect();
            (t, DataStream::new(t, insts, 5).unwrap())
        })
        .collect()
}

fn trainer(dir: Option<&std::path::Path>) -> Trainer64 {
    let config = common::all_heads_config(24);
    let model = Model::new(config.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let options = TrainerOptions {
        batch_size: 2,
        checkpoint_dir: dir.map(|d| d.to_path_buf()),
        ..TrainerOptions::default()
    };
    let adam = AdamConfig {
        peak_lr: 1e-3,
        warmup_steps: 5,
        ..AdamConfig::default()
    };
    Trainer::new(model, adam, streams(&config), options, 5)
}

#[test]
fn resume_reproduces_remaining_trace_in_f64() {
    let dir = tempfile::tempdir().unwrap();
    let plan = build_schedule(&[1, 3, 4], 9, 3, Strategy::ContinualMultitask, 2).unwrap();
    let mut full = trainer(Some(dir.path()));
    let rows = full.run_plan(&plan).unwrap();
    assert_eq!(rows.len(), 27);

    let ck = load_checkpoint::<f64>(dir.path().join("stage-0.ckpt")).unwrap();
    let config = ck.model.config().clone();
    let adam = full.adam.config;
    let options = TrainerOptions {
        batch_size: 2,
        ..TrainerOptions::default()
    };
    let mut resumed = Trainer::resume(ck, adam, streams(&config), options);
    assert_eq!(resumed.stages_done(), 1);
    let rest = resumed.run_plan(&plan).unwrap();
    let expected: Vec<_> = rows.iter().filter(|r| r.stage > 0).cloned().collect();
    assert_eq!(rest, expected);
    assert!(resumed.model.params().bitwise_eq(full.model.params()));
}

#[test]
fn trace_follows_stage_order() {
    let plan = build_schedule(&[1, 3, 4], 9, 3, Strategy::ContinualMultitask, 2).unwrap();
    let rows = trainer(None).run_plan(&plan).unwrap();
    for stage in 0..3 {
        let got: Vec<u16> = rows.iter().filter(|r| r.stage == stage).map(|r| r.task_id).collect();
        assert_eq!(got, stage_order(&plan, stage));
    }
    assert!(rows.windows(2).all(|w| w[1].global_step == w[0].global_step + 1));
    assert!(rows.iter().all(|r| r.loss.is_finite() && r.lr > 0.0));
}

#[test]
fn optimizer_reset_restarts_warmup_each_stage() {
    let plan = build_schedule(&[1, 3, 4], 6, 3, Strategy::Continual, 0).unwrap();
    let mut t = trainer(None);
    t.options.reset_optimizer = true;
    let rows = t.run_plan(&plan).unwrap();
    let firsts: Vec<f64> = (0..3).map(|s| rows.iter().find(|r| r.stage == s).unwrap().lr).collect();
    assert!(firsts.iter().all(|&lr| lr == firsts[0]));
}

#[test]
fn plateau_stops_a_stage_early() {
    let plan = build_schedule(&[1, 3, 4], 40, 3, Strategy::Continual, 0).unwrap();
    let mut t = trainer(None);
    t.options.plateau = Some(Plateau {
        window: 2,
        min_rel_improvement: 10.0,
    });
    let rows = t.run_plan(&plan).unwrap();
    assert_eq!(rows.len(), 12);
}
