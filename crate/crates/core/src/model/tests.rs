use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{TaskInstance, TaskKind};
use crate::error::Error;
use crate::numerics::{Adam, AdamConfig, Graph, Tensor};

fn tiny_config() -> ModelConfig {
    let mut c = ModelConfig::desk(20);
    c.layers = 2;
    c.heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.max_seq_len = 16;
    c.with_task_head(TaskKind::KnowledgeMasking, 20)
        .with_task_head(TaskKind::Capitalization, 2)
        .with_task_head(TaskKind::SentenceDistance, 3)
}

fn model(seed: u64) -> Model<f64> {
    Model::new(tiny_config(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn sentence_instance(task: u16, label: u32) -> TaskInstance {
    let mut inst = TaskInstance::from_segments(task, &[&[5, 6, 7], &[8, 9]]);
    inst.sentence_label = Some(label);
    inst
}

fn capital_instance() -> TaskInstance {
    let mut inst = TaskInstance::from_segments(1, &[&[5, 6, 7, 8]]);
    let labels = vec![None, Some(1), Some(0), Some(0), Some(1), None];
    inst.loss_mask = labels.iter().map(Option::is_some).collect();
    inst.token_labels.insert(1, labels);
    inst
}

fn sentence_logits(m: &Model<f64>, inst: &TaskInstance) -> Vec<f64> {
    let mut g = Graph::new();
    let enc = m.forward(&mut g, inst).unwrap();
    let l = m.head_logits(&mut g, "sentence_distance", enc.hidden, &[0]).unwrap();
    g.value(l).data().to_vec()
}

#[test]
fn sentence_head_reads_only_cls() {
    let m = model(1);
    let inst = sentence_instance(4, 0);
    let mut g = Graph::new();
    let enc = m.forward(&mut g, &inst).unwrap();
    let full = m.head_logits(&mut g, "sentence_distance", enc.hidden, &[0]).unwrap();
    let cls_only = g.mask_rows(enc.hidden, 1).unwrap();
    let masked = m.head_logits(&mut g, "sentence_distance", cls_only, &[0]).unwrap();
    assert!(g.value(full).bitwise_eq(g.value(masked)));
}

#[test]
fn task_id_changes_output() {
    let m = model(2);
    let a = sentence_logits(&m, &sentence_instance(4, 0));
    let b = sentence_logits(&m, &sentence_instance(3, 0));
    assert_ne!(a, b);
}

#[test]
fn forward_is_deterministic() {
    let m = model(3);
    let inst = sentence_instance(4, 1);
    assert_eq!(sentence_logits(&m, &inst), sentence_logits(&m, &inst));
    assert_eq!(sentence_logits(&model(3), &inst), sentence_logits(&m, &inst));
}

#[test]
fn padding_does_not_leak() {
    let m = model(4);
    let inst = sentence_instance(4, 1);
    let mut padded = inst.clone();
    padded.pad_to(12);
    let mut g = Graph::new();
    let a = m.forward(&mut g, &inst).unwrap().hidden;
    let b = m.forward(&mut g, &padded).unwrap().hidden;
    let (n, d) = g.value(a).dims2();
    for r in 0..n {
        for c in 0..d {
            let x = g.value(a).row(r)[c];
            let y = g.value(b).row(r)[c];
            assert!((x - y).abs() < 1e-12, "row {r} col {c}: {x} vs {y}");
        }
    }
    let probs = &m.forward(&mut g, &padded).unwrap().attention[0][0];
    let p = g.value(*probs);
    for r in 0..p.dims2().0 {
        assert!(p.row(r)[inst.len()..].iter().all(|&x| x == 0.0));
    }
}

#[test]
fn single_token_attends_to_itself() {
    let m = model(5);
    let mut inst = TaskInstance::from_segments(4, &[]);
    inst.sentence_label = Some(0);
    inst.attention_length = 1;
    let mut g = Graph::new();
    let enc = m.forward(&mut g, &inst).unwrap();
    for layer in &enc.attention {
        for &h in layer {
            assert_eq!(g.value(h).data(), &[1.0]);
        }
    }
}

#[test]
fn real_token_change_changes_output() {
    let m = model(6);
    let a = sentence_logits(&m, &sentence_instance(4, 0));
    let mut inst = sentence_instance(4, 0);
    inst.token_ids[2] = 11;
    assert_ne!(a, sentence_logits(&m, &inst));
}

#[test]
fn out_of_range_id_names_table() {
    let m = model(7);
    let mut inst = sentence_instance(4, 0);
    inst.segment_ids[1] = 9;
    let mut g = Graph::new();
    match m.forward(&mut g, &inst) {
        Err(Error::IndexOutOfRange { table, .. }) => assert_eq!(table, "emb.segment"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn uniform_logits_give_log_arity() {
    let mut m = model(8);
    let id = m.params().id("head.sentence_distance.out.w").unwrap();
    let t = m.params_mut().get_mut(id).unwrap();
    t.data_mut().iter_mut().for_each(|x| *x = 0.0);
    let mut g = Graph::new();
    let inst = sentence_instance(4, 2);
    let enc = m.forward(&mut g, &inst).unwrap();
    let l = m.task_loss(&mut g, &inst, enc.hidden).unwrap();
    assert!((g.value(l).item() - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn token_loss_with_one_position_is_plain_cross_entropy() {
    let m = model(9);
    let mut inst = capital_instance();
    for (i, l) in inst.token_labels.get_mut(&1).unwrap().iter_mut().enumerate() {
        if i != 2 {
            *l = None;
        }
    }
    inst.loss_mask = (0..inst.len()).map(|i| i == 2).collect();
    let mut g = Graph::new();
    let enc = m.forward(&mut g, &inst).unwrap();
    let loss = m.task_loss(&mut g, &inst, enc.hidden).unwrap();
    let logits = m.head_logits(&mut g, "capitalization", enc.hidden, &[2]).unwrap();
    let row = g.value(logits).data().to_vec();
    let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
    assert!((g.value(loss).item() - (lse - row[0])).abs() < 1e-12);
}

#[test]
fn empty_token_mask_is_an_error() {
    let m = model(10);
    let mut inst = capital_instance();
    inst.loss_mask.iter_mut().for_each(|b| *b = false);
    let mut g = Graph::new();
    let enc = m.forward(&mut g, &inst).unwrap();
    assert!(matches!(
        m.task_loss(&mut g, &inst, enc.hidden),
        Err(Error::EmptyLossMask(_))
    ));
}

#[test]
fn combined_loss_adds_and_weights() {
    let m = model(11);
    let mut inst = capital_instance();
    let cap = inst.token_labels[&1].clone();
    let masked: Vec<Option<u32>> = cap.iter().enumerate().map(|(i, l)| l.map(|_| 5 + i as u32)).collect();
    inst.token_labels.insert(0, masked);
    let batch = [inst];

    let mut g = Graph::new();
    let single = m.combined_loss(&mut g, &batch, &[("capitalization", 1.0)]).unwrap();
    let km = m.combined_loss(&mut g, &batch, &[("knowledge_masking", 1.0)]).unwrap();
    let both = m
        .combined_loss(&mut g, &batch, &[("capitalization", 1.0), ("knowledge_masking", 1.0)])
        .unwrap();
    let own = m.batch_loss(&mut g, &batch).unwrap();
    let (s, k, b) = (g.value(single).item(), g.value(km).item(), g.value(both).item());
    assert_eq!(s, g.value(own).item());
    assert!((b - (s + k)).abs() < 1e-12);

    let half = m
        .combined_loss(&mut g, &batch, &[("capitalization", 0.5), ("capitalization_copy", 0.5)])
        .map(|_| ());
    assert!(matches!(half, Err(Error::UnknownHead(_))));
    let halves = m.combined_loss(&mut g, &batch, &[("capitalization", 0.5)]).unwrap();
    assert!((2.0 * g.value(halves).item() - s).abs() < 1e-12);
}

#[test]
fn two_sentence_heads_are_rejected() {
    let mut m = model(12);
    m.add_head(
        HeadSpec::for_task(TaskKind::IrRelevance, 3),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    let batch = [sentence_instance(4, 0)];
    let mut g = Graph::new();
    assert!(matches!(
        m.combined_loss(&mut g, &batch, &[("sentence_distance", 1.0), ("ir_relevance", 1.0)]),
        Err(Error::MultipleSentenceHeads(..))
    ));
}

#[test]
fn overfits_small_set() {
    let mut m: Model<f64> = model(13);
    let batch: Vec<TaskInstance> = (0..4)
        .map(|i| {
            let mut inst = TaskInstance::from_segments(4, &[&[5 + i, 6], &[9, 10 + i]]);
            inst.sentence_label = Some(i % 3);
            inst
        })
        .collect();
    let mut adam = Adam::new(AdamConfig {
        peak_lr: 1e-2,
        warmup_steps: 5,
        ..AdamConfig::default()
    });
    let loss_at = |m: &Model<f64>| {
        let mut g = Graph::new();
        let l = m.batch_loss(&mut g, &batch).unwrap();
        g.value(l).item()
    };
    let before = loss_at(&m);
    for _ in 0..50 {
        let mut g = Graph::new();
        let l = m.batch_loss(&mut g, &batch).unwrap();
        let grads = g.backward(l).unwrap();
        adam.step(m.params_mut(), &grads).unwrap();
    }
    assert!(loss_at(&m) < 0.5 * before);
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let m: Model<f32> = model(14).cast();
    let mut adam = Adam::new(AdamConfig::default());
    let mut g = Graph::new();
    let inst = sentence_instance(4, 1);
    let enc = m.forward(&mut g, &inst).unwrap();
    let l = m.task_loss(&mut g, &inst, enc.hidden).unwrap();
    let grads = g.backward(l).unwrap();
    let mut m = m;
    adam.step(m.params_mut(), &grads).unwrap();

    let meta = CheckpointMeta {
        stage: 2,
        completed: [(0, 10), (4, 7)].into_iter().collect(),
        global_step: 17,
        adam_step: 0,
        seed: 3,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    save_checkpoint(&path, &m, Some(&adam), &meta).unwrap();
    let ck = load_checkpoint::<f32>(&path).unwrap();
    assert!(ck.model.params().bitwise_eq(m.params()));
    assert_eq!(ck.model.config(), m.config());
    assert_eq!(ck.meta.completed, meta.completed);
    assert_eq!(ck.meta.adam_step, 1);
    let mut restored = Adam::new(AdamConfig::default());
    ck.restore_optimizer(&mut restored);
    for (id, _, _) in m.params().iter() {
        let (a, b) = (adam.moments(id).unwrap(), restored.moments(id).unwrap());
        assert!(a.0.bitwise_eq(b.0) && a.1.bitwise_eq(b.1));
    }
    let again = checkpoint_bytes(&ck.model, Some(&restored), &ck.meta).unwrap();
    assert_eq!(again, std::fs::read(&path).unwrap());
}

#[test]
fn checkpoint_errors_are_structured() {
    let m: Model<f32> = model(15).cast();
    let bytes = checkpoint_bytes(&m, None, &CheckpointMeta::default()).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(parse_checkpoint::<f32>(&bad), Err(Error::Checkpoint(_))));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(parse_checkpoint::<f32>(&bad), Err(Error::Checkpoint(_))));
    assert!(matches!(
        parse_checkpoint::<f32>(&bytes[..bytes.len() - 3]),
        Err(Error::Checkpoint(_))
    ));
    assert!(matches!(parse_checkpoint::<f64>(&bytes), Err(Error::Checkpoint(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    std::fs::write(&path, &bytes).unwrap();
    let mut other = m.config().clone();
    other.d_model = 16;
    match load_checkpoint_for::<f32>(&path, &other) {
        Err(Error::ConfigMismatch(msg)) => assert!(msg.contains("d_model")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn wrong_tensor_shape_is_rejected() {
    let m = model(16);
    let (config, mut params) = m.into_parts();
    let id = params.id("emb.task").unwrap();
    *params.get_mut(id).unwrap() = Tensor::zeros(&[3, 8]);
    assert!(matches!(
        Model::from_params(config, params),
        Err(Error::ConfigMismatch(_))
    ));
}
