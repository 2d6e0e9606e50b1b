mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stagewise::numerics::{noam_lr, Adam, AdamConfig, Graph, NodeId, ParamStore, Tensor};
use stagewise::{Graph64, Tensor64};

/// Ten Adam steps on `sum(x * x)` against a hand-rolled scalar loop.
#[test]
#[allow(clippy::needless_range_loop)]
fn adam_matches_scalar_oracle() {
    let config = AdamConfig {
        peak_lr: 0.1,
        warmup_steps: 3,
        ..AdamConfig::default()
    };
    let start = [1.5, -0.5, 0.25];
    let mut store = ParamStore::new();
    let id = store.insert("x", Tensor64::vector(start.to_vec()).unwrap()).unwrap();
    let mut adam = Adam::new(config);

    let mut x = start;
    let (mut m, mut v) = ([0.0f64; 3], [0.0f64; 3]);
    for step in 1..=10u64 {
        let mut g = Graph64::new();
        let p = g.param(id, store.get(id).unwrap()).unwrap();
        let sq = g.mul(p, p).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        let used = adam.step(&mut store, &grads).unwrap();

        let w = 3.0f64;
        let s = step as f64;
        let lr = 0.1 * (s / w).min((w / s).sqrt());
        assert_eq!(used, lr);
        for k in 0..3 {
            let grad = 2.0 * x[k];
            m[k] = 0.9 * m[k] + 0.1 * grad;
            v[k] = 0.98 * v[k] + 0.02 * grad * grad;
            let mhat = m[k] / (1.0 - 0.9f64.powi(step as i32));
            let vhat = v[k] / (1.0 - 0.98f64.powi(step as i32));
            x[k] -= lr * mhat / (vhat.sqrt() + 1e-8);
        }
        for k in 0..3 {
            let got = store.get(id).unwrap().data()[k];
            assert!((got - x[k]).abs() < 1e-12, "step {step} coord {k}: {got} vs {}", x[k]);
        }
    }
    assert_eq!(adam.step_count(), 10);
}

#[test]
fn adam_frozen_parameters_see_zero_gradient() {
    let mut store = ParamStore::new();
    let a = store.insert("a", Tensor64::scalar(1.0)).unwrap();
    let b = store.insert("b", Tensor64::scalar(2.0)).unwrap();
    let mut g = Graph64::new();
    let pa = g.param(a, store.get(a).unwrap()).unwrap();
    let loss = g.sum(pa).unwrap();
    let grads = g.backward(loss).unwrap();
    Adam::new(AdamConfig::default()).step(&mut store, &grads).unwrap();
    assert_eq!(store.get(b).unwrap().item(), 2.0);
    assert!(store.get(a).unwrap().item() < 1.0);
}

#[test]
fn noam_rejects_step_zero() {
    assert!(noam_lr(0, 10, 1.0).is_err());
    assert_eq!(noam_lr(10, 10, 0.5).unwrap(), 0.5);
    assert_eq!(noam_lr(40, 10, 1.0).unwrap(), 0.5);
}

/// Central differences of a scalar-valued graph over every input element.
fn fd_check(inputs: &[Tensor64], build: impl Fn(&mut Graph64, &[NodeId]) -> NodeId) {
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.insert(&format!("in{i}"), t.clone()).unwrap())
        .collect();
    let eval = |store: &ParamStore<f64>| {
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = ids
            .iter()
            .map(|&id| g.param(id, store.get(id).unwrap()).unwrap())
            .collect();
        let out = build(&mut g, &nodes);
        (g, out)
    };
    let (g, out) = eval(&store);
    let grads = g.backward(out).unwrap();
    let eps = 1e-5;
    for &id in &ids {
        let n = store.get(id).unwrap().numel();
        for k in 0..n {
            let orig = store.get(id).unwrap().data()[k];
            store.get_mut(id).unwrap().data_mut()[k] = orig + eps;
            let (g1, o1) = eval(&store);
            store.get_mut(id).unwrap().data_mut()[k] = orig - eps;
            let (g2, o2) = eval(&store);
            store.get_mut(id).unwrap().data_mut()[k] = orig;
            let numeric = (g1.value(o1).item() - g2.value(o2).item()) / (2.0 * eps);
            let analytic = grads.get(id).map_or(0.0, |t| t.data()[k]);
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic - numeric).abs() / scale < 1e-5,
                "{} [{k}]: analytic {analytic} numeric {numeric}",
                store.name(id)
            );
        }
    }
}

fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Tensor64 {
    Tensor::uniform(&[rows, cols], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn matmul_and_bias_gradients() {
    let bias = Tensor::vector(vec![0.3, -0.6]).unwrap();
    fd_check(&[rand_matrix(3, 4, 1), rand_matrix(4, 2, 2), bias], |g, n| {
        let y = g.matmul(n[0], n[1]).unwrap();
        let y = g.add_row(y, n[2]).unwrap();
        let y = g.tanh(y).unwrap();
        g.sum(y).unwrap()
    });
}

#[test]
fn attention_style_gradients() {
    fd_check(
        &[rand_matrix(4, 3, 4), rand_matrix(4, 3, 5), rand_matrix(4, 3, 6)],
        |g, n| {
            let scores = g.matmul_bt(n[0], n[1]).unwrap();
            let probs = g.masked_softmax(scores, 3).unwrap();
            let ctx = g.matmul(probs, n[2]).unwrap();
            let w = g.mul(ctx, n[0]).unwrap();
            g.sum(w).unwrap()
        },
    );
}

#[test]
fn layer_norm_and_gelu_gradients() {
    let gamma = Tensor::vector(vec![1.2, 0.7, -0.4, 1.0]).unwrap();
    let beta = Tensor::vector(vec![0.1, -0.2, 0.3, 0.0]).unwrap();
    fd_check(&[rand_matrix(3, 4, 7), gamma, beta, rand_matrix(3, 4, 8)], |g, n| {
        let y = g.layer_norm(n[0], n[1], n[2]).unwrap();
        let y = g.gelu(y).unwrap();
        let y = g.mul(y, n[3]).unwrap();
        g.sum(y).unwrap()
    });
}

#[test]
fn slicing_concat_and_cross_entropy_gradients() {
    fd_check(&[rand_matrix(4, 6, 9), rand_matrix(5, 3, 10)], |g, n| {
        let left = g.slice_cols(n[0], 0, 3).unwrap();
        let right = g.slice_cols(n[0], 3, 3).unwrap();
        let emb = g.embedding(n[1], &[4, 0, 2, 2], "table").unwrap();
        let mixed = g.add(right, emb).unwrap();
        let joined = g.concat_cols(&[left, mixed]).unwrap();
        let kept = g.mask_rows(joined, 3).unwrap();
        let logits = g.scale(kept, 0.5).unwrap();
        let soft = g.softmax(logits).unwrap();
        let picked = g.gather_rows(soft, &[1]).unwrap();
        let ce = g.cross_entropy(logits, &[0, 5, 2, 1]).unwrap();
        let extra = g.sum(picked).unwrap();
        g.add(ce, extra).unwrap()
    });
}

#[test]
fn f32_and_f64_models_agree() {
    let model = common::gradcheck_model(4);
    let narrow = model.cast::<f32>();
    let head = &model.config().output_heads[3];
    let batch = common::head_batch(head, 24, 2);
    let wide = common::head_loss_value(&model, &head.name, &batch).0;
    let mut g = Graph::<f32>::new();
    let l = narrow.combined_loss(&mut g, &batch, &[(&head.name, 1.0)]).unwrap();
    let narrow_loss = g.value(l).item() as f64;
    assert!((wide - narrow_loss).abs() < 1e-4 * wide.abs().max(1.0));
}
