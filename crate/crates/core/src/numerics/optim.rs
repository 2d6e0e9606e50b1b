use serde::{Deserialize, Serialize};

use super::{Gradients, ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Inverse-square-root decay with linear warmup, normalized so the peak at
/// `step == warmup` equals `peak_lr`:
///
/// `lr(step) = peak_lr * min(step / warmup, sqrt(warmup / step))`
pub fn noam_lr(step: u64, warmup: u64, peak_lr: f64) -> Result<f64> {
    if step == 0 {
        return Err(Error::ZeroStep);
    }
    let warmup = warmup.max(1) as f64;
    let s = step as f64;
    Ok(peak_lr * (s / warmup).min((warmup / s).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub peak_lr: f64,
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-8,
            peak_lr: 5e-5,
            warmup_steps: 4000,
        }
    }
}

/// Adam with bias correction, learning rate drawn from [`noam_lr`].
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Option<Tensor<T>>>,
    second: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate the next call to [`Adam::step`] will use.
    pub fn next_lr(&self) -> f64 {
        noam_lr(self.step + 1, self.config.warmup_steps, self.config.peak_lr).expect("step + 1 is positive")
    }

    /// Clears moments and the step counter.
    pub fn reset(&mut self) {
        self.step = 0;
        self.first.clear();
        self.second.clear();
    }

    /// Applies one update to every parameter in `params`; parameters with no
    /// entry in `grads` see a zero gradient. Returns the learning rate used.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<f64> {
        for (id, g) in grads.iter() {
            let p = params
                .get(id)
                .ok_or_else(|| Error::InvalidTensor(format!("gradient for unknown param {}", id.0)))?;
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let lr = noam_lr(self.step, self.config.warmup_steps, self.config.peak_lr)?;
        let t = self.step as i32;
        let c = &self.config;
        let b1 = T::of(c.beta1);
        let b2 = T::of(c.beta2);
        let one_m_b1 = T::of(1.0 - c.beta1);
        let one_m_b2 = T::of(1.0 - c.beta2);
        let bc1 = T::of(1.0 - c.beta1.powi(t));
        let bc2 = T::of(1.0 - c.beta2.powi(t));
        let lr_t = T::of(lr);
        let eps = T::of(c.epsilon);

        let n = params.len();
        self.first.resize(n, None);
        self.second.resize(n, None);
        for i in 0..n {
            let id = ParamId(i);
            let param = params.get_mut(id).expect("index below len");
            let shape = param.shape().to_vec();
            let m = self.first[i].get_or_insert_with(|| Tensor::zeros(&shape));
            let v = self.second[i].get_or_insert_with(|| Tensor::zeros(&shape));
            if m.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: shape,
                    right: m.shape().to_vec(),
                });
            }
            let grad = grads.get(id).map(|g| g.data());
            let pd = param.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for k in 0..pd.len() {
                let gk = grad.map_or(T::zero(), |g| g[k]);
                md[k] = b1 * md[k] + one_m_b1 * gk;
                vd[k] = b2 * vd[k] + one_m_b2 * gk * gk;
                let mhat = md[k] / bc1;
                let vhat = vd[k] / bc2;
                pd[k] -= lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(lr)
    }

    /// Moment tensors for checkpointing, `None` until the first step.
    pub fn moments(&self, id: ParamId) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match (self.first.get(id.0), self.second.get(id.0)) {
            (Some(Some(m)), Some(Some(v))) => Some((m, v)),
            _ => None,
        }
    }

    pub fn restore(&mut self, step: u64, moments: Vec<Option<(Tensor<T>, Tensor<T>)>>) {
        self.step = step;
        self.first.clear();
        self.second.clear();
        for mv in moments {
            match mv {
                Some((m, v)) => {
                    self.first.push(Some(m));
                    self.second.push(Some(v));
                }
                None => {
                    self.first.push(None);
                    self.second.push(None);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noam_anchor_points() {
        let peak = 5e-5;
        assert_eq!(noam_lr(4000, 4000, peak).unwrap(), peak);
        assert_eq!(noam_lr(1000, 4000, peak).unwrap(), peak / 4.0);
        assert_eq!(noam_lr(16000, 4000, peak).unwrap(), peak / 2.0);
        assert!(matches!(noam_lr(0, 4000, peak), Err(Error::ZeroStep)));
    }

    #[test]
    fn noam_argmax_is_warmup() {
        let warmup = 400;
        let best = (1..=10 * warmup)
            .max_by(|&a, &b| {
                noam_lr(a, warmup, 1.0)
                    .unwrap()
                    .partial_cmp(&noam_lr(b, warmup, 1.0).unwrap())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(best, warmup);
    }

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        for (i, &v) in values.iter().enumerate() {
            s.insert(&format!("p{i}"), Tensor::scalar(v)).unwrap();
        }
        s
    }

    fn grads_for(values: &[f64]) -> Gradients<f64> {
        let mut g = crate::numerics::Graph::new();
        let mut loss = None;
        for (i, &v) in values.iter().enumerate() {
            let p = g.param(ParamId(i), &Tensor::scalar(1.0)).unwrap();
            let term = g.scale(p, v).unwrap();
            loss = Some(match loss {
                None => term,
                Some(acc) => g.add(acc, term).unwrap(),
            });
        }
        g.backward(loss.unwrap()).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = store(&[0.5, -1.5]);
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::default());
        let zero = grads_for(&[0.0, 0.0]);
        for _ in 0..10 {
            adam.step(&mut params, &zero).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_moves_by_lr_over_one_plus_eps() {
        let config = AdamConfig {
            peak_lr: 0.1,
            warmup_steps: 1,
            ..AdamConfig::default()
        };
        let mut params = store(&[0.0]);
        let mut adam = Adam::new(config);
        let lr = adam.step(&mut params, &grads_for(&[1.0])).unwrap();
        let expect = -lr / (1.0 + config.epsilon);
        assert!((params.get(ParamId(0)).unwrap().item() - expect).abs() < 1e-15);
    }

    #[test]
    fn identical_gradients_give_identical_updates() {
        let mut params = store(&[0.25, 0.25]);
        let mut adam = Adam::new(AdamConfig {
            peak_lr: 0.01,
            warmup_steps: 3,
            ..AdamConfig::default()
        });
        for k in 0..7 {
            adam.step(&mut params, &grads_for(&[0.3 * k as f64, 0.3 * k as f64]))
                .unwrap();
        }
        let a = params.get(ParamId(0)).unwrap().item();
        let b = params.get(ParamId(1)).unwrap().item();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
