//! Trainable-parameter store with Adam/AdamW state.

use std::collections::BTreeMap;

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Adam hyperparameters. `weight_decay` only applies through
/// [`ParamStore::adamw_step`].
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn adam(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> AdamConfig {
        AdamConfig {
            weight_decay,
            ..AdamConfig::adam(lr)
        }
    }
}

struct Param<S: Scalar> {
    value: Tensor<S>,
    grad: Tensor<S>,
    m: Tensor<S>,
    v: Tensor<S>,
}

/// Named parameters plus per-parameter optimizer state and a shared step
/// counter. Iteration order is name order (BTreeMap), so serialization and
/// updates are deterministic.
pub struct ParamStore<S: Scalar> {
    params: BTreeMap<String, Param<S>>,
    step: u64,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> ParamStore<S> {
        ParamStore {
            params: BTreeMap::new(),
            step: 0,
        }
    }

    /// Register a parameter; panics on duplicate names (model construction
    /// bug).
    pub fn insert(&mut self, name: &str, value: Tensor<S>) {
        let shape = value.shape().to_vec();
        let previous = self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: Tensor::zeros(&shape),
                m: Tensor::zeros(&shape),
                v: Tensor::zeros(&shape),
            },
        );
        assert!(previous.is_none(), "duplicate parameter {name:?}");
    }

    pub fn value(&self, name: &str) -> Option<&Tensor<S>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<S>> {
        self.params.get(name).map(|p| &p.grad)
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut Tensor<S> {
        &mut self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .grad
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(S::zero());
        }
    }

    /// Scale all gradients (e.g. 1/batch before a step).
    pub fn scale_grads(&mut self, factor: f64) {
        let f = S::from_f64(factor);
        for p in self.params.values_mut() {
            p.grad.scale_assign(f);
        }
    }

    /// Scale gradients down so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) {
        if max_norm <= 0.0 {
            return;
        }
        let norm = self.grad_norm("");
        if norm > max_norm {
            self.scale_grads(max_norm / norm);
        }
    }

    /// L2 norm over the gradients of parameters whose name starts with
    /// `prefix` (empty prefix: all).
    pub fn grad_norm(&self, prefix: &str) -> f64 {
        self.params
            .iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(_, p)| {
                let n = p.grad.frobenius_norm();
                n * n
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Standard Adam with bias correction.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        self.update(cfg, false);
    }

    /// AdamW: decoupled weight decay applied to the value, then the Adam
    /// update.
    pub fn adamw_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        self.update(cfg, true);
    }

    fn update(&mut self, cfg: &AdamConfig, decoupled_decay: bool) {
        let t = self.step as i32;
        let b1 = S::from_f64(cfg.beta1);
        let b2 = S::from_f64(cfg.beta2);
        let one_minus_b1 = S::from_f64(1.0 - cfg.beta1);
        let one_minus_b2 = S::from_f64(1.0 - cfg.beta2);
        let corr1 = S::from_f64(1.0 - cfg.beta1.powi(t));
        let corr2 = S::from_f64(1.0 - cfg.beta2.powi(t));
        let lr = S::from_f64(cfg.lr);
        let eps = S::from_f64(cfg.eps);
        let decay = S::from_f64(1.0 - cfg.lr * cfg.weight_decay);

        for p in self.params.values_mut() {
            let value = p.value.data_mut();
            let grad = p.grad.data();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + one_minus_b1 * g;
                v[i] = b2 * v[i] + one_minus_b2 * g * g;
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                if decoupled_decay {
                    value[i] = value[i] * decay;
                }
                value[i] = value[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// Copy of all parameter values (for best-epoch snapshots).
    pub fn snapshot(&self) -> BTreeMap<String, Tensor<S>> {
        self.params
            .iter()
            .map(|(name, p)| (name.clone(), p.value.clone()))
            .collect()
    }

    /// Restore parameter values from a snapshot (optimizer state is kept).
    pub fn restore(&mut self, snapshot: &BTreeMap<String, Tensor<S>>) {
        for (name, value) in snapshot {
            let p = self
                .params
                .get_mut(name)
                .unwrap_or_else(|| panic!("snapshot has unknown parameter {name:?}"));
            p.value = value.clone();
        }
    }

    /// Build a store directly from named values (checkpoint load).
    pub fn from_values(values: BTreeMap<String, Tensor<S>>) -> ParamStore<S> {
        let mut store = ParamStore::new();
        for (name, value) in values {
            store.insert(&name, value);
        }
        store
    }
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        ParamStore::new()
    }
}
