//! Trainable parameter storage and the AdamW optimizer with cosine decay.

use super::NnError;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
}

/// Ordered collection of trainable parameters. Registration order is the
/// optimizer's fixed reduction order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, rows: usize, cols: usize, value: Vec<f64>) -> ParamId {
        assert_eq!(value.len(), rows * cols, "param {name} size mismatch");
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate param {name}"
        );
        self.entries.push(ParamEntry {
            name: name.to_string(),
            rows,
            cols,
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        &mut self.entries[id.0].value
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }
}

/// Seeded parameter initializers.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Normal(0, sqrt(2 / (fan_in + fan_out))) weights via Box-Muller.
    pub fn xavier(&mut self, rows: usize, cols: usize) -> Vec<f64> {
        let std = (2.0 / (rows + cols) as f64).sqrt();
        (0..rows * cols).map(|_| std * self.standard_normal()).collect()
    }

    fn standard_normal(&mut self) -> f64 {
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn zeros(&mut self, n: usize) -> Vec<f64> {
        vec![0.0; n]
    }

    pub fn ones(&mut self, n: usize) -> Vec<f64> {
        vec![1.0; n]
    }
}

/// Cosine decay schedule: lr(step) = base * 0.5 * (1 + cos(pi * step / total)).
pub fn cosine_lr(base: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return base;
    }
    let t = (step.min(total_steps) as f64) / total_steps as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Total steps of the cosine schedule.
    pub total_steps: u64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            base_lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            total_steps: 1,
        }
    }
}

/// Decoupled-weight-decay Adam with bias-corrected moments and a cosine
/// learning-rate schedule.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, store: &ParamStore) -> Self {
        let m = store.entries().iter().map(|e| vec![0.0; e.value.len()]).collect();
        let v = store.entries().iter().map(|e| vec![0.0; e.value.len()]).collect();
        Self {
            cfg,
            step: 0,
            m,
            v,
        }
    }

    pub fn current_lr(&self) -> f64 {
        cosine_lr(self.cfg.base_lr, self.step, self.cfg.total_steps)
    }

    /// Applies one update. `grads` must hold one gradient slice per store
    /// entry, in registration order. Non-finite gradients abort loudly.
    pub fn apply(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) -> Result<(), NnError> {
        assert_eq!(grads.len(), store.len(), "gradient count mismatch");
        for (e, g) in store.entries().iter().zip(grads) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    param: e.name.clone(),
                });
            }
        }
        let lr = self.current_lr();
        let t = (self.step + 1) as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);
        for i in 0..store.len() {
            let entry = &mut store.entries[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let g = &grads[i];
            for j in 0..entry.value.len() {
                m[j] = self.cfg.beta1 * m[j] + (1.0 - self.cfg.beta1) * g[j];
                v[j] = self.cfg.beta2 * v[j] + (1.0 - self.cfg.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                entry.value[j] -=
                    lr * (mhat / (vhat.sqrt() + self.cfg.eps) + self.cfg.weight_decay * entry.value[j]);
            }
        }
        self.step += 1;
        Ok(())
    }
}
