use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// A named learnable array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Whether decoupled weight decay applies. False for biases and
    /// layer-norm parameters.
    pub decay: bool,
}

/// Ordered collection of named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, decay: bool) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, value, decay });
        self.params.len() - 1
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay_rate: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64, epsilon: f64, weight_decay_rate: f64) -> Self {
        let zeros = || params.params().iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Self {
            step: 0,
            beta1,
            beta2,
            epsilon,
            weight_decay_rate,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update with decoupled weight decay.
///
/// `grads[i]` belongs to `params.params()[i]`. Nothing is modified when a
/// gradient is non-finite.
pub fn adam_step(params: &mut ParamStore, grads: &[Vec<f64>], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape("adam_step", &[params.len()], &[grads.len(), state.m.len()]));
    }
    if !(lr >= 0.0) {
        return Err(Error::Config(format!("learning rate {lr} must be non-negative")));
    }
    for (p, g) in params.params().iter().zip(grads) {
        if g.len() != p.value.numel() {
            return Err(Error::shape("adam_step", p.value.shape(), &[g.len()]));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                name: p.name.clone(),
                step: state.step,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps, wd) = (state.beta1, state.beta2, state.epsilon, state.weight_decay_rate);
    for (((p, g), m), v) in params
        .params_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let decay = if p.decay { wd } else { 0.0 };
        for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
            *w -= lr * (update + decay * *w);
        }
    }
    Ok(())
}

/// Rescales gradients in place so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// Linear warmup to `peak_lr`, then linear decay to zero at `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

pub fn lr_at(schedule: &LrSchedule, step: u64) -> f64 {
    let LrSchedule {
        peak_lr,
        warmup_steps,
        total_steps,
    } = *schedule;
    if step < warmup_steps {
        peak_lr * step as f64 / warmup_steps as f64
    } else if step >= total_steps {
        0.0
    } else if total_steps == warmup_steps {
        peak_lr
    } else {
        peak_lr * (total_steps - step) as f64 / (total_steps - warmup_steps) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>, decay: bool) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(values), decay);
        s
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = store(vec![0.3, -1.2], true);
        let mut st = AdamState::new(&p, 0.9, 0.999, 1e-6, 0.0);
        adam_step(&mut p, &[vec![0.0, 0.0]], &mut st, 1e-3).unwrap();
        assert_eq!(p.params()[0].value.data(), &[0.3, -1.2]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(vec![0.0], false);
        let mut st = AdamState::new(&p, 0.9, 0.999, 1e-6, 0.0);
        adam_step(&mut p, &[vec![1.0]], &mut st, 1e-3).unwrap();
        let w = p.params()[0].value.data()[0];
        assert!((w + 1e-3).abs() < 1e-8, "{w}");
    }

    #[test]
    fn decay_skips_flagged_params() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![1.0]), true);
        s.insert("b", Tensor::vector(vec![1.0]), false);
        let mut st = AdamState::new(&s, 0.9, 0.999, 1e-6, 0.1);
        adam_step(&mut s, &[vec![0.0], vec![0.0]], &mut st, 0.5).unwrap();
        assert!((s.params()[0].value.data()[0] - 0.95).abs() < 1e-12);
        assert_eq!(s.params()[1].value.data()[0], 1.0);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = store(vec![1.0], true);
        let mut st = AdamState::new(&p, 0.9, 0.999, 1e-6, 0.0);
        match adam_step(&mut p, &[vec![f64::NAN]], &mut st, 1e-3) {
            Err(Error::Divergence { name, .. }) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.step, 0);
        assert_eq!(p.params()[0].value.data(), &[1.0]);
    }

    #[test]
    fn quadratic_bowl_descends() {
        let mut p = store(vec![3.0, -2.0, 0.5], true);
        let mut st = AdamState::new(&p, 0.9, 0.999, 1e-6, 0.0);
        let loss = |p: &ParamStore| p.params()[0].value.data().iter().map(|w| w * w).sum::<f64>();
        let mut prev = loss(&p);
        for _ in 0..10 {
            let g: Vec<f64> = p.params()[0].value.data().iter().map(|w| 2.0 * w).collect();
            adam_step(&mut p, &[g], &mut st, 0.05).unwrap();
            let now = loss(&p);
            assert!(now < prev, "{now} >= {prev}");
            prev = now;
        }
    }

    #[test]
    fn adam_is_bit_reproducible() {
        let run = || {
            let mut p = store(vec![0.1, 0.2, 0.3], true);
            let mut st = AdamState::new(&p, 0.9, 0.999, 1e-6, 0.1);
            for i in 0..5 {
                let g = vec![0.3 * i as f64, -0.7, 1e-3];
                adam_step(&mut p, &[g], &mut st, 1e-2).unwrap();
            }
            (p, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        let bits = |s: &ParamStore| s.params()[0].value.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(sa, sb);
    }

    #[test]
    fn schedule_points() {
        let s = LrSchedule {
            peak_lr: 1e-4,
            warmup_steps: 10_000,
            total_steps: 2_000_000,
        };
        assert_eq!(lr_at(&s, 0), 0.0);
        assert!((lr_at(&s, 5_000) - 5e-5).abs() < 1e-20);
        assert_eq!(lr_at(&s, 10_000), 1e-4);
        assert!((lr_at(&s, 1_005_000) - 5e-5).abs() < 1e-18);
        assert_eq!(lr_at(&s, 2_000_000), 0.0);
        assert_eq!(lr_at(&s, 3_000_000), 0.0);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![vec![3.0], vec![4.0]];
        let before = clip_global_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-12 && (g[1][0] - 0.8).abs() < 1e-12);
    }
}
