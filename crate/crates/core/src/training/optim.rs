use serde::{Deserialize, Serialize};

use crate::model::ParamStore;
use crate::numerics::Tensor;

/// AdamW hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Moment buffers shaped like the parameters plus the update counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub hyper: AdamW,
    /// Number of updates applied so far.
    pub step: u64,
    pub first_moment: ParamStore,
    pub second_moment: ParamStore,
}

impl OptimizerState {
    pub fn new(hyper: AdamW, params: &ParamStore) -> Self {
        let zeros = |p: &ParamStore| {
            let mut out = ParamStore::new();
            for (name, t) in p.iter() {
                out.insert(name, Tensor::zeros(t.shape()));
            }
            out
        };
        OptimizerState {
            hyper,
            step: 0,
            first_moment: zeros(params),
            second_moment: zeros(params),
        }
    }

    /// Applies one update to every parameter at learning rate `lr`.
    /// Parameters without a gradient entry are treated as having zero gradient.
    pub fn update(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64) {
        self.step += 1;
        let hyper = AdamW { lr, ..self.hyper };
        for (name, p) in params.iter_mut() {
            let m = self.first_moment.get_mut(name).expect("moment buffer per parameter");
            let v = self.second_moment.get_mut(name).expect("moment buffer per parameter");
            match grads.get(name) {
                Some(g) => adamw_update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), self.step, &hyper),
                None => {
                    let g = vec![0.0; p.numel()];
                    adamw_update(p.data_mut(), &g, m.data_mut(), v.data_mut(), self.step, &hyper)
                }
            }
        }
    }
}

/// One decoupled-weight-decay Adam update for update number `step` (from 1):
/// `p ← p − lr·(m̂/(√v̂ + eps) + wd·p)` with bias-corrected moments.
pub fn adamw_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], step: u64, h: &AdamW) {
    let c1 = 1.0 - h.beta1.powi(step as i32);
    let c2 = 1.0 - h.beta2.powi(step as i32);
    for i in 0..p.len() {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= h.lr * (m_hat / (v_hat.sqrt() + h.eps) + h.weight_decay * p[i]);
    }
}

/// Linear warmup from zero over `warmup` updates, constant afterwards.
/// `step` counts from 1.
pub fn warmup_lr(base: f64, step: u64, warmup: u64) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * step as f64 / warmup as f64
    }
}

pub fn global_norm(grads: &ParamStore) -> f64 {
    grads
        .iter()
        .flat_map(|(_, t)| t.data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for (_, t) in grads.iter_mut() {
            t.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(p: f64, g: f64, h: AdamW) -> f64 {
        let mut p = [p];
        adamw_update(&mut p, &[g], &mut [0.0], &mut [0.0], 1, &h);
        p[0]
    }

    #[test]
    fn first_update_moves_by_lr() {
        let h = AdamW::new(0.1, 0.0);
        let delta = one(0.0, 1.0, h);
        assert!((delta + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        assert_eq!(one(0.7, 0.0, AdamW::new(0.1, 0.0)), 0.7);
    }

    #[test]
    fn decay_only() {
        assert!((one(1.0, 0.0, AdamW::new(0.1, 0.1)) - 0.99).abs() < 1e-15);
    }

    #[test]
    fn update_is_pure_in_its_inputs() {
        let h = AdamW::new(0.01, 0.01);
        let run = || {
            let (mut p, mut m, mut v) = ([0.3, -0.2], [0.0; 2], [0.0; 2]);
            for step in 1..=5 {
                adamw_update(&mut p, &[0.5, -1.5], &mut m, &mut v, step, &h);
            }
            (p, m, v)
        };
        assert_eq!(run(), run());
    }

    /// Independent scalar reference over several steps.
    #[test]
    fn matches_reference_trajectory() {
        let h = AdamW::new(0.05, 0.02);
        let grads = [0.4, -0.1, 0.3, 0.0, -0.8];
        let (mut p, mut m, mut v) = ([1.0], [0.0], [0.0]);
        let (mut rp, mut rm, mut rv) = (1.0f64, 0.0f64, 0.0f64);
        for (k, g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            adamw_update(&mut p, &[*g], &mut m, &mut v, t as u64, &h);
            rm = 0.9 * rm + 0.1 * g;
            rv = 0.999 * rv + 0.001 * g * g;
            let step = (rm / (1.0 - 0.9f64.powi(t))) / ((rv / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            rp = rp - 0.05 * step - 0.05 * 0.02 * rp;
            assert!((p[0] - rp).abs() < 1e-14);
        }
    }

    #[test]
    fn warmup_ramps_linearly() {
        assert_eq!(warmup_lr(1.0, 1, 4), 0.25);
        assert_eq!(warmup_lr(1.0, 4, 4), 1.0);
        assert_eq!(warmup_lr(1.0, 9, 4), 1.0);
        assert_eq!(warmup_lr(0.3, 1, 0), 0.3);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = ParamStore::new();
        g.insert("a", Tensor::new(&[2], vec![3.0, 4.0]).unwrap());
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-15);
        assert_eq!(clip_global_norm(&mut g, 2.0), global_norm(&g));
    }
}
