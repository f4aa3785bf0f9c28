use serde::{Deserialize, Serialize};

use super::DiffusionError;

pub const MAX_STEPS: usize = 64;

/// Per-step replacement probabilities `β_0..β_{T−1}` with precomputed
/// survival products `a_t = Π_{u<t} (1 − β_u)` for `t = 1..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    survival: Vec<f64>,
}

impl NoiseSchedule {
    /// `β_t = start + t·(end − start)/(T − 1)`; `β_0 = start` when `T = 1`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self, DiffusionError> {
        if steps == 0 || steps > MAX_STEPS {
            return Err(DiffusionError::BadSchedule(format!("step count {steps} outside 1..={MAX_STEPS}")));
        }
        if !(0.0..=1.0).contains(&beta_start) || !(0.0..=1.0).contains(&beta_end) {
            return Err(DiffusionError::BadSchedule(format!(
                "betas {beta_start}, {beta_end} must lie in [0, 1]"
            )));
        }
        if beta_end < beta_start {
            return Err(DiffusionError::BadSchedule(format!(
                "beta_end {beta_end} is below beta_start {beta_start}"
            )));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            let step = (beta_end - beta_start) / (steps - 1) as f64;
            (0..steps)
                .map(|t| if t == steps - 1 { beta_end } else { beta_start + t as f64 * step })
                .collect()
        };
        NoiseSchedule::from_betas(betas)
    }

    /// Any nondecreasing list of probabilities in `[0, 1]`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self, DiffusionError> {
        if betas.is_empty() || betas.len() > MAX_STEPS {
            return Err(DiffusionError::BadSchedule(format!(
                "step count {} outside 1..={MAX_STEPS}",
                betas.len()
            )));
        }
        if let Some(&b) = betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(DiffusionError::BadProbability(b));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(DiffusionError::BadSchedule("betas must be nondecreasing".into()));
        }
        let survival = betas
            .iter()
            .scan(1.0, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        Ok(NoiseSchedule { betas, survival })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `β_t` for `t ∈ 0..T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    /// `a_t` for `t ∈ 1..=T`.
    pub fn survival(&self, t: usize) -> Result<f64, DiffusionError> {
        if t == 0 || t > self.steps() {
            return Err(DiffusionError::StepOutOfRange {
                t,
                lo: 1,
                hi: self.steps(),
            });
        }
        Ok(self.survival[t - 1])
    }

    pub fn survivals(&self) -> &[f64] {
        &self.survival
    }
}

impl TryFrom<Vec<f64>> for NoiseSchedule {
    type Error = DiffusionError;

    fn try_from(betas: Vec<f64>) -> Result<Self, Self::Error> {
        NoiseSchedule::from_betas(betas)
    }
}

impl From<NoiseSchedule> for Vec<f64> {
    fn from(s: NoiseSchedule) -> Self {
        s.betas
    }
}
