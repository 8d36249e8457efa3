//! Agreement between estimated and ground-truth scores.

use crate::error::{Result, ScoraError};

/// Estimated and true scores for the same entities.
#[derive(Debug, Clone, Copy)]
pub struct ScorePair<'a> {
    pub estimated: &'a [f64],
    pub truth: &'a [f64],
}

impl<'a> ScorePair<'a> {
    pub fn new(estimated: &'a [f64], truth: &'a [f64]) -> Result<Self> {
        if estimated.len() != truth.len() {
            return Err(ScoraError::DimensionMismatch {
                expected: truth.len(),
                found: estimated.len(),
            });
        }
        if truth.len() < 2 {
            return Err(ScoraError::UndefinedMetric("need at least two entities".into()));
        }
        if estimated.iter().chain(truth).any(|v| !v.is_finite()) {
            return Err(ScoraError::input("scores must be finite"));
        }
        Ok(ScorePair { estimated, truth })
    }

    /// Centered Pearson correlation.
    pub fn pearson(&self) -> Result<f64> {
        let n = self.truth.len() as f64;
        let mean_e = self.estimated.iter().sum::<f64>() / n;
        let mean_t = self.truth.iter().sum::<f64>() / n;
        let (mut cov, mut var_e, mut var_t) = (0.0, 0.0, 0.0);
        for (e, t) in self.estimated.iter().zip(self.truth) {
            let (de, dt) = (e - mean_e, t - mean_t);
            cov += de * dt;
            var_e += de * de;
            var_t += dt * dt;
        }
        if var_e == 0.0 || var_t == 0.0 {
            return Err(ScoraError::UndefinedMetric("constant score vector".into()));
        }
        Ok((cov / (var_e.sqrt() * var_t.sqrt())).clamp(-1.0, 1.0))
    }

    /// Uncentered correlation with weights `w_i = exp(θ†_i)`.
    ///
    /// The value does not change when every weight is multiplied by the same
    /// constant, so the weights are computed as `exp(θ†_i - max θ†)`.
    pub fn weighted_corr_exp(&self) -> Result<f64> {
        let top = self.truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut cross, mut norm_e, mut norm_t) = (0.0, 0.0, 0.0);
        for (e, t) in self.estimated.iter().zip(self.truth) {
            let w = (t - top).exp();
            cross += w * e * t;
            norm_e += w * e * e;
            norm_t += w * t * t;
        }
        if norm_e == 0.0 || norm_t == 0.0 {
            return Err(ScoraError::UndefinedMetric("zero vector under the exponential weights".into()));
        }
        Ok((cross / (norm_e.sqrt() * norm_t.sqrt())).clamp(-1.0, 1.0))
    }
}

pub fn pearson_corr(estimated: &[f64], truth: &[f64]) -> Result<f64> {
    ScorePair::new(estimated, truth)?.pearson()
}

pub fn weighted_corr_exp(estimated: &[f64], truth: &[f64]) -> Result<f64> {
    ScorePair::new(estimated, truth)?.weighted_corr_exp()
}
