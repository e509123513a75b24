use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RngSpec;
use crate::error::{Error, Result};

/// Additive measurement noise. Drawn on its own stream so it never depends
/// on the measurement ensemble.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    Zero,
    Constant { value: f64 },
    Gaussian { sigma: f64 },
    Uniform { low: f64, high: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Zero => true,
            NoiseSpec::Constant { value } => value.is_finite(),
            NoiseSpec::Gaussian { sigma } => sigma.is_finite() && sigma >= 0.0,
            NoiseSpec::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid noise spec {self:?}")))
        }
    }

    pub fn generate(&self, m: usize, rng: RngSpec) -> Result<Vec<f64>> {
        self.validate()?;
        let mut r = rng.rng();
        Ok(match *self {
            NoiseSpec::Zero => vec![0.0; m],
            NoiseSpec::Constant { value } => vec![value; m],
            NoiseSpec::Gaussian { sigma } => (0..m)
                .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
                .collect(),
            NoiseSpec::Uniform { low, high } => (0..m)
                .map(|_| low + (high - low) * r.random::<f64>())
                .collect(),
        })
    }
}

/// Noise budget `eta = (1/M) sum (-xi_m)_+ + slack`.
pub fn eta_from_noise(xi: &[f64], slack: f64) -> f64 {
    if xi.is_empty() {
        return slack;
    }
    xi.iter().map(|&x| (-x).max(0.0)).sum::<f64>() / xi.len() as f64 + slack
}
