use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};
use crate::numerics::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Gaussian noise rescaled so that `||noise|| = level * ||b||` exactly.
    RelativeNorm,
    /// i.i.d. Gaussian noise with variance `level`.
    FixedVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub level: f64,
}

impl NoiseSpec {
    pub fn new(mode: NoiseMode, level: f64) -> Result<Self> {
        let spec = Self { mode, level };
        spec.validate()?;
        Ok(spec)
    }

    pub fn relative(level: f64) -> Self {
        Self {
            mode: NoiseMode::RelativeNorm,
            level,
        }
    }

    pub fn variance(level: f64) -> Self {
        Self {
            mode: NoiseMode::FixedVariance,
            level,
        }
    }

    pub fn none() -> Self {
        Self::relative(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0 && self.level.is_finite()) {
            return precondition(format!("noise level must be >= 0, got {}", self.level));
        }
        Ok(())
    }
}

/// `b_clean + noise` drawn from `rng`.
pub fn add_noise<R: Rng + ?Sized>(b_clean: &Vector, spec: &NoiseSpec, rng: &mut R) -> Vector {
    if spec.level == 0.0 {
        return b_clean.clone();
    }
    let eta = Vector::from_fn(b_clean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    match spec.mode {
        NoiseMode::RelativeNorm => {
            let eta_norm = eta.norm();
            if eta_norm == 0.0 {
                return b_clean.clone();
            }
            b_clean + eta * (spec.level * b_clean.norm() / eta_norm)
        }
        NoiseMode::FixedVariance => b_clean + eta * spec.level.sqrt(),
    }
}
