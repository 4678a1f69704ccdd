//! Growth functions bounding the model error.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Power-type growth function `omega(t) = c / (1 + alpha) * t^(1 + alpha)`.
///
/// This is the bound produced by a gradient that is Hölder continuous with
/// constant `c` and exponent `alpha` (Lipschitz for `alpha = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFunction {
    coefficient: f64,
    exponent: f64,
}

impl GrowthFunction {
    pub fn new(coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "growth coefficient must be positive, got {coefficient}"
            )));
        }
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "growth exponent must lie in (0, 1], got {exponent}"
            )));
        }
        Ok(Self {
            coefficient,
            exponent,
        })
    }

    /// Growth function of a function with `lipschitz`-Lipschitz gradient.
    pub fn lipschitz(lipschitz: f64) -> Result<Self> {
        Self::new(lipschitz, 1.0)
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "growth function argument must be non-negative, got {t}"
            )));
        }
        Ok(self.coefficient / (1.0 + self.exponent) * t.powf(1.0 + self.exponent))
    }
}
