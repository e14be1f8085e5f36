//! Model-specific attribute scoring.
//!
//! Attribute scores strictly above a threshold are doubled, then the whole
//! matrix is scaled by a global weight:
//!
//! ```text
//! A = (A_o + A_o ⊙ [A_o > T_h]) · W_A
//! ```

use serde::{Deserialize, Serialize};

use crate::datamodel::AttributeMatrix;
use crate::error::{check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsasConfig {
    /// Global reweighting factor `W_A`.
    pub weight: f64,
    /// Reinforcement threshold `T_h`; the comparison is strict.
    pub threshold: f64,
}

impl MsasConfig {
    pub fn new(weight: f64, threshold: f64) -> Result<Self> {
        let cfg = Self { weight, threshold };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::Config(format!("MSAS weight must be positive, got {}", self.weight)));
        }
        // -inf is allowed: it selects every entry.
        if self.threshold.is_nan() || self.threshold == f64::INFINITY {
            return Err(Error::Config(format!("invalid MSAS threshold {}", self.threshold)));
        }
        Ok(())
    }
}

#[inline]
pub fn rescore_value(x: f64, cfg: &MsasConfig) -> f64 {
    let reinforced = if x > cfg.threshold { x } else { 0.0 };
    (x + reinforced) * cfg.weight
}

/// Returns the rescored matrix; the input is left untouched.
pub fn msas_rescore(attrs: &AttributeMatrix, cfg: &MsasConfig) -> Result<AttributeMatrix> {
    cfg.validate()?;
    check_finite("attribute matrix", attrs.values().iter())?;
    let values = attrs.values().mapv(|x| rescore_value(x, cfg));
    attrs.with_values(values)
}
