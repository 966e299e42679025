//! Smooth cutoff profiles built from `exp(−1/x)`.

use crate::error::{validation, Result};

/// `exp(−1/t)` for `t > 0`, else 0.
#[inline]
fn psi(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// C^∞ step: 0 for `t ≤ 0`, 1 for `t ≥ 1`, strictly increasing between.
#[inline]
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = psi(t);
        a / (a + psi(1.0 - t))
    }
}

/// Even profile `χ` with `χ = 1` on `|ξ| ≤ 1.1` and `χ = 0` on `|ξ| ≥ 1.9`, together
/// with the Bony-Weyl parameter `ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffProfile {
    epsilon: f64,
}

pub const CHI_INNER: f64 = 1.1;
pub const CHI_OUTER: f64 = 1.9;

impl Default for CutoffProfile {
    fn default() -> Self {
        Self { epsilon: 0.5 }
    }
}

impl CutoffProfile {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return validation(format!("epsilon must lie in (0,1), got {epsilon}"));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn chi(&self, xi: f64) -> f64 {
        smooth_step((CHI_OUTER - xi.abs()) / (CHI_OUTER - CHI_INNER))
    }

    /// `χ(|j−k| / (ε⟨j+k⟩))` from the squared integer norms `|j−k|²` and `|j+k|²`.
    #[inline]
    pub fn weight_sq(&self, diff_sq: f64, sum_sq: f64) -> f64 {
        let e2 = self.epsilon * self.epsilon * (1.0 + sum_sq);
        if diff_sq <= CHI_INNER * CHI_INNER * e2 {
            1.0
        } else if diff_sq >= CHI_OUTER * CHI_OUTER * e2 {
            0.0
        } else {
            self.chi((diff_sq / e2).sqrt())
        }
    }
}

/// `χ_T(t) = χ₁(t/T)` with `χ₁ = 1` on `t ≤ 1/2` and `χ₁ = 0` on `t ≥ 3/4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeCutoff {
    horizon: f64,
    /// Constant profile 1 (full observation in time).
    flat: bool,
}

impl TimeCutoff {
    pub fn new(horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return validation(format!("horizon must be positive, got {horizon}"));
        }
        Ok(Self { horizon, flat: false })
    }

    /// `χ ≡ 1`, used for full-observation checks.
    pub fn flat(horizon: f64) -> Self {
        Self { horizon, flat: true }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.flat {
            return 1.0;
        }
        smooth_step((0.75 - t / self.horizon) / 0.25)
    }
}
