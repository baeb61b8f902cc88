//! Numerical tolerances shared by every module.

use serde::{Deserialize, Serialize};

/// Environment variable that overrides [`Settings::tol`].
pub const TOLERANCE_ENV: &str = "PHASE_TOL";

/// Tolerance record. Reports embed the instance they were computed with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    /// Relative tolerance for norm and functional comparisons.
    pub tol: f64,
    /// Agreement threshold for finite-difference estimates.
    pub fd_tol: f64,
    /// Maximum sine of the angle between vectors treated as collinear.
    pub collinearity_tol: f64,
    /// Allowed `||x*(x)| − |φ(f(x))||` per unit of `1 + ‖x‖`.
    pub functional_tol: f64,
    /// Largest exponent `k` in the stabilization schedule `t = 2^k`.
    pub stabilization_cap: u32,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            fd_tol: 1e-6,
            collinearity_tol: 1e-8,
            functional_tol: 1e-8,
            stabilization_cap: 20,
        }
    }
}

impl Settings {
    /// Defaults with `tol` replaced by `PHASE_TOL` when it parses as a
    /// positive finite number.
    pub fn from_env() -> Self {
        let mut settings = Self::default();
        if let Some(tol) = std::env::var(TOLERANCE_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|t| t.is_finite() && *t > 0.0)
        {
            settings.tol = tol;
        }
        settings
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// `a` and `b` agree within `tol·(1 + max(|a|, |b|))`.
    pub fn close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.tol * (1.0 + a.abs().max(b.abs()))
    }
}
