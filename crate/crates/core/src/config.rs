//! Run parameters shared by the library pipeline and the command-line driver.

use serde::{Deserialize, Serialize};

use crate::conical::scale_base;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scale ratio; must be `1/b` for an integer `b ≥ 2`.
    pub rho: f64,
    pub n_angles: usize,
    /// Atom spacing along segments; `None` means a 64th of the shortest segment.
    pub pitch: Option<f64>,
    /// Smallest kept direction interval is `3^{-triadic_depth} 𝓗(J₀)`.
    pub triadic_depth: u32,
    /// Last tree generation built.
    pub k_max: u32,
    /// Levels below `J₀` at which good directions are sampled.
    pub direction_depth: u32,
    pub c_eps: f64,
    pub c_lambda: f64,
    pub big_lambda: f64,
    /// Defaults to `ρ^{-3}` when unset.
    pub gamma: Option<f64>,
    pub c_n: f64,
    pub c_y: f64,
    pub c_j: f64,
    /// `M = c_m / κ` for the maximal-function bound on good directions.
    pub c_m: f64,
    /// Aperture factor of the exterior cone in the gap-interval construction.
    pub alpha: f64,
    /// Perpendicular extent below which a segment projects to an atom.
    pub perp_cutoff: f64,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rho: 0.5,
            n_angles: 2048,
            pitch: None,
            triadic_depth: 6,
            k_max: 6,
            direction_depth: 6,
            c_eps: 2f64.powi(-6),
            c_lambda: 2f64.powi(-8),
            big_lambda: 64.0,
            gamma: None,
            c_n: 8.0,
            c_y: 0.25,
            c_j: 1.0,
            c_m: 4.0,
            alpha: 30.0,
            perp_cutoff: 1e-9,
            seed: 0,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        scale_base(self.rho)?;
        let positive = [
            ("c_eps", self.c_eps),
            ("c_lambda", self.c_lambda),
            ("big_lambda", self.big_lambda),
            ("c_n", self.c_n),
            ("c_y", self.c_y),
            ("c_j", self.c_j),
            ("c_m", self.c_m),
            ("perp_cutoff", self.perp_cutoff),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Precondition(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.c_eps >= 1.0 || self.c_lambda >= 1.0 || self.c_y >= 1.0 {
            return Err(Error::Precondition("c_eps, c_lambda and c_y must be below 1".into()));
        }
        if self.alpha <= 1.0 {
            return Err(Error::Precondition(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if self.n_angles == 0 {
            return Err(Error::Precondition("n_angles must be positive".into()));
        }
        if let Some(h) = self.pitch {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Precondition(format!("pitch must be positive, got {h}")));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Precondition("workers must be positive".into()));
        }
        if self.k_max > 40 || self.triadic_depth > 20 || self.direction_depth > 12 {
            return Err(Error::Resource("k_max ≤ 40, triadic_depth ≤ 20 and direction_depth ≤ 12 are supported".into()));
        }
        Ok(())
    }

    pub fn base(&self) -> Result<u32> {
        scale_base(self.rho)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(self.rho.powi(-3))
    }

    /// `ε = c_ε/(AM)`.
    pub fn epsilon(&self, a: f64, m: f64) -> f64 {
        self.c_eps / (a * m)
    }

    /// `λ = c_λ/(AM)`.
    pub fn lambda(&self, a: f64, m: f64) -> f64 {
        self.c_lambda / (a * m)
    }
}
