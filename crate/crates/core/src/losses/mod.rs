//! Loss models and their block updates inside the outer ADMM.
//!
//! Conventions shared by all three losses: sub-objectives are written per
//! sample (the `n`-scaled objective divided by `n`), `ρ₁` is the per-sample
//! ℓ₁ weight on off-diagonal entries, and the proximal coupling to
//! `Θ − Ω + W` is weighted by `γₙ = γ·n`.

mod concord;
mod glasso;
mod ising;

pub use concord::{
    concord_omega_step, concord_theta_step, concord_update_omega, concord_update_theta,
    concord_upsilon_omega, concord_upsilon_theta, fconcord_objective, SweepInfo,
};
pub use glasso::{fglasso_objective, glasso_omega_update, glasso_theta_update, glasso_theta_smooth};
pub use ising::{
    fbn_objective, fbn_omega_update, fbn_theta_objective, fbn_theta_update, ising_gradient,
    ising_pseudo_likelihood, ising_pseudo_likelihood_raw, BbConfig, BbInfo,
};

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::linalg::Mat;
use crate::types::DataKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Fglasso,
    Fconcord,
    Fbn,
}

impl std::str::FromStr for LossKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fglasso" => Ok(LossKind::Fglasso),
            "fconcord" => Ok(LossKind::Fconcord),
            "fbn" => Ok(LossKind::Fbn),
            other => Err(validation(format!("unknown model {other:?}"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Fglasso => "fglasso",
            LossKind::Fconcord => "fconcord",
            LossKind::Fbn => "fbn",
        })
    }
}

/// The map `G` in the trace penalty `tr(Q·G(Ω))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GMap {
    ThetaSquared,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    pub g_map: GMap,
    pub rho1: f64,
    pub rho2: f64,
}

impl LossModel {
    pub fn new(kind: LossKind, rho1: f64, rho2: f64) -> Result<Self> {
        if !(rho1 >= 0.0 && rho1.is_finite()) || !(rho2 >= 0.0 && rho2.is_finite()) {
            return Err(validation(format!("penalties must be finite and >= 0, got rho1={rho1}, rho2={rho2}")));
        }
        let g_map = match kind {
            LossKind::Fconcord => GMap::ThetaSquared,
            LossKind::Fglasso | LossKind::Fbn => GMap::Theta,
        };
        Ok(Self { kind, g_map, rho1, rho2 })
    }

    pub fn fconcord(rho1: f64, rho2: f64) -> Self {
        Self::new(LossKind::Fconcord, rho1, rho2).expect("invalid penalties")
    }

    pub fn fglasso(rho1: f64, rho2: f64) -> Self {
        Self::new(LossKind::Fglasso, rho1, rho2).expect("invalid penalties")
    }

    pub fn fbn(rho1: f64, rho2: f64) -> Self {
        Self::new(LossKind::Fbn, rho1, rho2).expect("invalid penalties")
    }

    pub fn validate(&self) -> Result<()> {
        let fresh = Self::new(self.kind, self.rho1, self.rho2)?;
        if fresh.g_map != self.g_map {
            return Err(validation(format!("{} requires g_map {:?}", self.kind, fresh.g_map)));
        }
        Ok(())
    }

    pub fn data_kind(&self) -> DataKind {
        match self.kind {
            LossKind::Fbn => DataKind::Binary,
            _ => DataKind::Continuous,
        }
    }

    /// `G(Ω)`.
    pub fn g_of(&self, omega: &Mat) -> Mat {
        match self.g_map {
            GMap::ThetaSquared => omega * omega,
            GMap::Theta => omega.clone(),
        }
    }
}

/// Iterates of the outer ADMM: `Θ`, its penalised copy `Ω`, the relaxed
/// partition `Q`, the scaled dual `W`, and the dual parameter `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta: Mat,
    pub omega: Mat,
    pub q: Mat,
    pub w: Mat,
    pub gamma: f64,
}

impl AdmmState {
    /// `Θ = Ω = Q = I`, `W = 0`.
    pub fn identity(p: usize, gamma: f64) -> Self {
        Self {
            theta: Mat::identity(p, p),
            omega: Mat::identity(p, p),
            q: Mat::identity(p, p),
            w: Mat::zeros(p, p),
            gamma,
        }
    }

    pub fn p(&self) -> usize {
        self.theta.nrows()
    }

    /// `γ·n`.
    pub fn gamma_n(&self, n: usize) -> f64 {
        self.gamma * n as f64
    }
}

/// `sign(α)·max(|α| − β, 0)`.
pub fn soft_threshold(alpha: f64, beta: f64) -> f64 {
    debug_assert!(beta >= 0.0);
    if alpha > beta {
        alpha - beta
    } else if alpha < -beta {
        alpha + beta
    } else {
        0.0
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    //! One-dimensional minimisers used as independent oracles.

    /// Golden-section search on `[lo, hi]`.
    pub fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = hi - r * (hi - lo);
        let mut d = lo + r * (hi - lo);
        let (mut fc, mut fd) = (f(c), f(d));
        while hi - lo > tol {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - r * (hi - lo);
                fc = f(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + r * (hi - lo);
                fd = f(d);
            }
        }
        0.5 * (lo + hi)
    }

    /// Dense grid over `[lo, hi]` followed by golden-section refinement
    /// around the best grid point.
    pub fn grid_refine(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let m = 2000;
        let h = (hi - lo) / m as f64;
        let mut best = lo;
        let mut fb = f64::INFINITY;
        for k in 0..=m {
            let x = lo + h * k as f64;
            let v = f(x);
            if v < fb {
                fb = v;
                best = x;
            }
        }
        golden(&f, (best - h).max(lo), (best + h).min(hi), 1e-12)
    }
}
