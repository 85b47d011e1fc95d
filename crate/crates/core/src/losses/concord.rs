//! Gaussian pseudo-likelihood loss with coordinatewise closed-form updates.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::types::{PartitionRelaxation, PrecisionEstimate};

use super::{soft_threshold, AdmmState};

const MAX_SWEEPS: usize = 50;
const SWEEP_TOL: f64 = 1e-6;

/// `(n/2)[−log|diag(Θ)²| + tr(((1+ρ₂)S + ρ₂Q)Θ²)] + ρ₁ Σ_{i<j} |θ_ij|`.
pub fn fconcord_objective(
    theta: &PrecisionEstimate,
    q: &PartitionRelaxation,
    s: &Mat,
    rho1: f64,
    rho2: f64,
    n: usize,
) -> Result<f64> {
    fconcord_objective_raw(theta.values(), q.values(), s, rho1, rho2, n)
}

pub(crate) fn fconcord_objective_raw(
    t: &Mat,
    q: &Mat,
    s: &Mat,
    rho1: f64,
    rho2: f64,
    n: usize,
) -> Result<f64> {
    let p = t.nrows();
    let mut logdiag = 0.0;
    for i in 0..p {
        let d = t[(i, i)];
        if !(d > 0.0) {
            return Err(Error::Domain(format!("theta[{i},{i}] = {d} is not positive")));
        }
        logdiag += 2.0 * d.ln();
    }
    let m = s * (1.0 + rho2) + q * rho2;
    let t2 = t * t;
    let fit = -logdiag + linalg::frob_inner(&m, &t2);
    Ok(0.5 * n as f64 * fit + rho1 * linalg::l1_off_upper(t))
}

/// `a_{·i}·b_{·j}` minus the `k = skip` term. Both matrices are symmetric so
/// columns stand in for rows.
#[inline]
fn dot_skip(a: &Mat, i: usize, b: &Mat, j: usize, skip: usize) -> f64 {
    a.column(i).dot(&b.column(j)) - a[(skip, i)] * b[(skip, j)]
}

fn prox_vech(state: &AdmmState) -> f64 {
    linalg::vech_norm_sq(&(&state.theta - &state.omega + &state.w))
}

/// Θ-block sub-objective: `−Σ log θ_ii + ((1+ρ₂)/2) tr(SΘ²) + (γₙ/2) Σ_{i≤j} (Θ−Ω+W)²_ij`.
pub fn concord_upsilon_theta(state: &AdmmState, s: &Mat, rho2: f64, n: usize) -> f64 {
    let t = &state.theta;
    let p = t.nrows();
    let mut val = 0.0;
    for i in 0..p {
        if !(t[(i, i)] > 0.0) {
            return f64::INFINITY;
        }
        val -= t[(i, i)].ln();
    }
    val += 0.5 * (1.0 + rho2) * linalg::frob_inner(s, &(t * t));
    val + 0.5 * state.gamma_n(n) * prox_vech(state)
}

/// Ω-block sub-objective: `(ρ₂/2) tr(QΩ²) + ρ₁ Σ_{i<j} |ω_ij| + (γₙ/2) Σ_{i≤j} (Θ−Ω+W)²_ij`.
pub fn concord_upsilon_omega(state: &AdmmState, rho1: f64, rho2: f64, n: usize) -> f64 {
    let o = &state.omega;
    0.5 * rho2 * linalg::frob_inner(&state.q, &(o * o))
        + rho1 * linalg::l1_off_upper(o)
        + 0.5 * state.gamma_n(n) * prox_vech(state)
}

/// Minimiser of the Θ-block sub-objective in coordinate `(i, j)`, `i ≤ j`.
pub fn concord_update_theta(state: &AdmmState, s: &Mat, rho2: f64, n: usize, i: usize, j: usize) -> f64 {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let t = &state.theta;
    let gn = state.gamma_n(n);
    let c = 1.0 + rho2;
    if i == j {
        let a = c * s[(i, i)] + gn;
        let b = c * dot_skip(t, i, s, i, i) + gn * (state.w[(i, i)] - state.omega[(i, i)]);
        assert!(a > 0.0, "diagonal curvature must be positive");
        // Stable form of (−b + √(b² + 4a)) / (2a).
        let disc = (b * b + 4.0 * a).sqrt();
        if b <= 0.0 {
            (disc - b) / (2.0 * a)
        } else {
            2.0 / (b + disc)
        }
    } else {
        let a = c * (s[(i, i)] + s[(j, j)]) + gn;
        let b = c * (dot_skip(t, i, s, j, j) + dot_skip(t, j, s, i, i))
            + gn * (state.w[(i, j)] - state.omega[(i, j)]);
        assert!(a > 0.0, "off-diagonal curvature must be positive");
        -b / a
    }
}

/// Minimiser of the Ω-block sub-objective in coordinate `(i, j)`, `i ≤ j`.
pub fn concord_update_omega(state: &AdmmState, rho1: f64, rho2: f64, n: usize, i: usize, j: usize) -> f64 {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let o = &state.omega;
    let q = &state.q;
    let gn = state.gamma_n(n);
    if i == j {
        let c = rho2 * q[(i, i)] + gn;
        let d = rho2 * dot_skip(o, i, q, i, i) - gn * (state.w[(i, i)] + state.theta[(i, i)]);
        -d / c
    } else {
        let c = rho2 * (q[(i, i)] + q[(j, j)]) + gn;
        let d = rho2 * (dot_skip(o, i, q, j, j) + dot_skip(o, j, q, i, i))
            - gn * (state.w[(i, j)] + state.theta[(i, j)]);
        soft_threshold(-d / c, rho1 / c)
    }
}

/// Outcome of a coordinate-descent block solve.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepInfo {
    pub sweeps: usize,
    pub rel_change: f64,
}

fn run_sweeps(
    state: &mut AdmmState,
    update: impl Fn(&AdmmState, usize, usize) -> f64,
    target: impl Fn(&mut AdmmState) -> &mut Mat,
) -> SweepInfo {
    let p = state.p();
    let mut info = SweepInfo::default();
    for k in 1..=MAX_SWEEPS {
        let before = target(state).clone();
        for i in 0..p {
            let v = update(state, i, i);
            target(state)[(i, i)] = v;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let v = update(state, i, j);
                let m = target(state);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let after = target(state);
        let denom = linalg::frob_norm_sq(&before).max(f64::MIN_POSITIVE);
        info.sweeps = k;
        info.rel_change = (linalg::frob_norm_sq(&(&*after - &before)) / denom).sqrt();
        if info.rel_change < SWEEP_TOL {
            break;
        }
    }
    info
}

/// Coordinate descent on the Θ block (diagonals first, then `(i, j)` in
/// lexicographic order), repeated until the relative change drops below
/// `1e-6` or 50 sweeps.
pub fn concord_theta_step(state: &mut AdmmState, s: &Mat, rho2: f64, n: usize) -> SweepInfo {
    run_sweeps(state, |st, i, j| concord_update_theta(st, s, rho2, n, i, j), |st| &mut st.theta)
}

/// Coordinate descent on the Ω block, same order and stopping rule as the Θ block.
pub fn concord_omega_step(state: &mut AdmmState, rho1: f64, rho2: f64, n: usize) -> SweepInfo {
    run_sweeps(state, |st, i, j| concord_update_omega(st, rho1, rho2, n, i, j), |st| &mut st.omega)
}
