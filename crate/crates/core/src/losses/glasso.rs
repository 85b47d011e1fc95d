//! Gaussian log-likelihood loss: spectral Θ-update and entrywise Ω-update.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::types::{PartitionRelaxation, PrecisionEstimate};

use super::{soft_threshold, AdmmState};

fn log_det_pd(t: &Mat) -> Option<f64> {
    let chol = Cholesky::new(linalg::symmetrize(t))?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `(n/2)[−log det Θ + tr(((1+ρ₂)S + ρ₂Q)Θ)] + ρ₁ Σ_{i<j} |θ_ij|`.
pub fn fglasso_objective(
    theta: &PrecisionEstimate,
    q: &PartitionRelaxation,
    s: &Mat,
    rho1: f64,
    rho2: f64,
    n: usize,
) -> Result<f64> {
    fglasso_objective_raw(theta.values(), q.values(), s, rho1, rho2, n)
}

pub(crate) fn fglasso_objective_raw(t: &Mat, q: &Mat, s: &Mat, rho1: f64, rho2: f64, n: usize) -> Result<f64> {
    let ld = log_det_pd(t).ok_or_else(|| Error::Domain("theta is not positive definite".into()))?;
    let m = s * (1.0 + rho2) + q * rho2;
    Ok(0.5 * n as f64 * (-ld + linalg::frob_inner(&m, t)) + rho1 * linalg::l1_off_upper(t))
}

/// Smooth Θ-block sub-objective
/// `½[−log det Θ + (1+ρ₂) tr(SΘ)] + (γₙ/2)‖Θ − Ω + W‖²_F`, `+∞` outside the PD cone.
pub fn glasso_theta_smooth(theta: &Mat, state: &AdmmState, s: &Mat, rho2: f64, n: usize) -> f64 {
    let Some(ld) = log_det_pd(theta) else {
        return f64::INFINITY;
    };
    let prox = linalg::frob_norm_sq(&(theta - &state.omega + &state.w));
    0.5 * (-ld + (1.0 + rho2) * linalg::frob_inner(s, theta)) + 0.5 * state.gamma_n(n) * prox
}

/// Exact minimiser of [`glasso_theta_smooth`].
///
/// Stationarity reads `γₙΘ − ½Θ⁻¹ = M` with `M = γₙ(Ω − W) − ½(1+ρ₂)S`, so
/// `Θ` shares eigenvectors with `M` and each eigenvalue solves a scalar
/// quadratic.
pub fn glasso_theta_update(state: &AdmmState, s: &Mat, rho2: f64, n: usize) -> Result<Mat> {
    let gn = state.gamma_n(n);
    if !(gn > 0.0) {
        return Err(Error::Validation("gamma must be positive".into()));
    }
    let v = &state.omega - &state.w;
    let m = &v * gn - s * (0.5 * (1.0 + rho2));
    let (vals, vecs) = linalg::sym_eigen_desc(&m)?;
    let out = linalg::spectral_map(&vals, &vecs, |l| {
        let disc = (l * l + 2.0 * gn).sqrt();
        // (l + disc) / (2γₙ), rewritten to avoid cancellation for l < 0.
        if l >= 0.0 {
            (l + disc) / (2.0 * gn)
        } else {
            1.0 / (disc - l)
        }
    });
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("glasso theta update produced non-finite values".into()));
    }
    Ok(out)
}

/// Ω-block minimiser of `(ρ₂/2) tr(QΩ) + ρ₁ Σ_{i<j} |ω_ij| + (γₙ/2)‖Θ − Ω + W‖²_F`.
pub fn glasso_omega_update(state: &AdmmState, rho1: f64, rho2: f64, n: usize) -> Mat {
    let gn = state.gamma_n(n);
    let p = state.p();
    let mut out = Mat::zeros(p, p);
    for j in 0..p {
        for i in 0..=j {
            let v = state.theta[(i, j)] + state.w[(i, j)];
            let x = if i == j {
                v - rho2 * state.q[(i, i)] / (2.0 * gn)
            } else {
                soft_threshold(v - rho2 * state.q[(i, j)] / (2.0 * gn), rho1 / (2.0 * gn))
            };
            out[(i, j)] = x;
            out[(j, i)] = x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::test_util::grid_refine;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (f(hi) > 0.0) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn scalar_case_matches_root_finder() {
        let p = 3;
        let n = 10;
        let st = AdmmState::identity(p, 0.02);
        let out = glasso_theta_update(&st, &Mat::identity(p, p), 0.0, n).unwrap();
        let gn = st.gamma_n(n);
        // ½(−1/c + 1) + γₙ(c − 1) = 0
        let c = bisect(|c| 0.5 * (1.0 - 1.0 / c) + gn * (c - 1.0), 1e-6, 10.0);
        assert!((out - Mat::identity(p, p) * c).abs().max() < 1e-10);
    }

    #[test]
    fn large_gamma_returns_prox_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut st = AdmmState::identity(4, 1e8);
        st.omega = Mat::identity(4, 4) * 2.0;
        st.omega[(0, 1)] = 0.3;
        st.omega[(1, 0)] = 0.3;
        st.w = linalg::symmetrize(&Mat::from_fn(4, 4, |_, _| rng.random_range(-0.1..0.1)));
        let s = Mat::identity(4, 4);
        let out = glasso_theta_update(&st, &s, 0.5, 1).unwrap();
        assert!((out - (&st.omega - &st.w)).abs().max() < 1e-4);
    }

    #[test]
    fn returned_point_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = rng.random_range(2..7);
            let a = Mat::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            let s = &a * a.transpose() / p as f64;
            let mut st = AdmmState::identity(p, rng.random_range(0.005..0.1));
            st.omega = linalg::symmetrize(&Mat::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0)));
            st.w = linalg::symmetrize(&Mat::from_fn(p, p, |_, _| rng.random_range(-0.2..0.2)));
            let (rho2, n) = (rng.random_range(0.0..1.0), 40);
            let t = glasso_theta_update(&st, &s, rho2, n).unwrap();
            let (eig, _) = linalg::sym_eigen_desc(&t).unwrap();
            assert!(*eig.last().unwrap() > 0.0);
            // Central differences of the smooth objective along every symmetric unit direction.
            let h = 1e-5;
            let mut grad = Mat::zeros(p, p);
            for i in 0..p {
                for j in i..p {
                    let mut d = Mat::zeros(p, p);
                    d[(i, j)] = 1.0;
                    d[(j, i)] = 1.0;
                    let fp = glasso_theta_smooth(&(&t + &d * h), &st, &s, rho2, n);
                    let fm = glasso_theta_smooth(&(&t - &d * h), &st, &s, rho2, n);
                    grad[(i, j)] = (fp - fm) / (2.0 * h);
                }
            }
            assert!(grad.norm() < 1e-6, "gradient norm {}", grad.norm());
        }
    }

    #[test]
    fn omega_update_matches_coordinate_minimiser() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let p = rng.random_range(2..6);
            let mut st = AdmmState::identity(p, rng.random_range(0.01..0.1));
            st.theta = linalg::symmetrize(&Mat::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0)));
            st.w = linalg::symmetrize(&Mat::from_fn(p, p, |_, _| rng.random_range(-0.3..0.3)));
            st.q = linalg::symmetrize(&Mat::from_fn(p, p, |_, _| rng.random_range(0.0..1.0)));
            let (rho1, rho2, n) = (rng.random_range(0.0..0.5), rng.random_range(0.0..1.0), 20);
            let out = glasso_omega_update(&st, rho1, rho2, n);
            let obj = |o: &Mat| {
                0.5 * rho2 * linalg::frob_inner(&st.q, o)
                    + rho1 * linalg::l1_off_upper(o)
                    + 0.5 * st.gamma_n(n) * linalg::frob_norm_sq(&(&st.theta - o + &st.w))
            };
            let i = rng.random_range(0..p);
            let j = rng.random_range(i..p);
            let f = |x: f64| {
                let mut o = out.clone();
                o[(i, j)] = x;
                o[(j, i)] = x;
                obj(&o)
            };
            let oracle = grid_refine(f, out[(i, j)] - 3.0, out[(i, j)] + 3.0);
            assert!((oracle - out[(i, j)]).abs() < 1e-6);
        }
    }
}
