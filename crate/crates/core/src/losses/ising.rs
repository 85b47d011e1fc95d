//! Ising logistic pseudo-likelihood with a Barzilai–Borwein Θ-update.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::linalg::{self, Mat};
use crate::types::{DataKind, Dataset, PrecisionEstimate};

use super::{soft_threshold, AdmmState};

/// `log(1 + eˣ)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Node-wise linear predictors `η_ij = θ_jj + Σ_{j'≠j} θ_jj' y_ij'`.
fn linear_predictors(t: &Mat, y: &Mat) -> Mat {
    let mut off = t.clone();
    off.fill_diagonal(0.0);
    let mut eta = y * off;
    for (j, mut col) in eta.column_iter_mut().enumerate() {
        col.add_scalar_mut(t[(j, j)]);
    }
    eta
}

/// `−Σ_{j,j'} θ_jj' s_jj' + (1/n) Σ_i Σ_j log(1 + exp(η_ij))`.
pub fn ising_pseudo_likelihood(theta: &PrecisionEstimate, data: &Dataset) -> Result<f64> {
    if data.kind() != DataKind::Binary {
        return Err(validation("Ising pseudo-likelihood needs binary data"));
    }
    let s = crate::types::sample_covariance(data);
    Ok(ising_pseudo_likelihood_raw(theta.values(), data.observations(), &s))
}

pub fn ising_pseudo_likelihood_raw(t: &Mat, y: &Mat, s: &Mat) -> f64 {
    let n = y.nrows() as f64;
    let eta = linear_predictors(t, y);
    let lse: f64 = eta.iter().map(|&x| softplus(x)).sum();
    -linalg::frob_inner(t, s) + lse / n
}

/// Gradient of the pseudo-likelihood with respect to the free parameters
/// `θ_jj'` (`j ≤ j'`), returned as a symmetric matrix.
pub fn ising_gradient(t: &Mat, y: &Mat, s: &Mat) -> Mat {
    let n = y.nrows() as f64;
    let prob = linear_predictors(t, y).map(sigmoid);
    let m = y.tr_mul(&prob) / n;
    let p = t.nrows();
    let mut g = Mat::zeros(p, p);
    for j in 0..p {
        g[(j, j)] = -s[(j, j)] + prob.column(j).sum() / n;
        for i in 0..j {
            let v = -2.0 * s[(i, j)] + m[(i, j)] + m[(j, i)];
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `n[L(Θ) + ρ₂ tr(QΘ)] + ρ₁ Σ_{i<j} |θ_ij|` with `ρ₁` in its `n`-scaled form.
pub fn fbn_objective(t: &Mat, q: &Mat, y: &Mat, s: &Mat, rho1: f64, rho2: f64) -> f64 {
    let n = y.nrows() as f64;
    n * (ising_pseudo_likelihood_raw(t, y, s) + rho2 * linalg::frob_inner(q, t))
        + rho1 * linalg::l1_off_upper(t)
}

/// Θ-block sub-objective `L(Θ) + (γₙ/2) Σ_{i≤j} (Θ − Ω + W)²_ij`.
pub fn fbn_theta_objective(t: &Mat, state: &AdmmState, y: &Mat, s: &Mat) -> f64 {
    let gn = state.gamma_n(y.nrows());
    ising_pseudo_likelihood_raw(t, y, s)
        + 0.5 * gn * linalg::vech_norm_sq(&(t - &state.omega + &state.w))
}

fn theta_block_gradient(t: &Mat, state: &AdmmState, y: &Mat, s: &Mat) -> Mat {
    let gn = state.gamma_n(y.nrows());
    ising_gradient(t, y, s) + (t - &state.omega + &state.w) * gn
}

fn vech_inner(a: &Mat, b: &Mat) -> f64 {
    let p = a.nrows();
    let mut acc = 0.0;
    for j in 0..p {
        for i in 0..=j {
            acc += a[(i, j)] * b[(i, j)];
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BbConfig {
    pub max_iter: usize,
    /// Stop when the largest gradient entry falls below this.
    pub tol: f64,
    /// Nonmonotone reference window.
    pub window: usize,
    pub armijo_c: f64,
}

impl Default for BbConfig {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-7, window: 5, armijo_c: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BbInfo {
    pub iters: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub start_objective: f64,
    pub objective: f64,
}

/// Barzilai–Borwein descent on the Θ-block sub-objective, started from
/// `state.theta`. Step lengths alternate BB1/BB2, are clipped to
/// `[1e-10, 1e10]`, and are accepted by a nonmonotone Armijo test against the
/// max of the last `window` objective values. The best iterate is returned.
pub fn fbn_theta_update(state: &AdmmState, data: &Dataset, s: &Mat, cfg: &BbConfig) -> Result<(Mat, BbInfo)> {
    if data.kind() != DataKind::Binary {
        return Err(validation("FBN theta update needs binary data"));
    }
    if !(state.gamma > 0.0) {
        return Err(validation("gamma must be positive"));
    }
    let y = data.observations();
    let f = |t: &Mat| fbn_theta_objective(t, state, y, s);
    let grad = |t: &Mat| theta_block_gradient(t, state, y, s);

    let mut x = state.theta.clone();
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut info = BbInfo { start_objective: fx, ..Default::default() };
    let mut best = (fx, x.clone(), linalg::max_abs(&g));
    let mut history = vec![fx];
    let mut alpha = 1.0 / linalg::max_abs(&g).max(1.0);

    for k in 0..cfg.max_iter {
        let gmax = linalg::max_abs(&g);
        if gmax <= cfg.tol {
            info.converged = true;
            break;
        }
        let fref = history.iter().rev().take(cfg.window.max(1)).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let gg = vech_inner(&g, &g);
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x - &g * step;
            let fnew = f(&xn);
            if fnew.is_finite() && fnew <= fref - cfg.armijo_c * step * gg {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            break;
        };
        let gn = grad(&xn);
        let sk = &xn - &x;
        let yk = &gn - &g;
        let sty = vech_inner(&sk, &yk);
        alpha = if sty > 0.0 {
            if k % 2 == 0 {
                vech_inner(&sk, &sk) / sty
            } else {
                sty / vech_inner(&yk, &yk)
            }
        } else {
            step
        }
        .clamp(1e-10, 1e10);
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        info.iters = k + 1;
        if fx < best.0 {
            best = (fx, x.clone(), linalg::max_abs(&g));
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Numerical("FBN theta update produced a non-finite objective".into()));
    }
    info.objective = best.0;
    info.grad_norm = best.2;
    if best.2 <= cfg.tol {
        info.converged = true;
    }
    let mut out = best.1;
    linalg::symmetrize_in_place(&mut out);
    Ok((out, info))
}

/// Ω-block minimiser of `ρ₂ tr(QΩ) + ρ₁ Σ_{i<j} |ω_ij| + (γₙ/2) Σ_{i≤j} (Θ − Ω + W)²_ij`.
pub fn fbn_omega_update(state: &AdmmState, rho1: f64, rho2: f64, n: usize) -> Mat {
    let gn = state.gamma_n(n);
    let p = state.p();
    let mut out = Mat::zeros(p, p);
    for j in 0..p {
        for i in 0..=j {
            let v = state.theta[(i, j)] + state.w[(i, j)];
            let x = if i == j {
                v - rho2 * state.q[(i, i)] / gn
            } else {
                soft_threshold(v - 2.0 * rho2 * state.q[(i, j)] / gn, rho1 / gn)
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
    use crate::types::sample_covariance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_binary(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Dataset {
        let y = Mat::from_fn(n, p, |_, _| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
        Dataset::new(y, DataKind::Binary).unwrap()
    }

    fn random_sym(p: usize, scale: f64, rng: &mut ChaCha8Rng) -> Mat {
        linalg::symmetrize(&Mat::from_fn(p, p, |_, _| rng.random_range(-scale..scale)))
    }

    #[test]
    fn zero_parameters_give_p_log2() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_binary(20, 5, &mut rng);
        let t = PrecisionEstimate::symmetric(Mat::zeros(5, 5)).unwrap();
        let v = ising_pseudo_likelihood(&t, &d).unwrap();
        assert!((v - 5.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_two_node_case() {
        let (a, b, c) = (0.3, -0.7, 1.1);
        let t = Mat::from_row_slice(2, 2, &[a, b, b, c]);
        let d = Dataset::new(Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]), DataKind::Binary).unwrap();
        let v = ising_pseudo_likelihood(&PrecisionEstimate::symmetric(t).unwrap(), &d).unwrap();
        let hand = -(a + 2.0 * b + c) + (1.0 + (a + b).exp()).ln() + (1.0 + (c + b).exp()).ln();
        assert!((v - hand).abs() < 1e-12);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn pseudo_likelihood_is_convex_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_binary(30, 4, &mut rng);
        let s = sample_covariance(&d);
        for _ in 0..50 {
            let t1 = random_sym(4, 2.0, &mut rng);
            let t2 = random_sym(4, 2.0, &mut rng);
            let mid = (&t1 + &t2) * 0.5;
            let y = d.observations();
            let f = |t: &Mat| ising_pseudo_likelihood_raw(t, y, &s);
            assert!(f(&mid) <= 0.5 * (f(&t1) + f(&t2)) + 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let p = rng.random_range(2..=6);
            let d = random_binary(25, p, &mut rng);
            let s = sample_covariance(&d);
            let y = d.observations();
            let t = random_sym(p, 1.0, &mut rng);
            let g = ising_gradient(&t, y, &s);
            let h = 1e-5;
            for i in 0..p {
                for j in i..p {
                    let mut e = Mat::zeros(p, p);
                    e[(i, j)] = 1.0;
                    e[(j, i)] = 1.0;
                    let fd = (ising_pseudo_likelihood_raw(&(&t + &e * h), y, &s)
                        - ising_pseudo_likelihood_raw(&(&t - &e * h), y, &s))
                        / (2.0 * h);
                    let err = (fd - g[(i, j)]).abs() / g[(i, j)].abs().max(1e-3);
                    assert!(err < 1e-4, "({i},{j}) fd {fd} analytic {}", g[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn prox_dominated_limit_returns_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_binary(40, 4, &mut rng);
        let s = sample_covariance(&d);
        let mut st = AdmmState::identity(4, 1e8);
        st.omega = random_sym(4, 1.0, &mut rng);
        st.w = random_sym(4, 0.2, &mut rng);
        let (t, _) = fbn_theta_update(&st, &d, &s, &BbConfig::default()).unwrap();
        assert!((t - (&st.omega - &st.w)).abs().max() < 1e-6);
    }

    #[test]
    fn bb_decreases_objective_and_reaches_stationarity() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let p = 4;
            let d = random_binary(60, p, &mut rng);
            let s = sample_covariance(&d);
            let mut st = AdmmState::identity(p, 0.01);
            st.theta = random_sym(p, 1.0, &mut rng);
            st.omega = random_sym(p, 1.0, &mut rng);
            st.w = random_sym(p, 0.2, &mut rng);
            let (t, info) = fbn_theta_update(&st, &d, &s, &BbConfig::default()).unwrap();
            let y = d.observations();
            assert!(fbn_theta_objective(&t, &st, y, &s) < fbn_theta_objective(&st.theta, &st, y, &s));
            assert!(info.converged, "seed {seed}: {info:?}");
            // Analytic block gradient at the returned point against central differences.
            let g = theta_block_gradient(&t, &st, y, &s);
            let h = 1e-5;
            for i in 0..p {
                for j in i..p {
                    let mut e = Mat::zeros(p, p);
                    e[(i, j)] = 1.0;
                    e[(j, i)] = 1.0;
                    let fd = (fbn_theta_objective(&(&t + &e * h), &st, y, &s)
                        - fbn_theta_objective(&(&t - &e * h), &st, y, &s))
                        / (2.0 * h);
                    assert!((fd - g[(i, j)]).abs() < 1e-5 * g[(i, j)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn omega_update_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut st = AdmmState::identity(5, 0.03);
        st.theta = random_sym(5, 1.0, &mut rng);
        st.w = random_sym(5, 0.3, &mut rng);
        st.q = Mat::zeros(5, 5);
        let n = 11;
        let gn = st.gamma_n(n);
        let out = fbn_omega_update(&st, 0.02, 0.5, n);
        for i in 0..5 {
            for j in (i + 1)..5 {
                let v = st.theta[(i, j)] + st.w[(i, j)];
                assert!((out[(i, j)] - soft_threshold(v, 0.02 / gn)).abs() < 1e-15);
            }
        }
        let out = fbn_omega_update(&st, 0.0, 0.5, n);
        assert_eq!(out, &st.theta + &st.w);
    }

    #[test]
    fn omega_update_matches_coordinate_minimiser() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = rng.random_range(2..6);
            let mut st = AdmmState::identity(p, rng.random_range(0.01..0.1));
            st.theta = random_sym(p, 1.0, &mut rng);
            st.w = random_sym(p, 0.3, &mut rng);
            st.q = linalg::symmetrize(&Mat::from_fn(p, p, |_, _| rng.random_range(0.0..1.0)));
            let (rho1, rho2, n) = (rng.random_range(0.0..0.5), rng.random_range(0.0..1.0), 15);
            let out = fbn_omega_update(&st, rho1, rho2, n);
            let obj = |o: &Mat| {
                rho2 * linalg::frob_inner(&st.q, o)
                    + rho1 * linalg::l1_off_upper(o)
                    + 0.5 * st.gamma_n(n) * linalg::vech_norm_sq(&(&st.theta - o + &st.w))
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
