//! Step S1: minimise `tr(Q·G)` over the relaxed fair partition set.
//!
//! The set is `{Q ⪰ 0, q_ii = 1, 0 ≤ q_ij ≤ 1, |A₁Q| ≤ B₁}`. Two inner ADMM
//! schemes are used:
//!
//! * exact parity (`ε = 0`, or a single group, or a slack too loose to bind):
//!   `Q = N M Nᵀ` with `N` an orthonormal basis of `null(A₁)`, alternating a
//!   PSD projection in the reduced space with the box/diagonal projection;
//! * positive slack: three-block consensus of the PSD cone, the box/diagonal
//!   set and the fair-column set.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::fairness::{nullspace_basis, FairnessPolytope};
use crate::linalg::{self, Mat};
use crate::types::PartitionRelaxation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QSolverConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub inner_rho: f64,
}

impl Default for QSolverConfig {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-6, inner_rho: 1.0 }
    }
}

impl QSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(validation("q solver max_iter must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(validation("q solver tol must be > 0"));
        }
        if !(self.inner_rho > 0.0) {
            return Err(validation("q solver inner_rho must be > 0"));
        }
        Ok(())
    }
}

/// Diagnostics of one inner solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QSolveInfo {
    pub iters: usize,
    pub converged: bool,
    /// `max |X − Z|` at the last iteration.
    pub primal_res: f64,
    /// `ρ · max |Z − Z_prev|` at the last iteration.
    pub dual_res: f64,
    /// `tr(Q·G)` of the returned matrix.
    pub objective: f64,
    /// `ρ(‖ΔZ‖² + ‖ΔU‖²)` per iteration (non-increasing while ρ is unchanged).
    #[serde(skip)]
    pub combined_res: Vec<f64>,
}

enum Mode {
    /// Columns restricted to the span of `basis`; `None` means the identity.
    Exact { basis: Option<Mat> },
    Slack,
}

/// A reusable solver that keeps its iterates between calls for warm starts.
pub struct QSolver {
    poly: FairnessPolytope,
    mode: Mode,
    cfg: QSolverConfig,
    z: Option<Mat>,
    u: Vec<Mat>,
    last_q: Option<Mat>,
    /// Current penalty; adapted by residual balancing and kept across warm starts.
    rho: f64,
}

impl QSolver {
    pub fn new(poly: &FairnessPolytope, cfg: QSolverConfig) -> Result<Self> {
        cfg.validate()?;
        let mode = if poly.group_count() == 1 || slack_is_vacuous(poly) {
            Mode::Exact { basis: None }
        } else if poly.is_exact_parity() {
            let nb = nullspace_basis(&poly.a1, poly.group_count())?;
            Mode::Exact { basis: Some(nb.n_basis) }
        } else {
            Mode::Slack
        };
        Ok(Self { poly: poly.clone(), mode, cfg, z: None, u: Vec::new(), last_q: None, rho: cfg.inner_rho })
    }

    pub fn config(&self) -> &QSolverConfig {
        &self.cfg
    }

    /// Drops the warm-start state.
    pub fn reset(&mut self) {
        self.z = None;
        self.u.clear();
        self.last_q = None;
        self.rho = self.cfg.inner_rho;
    }

    pub fn solve(&mut self, g: &Mat) -> Result<(PartitionRelaxation, QSolveInfo)> {
        let p = self.poly.p();
        if g.nrows() != p || g.ncols() != p {
            return Err(validation(format!(
                "G is {}x{}, polytope has p = {p}",
                g.nrows(),
                g.ncols()
            )));
        }
        linalg::check_square(g, "G")?;
        if !linalg::is_symmetric(g, 1e-10) {
            return Err(validation("G must be symmetric"));
        }

        // Only off-diagonal entries of G matter because the diagonal of Q is fixed.
        let mut gs = g.clone();
        gs.fill_diagonal(0.0);
        let scale = linalg::max_abs(&gs);
        if scale == 0.0 {
            let q = match &self.last_q {
                Some(q) => q.clone(),
                None => Mat::from_element(p, p, 1.0),
            };
            let info = QSolveInfo { converged: true, objective: linalg::frob_inner(&q, g), ..Default::default() };
            self.last_q = Some(q.clone());
            return Ok((PartitionRelaxation::unchecked(q), info));
        }
        gs /= scale;

        let (x, mut info) = match &self.mode {
            Mode::Exact { .. } => self.run_exact(&gs),
            Mode::Slack => self.run_slack(&gs),
        }?;
        let q = pin(x);
        info.objective = linalg::frob_inner(&q, g);
        self.last_q = Some(q.clone());
        Ok((PartitionRelaxation::unchecked(q), info))
    }

    fn cold_start(&self) -> Mat {
        let p = self.poly.p();
        Mat::from_element(p, p, 1.0)
    }

    fn run_exact(&mut self, gs: &Mat) -> Result<(Mat, QSolveInfo)> {
        let mut rho = self.rho;
        let basis = match &self.mode {
            Mode::Exact { basis } => basis.as_ref(),
            Mode::Slack => unreachable!(),
        };
        let mut z = self.z.take().unwrap_or_else(|| self.cold_start());
        let mut u = match self.u.len() {
            1 => self.u.pop().unwrap(),
            _ => Mat::zeros(z.nrows(), z.ncols()),
        };
        let mut info = QSolveInfo::default();
        let mut x = z.clone();
        for it in 1..=self.cfg.max_iter {
            let y = &z - &u - gs / rho;
            x = match basis {
                None => linalg::project_psd(&y)?,
                Some(n) => {
                    let m = linalg::project_psd(&(n.tr_mul(&y) * n))?;
                    let mut out = n * m * n.transpose();
                    linalg::symmetrize_in_place(&mut out);
                    out
                }
            };
            let mut z_new = &x + &u;
            box_diag_in_place(&mut z_new);
            let dz = &z_new - &z;
            let du = &x - &z_new;
            u += &du;
            z = z_new;
            info.iters = it;
            info.primal_res = linalg::max_abs(&du);
            info.dual_res = rho * linalg::max_abs(&dz);
            info.combined_res
                .push(rho * (linalg::frob_norm_sq(&dz) + linalg::frob_norm_sq(&du)));
            if info.primal_res <= self.cfg.tol && info.dual_res <= self.cfg.tol {
                info.converged = true;
                break;
            }
            if let Some(f) = rebalance(it, info.primal_res, info.dual_res) {
                rho *= f;
                u /= f;
            }
        }
        self.rho = rho;
        self.z = Some(z);
        self.u = vec![u];
        Ok((x, info))
    }

    fn run_slack(&mut self, gs: &Mat) -> Result<(Mat, QSolveInfo)> {
        let mut rho = self.rho;
        let mut z = self.z.take().unwrap_or_else(|| self.cold_start());
        let mut u = if self.u.len() == 3 {
            std::mem::take(&mut self.u)
        } else {
            vec![Mat::zeros(z.nrows(), z.ncols()); 3]
        };
        let mut info = QSolveInfo::default();
        let mut x1 = z.clone();
        for it in 1..=self.cfg.max_iter {
            x1 = linalg::project_psd(&(&z - &u[0]))?;
            let mut x2 = &z - &u[1];
            box_diag_in_place(&mut x2);
            let mut x3 = &z - &u[2];
            self.poly.project_columns(&mut x3);

            let mut z_new = (&x1 + &u[0] + &x2 + &u[1] + &x3 + &u[2]) / 3.0;
            z_new -= gs / (3.0 * rho);
            let dz = &z_new - &z;
            let mut primal = 0.0_f64;
            let mut du_sq = 0.0;
            for (ub, xb) in u.iter_mut().zip([&x1, &x2, &x3]) {
                let du = xb - &z_new;
                primal = primal.max(linalg::max_abs(&du));
                du_sq += linalg::frob_norm_sq(&du);
                *ub += du;
            }
            z = z_new;
            info.iters = it;
            info.primal_res = primal;
            info.dual_res = rho * linalg::max_abs(&dz);
            info.combined_res.push(rho * (3.0 * linalg::frob_norm_sq(&dz) + du_sq));
            if info.primal_res <= self.cfg.tol && info.dual_res <= self.cfg.tol {
                info.converged = true;
                break;
            }
            if let Some(f) = rebalance(it, info.primal_res, info.dual_res) {
                rho *= f;
                u.iter_mut().for_each(|ub| *ub /= f);
            }
        }
        self.rho = rho;
        self.z = Some(z);
        self.u = u;
        Ok((x1, info))
    }
}

/// Residual balancing every 20 iterations: grow `ρ` when the primal
/// residual dominates, shrink it when the dual residual does.
fn rebalance(it: usize, primal: f64, dual: f64) -> Option<f64> {
    if it % 20 != 0 {
        return None;
    }
    if primal > 10.0 * dual {
        Some(2.0)
    } else if dual > 10.0 * primal {
        Some(0.5)
    } else {
        None
    }
}

/// The slack cannot bind when every per-group mean tolerance is at least 1,
/// since entries of `Q` lie in `[0, 1]`.
fn slack_is_vacuous(poly: &FairnessPolytope) -> bool {
    let mut sizes = vec![0.0; poly.group_count()];
    for &g in poly.groups() {
        sizes[g - 1] += 1.0;
    }
    poly.groups()
        .iter()
        .zip(&poly.epsilon)
        .all(|(&g, &e)| e / sizes[g - 1] >= 1.0)
}

/// Projection onto `{q_ii = 1, 0 ≤ q_ij ≤ 1}`.
fn box_diag_in_place(x: &mut Mat) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    x.fill_diagonal(1.0);
}

fn pin(mut x: Mat) -> Mat {
    linalg::symmetrize_in_place(&mut x);
    box_diag_in_place(&mut x);
    x
}

/// One-shot solve with a fresh solver.
pub fn solve_q_subproblem(
    g_omega: &Mat,
    polytope: &FairnessPolytope,
    cfg: &QSolverConfig,
) -> Result<PartitionRelaxation> {
    solve_q_subproblem_with_info(g_omega, polytope, cfg).map(|(q, _)| q)
}

pub fn solve_q_subproblem_with_info(
    g_omega: &Mat,
    polytope: &FairnessPolytope,
    cfg: &QSolverConfig,
) -> Result<(PartitionRelaxation, QSolveInfo)> {
    QSolver::new(polytope, *cfg)?.solve(g_omega)
}

/// Checks membership in the relaxed set up to `tol`: returns the largest
/// violation among symmetry, unit diagonal, box, PSD and slack constraints.
pub fn feasibility_violation(q: &Mat, poly: &FairnessPolytope) -> Result<f64> {
    let p = q.nrows();
    let mut v = linalg::asymmetry(q);
    for i in 0..p {
        v = v.max((q[(i, i)] - 1.0).abs());
    }
    for &x in q.iter() {
        v = v.max(-x).max(x - 1.0);
    }
    let (eig, _) = linalg::sym_eigen_desc(q)?;
    v = v.max(-eig.last().copied().unwrap_or(0.0));
    if poly.group_count() > 1 {
        v = v.max(poly.violation(q));
    }
    Ok(v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tight() -> QSolverConfig {
        QSolverConfig { max_iter: 20_000, tol: 1e-8, inner_rho: 1.0 }
    }

    #[test]
    fn identity_objective_is_trace() {
        let poly = FairnessPolytope::from_groups(&[1, 2, 1, 2, 1], 0.0).unwrap();
        let g = Mat::identity(5, 5);
        let (q, info) = solve_q_subproblem_with_info(&g, &poly, &tight()).unwrap();
        assert_eq!(q.values().trace(), 5.0);
        assert_eq!(info.objective, 5.0);
    }

    fn block_omega() -> Mat {
        let mut om = Mat::identity(4, 4) * 2.0;
        om[(0, 1)] = -0.9;
        om[(1, 0)] = -0.9;
        om[(2, 3)] = -0.9;
        om[(3, 2)] = -0.9;
        om
    }

    #[test]
    fn block_structure_is_favoured() {
        let om = block_omega();
        let g = &om * &om;
        let poly = FairnessPolytope::from_groups(&[1, 2, 1, 2], 0.0).unwrap();
        let (q, _) = solve_q_subproblem_with_info(&g, &poly, &tight()).unwrap();
        let q = q.values();
        let within = (q[(0, 1)] + q[(2, 3)]) / 2.0;
        let across = (q[(0, 2)] + q[(0, 3)] + q[(1, 2)] + q[(1, 3)]) / 4.0;
        assert!(within > across, "within {within} across {across}");
        assert!(feasibility_violation(q, &poly).unwrap() < 1e-6);
    }

    #[test]
    fn vacuous_slack_matches_single_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Mat::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let g = &a + a.transpose();
        let loose = FairnessPolytope::from_groups(&[1, 2, 1, 2, 1, 2], 1e9).unwrap();
        let single = FairnessPolytope::unconstrained(6);
        let q1 = solve_q_subproblem(&g, &loose, &tight()).unwrap();
        let q2 = solve_q_subproblem(&g, &single, &tight()).unwrap();
        assert!((q1.values() - q2.values()).norm() < 1e-5);
    }

    #[test]
    fn slack_path_is_feasible_and_between_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let groups = [1, 2, 3, 1, 2, 3];
        for _ in 0..5 {
            let a = Mat::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            let g = &a + a.transpose();
            let exact = FairnessPolytope::from_groups(&groups, 0.0).unwrap();
            let slack = FairnessPolytope::from_groups(&groups, 0.3).unwrap();
            let free = FairnessPolytope::unconstrained(6);
            let (qe, ie) = solve_q_subproblem_with_info(&g, &exact, &tight()).unwrap();
            let (qs, is) = solve_q_subproblem_with_info(&g, &slack, &tight()).unwrap();
            let (_, i_free) = solve_q_subproblem_with_info(&g, &free, &tight()).unwrap();
            assert!(feasibility_violation(qe.values(), &exact).unwrap() < 1e-6);
            assert!(feasibility_violation(qs.values(), &slack).unwrap() < 1e-6);
            // Nested feasible sets order the optimal values.
            assert!(i_free.objective <= is.objective + 1e-5);
            assert!(is.objective <= ie.objective + 1e-5);
        }
    }

    #[test]
    fn combined_residual_is_mostly_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = Mat::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let g = &a + a.transpose();
        for eps in [0.0, 0.2] {
            let poly = FairnessPolytope::from_groups(&[1, 2, 1, 2, 1, 2, 1, 2], eps).unwrap();
            let (_, info) = solve_q_subproblem_with_info(&g, &poly, &tight()).unwrap();
            let r = &info.combined_res;
            let ok = r.windows(2).filter(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-300).count();
            assert!(ok as f64 >= 0.9 * (r.len() - 1) as f64);
        }
    }

    #[test]
    fn warm_start_reduces_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Mat::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0));
        let g = &a + a.transpose();
        let poly = FairnessPolytope::from_groups(&[1, 2, 1, 2, 1, 2, 1, 2, 1, 2], 0.0).unwrap();
        let mut solver = QSolver::new(&poly, tight()).unwrap();
        let (_, first) = solver.solve(&g).unwrap();
        let (_, second) = solver.solve(&(&g * 1.001)).unwrap();
        assert!(second.iters < first.iters);
    }

    #[test]
    fn rejects_bad_input() {
        let poly = FairnessPolytope::unconstrained(3);
        let mut g = Mat::identity(3, 3);
        g[(0, 1)] = 1.0;
        assert!(solve_q_subproblem(&g, &poly, &QSolverConfig::default()).is_err());
        assert!(solve_q_subproblem(&Mat::identity(2, 2), &poly, &QSolverConfig::default()).is_err());
        let bad = QSolverConfig { tol: 0.0, ..Default::default() };
        assert!(QSolver::new(&poly, bad).is_err());
    }
}
