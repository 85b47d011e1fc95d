//! The outer alternating loop: Q-step, Ω-step, Θ-step, dual update.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_partition, select_k, spectral_embedding};
use crate::error::{validation, Error, Result};
use crate::fairness::FairnessPolytope;
use crate::linalg::{self, Mat};
use crate::losses::{self, AdmmState, BbConfig, LossKind, LossModel};
use crate::qsolver::{QSolver, QSolverConfig};
use crate::types::{sample_covariance, Dataset, FitResult, IterationRecord, PartitionRelaxation, PrecisionEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Initial dual parameter `γ` (the proximal weight is `γ·n`).
    pub gamma: f64,
    /// Tolerance on `max(‖ΔΘ‖²/‖Θ‖², ‖ΔQ‖²/‖Q‖², ‖Θ−Ω‖²/‖Θ‖²)`.
    pub nu: f64,
    pub max_outer_iter: usize,
    pub q_cfg: QSolverConfig,
    pub bb_cfg: BbConfig,
    /// Fairness slack, used by [`fit_dataset`] to build the constraint set.
    pub epsilon: f64,
    pub seed: u64,
    /// Number of communities; chosen by the largest eigengap of `Q̂` when absent.
    pub k: Option<usize>,
    pub restarts: usize,
    /// Double `γ` when the residuals have not improved for this many iterations (0 disables).
    pub stagnation_window: usize,
    pub max_gamma: f64,
    /// Subtract the mean off-diagonal of `G(Ω)` before the Q-step. Without
    /// it the Q-step returns the all-ones matrix whenever `G(Ω)` has mostly
    /// nonpositive off-diagonals.
    pub center_g: bool,
    /// Rescale `γ` every 10 iterations to keep the primal residual
    /// `‖Θ−Ω‖` and the dual residual `γ·n·‖ΔΩ‖` within a factor of 10.
    pub balance_gamma: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            nu: 1e-5,
            max_outer_iter: 500,
            q_cfg: QSolverConfig { max_iter: 200, ..QSolverConfig::default() },
            bb_cfg: BbConfig::default(),
            epsilon: 1e-3,
            seed: 0,
            k: None,
            restarts: 20,
            stagnation_window: 50,
            max_gamma: 1e4,
            center_g: true,
            balance_gamma: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(validation(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.nu > 0.0) {
            return Err(validation(format!("nu must be > 0, got {}", self.nu)));
        }
        if self.max_outer_iter == 0 {
            return Err(validation("max_outer_iter must be >= 1"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(validation(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.restarts == 0 {
            return Err(validation("restarts must be >= 1"));
        }
        if self.k == Some(0) {
            return Err(validation("k must be >= 1"));
        }
        self.q_cfg.validate()
    }
}

/// `G ← G − ḡ(J − I)` with `ḡ` the mean off-diagonal entry.
pub fn center_off_diagonal(g: &mut Mat) {
    let p = g.nrows();
    if p < 2 {
        return;
    }
    let total: f64 = g.sum() - g.trace();
    let mean = total / (p * (p - 1)) as f64;
    for j in 0..p {
        for i in 0..p {
            if i != j {
                g[(i, j)] -= mean;
            }
        }
    }
}

const MIN_GAMMA: f64 = 1e-8;

fn rel_change(new: &Mat, old: &Mat) -> f64 {
    linalg::frob_norm_sq(&(new - old)) / linalg::frob_norm_sq(new).max(f64::MIN_POSITIVE)
}

/// `n`-scaled objective at the current Θ iterate.
fn objective(model: &LossModel, st: &AdmmState, data: &Dataset, s: &Mat) -> f64 {
    let n = data.n();
    let rho1 = model.rho1 * n as f64;
    let val = match model.kind {
        LossKind::Fconcord => {
            losses::fconcord_objective(
                &match PrecisionEstimate::new(st.theta.clone()) {
                    Ok(t) => t,
                    Err(_) => return f64::NAN,
                },
                &PartitionRelaxation::unchecked(st.q.clone()),
                s,
                rho1,
                model.rho2,
                n,
            )
        }
        LossKind::Fglasso => losses::fglasso_objective(
            &match PrecisionEstimate::new(st.theta.clone()) {
                Ok(t) => t,
                Err(_) => return f64::NAN,
            },
            &PartitionRelaxation::unchecked(st.q.clone()),
            s,
            rho1,
            model.rho2,
            n,
        ),
        LossKind::Fbn => Ok(losses::fbn_objective(&st.theta, &st.q, data.observations(), s, rho1, model.rho2)),
    };
    val.unwrap_or(f64::NAN)
}

/// Sparse estimate: off-diagonals of Ω with the diagonal of Θ.
fn estimate(st: &AdmmState) -> Mat {
    let mut out = st.omega.clone();
    for i in 0..out.nrows() {
        out[(i, i)] = st.theta[(i, i)];
    }
    out
}

/// Runs the alternating scheme and extracts communities from `Q̂`.
pub fn fit(model: &LossModel, data: &Dataset, polytope: &FairnessPolytope, cfg: &FitConfig) -> Result<FitResult> {
    model.validate()?;
    cfg.validate()?;
    if data.kind() != model.data_kind() {
        return Err(validation(format!(
            "{} expects {:?} data, got {:?}",
            model.kind,
            model.data_kind(),
            data.kind()
        )));
    }
    let p = data.p();
    let n = data.n();
    if polytope.p() != p {
        return Err(validation(format!("polytope has p = {}, data has p = {p}", polytope.p())));
    }

    let s = sample_covariance(data);
    let mut st = AdmmState::identity(p, cfg.gamma);
    let mut qsolver = QSolver::new(polytope, cfg.q_cfg)?;
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut best_res = f64::INFINITY;
    let mut since_best = 0usize;
    let start = Instant::now();

    for iter in 1..=cfg.max_outer_iter {
        let prev = st.clone();

        // S1
        let mut g = model.g_of(&st.omega);
        if cfg.center_g {
            center_off_diagonal(&mut g);
        }
        let (q, qinfo) = qsolver.solve(&g)?;
        st.q = q.values().clone();

        // S2
        match model.kind {
            LossKind::Fconcord => {
                losses::concord_omega_step(&mut st, model.rho1, model.rho2, n);
            }
            LossKind::Fglasso => st.omega = losses::glasso_omega_update(&st, model.rho1, model.rho2, n),
            LossKind::Fbn => st.omega = losses::fbn_omega_update(&st, model.rho1, model.rho2, n),
        }

        // S3
        match model.kind {
            LossKind::Fconcord => {
                losses::concord_theta_step(&mut st, &s, model.rho2, n);
            }
            LossKind::Fglasso => st.theta = losses::glasso_theta_update(&st, &s, model.rho2, n)?,
            LossKind::Fbn => st.theta = losses::fbn_theta_update(&st, data, &s, &cfg.bb_cfg)?.0,
        }

        // S4
        let resid = &st.theta - &st.omega;
        st.w += &resid;

        let obj = objective(model, &st, data, &s);
        if !obj.is_finite() || st.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iter, last_state: Box::new(prev) });
        }
        let dtheta_rel = rel_change(&st.theta, &prev.theta);
        let dq_rel = rel_change(&st.q, &prev.q);
        let primal_res = linalg::frob_norm_sq(&resid) / linalg::frob_norm_sq(&st.theta).max(f64::MIN_POSITIVE);
        diagnostics.push(IterationRecord {
            iter,
            obj,
            primal_res,
            dq_rel,
            dtheta_rel,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            gamma: st.gamma,
            q_iters: qinfo.iters,
            q_converged: qinfo.converged,
        });

        let res = dtheta_rel.max(dq_rel).max(primal_res);
        if res <= cfg.nu {
            converged = true;
            break;
        }
        if res < 0.99 * best_res {
            best_res = res;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.balance_gamma && iter % 10 == 0 {
            let r = linalg::frob_norm_sq(&resid).sqrt();
            let d = st.gamma * n as f64 * linalg::frob_norm_sq(&(&st.omega - &prev.omega)).sqrt();
            let factor = if r > 10.0 * d && st.gamma * 2.0 <= cfg.max_gamma {
                2.0
            } else if d > 10.0 * r && st.gamma / 2.0 >= MIN_GAMMA {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                st.gamma *= factor;
                st.w /= factor;
            }
        }
        if cfg.stagnation_window > 0 && since_best >= cfg.stagnation_window && st.gamma * 2.0 <= cfg.max_gamma {
            // The scaled dual W = Λ/γ halves when γ doubles.
            st.gamma *= 2.0;
            st.w /= 2.0;
            since_best = 0;
            best_res = f64::INFINITY;
        }
    }

    let theta_hat = estimate(&st);
    let theta = match model.kind {
        LossKind::Fbn => PrecisionEstimate::symmetric(theta_hat)?,
        _ => PrecisionEstimate::new(theta_hat)?,
    };
    let q = PartitionRelaxation::unchecked(st.q.clone());
    let k = match cfg.k {
        Some(k) => k.min(p),
        None => select_k(&q, polytope.group_count())?,
    };
    let emb = spectral_embedding(&q, k)?;
    let labels = kmeans_partition(&emb, k, cfg.restarts, cfg.seed)?;
    Ok(FitResult {
        theta,
        q,
        labels: labels.labels,
        k: labels.k,
        diagnostics,
        converged,
        model: *model,
        config: cfg.clone(),
    })
}

/// [`fit`] with the constraint set built from the dataset's demographics and
/// `cfg.epsilon` (a single group when no demographics are attached).
pub fn fit_dataset(model: &LossModel, data: &Dataset, epsilon: f64, cfg: &FitConfig) -> Result<FitResult> {
    let poly = match data.demographics() {
        Some(g) => FairnessPolytope::from_groups(g, epsilon)?,
        None => FairnessPolytope::unconstrained(data.p()),
    };
    let cfg = FitConfig { epsilon, ..cfg.clone() };
    fit(model, data, &poly, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DataKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(Mat::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng)), DataKind::Continuous).unwrap()
    }

    #[test]
    fn rejects_incompatible_kind() {
        let d = gaussian(20, 3, 1);
        let poly = FairnessPolytope::unconstrained(3);
        let r = fit(&LossModel::fbn(0.1, 0.1), &d, &poly, &FitConfig::default());
        assert!(matches!(r, Err(Error::Validation(_))));
        let bad = FitConfig { gamma: 0.0, ..Default::default() };
        assert!(fit(&LossModel::fconcord(0.1, 0.1), &d, &poly, &bad).is_err());
    }

    #[test]
    fn two_node_glasso_recovers_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 2000;
        let y = Mat::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
        let mix = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
        let d = Dataset::new(y * mix.transpose(), DataKind::Continuous).unwrap();
        let s = sample_covariance(&d);
        let sinv = s.clone().try_inverse().unwrap();
        let cfg = FitConfig { nu: 1e-10, max_outer_iter: 5000, k: Some(1), ..Default::default() };
        let res = fit(&LossModel::fglasso(1e-6, 0.0), &d, &FairnessPolytope::unconstrained(2), &cfg).unwrap();
        let err = (res.theta.values() - &sinv).norm() / sinv.norm();
        assert!(err < 0.05, "relative error {err}");
    }

    #[test]
    fn dual_update_and_diagnostics_are_recorded() {
        let d = gaussian(50, 6, 2);
        let poly = FairnessPolytope::from_groups(&[1, 2, 1, 2, 1, 2], 0.0).unwrap();
        let cfg = FitConfig { max_outer_iter: 30, k: Some(2), ..Default::default() };
        let res = fit(&LossModel::fconcord(0.05, 0.05), &d, &poly, &cfg).unwrap();
        assert!(!res.diagnostics.is_empty());
        assert!(res.diagnostics.iter().all(|r| r.obj.is_finite()));
        assert_eq!(res.labels.len(), 6);
        let again = fit(&LossModel::fconcord(0.05, 0.05), &d, &poly, &cfg).unwrap();
        assert_eq!(res.theta, again.theta);
        assert_eq!(res.labels, again.labels);
    }
}
