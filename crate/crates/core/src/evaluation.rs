//! Clustering, recovery and fairness metrics, plus the BIC-type score used
//! for penalty selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::linalg::Mat;
use crate::types::{sample_covariance, Dataset};

/// Magnitude above which an estimated entry counts as an edge.
pub const EDGE_THRESHOLD: f64 = 1e-5;

/// Default constant in the BIC fit term.
pub const BIC_C: f64 = 0.25;

/// Undefined metrics serialize as `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ce: Option<f64>,
    pub pcee: Option<f64>,
    pub balance: Option<f64>,
    pub bic: Option<f64>,
    #[serde(flatten)]
    pub extras: BTreeMap<String, f64>,
}

/// Fraction of node pairs on which the two labelings disagree about
/// co-membership.
pub fn clustering_error(est: &[usize], truth: &[usize]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(validation(format!("label lengths differ: {} vs {}", est.len(), truth.len())));
    }
    let p = est.len();
    if p < 2 {
        return Ok(0.0);
    }
    let mut bad = 0usize;
    for i in 0..p {
        for j in (i + 1)..p {
            if (est[i] == est[j]) != (truth[i] == truth[j]) {
                bad += 1;
            }
        }
    }
    Ok(bad as f64 / (p * (p - 1) / 2) as f64)
}

/// Share of true off-diagonal edges whose estimate exceeds [`EDGE_THRESHOLD`].
pub fn pcee(est: &Mat, truth: &Mat) -> Result<f64> {
    if est.shape() != truth.shape() || est.nrows() != est.ncols() {
        return Err(validation("pcee needs two square matrices of equal shape"));
    }
    let p = est.nrows();
    let (mut edges, mut hit) = (0usize, 0usize);
    for j in 0..p {
        for i in (j + 1)..p {
            if truth[(i, j)] != 0.0 {
                edges += 1;
                if est[(i, j)].abs() > EDGE_THRESHOLD {
                    hit += 1;
                }
            }
        }
    }
    if edges == 0 {
        return Err(Error::Undefined("true graph has no edges".into()));
    }
    Ok(hit as f64 / edges as f64)
}

/// Mean over nodes of the smallest ratio between two communities' counts of
/// the node's group-mates (`r_ij = 1`). A node scores 0 when some community
/// holds none of its group.
pub fn balance(labels: &[usize], r: &Mat) -> Result<f64> {
    let p = labels.len();
    if r.nrows() != p || r.ncols() != p {
        return Err(validation(format!("group matrix is {}x{}, labels have length {p}", r.nrows(), r.ncols())));
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut total = 0.0;
    let mut counts = vec![0usize; ids.len()];
    for i in 0..p {
        counts.iter_mut().for_each(|c| *c = 0);
        for j in 0..p {
            if r[(i, j)] == 1.0 {
                let c = ids.binary_search(&labels[j]).expect("label present");
                counts[c] += 1;
            }
        }
        let lo = *counts.iter().min().unwrap();
        let hi = *counts.iter().max().unwrap();
        if lo > 0 {
            total += lo as f64 / hi as f64;
        }
    }
    Ok(total / p as f64)
}

/// [`balance`] with the group matrix built from group ids.
pub fn balance_from_groups(labels: &[usize], groups: &[usize]) -> Result<f64> {
    balance(labels, &crate::fairness::build_group_matrix(groups)?)
}

/// Share of the selections made by users in `group_rows` that fall in
/// `category_cols`.
pub fn preference_ratio(y: &Mat, group_rows: &[usize], category_cols: &[usize]) -> Result<f64> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(validation("preference ratio needs binary data"));
    }
    if group_rows.iter().any(|&u| u >= y.nrows()) || category_cols.iter().any(|&i| i >= y.ncols()) {
        return Err(validation("index out of range"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &u in group_rows {
        let row = y.row(u);
        den += row.sum();
        num += category_cols.iter().map(|&i| row[i]).sum::<f64>();
    }
    if den == 0.0 {
        return Err(Error::Undefined("no selections in the user group".into()));
    }
    Ok(num / den)
}

/// `n(−Σ log θ_ii² + tr(((1+c)S + Q)Θ²)) + log(n)·#{i ≤ j : |θ_ij| > 1e-5}`.
pub fn bic_score(theta: &Mat, q: &Mat, data: &Dataset, c: f64) -> Result<f64> {
    let s = sample_covariance(data);
    bic_from_covariance(theta, q, &s, data.n(), c)
}

pub fn bic_from_covariance(theta: &Mat, q: &Mat, s: &Mat, n: usize, c: f64) -> Result<f64> {
    let p = theta.nrows();
    if theta.ncols() != p || q.shape() != (p, p) || s.shape() != (p, p) {
        return Err(validation("bic: shape mismatch"));
    }
    if (0..p).any(|i| !(theta[(i, i)] > 0.0)) {
        return Err(Error::Domain("bic needs a positive diagonal".into()));
    }
    let nf = n as f64;
    let logdet: f64 = (0..p).map(|i| 2.0 * theta[(i, i)].ln()).sum();
    let t2 = theta * theta;
    let m = s * (1.0 + c) + q;
    let fit = crate::linalg::frob_inner(&m, &t2);
    let mut count = 0usize;
    for j in 0..p {
        for i in j..p {
            if theta[(i, j)].abs() > EDGE_THRESHOLD {
                count += 1;
            }
        }
    }
    Ok(nf * (-logdet + fit) + nf.ln() * count as f64)
}

/// One grid point; `bic` is `None` when the fit failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneCandidate {
    pub rho1: f64,
    pub rho2: f64,
    pub bic: Option<f64>,
}

/// Grid point with the smallest BIC; ties go to the larger `rho1`, then to
/// the earlier entry.
pub fn tune_select(grid: &[TuneCandidate]) -> Result<TuneCandidate> {
    let mut best: Option<TuneCandidate> = None;
    for c in grid {
        let Some(b) = c.bic.filter(|b| b.is_finite()) else { continue };
        best = match best {
            None => Some(*c),
            Some(cur) => {
                let cb = cur.bic.unwrap();
                if b < cb || (b == cb && c.rho1 > cur.rho1) {
                    Some(*c)
                } else {
                    Some(cur)
                }
            }
        };
    }
    best.ok_or_else(|| Error::Numerical("every grid fit failed".into()))
}

/// Root mean squared difference between two equal-shape matrices.
pub fn rmse(a: &Mat, b: &Mat) -> Result<f64> {
    if a.shape() != b.shape() || a.is_empty() {
        return Err(validation("rmse: shape mismatch"));
    }
    Ok(((a - b).norm_squared() / a.len() as f64).sqrt())
}
