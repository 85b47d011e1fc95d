//! Demographic-parity constraint matrices, the nullspace of `A₁`, and the
//! half-vectorised graph operator with its adjoint.

use nalgebra::SVD;
use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::io::rows_of;
use crate::linalg::Mat;
use crate::types::group_count;

/// `r_ij = 1` iff nodes `i` and `j` belong to the same group.
pub fn build_group_matrix(groups: &[usize]) -> Result<Mat> {
    group_count(groups)?;
    let p = groups.len();
    Ok(Mat::from_fn(p, p, |i, j| if groups[i] == groups[j] { 1.0 } else { 0.0 }))
}

/// The constraint set for the relaxed partition matrix.
///
/// `a1 = R(I − J/p)` and `b1 = diag(ε)J`. A column `q` of `Q` gives
/// `(A₁q)_i = n_h (m_h − m̄)` where `h` is the group of node `i`, `n_h` its
/// size, `m_h` the mean of `q` over that group and `m̄` the overall mean. The
/// solver enforces the two-sided slack `|A₁Q| ≤ B₁` entrywise.
#[derive(Debug, Clone, Serialize)]
pub struct FairnessPolytope {
    #[serde(serialize_with = "ser_mat")]
    pub r: Mat,
    #[serde(serialize_with = "ser_mat")]
    pub a1: Mat,
    #[serde(serialize_with = "ser_mat")]
    pub b1: Mat,
    #[serde(skip)]
    pub a: Mat,
    #[serde(skip)]
    pub b: Mat,
    pub epsilon: Vec<f64>,
    #[serde(skip)]
    groups: Vec<usize>,
    #[serde(skip)]
    h: usize,
}

fn ser_mat<S: serde::Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    rows_of(m).serialize(s)
}

/// Builds the polytope from a group matrix. Groups are recovered as the
/// connected blocks of `r`; `r` must describe disjoint groups.
pub fn build_fairness_constraints(r: &Mat, epsilon: &[f64]) -> Result<FairnessPolytope> {
    let p = r.nrows();
    if r.ncols() != p {
        return Err(validation("group matrix must be square"));
    }
    if epsilon.len() != p {
        return Err(validation(format!("epsilon has length {}, expected {p}", epsilon.len())));
    }
    if let Some(e) = epsilon.iter().find(|e| !(**e >= 0.0)) {
        return Err(validation(format!("epsilon must be nonnegative, got {e}")));
    }
    let groups = groups_from_matrix(r)?;
    let h = *groups.iter().max().unwrap();

    let centering = Mat::identity(p, p) - Mat::from_element(p, p, 1.0 / p as f64);
    let a1 = r * centering;
    let b1 = Mat::from_fn(p, p, |i, _| epsilon[i]);
    let mut a = Mat::zeros(2 * p, p);
    a.rows_mut(0, p).copy_from(&a1);
    a.rows_mut(p, p).copy_from(&Mat::identity(p, p));
    let mut b = Mat::zeros(2 * p, p);
    b.rows_mut(0, p).copy_from(&b1);
    b.rows_mut(p, p).fill(1.0);
    Ok(FairnessPolytope { r: r.clone(), a1, b1, a, b, epsilon: epsilon.to_vec(), groups, h })
}

fn groups_from_matrix(r: &Mat) -> Result<Vec<usize>> {
    let p = r.nrows();
    let mut groups = vec![0usize; p];
    let mut next = 0;
    for i in 0..p {
        if r[(i, i)] != 1.0 {
            return Err(validation(format!("group matrix diagonal entry {i} is not 1")));
        }
        if groups[i] == 0 {
            next += 1;
            for j in i..p {
                if r[(i, j)] == 1.0 {
                    groups[j] = next;
                }
            }
        }
    }
    for i in 0..p {
        for j in 0..p {
            let same = groups[i] == groups[j];
            let v = r[(i, j)];
            if (same && v != 1.0) || (!same && v != 0.0) {
                return Err(validation("group matrix does not describe disjoint groups"));
            }
        }
    }
    Ok(groups)
}

impl FairnessPolytope {
    /// Convenience constructor broadcasting a scalar slack to every node.
    pub fn from_groups(groups: &[usize], epsilon: f64) -> Result<Self> {
        let r = build_group_matrix(groups)?;
        build_fairness_constraints(&r, &vec![epsilon; groups.len()])
    }

    /// A polytope with a single group, where the parity constraint is vacuous.
    pub fn unconstrained(p: usize) -> Self {
        Self::from_groups(&vec![1; p], 0.0).expect("single group is always valid")
    }

    pub fn p(&self) -> usize {
        self.r.nrows()
    }

    pub fn group_count(&self) -> usize {
        self.h
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    /// True when the constraint reduces to `A₁Q = 0` (or is vacuous for `H = 1`).
    pub fn is_exact_parity(&self) -> bool {
        self.h == 1 || self.epsilon.iter().all(|&e| e == 0.0)
    }

    /// `max(|A₁Q| − B₁, 0)` entrywise, as a single violation number.
    pub fn violation(&self, q: &Mat) -> f64 {
        let aq = &self.a1 * q;
        aq.iter()
            .zip(self.b1.iter())
            .fold(0.0_f64, |m, (x, b)| m.max(x.abs() - b))
    }

    /// Per-group column tolerance `e_h = min_{i∈h} ε_i / n_h` on `|m_h − m̄|`.
    fn mean_tolerances(&self) -> (Vec<f64>, Vec<f64>) {
        let mut sizes = vec![0.0; self.h];
        let mut tol = vec![f64::INFINITY; self.h];
        for (i, &g) in self.groups.iter().enumerate() {
            sizes[g - 1] += 1.0;
            tol[g - 1] = tol[g - 1].min(self.epsilon[i]);
        }
        for (t, n) in tol.iter_mut().zip(&sizes) {
            *t /= n;
        }
        (sizes, tol)
    }

    /// Euclidean projection of every column of `x` onto `{q : |A₁q| ≤ B₁}`.
    ///
    /// Only the group means of a column are constrained, so the projection
    /// shifts each group's entries by a constant. The overall mean is
    /// preserved and the shifted means solve a box-constrained problem with a
    /// single linear equality, handled by bisection on its multiplier.
    pub fn project_columns(&self, x: &mut Mat) {
        if self.h == 1 {
            return;
        }
        let (sizes, tol) = self.mean_tolerances();
        let p = x.nrows() as f64;
        let mut means = vec![0.0; self.h];
        let mut shift = vec![0.0; self.h];
        for mut col in x.column_iter_mut() {
            means.iter_mut().for_each(|m| *m = 0.0);
            for (i, &g) in self.groups.iter().enumerate() {
                means[g - 1] += col[i];
            }
            let total: f64 = means.iter().sum();
            let mbar = total / p;
            for (m, n) in means.iter_mut().zip(&sizes) {
                *m /= n;
            }
            let clipped = |lam: f64, k: usize| (means[k] - lam).clamp(mbar - tol[k], mbar + tol[k]);
            if (0..self.h).all(|k| (means[k] - mbar).abs() <= tol[k]) {
                continue;
            }
            // Σ n_h clip(m_h − λ) is nonincreasing in λ; find its root at p·m̄.
            let excess =
                |lam: f64| (0..self.h).map(|k| sizes[k] * clipped(lam, k)).sum::<f64>() - total;
            let spread = means.iter().fold(0.0_f64, |a, m| a.max((m - mbar).abs()));
            let (mut lo, mut hi) = (-spread - 1.0, spread + 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if excess(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-16 * (1.0 + spread) {
                    break;
                }
            }
            let lam = 0.5 * (lo + hi);
            for k in 0..self.h {
                shift[k] = clipped(lam, k) - means[k];
            }
            // Remove the residual bisection error from the overall mean.
            let drift: f64 = (0..self.h).map(|k| sizes[k] * shift[k]).sum::<f64>() / p;
            for (i, &g) in self.groups.iter().enumerate() {
                col[i] += shift[g - 1] - drift;
            }
        }
    }
}

/// Orthonormal basis of `null(A₁)` stored as columns.
#[derive(Debug, Clone)]
pub struct NullspaceBasis {
    pub n_basis: Mat,
}

impl NullspaceBasis {
    pub fn dim(&self) -> usize {
        self.n_basis.ncols()
    }
}

/// Computes `null(a1)` by SVD with the rank threshold `1e-8·σ_max`. The
/// detected rank must equal `h − 1`.
pub fn nullspace_basis(a1: &Mat, h: usize) -> Result<NullspaceBasis> {
    let p = a1.nrows();
    if a1.ncols() != p {
        return Err(validation("A1 must be square"));
    }
    if h == 0 || h > p {
        return Err(validation(format!("group count {h} out of range for p = {p}")));
    }
    let svd = SVD::try_new(a1.clone(), false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of A1 did not converge".into()))?;
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax <= 1e-10 * p as f64 {
        if h != 1 {
            return Err(Error::Structural(format!("A1 has rank 0, expected {}", h - 1)));
        }
        return Ok(NullspaceBasis { n_basis: Mat::identity(p, p) });
    }
    let thresh = 1e-8 * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > thresh).count();
    if rank != h - 1 {
        return Err(Error::Structural(format!("A1 has rank {rank}, expected {}", h - 1)));
    }
    let v_t = svd.v_t.expect("requested V");
    let null_rows: Vec<usize> = (0..p).filter(|&k| svd.singular_values[k] <= thresh).collect();
    let mut n_basis = Mat::zeros(p, null_rows.len());
    for (c, &k) in null_rows.iter().enumerate() {
        n_basis.set_column(c, &v_t.row(k).transpose());
    }
    Ok(NullspaceBasis { n_basis })
}

/// Sign applied to the off-diagonal entries of [`graph_operator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GraphSign {
    /// `[𝒜w]_ij = −w_k` (default).
    #[default]
    Laplacian,
    /// `[𝒜w]_ij = +w_k`.
    Positive,
}

impl GraphSign {
    fn factor(self) -> f64 {
        match self {
            GraphSign::Laplacian => -1.0,
            GraphSign::Positive => 1.0,
        }
    }
}

/// `p` such that `p(p−1)/2 = len`.
pub fn dim_from_half_len(len: usize) -> Result<usize> {
    let p = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    if p < 2 || p * (p - 1) / 2 != len {
        return Err(validation(format!("length {len} is not p(p-1)/2 for any p >= 2")));
    }
    Ok(p)
}

/// Position in `w` of the pair `(i, j)` with `i > j` (0-based), i.e. the
/// column-major order of the strict lower triangle.
pub fn pair_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i > j);
    j * (2 * p - j - 1) / 2 + (i - j - 1)
}

pub fn graph_operator(w: &[f64]) -> Result<Mat> {
    graph_operator_signed(w, GraphSign::default())
}

/// Symmetric matrix with off-diagonals `sign·w` (column-major lower order)
/// and each diagonal entry equal to the sum of the off-diagonals in its row.
pub fn graph_operator_signed(w: &[f64], sign: GraphSign) -> Result<Mat> {
    let p = dim_from_half_len(w.len())?;
    let s = sign.factor();
    let mut m = Mat::zeros(p, p);
    for j in 0..p {
        for i in (j + 1)..p {
            let v = s * w[pair_index(p, i, j)];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    for i in 0..p {
        let row: f64 = (0..p).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = row;
    }
    Ok(m)
}

pub fn adjoint_graph_operator(z: &Mat) -> Result<Vec<f64>> {
    adjoint_graph_operator_signed(z, GraphSign::default())
}

/// `(𝒜*Z)_k = sign·(z_ij + z_ji + z_ii + z_jj)` for the pair `k = (i, j)`.
pub fn adjoint_graph_operator_signed(z: &Mat, sign: GraphSign) -> Result<Vec<f64>> {
    let p = z.nrows();
    if z.ncols() != p || p < 2 {
        return Err(validation("adjoint graph operator needs a square matrix with p >= 2"));
    }
    let s = sign.factor();
    let mut out = vec![0.0; p * (p - 1) / 2];
    for j in 0..p {
        for i in (j + 1)..p {
            out[pair_index(p, i, j)] = s * (z[(i, j)] + z[(j, i)] + z[(i, i)] + z[(j, j)]);
        }
    }
    Ok(out)
}
