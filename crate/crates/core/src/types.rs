//! Shared data model: datasets, estimates and fit results.

use serde::{Deserialize, Serialize};

use crate::admm::FitConfig;
use crate::error::{validation, Error, Result};
use crate::linalg::{self, Mat};
use crate::losses::LossModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Continuous,
    Binary,
}

/// An `n × p` observation matrix. Columns are the graph nodes.
///
/// Demographic group ids, when present, are attributes of the `p` nodes and
/// take values in `1..=H` with every group non-empty.
#[derive(Debug, Clone)]
pub struct Dataset {
    observations: Mat,
    kind: DataKind,
    demographics: Option<Vec<usize>>,
    node_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(observations: Mat, kind: DataKind) -> Result<Self> {
        let n = observations.nrows();
        let p = observations.ncols();
        if n < 2 || p < 2 {
            return Err(validation(format!("dataset must have n >= 2 and p >= 2, got {n}x{p}")));
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(validation("observations contain non-finite values"));
        }
        if kind == DataKind::Binary {
            if let Some((idx, v)) = observations
                .iter()
                .enumerate()
                .find(|(_, &v)| v != 0.0 && v != 1.0)
            {
                return Err(validation(format!(
                    "binary dataset has value {v} at row {}, column {}",
                    idx % n,
                    idx / n
                )));
            }
        }
        Ok(Self { observations, kind, demographics: None, node_names: None })
    }

    pub fn with_demographics(mut self, groups: Vec<usize>) -> Result<Self> {
        if groups.len() != self.p() {
            return Err(validation(format!(
                "demographics length {} does not match p = {}",
                groups.len(),
                self.p()
            )));
        }
        group_count(&groups)?;
        self.demographics = Some(groups);
        Ok(self)
    }

    pub fn with_node_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(validation(format!(
                "node_names length {} does not match p = {}",
                names.len(),
                self.p()
            )));
        }
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.observations.nrows()
    }

    pub fn p(&self) -> usize {
        self.observations.ncols()
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn observations(&self) -> &Mat {
        &self.observations
    }

    pub fn demographics(&self) -> Option<&[usize]> {
        self.demographics.as_deref()
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    /// Number of demographic groups, or 1 when none are attached.
    pub fn group_count(&self) -> usize {
        self.demographics
            .as_deref()
            .map(|g| group_count(g).unwrap_or(1))
            .unwrap_or(1)
    }

    /// Copy with each column shifted to zero mean. Only meaningful for
    /// continuous data; binary data is returned unchanged.
    pub fn centered(&self) -> Self {
        if self.kind == DataKind::Binary {
            return self.clone();
        }
        let mut out = self.clone();
        for mut col in out.observations.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        out
    }
}

/// Validates group ids in `1..=H` with every group present; returns `H`.
pub fn group_count(groups: &[usize]) -> Result<usize> {
    if groups.is_empty() {
        return Err(validation("empty group vector"));
    }
    if groups.contains(&0) {
        return Err(validation("group ids must start at 1"));
    }
    let h = *groups.iter().max().unwrap();
    let mut seen = vec![false; h];
    for &g in groups {
        seen[g - 1] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(validation(format!("demographic group {} is empty", missing + 1)));
    }
    Ok(h)
}

/// `S = n⁻¹ Σᵢ yᵢ yᵢᵀ` (no centering). Accumulated on the upper triangle and
/// mirrored, so the result is exactly symmetric.
pub fn sample_covariance(data: &Dataset) -> Mat {
    let y = data.observations();
    let n = y.nrows() as f64;
    let p = y.ncols();
    let mut s = Mat::zeros(p, p);
    for j in 0..p {
        let cj = y.column(j);
        for i in 0..=j {
            let v = y.column(i).dot(&cj) / n;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

const SYM_TOL: f64 = 1e-12;

/// A symmetric `p × p` graph matrix. Gaussian estimates additionally carry a
/// strictly positive diagonal; Ising parameters only need symmetry because
/// their diagonal holds node intercepts of either sign.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    values: Mat,
}

impl PrecisionEstimate {
    pub fn new(values: Mat) -> Result<Self> {
        let est = Self::symmetric(values)?;
        if let Some(i) = (0..est.p()).find(|&i| est.values[(i, i)] <= 0.0) {
            return Err(Error::Domain(format!(
                "diagonal entry {i} is {} (must be > 0)",
                est.values[(i, i)]
            )));
        }
        Ok(est)
    }

    /// Symmetric matrix without the positive-diagonal requirement (Ising parameters).
    pub fn symmetric(values: Mat) -> Result<Self> {
        linalg::check_square(&values, "precision estimate")?;
        if !linalg::is_symmetric(&values, SYM_TOL) {
            return Err(validation(format!(
                "precision estimate is not symmetric (max asymmetry {:e})",
                linalg::asymmetry(&values)
            )));
        }
        let mut values = values;
        linalg::symmetrize_in_place(&mut values);
        Ok(Self { values })
    }

    pub fn identity(p: usize) -> Self {
        Self { values: Mat::identity(p, p) }
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn into_inner(self) -> Mat {
        self.values
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    /// Off-diagonal entries `(θ_ij)_{i<j}` in column-major upper order.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let p = self.p();
        let mut out = Vec::with_capacity(p * (p - 1) / 2);
        for j in 0..p {
            for i in 0..j {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }
}

/// Relaxed community membership matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionRelaxation {
    values: Mat,
}

impl PartitionRelaxation {
    /// Checks symmetry, unit diagonal, `[−tol, 1+tol]` entries and `λ_min ≥ −tol`.
    pub fn new(values: Mat, tol: f64) -> Result<Self> {
        linalg::check_square(&values, "partition relaxation")?;
        if linalg::asymmetry(&values) > tol {
            return Err(validation("partition relaxation is not symmetric"));
        }
        let p = values.nrows();
        for i in 0..p {
            if (values[(i, i)] - 1.0).abs() > tol {
                return Err(validation(format!("q[{i},{i}] = {} is not 1", values[(i, i)])));
            }
        }
        if values.iter().any(|&v| v < -tol || v > 1.0 + tol) {
            return Err(validation("partition relaxation entries outside [0, 1]"));
        }
        let (eig, _) = linalg::sym_eigen_desc(&values)?;
        if eig.last().copied().unwrap_or(0.0) < -tol {
            return Err(validation("partition relaxation is not positive semidefinite"));
        }
        let mut values = values;
        linalg::symmetrize_in_place(&mut values);
        Ok(Self { values })
    }

    /// Wraps a matrix without checks. Used for iterates that are feasible only
    /// up to solver tolerance.
    pub fn unchecked(values: Mat) -> Self {
        Self { values }
    }

    pub fn identity(p: usize) -> Self {
        Self { values: Mat::identity(p, p) }
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }
}

/// One outer ADMM iteration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub obj: f64,
    pub primal_res: f64,
    pub dq_rel: f64,
    pub dtheta_rel: f64,
    pub wall_ms: f64,
    pub gamma: f64,
    pub q_iters: usize,
    pub q_converged: bool,
}

/// Everything a fit produces.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: PrecisionEstimate,
    pub q: PartitionRelaxation,
    pub labels: Vec<usize>,
    pub k: usize,
    pub diagnostics: Vec<IterationRecord>,
    pub converged: bool,
    pub model: LossModel,
    pub config: FitConfig,
}

impl FitResult {
    pub fn iterations(&self) -> usize {
        self.diagnostics.len()
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.diagnostics.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn covariance_of_identity_rows() {
        let d = Dataset::new(Mat::identity(2, 2), DataKind::Continuous).unwrap();
        let s = sample_covariance(&d);
        assert_eq!(s, Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn covariance_of_zeros() {
        let d = Dataset::new(Mat::zeros(3, 2), DataKind::Continuous).unwrap();
        assert_eq!(sample_covariance(&d), Mat::zeros(2, 2));
    }

    #[test]
    fn covariance_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = Mat::from_fn(50, 5, |_, _| StandardNormal.sample(&mut rng));
        let d = Dataset::new(y.clone(), DataKind::Continuous).unwrap();
        let s = sample_covariance(&d);
        for a in 0..5 {
            for b in 0..5 {
                let mut acc = 0.0;
                for i in 0..50 {
                    acc += y[(i, a)] * y[(i, b)];
                }
                assert!((s[(a, b)] - acc / 50.0).abs() < 1e-12);
            }
        }
        assert_eq!(linalg::asymmetry(&s), 0.0);
        let (eig, _) = linalg::sym_eigen_desc(&s).unwrap();
        assert!(*eig.last().unwrap() > -1e-10);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(Mat::zeros(1, 3), DataKind::Continuous).is_err());
        assert!(Dataset::new(Mat::zeros(3, 1), DataKind::Continuous).is_err());
        let mut y = Mat::zeros(3, 2);
        y[(1, 1)] = 0.5;
        assert!(matches!(
            Dataset::new(y, DataKind::Binary),
            Err(Error::Validation(_))
        ));
        let d = Dataset::new(Mat::zeros(3, 3), DataKind::Binary).unwrap();
        assert!(d.clone().with_demographics(vec![1, 3, 3]).is_err());
        assert!(d.clone().with_demographics(vec![0, 1, 1]).is_err());
        assert!(d.clone().with_demographics(vec![1, 1]).is_err());
        let d = d.with_demographics(vec![2, 1, 2]).unwrap();
        assert_eq!(d.group_count(), 2);
    }

    #[test]
    fn precision_estimate_invariants() {
        let mut m = Mat::identity(3, 3);
        m[(0, 1)] = 0.2;
        assert!(PrecisionEstimate::new(m.clone()).is_err());
        m[(1, 0)] = 0.2;
        assert!(PrecisionEstimate::new(m.clone()).is_ok());
        m[(2, 2)] = 0.0;
        assert!(matches!(PrecisionEstimate::new(m.clone()), Err(Error::Domain(_))));
        assert!(PrecisionEstimate::symmetric(m).is_ok());
    }

    #[test]
    fn partition_relaxation_invariants() {
        assert!(PartitionRelaxation::new(Mat::identity(3, 3), 1e-9).is_ok());
        assert!(PartitionRelaxation::new(Mat::from_element(3, 3, 1.0), 1e-9).is_ok());
        let mut bad = Mat::identity(2, 2);
        bad[(0, 1)] = 1.0;
        bad[(1, 0)] = 1.0;
        bad[(0, 0)] = 0.5;
        assert!(PartitionRelaxation::new(bad, 1e-9).is_err());
        // Unit diagonal and box, but indefinite.
        let m = Mat::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert!(PartitionRelaxation::new(m, 1e-9).is_err());
    }
}
