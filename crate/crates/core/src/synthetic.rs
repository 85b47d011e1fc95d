//! Synthetic ground truth: demographic-aware block graphs, precision and
//! Ising parameter matrices, Gaussian and Gibbs samplers.

use std::path::Path;

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::io::{self, NumFormat};
use crate::linalg::Mat;
use crate::types::{DataKind, Dataset};

/// Block-model parameters. `zetas[0..4]` are the edge probabilities for
/// (different community, different group), (same community, different group),
/// (different community, same group) and (same community, same group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub p: usize,
    pub k: usize,
    pub h: usize,
    pub zetas: [f64; 4],
}

impl SbmParams {
    pub fn new(p: usize, k: usize, h: usize) -> Self {
        Self { p, k, h, zetas: [0.1, 0.2, 0.3, 0.4] }
    }

    pub fn with_zetas(mut self, zetas: [f64; 4]) -> Self {
        self.zetas = zetas;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.h == 0 {
            return Err(validation("k and h must be >= 1"));
        }
        if self.p < 2 || self.p < self.k * self.h {
            return Err(validation(format!(
                "p = {} cannot hold {} communities x {} groups",
                self.p, self.k, self.h
            )));
        }
        let z = &self.zetas;
        if !(0.0 <= z[0] && z[0] <= z[1] && z[1] <= z[2] && z[2] <= z[3] && z[3] <= 1.0) {
            return Err(validation(format!("zetas must satisfy 0 <= z1 <= z2 <= z3 <= z4 <= 1, got {z:?}")));
        }
        Ok(())
    }
}

/// A generated graph with its labels. `theta_true` is the identity until a
/// weight matrix is attached with [`GroundTruth::with_theta`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub theta_true: Mat,
    pub adjacency: Mat,
    pub communities: Vec<usize>,
    pub groups: Vec<usize>,
    pub params: SbmParams,
    pub seed: u64,
    pub weight_range: Option<(f64, f64)>,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn with_theta(mut self, theta: Mat, weight_range: (f64, f64)) -> Self {
        self.theta_true = theta;
        self.weight_range = Some(weight_range);
        self
    }
}

/// Contiguous equal-size communities; groups assigned round-robin inside
/// each community so that exact parity is attainable when sizes divide.
pub fn assign_labels(p: usize, k: usize, h: usize) -> (Vec<usize>, Vec<usize>) {
    let mut communities = Vec::with_capacity(p);
    let mut groups = Vec::with_capacity(p);
    for c in 0..k {
        let lo = c * p / k;
        let hi = (c + 1) * p / k;
        for (r, _) in (lo..hi).enumerate() {
            communities.push(c + 1);
            groups.push(r % h + 1);
        }
    }
    (communities, groups)
}

/// Independent edges with probabilities from the four-case rule. The draw
/// for a pair depends only on `seed` and the two node keys, so relabelling
/// nodes (and their keys) permutes the graph accordingly.
pub fn sbm_edges(communities: &[usize], groups: &[usize], keys: &[u64], zetas: &[f64; 4], seed: u64) -> Mat {
    let p = communities.len();
    let mut adj = Mat::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let same_c = communities[i] == communities[j];
            let same_d = groups[i] == groups[j];
            let prob = match (same_c, same_d) {
                (true, true) => zetas[3],
                (false, true) => zetas[2],
                (true, false) => zetas[1],
                (false, false) => zetas[0],
            };
            let (a, b) = if keys[i] < keys[j] { (keys[i], keys[j]) } else { (keys[j], keys[i]) };
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            rng.set_stream(b);
            if rng.random::<f64>() < prob {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
    }
    adj
}

pub fn generate_sbm(params: &SbmParams, seed: u64) -> Result<GroundTruth> {
    params.validate()?;
    let (communities, groups) = assign_labels(params.p, params.k, params.h);
    let keys: Vec<u64> = (0..params.p as u64).collect();
    let adjacency = sbm_edges(&communities, &groups, &keys, &params.zetas, seed);
    Ok(GroundTruth {
        theta_true: Mat::identity(params.p, params.p),
        adjacency,
        communities,
        groups,
        params: params.clone(),
        seed,
        weight_range: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionParams {
    pub weight_range: (f64, f64),
    /// Draw off-diagonal signs at random instead of all negative.
    pub mixed_signs: bool,
}

impl Default for PrecisionParams {
    fn default() -> Self {
        Self { weight_range: (0.1, 3.0), mixed_signs: false }
    }
}

fn check_adjacency(adj: &Mat) -> Result<()> {
    let p = adj.nrows();
    if adj.ncols() != p {
        return Err(validation("adjacency must be square"));
    }
    for i in 0..p {
        if adj[(i, i)] != 0.0 {
            return Err(validation("adjacency must have a zero diagonal"));
        }
        for j in 0..p {
            let v = adj[(i, j)];
            if (v != 0.0 && v != 1.0) || v != adj[(j, i)] {
                return Err(validation("adjacency must be symmetric 0/1"));
            }
        }
    }
    Ok(())
}

/// Diagonally dominant precision on the support of `adjacency`: edge weights
/// uniform on `weight_range` (negative unless `mixed_signs`), diagonal equal
/// to the absolute row sum plus a node weight from the same interval, so the
/// smallest eigenvalue is at least the lower end of the range.
pub fn generate_precision(adjacency: &Mat, params: &PrecisionParams, seed: u64) -> Result<Mat> {
    check_adjacency(adjacency)?;
    let (lo, hi) = params.weight_range;
    if !(0.0 < lo && lo <= hi) {
        return Err(validation(format!("weight range must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
    }
    let p = adjacency.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Mat::zeros(p, p);
    for j in 0..p {
        for i in 0..j {
            if adjacency[(i, j)] == 1.0 {
                let mag = rng.random_range(lo..=hi);
                let sign = if params.mixed_signs && rng.random_bool(0.5) { 1.0 } else { -1.0 };
                theta[(i, j)] = sign * mag;
                theta[(j, i)] = sign * mag;
            }
        }
    }
    for i in 0..p {
        let row: f64 = (0..p).filter(|&j| j != i).map(|j| theta[(i, j)].abs()).sum();
        theta[(i, i)] = row + rng.random_range(lo..=hi);
    }
    Ok(theta)
}

/// `n` draws from `N(0, Θ⁻¹)`.
pub fn sample_gaussian(theta: &Mat, n: usize, seed: u64) -> Result<Dataset> {
    let p = theta.nrows();
    let chol = Cholesky::new(theta.clone()).ok_or_else(|| Error::Domain("theta is not positive definite".into()))?;
    let sigma = chol.inverse();
    let l = Cholesky::new(crate::linalg::symmetrize(&sigma))
        .ok_or_else(|| Error::Numerical("covariance Cholesky failed".into()))?
        .l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Mat::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
    let y = (l * z).transpose();
    Dataset::new(y, DataKind::Continuous)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    pub weight_range: (f64, f64),
    /// Multiplier on the edge weights.
    pub scale: f64,
    pub mixed_signs: bool,
}

impl Default for IsingParams {
    fn default() -> Self {
        Self { weight_range: (0.1, 3.0), scale: 0.5, mixed_signs: false }
    }
}

/// Ising parameters on the support of `adjacency`: couplings
/// `−scale·U[lo, hi]` (random signs if `mixed_signs`) and intercepts
/// `θ_jj = −½ Σ_k θ_jk`, which centres each node's conditional log-odds
/// when its neighbours are fair coins.
pub fn generate_ising_params(adjacency: &Mat, params: &IsingParams, seed: u64) -> Result<Mat> {
    let prec = PrecisionParams { weight_range: params.weight_range, mixed_signs: params.mixed_signs };
    let mut theta = generate_precision(adjacency, &prec, seed)? * params.scale;
    let p = theta.nrows();
    for i in 0..p {
        let row: f64 = (0..p).filter(|&j| j != i).map(|j| theta[(i, j)]).sum();
        theta[(i, i)] = -0.5 * row;
    }
    Ok(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { burn_in: 1000, thin: 10 }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Systematic-scan Gibbs sampling from
/// `p(y) ∝ exp(Σ_j θ_jj y_j + Σ_{j<k} θ_jk y_j y_k)` on `{0, 1}^p`.
pub fn sample_ising(theta: &Mat, n: usize, cfg: &GibbsConfig, seed: u64) -> Result<Dataset> {
    let p = theta.nrows();
    if theta.ncols() != p || crate::linalg::asymmetry(theta) > 0.0 {
        return Err(validation("Ising parameters must be a symmetric matrix"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<f64> = (0..p).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let sweep = |y: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
        for j in 0..p {
            let mut eta = theta[(j, j)];
            for k in 0..p {
                if k != j {
                    eta += theta[(j, k)] * y[k];
                }
            }
            y[j] = if rng.random::<f64>() < sigmoid(eta) { 1.0 } else { 0.0 };
        }
    };
    for _ in 0..cfg.burn_in {
        sweep(&mut y, &mut rng);
    }
    let mut out = Mat::zeros(n, p);
    for i in 0..n {
        for _ in 0..cfg.thin.max(1) {
            sweep(&mut y, &mut rng);
        }
        for j in 0..p {
            out[(i, j)] = y[j];
        }
    }
    Dataset::new(out, DataKind::Binary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthMeta {
    pub schema: String,
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub zetas: [f64; 4],
    pub seed: u64,
    pub weight_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

pub const GROUND_TRUTH_SCHEMA: &str = "fairgl.ground_truth.v1";

/// Writes `theta_true.csv`, `adjacency.csv`, `communities.csv`, `groups.csv`
/// and `meta.json` into `dir`.
pub fn save_ground_truth(
    dir: &Path,
    truth: &GroundTruth,
    extra: serde_json::Map<String, serde_json::Value>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    io::write_matrix_csv(&dir.join("theta_true.csv"), &truth.theta_true, None, NumFormat::Sig12)?;
    io::write_matrix_csv(&dir.join("adjacency.csv"), &truth.adjacency, None, NumFormat::RoundTrip)?;
    io::write_labels_csv(&dir.join("communities.csv"), &truth.communities)?;
    io::write_labels_csv(&dir.join("groups.csv"), &truth.groups)?;
    let meta = GroundTruthMeta {
        schema: GROUND_TRUTH_SCHEMA.into(),
        p: truth.p(),
        k: truth.params.k,
        h: truth.params.h,
        zetas: truth.params.zetas,
        seed: truth.seed,
        weight_range: truth.weight_range,
        extra,
    };
    io::write_json(&dir.join("meta.json"), &meta)
}

pub fn load_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let meta: GroundTruthMeta = io::read_json(&dir.join("meta.json"))?;
    let (_, theta_true) = io::read_matrix_csv(&dir.join("theta_true.csv"), false)?;
    let (_, adjacency) = io::read_matrix_csv(&dir.join("adjacency.csv"), false)?;
    Ok(GroundTruth {
        theta_true,
        adjacency,
        communities: io::read_labels_csv(&dir.join("communities.csv"), false)?,
        groups: io::read_labels_csv(&dir.join("groups.csv"), false)?,
        params: SbmParams { p: meta.p, k: meta.k, h: meta.h, zetas: meta.zetas },
        seed: meta.seed,
        weight_range: meta.weight_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::types::sample_covariance;

    #[test]
    fn complete_graph_case() {
        let t = generate_sbm(&SbmParams::new(6, 1, 1).with_zetas([0.0, 0.0, 0.0, 1.0]), 3).unwrap();
        let expected = Mat::from_element(6, 6, 1.0) - Mat::identity(6, 6);
        assert_eq!(t.adjacency, expected);
    }

    #[test]
    fn labels_are_balanced() {
        let (c, g) = assign_labels(60, 2, 3);
        assert_eq!(c.iter().filter(|&&x| x == 1).count(), 30);
        for k in 1..=2 {
            for h in 1..=3 {
                let cnt = (0..60).filter(|&i| c[i] == k && g[i] == h).count();
                assert_eq!(cnt, 10);
            }
        }
        assert!(generate_sbm(&SbmParams::new(5, 2, 3), 0).is_err());
        assert!(generate_sbm(&SbmParams::new(10, 2, 2).with_zetas([0.3, 0.2, 0.3, 0.4]), 0).is_err());
    }

    #[test]
    fn edge_frequencies_match_zetas() {
        let params = SbmParams::new(200, 2, 2);
        let mut hits = [0.0; 4];
        let mut tot = [0.0; 4];
        for seed in 0..20 {
            let t = generate_sbm(&params, seed).unwrap();
            for i in 0..200 {
                for j in (i + 1)..200 {
                    let case = match (t.communities[i] == t.communities[j], t.groups[i] == t.groups[j]) {
                        (false, false) => 0,
                        (true, false) => 1,
                        (false, true) => 2,
                        (true, true) => 3,
                    };
                    tot[case] += 1.0;
                    hits[case] += t.adjacency[(i, j)];
                }
            }
        }
        for c in 0..4 {
            assert!((hits[c] / tot[c] - params.zetas[c]).abs() < 0.02);
        }
    }

    #[test]
    fn generation_is_permutation_equivariant() {
        let (c, g) = assign_labels(12, 2, 2);
        let keys: Vec<u64> = (0..12).collect();
        let z = [0.2, 0.4, 0.5, 0.7];
        let a = sbm_edges(&c, &g, &keys, &z, 11);
        let perm = [5, 2, 11, 0, 7, 3, 9, 1, 10, 4, 8, 6];
        let cp: Vec<usize> = perm.iter().map(|&i| c[i]).collect();
        let gp: Vec<usize> = perm.iter().map(|&i| g[i]).collect();
        let kp: Vec<u64> = perm.iter().map(|&i| keys[i]).collect();
        let b = sbm_edges(&cp, &gp, &kp, &z, 11);
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(b[(i, j)], a[(perm[i], perm[j])]);
            }
        }
    }

    #[test]
    fn precision_properties() {
        let empty = Mat::zeros(5, 5);
        let t = generate_precision(&empty, &PrecisionParams::default(), 1).unwrap();
        for i in 0..5 {
            assert!(t[(i, i)] >= 0.1);
            for j in 0..5 {
                if i != j {
                    assert_eq!(t[(i, j)], 0.0);
                }
            }
        }
        for seed in 0..10 {
            let g = generate_sbm(&SbmParams::new(30, 2, 3), seed).unwrap();
            for mixed in [false, true] {
                let prm = PrecisionParams { mixed_signs: mixed, ..Default::default() };
                let t = generate_precision(&g.adjacency, &prm, seed).unwrap();
                let (eig, _) = linalg::sym_eigen_desc(&t).unwrap();
                assert!(*eig.last().unwrap() >= 0.1 - 1e-10);
                for i in 0..30 {
                    for j in 0..30 {
                        if i != j {
                            let v = t[(i, j)].abs();
                            assert!(v == 0.0 || (0.1..=3.0).contains(&v));
                            assert_eq!(v != 0.0, g.adjacency[(i, j)] == 1.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_sampler_moments() {
        let d = sample_gaussian(&Mat::identity(3, 3), 10_000, 5).unwrap();
        assert!((sample_covariance(&d) - Mat::identity(3, 3)).abs().max() <= 0.1);
        let d = sample_gaussian(&Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0])), 100_000, 6).unwrap();
        let s = sample_covariance(&d);
        assert!((s[(0, 0)] / 0.25 - 1.0).abs() < 0.05);
        assert!((s[(1, 1)] - 1.0).abs() < 0.05);
        let a = sample_gaussian(&Mat::identity(3, 3), 10, 9).unwrap();
        let b = sample_gaussian(&Mat::identity(3, 3), 10, 9).unwrap();
        assert_eq!(a.observations(), b.observations());
        let mut bad = Mat::identity(2, 2);
        bad[(1, 1)] = -1.0;
        assert!(matches!(sample_gaussian(&bad, 5, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn ising_zero_parameters_are_fair_coins() {
        let d = sample_ising(&Mat::zeros(4, 4), 10_000, &GibbsConfig { burn_in: 10, thin: 1 }, 2).unwrap();
        for j in 0..4 {
            assert!((d.observations().column(j).mean() - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn ising_positive_coupling_gives_positive_correlation() {
        let t = Mat::from_row_slice(2, 2, &[-1.0, 2.0, 2.0, -1.0]);
        let d = sample_ising(&t, 5000, &GibbsConfig { burn_in: 100, thin: 2 }, 4).unwrap();
        let y = d.observations();
        let (m0, m1) = (y.column(0).mean(), y.column(1).mean());
        let cov = y.column(0).dot(&y.column(1)) / 5000.0 - m0 * m1;
        assert!(cov > 0.0);
    }

    #[test]
    fn ground_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_sbm(&SbmParams::new(8, 2, 2), 1).unwrap();
        let th = generate_precision(&g.adjacency, &PrecisionParams::default(), 1).unwrap();
        let g = g.with_theta(th, (0.1, 3.0));
        save_ground_truth(dir.path(), &g, Default::default()).unwrap();
        let back = load_ground_truth(dir.path()).unwrap();
        assert_eq!(back.adjacency, g.adjacency);
        assert_eq!(back.groups, g.groups);
        assert!((back.theta_true - &g.theta_true).abs().max() < 1e-10);
    }

    #[test]
    fn equal_zetas_are_label_independent() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let params = SbmParams::new(120, 2, 2).with_zetas([0.3; 4]);
        let t = generate_sbm(&params, 17).unwrap();
        let mut hits = [0.0; 4];
        let mut tot = [0.0; 4];
        for i in 0..120 {
            for j in (i + 1)..120 {
                let case = 2 * usize::from(t.groups[i] == t.groups[j]) + usize::from(t.communities[i] == t.communities[j]);
                tot[case] += 1.0;
                hits[case] += t.adjacency[(i, j)];
            }
        }
        let rate = hits.iter().sum::<f64>() / tot.iter().sum::<f64>();
        let mut chi2 = 0.0;
        for c in 0..4 {
            let e1 = tot[c] * rate;
            let e0 = tot[c] * (1.0 - rate);
            chi2 += (hits[c] - e1).powi(2) / e1 + (tot[c] - hits[c] - e0).powi(2) / e0;
        }
        let crit = ChiSquared::new(3.0).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }

    #[test]
    fn gaussian_margins_pass_ks() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let std = Normal::new(0.0, 1.0).unwrap();
        // Kolmogorov critical value at alpha = 0.001 is about 1.949 / sqrt(n).
        let n = 500;
        let crit = 1.949 / (n as f64).sqrt();
        let mut fails = 0;
        for seed in 0..50u64 {
            let g = generate_sbm(&SbmParams::new(6, 2, 1), seed).unwrap();
            let th = generate_precision(&g.adjacency, &PrecisionParams::default(), seed).unwrap();
            let sigma = th.clone().try_inverse().unwrap();
            let d = sample_gaussian(&th, n, seed).unwrap();
            for j in 0..6 {
                let sd = sigma[(j, j)].sqrt();
                let mut z: Vec<f64> = d.observations().column(j).iter().map(|v| v / sd).collect();
                z.sort_by(f64::total_cmp);
                let dstat = z
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let f = std.cdf(v);
                        (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
                    })
                    .fold(0.0, f64::max);
                if dstat > crit {
                    fails += 1;
                }
            }
        }
        // 300 tests at alpha = 0.001: more than 2 rejections would be very unlikely.
        assert!(fails <= 2, "{fails} KS rejections");
    }

    pub(crate) fn ising_exact_probs(theta: &Mat) -> Vec<f64> {
        let p = theta.nrows();
        let mut w: Vec<f64> = (0..1usize << p)
            .map(|s| {
                let y: Vec<f64> = (0..p).map(|j| ((s >> j) & 1) as f64).collect();
                let mut e = 0.0;
                for j in 0..p {
                    e += theta[(j, j)] * y[j];
                    for k in (j + 1)..p {
                        e += theta[(j, k)] * y[j] * y[k];
                    }
                }
                e.exp()
            })
            .collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= z);
        w
    }

    #[test]
    fn ising_matches_enumeration() {
        let t = Mat::from_row_slice(3, 3, &[0.3, -0.8, 0.5, -0.8, -0.2, 1.1, 0.5, 1.1, -0.6]);
        let exact = ising_exact_probs(&t);
        let n = 100_000;
        let d = sample_ising(&t, n, &GibbsConfig { burn_in: 1000, thin: 2 }, 8).unwrap();
        let mut freq = vec![0.0; 8];
        for i in 0..n {
            let s: usize = (0..3).map(|j| (d.observations()[(i, j)] as usize) << j).sum();
            freq[s] += 1.0 / n as f64;
        }
        for s in 0..8 {
            assert!((freq[s] - exact[s]).abs() < 0.02, "state {s}: {} vs {}", freq[s], exact[s]);
        }
    }
}
