//! Discrete communities from the relaxed partition matrix: leading
//! eigenvectors followed by k-means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{validation, Result};
use crate::linalg::{self, Mat};
use crate::types::PartitionRelaxation;

/// Community ids in `1..=k`, every community nonempty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunityLabels {
    pub labels: Vec<usize>,
    pub k: usize,
}

/// Eigenvectors of `Q̂` for its `k` largest eigenvalues, as columns. Each
/// column is signed so that its first entry of magnitude above `1e-12` is
/// positive.
pub fn spectral_embedding(q: &PartitionRelaxation, k: usize) -> Result<Mat> {
    let p = q.p();
    if k == 0 || k > p {
        return Err(validation(format!("k = {k} out of range 1..={p}")));
    }
    let (_, vecs) = linalg::sym_eigen_desc(q.values())?;
    let mut emb = vecs.columns(0, k).into_owned();
    for mut col in emb.column_iter_mut() {
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12).copied() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    Ok(emb)
}

/// Number of communities by the largest gap `λ_k − λ_{k+1}` of `Q̂` over
/// `k ∈ [2, min(p − h + 1, 10)]`; 1 when that range is empty.
pub fn select_k(q: &PartitionRelaxation, h: usize) -> Result<usize> {
    let p = q.p();
    let upper = (p + 1).saturating_sub(h).min(10).min(p.saturating_sub(1));
    if upper < 2 {
        return Ok(1);
    }
    let (vals, _) = linalg::sym_eigen_desc(q.values())?;
    let mut best = (2, f64::NEG_INFINITY);
    for k in 2..=upper {
        let gap = vals[k - 1] - vals[k];
        if gap > best.1 + 1e-12 {
            best = (k, gap);
        }
    }
    Ok(best.0)
}

fn sq_dist(v: &Mat, i: usize, c: &Mat, k: usize) -> f64 {
    v.row(i).iter().zip(c.row(k).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Within-cluster sum of squares for 0-based `assign`.
pub fn wcss(v: &Mat, assign: &[usize], k: usize) -> f64 {
    let c = centroids(v, assign, k);
    (0..v.nrows()).map(|i| sq_dist(v, i, &c, assign[i])).sum()
}

fn centroids(v: &Mat, assign: &[usize], k: usize) -> Mat {
    let d = v.ncols();
    let mut c = Mat::zeros(k, d);
    let mut counts = vec![0.0; k];
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1.0;
        for t in 0..d {
            c[(a, t)] += v[(i, t)];
        }
    }
    for a in 0..k {
        if counts[a] > 0.0 {
            for t in 0..d {
                c[(a, t)] /= counts[a];
            }
        }
    }
    c
}

fn kmeanspp(v: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let p = v.nrows();
    let mut c = Mat::zeros(k, v.ncols());
    let first = rng.random_range(0..p);
    c.set_row(0, &v.row(first));
    let mut d2: Vec<f64> = (0..p).map(|i| sq_dist(v, i, &c, 0)).collect();
    for m in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = p - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..p)
        };
        c.set_row(m, &v.row(pick));
        for i in 0..p {
            d2[i] = d2[i].min(sq_dist(v, i, &c, m));
        }
    }
    c
}

fn lloyd(v: &Mat, k: usize, mut c: Mat) -> (Vec<usize>, f64) {
    let p = v.nrows();
    let mut assign = vec![usize::MAX; p];
    for _ in 0..300 {
        let mut changed = false;
        for i in 0..p {
            let mut best = (0, f64::INFINITY);
            for a in 0..k {
                let d = sq_dist(v, i, &c, a);
                if d < best.1 {
                    best = (a, d);
                }
            }
            if assign[i] != best.0 {
                assign[i] = best.0;
                changed = true;
            }
        }
        // Empty clusters take the point farthest from its centroid.
        let mut counts = vec![0usize; k];
        assign.iter().for_each(|&a| counts[a] += 1);
        for a in 0..k {
            if counts[a] == 0 {
                let far = (0..p)
                    .filter(|&i| counts[assign[i]] > 1)
                    .max_by(|&x, &y| {
                        sq_dist(v, x, &c, assign[x])
                            .partial_cmp(&sq_dist(v, y, &c, assign[y]))
                            .unwrap()
                            .then(y.cmp(&x))
                    });
                if let Some(i) = far {
                    counts[assign[i]] -= 1;
                    assign[i] = a;
                    counts[a] = 1;
                    c.set_row(a, &v.row(i));
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        c = centroids(v, &assign, k);
    }
    let cost = wcss(v, &assign, k);
    (assign, cost)
}

/// Relabels so ids appear in order of first occurrence, starting at 1.
fn canonical(assign: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    assign
        .iter()
        .map(|&a| {
            let next = map.len() + 1;
            *map.entry(a).or_insert(next)
        })
        .collect()
}

/// Lloyd's algorithm with k-means++ seeding; the best of `restarts` runs by
/// within-cluster sum of squares (ties go to the lowest restart index).
pub fn kmeans_partition(v: &Mat, k: usize, restarts: usize, seed: u64) -> Result<CommunityLabels> {
    let p = v.nrows();
    if k == 0 || k > p {
        return Err(validation(format!("k = {k} out of range 1..={p}")));
    }
    if restarts == 0 {
        return Err(validation("restarts must be >= 1"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(validation("embedding contains non-finite values"));
    }
    let runs: Vec<(Vec<usize>, f64)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let c = kmeanspp(v, k, &mut rng);
            lloyd(v, k, c)
        })
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.1 < runs[best].1 {
            best = r;
        }
    }
    let labels = canonical(&runs[best].0);
    let k = labels.iter().copied().max().unwrap_or(0);
    Ok(CommunityLabels { labels, k })
}
