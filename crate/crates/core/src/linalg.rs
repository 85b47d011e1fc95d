//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &Mat) -> Mat {
    let mut out = a.clone();
    symmetrize_in_place(&mut out);
    out
}

pub fn symmetrize_in_place(a: &mut Mat) {
    let p = a.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Columns of the returned matrix are the eigenvectors.
pub fn sym_eigen_desc(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition of non-finite matrix".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let p = a.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Mat::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition produced non-finite values".into()));
    }
    Ok((values, vectors))
}

/// Rebuild `V diag(f(λ)) Vᵀ`.
pub fn spectral_map(values: &[f64], vectors: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let p = vectors.nrows();
    let mut scaled = vectors.clone();
    for (k, &lam) in values.iter().enumerate() {
        let s = f(lam);
        scaled.column_mut(k).scale_mut(s);
    }
    let mut out = Mat::zeros(p, p);
    out.gemm(1.0, &scaled, &vectors.transpose(), 0.0);
    symmetrize_in_place(&mut out);
    out
}

/// Frobenius-nearest positive semidefinite matrix (eigenvalue clipping at 0).
pub fn project_psd(a: &Mat) -> Result<Mat> {
    let (values, vectors) = sym_eigen_desc(a)?;
    if values.iter().all(|&v| v >= 0.0) {
        return Ok(symmetrize(a));
    }
    Ok(spectral_map(&values, &vectors, |l| l.max(0.0)))
}

pub fn frob_inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn frob_norm_sq(a: &Mat) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Max absolute asymmetry `max |a_ij − a_ji|`.
pub fn asymmetry(a: &Mat) -> f64 {
    let p = a.nrows();
    let mut m = 0.0_f64;
    for j in 0..p {
        for i in (j + 1)..p {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

/// Sum over `i ≤ j` of squared entries: the Euclidean norm of the
/// upper-triangular half-vectorisation.
pub fn vech_norm_sq(a: &Mat) -> f64 {
    let p = a.nrows();
    let mut s = 0.0;
    for j in 0..p {
        for i in 0..=j {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s
}

/// `Σ_{i<j} |a_ij|`.
pub fn l1_off_upper(a: &Mat) -> f64 {
    let p = a.nrows();
    let mut s = 0.0;
    for j in 0..p {
        for i in 0..j {
            s += a[(i, j)].abs();
        }
    }
    s
}

/// Reject non-square or non-finite inputs.
pub fn check_square(a: &Mat, name: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Validation(format!(
            "{name} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{name} contains non-finite entries")));
    }
    Ok(())
}

pub fn is_symmetric(a: &Mat, rel_tol: f64) -> bool {
    let scale = max_abs(a).max(1.0);
    asymmetry(a) <= rel_tol * scale
}
