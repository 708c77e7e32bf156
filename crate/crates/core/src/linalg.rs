//! Shared dense linear-algebra helpers: numerical rank, pseudoinverse,
//! symmetric eigenvalue bounds, PSD square roots and spectral radius.
//!
//! Matrix norm is the induced 2-norm (largest singular value) throughout.

use nalgebra::{DMatrix, DVector};

/// Default factor for the numerical-rank cutoff: singular values below
/// `max(rows, cols) * norm * DEFAULT_RANK_TOL` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Numerical rank with the standard cutoff `max(rows, cols) * sigma_max * tol_factor`.
pub fn rank(m: &DMatrix<f64>, tol_factor: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let cutoff = m.nrows().max(m.ncols()) as f64 * sv.max() * tol_factor;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Moore-Penrose pseudoinverse via SVD, with the standard rank cutoff.
pub fn pinv(m: &DMatrix<f64>, tol_factor: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = m.nrows().max(m.ncols()) as f64 * smax * tol_factor;
    svd.pseudo_inverse(cutoff)
        .expect("svd computed with u and v_t")
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a (nearly) symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev = symmetrize(m).symmetric_eigenvalues();
    let mut v: Vec<f64> = ev.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    for (dst, src) in ev.iter_mut().zip(v) {
        *dst = src;
    }
    ev
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eig_sym(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().max()
}

/// Symmetric PSD square root; eigenvalues below zero are clipped.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Inverse square root of a positive-definite matrix.
///
/// Fails with the offending eigenvalue when the smallest eigenvalue drops
/// below `1e-12 * norm`, i.e. when the matrix is not genuinely PD.
pub fn pd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let lmin = eig.eigenvalues.min();
    let lmax = eig.eigenvalues.max();
    if lmin < 1e-12 * lmax.max(f64::MIN_POSITIVE) {
        return Err(lmin);
    }
    let roots = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Largest eigenvalue modulus, via the real Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// `base^k` for a square matrix, `k >= 0`.
pub fn mat_pow(base: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(base.nrows(), base.nrows());
    for _ in 0..k {
        out = &out * base;
    }
    out
}

/// Stacks `[B, AB, ..., A^(q-1) B]` with `q = nrows(A)` block columns.
pub fn reachability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let q = a.nrows();
    let mut out = DMatrix::zeros(q, b.ncols() * q);
    let mut block = b.clone();
    for j in 0..q {
        out.view_mut((0, j * b.ncols()), (q, b.ncols())).copy_from(&block);
        block = a * &block;
    }
    out
}

/// Rescales every nonzero column to unit norm. Column scaling preserves the
/// column space, which keeps rank decisions meaningful when power stacks
/// span many orders of magnitude.
pub fn normalize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        let norm = out.column(j).norm();
        if norm > 0.0 {
            out.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    out
}
