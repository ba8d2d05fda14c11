//! Dense linear-algebra helpers shared across the toolkit: SVD-based numerical
//! rank, kernel/column-space bases, symmetric spectra, and minimum-norm least
//! squares. All routines are deterministic for identical inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative threshold for numerical rank: singular values above
/// `RANK_TOL_REL * sigma_max` count toward the rank.
pub const RANK_TOL_REL: f64 = 1e-9;

/// Number of singular values exceeding `rel_tol * sigma_max`.
///
/// `singular_values` must be sorted in descending order (as returned by
/// nalgebra's `svd`).
pub fn numerical_rank(singular_values: &DVector<f64>, rel_tol: f64) -> usize {
    let sigma_max = singular_values.get(0).copied().unwrap_or(0.0);
    if sigma_max <= 0.0 {
        return 0;
    }
    let cut = rel_tol * sigma_max;
    singular_values.iter().take_while(|&&s| s > cut).count()
}

/// Orthonormal basis of the kernel of `m`, with rank decided by
/// `rel_tol * sigma_max`. A full-column-rank input yields a matrix with zero
/// columns.
///
/// The input is zero-padded to at least square so the thin SVD exposes the
/// full set of right singular vectors.
pub fn kernel_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let rank = numerical_rank(&svd.singular_values, rel_tol);
    let v_t = svd.v_t.expect("svd requested v_t");
    let null_dim = cols - rank;
    let mut basis = DMatrix::zeros(cols, null_dim);
    for j in 0..null_dim {
        basis.set_column(j, &v_t.row(rank + j).transpose());
    }
    basis
}

/// Orthonormal basis of the column space of `m` (left singular vectors of the
/// numerically nonzero part of the spectrum).
pub fn column_space_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let rank = numerical_rank(&svd.singular_values, rel_tol);
    let u = svd.u.expect("svd requested u");
    u.columns(0, rank).into_owned()
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    DVector::from_vec(ev)
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)[0]
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let ev = symmetric_eigenvalues(m);
    ev[ev.len() - 1]
}

/// Largest eigenvalue of a symmetric matrix together with a unit eigenvector.
pub fn lambda_max_with_vector(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .get(0)
        .copied()
        .unwrap_or(0.0)
}

/// Outcome of compressing a quadratic form onto the column space of a factor
/// matrix; see [`restricted_form_extrema`].
pub struct RestrictedForm {
    /// Smallest eigenvalue of the compressed form (the finite pencil minimum).
    pub min_eigenvalue: f64,
    /// Spectral norm of the compressed form, for relative tolerances.
    pub norm: f64,
    /// Dimension of the subspace actually tested.
    pub dim: usize,
}

/// Extremal Rayleigh quotients of `x^T form x / x^T x` over `x` in the column
/// space of `factor`.
///
/// Equivalently: the smallest finite generalized eigenvalue of the pencil
/// `(P^T form P, P^T P)` with `P = factor`; directions in the kernel of `P`
/// are excluded by the SVD rank cut.
pub fn restricted_form_extrema(
    factor: &DMatrix<f64>,
    form: &DMatrix<f64>,
    rel_tol: f64,
) -> Result<RestrictedForm> {
    let basis = column_space_basis(factor, rel_tol);
    if basis.ncols() == 0 {
        return Err(Error::DegenerateData(
            "trajectory subspace is zero-dimensional".to_string(),
        ));
    }
    let compressed = basis.transpose() * form * &basis;
    let ev = symmetric_eigenvalues(&compressed);
    let min_eigenvalue = ev[0];
    let norm = ev[0].abs().max(ev[ev.len() - 1].abs());
    Ok(RestrictedForm {
        min_eigenvalue,
        norm,
        dim: basis.ncols(),
    })
}

/// Minimum-norm least-squares solution of `A x = b` via the SVD
/// pseudoinverse. Returns the solution and the residual norm `|A x - b|`.
pub fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> (DVector<f64>, f64) {
    let svd = a.clone().svd(true, true);
    let rank = numerical_rank(&svd.singular_values, rel_tol);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let mut x = DVector::zeros(a.ncols());
    for i in 0..rank {
        let coeff = u.column(i).dot(b) / svd.singular_values[i];
        x += coeff * v_t.row(i).transpose();
    }
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Force exact symmetry: `(m + m^T)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
