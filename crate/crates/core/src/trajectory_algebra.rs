//! Hankel/Toeplitz construction, persistence-of-excitation tests, kernel
//! bases, and the zero-initial-condition trajectory subspace built from one
//! measured trajectory.
//!
//! The central object is [`DataPage`]: for a measured trajectory `(u, y)`,
//! depth `L` and window `nu`, it holds the stacked Hankel matrix
//! `H = [H_L(u); H_L(y)]` and a basis `V` such that the columns of `H V` span
//! exactly the length-`L` system trajectories whose first `nu` input and
//! output samples vanish.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL_REL};
use crate::lti::Trajectory;

/// Hankel matrix of depth `L`: entry `(i, j) = x[i + j]`.
pub fn hankel(x: &[f64], depth: usize) -> Result<DMatrix<f64>> {
    if depth == 0 {
        return Err(Error::InvalidArgument(
            "hankel depth must be at least 1".to_string(),
        ));
    }
    if depth > x.len() {
        return Err(Error::InsufficientData {
            context: "hankel",
            required: depth,
            available: x.len(),
        });
    }
    let cols = x.len() - depth + 1;
    Ok(DMatrix::from_fn(depth, cols, |i, j| x[i + j]))
}

/// Lower-triangular Toeplitz matrix of a length-`L` sequence: entry
/// `(i, j) = a[i - j]` for `i >= j`. Acting on an input vector it performs
/// zero-initial-condition convolution.
pub fn toeplitz(a: &[f64]) -> DMatrix<f64> {
    let l = a.len();
    DMatrix::from_fn(l, l, |i, j| if i >= j { a[i - j] } else { 0.0 })
}

/// Stacked Hankel matrix `[H_L(u); H_L(y)]` of a measured trajectory.
pub fn stacked_hankel(traj: &Trajectory, depth: usize) -> Result<DMatrix<f64>> {
    let hu = hankel(traj.u(), depth)?;
    let hy = hankel(traj.y(), depth)?;
    let cols = hu.ncols();
    let mut h = DMatrix::zeros(2 * depth, cols);
    h.view_mut((0, 0), (depth, cols)).copy_from(&hu);
    h.view_mut((depth, 0), (depth, cols)).copy_from(&hy);
    Ok(h)
}

/// Outcome of a persistence-of-excitation test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeReport {
    pub order: usize,
    pub numerical_rank: usize,
    pub columns: usize,
    pub satisfied: bool,
}

impl PeReport {
    pub fn reason(&self) -> Option<&'static str> {
        if self.satisfied {
            None
        } else if self.columns < self.order {
            Some("insufficient data length")
        } else {
            Some("rank deficiency")
        }
    }
}

/// Tests whether the depth-`order` Hankel matrix of `x` has full row rank
/// (numerically: singular values above `rank_tol * sigma_max`).
pub fn is_persistently_exciting(x: &[f64], order: usize, rank_tol: f64) -> PeReport {
    if order == 0 || order > x.len() {
        return PeReport {
            order,
            numerical_rank: 0,
            columns: 0,
            satisfied: false,
        };
    }
    let h = hankel(x, order).expect("depth bounded by data length");
    let columns = h.ncols();
    let sv = h.svd(false, false).singular_values;
    let rank = linalg::numerical_rank(&sv, rank_tol);
    PeReport {
        order,
        numerical_rank: rank,
        columns,
        satisfied: rank == order,
    }
}

/// Largest order for which `x` is persistently exciting. Excitation of some
/// order implies excitation of every lower order, so a binary search over
/// rank tests suffices.
pub fn max_pe_order(x: &[f64], rank_tol: f64) -> usize {
    let cap = (x.len() + 1) / 2;
    let (mut lo, mut hi) = (0usize, cap);
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if is_persistently_exciting(x, mid, rank_tol).satisfied {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Orthonormal basis of the numerical kernel of `m`; zero columns when `m`
/// has full column rank.
pub fn kernel_basis(m: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    linalg::kernel_basis(m, rank_tol)
}

/// Selector picking the first `nu` input and output samples out of a stacked
/// length-`L` trajectory vector `(u; y)`; its kernel is the set of stacked
/// trajectories starting with `nu` zeros in both signals.
pub fn zero_init_selector(depth: usize, nu: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * nu, 2 * depth);
    for i in 0..nu {
        m[(i, i)] = 1.0;
        m[(nu + i, depth + i)] = 1.0;
    }
    m
}

/// Truncation selectors `(J_L_nu, J)`: `J_L_nu` drops the first `nu` entries
/// of a length-`L` signal, `J` applies it blockwise to a stacked `(u; y)`.
pub fn truncation_selectors(depth: usize, nu: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if nu == 0 || nu >= depth {
        return Err(Error::InvalidArgument(format!(
            "truncation requires 0 < nu < L, got nu={nu}, L={depth}"
        )));
    }
    let tail = depth - nu;
    let mut j_single = DMatrix::zeros(tail, depth);
    for i in 0..tail {
        j_single[(i, nu + i)] = 1.0;
    }
    let mut j = DMatrix::zeros(2 * tail, 2 * depth);
    j.view_mut((0, 0), (tail, depth)).copy_from(&j_single);
    j.view_mut((tail, depth), (tail, depth)).copy_from(&j_single);
    Ok((j_single, j))
}

/// Precomputed matrices for one dataset and horizon: the stacked Hankel
/// matrix, the zero-initial-condition coefficient basis, and the truncation
/// selector.
#[derive(Clone, Debug)]
pub struct DataPage {
    traj: Trajectory,
    depth: usize,
    nu: usize,
    n_bound: usize,
    h: DMatrix<f64>,
    v: DMatrix<f64>,
    j: DMatrix<f64>,
    // Caches: hv spans the zero-init trajectories, jhv their last L-nu samples.
    hv: DMatrix<f64>,
    jhv: DMatrix<f64>,
    pe_warning: Option<String>,
}

impl DataPage {
    pub fn traj(&self) -> &Trajectory {
        &self.traj
    }

    /// Hankel depth `L`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Initial-condition window `nu`.
    pub fn nu(&self) -> usize {
        self.nu
    }

    /// User-supplied upper bound on the plant order.
    pub fn n_bound(&self) -> usize {
        self.n_bound
    }

    /// Horizon `L - nu` over which dissipativity statements are made.
    pub fn horizon(&self) -> usize {
        self.depth - self.nu
    }

    /// Stacked Hankel matrix `[H_L(u); H_L(y)]`, `2L x (N-L+1)`.
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Orthonormal coefficient basis: columns of `H V` are the distinct
    /// length-`L` trajectories with `nu` leading zeros.
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Blockwise truncation selector, `2(L-nu) x 2L`.
    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    /// `H V`: stacked length-`L` trajectories, one per coefficient direction.
    pub fn trajectory_image(&self) -> &DMatrix<f64> {
        &self.hv
    }

    /// `J H V`: the same trajectories truncated to their last `L - nu`
    /// samples.
    pub fn truncated_image(&self) -> &DMatrix<f64> {
        &self.jhv
    }

    /// Input rows of [`Self::truncated_image`] (`N_u` in the synthesis
    /// formulas).
    pub fn n_u(&self) -> DMatrix<f64> {
        self.jhv.rows(0, self.horizon()).into_owned()
    }

    /// Output rows of [`Self::truncated_image`] (`N_y`).
    pub fn n_y(&self) -> DMatrix<f64> {
        self.jhv.rows(self.horizon(), self.horizon()).into_owned()
    }

    /// Set when the input satisfies the required excitation order but not the
    /// stronger `L + nu` variant.
    pub fn pe_warning(&self) -> Option<&str> {
        self.pe_warning.as_deref()
    }
}

/// Builds the [`DataPage`] for a measured trajectory.
///
/// Requires `n_bound <= nu < L <= N` and an input persistently exciting of
/// order `L + n_bound`. The returned basis `V` is orthonormal and spans the
/// coefficient directions that both annihilate the first `nu` samples and
/// produce distinct trajectories; coefficient directions in the kernel of the
/// Hankel matrix itself are dropped since they add nothing to the trajectory
/// span.
pub fn build_data_page(
    traj: &Trajectory,
    depth: usize,
    nu: usize,
    n_bound: usize,
) -> Result<DataPage> {
    let n_samples = traj.len();
    if nu < n_bound {
        return Err(Error::InvalidArgument(format!(
            "nu must satisfy n_bound <= nu, got nu={nu}, n_bound={n_bound}"
        )));
    }
    if nu == 0 || nu >= depth {
        return Err(Error::InvalidArgument(format!(
            "window must satisfy 0 < nu < L, got nu={nu}, L={depth}"
        )));
    }
    if depth > n_samples {
        return Err(Error::InsufficientData {
            context: "build_data_page",
            required: depth,
            available: n_samples,
        });
    }
    let pe_order = depth + n_bound;
    let pe = is_persistently_exciting(traj.u(), pe_order, RANK_TOL_REL);
    if !pe.satisfied {
        return Err(Error::NotPersistentlyExciting {
            required: pe_order,
            achieved_rank: pe.numerical_rank,
        });
    }
    let pe_strong = is_persistently_exciting(traj.u(), depth + nu, RANK_TOL_REL);
    let pe_warning = (!pe_strong.satisfied).then(|| {
        format!(
            "input is persistently exciting of order {} but not of order L + nu = {} \
             (numerical rank {})",
            pe_order,
            depth + nu,
            pe_strong.numerical_rank
        )
    });

    let h = stacked_hankel(traj, depth)?;
    let selector = zero_init_selector(depth, nu);
    let selected = &selector * &h;
    let full_kernel = linalg::kernel_basis(&selected, RANK_TOL_REL);
    if full_kernel.ncols() == 0 {
        return Err(Error::DegenerateData(
            "nu too large for data length: no zero-initial-condition trajectories representable"
                .to_string(),
        ));
    }
    // Quotient out ker(H): keep only kernel directions that map to distinct
    // trajectories, so H V has full column rank and the coefficient space
    // carries no spurious zero directions.
    let image = &h * &full_kernel;
    let svd = image.clone().svd(false, true);
    let rank = linalg::numerical_rank(&svd.singular_values, RANK_TOL_REL);
    if rank == 0 {
        return Err(Error::DegenerateData(
            "nu too large for data length: trajectory subspace is zero-dimensional".to_string(),
        ));
    }
    let v_t = svd.v_t.expect("svd requested v_t");
    let v = &full_kernel * v_t.rows(0, rank).transpose();

    let (_, j) = truncation_selectors(depth, nu)?;
    let hv = &h * &v;
    let jhv = &j * &hv;
    Ok(DataPage {
        traj: traj.clone(),
        depth,
        nu,
        n_bound,
        h,
        v,
        j,
        hv,
        jhv,
        pe_warning,
    })
}

/// Least-squares membership test of a stacked trajectory vector against the
/// page's zero-init trajectory span; returns the relative residual.
pub fn span_residual(page: &DataPage, stacked: &DVector<f64>) -> f64 {
    let (_, residual) = linalg::min_norm_lstsq(page.trajectory_image(), stacked, RANK_TOL_REL);
    residual / stacked.norm().max(f64::MIN_POSITIVE)
}
