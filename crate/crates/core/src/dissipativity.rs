//! Supply rates and finite-horizon dissipativity verification, both
//! data-driven (from a [`DataPage`], no plant model) and model-based (the
//! brute-force Toeplitz oracle used to test the data-driven path).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL_REL};
use crate::lti::{impulse_response, StateSpace};
use crate::trajectory_algebra::{toeplitz, DataPage};

/// Relative semidefiniteness tolerance: a margin down to
/// `-PSD_TOL_REL * |tested matrix|` still counts as dissipative.
pub const PSD_TOL_REL: f64 = 1e-8;

/// Scalar quadratic supply rate `(Q, S, R)`: running cost
/// `sum_k (u_k, y_k) [[Q, S], [S, R]] (u_k, y_k)^T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyRate {
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl SupplyRate {
    pub fn new(q: f64, s: f64, r: f64) -> Self {
        Self { q, s, r }
    }

    /// L2-gain bound `gamma`: `(gamma^2, 0, -1)`.
    pub fn l2_gain(gamma: f64) -> Self {
        Self::new(gamma * gamma, 0.0, -1.0)
    }

    /// Passivity in the standard scaling: `(0, 1/2, 0)`.
    pub fn passivity() -> Self {
        Self::new(0.0, 0.5, 0.0)
    }

    /// Spectral norm of the 2x2 supply matrix; the natural scale of any
    /// margin computed from this supply rate.
    pub fn norm(&self) -> f64 {
        let mean = 0.5 * (self.q + self.r);
        let radius = (0.25 * (self.q - self.r).powi(2) + self.s * self.s).sqrt();
        (mean + radius).abs().max((mean - radius).abs())
    }
}

/// Verdict of a dissipativity test together with its numerical evidence.
///
/// `margin` is the smallest generalized eigenvalue of the supply quadratic
/// form restricted to the trajectory subspace, i.e. the minimum of the supply
/// over unit-energy trajectories; it is invariant under the choice of
/// coefficient basis.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub dissipative: bool,
    pub margin: f64,
    /// Dimension of the trajectory subspace actually tested.
    pub matrix_dim: usize,
    /// Resolved absolute tolerance used for the verdict.
    pub tolerance: f64,
}

/// Lifts a scalar supply rate to the horizon-`L` block form
/// `[[Q I_L, S I_L], [S I_L, R I_L]]`.
pub fn block_supply(sr: &SupplyRate, horizon: usize) -> DMatrix<f64> {
    let mut pi = DMatrix::zeros(2 * horizon, 2 * horizon);
    for i in 0..horizon {
        pi[(i, i)] = sr.q;
        pi[(i, horizon + i)] = sr.s;
        pi[(horizon + i, i)] = sr.s;
        pi[(horizon + i, horizon + i)] = sr.r;
    }
    pi
}

/// Margin and verdict of `x^T Pi x >= 0` over the column space of `factor`.
///
/// `scale` is the caller-supplied magnitude of the supply rate; the verdict
/// tolerance is relative to the larger of it and the compressed form's norm,
/// so a form that is exactly zero still certifies.
pub(crate) fn certify(
    factor: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    scale: f64,
) -> Result<Certificate> {
    let form = linalg::restricted_form_extrema(factor, pi, RANK_TOL_REL)?;
    let tolerance = PSD_TOL_REL * form.norm.max(scale);
    Ok(Certificate {
        dissipative: form.min_eigenvalue >= -tolerance,
        margin: form.min_eigenvalue,
        matrix_dim: form.dim,
        tolerance,
    })
}

/// Data-driven open-loop test: the plant is `(L - nu)`-dissipative w.r.t.
/// the supply rate iff the supply quadratic form is nonnegative over the
/// zero-initial-condition trajectory span of the page.
pub fn check_open_loop(page: &DataPage, sr: &SupplyRate) -> Result<Certificate> {
    let pi = block_supply(sr, page.depth());
    certify(page.trajectory_image(), &pi, sr.norm()).map_err(|e| match e {
        Error::DegenerateData(_) => {
            Error::DegenerateData("nu too large for data length".to_string())
        }
        other => other,
    })
}

/// Plant feedthrough from data: build the zero-init trajectory whose input is
/// a unit pulse at the first free sample and read the output there.
pub fn estimate_feedthrough(page: &DataPage) -> Result<f64> {
    let depth = page.depth();
    let nu = page.nu();
    let hv = page.trajectory_image();
    let input_rows = hv.rows(0, depth).into_owned();
    let mut target = DVector::zeros(depth);
    target[nu] = 1.0;
    let (beta, residual) = linalg::min_norm_lstsq(&input_rows, &target, RANK_TOL_REL);
    if residual > 1e-6 {
        return Err(Error::DegenerateData(format!(
            "no representable trajectory with a unit input pulse at step nu \
             (residual {residual:.3e})"
        )));
    }
    let outputs = hv.rows(depth, depth) * beta;
    Ok(outputs[nu])
}

/// Smallest L2-gain bound `gamma` (within `tol`) that the open-loop data
/// certifies, found by doubling then bisection; monotonicity of the verdict
/// in `gamma` makes the bisection sound.
pub fn finite_horizon_l2_gain(page: &DataPage, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bisection tolerance must be positive, got {tol}"
        )));
    }
    let dissipative_at =
        |gamma: f64| -> Result<bool> { Ok(check_open_loop(page, &SupplyRate::l2_gain(gamma))?.dissipative) };
    if dissipative_at(0.0)? {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while !dissipative_at(hi)? {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Internal(
                "finite-horizon gain exceeds 2^60; data is unusable".to_string(),
            ));
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if dissipative_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Model-based brute-force check over the full zero-initial-condition
/// trajectory space `{(u, T u)}` of the given horizon. Exhaustive because the
/// input is free; used as the independent oracle for [`check_open_loop`].
pub fn oracle_check_dissipativity(
    sys: &StateSpace,
    horizon: usize,
    sr: &SupplyRate,
) -> Result<Certificate> {
    let g = impulse_response(sys, horizon)?;
    let t = toeplitz(g.as_slice());
    let mut factor = DMatrix::zeros(2 * horizon, horizon);
    factor
        .view_mut((0, 0), (horizon, horizon))
        .copy_from(&DMatrix::identity(horizon, horizon));
    factor.view_mut((horizon, 0), (horizon, horizon)).copy_from(&t);
    let pi = block_supply(sr, horizon);
    certify(&factor, &pi, sr.norm())
}

/// Model-based finite-horizon L2 gain: the largest singular value of the
/// zero-init convolution operator.
pub fn oracle_l2_gain(sys: &StateSpace, horizon: usize) -> Result<f64> {
    let g = impulse_response(sys, horizon)?;
    Ok(linalg::spectral_norm(&toeplitz(g.as_slice())))
}
