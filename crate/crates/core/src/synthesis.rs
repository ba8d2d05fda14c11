//! Assembly of the controller-synthesis quadratic matrix inequality: the
//! closed-loop dissipativity condition, with the controller Toeplitz matrix
//! parametrized as `T(a(p)) = sum_i p_i T_i` over structured basis matrices,
//! becomes
//!
//! ```text
//! Q(p) = Q0 + sum_i p_i Qi + sum_{i<=j} p_i p_j Qij  <=  0
//! ```
//!
//! in the parameters `p`. Feasible `p` certify the dissipativity
//! specification; several specifications combine by block-diagonal
//! augmentation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::closed_loop::Channel;
use crate::dissipativity::{block_supply, SupplyRate};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::lti::ImpulseResponse;
use crate::trajectory_algebra::{toeplitz, DataPage};

/// Family of lower-triangular Toeplitz basis matrices parametrizing the
/// controller: `T(a(p)) = sum_i p_i T_i`.
#[derive(Clone, Debug)]
pub struct ControllerBasis {
    name: String,
    horizon: usize,
    matrices: Vec<DMatrix<f64>>,
    labels: Vec<String>,
}

impl ControllerBasis {
    /// Builds a basis from explicit matrices, enforcing the lower-triangular
    /// constant-diagonal structure.
    pub fn new(
        name: impl Into<String>,
        matrices: Vec<DMatrix<f64>>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::InvalidArgument(
                "controller basis needs at least one matrix".to_string(),
            ));
        }
        if matrices.len() != labels.len() {
            return Err(Error::InvalidArgument(
                "controller basis needs one label per matrix".to_string(),
            ));
        }
        let horizon = matrices[0].nrows();
        for m in &matrices {
            if m.nrows() != horizon || m.ncols() != horizon {
                return Err(Error::DimensionMismatch {
                    context: "ControllerBasis::new",
                    expected: format!("{horizon}x{horizon}"),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            for i in 0..horizon {
                for j in 0..horizon {
                    if j > i && m[(i, j)] != 0.0 {
                        return Err(Error::InvalidArgument(
                            "controller basis matrices must be lower triangular".to_string(),
                        ));
                    }
                    if j <= i && i + 1 < horizon && m[(i + 1, j + 1)] != m[(i, j)] {
                        return Err(Error::InvalidArgument(
                            "controller basis matrices must have constant diagonals".to_string(),
                        ));
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            horizon,
            matrices,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of free parameters `d`.
    pub fn dim(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Controller Toeplitz matrix at parameters `p`.
    pub fn toeplitz_of(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "ControllerBasis::toeplitz_of",
                expected: format!("{} parameters", self.dim()),
                got: format!("{}", p.len()),
            });
        }
        let mut t = DMatrix::zeros(self.horizon, self.horizon);
        for (coeff, m) in p.iter().zip(&self.matrices) {
            t += *coeff * m;
        }
        Ok(t)
    }

    /// Controller impulse response at parameters `p` (first Toeplitz column).
    pub fn impulse_response_of(&self, p: &[f64]) -> Result<ImpulseResponse> {
        let t = self.toeplitz_of(p)?;
        Ok(ImpulseResponse(t.column(0).iter().copied().collect()))
    }
}

/// PI parametrization `p = (K_p, K_i)`: identity plus the strictly-lower
/// all-`Ts` integrator matrix.
pub fn pi_basis(horizon: usize, ts: f64) -> Result<ControllerBasis> {
    if horizon == 0 {
        return Err(Error::InvalidArgument(
            "basis horizon must be at least 1".to_string(),
        ));
    }
    if !(ts > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling time must be positive, got {ts}"
        )));
    }
    let integrator = DMatrix::from_fn(horizon, horizon, |i, j| if i > j { ts } else { 0.0 });
    ControllerBasis::new(
        "pi",
        vec![DMatrix::identity(horizon, horizon), integrator],
        vec!["K_p".to_string(), "K_i".to_string()],
    )
}

/// FIR parametrization with `taps` free Markov parameters: `T_i` carries ones
/// on the `i`-th subdiagonal, so `a(p) = p` padded with zeros.
pub fn fir_basis(horizon: usize, taps: usize) -> Result<ControllerBasis> {
    if horizon == 0 {
        return Err(Error::InvalidArgument(
            "basis horizon must be at least 1".to_string(),
        ));
    }
    if taps == 0 || taps > horizon {
        return Err(Error::InvalidArgument(format!(
            "FIR taps must satisfy 1 <= taps <= horizon, got {taps} (horizon {horizon})"
        )));
    }
    let mut matrices = Vec::with_capacity(taps);
    let mut labels = Vec::with_capacity(taps);
    for k in 0..taps {
        matrices.push(DMatrix::from_fn(horizon, horizon, |i, j| {
            if i >= k && i - k == j {
                1.0
            } else {
                0.0
            }
        }));
        labels.push(format!("a_{k}"));
    }
    ControllerBasis::new("fir", matrices, labels)
}

/// First-order low-pass filter impulse response with prescribed DC gain and
/// pole, truncated to the horizon: `w_k = dc_gain (1 - pole) pole^k`.
pub fn first_order_lowpass_filter(horizon: usize, dc_gain: f64, pole: f64) -> ImpulseResponse {
    let mut w = Vec::with_capacity(horizon);
    let mut power = 1.0;
    for _ in 0..horizon {
        w.push(dc_gain * (1.0 - pole) * power);
        power *= pole;
    }
    ImpulseResponse(w)
}

/// Constant (static-gain) filter impulse response.
pub fn constant_filter(horizon: usize, gain: f64) -> ImpulseResponse {
    let mut w = vec![0.0; horizon];
    w[0] = gain;
    ImpulseResponse(w)
}

/// One closed-loop dissipativity requirement: a channel, a supply rate, an
/// optional output-weighting filter, and a semidefiniteness relaxation
/// `delta <= 0` (`delta = 0` is the exact noise-free test; a negative value
/// demands a strict margin as headroom against measurement noise).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DissipativitySpec {
    pub channel: Channel,
    pub supply: SupplyRate,
    #[serde(default)]
    pub filter: Option<ImpulseResponse>,
    #[serde(default)]
    pub delta: f64,
}

impl DissipativitySpec {
    pub fn new(channel: Channel, supply: SupplyRate) -> Self {
        Self {
            channel,
            supply,
            filter: None,
            delta: 0.0,
        }
    }

    pub fn with_filter(mut self, filter: ImpulseResponse) -> Self {
        self.filter = Some(filter);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }
}

/// Standard-form QMI coefficients. The quadratic coefficients are stored
/// upper-triangular: `qij[idx(i, j)]` for `i <= j` already carries the
/// symmetrized sum of both orderings, so
/// `Q(p) = Q0 + sum_i p_i Qi + sum_{i<=j} p_i p_j qij[idx(i,j)]`.
#[derive(Clone, Debug)]
pub struct QmiProblem {
    q0: DMatrix<f64>,
    qi: Vec<DMatrix<f64>>,
    qij: Vec<DMatrix<f64>>,
    dim: usize,
    d: usize,
    // Sizes of the diagonal blocks when this problem came out of `augment`;
    // eigenvalue work factors over them.
    block_sizes: Vec<usize>,
}

impl QmiProblem {
    pub fn new(q0: DMatrix<f64>, qi: Vec<DMatrix<f64>>, qij: Vec<DMatrix<f64>>) -> Result<Self> {
        let dim = q0.nrows();
        Self::with_blocks(q0, qi, qij, vec![dim])
    }

    fn with_blocks(
        q0: DMatrix<f64>,
        qi: Vec<DMatrix<f64>>,
        qij: Vec<DMatrix<f64>>,
        block_sizes: Vec<usize>,
    ) -> Result<Self> {
        let dim = q0.nrows();
        let d = qi.len();
        if q0.ncols() != dim {
            return Err(Error::DimensionMismatch {
                context: "QmiProblem::new (Q0)",
                expected: format!("{dim}x{dim}"),
                got: format!("{}x{}", q0.nrows(), q0.ncols()),
            });
        }
        if qij.len() != d * (d + 1) / 2 {
            return Err(Error::DimensionMismatch {
                context: "QmiProblem::new (Qij)",
                expected: format!("{} matrices", d * (d + 1) / 2),
                got: format!("{}", qij.len()),
            });
        }
        debug_assert_eq!(block_sizes.iter().sum::<usize>(), dim);
        for m in qi.iter().chain(qij.iter()) {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    context: "QmiProblem::new (coefficient)",
                    expected: format!("{dim}x{dim}"),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            if (m - m.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidArgument(
                    "QMI coefficient matrices must be symmetric".to_string(),
                ));
            }
        }
        Ok(Self {
            q0,
            qi,
            qij,
            dim,
            d,
            block_sizes,
        })
    }

    /// Diagonal block sizes; a single entry unless built by [`augment`].
    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    /// Splits an augmented problem back into its diagonal blocks. The
    /// largest eigenvalue of `Q(p)` is the maximum over the blocks'.
    pub fn split_into_blocks(&self) -> Vec<QmiProblem> {
        if self.block_sizes.len() <= 1 {
            return vec![self.clone()];
        }
        let mut blocks = Vec::with_capacity(self.block_sizes.len());
        let mut offset = 0;
        for &size in &self.block_sizes {
            let slice = |m: &DMatrix<f64>| m.view((offset, offset), (size, size)).into_owned();
            let block = QmiProblem::with_blocks(
                slice(&self.q0),
                self.qi.iter().map(&slice).collect(),
                self.qij.iter().map(&slice).collect(),
                vec![size],
            )
            .expect("blocks of a valid problem are valid");
            blocks.push(block);
            offset += size;
        }
        blocks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of parameters `d`.
    pub fn parameter_count(&self) -> usize {
        self.d
    }

    pub fn q0(&self) -> &DMatrix<f64> {
        &self.q0
    }

    pub fn qi(&self) -> &[DMatrix<f64>] {
        &self.qi
    }

    /// Upper-triangular index of the stored `(i, j)` quadratic coefficient.
    pub fn qij_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.d);
        i * self.d - i * (i + 1) / 2 + j
    }

    /// Stored (already symmetrized) quadratic coefficient for `i <= j`.
    pub fn qij(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.qij[self.qij_index(i, j)]
    }

    pub fn qij_all(&self) -> &[DMatrix<f64>] {
        &self.qij
    }
}

fn upper_index(i: usize, j: usize, d: usize) -> usize {
    i * d - i * (i + 1) / 2 + j
}

/// Expands `-(Phi0 + sum p_i Phi_i)^T Pi (Phi0 + sum p_i Phi_i)` into
/// standard-form coefficients.
fn expand_affine_factor(
    phi0: &DMatrix<f64>,
    phis: &[DMatrix<f64>],
    pi: &DMatrix<f64>,
) -> (DMatrix<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let d = phis.len();
    let pi_phi0 = pi * phi0;
    let q0 = symmetrize(&(-(phi0.transpose() * &pi_phi0)));
    let mut qi = Vec::with_capacity(d);
    for phi_i in phis {
        let cross = phi_i.transpose() * &pi_phi0;
        qi.push(symmetrize(&(-(cross.transpose() + cross))));
    }
    let mut qij = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        let pi_phi_i = pi * &phis[i];
        for j in i..d {
            let block = phis[j].transpose() * &pi_phi_i;
            let stored = if i == j {
                symmetrize(&(-block))
            } else {
                symmetrize(&(-(block.transpose() + block)))
            };
            qij.push(stored);
        }
    }
    (q0, qi, qij)
}

/// Affine decomposition of the channel mixing matrix:
/// `M(a(p)) = M_const + sum_i p_i M_i`.
fn m_matrix_affine(
    basis: &ControllerBasis,
    channel: Channel,
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let h = basis.horizon();
    let eye = DMatrix::identity(h, h);
    let mut m_const = DMatrix::zeros(2 * h, 2 * h);
    m_const.view_mut((0, 0), (h, h)).copy_from(&eye);
    if channel == Channel::RToE {
        m_const.view_mut((h, 0), (h, h)).copy_from(&eye);
    }
    let mut m_lin = Vec::with_capacity(basis.dim());
    for t_i in basis.matrices() {
        let mut m = DMatrix::zeros(2 * h, 2 * h);
        m.view_mut((0, h), (h, h)).copy_from(t_i);
        match channel {
            Channel::RToZ => m.view_mut((h, h), (h, h)).copy_from(t_i),
            Channel::RToE => {}
            Channel::RToU => m.view_mut((h, 0), (h, h)).copy_from(t_i),
        }
        m_lin.push(m);
    }
    (m_const, m_lin)
}

/// Assembles the synthesis QMI for one dissipativity specification.
///
/// For the plain `r -> z` channel the closed-form coefficient matrices are
/// used directly; filtered specifications and the other channels go through
/// the generic expansion of the affine factor `Phi(p) = M(a(p)) [N_u; N_y]`
/// (with the filter pre-multiplying the output block). The relaxation
/// `delta` is folded into the constant block, so feasibility is uniformly
/// `Q(p) <= 0`.
pub fn assemble_qmi(
    page: &DataPage,
    spec: &DissipativitySpec,
    basis: &ControllerBasis,
) -> Result<QmiProblem> {
    let h = page.horizon();
    if basis.horizon() != h {
        return Err(Error::DimensionMismatch {
            context: "assemble_qmi (basis horizon)",
            expected: format!("{h}"),
            got: format!("{}", basis.horizon()),
        });
    }
    if spec.delta > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "relaxation delta must be <= 0, got {}",
            spec.delta
        )));
    }
    if let Some(w) = &spec.filter {
        if w.len() != h {
            return Err(Error::DimensionMismatch {
                context: "assemble_qmi (filter)",
                expected: format!("length {h}"),
                got: format!("length {}", w.len()),
            });
        }
    }

    let n_u = page.n_u();
    let n_y = page.n_y();
    let d = basis.dim();

    let (mut q0, qi, qij) = if spec.channel == Channel::RToZ && spec.filter.is_none() {
        // Closed-form coefficients for r -> z; SISO, so Q + S and Q + S^T
        // coincide.
        let (q, s, r) = (spec.supply.q, spec.supply.s, spec.supply.r);
        let q0 = symmetrize(&(-q * n_u.transpose() * &n_u));
        let mut qi = Vec::with_capacity(d);
        for t_i in basis.matrices() {
            let cross = n_u.transpose() * t_i * &n_y;
            qi.push(symmetrize(&(-(q + s) * (&cross + cross.transpose()))));
        }
        let mut qij = Vec::with_capacity(d * (d + 1) / 2);
        let core = q + 2.0 * s + r;
        for i in 0..d {
            let ti_ny = &basis.matrices()[i] * &n_y;
            for j in i..d {
                let tj_ny = &basis.matrices()[j] * &n_y;
                let v_ij = -core * ti_ny.transpose() * &tj_ny;
                let stored = if i == j {
                    symmetrize(&v_ij)
                } else {
                    symmetrize(&(&v_ij + v_ij.transpose()))
                };
                qij.push(stored);
            }
        }
        (q0, qi, qij)
    } else {
        let (m_const, m_lin) = m_matrix_affine(basis, spec.channel);
        let mut factor = DMatrix::zeros(2 * h, n_u.ncols());
        factor.view_mut((0, 0), (h, n_u.ncols())).copy_from(&n_u);
        factor.view_mut((h, 0), (h, n_u.ncols())).copy_from(&n_y);
        let weight = spec.filter.as_ref().map(|w| toeplitz(w.as_slice()));
        let apply = |m: &DMatrix<f64>| -> DMatrix<f64> {
            let mut phi = m * &factor;
            if let Some(t_w) = &weight {
                let filtered = t_w * phi.rows(h, h);
                phi.view_mut((h, 0), (h, phi.ncols())).copy_from(&filtered);
            }
            phi
        };
        let phi0 = apply(&m_const);
        let phis: Vec<DMatrix<f64>> = m_lin.iter().map(|m| apply(m)).collect();
        let pi = block_supply(&spec.supply, h);
        expand_affine_factor(&phi0, &phis, &pi)
    };

    if spec.delta != 0.0 {
        for i in 0..q0.nrows() {
            q0[(i, i)] -= spec.delta;
        }
    }
    QmiProblem::new(q0, qi, qij)
}

/// Block-diagonal augmentation: the result is feasible at `p` exactly when
/// every input problem is.
pub fn augment(problems: &[QmiProblem]) -> Result<QmiProblem> {
    let Some(first) = problems.first() else {
        return Err(Error::InvalidArgument(
            "augment needs at least one problem".to_string(),
        ));
    };
    let d = first.parameter_count();
    for p in problems {
        if p.parameter_count() != d {
            return Err(Error::DimensionMismatch {
                context: "augment (parameter count)",
                expected: format!("{d}"),
                got: format!("{}", p.parameter_count()),
            });
        }
    }
    if problems.len() == 1 {
        return Ok(first.clone());
    }
    let total: usize = problems.iter().map(|p| p.dim()).sum();
    let blockdiag = |select: &dyn Fn(&QmiProblem) -> &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(total, total);
        let mut offset = 0;
        for p in problems {
            out.view_mut((offset, offset), (p.dim(), p.dim()))
                .copy_from(select(p));
            offset += p.dim();
        }
        out
    };
    let q0 = blockdiag(&|p: &QmiProblem| p.q0());
    let qi: Vec<DMatrix<f64>> = (0..d)
        .map(|i| blockdiag(&|p: &QmiProblem| &p.qi()[i]))
        .collect();
    let mut qij = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            qij.push(blockdiag(&|p: &QmiProblem| {
                &p.qij_all()[upper_index(i, j, d)]
            }));
        }
    }
    let block_sizes = problems
        .iter()
        .flat_map(|p| p.block_sizes().iter().copied())
        .collect();
    QmiProblem::with_blocks(q0, qi, qij, block_sizes)
}

/// Controller-energy bound of the small-gain remark as a purely convex QMI:
/// `T(a(p))^T T(a(p)) - c I <= 0`. With `c = 1/gamma_plant` this bounds the
/// controller norm enough to certify a finite closed-loop gain.
pub fn small_gain_constraint(basis: &ControllerBasis, bound: f64) -> Result<QmiProblem> {
    if !(bound > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "small-gain bound must be positive, got {bound}"
        )));
    }
    let h = basis.horizon();
    let d = basis.dim();
    let q0 = DMatrix::from_diagonal_element(h, h, -bound);
    let qi = vec![DMatrix::zeros(h, h); d];
    let mut qij = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            let block = basis.matrices()[i].transpose() * &basis.matrices()[j];
            let stored = if i == j {
                symmetrize(&block)
            } else {
                symmetrize(&(&block + block.transpose()))
            };
            qij.push(stored);
        }
    }
    QmiProblem::new(q0, qi, qij)
}
