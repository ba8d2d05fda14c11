//! Feasibility solving for the standard-form QMI
//! `Q(p) = Q0 + sum p_i Qi + sum p_i p_j Qij <= 0`.
//!
//! The quadratic part is split into a difference of two convex matrix
//! functions; each outer iteration linearizes the concave part at the current
//! iterate, producing a convex majorant `M(p) >= Q(p)` with equality at the
//! iterate, and approximately minimizes `lambda_max(M(p))` with a
//! cutting-plane (ellipsoid, subgradient from the top eigenvector) or
//! pattern-search inner method. Accepted iterates therefore never increase
//! the true margin. Reported feasibility is always re-verified by a direct
//! evaluation, independent of the solve path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lambda_max, lambda_max_with_vector, symmetrize};
use crate::synthesis::QmiProblem;

/// Slack applied when comparing margins against `-eps`.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Inner method for the convex majorant subproblem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    CuttingPlane,
    DirectSearch,
}

/// Options for [`solve_feasibility`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Outer (DC) iteration budget.
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    /// Target margin: success requires `lambda_max(Q(p)) <= -eps`.
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    /// Initial iterate; `None` starts from the zero controller.
    #[serde(default)]
    pub p0: Option<Vec<f64>>,
    /// Minimum per-iteration improvement before the solve stops.
    #[serde(default = "defaults::stagnation_tol")]
    pub stagnation_tol: f64,
    #[serde(default = "defaults::inner")]
    pub inner: InnerSolver,
}

mod defaults {
    use super::InnerSolver;

    pub fn max_iters() -> usize {
        40
    }

    pub fn eps() -> f64 {
        1e-6
    }

    pub fn stagnation_tol() -> f64 {
        1e-9
    }

    pub fn inner() -> InnerSolver {
        InnerSolver::CuttingPlane
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: defaults::max_iters(),
            eps: defaults::eps(),
            p0: None,
            stagnation_tol: defaults::stagnation_tol(),
            inner: defaults::inner(),
        }
    }
}

/// Outcome of a feasibility solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    /// Best parameter vector found (present unless the problem was rejected).
    pub p: Option<Vec<f64>>,
    pub feasible: bool,
    /// `lambda_max(Q(p))` at the returned point, recomputed independently.
    pub final_margin: f64,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Margin after the initial point and after each accepted iterate;
    /// monotone nonincreasing up to the stagnation tolerance.
    pub margin_trace: Vec<f64>,
}

/// Exact standard-form evaluation `Q(p)`; symmetric by construction.
pub fn evaluate(problem: &QmiProblem, p: &[f64]) -> Result<DMatrix<f64>> {
    let d = problem.parameter_count();
    if p.len() != d {
        return Err(Error::DimensionMismatch {
            context: "qmi::evaluate",
            expected: format!("{d} parameters"),
            got: format!("{}", p.len()),
        });
    }
    let mut q = problem.q0().clone();
    for (i, coeff) in p.iter().enumerate() {
        if *coeff != 0.0 {
            q += *coeff * &problem.qi()[i];
        }
    }
    for i in 0..d {
        for j in i..d {
            let coeff = p[i] * p[j];
            if coeff != 0.0 {
                q += coeff * problem.qij(i, j);
            }
        }
    }
    Ok(q)
}

/// Difference-of-convex decomposition of the quadratic part of a QMI.
///
/// The quadratic map `p -> sum p_i p_j V_ij` is encoded as the block matrix
/// `Theta` with `Theta[i, j] = V_ij` (symmetrized across the block
/// transpose), and split by eigendecomposition into `Theta = Theta+ - Theta-`
/// with both parts positive semidefinite. Quadratic maps built from a PSD
/// coefficient structure have convex `lambda_max`, so
/// `Q(p) = [affine + quad+](p) - quad-(p)` is an explicit DC decomposition.
#[derive(Clone, Debug)]
pub struct DcSplit {
    d: usize,
    dim: usize,
    theta_plus: DMatrix<f64>,
    theta_minus: DMatrix<f64>,
}

impl DcSplit {
    /// Quadratic part of the convex summand at `p`.
    pub fn convex_quad(&self, p: &[f64]) -> DMatrix<f64> {
        self.quad(&self.theta_plus, p)
    }

    /// Quadratic part of the concave summand at `p` (subtracted from `Q`).
    pub fn concave_quad(&self, p: &[f64]) -> DMatrix<f64> {
        self.quad(&self.theta_minus, p)
    }

    /// Partial derivatives of the concave quadratic at `p`.
    pub fn concave_quad_gradient(&self, p: &[f64]) -> Vec<DMatrix<f64>> {
        (0..self.d)
            .map(|k| self.quad_derivative(&self.theta_minus, p, k))
            .collect()
    }

    /// Partial derivative of the convex quadratic at `p`.
    pub fn convex_quad_derivative(&self, p: &[f64], k: usize) -> DMatrix<f64> {
        self.quad_derivative(&self.theta_plus, p, k)
    }

    /// True when the concave part vanishes, i.e. the QMI is convex in `p`.
    pub fn is_convex(&self) -> bool {
        self.theta_minus.amax() <= 1e-10 * self.theta_plus.amax().max(1.0)
    }

    fn block<'a>(theta: &'a DMatrix<f64>, i: usize, j: usize, dim: usize) -> nalgebra::DMatrixView<'a, f64> {
        theta.view((i * dim, j * dim), (dim, dim))
    }

    fn quad(&self, theta: &DMatrix<f64>, p: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.d {
            for j in 0..self.d {
                let coeff = p[i] * p[j];
                if coeff != 0.0 {
                    out += coeff * Self::block(theta, i, j, self.dim);
                }
            }
        }
        out
    }

    fn quad_derivative(&self, theta: &DMatrix<f64>, p: &[f64], k: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for j in 0..self.d {
            if p[j] != 0.0 {
                let b = Self::block(theta, k, j, self.dim);
                out += p[j] * (b + b.transpose());
            }
        }
        out
    }
}

/// Splits the quadratic coefficient structure into PSD and NSD parts via a
/// symmetric eigendecomposition; `convex - concave` reconstructs the
/// quadratic term exactly.
pub fn dc_split(problem: &QmiProblem) -> DcSplit {
    let d = problem.parameter_count();
    let dim = problem.dim();
    let mut theta = DMatrix::zeros(d * dim, d * dim);
    for i in 0..d {
        for j in i..d {
            let stored = problem.qij(i, j);
            if i == j {
                theta.view_mut((i * dim, i * dim), (dim, dim)).copy_from(stored);
            } else {
                let half = stored * 0.5;
                theta.view_mut((i * dim, j * dim), (dim, dim)).copy_from(&half);
                theta
                    .view_mut((j * dim, i * dim), (dim, dim))
                    .copy_from(&half.transpose());
            }
        }
    }
    let eig = symmetrize(&theta).symmetric_eigen();
    let total = d * dim;
    let mut theta_plus = DMatrix::zeros(total, total);
    let mut theta_minus = DMatrix::zeros(total, total);
    for k in 0..total {
        let lambda = eig.eigenvalues[k];
        if lambda == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let outer = &v * v.transpose();
        if lambda > 0.0 {
            theta_plus += lambda * &outer;
        } else {
            theta_minus += -lambda * &outer;
        }
    }
    DcSplit {
        d,
        dim,
        theta_plus,
        theta_minus,
    }
}

/// Golden-section minimization for one-dimensional inner subproblems.
fn golden_section_minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    center: f64,
    radius: f64,
    iters: usize,
) -> (Vec<f64>, f64) {
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut lo = center - radius;
    let mut hi = center + radius;
    let mut best_x = center;
    let mut best_f = f(&[center]);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(&[x1]);
    let mut f2 = f(&[x2]);
    for _ in 0..iters {
        if f1 < best_f {
            best_f = f1;
            best_x = x1;
        }
        if f2 < best_f {
            best_f = f2;
            best_x = x2;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(&[x1]);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(&[x2]);
        }
    }
    (vec![best_x], best_f)
}

/// Deep-cut-free central ellipsoid method on a convex function given by a
/// value/subgradient oracle. Starts at `center` with a ball of the given
/// radius; returns the best point visited.
fn ellipsoid_minimize(
    f_and_grad: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
    center: &[f64],
    radius: f64,
    iters: usize,
) -> (Vec<f64>, f64) {
    let d = center.len();
    if d == 1 {
        let mut f_only = |p: &[f64]| f_and_grad(p).0;
        return golden_section_minimize(&mut f_only, center[0], radius, iters);
    }
    let df = d as f64;
    let mut shape = DMatrix::<f64>::identity(d, d) * (radius * radius);
    let mut x = DVector::from_column_slice(center);
    let (mut best_f, _) = {
        let (fx, _) = f_and_grad(x.as_slice());
        (fx, ())
    };
    let mut best_x = x.clone();
    for _ in 0..iters {
        let (fx, grad) = f_and_grad(x.as_slice());
        if fx < best_f {
            best_f = fx;
            best_x = x.clone();
        }
        let g = DVector::from_vec(grad);
        let pg = &shape * &g;
        let denom = g.dot(&pg);
        if denom <= 0.0 || !denom.is_finite() {
            break;
        }
        let scale = denom.sqrt();
        let step = &pg / scale;
        x -= &step * (1.0 / (df + 1.0));
        let outer = &step * step.transpose();
        shape = (shape - outer * (2.0 / (df + 1.0))) * (df * df / (df * df - 1.0));
        shape = symmetrize(&shape);
    }
    // Final evaluation at the last center.
    let (fx, _) = f_and_grad(x.as_slice());
    if fx < best_f {
        best_f = fx;
        best_x = x;
    }
    (best_x.as_slice().to_vec(), best_f)
}

/// Deterministic coordinate pattern search on a plain value oracle.
fn pattern_search_minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: &[f64],
    initial_step: f64,
    min_step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let d = start.len();
    let mut x = start.to_vec();
    let mut fx = f(&x);
    let mut step = initial_step;
    let mut evals = 1;
    while step > min_step && evals < max_evals {
        let mut improved = false;
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] += sign * step;
                let fc = f(&cand);
                evals += 1;
                if fc < fx {
                    x = cand;
                    fx = fc;
                    improved = true;
                    break;
                }
                if evals >= max_evals {
                    break;
                }
            }
            if evals >= max_evals {
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Per-block solve state: augmented problems factor over their diagonal
/// blocks, and `lambda_max` of the whole matrix is the maximum over blocks.
struct BlockState {
    problem: QmiProblem,
    split: DcSplit,
    concave_at_anchor: DMatrix<f64>,
    concave_grad: Vec<DMatrix<f64>>,
}

impl BlockState {
    fn anchor(&mut self, anchor: &[f64]) {
        self.concave_at_anchor = self.split.concave_quad(anchor);
        self.concave_grad = self.split.concave_quad_gradient(anchor);
    }

    fn majorant(&self, p: &[f64], anchor: &[f64]) -> DMatrix<f64> {
        let mut m = self.problem.q0().clone();
        for (i, coeff) in p.iter().enumerate() {
            m += *coeff * &self.problem.qi()[i];
        }
        m += self.split.convex_quad(p);
        m -= &self.concave_at_anchor;
        for (i, grad_i) in self.concave_grad.iter().enumerate() {
            m -= (p[i] - anchor[i]) * grad_i;
        }
        m
    }
}

fn blockwise_margin(blocks: &[QmiProblem], p: &[f64]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for block in blocks {
        worst = worst.max(lambda_max(&evaluate(block, p)?));
    }
    Ok(worst)
}

/// Iterative DC feasibility solve; see the module docs for the contract.
pub fn solve_feasibility(problem: &QmiProblem, opts: &SolverOptions) -> Result<SolveReport> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument(
            "max_iters must be at least 1".to_string(),
        ));
    }
    if !(opts.eps >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be nonnegative, got {}",
            opts.eps
        )));
    }
    let d = problem.parameter_count();
    let p0 = match &opts.p0 {
        Some(p) => {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "solve_feasibility (p0)",
                    expected: format!("{d} parameters"),
                    got: format!("{}", p.len()),
                });
            }
            p.clone()
        }
        None => vec![0.0; d],
    };

    let block_problems = problem.split_into_blocks();

    let mut current = p0;
    let mut current_margin = blockwise_margin(&block_problems, &current)?;
    let mut trace = vec![current_margin];
    let mut iterations = 0;

    if current_margin > -opts.eps {
        let mut blocks: Vec<BlockState> = block_problems
            .iter()
            .map(|b| {
                let split = dc_split(b);
                BlockState {
                    problem: b.clone(),
                    split,
                    concave_at_anchor: DMatrix::zeros(0, 0),
                    concave_grad: Vec::new(),
                }
            })
            .collect();

        for _ in 0..opts.max_iters {
            iterations += 1;
            // Convex majorant at the current iterate: linearize each block's
            // concave quadratic. Equality holds at the iterate, so accepted
            // points cannot increase the true margin.
            let anchor = current.clone();
            for block in &mut blocks {
                block.anchor(&anchor);
            }

            let radius = 4.0 * (1.0 + current.iter().map(|v| v.abs()).fold(0.0, f64::max));
            let inner_budget = 60 * (d + 1);
            let (candidate, _) = match opts.inner {
                InnerSolver::CuttingPlane => {
                    let mut oracle = |p: &[f64]| -> (f64, Vec<f64>) {
                        // Value: max over blocks; subgradient: from the
                        // block attaining the max.
                        let mut value = f64::NEG_INFINITY;
                        let mut top = DVector::zeros(0);
                        let mut which = 0;
                        for (bi, block) in blocks.iter().enumerate() {
                            let m = block.majorant(p, &anchor);
                            let (v, vec) = lambda_max_with_vector(&m);
                            if v > value {
                                value = v;
                                top = vec;
                                which = bi;
                            }
                        }
                        let block = &blocks[which];
                        let mut grad = Vec::with_capacity(d);
                        for k in 0..d {
                            let mut dm = block.problem.qi()[k].clone();
                            dm += block.split.convex_quad_derivative(p, k);
                            dm -= &block.concave_grad[k];
                            grad.push((top.transpose() * dm * &top)[0]);
                        }
                        (value, grad)
                    };
                    ellipsoid_minimize(&mut oracle, &current, radius, inner_budget)
                }
                InnerSolver::DirectSearch => {
                    let mut oracle = |p: &[f64]| -> f64 {
                        blocks
                            .iter()
                            .map(|b| lambda_max(&b.majorant(p, &anchor)))
                            .fold(f64::NEG_INFINITY, f64::max)
                    };
                    pattern_search_minimize(
                        &mut oracle,
                        &current,
                        radius / 2.0,
                        1e-10 * radius,
                        inner_budget,
                    )
                }
            };

            let candidate_margin = blockwise_margin(&block_problems, &candidate)?;
            if candidate_margin < current_margin {
                let improvement = current_margin - candidate_margin;
                current = candidate;
                current_margin = candidate_margin;
                trace.push(current_margin);
                if current_margin <= -opts.eps || improvement < opts.stagnation_tol {
                    break;
                }
            } else {
                // Majorization guarantees no ascent; a non-improving inner
                // solve means stagnation.
                trace.push(current_margin);
                break;
            }
        }
    }

    // Independent certificate: the report's margin comes from a fresh
    // evaluation of the full problem at the returned point, not from the
    // solve trace.
    let final_margin = lambda_max(&evaluate(problem, &current)?);
    Ok(SolveReport {
        feasible: final_margin <= -opts.eps + FEASIBILITY_SLACK,
        p: Some(current),
        final_margin,
        iterations,
        margin_trace: trace,
    })
}

/// Deterministic grid scan plus pattern-search refinement for `d <= 3`
/// parameters; reports the best point found with feasibility threshold 0.
pub fn direct_search(
    problem: &QmiProblem,
    bounds: &[(f64, f64)],
    grid: usize,
) -> Result<SolveReport> {
    let d = problem.parameter_count();
    if d > 3 {
        return Err(Error::InvalidArgument(format!(
            "direct_search supports at most 3 parameters, got {d}"
        )));
    }
    if bounds.len() != d {
        return Err(Error::DimensionMismatch {
            context: "direct_search (bounds)",
            expected: format!("{d} intervals"),
            got: format!("{}", bounds.len()),
        });
    }
    if grid < 2 {
        return Err(Error::InvalidArgument(
            "grid resolution must be at least 2".to_string(),
        ));
    }
    for (lo, hi) in bounds {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "direct_search bounds must satisfy lo < hi, got ({lo}, {hi})"
            )));
        }
    }

    let block_problems = problem.split_into_blocks();
    let margin_of = |p: &[f64]| -> Result<f64> { blockwise_margin(&block_problems, p) };

    let coordinate = |axis: usize, idx: usize| -> f64 {
        let (lo, hi) = bounds[axis];
        lo + (hi - lo) * idx as f64 / (grid - 1) as f64
    };
    let mut best_p = vec![0.0; d];
    let mut best_margin = f64::INFINITY;
    let total = grid.pow(d as u32);
    let mut point = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        for axis in 0..d {
            point[axis] = coordinate(axis, rem % grid);
            rem /= grid;
        }
        let margin = margin_of(&point)?;
        if margin < best_margin {
            best_margin = margin;
            best_p = point.clone();
        }
    }

    let spacing = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (grid - 1) as f64)
        .fold(0.0, f64::max);
    let mut oracle =
        |p: &[f64]| blockwise_margin(&block_problems, p).expect("dimension checked");
    let (refined, refined_margin) =
        pattern_search_minimize(&mut oracle, &best_p, spacing, 1e-9 * spacing.max(1.0), 400);
    if refined_margin < best_margin {
        best_p = refined;
    }

    let final_margin = margin_of(&best_p)?;
    Ok(SolveReport {
        feasible: final_margin <= FEASIBILITY_SLACK,
        p: Some(best_p),
        final_margin,
        iterations: 1,
        margin_trace: vec![final_margin],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::QmiProblem;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_problem(q0: f64, qi: f64, qii: f64) -> QmiProblem {
        QmiProblem::new(
            DMatrix::from_element(1, 1, q0),
            vec![DMatrix::from_element(1, 1, qi)],
            vec![DMatrix::from_element(1, 1, qii)],
        )
        .unwrap()
    }

    fn random_problem(d: usize, dim: usize, seed: u64) -> QmiProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sym = |scale: f64| -> DMatrix<f64> {
            let raw = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-scale..scale));
            symmetrize(&raw)
        };
        let q0 = sym(1.0);
        let qi = (0..d).map(|_| sym(1.0)).collect();
        let qij = (0..d * (d + 1) / 2).map(|_| sym(0.5)).collect();
        QmiProblem::new(q0, qi, qij).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let p = scalar_problem(0.0, 2.0, 1.0);
        assert_eq!(evaluate(&p, &[0.0]).unwrap()[(0, 0)], 0.0);
        assert_eq!(evaluate(&p, &[-1.0]).unwrap()[(0, 0)], -1.0);
        assert!(evaluate(&p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dc_split_reconstructs_the_quadratic() {
        for seed in 0..5 {
            let problem = random_problem(2, 6, seed);
            let split = dc_split(&problem);
            for trial in 0..5 {
                let p = [
                    (trial as f64 - 2.0) / 2.0,
                    ((trial * 3 % 5) as f64 - 2.0) / 3.0,
                ];
                let direct = evaluate(&problem, &p).unwrap();
                let mut rebuilt = problem.q0().clone();
                for (i, coeff) in p.iter().enumerate() {
                    rebuilt += *coeff * &problem.qi()[i];
                }
                rebuilt += split.convex_quad(&p);
                rebuilt -= split.concave_quad(&p);
                let scale = direct.amax().max(1.0);
                assert!((rebuilt - direct).amax() <= 1e-10 * scale, "seed {seed}");
            }
        }
    }

    #[test]
    fn dc_split_detects_convex_problems() {
        // Single-parameter T^T T - c I structure: purely convex quadratic.
        let basis = crate::synthesis::fir_basis(4, 1).unwrap();
        let problem = crate::synthesis::small_gain_constraint(&basis, 1.0).unwrap();
        let split = dc_split(&problem);
        assert!(split.is_convex());

        // Indefinite scalar quadratic splits into both parts.
        let indefinite = QmiProblem::new(
            DMatrix::from_element(2, 2, 0.0),
            vec![DMatrix::zeros(2, 2)],
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0])],
        )
        .unwrap();
        let split = dc_split(&indefinite);
        assert!(!split.is_convex());
        assert_abs_diff_eq!(split.convex_quad(&[1.0])[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(split.concave_quad(&[1.0])[(1, 1)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda_max_of_split_parts_is_midpoint_convex() {
        let problem = random_problem(2, 5, 9);
        let split = dc_split(&problem);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10 {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let b = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            for part in [
                |s: &DcSplit, p: &[f64]| s.convex_quad(p),
                |s: &DcSplit, p: &[f64]| s.concave_quad(p),
            ] {
                let fa = lambda_max(&part(&split, &a));
                let fb = lambda_max(&part(&split, &b));
                let fm = lambda_max(&part(&split, &mid));
                assert!(fm <= 0.5 * (fa + fb) + 1e-10);
            }
        }
    }

    #[test]
    fn scalar_convex_solve() {
        // Q(p) = p^2 - 1: feasible for eps = 0.5 at any |p| <= 1/sqrt(2).
        let problem = scalar_problem(-1.0, 0.0, 1.0);
        let opts = SolverOptions {
            eps: 0.5,
            ..SolverOptions::default()
        };
        let report = solve_feasibility(&problem, &opts).unwrap();
        assert!(report.feasible);
        let p = report.p.unwrap()[0];
        assert!(p.abs() <= 1.0 / 2.0_f64.sqrt() + 1e-9);
        assert!(report.final_margin <= -0.5 + FEASIBILITY_SLACK);
    }

    #[test]
    fn zero_problem_is_feasible_immediately() {
        let problem = scalar_problem(0.0, 0.0, 0.0);
        let opts = SolverOptions {
            eps: 0.0,
            ..SolverOptions::default()
        };
        let report = solve_feasibility(&problem, &opts).unwrap();
        assert!(report.feasible);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.margin_trace, vec![0.0]);
    }

    #[test]
    fn nonconvex_scalar_needs_a_dc_step() {
        // Q(p) = 1 - p^2: infeasible at p = 0, feasible for |p| > 1.
        let problem = scalar_problem(1.0, 0.0, -1.0);
        let opts = SolverOptions {
            eps: 1e-6,
            p0: Some(vec![0.1]),
            ..SolverOptions::default()
        };
        let report = solve_feasibility(&problem, &opts).unwrap();
        assert!(report.feasible, "margin {}", report.final_margin);
        assert!(report.p.unwrap()[0].abs() > 1.0);
    }

    #[test]
    fn margin_trace_is_monotone() {
        for seed in 20..26 {
            let problem = random_problem(2, 8, seed);
            let report = solve_feasibility(&problem, &SolverOptions::default()).unwrap();
            for w in report.margin_trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9,
                    "trace increased: {} -> {} (seed {seed})",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let problem = random_problem(3, 10, 33);
        let a = solve_feasibility(&problem, &SolverOptions::default()).unwrap();
        let b = solve_feasibility(&problem, &SolverOptions::default()).unwrap();
        assert_eq!(a.p, b.p);
        assert_eq!(a.final_margin, b.final_margin);
        assert_eq!(a.margin_trace, b.margin_trace);
    }

    #[test]
    fn feasible_reports_verify_independently() {
        for seed in 40..50 {
            let problem = random_problem(2, 6, seed);
            let opts = SolverOptions::default();
            let report = solve_feasibility(&problem, &opts).unwrap();
            if report.feasible {
                let fresh = lambda_max(&evaluate(&problem, report.p.as_ref().unwrap()).unwrap());
                assert!(fresh <= -opts.eps + FEASIBILITY_SLACK);
            }
        }
    }

    #[test]
    fn direct_search_examples() {
        let convex = scalar_problem(-1.0, 0.0, 1.0);
        let report = direct_search(&convex, &[(-2.0, 2.0)], 41).unwrap();
        assert!(report.feasible);
        assert!(report.final_margin <= -0.9);

        let hopeless = QmiProblem::new(
            DMatrix::identity(3, 3),
            vec![DMatrix::zeros(3, 3)],
            vec![DMatrix::zeros(3, 3)],
        )
        .unwrap();
        let report = direct_search(&hopeless, &[(-1.0, 1.0)], 11).unwrap();
        assert!(!report.feasible);
        assert_abs_diff_eq!(report.final_margin, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn solver_and_direct_search_agree_on_feasibility_sign() {
        let problem = scalar_problem(0.5, 1.0, -0.2);
        let ds = direct_search(&problem, &[(-4.0, 4.0)], 81).unwrap();
        let dc = solve_feasibility(&problem, &SolverOptions::default()).unwrap();
        assert!(ds.feasible);
        assert!(dc.feasible, "margin {}", dc.final_margin);
    }
}
