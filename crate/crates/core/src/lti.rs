//! Discrete-time SISO LTI state-space systems: simulation, impulse responses,
//! feedback interconnection, and excitation-signal generation. These are the
//! model-based primitives used for data generation and for brute-force
//! oracles; the data-driven machinery never needs a plant model.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL_REL};

/// Magnitudes of `1 + D*Dc` at or below this are treated as ill-posed.
pub const ILL_POSED_TOL: f64 = 1e-12;

/// Minimal-realization quadruple of a SISO discrete-time LTI system:
///
/// ```text
/// x_{k+1} = A x_k + B u_k
/// y_k     = C x_k + D u_k
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: RowDVector<f64>,
    d: f64,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>, d: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "StateSpace::new (A)",
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "StateSpace::new (B)",
                expected: format!("{n}x1"),
                got: format!("{}x1", b.nrows()),
            });
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "StateSpace::new (C)",
                expected: format!("1x{n}"),
                got: format!("1x{}", c.ncols()),
            });
        }
        Ok(Self { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &RowDVector<f64> {
        &self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Largest eigenvalue magnitude of `A`.
    pub fn spectral_radius(&self) -> f64 {
        if self.order() == 0 {
            return 0.0;
        }
        self.a
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|ev| ev.norm())
            .fold(0.0, f64::max)
    }

    /// `[B, AB, ..., A^{n-1}B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut m = DMatrix::zeros(n, n);
        let mut col = self.b.clone();
        for j in 0..n {
            m.set_column(j, &col);
            col = &self.a * col;
        }
        m
    }

    /// `[C; CA; ...; CA^{n-1}]`.
    pub fn observability_matrix(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut m = DMatrix::zeros(n, n);
        let mut row = self.c.clone();
        for i in 0..n {
            m.set_row(i, &row);
            row = &row * &self.a;
        }
        m
    }

    /// Controllable and observable: both n-step structure matrices have full
    /// numerical rank.
    pub fn is_minimal(&self) -> bool {
        let n = self.order();
        if n == 0 {
            return true;
        }
        let rank = |m: DMatrix<f64>| {
            let sv = m.svd(false, false).singular_values;
            linalg::numerical_rank(&sv, RANK_TOL_REL)
        };
        rank(self.controllability_matrix()) == n && rank(self.observability_matrix()) == n
    }
}

/// Paired input/output sample sequences of equal finite length.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    u: Vec<f64>,
    y: Vec<f64>,
}

impl Trajectory {
    pub fn new(u: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "Trajectory::new",
                expected: format!("len(y) == len(u) == {}", u.len()),
                got: format!("len(y) == {}", y.len()),
            });
        }
        if u.is_empty() {
            return Err(Error::InvalidArgument(
                "trajectory must contain at least one sample".to_string(),
            ));
        }
        Ok(Self { u, y })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Markov parameters `a_0 .. a_{L-1}` of a SISO system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImpulseResponse(pub Vec<f64>);

impl ImpulseResponse {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ImpulseResponse {
    fn from(a: Vec<f64>) -> Self {
        Self(a)
    }
}

/// Which loop signal the interconnected realization emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopOutput {
    /// `z = G u`
    PlantOutput,
    /// `e = r - z`
    TrackingError,
    /// `u = K e`
    ControlInput,
}

/// Run the state recursion from `x0` and return the paired trajectory.
pub fn simulate(sys: &StateSpace, u: &[f64], x0: &DVector<f64>) -> Result<Trajectory> {
    if u.is_empty() {
        return Err(Error::InvalidArgument(
            "simulate requires at least one input sample".to_string(),
        ));
    }
    if x0.nrows() != sys.order() {
        return Err(Error::DimensionMismatch {
            context: "simulate (x0)",
            expected: format!("{}x1", sys.order()),
            got: format!("{}x1", x0.nrows()),
        });
    }
    let mut x = x0.clone();
    let mut y = Vec::with_capacity(u.len());
    for &uk in u {
        y.push((&sys.c * &x)[0] + sys.d * uk);
        x = &sys.a * &x + &sys.b * uk;
    }
    Trajectory::new(u.to_vec(), y)
}

/// First `horizon` Markov parameters: `a_0 = D`, `a_k = C A^{k-1} B`.
pub fn impulse_response(sys: &StateSpace, horizon: usize) -> Result<ImpulseResponse> {
    if horizon == 0 {
        return Err(Error::InvalidArgument(
            "impulse response horizon must be at least 1".to_string(),
        ));
    }
    let mut a = Vec::with_capacity(horizon);
    a.push(sys.d);
    let mut v = sys.b.clone();
    for _ in 1..horizon {
        a.push((&sys.c * &v)[0]);
        v = &sys.a * &v;
    }
    Ok(ImpulseResponse(a))
}

/// Realization of the standard feedback loop `e = r - z`, `u = K e`,
/// `z = G u`, with the channel `r -> z`.
pub fn feedback_interconnect(plant: &StateSpace, controller: &StateSpace) -> Result<StateSpace> {
    feedback_interconnect_output(plant, controller, LoopOutput::PlantOutput)
}

/// As [`feedback_interconnect`] but with a selectable output signal; only the
/// output equation changes between channels.
pub fn feedback_interconnect_output(
    plant: &StateSpace,
    controller: &StateSpace,
    output: LoopOutput,
) -> Result<StateSpace> {
    let dp = plant.d;
    let dc = controller.d;
    let loop_gain = 1.0 + dp * dc;
    if loop_gain.abs() <= ILL_POSED_TOL {
        return Err(Error::IllPosed {
            magnitude: loop_gain.abs(),
            d: dp,
            dc,
        });
    }
    let s = 1.0 / loop_gain;
    let nc = controller.order();
    let np = plant.order();
    let n = nc + np;

    // Solve the loop algebra for u and z as affine functions of (x_c, x_p, r):
    //   u = s (Cc x_c - Dc Cp x_p + Dc r)
    //   z = Cp x_p + Dp u,  e = r - z
    let mut u_row = RowDVector::zeros(n);
    u_row.view_mut((0, 0), (1, nc)).copy_from(&(s * &controller.c));
    u_row
        .view_mut((0, nc), (1, np))
        .copy_from(&(-s * dc * &plant.c));
    let u_d = s * dc;

    let mut z_row = RowDVector::zeros(n);
    z_row.view_mut((0, nc), (1, np)).copy_from(&plant.c);
    z_row += dp * &u_row;
    let z_d = dp * u_d;

    let e_row = -&z_row;
    let e_d = 1.0 - z_d;

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (nc, nc)).copy_from(&controller.a);
    a.view_mut((nc, nc), (np, np)).copy_from(&plant.a);
    for i in 0..nc {
        for j in 0..n {
            a[(i, j)] += controller.b[i] * e_row[j];
        }
    }
    for i in 0..np {
        for j in 0..n {
            a[(nc + i, j)] += plant.b[i] * u_row[j];
        }
    }

    let mut b = DVector::zeros(n);
    b.view_mut((0, 0), (nc, 1)).copy_from(&(&controller.b * e_d));
    b.view_mut((nc, 0), (np, 1)).copy_from(&(&plant.b * u_d));

    let (c, d) = match output {
        LoopOutput::PlantOutput => (z_row, z_d),
        LoopOutput::TrackingError => (e_row, e_d),
        LoopOutput::ControlInput => (u_row, u_d),
    };
    StateSpace::new(a, b, c, d)
}

/// Deterministic i.i.d. uniform samples on `(lo, hi)`.
pub fn pe_input_uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "input length must be at least 1".to_string(),
        ));
    }
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "uniform range requires lo < hi, got ({lo}, {hi})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Linearized, discretized two-tank plant (inflow to tank 1 in, level of
/// tank 2 out), sampled at Ts = 0.5 s.
pub fn two_tank_plant() -> StateSpace {
    StateSpace::new(
        DMatrix::from_row_slice(2, 2, &[0.9677, 0.0, 0.0317, 0.9677]),
        DVector::from_vec(vec![0.1363, 0.0022]),
        RowDVector::from_vec(vec![0.0, 1.0]),
        0.0,
    )
    .expect("fixture dimensions are consistent")
}

/// Discrete PI controller `u_k = Kp e_k + Ki Ts sum_{j<k} e_j` as a
/// first-order realization; its Markov parameters are
/// `[Kp, Ki Ts, Ki Ts, ...]`.
pub fn pi_controller(kp: f64, ki: f64, ts: f64) -> StateSpace {
    StateSpace::new(
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 1.0),
        RowDVector::from_element(1, ki * ts),
        kp,
    )
    .expect("fixture dimensions are consistent")
}

/// Static gain realized with one (unused) state, matching the other fixtures'
/// shape.
pub fn pure_gain(k: f64) -> StateSpace {
    StateSpace::new(
        DMatrix::zeros(1, 1),
        DVector::zeros(1),
        RowDVector::zeros(1),
        k,
    )
    .expect("fixture dimensions are consistent")
}

/// One-sample delay: `y_k = u_{k-1}`.
pub fn unit_delay() -> StateSpace {
    StateSpace::new(
        DMatrix::zeros(1, 1),
        DVector::from_element(1, 1.0),
        RowDVector::from_element(1, 1.0),
        0.0,
    )
    .expect("fixture dimensions are consistent")
}

/// Shift-register realization of an FIR filter with the given taps:
/// `a_k = coeffs[k]` for `k < len(coeffs)`, zero beyond.
pub fn fir_controller(coeffs: &[f64]) -> Result<StateSpace> {
    if coeffs.is_empty() {
        return Err(Error::InvalidArgument(
            "FIR controller needs at least one tap".to_string(),
        ));
    }
    let n = coeffs.len() - 1;
    let mut a = DMatrix::zeros(n, n);
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    if n > 0 {
        b[0] = 1.0;
    }
    let c = RowDVector::from_row_slice(&coeffs[1..]);
    StateSpace::new(a, b, c, coeffs[0])
}

/// Deterministic random minimal SISO system of order `n <= 3` with spectral
/// radius below 0.95. Regenerates internally until minimality and the
/// stability margin both hold.
pub fn random_stable_siso(n: usize, seed: u64) -> Result<StateSpace> {
    if n == 0 || n > 3 {
        return Err(Error::InvalidArgument(format!(
            "random_stable_siso supports orders 1..=3, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..256 {
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let c = RowDVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let d = rng.random_range(-1.0..1.0);
        let target_radius = rng.random_range(0.3..0.9);
        let sys_probe = StateSpace::new(a.clone(), b.clone(), c.clone(), d)?;
        let rho = sys_probe.spectral_radius();
        if rho > 0.0 {
            a *= target_radius / rho;
        }
        let sys = StateSpace::new(a, b, c, d)?;
        if sys.spectral_radius() < 0.95 && sys.is_minimal() {
            return Ok(sys);
        }
    }
    Err(Error::Internal(format!(
        "random_stable_siso exhausted regeneration budget for n={n}, seed={seed}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simulate_static_gain() {
        let sys = pure_gain(2.0);
        let traj = simulate(&sys, &[1.0, 1.0], &DVector::zeros(1)).unwrap();
        assert_eq!(traj.y(), &[2.0, 2.0]);
    }

    #[test]
    fn simulate_unit_delay_shifts() {
        let traj = simulate(&unit_delay(), &[1.0, 0.0, 0.0], &DVector::zeros(1)).unwrap();
        assert_eq!(traj.y(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn simulate_rejects_bad_initial_state() {
        let err = simulate(&two_tank_plant(), &[1.0], &DVector::zeros(3)).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"));
    }

    #[test]
    fn two_tank_simulation_matches_scalar_recursion() {
        // Independent oracle: the same recursion written out entry by entry
        // with the literal plant coefficients.
        let sys = two_tank_plant();
        let u = pe_input_uniform(223, -10.0, 10.0, 17).unwrap();
        let traj = simulate(&sys, &u, &DVector::zeros(2)).unwrap();

        let (mut x1, mut x2) = (0.0_f64, 0.0_f64);
        for (k, &uk) in u.iter().enumerate() {
            let y = x2;
            assert_abs_diff_eq!(traj.y()[k], y, epsilon = 1e-12);
            let nx1 = 0.9677 * x1 + 0.1363 * uk;
            let nx2 = 0.0317 * x1 + 0.9677 * x2 + 0.0022 * uk;
            x1 = nx1;
            x2 = nx2;
        }
    }

    #[test]
    fn simulate_is_linear_in_the_input() {
        let sys = random_stable_siso(3, 5).unwrap();
        let u1 = pe_input_uniform(40, -1.0, 1.0, 6).unwrap();
        let u2 = pe_input_uniform(40, -1.0, 1.0, 7).unwrap();
        let (alpha, beta) = (1.7, -0.4);
        let mixed: Vec<f64> = u1
            .iter()
            .zip(&u2)
            .map(|(&a, &b)| alpha * a + beta * b)
            .collect();
        let x0 = DVector::zeros(3);
        let y1 = simulate(&sys, &u1, &x0).unwrap();
        let y2 = simulate(&sys, &u2, &x0).unwrap();
        let ym = simulate(&sys, &mixed, &x0).unwrap();
        for k in 0..40 {
            let expect = alpha * y1.y()[k] + beta * y2.y()[k];
            assert_abs_diff_eq!(ym.y()[k], expect, epsilon = 1e-10 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn impulse_response_examples() {
        assert_eq!(
            impulse_response(&unit_delay(), 3).unwrap().as_slice(),
            &[0.0, 1.0, 0.0]
        );
        assert_eq!(
            impulse_response(&pure_gain(2.0), 2).unwrap().as_slice(),
            &[2.0, 0.0]
        );
    }

    #[test]
    fn pi_markov_parameters() {
        let (kp, ki, ts) = (0.1551, 0.0084, 0.5);
        let a = impulse_response(&pi_controller(kp, ki, ts), 5).unwrap();
        assert_abs_diff_eq!(a.as_slice()[0], kp, epsilon = 1e-15);
        for k in 1..5 {
            assert_abs_diff_eq!(a.as_slice()[k], ki * ts, epsilon = 1e-15);
        }
    }

    #[test]
    fn unity_gain_loop_halves_the_reference() {
        let cl = feedback_interconnect(&pure_gain(1.0), &pure_gain(1.0)).unwrap();
        let traj = simulate(&cl, &[1.0, 3.0, -2.0], &DVector::zeros(2)).unwrap();
        assert_eq!(traj.y(), &[0.5, 1.5, -1.0]);
    }

    #[test]
    fn two_tank_loop_is_well_posed_for_any_controller() {
        // D = 0, so 1 + D*Dc = 1 regardless of the controller feedthrough.
        let cl = feedback_interconnect(&two_tank_plant(), &pure_gain(1e6));
        assert!(cl.is_ok());
    }

    #[test]
    fn ill_posed_loop_is_rejected() {
        let err = feedback_interconnect(&pure_gain(1.0), &pure_gain(-1.0)).unwrap_err();
        assert!(matches!(err, Error::IllPosed { .. }));
    }

    #[test]
    fn delay_with_proportional_gain_matches_scalar_recursion() {
        let cl = feedback_interconnect(&unit_delay(), &pure_gain(0.5)).unwrap();
        let r = vec![1.0; 20];
        let traj = simulate(&cl, &r, &DVector::zeros(2)).unwrap();
        // z_{k+1} = 0.5 (r_k - z_k), z_0 = 0.
        let mut z = 0.0;
        for k in 0..20 {
            assert_abs_diff_eq!(traj.y()[k], z, epsilon = 1e-12);
            z = 0.5 * (r[k] - z);
        }
    }

    #[test]
    fn loop_outputs_are_consistent() {
        let plant = random_stable_siso(2, 11).unwrap();
        let ctrl = random_stable_siso(1, 12).unwrap();
        let r = pe_input_uniform(30, -1.0, 1.0, 13).unwrap();
        let x0 = DVector::zeros(3);
        let z = simulate(
            &feedback_interconnect_output(&plant, &ctrl, LoopOutput::PlantOutput).unwrap(),
            &r,
            &x0,
        )
        .unwrap();
        let e = simulate(
            &feedback_interconnect_output(&plant, &ctrl, LoopOutput::TrackingError).unwrap(),
            &r,
            &x0,
        )
        .unwrap();
        for k in 0..30 {
            assert_abs_diff_eq!(e.y()[k], r[k] - z.y()[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn pe_input_is_deterministic_and_in_range() {
        let a = pe_input_uniform(5, -1.0, 1.0, 42).unwrap();
        let b = pe_input_uniform(5, -1.0, 1.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| (-1.0..1.0).contains(&x)));
        let c = pe_input_uniform(5, -1.0, 1.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn two_tank_fixture_values() {
        let sys = two_tank_plant();
        assert_eq!(sys.d(), 0.0);
        assert_eq!(sys.order(), 2);
        // Lower-triangular A: eigenvalues are the diagonal.
        assert_abs_diff_eq!(sys.spectral_radius(), 0.9677, epsilon = 1e-12);
        assert!(sys.is_minimal());
    }

    #[test]
    fn random_fixtures_are_deterministic_and_minimal() {
        let a = random_stable_siso(3, 99).unwrap();
        let b = random_stable_siso(3, 99).unwrap();
        assert_eq!(a, b);
        let scalar = random_stable_siso(1, 1).unwrap();
        assert!(scalar.spectral_radius() < 0.95);
        for seed in 0..100 {
            let sys = random_stable_siso(3, seed).unwrap();
            assert!(sys.is_minimal(), "seed {seed} produced non-minimal system");
            assert!(sys.spectral_radius() < 0.95);
        }
    }
}
