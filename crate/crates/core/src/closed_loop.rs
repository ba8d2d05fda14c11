//! Data-driven parametrization of closed-loop trajectories in the standard
//! feedback loop (`e = r - z`, `u = K e`, `z = G u`), built from open-loop
//! plant data and the controller's impulse response. The controller never has
//! to be implemented and no closed-loop measurements are taken.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dissipativity::{block_supply, certify, estimate_feedthrough, Certificate, SupplyRate};
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL_REL};
use crate::lti::{ImpulseResponse, ILL_POSED_TOL};
use crate::synthesis::DissipativitySpec;
use crate::trajectory_algebra::{toeplitz, DataPage};

/// Closed-loop channel whose input-output pairs the parametrization emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    /// Reference to plant output.
    #[serde(rename = "r_to_z")]
    RToZ,
    /// Reference to tracking error.
    #[serde(rename = "r_to_e")]
    RToE,
    /// Reference to control input.
    #[serde(rename = "r_to_u")]
    RToU,
}

impl Channel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::RToZ => "r_to_z",
            Channel::RToE => "r_to_e",
            Channel::RToU => "r_to_u",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r_to_z" => Ok(Channel::RToZ),
            "r_to_e" => Ok(Channel::RToE),
            "r_to_u" => Ok(Channel::RToU),
            other => Err(Error::InvalidArgument(format!(
                "unknown channel {other:?}; expected r_to_z, r_to_e or r_to_u"
            ))),
        }
    }
}

/// Signal-mixing matrix that turns a stacked open-loop pair into the stacked
/// channel pair, `T = T_{L-nu}(a)`:
///
/// ```text
/// r_to_z: [[I, T], [0, T]]    r_to_e: [[I, T], [I, 0]]    r_to_u: [[I, T], [T, 0]]
/// ```
pub fn m_matrix(a: &ImpulseResponse, channel: Channel) -> DMatrix<f64> {
    let h = a.len();
    let t = toeplitz(a.as_slice());
    let eye = DMatrix::identity(h, h);
    let mut m = DMatrix::zeros(2 * h, 2 * h);
    m.view_mut((0, 0), (h, h)).copy_from(&eye);
    m.view_mut((0, h), (h, h)).copy_from(&t);
    match channel {
        Channel::RToZ => m.view_mut((h, h), (h, h)).copy_from(&t),
        Channel::RToE => m.view_mut((h, 0), (h, h)).copy_from(&eye),
        Channel::RToU => m.view_mut((h, 0), (h, h)).copy_from(&t),
    }
    m
}

/// Columns are stacked zero-initial-condition closed-loop trajectories of the
/// chosen channel, one per coefficient direction of the page.
#[derive(Clone, Debug)]
pub struct ClosedLoopMap {
    phi: DMatrix<f64>,
    channel: Channel,
    a: ImpulseResponse,
}

impl ClosedLoopMap {
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn controller(&self) -> &ImpulseResponse {
        &self.a
    }

    pub fn horizon(&self) -> usize {
        self.phi.nrows() / 2
    }

    /// Rows carrying the channel input (the reference).
    pub fn top(&self) -> DMatrix<f64> {
        self.phi.rows(0, self.horizon()).into_owned()
    }

    /// Rows carrying the channel output.
    pub fn bottom(&self) -> DMatrix<f64> {
        self.phi.rows(self.horizon(), self.horizon()).into_owned()
    }
}

fn check_controller_length(page: &DataPage, a: &ImpulseResponse) -> Result<()> {
    if a.len() != page.horizon() {
        return Err(Error::DimensionMismatch {
            context: "controller impulse response",
            expected: format!("length {}", page.horizon()),
            got: format!("length {}", a.len()),
        });
    }
    Ok(())
}

fn check_well_posed(page: &DataPage, a: &ImpulseResponse) -> Result<()> {
    let d = estimate_feedthrough(page)?;
    let dc = a.as_slice()[0];
    let magnitude = (1.0 + d * dc).abs();
    if magnitude <= ILL_POSED_TOL {
        return Err(Error::IllPosed { magnitude, d, dc });
    }
    Ok(())
}

/// Builds the closed-loop trajectory parametrization
/// `Phi = M_{L-nu}(a) J H V` after verifying well-posedness against the
/// data-estimated plant feedthrough.
pub fn closed_loop_map(
    page: &DataPage,
    a: &ImpulseResponse,
    channel: Channel,
) -> Result<ClosedLoopMap> {
    check_controller_length(page, a)?;
    check_well_posed(page, a)?;
    let phi = m_matrix(a, channel) * page.truncated_image();
    Ok(ClosedLoopMap {
        phi,
        channel,
        a: a.clone(),
    })
}

/// Data-driven closed-loop dissipativity test: the channel is
/// `(L - nu)`-dissipative w.r.t. the supply rate iff the supply quadratic
/// form is nonnegative over the closed-loop trajectory span.
pub fn validate_closed_loop(
    page: &DataPage,
    a: &ImpulseResponse,
    channel: Channel,
    sr: &SupplyRate,
) -> Result<Certificate> {
    let map = closed_loop_map(page, a, channel)?;
    let pi = block_supply(sr, map.horizon());
    certify(map.phi(), &pi, sr.norm())
}

/// As [`validate_closed_loop`] but honoring the spec's optional output
/// weighting filter: the channel output is convolved with the filter before
/// the supply rate is applied.
pub fn validate_spec(
    page: &DataPage,
    a: &ImpulseResponse,
    spec: &DissipativitySpec,
) -> Result<Certificate> {
    let map = closed_loop_map(page, a, spec.channel)?;
    let h = map.horizon();
    let phi = match &spec.filter {
        None => map.phi().clone(),
        Some(w) => {
            if w.len() != h {
                return Err(Error::DimensionMismatch {
                    context: "spec filter impulse response",
                    expected: format!("length {h}"),
                    got: format!("length {}", w.len()),
                });
            }
            let mut weighted = map.phi().clone();
            let filtered = toeplitz(w.as_slice()) * map.bottom();
            weighted.view_mut((h, 0), (h, map.phi().ncols())).copy_from(&filtered);
            weighted
        }
    };
    let pi = block_supply(&spec.supply, h);
    certify(&phi, &pi, spec.supply.norm())
}

/// Computes the channel output for a given reference by least squares over
/// the closed-loop span. Errors if the reference is not representable, which
/// signals an excitation or well-posedness deficiency.
pub fn closed_loop_response(
    page: &DataPage,
    a: &ImpulseResponse,
    channel: Channel,
    r_ref: &[f64],
) -> Result<Vec<f64>> {
    let map = closed_loop_map(page, a, channel)?;
    if r_ref.len() != map.horizon() {
        return Err(Error::DimensionMismatch {
            context: "closed_loop_response reference",
            expected: format!("length {}", map.horizon()),
            got: format!("length {}", r_ref.len()),
        });
    }
    let target = DVector::from_column_slice(r_ref);
    let (beta, residual) = linalg::min_norm_lstsq(&map.top(), &target, RANK_TOL_REL);
    let limit = 1e-6 * target.norm();
    if residual > limit {
        return Err(Error::NotRepresentable { residual, limit });
    }
    Ok((map.bottom() * beta).iter().copied().collect())
}

/// Smallest certified closed-loop L2-gain bound for the channel, by doubling
/// then bisection on [`validate_closed_loop`].
pub fn closed_loop_l2_gain(
    page: &DataPage,
    a: &ImpulseResponse,
    channel: Channel,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bisection tolerance must be positive, got {tol}"
        )));
    }
    let dissipative_at = |gamma: f64| -> Result<bool> {
        Ok(validate_closed_loop(page, a, channel, &SupplyRate::l2_gain(gamma))?.dissipative)
    };
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
                "closed-loop gain exceeds 2^60; loop is effectively unstable over this horizon"
                    .to_string(),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissipativity::oracle_l2_gain;
    use crate::lti::{
        feedback_interconnect, fir_controller, impulse_response, pe_input_uniform, pi_controller,
        random_stable_siso, simulate, two_tank_plant,
    };
    use crate::trajectory_algebra::build_data_page;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    #[test]
    fn m_matrix_examples() {
        let m = m_matrix(&ImpulseResponse(vec![1.0]), Channel::RToZ);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));

        let zero = m_matrix(&ImpulseResponse(vec![0.0, 0.0]), Channel::RToE);
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0,
            ],
        );
        assert_eq!(zero, expect);

        let m = m_matrix(&ImpulseResponse(vec![1.0, 0.0]), Channel::RToU);
        let ew = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let out = &m * &ew;
        assert_eq!(out, DVector::from_vec(vec![2.0, 0.0, 1.0, 0.0]));
    }

    fn fixture_page(seed: u64, order: usize, depth: usize) -> (crate::lti::StateSpace, DataPage) {
        let sys = random_stable_siso(order, seed).unwrap();
        let len = 2 * (depth + order) - 1;
        let u = pe_input_uniform(len, -1.0, 1.0, seed + 1000).unwrap();
        let traj = simulate(&sys, &u, &DVector::zeros(order)).unwrap();
        let page = build_data_page(&traj, depth, order, order).unwrap();
        (sys, page)
    }

    #[test]
    fn zero_controller_map_has_zero_output_block() {
        let (_, page) = fixture_page(200, 2, 12);
        let a = ImpulseResponse(vec![0.0; page.horizon()]);
        let map = closed_loop_map(&page, &a, Channel::RToZ).unwrap();
        assert!(map.bottom().amax() < 1e-12);
    }

    #[test]
    fn map_columns_match_interconnection_oracle() {
        let (sys, page) = fixture_page(201, 2, 12);
        let mut coeffs = vec![0.3, -0.2, 0.1];
        coeffs.resize(page.horizon(), 0.0);
        let a = ImpulseResponse(coeffs.clone());
        let ctrl = fir_controller(&coeffs[..3]).unwrap();
        let cl = feedback_interconnect(&sys, &ctrl).unwrap();
        let map = closed_loop_map(&page, &a, Channel::RToZ).unwrap();
        let x0 = DVector::zeros(cl.order());
        for j in 0..map.phi().ncols() {
            let r: Vec<f64> = map.top().column(j).iter().copied().collect();
            let z: Vec<f64> = map.bottom().column(j).iter().copied().collect();
            let oracle = simulate(&cl, &r, &x0).unwrap();
            let scale = z.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for k in 0..page.horizon() {
                assert!(
                    (oracle.y()[k] - z[k]).abs() <= 1e-8 * scale,
                    "column {j}, sample {k}"
                );
            }
        }
    }

    #[test]
    fn oracle_trajectories_lie_in_map_span() {
        let (sys, page) = fixture_page(202, 2, 12);
        let coeffs = [0.4, 0.1];
        let mut padded = coeffs.to_vec();
        padded.resize(page.horizon(), 0.0);
        let a = ImpulseResponse(padded);
        let ctrl = fir_controller(&coeffs).unwrap();
        let cl = feedback_interconnect(&sys, &ctrl).unwrap();
        let map = closed_loop_map(&page, &a, Channel::RToZ).unwrap();
        let h = page.horizon();
        for seed in 0..5 {
            let r = pe_input_uniform(h, -1.0, 1.0, 300 + seed).unwrap();
            let traj = simulate(&cl, &r, &DVector::zeros(cl.order())).unwrap();
            let mut stacked = DVector::zeros(2 * h);
            for k in 0..h {
                stacked[k] = r[k];
                stacked[h + k] = traj.y()[k];
            }
            let (_, residual) = linalg::min_norm_lstsq(map.phi(), &stacked, RANK_TOL_REL);
            assert!(residual / stacked.norm() <= 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn channel_maps_share_loop_algebra() {
        let (_, page) = fixture_page(203, 2, 12);
        let mut coeffs = vec![0.5, -0.1];
        coeffs.resize(page.horizon(), 0.0);
        let a = ImpulseResponse(coeffs);
        let mz = closed_loop_map(&page, &a, Channel::RToZ).unwrap();
        let me = closed_loop_map(&page, &a, Channel::RToE).unwrap();
        let mu = closed_loop_map(&page, &a, Channel::RToU).unwrap();
        // Same top block (the reference), e = r - z, u = T(a) e.
        assert!((me.top() - mz.top()).amax() < 1e-12);
        assert!((me.bottom() - (mz.top() - mz.bottom())).amax() < 1e-10);
        let t = toeplitz(a.as_slice());
        assert!((mu.bottom() - &t * me.bottom()).amax() < 1e-10);
    }

    #[test]
    fn lower_triangular_toeplitz_matrices_commute() {
        let a = pe_input_uniform(12, -1.0, 1.0, 400).unwrap();
        let g = pe_input_uniform(12, -1.0, 1.0, 401).unwrap();
        let v = DVector::from_vec(pe_input_uniform(12, -1.0, 1.0, 402).unwrap());
        let ta = toeplitz(&a);
        let tg = toeplitz(&g);
        let left = &ta * (&tg * &v);
        let right = &tg * (&ta * &v);
        assert!((left - right).amax() < 1e-10);
    }

    #[test]
    fn zero_controller_validation_examples() {
        let (_, page) = fixture_page(204, 2, 12);
        let a = ImpulseResponse(vec![0.0; page.horizon()]);
        let passive = validate_closed_loop(&page, &a, Channel::RToZ, &SupplyRate::passivity())
            .unwrap();
        assert!(passive.dissipative);

        let unit = validate_closed_loop(&page, &a, Channel::RToE, &SupplyRate::l2_gain(1.0))
            .unwrap();
        assert!(unit.dissipative);
        assert_abs_diff_eq!(unit.margin, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn two_tank_paper_pi_passes_gain_validation() {
        let plant = two_tank_plant();
        let u = pe_input_uniform(223, -10.0, 10.0, 205).unwrap();
        let traj = simulate(&plant, &u, &DVector::zeros(2)).unwrap();
        let page = build_data_page(&traj, 110, 2, 2).unwrap();
        let ctrl = pi_controller(0.1551, 0.0084, 0.5);
        let a = impulse_response(&ctrl, 108).unwrap();
        let cl = feedback_interconnect(&plant, &ctrl).unwrap();
        let gamma = oracle_l2_gain(&cl, 108).unwrap();
        let cert =
            validate_closed_loop(&page, &a, Channel::RToZ, &SupplyRate::l2_gain(gamma + 0.01))
                .unwrap();
        assert!(cert.dissipative, "margin {}", cert.margin);
    }

    #[test]
    fn response_of_zero_reference_is_zero() {
        let (_, page) = fixture_page(206, 2, 12);
        let mut coeffs = vec![0.2];
        coeffs.resize(page.horizon(), 0.0);
        let a = ImpulseResponse(coeffs);
        let z = closed_loop_response(&page, &a, Channel::RToZ, &vec![0.0; page.horizon()])
            .unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn step_response_matches_interconnection_oracle() {
        let (sys, page) = fixture_page(207, 2, 12);
        let coeffs = [0.3, 0.05];
        let mut padded = coeffs.to_vec();
        padded.resize(page.horizon(), 0.0);
        let a = ImpulseResponse(padded);
        let step = vec![1.0; page.horizon()];
        let z = closed_loop_response(&page, &a, Channel::RToZ, &step).unwrap();
        let ctrl = fir_controller(&coeffs).unwrap();
        let cl = feedback_interconnect(&sys, &ctrl).unwrap();
        let oracle = simulate(&cl, &step, &DVector::zeros(cl.order())).unwrap();
        for k in 0..page.horizon() {
            assert_abs_diff_eq!(z[k], oracle.y()[k], epsilon = 1e-6);
        }
    }

    #[test]
    fn two_tank_pi_step_response_from_data() {
        let plant = two_tank_plant();
        let u = pe_input_uniform(223, -10.0, 10.0, 208).unwrap();
        let traj = simulate(&plant, &u, &DVector::zeros(2)).unwrap();
        let page = build_data_page(&traj, 110, 2, 2).unwrap();
        let step = vec![1.0; 108];

        // The published PI gains: the data-driven response must coincide with
        // the interconnection oracle. Integral action pulls z toward 1, but
        // these gains do not settle within 5% inside the 108-sample horizon
        // (the oracle puts z at 0.88 after 100 samples).
        let slow = impulse_response(&pi_controller(0.1551, 0.0084, 0.5), 108).unwrap();
        let z = closed_loop_response(&page, &slow, Channel::RToZ, &step).unwrap();
        let cl = feedback_interconnect(&plant, &pi_controller(0.1551, 0.0084, 0.5)).unwrap();
        let oracle = simulate(&cl, &step, &DVector::zeros(3)).unwrap();
        for k in 0..108 {
            assert_abs_diff_eq!(z[k], oracle.y()[k], epsilon = 1e-6);
        }
        assert!(z[107] > 0.9 && z[107] < 1.0);
        assert!((50..108).all(|k| z[k] > z[k - 1]), "approach to 1 is monotone");

        // A stiffer PI settles within the horizon; the data-driven response
        // certifies the 5% band over the last samples.
        let fast = impulse_response(&pi_controller(1.8, 0.0225, 0.5), 108).unwrap();
        let z = closed_loop_response(&page, &fast, Channel::RToZ, &step).unwrap();
        for k in 100..108 {
            assert!((z[k] - 1.0).abs() < 0.05, "sample {k}: z = {}", z[k]);
        }
    }
}
