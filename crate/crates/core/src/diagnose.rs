//! Post-solve checks on trajectories: energy balance, the manifold
//! dissipation inequality and the turnpike measure.
//!
//! Every integral uses the midpoint rule on the trajectory grid, the same
//! quadrature as the transcribed cost.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::dot;
use crate::manifold::DissipationMap;
use crate::phsys::PortHamiltonian;
use crate::solver::{self, SolveStatus, SolverOptions};
use crate::transcribe::{self, OcpSpec, TranscribeError, Trajectory};

#[derive(Debug, Error)]
pub enum DiagnoseError {
    #[error("trajectory state has length {got}, system expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("invalid horizon sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Transcribe(#[from] TranscribeError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `∫ yᵀu dt`.
    pub supplied: f64,
    /// `∫ ‖R^{1/2}η‖² dt`.
    pub dissipated: f64,
    #[serde(rename = "delta_H")]
    pub delta_h: f64,
    /// `|supplied − (delta_H + dissipated)|`.
    pub balance_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnpikeReport {
    pub epsilon: f64,
    /// Time spent with `dist(x_mid, M) > ε`, summed over intervals.
    pub measure_outside: f64,
    pub fraction_outside: f64,
    pub max_distance: f64,
    /// First grid time with `dist ≤ ε`.
    pub entry_time: Option<f64>,
    /// Last grid time with `dist ≤ ε`.
    pub exit_time: Option<f64>,
    /// Grid nodes with `dist > ε`, out of `N + 1`.
    pub nodes_outside: usize,
    /// Samples whose projection did not converge; each counts as outside.
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipativityReport {
    /// `H(x_T) − H(x₀)`.
    pub lhs: f64,
    /// `∫ yᵀu − c²·dist(x, M)² dt`.
    pub rhs: f64,
    pub slack: f64,
    pub c_used: f64,
    pub tol: f64,
    pub passed: bool,
}

fn check_dims(traj: &Trajectory, sys: &dyn PortHamiltonian) -> Result<(), DiagnoseError> {
    let n = sys.state_dim();
    match traj.x.iter().find(|x| x.len() != n) {
        Some(x) => Err(DiagnoseError::DimensionMismatch { expected: n, got: x.len() }),
        None => Ok(()),
    }
}

/// Midpoint power terms `(yᵀu, ηᵀRη)` of interval `k`.
fn interval_powers(traj: &Trajectory, sys: &dyn PortHamiltonian, k: usize) -> (f64, f64) {
    let xm = traj.midpoint(k);
    let eta = sys.eta(&xm);
    let y = sys.b(&xm).tr_matvec(&eta);
    (dot(&y, &traj.u[k]), dot(&eta, &sys.r(&xm).matvec(&eta)))
}

pub fn energy_balance(traj: &Trajectory, sys: &dyn PortHamiltonian) -> Result<EnergyReport, DiagnoseError> {
    check_dims(traj, sys)?;
    let (mut supplied, mut dissipated) = (0.0, 0.0);
    for k in 0..traj.intervals() {
        let h = traj.step(k);
        let (s, d) = interval_powers(traj, sys, k);
        supplied += h * s;
        dissipated += h * d;
    }
    let delta_h = sys.hamiltonian(&traj.x[traj.intervals()]) - sys.hamiltonian(&traj.x[0]);
    Ok(EnergyReport { supplied, dissipated, delta_h, balance_residual: (supplied - (delta_h + dissipated)).abs() })
}

pub fn turnpike_measure(traj: &Trajectory, dm: &DissipationMap<'_>, epsilon: f64) -> Result<TurnpikeReport, DiagnoseError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(DiagnoseError::InvalidEpsilon(epsilon));
    }
    check_dims(traj, dm.system())?;
    let mut unconverged = 0;
    let mut max_distance = 0.0f64;
    let mut measure_outside = 0.0;
    for k in 0..traj.intervals() {
        let d = dm.distance(&traj.midpoint(k));
        max_distance = max_distance.max(d.value);
        if !d.converged {
            unconverged += 1;
        }
        if !d.converged || d.value > epsilon {
            measure_outside += traj.step(k);
        }
    }
    let mut inside_times = Vec::new();
    let mut nodes_outside = 0;
    for (t, x) in traj.t.iter().zip(&traj.x) {
        let d = dm.distance(x);
        max_distance = max_distance.max(d.value);
        if !d.converged {
            unconverged += 1;
        }
        if d.converged && d.value <= epsilon {
            inside_times.push(*t);
        } else {
            nodes_outside += 1;
        }
    }
    let horizon = traj.horizon();
    Ok(TurnpikeReport {
        epsilon,
        measure_outside,
        fraction_outside: if horizon > 0.0 { measure_outside / horizon } else { 0.0 },
        max_distance,
        entry_time: inside_times.first().copied(),
        exit_time: inside_times.last().copied(),
        nodes_outside,
        unconverged,
    })
}

/// Checks `H(x_T) − H(x₀) ≤ ∫ yᵀu − c²·dist(x, M)² dt` up to `tol`.
pub fn dissipativity_check(traj: &Trajectory, dm: &DissipationMap<'_>, c: f64, tol: f64) -> Result<DissipativityReport, DiagnoseError> {
    let sys = dm.system();
    check_dims(traj, sys)?;
    let mut rhs = 0.0;
    for k in 0..traj.intervals() {
        let (s, _) = interval_powers(traj, sys, k);
        let d = dm.distance(&traj.midpoint(k)).value;
        rhs += traj.step(k) * (s - c * c * d * d);
    }
    let lhs = sys.hamiltonian(&traj.x[traj.intervals()]) - sys.hamiltonian(&traj.x[0]);
    let slack = rhs - lhs;
    Ok(DissipativityReport { lhs, rhs, slack, c_used: c, tol, passed: slack >= -tol })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub horizon: f64,
    pub intervals: usize,
    pub status: SolveStatus,
    pub cost: f64,
    pub eq_violation: f64,
    pub turnpike: TurnpikeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub step: f64,
    pub epsilon: f64,
    pub rows: Vec<SweepRow>,
    pub all_converged: bool,
    /// `max ≤ 1.5·min + 0.5` over the rows' `measure_outside`.
    pub bounded: bool,
}

/// Solves `template` at each horizon with the template's step size held fixed.
///
/// Horizons are solved concurrently; rows keep the order of `horizons`.
pub fn horizon_sweep(template: &OcpSpec, horizons: &[f64], epsilon: f64, opts: &SolverOptions) -> Result<SweepReport, DiagnoseError> {
    if horizons.is_empty() {
        return Err(DiagnoseError::InvalidSweep("no horizons given".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(DiagnoseError::InvalidEpsilon(epsilon));
    }
    template.validate()?;
    let h = template.step();
    let specs = horizons
        .iter()
        .map(|&horizon| {
            let ratio = horizon / h;
            let intervals = ratio.round();
            if !(horizon > 0.0) || intervals < 1.0 || (ratio - intervals).abs() > 1e-9 * ratio.max(1.0) {
                return Err(DiagnoseError::InvalidSweep(format!("horizon {horizon} is not a positive multiple of the step {h}")));
            }
            Ok(OcpSpec { horizon, intervals: intervals as usize, ..template.clone() })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let rows = specs
        .into_par_iter()
        .map(|spec| -> Result<SweepRow, DiagnoseError> {
            let (horizon, intervals) = (spec.horizon, spec.intervals);
            let system = spec.system.clone();
            let nlp = transcribe::transcribe(spec)?;
            let sol = solver::solve(&nlp, &nlp.initial_guess(), opts);
            let traj = nlp.decode(&sol.w_star)?;
            let dm = DissipationMap::new(system.as_ref());
            Ok(SweepRow {
                horizon,
                intervals,
                status: sol.status,
                cost: sol.cost,
                eq_violation: sol.eq_violation,
                turnpike: turnpike_measure(&traj, &dm, epsilon)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let measures = rows.iter().map(|r| r.turnpike.measure_outside);
    let max = measures.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = measures.fold(f64::INFINITY, f64::min);
    Ok(SweepReport {
        step: h,
        epsilon,
        all_converged: rows.iter().all(|r| r.status == SolveStatus::Converged),
        bounded: max <= 1.5 * min + 0.5,
        rows,
    })
}

impl SweepReport {
    /// Flat CSV with one row per horizon.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "T",
            "N",
            "status",
            "cost",
            "eq_violation",
            "epsilon",
            "measure_outside",
            "fraction_outside",
            "max_distance",
            "nodes_outside",
        ])?;
        for r in &self.rows {
            let status = match r.status {
                SolveStatus::Converged => "converged",
                SolveStatus::IterationCap => "iteration-cap",
                SolveStatus::LineSearchFailure => "line-search-failure",
            };
            w.write_record([
                r.horizon.to_string(),
                r.intervals.to_string(),
                status.to_string(),
                r.cost.to_string(),
                r.eq_violation.to_string(),
                r.turnpike.epsilon.to_string(),
                r.turnpike.measure_outside.to_string(),
                r.turnpike.fraction_outside.to_string(),
                r.turnpike.max_distance.to_string(),
                r.turnpike.nodes_outside.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::phsys::{LinearPh, Ph1};
    use crate::transcribe::simulate;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn constant_offset_trajectory(offset: f64, horizon: f64, intervals: usize) -> Trajectory {
        let x = (0..=intervals).map(|k| vec![offset, k as f64 / intervals as f64]).collect();
        Trajectory::from_states(&Ph1, horizon, x, vec![vec![0.0]; intervals])
    }

    #[test]
    fn zero_input_supplies_nothing_and_loses_energy() {
        let traj = simulate(&Ph1, &[2.0, 1.0], &vec![vec![0.0]; 200], 10.0).unwrap();
        let e = energy_balance(&traj, &Ph1).unwrap();
        assert_eq!(e.supplied, 0.0);
        assert!(e.dissipated >= 0.0);
        assert!(e.delta_h <= e.balance_residual);
    }

    #[test]
    fn equilibrium_has_all_zero_terms() {
        let traj = Trajectory::from_states(&Ph1, 1.0, vec![vec![0.0, 0.0]; 11], vec![vec![0.0]; 10]);
        let e = energy_balance(&traj, &Ph1).unwrap();
        assert_eq!(e, EnergyReport { supplied: 0.0, dissipated: 0.0, delta_h: 0.0, balance_residual: 0.0 });
    }

    #[test]
    fn balance_residual_within_second_order_bound() {
        for u in [0.0, 1.0] {
            for big_n in [100, 200, 400] {
                let traj = simulate(&Ph1, &[2.0, 1.0], &vec![vec![u]; big_n], 10.0).unwrap();
                let e = energy_balance(&traj, &Ph1).unwrap();
                let h = 10.0 / big_n as f64;
                assert!(e.balance_residual <= 10.0 * h * h * (1.0 + e.supplied.abs() + e.dissipated), "{e:?}");
            }
        }
    }

    #[test]
    fn mismatched_trajectory_is_rejected() {
        let traj = Trajectory { t: vec![0.0, 1.0], x: vec![vec![0.0; 3]; 2], u: vec![vec![0.0]], y: vec![vec![0.0]] };
        assert!(matches!(energy_balance(&traj, &Ph1), Err(DiagnoseError::DimensionMismatch { expected: 2, got: 3 })));
    }

    #[test]
    fn trajectory_on_manifold_is_never_outside() {
        let dm = DissipationMap::new(&Ph1);
        let r = turnpike_measure(&constant_offset_trajectory(0.0, 5.0, 50), &dm, 0.1).unwrap();
        assert_eq!(r.measure_outside, 0.0);
        assert_eq!(r.entry_time, Some(0.0));
        assert_eq!(r.exit_time, Some(5.0));
    }

    #[test]
    fn constant_offset_beyond_epsilon_is_always_outside() {
        let dm = DissipationMap::new(&Ph1);
        let r = turnpike_measure(&constant_offset_trajectory(0.2, 5.0, 50), &dm, 0.1).unwrap();
        assert_abs_diff_eq!(r.measure_outside, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fraction_outside, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.max_distance, 0.2, epsilon = 1e-9);
        assert_eq!(r.entry_time, None);
    }

    #[test]
    fn measure_outside_shrinks_as_epsilon_grows() {
        let traj = simulate(&Ph1, &[2.0, 1.0], &vec![vec![3.0]; 100], 10.0).unwrap();
        let dm = DissipationMap::new(&Ph1);
        let m: Vec<f64> = [0.05, 0.1, 0.2].iter().map(|&e| turnpike_measure(&traj, &dm, e).unwrap().measure_outside).collect();
        assert!(m[0] >= m[1] && m[1] >= m[2], "{m:?}");
    }

    #[test]
    fn nonpositive_epsilon_is_rejected() {
        let dm = DissipationMap::new(&Ph1);
        let traj = constant_offset_trajectory(0.0, 1.0, 4);
        assert!(matches!(turnpike_measure(&traj, &dm, 0.0), Err(DiagnoseError::InvalidEpsilon(_))));
    }

    #[test]
    fn dissipativity_holds_on_passive_trajectories() {
        let dm = DissipationMap::new(&Ph1);
        for u in [0.0, 2.0] {
            let traj = simulate(&Ph1, &[2.0, 1.0], &vec![vec![u]; 100], 10.0).unwrap();
            let r = dissipativity_check(&traj, &dm, 0.5, 1e-6).unwrap();
            assert!(r.passed, "{r:?}");
            assert_abs_diff_eq!(r.slack, r.rhs - r.lhs);
        }
    }

    #[test]
    fn dissipativity_on_manifold_reduces_to_energy_balance() {
        let dm = DissipationMap::new(&Ph1);
        let traj = constant_offset_trajectory(0.0, 2.0, 20);
        let r = dissipativity_check(&traj, &dm, 0.5, 1e-9).unwrap();
        let e = energy_balance(&traj, &Ph1).unwrap();
        assert_abs_diff_eq!(r.rhs, e.supplied, epsilon = 1e-15);
        assert_abs_diff_eq!(r.lhs, e.delta_h, epsilon = 1e-15);
    }

    fn damped_oscillator_template() -> OcpSpec {
        let sys = LinearPh::new(
            Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]),
            Matrix::from_diag(&[1.0, 0.0]),
            Matrix::identity(2),
            Matrix::from_rows(&[[1.0], [0.0]]),
        )
        .unwrap();
        OcpSpec {
            system: Arc::new(sys),
            x0: vec![1.0, 1.0],
            xt: vec![0.5, 1.0],
            horizon: 4.0,
            intervals: 40,
            u_lb: vec![-20.0],
            u_ub: vec![20.0],
            x_lb: None,
            x_ub: None,
        }
    }

    #[test]
    fn single_horizon_sweep_matches_direct_measure() {
        let template = damped_oscillator_template();
        let opts = SolverOptions::default();
        let report = horizon_sweep(&template, &[4.0], 0.1, &opts).unwrap();
        assert_eq!(report.rows.len(), 1);
        let nlp = transcribe::transcribe(template.clone()).unwrap();
        let sol = solver::solve(&nlp, &nlp.initial_guess(), &opts);
        let traj = nlp.decode(&sol.w_star).unwrap();
        let direct = turnpike_measure(&traj, &DissipationMap::new(template.system.as_ref()), 0.1).unwrap();
        assert_eq!(report.rows[0].turnpike, direct);
        assert!(report.bounded);
    }

    #[test]
    fn sweep_rejects_horizons_off_the_grid() {
        let err = horizon_sweep(&damped_oscillator_template(), &[4.05], 0.1, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, DiagnoseError::InvalidSweep(_)));
        assert!(matches!(horizon_sweep(&damped_oscillator_template(), &[], 0.1, &SolverOptions::default()), Err(DiagnoseError::InvalidSweep(_))));
    }

    #[test]
    fn sweep_csv_has_one_row_per_horizon() {
        let report = horizon_sweep(&damped_oscillator_template(), &[2.0, 4.0], 0.1, &SolverOptions::default()).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("2,20,"));
    }
}
