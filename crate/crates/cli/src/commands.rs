//! Subcommand implementations. Each returns the staged artifacts and whether
//! the run succeeded; `main` maps that onto exit codes.

use std::path::Path;

use phturnpike::diagnose::{self, DissipativityReport, EnergyReport, SweepReport, TurnpikeReport};
use phturnpike::linalg::norm_inf;
use phturnpike::manifold::{DissipationMap, ManifoldCertificate, ManifoldError};
use phturnpike::nlp::NlpProblem;
use phturnpike::phsys::PortHamiltonian;
use phturnpike::solver::{self, SolveStatus};
use phturnpike::transcribe::{self, Trajectory};
use serde::Serialize;

use crate::config::{ControlSpec, Resolved, RunConfig, SimulateConfig};
use crate::output::Artifacts;
use crate::CliError;

pub struct Outcome {
    pub artifacts: Artifacts,
    /// `false` maps to exit code 2; the artifacts are still written.
    pub success: bool,
    pub message: String,
}

#[derive(Serialize)]
pub struct CertificateSummary {
    pub passed: bool,
    pub state_dim: usize,
    pub s: usize,
    pub kernel_dim_consistent: bool,
    pub c_tilde: f64,
    pub c: f64,
    pub empirical_best_c: Option<f64>,
    pub samples_drawn: usize,
    pub samples_checked: usize,
    pub unconverged_projections: usize,
    pub violations: usize,
    /// Violations of `dist(x, M) ≤ ‖f(x)‖`, i.e. the bound with `c = 1`.
    pub violations_at_unit_c: usize,
}

impl CertificateSummary {
    fn new(cert: &ManifoldCertificate) -> Self {
        Self {
            passed: cert.passed(),
            state_dim: cert.state_dim,
            s: cert.s,
            kernel_dim_consistent: cert.kernel_dim_consistent,
            c_tilde: cert.sigma_min_nonzero_lower,
            c: cert.c,
            empirical_best_c: cert.empirical_best_c,
            samples_drawn: cert.samples_drawn,
            samples_checked: cert.samples_checked,
            unconverged_projections: cert.unconverged_projections,
            violations: cert.bound_violations.len(),
            violations_at_unit_c: cert.violations_at(1.0).len(),
        }
    }
}

#[derive(Serialize)]
struct CertificateFile<'a> {
    command: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    summary: CertificateSummary,
    sample_box: &'a [(f64, f64)],
    shell_width: f64,
    seed: u64,
    violation_points: &'a [Vec<f64>],
}

#[derive(Serialize)]
pub struct DissipativityPair {
    /// With the certified constant `c = c̃/2`.
    pub certified: DissipativityReport,
    /// With the empirical best constant, when one was observed.
    pub empirical: Option<DissipativityReport>,
}

#[derive(Serialize)]
struct AlgebraicResidual {
    /// State rows where `E` vanishes at every interval midpoint.
    rows: Vec<usize>,
    /// Largest `|G|` over those rows.
    max: f64,
}

#[derive(Serialize)]
struct KktCounts {
    stationarity: f64,
    active_lower: usize,
    active_upper: usize,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    command: &'static str,
    config: &'a RunConfig,
    status: SolveStatus,
    cost: f64,
    eq_violation: f64,
    stationarity: f64,
    outer_iters: usize,
    inner_iters: usize,
    terminal_error: f64,
    algebraic_residual: AlgebraicResidual,
    kkt: KktCounts,
    energy: EnergyReport,
    turnpike: TurnpikeReport,
    dissipativity: DissipativityPair,
    certificate: CertificateSummary,
    /// Whether every grid state lies in the certified box and shell.
    trajectory_in_certified_region: bool,
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    command: &'static str,
    config: &'a RunConfig,
    intervals: usize,
    energy: EnergyReport,
    power_balance_defect: f64,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    command: &'static str,
    config: &'a RunConfig,
    trajectory: String,
    energy: EnergyReport,
    turnpike: TurnpikeReport,
    dissipativity: DissipativityPair,
    certificate: CertificateSummary,
    trajectory_in_certified_region: bool,
}

#[derive(Serialize)]
struct SweepFile<'a> {
    command: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    report: &'a SweepReport,
}

fn certify(run: &Resolved) -> Result<ManifoldCertificate, ManifoldError> {
    let c = &run.config.certify;
    DissipationMap::new(run.system.as_ref()).with_rank_tol(c.rank_tol).certify(
        &run.sample_box(),
        c.samples,
        c.shell_width.expect("materialized"),
        c.seed,
    )
}

fn dissipativity(traj: &Trajectory, dm: &DissipationMap<'_>, cert: &ManifoldCertificate, tol: f64) -> Result<DissipativityPair, CliError> {
    let certified = diagnose::dissipativity_check(traj, dm, cert.c, tol).map_err(CliError::run)?;
    let empirical = match cert.empirical_best_c {
        Some(c) => Some(diagnose::dissipativity_check(traj, dm, c, tol).map_err(CliError::run)?),
        None => None,
    };
    Ok(DissipativityPair { certified, empirical })
}

fn trajectory_csv(traj: &Trajectory, dm: &DissipationMap<'_>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    traj.write_csv(dm, &mut buf).map_err(CliError::run)?;
    Ok(buf)
}

fn algebraic_rows(sys: &dyn PortHamiltonian, traj: &Trajectory) -> Vec<usize> {
    let n = sys.state_dim();
    (0..n)
        .filter(|&i| (0..traj.intervals()).all(|k| sys.e(&traj.midpoint(k)).row(i).iter().all(|v| *v == 0.0)))
        .collect()
}

pub fn solve(run: &Resolved) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let nlp = transcribe::transcribe(run.ocp()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut log = String::new();
    let sol = solver::solve_with_observer(&nlp, &nlp.initial_guess(), &cfg.solver, &mut |rec| {
        log.push_str(&rec.log_line());
        log.push('\n');
    });
    log.push_str(&format!(
        "status={} cost={:.12e} eq_violation={:.6e} stationarity={:.6e} outer_iters={} inner_iters={}\n",
        serde_json::to_value(sol.status).expect("status serializes").as_str().unwrap_or_default(),
        sol.cost,
        sol.eq_violation,
        sol.stationarity,
        sol.outer_iters,
        sol.inner_iters
    ));

    let traj = nlp.decode(&sol.w_star).map_err(CliError::run)?;
    let sys = run.system.as_ref();
    let dm = DissipationMap::new(sys).with_rank_tol(cfg.certify.rank_tol);
    let terminal_error = norm_inf(&phturnpike::linalg::sub_vec(&traj.x[traj.intervals()], &cfg.xt));

    let g = nlp.constraints(&sol.w_star);
    let n = sys.state_dim();
    let rows = algebraic_rows(sys, &traj);
    let g = &g;
    let max = (0..traj.intervals()).flat_map(|k| rows.iter().map(move |&i| g[k * n + i].abs())).fold(0.0, f64::max);

    let kkt = solver::kkt_report(&nlp, &sol);
    let cert = certify(run).map_err(CliError::run)?;
    let summary = SolveSummary {
        command: "solve",
        config: cfg,
        status: sol.status,
        cost: sol.cost,
        eq_violation: sol.eq_violation,
        stationarity: sol.stationarity,
        outer_iters: sol.outer_iters,
        inner_iters: sol.inner_iters,
        terminal_error,
        algebraic_residual: AlgebraicResidual { rows, max },
        kkt: KktCounts { stationarity: kkt.stationarity, active_lower: kkt.active_lower.len(), active_upper: kkt.active_upper.len() },
        energy: diagnose::energy_balance(&traj, sys).map_err(CliError::run)?,
        turnpike: diagnose::turnpike_measure(&traj, &dm, cfg.epsilon).map_err(CliError::run)?,
        dissipativity: dissipativity(&traj, &dm, &cert, cfg.dissipativity_tol)?,
        trajectory_in_certified_region: traj.x.iter().all(|x| cert.covers(&dm, x)),
        certificate: CertificateSummary::new(&cert),
    };

    let mut artifacts = Artifacts::default();
    artifacts.add("trajectory.csv", trajectory_csv(&traj, &dm)?);
    artifacts.add_json("summary.json", &summary)?;
    artifacts.add("solver.log", log.into_bytes());
    let success = sol.status == SolveStatus::Converged;
    let message = format!("solve: status {:?}, cost {:.9}, eq_violation {:.3e}", sol.status, sol.cost, sol.eq_violation);
    Ok(Outcome { artifacts, success, message })
}

pub fn simulate(run: &Resolved) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let sys = run.system.as_ref();
    let Some(SimulateConfig { control }) = &cfg.simulate else {
        return Err(CliError::Config("simulate needs a \"simulate\" block with a control".into()));
    };
    let controls = match control {
        ControlSpec::Constant(u) => vec![u.clone(); cfg.intervals],
        ControlSpec::Csv(path) => {
            let path = run.base_dir.join(path);
            let file = std::fs::File::open(&path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
            let traj = Trajectory::read_csv(sys, file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if traj.intervals() != cfg.intervals {
                return Err(CliError::Config(format!(
                    "{} has {} intervals, config has N = {}",
                    path.display(),
                    traj.intervals(),
                    cfg.intervals
                )));
            }
            traj.u
        }
    };
    let traj = transcribe::simulate(sys, &cfg.x0, &controls, cfg.horizon).map_err(CliError::run)?;
    let dm = DissipationMap::new(sys).with_rank_tol(cfg.certify.rank_tol);
    let summary = SimulateSummary {
        command: "simulate",
        config: cfg,
        intervals: traj.intervals(),
        energy: diagnose::energy_balance(&traj, sys).map_err(CliError::run)?,
        power_balance_defect: transcribe::power_balance_defect(sys, &traj),
    };
    let mut artifacts = Artifacts::default();
    artifacts.add("trajectory.csv", trajectory_csv(&traj, &dm)?);
    artifacts.add_json("summary.json", &summary)?;
    let message = format!("simulate: {} steps, balance residual {:.3e}", traj.intervals(), summary.energy.balance_residual);
    Ok(Outcome { artifacts, success: true, message })
}

pub fn certify_cmd(run: &Resolved) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let cert = match certify(run) {
        Ok(cert) => cert,
        Err(e @ ManifoldError::Inconclusive { .. }) => return Err(CliError::Run(e.to_string())),
        Err(e) => return Err(CliError::Config(e.to_string())),
    };
    let summary = CertificateSummary::new(&cert);
    let message = format!(
        "certify: s = {} of n = {}, c̃ = {:.6e}, c = {:.6e}, {} violations, {}",
        cert.s,
        cert.state_dim,
        cert.sigma_min_nonzero_lower,
        cert.c,
        cert.bound_violations.len(),
        if summary.passed { "passed" } else { "failed" }
    );
    let file = CertificateFile {
        command: "certify",
        config: cfg,
        sample_box: &cert.sample_box,
        shell_width: cert.shell_width,
        seed: cert.seed,
        violation_points: &cert.bound_violations,
        summary,
    };
    let success = file.summary.passed;
    let mut artifacts = Artifacts::default();
    artifacts.add_json("certificate.json", &file)?;
    Ok(Outcome { artifacts, success, message })
}

pub fn diagnose_cmd(run: &Resolved, trajectory: &Path) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let sys = run.system.as_ref();
    let file = std::fs::File::open(trajectory).map_err(|e| CliError::Config(format!("cannot open {}: {e}", trajectory.display())))?;
    let traj = Trajectory::read_csv(sys, file).map_err(|e| CliError::Config(format!("{}: {e}", trajectory.display())))?;
    let dm = DissipationMap::new(sys).with_rank_tol(cfg.certify.rank_tol);
    let cert = certify(run).map_err(CliError::run)?;
    let report = Diagnostics {
        command: "diagnose",
        config: cfg,
        trajectory: trajectory.display().to_string(),
        energy: diagnose::energy_balance(&traj, sys).map_err(CliError::run)?,
        turnpike: diagnose::turnpike_measure(&traj, &dm, cfg.epsilon).map_err(CliError::run)?,
        dissipativity: dissipativity(&traj, &dm, &cert, cfg.dissipativity_tol)?,
        trajectory_in_certified_region: traj.x.iter().all(|x| cert.covers(&dm, x)),
        certificate: CertificateSummary::new(&cert),
    };
    let success = report.certificate.passed && report.dissipativity.certified.passed;
    let message = format!(
        "diagnose: fraction outside {:.4} at ε = {}, dissipativity slack {:.3e}",
        report.turnpike.fraction_outside, report.turnpike.epsilon, report.dissipativity.certified.slack
    );
    let mut artifacts = Artifacts::default();
    artifacts.add_json("diagnostics.json", &report)?;
    Ok(Outcome { artifacts, success, message })
}

pub fn sweep(run: &Resolved) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let report = diagnose::horizon_sweep(&run.ocp(), &cfg.sweep.horizons, cfg.epsilon, &cfg.solver).map_err(|e| match e {
        diagnose::DiagnoseError::InvalidSweep(_) | diagnose::DiagnoseError::InvalidEpsilon(_) => CliError::Config(e.to_string()),
        other => CliError::run(other),
    })?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(CliError::run)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("sweep.csv", csv);
    artifacts.add_json("sweep.json", &SweepFile { command: "sweep", config: cfg, report: &report })?;
    let success = report.all_converged && report.bounded;
    let message = format!("sweep: {} horizons, all converged: {}, bounded: {}", report.rows.len(), report.all_converged, report.bounded);
    Ok(Outcome { artifacts, success, message })
}
