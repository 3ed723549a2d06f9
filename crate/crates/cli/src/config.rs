//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use phturnpike::linalg::Matrix;
use phturnpike::manifold::DEFAULT_RANK_TOL;
use phturnpike::phsys::{self, LinearPh, PortHamiltonian};
use phturnpike::solver::SolverOptions;
use phturnpike::transcribe::OcpSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `"ph1"`, `"ph2"` or `"linear"`.
    pub system: String,
    /// Matrices for `system = "linear"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearMatrices>,
    pub x0: Vec<f64>,
    #[serde(rename = "xT")]
    pub xt: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub intervals: usize,
    /// Bounds applied to every control component.
    pub u_bounds: [f64; 2],
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_dissipativity_tol")]
    pub dissipativity_tol: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct LinearMatrices {
    pub J: Vec<Vec<f64>>,
    pub R: Vec<Vec<f64>>,
    pub Q: Vec<Vec<f64>>,
    pub B: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    /// One `[lo, hi]` per state; `[-3, 3]` in every coordinate when absent.
    #[serde(rename = "box")]
    pub sample_box: Option<Vec<[f64; 2]>>,
    pub samples: usize,
    /// Shell around `M` in which samples count; the box diameter when absent.
    pub shell_width: Option<f64>,
    pub seed: u64,
    pub rank_tol: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { sample_box: None, samples: 10_000, shell_width: None, seed: 0, rank_tol: DEFAULT_RANK_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub control: ControlSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ControlSpec {
    /// The same control on every interval.
    Constant(Vec<f64>),
    /// Controls read from a trajectory CSV, relative to the config file.
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub horizons: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { horizons: vec![5.0, 10.0, 20.0, 40.0] }
    }
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_dissipativity_tol() -> f64 {
    1e-4
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A parsed config together with its system, checked against each other.
pub struct Resolved {
    pub config: RunConfig,
    pub system: Arc<dyn PortHamiltonian>,
    /// Directory of the config file; relative paths inside the config resolve against it.
    pub base_dir: PathBuf,
}

impl Resolved {
    pub fn ocp(&self) -> OcpSpec {
        let m = self.system.input_dim();
        let [lo, hi] = self.config.u_bounds;
        OcpSpec {
            system: self.system.clone(),
            x0: self.config.x0.clone(),
            xt: self.config.xt.clone(),
            horizon: self.config.horizon,
            intervals: self.config.intervals,
            u_lb: vec![lo; m],
            u_ub: vec![hi; m],
            x_lb: None,
            x_ub: None,
        }
    }

    pub fn sample_box(&self) -> Vec<(f64, f64)> {
        self.config.certify.sample_box.as_ref().expect("materialized").iter().map(|[lo, hi]| (*lo, *hi)).collect()
    }
}

pub struct Overrides {
    pub out: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    if let Some(eps) = overrides.epsilon {
        config.epsilon = eps;
    }
    if let Some(seed) = overrides.seed {
        config.certify.seed = seed;
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve(config, base_dir)
}

/// Builds the system, fills in dimension-dependent defaults and validates every field.
pub fn resolve(mut config: RunConfig, base_dir: PathBuf) -> Result<Resolved, CliError> {
    let system = build_system(&config)?;
    let n = system.state_dim();
    let m = system.input_dim();

    let cert = &mut config.certify;
    let sample_box = cert.sample_box.get_or_insert_with(|| vec![[-3.0, 3.0]; n]);
    if sample_box.len() != n {
        return Err(CliError::Config(format!("certify.box has {} intervals, system has {n} states", sample_box.len())));
    }
    if sample_box.iter().any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
        return Err(CliError::Config("certify.box intervals must be finite with lo < hi".into()));
    }
    let diameter = sample_box.iter().map(|[lo, hi]| (hi - lo).powi(2)).sum::<f64>().sqrt();
    let shell = *cert.shell_width.get_or_insert(diameter);
    if !(shell > 0.0 && shell.is_finite()) {
        return Err(CliError::Config(format!("certify.shell_width must be positive, got {shell}")));
    }
    if cert.samples == 0 {
        return Err(CliError::Config("certify.samples must be positive".into()));
    }
    if !(cert.rank_tol > 0.0 && cert.rank_tol.is_finite()) {
        return Err(CliError::Config(format!("certify.rank_tol must be positive, got {}", cert.rank_tol)));
    }

    if !(config.epsilon > 0.0 && config.epsilon.is_finite()) {
        return Err(CliError::Config(format!("epsilon must be positive, got {}", config.epsilon)));
    }
    if !(config.dissipativity_tol >= 0.0 && config.dissipativity_tol.is_finite()) {
        return Err(CliError::Config(format!("dissipativity_tol must be non-negative, got {}", config.dissipativity_tol)));
    }
    let [lo, hi] = config.u_bounds;
    if !(lo <= hi) || lo.is_nan() || hi.is_nan() {
        return Err(CliError::Config(format!("u_bounds must satisfy lo <= hi, got [{lo}, {hi}]")));
    }
    config.solver.validate().map_err(|e| CliError::Config(format!("solver: {e}")))?;
    if config.sweep.horizons.is_empty() || config.sweep.horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(CliError::Config("sweep.horizons must be a nonempty list of positive values".into()));
    }
    if let Some(SimulateConfig { control: ControlSpec::Constant(u) }) = &config.simulate {
        if u.len() != m {
            return Err(CliError::Config(format!("simulate.control.constant has length {}, system has {m} inputs", u.len())));
        }
    }

    let resolved = Resolved { config, system, base_dir };
    resolved.ocp().validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(resolved)
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix, CliError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Config(format!("linear.{name} must be a nonempty rectangular matrix")));
    }
    Ok(Matrix::from_row_major(rows.len(), cols, rows.concat()))
}

fn build_system(config: &RunConfig) -> Result<Arc<dyn PortHamiltonian>, CliError> {
    match (config.system.as_str(), &config.linear) {
        ("linear", Some(lin)) => {
            let sys = LinearPh::new(matrix("J", &lin.J)?, matrix("R", &lin.R)?, matrix("Q", &lin.Q)?, matrix("B", &lin.B)?)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Arc::new(sys))
        }
        ("linear", None) => Err(CliError::Config("system \"linear\" needs a \"linear\" block with J, R, Q, B".into())),
        (name, Some(_)) => Err(CliError::Config(format!("\"linear\" block given for system \"{name}\""))),
        (name, None) => phsys::builtin(name)
            .map(Arc::from)
            .ok_or_else(|| CliError::Config(format!("unknown system \"{name}\" (expected ph1, ph2 or linear)"))),
    }
}
