//! Direct transcription of the minimal-energy-supply problem
//!
//! ```text
//! min ∫₀ᵀ yᵀu dt   s.t.  E(x)ẋ = (J − R)η + Bu,  x(0) = x₀,  x(T) = x_T
//! ```
//!
//! into an [`NlpProblem`]. The decision vector is
//! `w = [x(t₀), …, x(t_N), u₀, …, u_{N−1}]` with piecewise-constant controls.
//! Each interval contributes the implicit-midpoint residual
//! `E(x_mid)(x_{k+1} − x_k) − h·rhs(x_mid, u_k)`, which stays well posed for
//! singular `E`; the terminal state enters `G` and the initial state is
//! pinned through the bounds.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::deriv::fd_jacobian_of;
use crate::linalg::{self, norm_inf, Matrix};
use crate::manifold::DissipationMap;
use crate::nlp::NlpProblem;
use crate::phsys::{self, PortHamiltonian};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 50;

#[derive(Debug, Error)]
pub enum TranscribeError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("implicit step {step} failed: {reason}")]
    Integration { step: usize, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed trajectory csv: {0}")]
    CsvFormat(String),
}

/// Data of a fixed-horizon minimal-energy problem.
#[derive(Clone)]
pub struct OcpSpec {
    pub system: Arc<dyn PortHamiltonian>,
    pub x0: Vec<f64>,
    pub xt: Vec<f64>,
    pub horizon: f64,
    pub intervals: usize,
    pub u_lb: Vec<f64>,
    pub u_ub: Vec<f64>,
    pub x_lb: Option<Vec<f64>>,
    pub x_ub: Option<Vec<f64>>,
}

impl std::fmt::Debug for OcpSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpSpec")
            .field("system", &self.system.name())
            .field("x0", &self.x0)
            .field("xt", &self.xt)
            .field("horizon", &self.horizon)
            .field("intervals", &self.intervals)
            .field("u_lb", &self.u_lb)
            .field("u_ub", &self.u_ub)
            .finish()
    }
}

fn expect_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), TranscribeError> {
    if v.len() != expected {
        return Err(TranscribeError::DimensionMismatch { what, expected, got: v.len() });
    }
    Ok(())
}

impl OcpSpec {
    pub fn validate(&self) -> Result<(), TranscribeError> {
        let n = self.system.state_dim();
        let m = self.system.input_dim();
        expect_len("x0", &self.x0, n)?;
        expect_len("xT", &self.xt, n)?;
        expect_len("u_lb", &self.u_lb, m)?;
        expect_len("u_ub", &self.u_ub, m)?;
        if let Some(l) = &self.x_lb {
            expect_len("x_lb", l, n)?;
        }
        if let Some(u) = &self.x_ub {
            expect_len("x_ub", u, n)?;
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(TranscribeError::Invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.intervals == 0 {
            return Err(TranscribeError::Invalid("need at least one interval".into()));
        }
        if self.x0.iter().chain(&self.xt).any(|v| !v.is_finite()) {
            return Err(TranscribeError::Invalid("endpoints must be finite".into()));
        }
        if self.u_lb.iter().zip(&self.u_ub).any(|(l, u)| !(l <= u)) {
            return Err(TranscribeError::Invalid("u_lb must not exceed u_ub".into()));
        }
        if let (Some(l), Some(u)) = (&self.x_lb, &self.x_ub) {
            if l.iter().zip(u).any(|(l, u)| !(l <= u)) {
                return Err(TranscribeError::Invalid("x_lb must not exceed x_ub".into()));
            }
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }
}

/// Sampled trajectory on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// `N + 1` grid times from 0 to T.
    pub t: Vec<f64>,
    /// `N + 1` states.
    pub x: Vec<Vec<f64>>,
    /// `N` controls, constant on each interval.
    pub u: Vec<Vec<f64>>,
    /// `N` outputs evaluated at the interval midpoints.
    pub y: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn intervals(&self) -> usize {
        self.u.len()
    }

    pub fn horizon(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    pub fn midpoint(&self, k: usize) -> Vec<f64> {
        self.x[k].iter().zip(&self.x[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn step(&self, k: usize) -> f64 {
        self.t[k + 1] - self.t[k]
    }

    /// Builds a trajectory on the uniform grid over `[0, horizon]` with `u.len()` intervals.
    ///
    /// Panics unless `x.len() == u.len() + 1`.
    pub fn from_states(sys: &dyn PortHamiltonian, horizon: f64, x: Vec<Vec<f64>>, u: Vec<Vec<f64>>) -> Self {
        assert_eq!(x.len(), u.len() + 1, "need one more state than controls");
        let n_int = u.len();
        let t = uniform_grid(horizon, n_int);
        let y = (0..n_int)
            .map(|k| {
                let xm: Vec<f64> = x[k].iter().zip(&x[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
                sys.b(&xm).tr_matvec(&sys.eta(&xm))
            })
            .collect();
        Self { t, x, u, y }
    }

    /// Writes `t, x_1..x_n, u_1..u_m, y_1..y_m, H, dist_to_M` with one row per grid time.
    ///
    /// Row `k` carries the control and midpoint output of interval `k`; the
    /// final row repeats those of the last interval.
    pub fn write_csv<W: Write>(&self, dm: &DissipationMap<'_>, writer: W) -> Result<(), TranscribeError> {
        let sys = dm.system();
        let n = sys.state_dim();
        let m = sys.input_dim();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.extend((1..=m).map(|i| format!("y_{i}")));
        header.push("H".into());
        header.push("dist_to_M".into());
        w.write_record(&header)?;
        let last = self.intervals().saturating_sub(1);
        for (k, (t, x)) in self.t.iter().zip(&self.x).enumerate() {
            let iv = k.min(last);
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            row.extend(self.u[iv].iter().map(f64::to_string));
            row.extend(self.y[iv].iter().map(f64::to_string));
            row.push(sys.hamiltonian(x).to_string());
            row.push(dm.distance(x).value.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| TranscribeError::Csv(e.into()))?;
        Ok(())
    }

    /// Reads states and controls back from [`Trajectory::write_csv`] output.
    ///
    /// The grid is rebuilt as uniform over the last time stamp; outputs are recomputed.
    pub fn read_csv<R: Read>(sys: &dyn PortHamiltonian, reader: R) -> Result<Self, TranscribeError> {
        let n = sys.state_dim();
        let m = sys.input_dim();
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| TranscribeError::CsvFormat(format!("missing column {name}")))
        };
        let t_col = col("t")?;
        let x_cols = (1..=n).map(|i| col(&format!("x_{i}"))).collect::<Result<Vec<_>, _>>()?;
        let u_cols = (1..=m).map(|i| col(&format!("u_{i}"))).collect::<Result<Vec<_>, _>>()?;
        let mut ts = Vec::new();
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |c: usize| -> Result<f64, TranscribeError> {
                rec.get(c)
                    .ok_or_else(|| TranscribeError::CsvFormat("short row".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| TranscribeError::CsvFormat(e.to_string()))
            };
            ts.push(parse(t_col)?);
            xs.push(x_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>, _>>()?);
            us.push(u_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>, _>>()?);
        }
        if ts.len() < 2 {
            return Err(TranscribeError::CsvFormat("need at least two rows".into()));
        }
        us.pop();
        let horizon = *ts.last().unwrap();
        Ok(Self::from_states(sys, horizon, xs, us))
    }
}

fn uniform_grid(horizon: f64, intervals: usize) -> Vec<f64> {
    let h = horizon / intervals as f64;
    (0..=intervals).map(|k| if k == intervals { horizon } else { k as f64 * h }).collect()
}

/// The transcribed NLP for an [`OcpSpec`].
#[derive(Debug, Clone)]
pub struct Transcription {
    ocp: OcpSpec,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

/// Builds the NLP with the layout described in the module docs.
pub fn transcribe(ocp: OcpSpec) -> Result<Transcription, TranscribeError> {
    ocp.validate()?;
    let n = ocp.system.state_dim();
    let m = ocp.system.input_dim();
    let big_n = ocp.intervals;
    let dim = (big_n + 1) * n + big_n * m;
    let mut lb = vec![f64::NEG_INFINITY; dim];
    let mut ub = vec![f64::INFINITY; dim];
    lb[..n].copy_from_slice(&ocp.x0);
    ub[..n].copy_from_slice(&ocp.x0);
    for k in 1..big_n {
        if let Some(l) = &ocp.x_lb {
            lb[k * n..(k + 1) * n].copy_from_slice(l);
        }
        if let Some(u) = &ocp.x_ub {
            ub[k * n..(k + 1) * n].copy_from_slice(u);
        }
    }
    let off = (big_n + 1) * n;
    for k in 0..big_n {
        lb[off + k * m..off + (k + 1) * m].copy_from_slice(&ocp.u_lb);
        ub[off + k * m..off + (k + 1) * m].copy_from_slice(&ocp.u_ub);
    }
    Ok(Transcription { ocp, lb, ub })
}

impl Transcription {
    pub fn ocp(&self) -> &OcpSpec {
        &self.ocp
    }

    fn n(&self) -> usize {
        self.ocp.system.state_dim()
    }

    fn m(&self) -> usize {
        self.ocp.system.input_dim()
    }

    fn state_index(&self, k: usize) -> usize {
        k * self.n()
    }

    fn control_index(&self, k: usize) -> usize {
        (self.ocp.intervals + 1) * self.n() + k * self.m()
    }

    pub fn state<'w>(&self, w: &'w [f64], k: usize) -> &'w [f64] {
        let i = self.state_index(k);
        &w[i..i + self.n()]
    }

    pub fn control<'w>(&self, w: &'w [f64], k: usize) -> &'w [f64] {
        let i = self.control_index(k);
        &w[i..i + self.m()]
    }

    /// Row index in `G` where the terminal condition starts.
    pub fn terminal_row(&self) -> usize {
        self.ocp.intervals * self.n()
    }

    /// States interpolated linearly from `x0` to `xT`, controls zero (clamped into the bounds).
    pub fn initial_guess(&self) -> Vec<f64> {
        let n = self.n();
        let big_n = self.ocp.intervals;
        let mut w = vec![0.0; self.dim()];
        for k in 0..=big_n {
            let s = k as f64 / big_n as f64;
            for i in 0..n {
                w[k * n + i] = (1.0 - s) * self.ocp.x0[i] + s * self.ocp.xt[i];
            }
        }
        for (i, v) in w.iter_mut().enumerate().skip((big_n + 1) * n) {
            *v = v.clamp(self.lb[i], self.ub[i]);
        }
        w
    }

    /// Packs states and controls into the decision vector.
    pub fn encode(&self, traj: &Trajectory) -> Result<Vec<f64>, TranscribeError> {
        let big_n = self.ocp.intervals;
        if traj.x.len() != big_n + 1 || traj.u.len() != big_n {
            return Err(TranscribeError::DimensionMismatch { what: "trajectory intervals", expected: big_n, got: traj.u.len() });
        }
        let mut w = Vec::with_capacity(self.dim());
        for x in &traj.x {
            expect_len("state", x, self.n())?;
            w.extend_from_slice(x);
        }
        for u in &traj.u {
            expect_len("control", u, self.m())?;
            w.extend_from_slice(u);
        }
        Ok(w)
    }

    pub fn decode(&self, w: &[f64]) -> Result<Trajectory, TranscribeError> {
        expect_len("decision vector", w, self.dim())?;
        let big_n = self.ocp.intervals;
        let x = (0..=big_n).map(|k| self.state(w, k).to_vec()).collect();
        let u = (0..big_n).map(|k| self.control(w, k).to_vec()).collect();
        Ok(Trajectory::from_states(self.ocp.system.as_ref(), self.ocp.horizon, x, u))
    }

    fn midpoint(&self, w: &[f64], k: usize) -> Vec<f64> {
        self.state(w, k).iter().zip(self.state(w, k + 1)).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Jacobian blocks of the interval residual w.r.t. `x_k`, `x_{k+1}` and `u_k`.
    fn interval_blocks(&self, w: &[f64], k: usize) -> (Matrix, Matrix, Matrix) {
        self.blocks_at(self.state(w, k), self.state(w, k + 1), self.control(w, k))
    }

    /// `(∂r/∂x_k, ∂r/∂x_{k+1}, ∂r/∂u_k)` for one interval residual `r`.
    fn blocks_at(&self, xk: &[f64], xk1: &[f64], u: &[f64]) -> (Matrix, Matrix, Matrix) {
        let sys = self.ocp.system.as_ref();
        let h = self.ocp.step();
        let xm: Vec<f64> = xk.iter().zip(xk1).map(|(a, b)| 0.5 * (a + b)).collect();
        let delta = linalg::sub_vec(xk1, xk);
        let e = sys.e(&xm);
        let a = sys.e_state_derivative(&xm, &delta).sub(&sys.rhs_state_jacobian(&xm, u).scale(h)).scale(0.5);
        let d_prev = a.sub(&e);
        let d_next = a.add(&e);
        let d_u = sys.b(&xm).scale(-h);
        (d_prev, d_next, d_u)
    }

    /// Gradient of `h·y(x_mid)ᵀu_k + vᵀr` in the local variables `z = (x_k, x_{k+1}, u_k)`.
    fn interval_lagrangian_gradient(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let sys = self.ocp.system.as_ref();
        let h = self.ocp.step();
        let n = self.n();
        let (xk, rest) = z.split_at(n);
        let (xk1, u) = rest.split_at(n);
        let xm: Vec<f64> = xk.iter().zip(xk1).map(|(a, b)| 0.5 * (a + b)).collect();
        let y = sys.b(&xm).tr_matvec(&sys.eta(&xm));
        let dy = sys.output_state_jacobian(&xm).tr_matvec(u);
        let (dp, dn, du) = self.blocks_at(xk, xk1, u);
        let mut g = Vec::with_capacity(z.len());
        g.extend(dp.tr_matvec(v).iter().zip(&dy).map(|(a, b)| a + 0.5 * h * b));
        g.extend(dn.tr_matvec(v).iter().zip(&dy).map(|(a, b)| a + 0.5 * h * b));
        g.extend(du.tr_matvec(v).iter().zip(&y).map(|(a, b)| a + h * b));
        g
    }
}

fn interval_residual(sys: &dyn PortHamiltonian, h: f64, xk: &[f64], xk1: &[f64], u: &[f64]) -> Vec<f64> {
    let xm: Vec<f64> = xk.iter().zip(xk1).map(|(a, b)| 0.5 * (a + b)).collect();
    let delta = linalg::sub_vec(xk1, xk);
    let mut r = sys.e(&xm).matvec(&delta);
    let eta = sys.eta(&xm);
    let f = sys.j(&xm).sub(&sys.r(&xm)).matvec(&eta);
    let bu = sys.b(&xm).matvec(u);
    for i in 0..r.len() {
        r[i] -= h * (f[i] + bu[i]);
    }
    r
}

impl NlpProblem for Transcription {
    fn dim(&self) -> usize {
        (self.ocp.intervals + 1) * self.n() + self.ocp.intervals * self.m()
    }

    fn num_constraints(&self) -> usize {
        (self.ocp.intervals + 1) * self.n()
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lb
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.ub
    }

    /// `Σ_k h·y(x_mid)ᵀu_k`.
    fn cost(&self, w: &[f64]) -> f64 {
        let sys = self.ocp.system.as_ref();
        let h = self.ocp.step();
        (0..self.ocp.intervals)
            .map(|k| {
                let xm = self.midpoint(w, k);
                let y = sys.b(&xm).tr_matvec(&sys.eta(&xm));
                h * linalg::dot(&y, self.control(w, k))
            })
            .sum()
    }

    fn cost_gradient(&self, w: &[f64]) -> Vec<f64> {
        let sys = self.ocp.system.as_ref();
        let h = self.ocp.step();
        let n = self.n();
        let m = self.m();
        let mut g = vec![0.0; self.dim()];
        for k in 0..self.ocp.intervals {
            let xm = self.midpoint(w, k);
            let u = self.control(w, k);
            let y = sys.b(&xm).tr_matvec(&sys.eta(&xm));
            let dy = sys.output_state_jacobian(&xm).tr_matvec(u);
            for i in 0..n {
                g[self.state_index(k) + i] += 0.5 * h * dy[i];
                g[self.state_index(k + 1) + i] += 0.5 * h * dy[i];
            }
            let ci = self.control_index(k);
            for j in 0..m {
                g[ci + j] = h * y[j];
            }
        }
        g
    }

    fn constraints(&self, w: &[f64]) -> Vec<f64> {
        let sys = self.ocp.system.as_ref();
        let h = self.ocp.step();
        let big_n = self.ocp.intervals;
        let mut g = Vec::with_capacity(self.num_constraints());
        for k in 0..big_n {
            g.extend(interval_residual(sys, h, self.state(w, k), self.state(w, k + 1), self.control(w, k)));
        }
        g.extend(self.state(w, big_n).iter().zip(&self.ocp.xt).map(|(a, b)| a - b));
        g
    }

    fn constraint_jacobian(&self, w: &[f64]) -> Matrix {
        let mut jac = Matrix::zeros(self.num_constraints(), self.dim());
        for (i, j, v) in self.constraint_jacobian_entries(w) {
            jac[(i, j)] += v;
        }
        jac
    }

    fn constraint_jacobian_entries(&self, w: &[f64]) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let m = self.m();
        let mut out = Vec::with_capacity(self.ocp.intervals * n * (2 * n + m) + n);
        for k in 0..self.ocp.intervals {
            let (dp, dn, du) = self.interval_blocks(w, k);
            for i in 0..n {
                let row = k * n + i;
                for j in 0..n {
                    out.push((row, self.state_index(k) + j, dp[(i, j)]));
                    out.push((row, self.state_index(k + 1) + j, dn[(i, j)]));
                }
                for j in 0..m {
                    out.push((row, self.control_index(k) + j, du[(i, j)]));
                }
            }
        }
        let t = self.terminal_row();
        for i in 0..n {
            out.push((t + i, self.state_index(self.ocp.intervals) + i, 1.0));
        }
        out
    }

    /// Interval-local Hessians from central differences of the analytic local gradient.
    fn lagrangian_hessian_entries(&self, w: &[f64], v: &[f64]) -> Option<Vec<(usize, usize, f64)>> {
        let n = self.n();
        let m = self.m();
        let local = 2 * n + m;
        let mut out = Vec::with_capacity(self.ocp.intervals * local * local);
        for k in 0..self.ocp.intervals {
            let vk = &v[k * n..(k + 1) * n];
            let mut z = Vec::with_capacity(local);
            z.extend_from_slice(self.state(w, k));
            z.extend_from_slice(self.state(w, k + 1));
            z.extend_from_slice(self.control(w, k));
            let hess = fd_jacobian_of(local, local, &z, |zz| self.interval_lagrangian_gradient(zz, vk));
            let global = |i: usize| {
                if i < 2 * n {
                    self.state_index(k) + i
                } else {
                    self.control_index(k) + i - 2 * n
                }
            };
            for i in 0..local {
                for j in 0..local {
                    let sym = 0.5 * (hess[(i, j)] + hess[(j, i)]);
                    if sym != 0.0 {
                        out.push((global(i), global(j), sym));
                    }
                }
            }
        }
        Some(out)
    }

    fn constraint_jacobian_transpose_product(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let m = self.m();
        let mut out = vec![0.0; self.dim()];
        for k in 0..self.ocp.intervals {
            let vk = &v[k * n..(k + 1) * n];
            if vk.iter().all(|x| *x == 0.0) {
                continue;
            }
            let (dp, dn, du) = self.interval_blocks(w, k);
            let a = dp.tr_matvec(vk);
            let b = dn.tr_matvec(vk);
            let c = du.tr_matvec(vk);
            for j in 0..n {
                out[self.state_index(k) + j] += a[j];
                out[self.state_index(k + 1) + j] += b[j];
            }
            for j in 0..m {
                out[self.control_index(k) + j] += c[j];
            }
        }
        let t = self.terminal_row();
        for i in 0..n {
            out[self.state_index(self.ocp.intervals) + i] += v[t + i];
        }
        out
    }
}

/// Integrates forward with the implicit midpoint rule, one Newton solve per step.
///
/// `controls` holds one control vector per interval.
pub fn simulate(
    sys: &dyn PortHamiltonian,
    x0: &[f64],
    controls: &[Vec<f64>],
    horizon: f64,
) -> Result<Trajectory, TranscribeError> {
    let n = sys.state_dim();
    let big_n = controls.len();
    expect_len("x0", x0, n)?;
    if big_n == 0 {
        return Err(TranscribeError::Invalid("need at least one interval".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(TranscribeError::Invalid(format!("horizon must be positive, got {horizon}")));
    }
    for u in controls {
        expect_len("control", u, sys.input_dim())?;
    }
    let h = horizon / big_n as f64;
    let mut xs = Vec::with_capacity(big_n + 1);
    xs.push(x0.to_vec());
    for (k, u) in controls.iter().enumerate() {
        let xk = xs[k].clone();
        let next = implicit_step(sys, h, &xk, u).map_err(|reason| TranscribeError::Integration { step: k, reason })?;
        xs.push(next);
    }
    Ok(Trajectory::from_states(sys, horizon, xs, controls.to_vec()))
}

fn implicit_step(sys: &dyn PortHamiltonian, h: f64, xk: &[f64], u: &[f64]) -> Result<Vec<f64>, String> {
    let mut z = xk.to_vec();
    let mut last_step = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITERS {
        let r = interval_residual(sys, h, xk, &z, u);
        let rn = norm_inf(&r);
        if !rn.is_finite() {
            return Err("non-finite residual".into());
        }
        if rn <= NEWTON_TOL && last_step <= 1e-12 * (1.0 + norm_inf(&z)) {
            return Ok(z);
        }
        let xm: Vec<f64> = xk.iter().zip(&z).map(|(a, b)| 0.5 * (a + b)).collect();
        let delta = linalg::sub_vec(&z, xk);
        let jac = sys
            .e(&xm)
            .add(&sys.e_state_derivative(&xm, &delta).sub(&sys.rhs_state_jacobian(&xm, u).scale(h)).scale(0.5));
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = linalg::solve(&jac, &neg_r).map_err(|e| format!("Newton matrix: {e}"))?;
        last_step = norm_inf(&step);
        for (zi, s) in z.iter_mut().zip(&step) {
            *zi += s;
        }
    }
    Err(format!("Newton did not converge in {NEWTON_MAX_ITERS} iterations"))
}

/// `(H(x_{k+1}) − H(x_{k−1})) / 2h` against the node power `−ηᵀRη + yᵀu` at interior nodes.
///
/// The control at node `k` is the average of the adjacent interval controls.
pub fn power_balance_defect(sys: &dyn PortHamiltonian, traj: &Trajectory) -> f64 {
    let mut worst = 0.0f64;
    for k in 1..traj.intervals() {
        let h = 0.5 * (traj.t[k + 1] - traj.t[k - 1]);
        let dh = (sys.hamiltonian(&traj.x[k + 1]) - sys.hamiltonian(&traj.x[k - 1])) / (2.0 * h);
        let x = &traj.x[k];
        let eta = sys.eta(x);
        let diss = linalg::dot(&eta, &sys.r(x).matvec(&eta));
        let u: Vec<f64> = traj.u[k - 1].iter().zip(&traj.u[k]).map(|(a, b)| 0.5 * (a + b)).collect();
        let y = phsys::output(sys, x).unwrap_or_else(|_| vec![f64::NAN; u.len()]);
        let power = -diss + linalg::dot(&y, &u);
        worst = worst.max((dh - power).abs());
    }
    worst
}

/// Error scale for [`power_balance_defect`]: the largest `(1 + |Ḣ|)·(1 + ‖∂rhs/∂x‖_F)²`
/// over all nodes, with `Ḣ = −ηᵀRη + yᵀu`. The centered difference of `H`
/// errs by `h²·|d³H/dt³|/6`, which grows with the local stiffness.
pub fn power_balance_scale(sys: &dyn PortHamiltonian, traj: &Trajectory) -> f64 {
    let mut scale = 1.0f64;
    let last = traj.intervals() - 1;
    for (k, x) in traj.x.iter().enumerate() {
        let u = &traj.u[k.saturating_sub(1).min(last)];
        let eta = sys.eta(x);
        let y = phsys::output(sys, x).unwrap_or_else(|_| vec![f64::NAN; u.len()]);
        let power = -linalg::dot(&eta, &sys.r(x).matvec(&eta)) + linalg::dot(&y, u);
        let stiffness = sys.rhs_state_jacobian(x, u).norm_fro();
        scale = scale.max((1.0 + power.abs()) * (1.0 + stiffness).powi(2));
    }
    scale
}
