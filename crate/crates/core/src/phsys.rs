//! Port-Hamiltonian descriptor systems
//!
//! ```text
//! E(x) ẋ = (J(x) − R(x)) η(x) + B(x) u
//!      y = B(x)ᵀ η(x)
//! ```
//!
//! with skew `J`, symmetric PSD `R` and a Hamiltonian `H` satisfying
//! `∇H = Eᵀη`. The built-in systems ship analytic derivatives; user systems
//! only need to implement the required methods of [`PortHamiltonian`].

use serde::Serialize;
use thiserror::Error;

use crate::deriv::{self, fd_jacobian_of, FnMap};
use crate::linalg::{self, dot, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("{what} has length {got}, system expects {expected}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid linear system: {0}")]
    InvalidLinear(String),
}

pub trait PortHamiltonian: Send + Sync {
    fn name(&self) -> &str;
    /// State dimension `n`.
    fn state_dim(&self) -> usize;
    /// Input dimension `m`.
    fn input_dim(&self) -> usize;

    fn e(&self, x: &[f64]) -> Matrix;
    fn j(&self, x: &[f64]) -> Matrix;
    fn r(&self, x: &[f64]) -> Matrix;
    fn eta(&self, x: &[f64]) -> Vec<f64>;
    fn b(&self, x: &[f64]) -> Matrix;
    fn hamiltonian(&self, x: &[f64]) -> f64;

    /// Whether `E` is independent of the state.
    fn e_is_constant(&self) -> bool {
        false
    }

    /// Analytic `Df` for `f = R^{1/2} η`, if known.
    fn dissipation_jacobian(&self, _x: &[f64]) -> Option<Matrix> {
        None
    }

    /// Analytic `∇H`, if known.
    fn hamiltonian_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// `∂/∂x [(J − R)η + Bu]`. Defaults to central differences.
    fn rhs_state_jacobian(&self, x: &[f64], u: &[f64]) -> Matrix {
        let n = self.state_dim();
        fd_jacobian_of(n, n, x, |z| rhs_unchecked(self, z, u))
    }

    /// `∂/∂x [E(x) v]` for a fixed `v`.
    fn e_state_derivative(&self, x: &[f64], v: &[f64]) -> Matrix {
        let n = self.state_dim();
        if self.e_is_constant() {
            return Matrix::zeros(n, n);
        }
        fd_jacobian_of(n, n, x, |z| self.e(z).matvec(v))
    }

    /// `∂y/∂x` with `y = Bᵀη` (an `m × n` matrix).
    fn output_state_jacobian(&self, x: &[f64]) -> Matrix {
        fd_jacobian_of(self.state_dim(), self.input_dim(), x, |z| output_unchecked(self, z))
    }
}

fn rhs_unchecked<S: PortHamiltonian + ?Sized>(sys: &S, x: &[f64], u: &[f64]) -> Vec<f64> {
    let eta = sys.eta(x);
    let jr = sys.j(x).sub(&sys.r(x));
    let mut out = jr.matvec(&eta);
    for (o, bu) in out.iter_mut().zip(sys.b(x).matvec(u)) {
        *o += bu;
    }
    out
}

fn output_unchecked<S: PortHamiltonian + ?Sized>(sys: &S, x: &[f64]) -> Vec<f64> {
    sys.b(x).tr_matvec(&sys.eta(x))
}

fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), SystemError> {
    if v.len() != expected {
        return Err(SystemError::DimensionMismatch { what, expected, got: v.len() });
    }
    Ok(())
}

/// `(J(x) − R(x))η(x) + B(x)u`; `E` is applied by the integrator.
pub fn rhs(sys: &(impl PortHamiltonian + ?Sized), x: &[f64], u: &[f64]) -> Result<Vec<f64>, SystemError> {
    check_len("state", x, sys.state_dim())?;
    check_len("input", u, sys.input_dim())?;
    Ok(rhs_unchecked(sys, x, u))
}

/// Collocated output `y = B(x)ᵀη(x)`.
pub fn output(sys: &(impl PortHamiltonian + ?Sized), x: &[f64]) -> Result<Vec<f64>, SystemError> {
    check_len("state", x, sys.state_dim())?;
    Ok(output_unchecked(sys, x))
}

/// `∇H` from the analytic gradient when present, central differences otherwise.
pub fn hamiltonian_gradient(sys: &(impl PortHamiltonian + ?Sized), x: &[f64]) -> Vec<f64> {
    if let Some(g) = sys.hamiltonian_gradient(x) {
        return g;
    }
    let map = FnMap::new(sys.state_dim(), 1, |z: &[f64]| vec![sys.hamiltonian(z)]);
    deriv::gradient(&map, x).unwrap_or_else(|_| vec![f64::NAN; sys.state_dim()])
}

/// Worst violation of one structural property over the samples.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub worst_violation: f64,
    pub witness: Option<Vec<f64>>,
}

impl CheckOutcome {
    fn new() -> Self {
        Self { passed: true, worst_violation: 0.0, witness: None }
    }

    fn record(&mut self, violation: f64, x: &[f64], tol: f64) {
        let violation = if violation.is_nan() { f64::INFINITY } else { violation };
        if self.witness.is_none() || violation > self.worst_violation {
            self.worst_violation = violation;
            self.witness = Some(x.to_vec());
        }
        if violation > tol {
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub samples: usize,
    /// `max |J + Jᵀ|`, tolerance 1e-12.
    pub skew_j: CheckOutcome,
    /// `max(|R − Rᵀ|, −λ_min(R))`, tolerance 1e-10.
    pub psd_r: CheckOutcome,
    /// Relative mismatch between `∇H` and `Eᵀη`, tolerance 1e-6.
    pub gradient_consistency: CheckOutcome,
    /// `max(0, −H)`.
    pub nonnegative_h: CheckOutcome,
}

impl StructureReport {
    pub fn all_passed(&self) -> bool {
        self.skew_j.passed && self.psd_r.passed && self.gradient_consistency.passed && self.nonnegative_h.passed
    }
}

/// Samples the defining properties of a port-Hamiltonian system.
///
/// Failures are reported, never raised. Panics if `samples` is empty.
pub fn check_structure(sys: &(impl PortHamiltonian + ?Sized), samples: &[Vec<f64>]) -> StructureReport {
    assert!(!samples.is_empty(), "check_structure needs at least one sample");
    let mut skew = CheckOutcome::new();
    let mut psd = CheckOutcome::new();
    let mut grad = CheckOutcome::new();
    let mut nonneg = CheckOutcome::new();
    for x in samples {
        let j = sys.j(x);
        skew.record(j.add(&j.transpose()).norm_max(), x, 1e-12);

        let r = sys.r(x);
        let asym = r.asymmetry().unwrap_or(f64::INFINITY);
        let neg = match linalg::sym_eig(&r, 1e-10) {
            Ok(e) => (-e.values.last().copied().unwrap_or(0.0)).max(0.0),
            Err(_) => f64::INFINITY,
        };
        psd.record(asym.max(neg), x, 1e-10);

        // Compare against finite differences of H so a wrong analytic gradient is caught too.
        let fd_map = FnMap::new(sys.state_dim(), 1, |z: &[f64]| vec![sys.hamiltonian(z)]);
        let dh = deriv::central_difference_jacobian(&fd_map, x)
            .map(|m| m.row(0).to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; x.len()]);
        let eta_e = sys.e(x).tr_matvec(&sys.eta(x));
        let rel = dh
            .iter()
            .zip(&eta_e)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        grad.record(rel, x, 1e-6);

        nonneg.record((-sys.hamiltonian(x)).max(0.0), x, 0.0);
    }
    StructureReport { samples: samples.len(), skew_j: skew, psd_r: psd, gradient_consistency: grad, nonnegative_h: nonneg }
}

/// Example system with `n = 2`, `m = 1`:
/// `J = [0 1; −1 0]`, `R = diag(¼(4‖x‖²+1)², 0)`, `η = diag(2,1)x`, `B = e₁`,
/// `H = ½xᵀdiag(2,1)x`. Its dissipation manifold is `{x₁ = 0}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ph1;

impl Ph1 {
    fn damping(x: &[f64]) -> f64 {
        let q = 4.0 * (x[0] * x[0] + x[1] * x[1]) + 1.0;
        0.25 * q * q
    }
}

impl PortHamiltonian for Ph1 {
    fn name(&self) -> &str {
        "ph1"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn e(&self, _x: &[f64]) -> Matrix {
        Matrix::identity(2)
    }
    fn j(&self, _x: &[f64]) -> Matrix {
        Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]])
    }
    fn r(&self, x: &[f64]) -> Matrix {
        Matrix::from_diag(&[Self::damping(x), 0.0])
    }
    fn eta(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * x[0], x[1]]
    }
    fn b(&self, _x: &[f64]) -> Matrix {
        Matrix::from_rows(&[[1.0], [0.0]])
    }
    fn hamiltonian(&self, x: &[f64]) -> f64 {
        0.5 * (2.0 * x[0] * x[0] + x[1] * x[1])
    }
    fn e_is_constant(&self) -> bool {
        true
    }
    fn dissipation_jacobian(&self, x: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_rows(&[
            [12.0 * x[0] * x[0] + 4.0 * x[1] * x[1] + 1.0, 8.0 * x[0] * x[1]],
            [0.0, 0.0],
        ]))
    }
    fn hamiltonian_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![2.0 * x[0], x[1]])
    }
    fn rhs_state_jacobian(&self, x: &[f64], _u: &[f64]) -> Matrix {
        let q = 4.0 * (x[0] * x[0] + x[1] * x[1]) + 1.0;
        let r = 0.25 * q * q;
        Matrix::from_rows(&[
            [-2.0 * r - 8.0 * x[0] * x[0] * q, 1.0 - 8.0 * x[0] * x[1] * q],
            [-2.0, 0.0],
        ])
    }
    fn output_state_jacobian(&self, _x: &[f64]) -> Matrix {
        Matrix::from_rows(&[[2.0, 0.0]])
    }
}

/// Descriptor example with `n = 3`, `m = 1` and the singular
/// `E = [1 0 0; 0 0 1; 0 0 0]`. Its dissipation manifold is `{ξ₁ = 0}`.
///
/// The third equation is `0 = 0`, so `ξ₂` is not determined by the
/// dynamics, and `Eᵀη = (2ξ₁, 0, ξ₂)` is not a gradient field. No `H`
/// satisfies `∇H = Eᵀη`; the storage reported here is the quadratic
/// `H = ξ₁² + ½ξ₂² + ½ξ₃²` whose gradient is `η`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ph2;

impl PortHamiltonian for Ph2 {
    fn name(&self) -> &str {
        "ph2"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn e(&self, _x: &[f64]) -> Matrix {
        Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    }
    fn j(&self, _x: &[f64]) -> Matrix {
        Matrix::from_rows(&[[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    }
    fn r(&self, x: &[f64]) -> Matrix {
        Matrix::from_diag(&[Ph1::damping(x), 0.0, 0.0])
    }
    fn eta(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * x[0], x[1], x[2]]
    }
    fn b(&self, _x: &[f64]) -> Matrix {
        Matrix::from_rows(&[[1.0], [2.0], [0.0]])
    }
    fn hamiltonian(&self, x: &[f64]) -> f64 {
        x[0] * x[0] + 0.5 * (x[1] * x[1] + x[2] * x[2])
    }
    fn e_is_constant(&self) -> bool {
        true
    }
    fn dissipation_jacobian(&self, x: &[f64]) -> Option<Matrix> {
        Some(Matrix::from_rows(&[
            [12.0 * x[0] * x[0] + 4.0 * x[1] * x[1] + 1.0, 8.0 * x[0] * x[1], 0.0],
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
        ]))
    }
    fn hamiltonian_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![2.0 * x[0], x[1], x[2]])
    }
    fn rhs_state_jacobian(&self, x: &[f64], _u: &[f64]) -> Matrix {
        let q = 4.0 * (x[0] * x[0] + x[1] * x[1]) + 1.0;
        let r = 0.25 * q * q;
        Matrix::from_rows(&[
            [-2.0 * r - 8.0 * x[0] * x[0] * q, 1.0 - 8.0 * x[0] * x[1] * q, 0.0],
            [-2.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
        ])
    }
    fn output_state_jacobian(&self, _x: &[f64]) -> Matrix {
        Matrix::from_rows(&[[2.0, 2.0, 0.0]])
    }
}

/// Linear system `ẋ = (J − R)Qx + Bu` with `H = ½xᵀQx`.
#[derive(Debug, Clone)]
pub struct LinearPh {
    j: Matrix,
    r: Matrix,
    q: Matrix,
    b: Matrix,
    /// `R^{1/2} Q`, the constant Jacobian of the dissipation map.
    f_matrix: Matrix,
}

impl LinearPh {
    /// Validates `J` skew, `R` symmetric PSD and `Q` symmetric positive definite.
    pub fn new(j: Matrix, r: Matrix, q: Matrix, b: Matrix) -> Result<Self, SystemError> {
        let n = q.rows();
        for (name, m) in [("J", &j), ("R", &r), ("Q", &q)] {
            if m.rows() != n || m.cols() != n {
                return Err(SystemError::InvalidLinear(format!("{name} must be {n}x{n}, got {}x{}", m.rows(), m.cols())));
            }
        }
        if b.rows() != n || b.cols() == 0 {
            return Err(SystemError::InvalidLinear(format!("B must be {n}xm with m >= 1, got {}x{}", b.rows(), b.cols())));
        }
        if [&j, &r, &q, &b].iter().any(|m| !m.is_finite()) {
            return Err(SystemError::InvalidLinear("non-finite entry".into()));
        }
        let skew = j.add(&j.transpose()).norm_max();
        if skew > 1e-12 * j.norm_max().max(1.0) {
            return Err(SystemError::InvalidLinear(format!("J is not skew-symmetric (|J + Jᵀ| = {skew:e})")));
        }
        let root_r = linalg::sqrt_psd(&r).map_err(|e| SystemError::InvalidLinear(format!("R: {e}")))?;
        let eq = linalg::sym_eig(&q, 1e-12).map_err(|e| SystemError::InvalidLinear(format!("Q: {e}")))?;
        let qmin = eq.values.last().copied().unwrap_or(0.0);
        if qmin <= 0.0 {
            return Err(SystemError::InvalidLinear(format!("Q is not positive definite (λ_min = {qmin:e})")));
        }
        let f_matrix = root_r.matmul(&q);
        Ok(Self { j, r, q, b, f_matrix })
    }

    /// `R^{1/2} Q`.
    pub fn dissipation_matrix(&self) -> &Matrix {
        &self.f_matrix
    }
}

impl PortHamiltonian for LinearPh {
    fn name(&self) -> &str {
        "linear"
    }
    fn state_dim(&self) -> usize {
        self.q.rows()
    }
    fn input_dim(&self) -> usize {
        self.b.cols()
    }
    fn e(&self, _x: &[f64]) -> Matrix {
        Matrix::identity(self.state_dim())
    }
    fn j(&self, _x: &[f64]) -> Matrix {
        self.j.clone()
    }
    fn r(&self, _x: &[f64]) -> Matrix {
        self.r.clone()
    }
    fn eta(&self, x: &[f64]) -> Vec<f64> {
        self.q.matvec(x)
    }
    fn b(&self, _x: &[f64]) -> Matrix {
        self.b.clone()
    }
    fn hamiltonian(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.q.matvec(x))
    }
    fn e_is_constant(&self) -> bool {
        true
    }
    fn dissipation_jacobian(&self, _x: &[f64]) -> Option<Matrix> {
        Some(self.f_matrix.clone())
    }
    fn hamiltonian_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.q.matvec(x))
    }
    fn rhs_state_jacobian(&self, _x: &[f64], _u: &[f64]) -> Matrix {
        self.j.sub(&self.r).matmul(&self.q)
    }
    fn output_state_jacobian(&self, _x: &[f64]) -> Matrix {
        self.b.transpose().matmul(&self.q)
    }
}

/// Looks up a parameter-free built-in by name.
pub fn builtin(name: &str) -> Option<Box<dyn PortHamiltonian>> {
    match name {
        "ph1" => Some(Box::new(Ph1)),
        "ph2" => Some(Box::new(Ph2)),
        _ => None,
    }
}
