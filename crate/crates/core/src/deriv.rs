//! Jacobians and gradients of vector-valued maps.
//!
//! Maps that know their derivative expose it through
//! [`DifferentiableMap::analytic_jacobian`]; everything else falls back to
//! second-order central differences.

use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DerivError {
    #[error("input has length {got}, map expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("non-finite evaluation near input coordinate {coordinate}")]
    NonFiniteEvaluation { coordinate: usize },
    #[error("gradient requested for a map with {output_dim} outputs")]
    NotScalar { output_dim: usize },
}

pub trait DifferentiableMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;

    fn analytic_jacobian(&self, _x: &[f64]) -> Option<Matrix> {
        None
    }
}

/// A [`DifferentiableMap`] assembled from closures.
pub struct FnMap<F, J = fn(&[f64]) -> Matrix> {
    input_dim: usize,
    output_dim: usize,
    eval: F,
    jacobian: Option<J>,
}

impl<F> FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(input_dim: usize, output_dim: usize, eval: F) -> Self {
        Self { input_dim, output_dim, eval, jacobian: None }
    }
}

impl<F, J> FnMap<F, J>
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Matrix,
{
    pub fn with_jacobian<J2>(self, jacobian: J2) -> FnMap<F, J2>
    where
        J2: Fn(&[f64]) -> Matrix,
    {
        FnMap { input_dim: self.input_dim, output_dim: self.output_dim, eval: self.eval, jacobian: Some(jacobian) }
    }
}

impl<F, J> DifferentiableMap for FnMap<F, J>
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Matrix,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    fn analytic_jacobian(&self, x: &[f64]) -> Option<Matrix> {
        self.jacobian.as_ref().map(|j| j(x))
    }
}

fn check_input(map: &(impl DifferentiableMap + ?Sized), x: &[f64]) -> Result<(), DerivError> {
    if x.len() != map.input_dim() {
        return Err(DerivError::DimensionMismatch { expected: map.input_dim(), got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DerivError::NonFiniteInput);
    }
    Ok(())
}

/// Jacobian of `map` at `x`; analytic when available.
pub fn jacobian(map: &(impl DifferentiableMap + ?Sized), x: &[f64]) -> Result<Matrix, DerivError> {
    check_input(map, x)?;
    match map.analytic_jacobian(x) {
        Some(j) => Ok(j),
        None => central_difference_jacobian(map, x),
    }
}

/// Central differences with step `cbrt(eps)·max(1, |x_i|)` per coordinate.
pub fn central_difference_jacobian(map: &(impl DifferentiableMap + ?Sized), x: &[f64]) -> Result<Matrix, DerivError> {
    check_input(map, x)?;
    let n = map.input_dim();
    let m = map.output_dim();
    let mut jac = Matrix::zeros(m, n);
    let mut probe = x.to_vec();
    for i in 0..n {
        let h = f64::EPSILON.cbrt() * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let plus = map.eval(&probe);
        probe[i] = x[i] - h;
        let minus = map.eval(&probe);
        probe[i] = x[i];
        // Actual spacing after rounding of x ± h.
        let span = (x[i] + h) - (x[i] - h);
        for r in 0..m {
            let d = (plus[r] - minus[r]) / span;
            if !d.is_finite() {
                return Err(DerivError::NonFiniteEvaluation { coordinate: i });
            }
            jac[(r, i)] = d;
        }
    }
    Ok(jac)
}

/// Gradient of a scalar map.
pub fn gradient(map: &(impl DifferentiableMap + ?Sized), x: &[f64]) -> Result<Vec<f64>, DerivError> {
    if map.output_dim() != 1 {
        return Err(DerivError::NotScalar { output_dim: map.output_dim() });
    }
    Ok(jacobian(map, x)?.row(0).to_vec())
}

/// Finite-difference Jacobian of a plain closure.
pub(crate) fn fd_jacobian_of(n_in: usize, n_out: usize, x: &[f64], f: impl Fn(&[f64]) -> Vec<f64>) -> Matrix {
    let map = FnMap::new(n_in, n_out, f);
    central_difference_jacobian(&map, x).unwrap_or_else(|_| Matrix::from_row_major(n_out, n_in, vec![f64::NAN; n_in * n_out]))
}

/// Largest entrywise relative discrepancy `|a - b| / max(1, |b|)` between two matrices.
pub fn relative_discrepancy(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}
