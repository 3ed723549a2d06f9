//! Box- and equality-constrained nonlinear programs
//!
//! ```text
//! min J(w)  subject to  w_lb ≤ w ≤ w_ub,  G(w) = 0
//! ```

use crate::deriv::fd_jacobian_of;
use crate::linalg::Matrix;

pub trait NlpProblem: Sync {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];

    fn cost(&self, w: &[f64]) -> f64;
    fn cost_gradient(&self, w: &[f64]) -> Vec<f64>;
    /// The equality map `G(w)`.
    fn constraints(&self, w: &[f64]) -> Vec<f64>;
    fn constraint_jacobian(&self, w: &[f64]) -> Matrix;

    /// Nonzero entries `(row, col, value)` of `∇G(w)`. Override when the Jacobian is sparse.
    fn constraint_jacobian_entries(&self, w: &[f64]) -> Vec<(usize, usize, f64)> {
        let jac = self.constraint_jacobian(w);
        let mut out = Vec::new();
        for i in 0..jac.rows() {
            for (j, &v) in jac.row(i).iter().enumerate() {
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// Nonzero entries of the Hessian `∇²(J + vᵀG)(w)`, when the problem can supply them.
    ///
    /// Both triangles are listed; duplicates are summed.
    fn lagrangian_hessian_entries(&self, _w: &[f64], _v: &[f64]) -> Option<Vec<(usize, usize, f64)>> {
        None
    }

    /// `∇G(w)ᵀ v`. Override when the Jacobian is structured.
    fn constraint_jacobian_transpose_product(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        self.constraint_jacobian(w).tr_matvec(v)
    }
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatrixFn = Box<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// An [`NlpProblem`] assembled from closures; missing derivatives fall back to central differences.
pub struct FnNlp {
    dim: usize,
    num_constraints: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: ScalarFn,
    cost_gradient: Option<VectorFn>,
    constraints: VectorFn,
    constraint_jacobian: Option<MatrixFn>,
}

impl FnNlp {
    /// Unbounded problem without equality constraints.
    pub fn new(dim: usize, cost: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            num_constraints: 0,
            lb: vec![f64::NEG_INFINITY; dim],
            ub: vec![f64::INFINITY; dim],
            cost: Box::new(cost),
            cost_gradient: None,
            constraints: Box::new(|_| Vec::new()),
            constraint_jacobian: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.cost_gradient = Some(Box::new(g));
        self
    }

    pub fn with_constraints(mut self, count: usize, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.num_constraints = count;
        self.constraints = Box::new(g);
        self
    }

    pub fn with_constraint_jacobian(mut self, j: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.constraint_jacobian = Some(Box::new(j));
        self
    }

    /// Panics if the bound vectors have the wrong length or cross.
    pub fn with_bounds(mut self, lb: Vec<f64>, ub: Vec<f64>) -> Self {
        assert_eq!(lb.len(), self.dim);
        assert_eq!(ub.len(), self.dim);
        assert!(lb.iter().zip(&ub).all(|(l, u)| l <= u), "lower bound above upper bound");
        self.lb = lb;
        self.ub = ub;
        self
    }
}

impl NlpProblem for FnNlp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lb
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.ub
    }

    fn cost(&self, w: &[f64]) -> f64 {
        (self.cost)(w)
    }

    fn cost_gradient(&self, w: &[f64]) -> Vec<f64> {
        match &self.cost_gradient {
            Some(g) => g(w),
            None => fd_jacobian_of(self.dim, 1, w, |z| vec![(self.cost)(z)]).row(0).to_vec(),
        }
    }

    fn constraints(&self, w: &[f64]) -> Vec<f64> {
        (self.constraints)(w)
    }

    fn constraint_jacobian(&self, w: &[f64]) -> Matrix {
        match &self.constraint_jacobian {
            Some(j) => j(w),
            None => fd_jacobian_of(self.dim, self.num_constraints, w, |z| (self.constraints)(z)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fd_fallbacks_match_closed_forms() {
        let nlp = FnNlp::new(2, |w| w[0] * w[0] + 3.0 * w[1]).with_constraints(1, |w| vec![w[0] * w[1] - 1.0]);
        let g = nlp.cost_gradient(&[2.0, -1.0]);
        assert_abs_diff_eq!(g[0], 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 3.0, epsilon = 1e-8);
        let j = nlp.constraint_jacobian(&[2.0, -1.0]);
        assert_abs_diff_eq!(j[(0, 0)], -1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(j[(0, 1)], 2.0, epsilon = 1e-8);
        let v = nlp.constraint_jacobian_transpose_product(&[2.0, -1.0], &[2.0]);
        assert_abs_diff_eq!(v[0], -2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v[1], 4.0, epsilon = 1e-8);
    }
}
