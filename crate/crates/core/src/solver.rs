//! Augmented Lagrangian solver for box- and equality-constrained NLPs.
//!
//! The outer loop updates multipliers `λ ← λ + ρG(w)` and grows the penalty
//! when `‖G‖∞` is above `eq_tol` and fails to shrink by a factor of four.
//! Each subproblem
//!
//! ```text
//! min L_ρ(w) = J(w) + λᵀG(w) + (ρ/2)‖G(w)‖²   s.t.  w_lb ≤ w ≤ w_ub
//! ```
//!
//! is solved by projected L-BFGS with an Armijo backtracking search along
//! the projected path.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use sprs::{CsMat, FillInReduction, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::linalg::{dot, norm_inf};
use crate::nlp::NlpProblem;

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const MAX_RHO: f64 = 1e12;
const ROUNDOFF_F: f64 = 1e-13;
const PRECOND_SIGMA: f64 = 1e-2;
const MAX_SHIFTS: usize = 40;
const ACTIVE_EPS: f64 = 1e-3;
const PRECOND_REFRESH: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Target for `‖G(w)‖∞`.
    pub eq_tol: f64,
    /// Target for the projected-gradient stationarity measure.
    pub stat_tol: f64,
    pub rho0: f64,
    pub rho_growth: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub lbfgs_memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { eq_tol: 1e-6, stat_tol: 1e-5, rho0: 10.0, rho_growth: 10.0, max_outer: 30, max_inner: 500, lbfgs_memory: 10 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [("eq_tol", self.eq_tol), ("stat_tol", self.stat_tol), ("rho0", self.rho0)];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(format!("{name} must be positive, got {v}"));
        }
        if !(self.rho_growth > 1.0 && self.rho_growth.is_finite()) {
            return Err(format!("rho_growth must exceed 1, got {}", self.rho_growth));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.lbfgs_memory == 0 {
            return Err("iteration limits and lbfgs_memory must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    IterationCap,
    LineSearchFailure,
}

/// State at the end of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub iter: usize,
    pub cost: f64,
    pub eq_violation: f64,
    pub rho: f64,
    pub stationarity: f64,
    pub inner_iters: usize,
}

impl OuterRecord {
    /// One structured log line.
    pub fn log_line(&self) -> String {
        format!(
            "iter={} cost={:.12e} eq_violation={:.6e} rho={:.3e} stationarity={:.6e} inner_iters={}",
            self.iter, self.cost, self.eq_violation, self.rho, self.stationarity, self.inner_iters
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub w_star: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub cost: f64,
    pub eq_violation: f64,
    pub stationarity: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub status: SolveStatus,
    pub history: Vec<OuterRecord>,
}

fn project_box(w: &mut [f64], lb: &[f64], ub: &[f64]) {
    for ((v, l), u) in w.iter_mut().zip(lb).zip(ub) {
        *v = v.max(*l).min(*u);
    }
}

/// `‖P_box(w − g) − w‖∞`.
pub fn projected_gradient_norm(w: &[f64], g: &[f64], lb: &[f64], ub: &[f64]) -> f64 {
    w.iter()
        .zip(g)
        .zip(lb.iter().zip(ub))
        .map(|((wi, gi), (l, u))| ((wi - gi).max(*l).min(*u) - wi).abs())
        .fold(0.0, f64::max)
}

struct Augmented<'a, P: NlpProblem + ?Sized> {
    nlp: &'a P,
    lambda: &'a [f64],
    rho: f64,
}

/// Value and gradient of `L_ρ` at one point.
struct AugmentedEval {
    value: f64,
    grad: Vec<f64>,
}

impl<P: NlpProblem + ?Sized> Augmented<'_, P> {
    fn eval(&self, w: &[f64]) -> AugmentedEval {
        let g = self.nlp.constraints(w);
        let mut value = self.nlp.cost(w);
        let mut weights = Vec::with_capacity(g.len());
        for (gi, li) in g.iter().zip(self.lambda) {
            value += li * gi + 0.5 * self.rho * gi * gi;
            weights.push(li + self.rho * gi);
        }
        let mut grad = self.nlp.cost_gradient(w);
        if !weights.is_empty() {
            let jtv = self.nlp.constraint_jacobian_transpose_product(w, &weights);
            for (a, b) in grad.iter_mut().zip(jtv) {
                *a += b;
            }
        }
        AugmentedEval { value, grad }
    }
}

/// Sparse `LDLᵀ` factorization of a positive definite model Hessian of `L_ρ`
/// restricted to the free variables, with identity rows for the others.
///
/// The model is `∇²(J + λᵀG) + ρ∇Gᵀ∇G` when the problem supplies Hessian
/// entries and `ρ∇Gᵀ∇G + σI` otherwise; a diagonal shift is added until the
/// factorization is positive definite.
struct Preconditioner {
    ldl: LdlNumeric<f64, usize>,
}

impl Preconditioner {
    /// `curvature` stands in for the objective Hessian when the problem supplies none.
    fn build<P: NlpProblem + ?Sized>(aug: &Augmented<'_, P>, w: &[f64], multipliers: &[f64], free: &[bool], curvature: f64) -> Option<Self> {
        let n = w.len();
        let mut upper: Vec<(usize, usize, f64)> = Vec::new();
        let hessian = aug.nlp.lagrangian_hessian_entries(w, multipliers);
        if let Some(entries) = &hessian {
            upper.extend(entries.iter().filter(|(a, b, _)| a <= b && free[*a] && free[*b]).copied());
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); aug.nlp.num_constraints()];
        for (i, j, v) in aug.nlp.constraint_jacobian_entries(w) {
            if free[j] {
                rows[i].push((j, v));
            }
        }
        for row in &rows {
            for &(a, va) in row {
                for &(b, vb) in row {
                    if a <= b {
                        upper.push((a, b, aug.rho * va * vb));
                    }
                }
            }
        }
        let base_shift = if hessian.is_some() { 0.0 } else { curvature };
        for (i, &f) in free.iter().enumerate() {
            upper.push((i, i, if f { base_shift } else { 1.0 }));
        }
        upper.sort_by_key(|&(a, b, _)| (a, b));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(upper.len());
        for (a, b, v) in upper {
            match merged.last_mut() {
                Some(last) if last.0 == a && last.1 == b => last.2 += v,
                _ => merged.push((a, b, v)),
            }
        }
        let scale = merged.iter().filter(|(a, b, _)| a == b).map(|e| e.2.abs()).fold(1.0, f64::max);

        let mut shift = 0.0;
        for _ in 0..MAX_SHIFTS {
            let mut tri = TriMat::new((n, n));
            for &(a, b, v) in &merged {
                let v = if a == b && free[a] { v + shift } else { v };
                tri.add_triplet(a, b, v);
                if a != b {
                    tri.add_triplet(b, a, v);
                }
            }
            let csc: CsMat<f64> = tri.to_csc();
            if let Ok(ldl) = Ldl::new().fill_in_reduction(FillInReduction::ReverseCuthillMcKee).numeric(csc.view()) {
                if ldl.d().iter().all(|d| *d > 0.0 && d.is_finite()) {
                    return Some(Self { ldl });
                }
            }
            shift = if shift == 0.0 { 1e-14 * scale } else { shift * 10.0 };
        }
        None
    }

    fn apply(&self, q: &[f64]) -> Vec<f64> {
        self.ldl.solve(q.to_vec())
    }
}

enum InnerStatus {
    Converged,
    IterationCap,
    LineSearchFailure,
}

struct InnerResult {
    iters: usize,
    status: InnerStatus,
}

/// Projected L-BFGS on the box with a model-Hessian initial metric; `w` is updated in place.
fn minimize_box<P: NlpProblem + ?Sized>(aug: &Augmented<'_, P>, w: &mut Vec<f64>, tol: f64, opts: &SolverOptions) -> InnerResult {
    let lb = aug.nlp.lower_bounds();
    let ub = aug.nlp.upper_bounds();
    let n = w.len();
    let use_precond = aug.nlp.num_constraints() > 0;
    let mut cur = aug.eval(w);
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.lbfgs_memory);
    let mut prev_free: Vec<bool> = Vec::new();
    let mut precond: Option<Preconditioner> = None;
    let mut since_refresh = 0;
    let mut last_alpha = 1.0;
    let mut curvature = PRECOND_SIGMA;
    let hessian_free = use_precond && aug.nlp.lagrangian_hessian_entries(w, aug.lambda).is_none();

    for it in 0..opts.max_inner {
        let g = &cur.grad;
        let pg = projected_gradient_norm(w, g, lb, ub);
        if pg <= tol {
            return InnerResult { iters: it, status: InnerStatus::Converged };
        }
        // Variables within `eps` of a bound they are pushed against are held fixed.
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let width = ub[i] - lb[i];
                let eps = pg.min(ACTIVE_EPS * if width.is_finite() { width } else { 1.0 + lb[i].abs().min(ub[i].abs()) });
                let pinned = width == 0.0;
                let at_lower = w[i] <= lb[i] + eps && g[i] > 0.0;
                let at_upper = w[i] >= ub[i] - eps && g[i] < 0.0;
                !(pinned || at_lower || at_upper)
            })
            .collect();
        let free_changed = free != prev_free;
        if free_changed {
            memory.clear();
            prev_free = free.clone();
        }
        if use_precond && (free_changed || since_refresh >= PRECOND_REFRESH || last_alpha < 1.0) {
            precond = Preconditioner::build(aug, w, aug.lambda, &free, curvature);
            since_refresh = 0;
        }
        since_refresh += 1;

        let mut d = two_loop(g, &free, &memory, precond.as_ref());
        if !(dot(&d, g) < 0.0) {
            memory.clear();
            d = two_loop(g, &free, &memory, precond.as_ref());
            if !(dot(&d, g) < 0.0) {
                d = g.iter().zip(&free).map(|(gi, &fr)| if fr { -gi } else { 0.0 }).collect();
                if !(dot(&d, g) < 0.0) {
                    return InnerResult { iters: it, status: InnerStatus::Converged };
                }
            }
        }
        // Held variables head straight for the bound they are pushed against.
        for i in 0..n {
            if !free[i] && lb[i] != ub[i] {
                d[i] = if g[i] > 0.0 { lb[i] - w[i] } else { ub[i] - w[i] };
            }
        }
        let mut alpha = if memory.is_empty() && precond.is_none() { (1.0 / norm_inf(&d)).min(1.0) } else { 1.0 };

        let f = cur.value;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut cand: Vec<f64> = w.iter().zip(&d).map(|(wi, di)| wi + alpha * di).collect();
            project_box(&mut cand, lb, ub);
            let step: Vec<f64> = cand.iter().zip(w.iter()).map(|(a, b)| a - b).collect();
            let decrease = dot(g, &step);
            if decrease < 0.0 {
                let next = aug.eval(&cand);
                let f_new = next.value;
                let armijo = f_new <= f + ARMIJO_C1 * decrease;
                // Near the optimum the decrease drops below the rounding level of f;
                // fall back to the slope once f no longer resolves it.
                let flat = f_new <= f && (f - f_new) <= ROUNDOFF_F * (1.0 + f.abs()) && dot(&next.grad, &step).abs() <= 0.9 * decrease.abs();
                if f_new.is_finite() && (armijo || flat) {
                    accepted = Some((cand, step, next));
                    break;
                }
            }
            alpha *= BACKTRACK;
        }
        let Some((cand, s, next)) = accepted else {
            // Curvature pairs gathered near roundoff can spoil the direction; retry once without them.
            if !memory.is_empty() {
                memory.clear();
                prev_free.clear();
                continue;
            }
            return InnerResult { iters: it, status: InnerStatus::LineSearchFailure };
        };
        assert!(next.value <= f, "line search accepted an increasing step");
        let y: Vec<f64> = next.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if hessian_free && sy > 0.0 {
            // Rayleigh quotient of the curvature left after the penalty term.
            let mut a_s = vec![0.0; aug.nlp.num_constraints()];
            for (i, j, v) in aug.nlp.constraint_jacobian_entries(&cand) {
                a_s[i] += v * s[j];
            }
            curvature = ((sy - aug.rho * dot(&a_s, &a_s)) / dot(&s, &s)).max(PRECOND_SIGMA);
        }
        if sy > f64::EPSILON * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if memory.len() == opts.lbfgs_memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        *w = cand;
        cur = next;
        last_alpha = alpha;
    }
    let status = if projected_gradient_norm(w, &cur.grad, lb, ub) <= tol { InnerStatus::Converged } else { InnerStatus::IterationCap };
    InnerResult { iters: opts.max_inner, status }
}

/// L-BFGS two-loop recursion restricted to the free variables; returns `−H g`.
fn two_loop(g: &[f64], free: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, precond: Option<&Preconditioner>) -> Vec<f64> {
    let mask = |v: &mut Vec<f64>| v.iter_mut().zip(free).for_each(|(x, &f)| if !f { *x = 0.0 });
    let mut q = g.to_vec();
    mask(&mut q);
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, r) in memory.iter().rev() {
        let a = r * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        mask(&mut q);
        alphas.push(a);
    }
    match precond {
        Some(p) => {
            q = p.apply(&q);
            mask(&mut q);
        }
        None => {
            if let Some((s, y, _)) = memory.back() {
                let gamma = dot(s, y) / dot(y, y);
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
    }
    for ((s, y, r), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = r * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    mask(&mut q);
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

pub fn solve<P: NlpProblem + ?Sized>(nlp: &P, w0: &[f64], opts: &SolverOptions) -> Solution {
    solve_with_observer(nlp, w0, opts, &mut |_| {})
}

/// Like [`solve`], reporting each outer iteration to `observer` as it finishes.
pub fn solve_with_observer<P: NlpProblem + ?Sized>(
    nlp: &P,
    w0: &[f64],
    opts: &SolverOptions,
    observer: &mut dyn FnMut(&OuterRecord),
) -> Solution {
    assert_eq!(w0.len(), nlp.dim(), "initial point has the wrong dimension");
    let lb = nlp.lower_bounds();
    let ub = nlp.upper_bounds();
    let mut w = w0.to_vec();
    project_box(&mut w, lb, ub);

    let mut lambda = vec![0.0; nlp.num_constraints()];
    let mut rho = opts.rho0;
    let mut prev_violation = norm_inf(&nlp.constraints(&w));
    let mut prev_stalled = false;
    let mut inner_tol = opts.stat_tol.max(1e-2);
    let mut inner_total = 0;
    let mut history = Vec::new();
    let mut status = SolveStatus::IterationCap;
    let mut stationarity = f64::INFINITY;
    let mut outer = 0;

    while outer < opts.max_outer {
        outer += 1;
        let inner = {
            let aug = Augmented { nlp, lambda: &lambda, rho };
            minimize_box(&aug, &mut w, inner_tol, opts)
        };
        inner_total += inner.iters;

        let g = nlp.constraints(&w);
        let violation = norm_inf(&g);
        // Two stalls in a row leave w where the last update saw it; another update would count the same G twice.
        let stalled = matches!(inner.status, InnerStatus::LineSearchFailure) && inner.iters == 0;
        let repeat_stall = stalled && prev_stalled;
        prev_stalled = stalled;
        if !repeat_stall {
            for (l, gi) in lambda.iter_mut().zip(&g) {
                *l += rho * gi;
            }
        }
        // ∇L_ρ(w; λ) equals the Lagrangian gradient at the updated multipliers.
        stationarity = kkt_residuals(nlp, &w, &lambda).stationarity;
        let record = OuterRecord { iter: outer, cost: nlp.cost(&w), eq_violation: violation, rho, stationarity, inner_iters: inner.iters };
        observer(&record);
        history.push(record);

        if violation <= opts.eq_tol && stationarity <= opts.stat_tol {
            status = SolveStatus::Converged;
            break;
        }
        if stalled && inner_tol <= opts.stat_tol {
            status = SolveStatus::LineSearchFailure;
            if (repeat_stall && violation <= opts.eq_tol) || rho >= MAX_RHO {
                break;
            }
        } else {
            status = SolveStatus::IterationCap;
        }
        if violation > opts.eq_tol && violation > prev_violation / 4.0 {
            rho = (rho * opts.rho_growth).min(MAX_RHO);
        }
        prev_violation = violation;
        inner_tol = (inner_tol * 0.1).max(opts.stat_tol);
    }

    let g = nlp.constraints(&w);
    Solution {
        cost: nlp.cost(&w),
        eq_violation: norm_inf(&g),
        stationarity,
        multipliers: lambda,
        w_star: w,
        outer_iters: outer,
        inner_iters: inner_total,
        status,
        history,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub cost: f64,
    pub eq_violation: f64,
    /// `‖P_box(w − ∇_w(J + λᵀG)) − w‖∞`.
    pub stationarity: f64,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
}

/// KKT residuals of a solution.
pub fn kkt_report<P: NlpProblem + ?Sized>(nlp: &P, sol: &Solution) -> KktReport {
    kkt_residuals(nlp, &sol.w_star, &sol.multipliers)
}

/// KKT residuals at an arbitrary point and multiplier estimate.
pub fn kkt_residuals<P: NlpProblem + ?Sized>(nlp: &P, w: &[f64], multipliers: &[f64]) -> KktReport {
    let lb = nlp.lower_bounds();
    let ub = nlp.upper_bounds();
    let mut grad = nlp.cost_gradient(w);
    if !multipliers.is_empty() {
        for (a, b) in grad.iter_mut().zip(nlp.constraint_jacobian_transpose_product(w, multipliers)) {
            *a += b;
        }
    }
    let active_lower = (0..w.len()).filter(|&i| w[i] <= lb[i]).collect();
    let active_upper = (0..w.len()).filter(|&i| w[i] >= ub[i]).collect();
    KktReport {
        cost: nlp.cost(w),
        eq_violation: norm_inf(&nlp.constraints(w)),
        stationarity: projected_gradient_norm(w, &grad, lb, ub),
        active_lower,
        active_upper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, Matrix};
    use crate::nlp::FnNlp;
    use approx::assert_abs_diff_eq;

    fn simple_qp() -> FnNlp {
        FnNlp::new(2, |w| dot(w, w))
            .with_gradient(|w| w.iter().map(|v| 2.0 * v).collect())
            .with_constraints(1, |w| vec![w[0] + w[1] - 1.0])
            .with_constraint_jacobian(|_| Matrix::from_rows(&[[1.0, 1.0]]))
    }

    #[test]
    fn equality_constrained_qp() {
        let nlp = simple_qp();
        let sol = solve(&nlp, &[3.0, -2.0], &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_abs_diff_eq!(sol.w_star[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.w_star[1], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.cost, 0.5, epsilon = 1e-6);
        assert!(sol.eq_violation <= 1e-6);
        // Multiplier of min ‖w‖² s.t. w₁ + w₂ = 1 is −1.
        assert_abs_diff_eq!(sol.multipliers[0], -1.0, epsilon = 1e-5);
    }

    #[test]
    fn bound_active_linear_objective() {
        let nlp = FnNlp::new(1, |w| w[0]).with_gradient(|_| vec![1.0]).with_bounds(vec![0.0], vec![1.0]);
        let sol = solve(&nlp, &[0.7], &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_eq!(sol.w_star, vec![0.0]);
        let report = kkt_report(&nlp, &sol);
        assert_eq!(report.active_lower, vec![0]);
        assert!(report.active_upper.is_empty());
    }

    #[test]
    fn kkt_report_of_converged_qp() {
        let tight = SolverOptions { eq_tol: 1e-10, stat_tol: 1e-9, ..Default::default() };
        let nlp = simple_qp();
        let sol = solve(&nlp, &[0.0, 0.0], &tight);
        let report = kkt_report(&nlp, &sol);
        assert!(report.stationarity <= 1e-8);
        assert_eq!(report.stationarity, sol.stationarity);
        assert!(report.active_lower.is_empty() && report.active_upper.is_empty());
    }

    #[test]
    fn kkt_residuals_are_reproducible() {
        let nlp = simple_qp();
        let w = [0.3141, -2.718];
        let a = kkt_residuals(&nlp, &w, &[0.5]);
        let b = kkt_residuals(&nlp, &w, &[0.5]);
        assert_eq!(a, b);
        assert!(a.stationarity.is_finite() && a.eq_violation.is_finite());
    }

    #[test]
    fn clamps_infeasible_start() {
        let nlp = FnNlp::new(2, |w| (w[0] - 3.0).powi(2) + (w[1] + 3.0).powi(2)).with_bounds(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let sol = solve(&nlp, &[10.0, -10.0], &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_eq!(sol.w_star, vec![1.0, -1.0]);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let nlp = simple_qp();
        let opts = SolverOptions { max_outer: 1, max_inner: 1, ..Default::default() };
        let sol = solve(&nlp, &[3.0, -2.0], &opts);
        assert_eq!(sol.status, SolveStatus::IterationCap);
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let nlp = FnNlp::new(3, |w| w[0].powi(4) + w[1] * w[1] + (w[2] - 1.0).powi(2) + w[0] * w[1])
            .with_constraints(1, |w| vec![w[0] * w[0] + w[1] + w[2] - 2.0]);
        let a = solve(&nlp, &[1.0, 1.0, 1.0], &SolverOptions::default());
        let b = solve(&nlp, &[1.0, 1.0, 1.0], &SolverOptions::default());
        assert_eq!(a, b);
    }

    #[test]
    fn outer_progress_or_penalty_growth() {
        let nlp = FnNlp::new(2, |w| (w[0] - 2.0).powi(2) + (w[1] - 1.0).powi(4))
            .with_constraints(1, |w| vec![w[0] * w[0] + w[1] * w[1] - 1.0]);
        let sol = solve(&nlp, &[0.0, 0.0], &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Converged);
        let h = &sol.history;
        for i in 1..h.len().saturating_sub(1) {
            // A rise in ‖G‖∞ is always answered by a larger penalty.
            if h[i].eq_violation > h[i - 1].eq_violation {
                assert!(h[i + 1].rho > h[i].rho, "{h:?}");
            }
        }
    }

    #[test]
    fn matches_closed_form_kkt_on_random_qps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let n = rng.gen_range(3..=12);
            let p = rng.gen_range(1..n);
            let (q, c, a, b) = random_qp(&mut rng, n, p);
            let oracle = kkt_oracle(&q, &c, &a, &b);
            let nlp = qp_nlp(q, c, a, b);
            let sol = solve(&nlp, &vec![0.0; n], &SolverOptions { eq_tol: 1e-9, stat_tol: 1e-7, ..Default::default() });
            assert_eq!(sol.status, SolveStatus::Converged, "{:#?}", sol.history);
            for (x, y) in sol.w_star.iter().zip(&oracle) {
                assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
            }
        }
    }

    pub(crate) fn random_qp(rng: &mut impl rand::Rng, n: usize, p: usize) -> (Matrix, Vec<f64>, Matrix, Vec<f64>) {
        let g = Matrix::from_row_major(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let q = g.transpose().matmul(&g).add(&Matrix::identity(n));
        let c = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = Matrix::from_row_major(p, n, (0..p * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let b = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (q, c, a, b)
    }

    /// Solves `[Q Aᵀ; A 0][w; λ] = [−c; b]`.
    pub(crate) fn kkt_oracle(q: &Matrix, c: &[f64], a: &Matrix, b: &[f64]) -> Vec<f64> {
        let n = q.rows();
        let p = a.rows();
        let mut k = Matrix::zeros(n + p, n + p);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = q[(i, j)];
            }
        }
        for i in 0..p {
            for j in 0..n {
                k[(n + i, j)] = a[(i, j)];
                k[(j, n + i)] = a[(i, j)];
            }
        }
        let mut rhs: Vec<f64> = c.iter().map(|v| -v).collect();
        rhs.extend_from_slice(b);
        linalg::solve(&k, &rhs).unwrap()[..n].to_vec()
    }

    pub(crate) fn qp_nlp(q: Matrix, c: Vec<f64>, a: Matrix, b: Vec<f64>) -> FnNlp {
        let n = q.rows();
        let p = a.rows();
        let (q1, c1, a1, a2) = (q.clone(), c.clone(), a.clone(), a.clone());
        FnNlp::new(n, move |w| 0.5 * dot(w, &q.matvec(w)) + dot(&c, w))
            .with_gradient(move |w| q1.matvec(w).iter().zip(&c1).map(|(x, y)| x + y).collect())
            .with_constraints(p, move |w| a1.matvec(w).iter().zip(&b).map(|(x, y)| x - y).collect())
            .with_constraint_jacobian(move |_| a2.clone())
    }
}
