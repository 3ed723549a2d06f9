//! The dissipation map `f(x) = R(x)^{1/2} η(x)` and its zero set `M`.
//!
//! `M` collects the states where no energy is dissipated. This module
//! computes kernel dimensions and singular values of `Df`, the orthogonal
//! projection onto `M`, distances, and a sampled certificate for the bound
//! `c·dist(x, M) ≤ ‖f(x)‖` with `c = c̃/2`, where `c̃` lower-bounds the
//! smallest nonzero singular value of `Df`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::deriv::{self, DifferentiableMap};
use crate::linalg::{self, norm2, sub_vec, LinalgError, Matrix, Svd};
use crate::phsys::PortHamiltonian;

/// Relative threshold below which singular values of `Df` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

const MAX_PROJECTION_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("R(x) is not positive semidefinite at {x:?}: {source}")]
    NotPsd { x: Vec<f64>, source: LinalgError },
    #[error("Df has no nonzero singular value at {x:?}")]
    DegeneratePoint { x: Vec<f64> },
    #[error("none of the {samples} samples fell inside the shell of width {shell_width}")]
    Inconclusive { samples: usize, shell_width: f64 },
    #[error("sample box has {got} intervals, state dimension is {expected}")]
    BoxDimension { expected: usize, got: usize },
    #[error("invalid sample box interval [{lo}, {hi}]")]
    BoxInterval { lo: f64, hi: f64 },
}

#[derive(Clone, Copy)]
pub struct DissipationMap<'a> {
    system: &'a dyn PortHamiltonian,
    rank_tol: f64,
}

/// Result of projecting a point onto `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distance {
    pub value: f64,
    pub converged: bool,
}

impl<'a> DissipationMap<'a> {
    pub fn new(system: &'a dyn PortHamiltonian) -> Self {
        Self { system, rank_tol: DEFAULT_RANK_TOL }
    }

    /// Panics unless `rank_tol > 0`.
    pub fn with_rank_tol(mut self, rank_tol: f64) -> Self {
        assert!(rank_tol > 0.0, "rank tolerance must be positive");
        self.rank_tol = rank_tol;
        self
    }

    pub fn system(&self) -> &'a dyn PortHamiltonian {
        self.system
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>, ManifoldError> {
        let root = linalg::sqrt_psd(&self.system.r(x)).map_err(|source| ManifoldError::NotPsd { x: x.to_vec(), source })?;
        Ok(root.matvec(&self.system.eta(x)))
    }

    /// `‖f(x)‖`, infinite where `R(x)` is not PSD.
    pub fn f_norm(&self, x: &[f64]) -> f64 {
        self.eval_f(x).map_or(f64::INFINITY, |f| norm2(&f))
    }

    pub fn df(&self, x: &[f64]) -> Matrix {
        deriv::jacobian(self, x).unwrap_or_else(|_| {
            let n = self.dim();
            Matrix::from_row_major(n, n, vec![f64::NAN; n * n])
        })
    }

    fn df_svd(&self, x: &[f64]) -> Option<Svd> {
        linalg::svd(&self.df(x)).ok()
    }

    fn rank_of(&self, svd: &Svd) -> usize {
        let smax = svd.values.first().copied().unwrap_or(0.0);
        let threshold = self.rank_tol * smax.max(1.0);
        svd.values.iter().filter(|&&s| s >= threshold).count()
    }

    /// `dim ker(Df_x)`.
    pub fn kernel_dim(&self, x: &[f64]) -> usize {
        match self.df_svd(x) {
            Some(s) => self.dim() - self.rank_of(&s),
            None => self.dim(),
        }
    }

    /// Smallest singular value of `Df_x` above the rank threshold.
    pub fn sigma_min_nonzero(&self, x: &[f64]) -> Result<f64, ManifoldError> {
        let svd = self.df_svd(x).ok_or_else(|| ManifoldError::DegeneratePoint { x: x.to_vec() })?;
        let r = self.rank_of(&svd);
        if r == 0 {
            return Err(ManifoldError::DegeneratePoint { x: x.to_vec() });
        }
        Ok(svd.values[r - 1])
    }

    /// Orthonormal basis of `ker(Df_x)`, which is the tangent space of `M` at points of `M`.
    pub fn kernel_basis(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let Some(svd) = self.df_svd(x) else { return Vec::new() };
        let r = self.rank_of(&svd);
        (r..self.dim()).map(|k| svd.vt.row(k).to_vec()).collect()
    }

    /// Nearest point of `M` to `x`.
    ///
    /// Alternates damped Gauss–Newton steps toward `f = 0` with a move of the
    /// displacement `x − p` onto the normal space `ran(Df_pᵀ)`, i.e. `p` is
    /// shifted by the tangential part of `x − p`. Capped at 200 iterations.
    pub fn project(&self, x: &[f64]) -> Projection {
        let n = self.dim();
        let fx = self.f_norm(x);
        let f_accept = 1e-9 * fx.max(1.0);
        let f_target = 1e-14 * fx.max(1.0);
        let mut p = x.to_vec();
        let mut iters = 0;

        while iters < MAX_PROJECTION_ITERS {
            // Gauss–Newton toward f(p) = 0.
            loop {
                let fp = match self.eval_f(&p) {
                    Ok(v) => v,
                    Err(_) => return Projection { point: p, converged: false, iterations: iters },
                };
                let fp_norm = norm2(&fp);
                if fp_norm <= f_target || iters >= MAX_PROJECTION_ITERS {
                    break;
                }
                let Some(svd) = self.df_svd(&p) else { break };
                let r = self.rank_of(&svd);
                if r == 0 {
                    break;
                }
                let mut step = vec![0.0; n];
                for k in 0..r {
                    let coeff = -linalg::dot(&svd.u.column(k), &fp) / svd.values[k];
                    for (s, v) in step.iter_mut().zip(svd.vt.row(k)) {
                        *s += coeff * v;
                    }
                }
                iters += 1;
                let mut alpha = 1.0;
                let mut accepted = false;
                while alpha > 1e-12 {
                    let cand: Vec<f64> = p.iter().zip(&step).map(|(a, s)| a + alpha * s).collect();
                    if self.f_norm(&cand) < fp_norm {
                        p = cand;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    break;
                }
            }

            // Tangential correction: keep only the normal part of x − p.
            let disp = sub_vec(x, &p);
            let basis = self.kernel_basis(&p);
            let mut tangential = vec![0.0; n];
            for b in &basis {
                let c = linalg::dot(b, &disp);
                for (t, bi) in tangential.iter_mut().zip(b) {
                    *t += c * bi;
                }
            }
            let tnorm = norm2(&tangential);
            let fp_norm = self.f_norm(&p);
            let scale = norm2(&disp).max(1.0);
            if fp_norm <= f_accept && tnorm <= 1e-12 * scale {
                return Projection { point: p, converged: true, iterations: iters };
            }
            if iters >= MAX_PROJECTION_ITERS {
                break;
            }
            iters += 1;
            for (pi, t) in p.iter_mut().zip(&tangential) {
                *pi += t;
            }
            if tnorm <= 1e-15 * scale && fp_norm > f_accept {
                // Gauss–Newton made no progress and there is nothing left to move.
                break;
            }
        }
        let converged = self.f_norm(&p) <= f_accept && self.stationarity(x, &p) <= 1e-7 * norm2(&sub_vec(x, &p)).max(1.0);
        Projection { point: p, converged, iterations: iters }
    }

    /// `‖Π_{T_p M}(x − p)‖` using `ker(Df_p)` as the tangent space.
    pub fn stationarity(&self, x: &[f64], p: &[f64]) -> f64 {
        let disp = sub_vec(x, p);
        self.kernel_basis(p).iter().map(|b| linalg::dot(b, &disp).powi(2)).sum::<f64>().sqrt()
    }

    /// `dist(x, M)` as the distance to the computed projection.
    pub fn distance(&self, x: &[f64]) -> Distance {
        if self.eval_f(x).map(|f| f.iter().all(|v| *v == 0.0)).unwrap_or(false) {
            return Distance { value: 0.0, converged: true };
        }
        let proj = self.project(x);
        Distance { value: norm2(&sub_vec(x, &proj.point)), converged: proj.converged }
    }

    /// Samples `sample_box` quasi-randomly and checks the distance bound in a shell around `M`.
    ///
    /// Points are a Halton sequence shifted by a seeded random rotation
    /// modulo one. Only samples with `dist(x, M) ≤ shell_width` count.
    pub fn certify(
        &self,
        sample_box: &[(f64, f64)],
        n_samples: usize,
        shell_width: f64,
        seed: u64,
    ) -> Result<ManifoldCertificate, ManifoldError> {
        let n = self.dim();
        if sample_box.len() != n {
            return Err(ManifoldError::BoxDimension { expected: n, got: sample_box.len() });
        }
        if let Some(&(lo, hi)) = sample_box.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(ManifoldError::BoxInterval { lo, hi });
        }
        let points = halton_points(sample_box, n_samples.max(1), seed);

        let records: Vec<ShellSample> = points
            .into_par_iter()
            .map(|x| {
                let dist = self.distance(&x);
                let f_norm = self.f_norm(&x);
                let kernel_dim = self.kernel_dim(&x);
                let sigma = if kernel_dim < n { self.sigma_min_nonzero(&x).ok() } else { None };
                ShellSample { point: x, distance: dist.value, converged: dist.converged, f_norm, kernel_dim, sigma_min_nonzero: sigma }
            })
            .collect();
        let total = records.len();
        let shell: Vec<ShellSample> = records.into_iter().filter(|r| r.distance <= shell_width).collect();
        if shell.is_empty() {
            return Err(ManifoldError::Inconclusive { samples: total, shell_width });
        }

        let mut counts = vec![0usize; n + 1];
        for r in &shell {
            counts[r.kernel_dim] += 1;
        }
        let s = (0..=n).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).unwrap_or(0);
        let kernel_dim_consistent = counts[s] == shell.len();

        let sigma_lower = shell.iter().filter_map(|r| r.sigma_min_nonzero).fold(f64::INFINITY, f64::min);
        let sigma_lower = if sigma_lower.is_finite() { sigma_lower } else { 0.0 };
        let c = sigma_lower / 2.0;

        let empirical_c = shell
            .iter()
            .filter(|r| r.distance > 0.0)
            .map(|r| r.f_norm / r.distance)
            .fold(f64::INFINITY, f64::min);

        let mut cert = ManifoldCertificate {
            state_dim: n,
            s,
            kernel_dim_consistent,
            sigma_min_nonzero_lower: sigma_lower,
            c,
            empirical_best_c: if empirical_c.is_finite() { Some(empirical_c) } else { None },
            samples_drawn: total,
            samples_checked: shell.len(),
            unconverged_projections: shell.iter().filter(|r| !r.converged).count(),
            bound_violations: Vec::new(),
            sample_box: sample_box.to_vec(),
            shell_width,
            seed,
            samples: shell,
        };
        cert.bound_violations = cert.violations_at(c);
        Ok(cert)
    }
}

impl DifferentiableMap for DissipationMap<'_> {
    fn input_dim(&self) -> usize {
        self.dim()
    }

    fn output_dim(&self) -> usize {
        self.dim()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval_f(x).unwrap_or_else(|_| vec![f64::NAN; self.dim()])
    }

    fn analytic_jacobian(&self, x: &[f64]) -> Option<Matrix> {
        self.system.dissipation_jacobian(x)
    }
}

/// One in-shell sample of a certificate run.
#[derive(Debug, Clone, Serialize)]
pub struct ShellSample {
    pub point: Vec<f64>,
    pub distance: f64,
    pub converged: bool,
    pub f_norm: f64,
    pub kernel_dim: usize,
    pub sigma_min_nonzero: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifoldCertificate {
    pub state_dim: usize,
    /// Modal kernel dimension of `Df` over the shell.
    pub s: usize,
    pub kernel_dim_consistent: bool,
    /// `c̃`: smallest nonzero singular value of `Df` seen in the shell (0 if none).
    pub sigma_min_nonzero_lower: f64,
    /// `c̃ / 2`.
    pub c: f64,
    /// `min ‖f(x)‖ / dist(x, M)` over in-shell samples off `M`.
    pub empirical_best_c: Option<f64>,
    pub samples_drawn: usize,
    pub samples_checked: usize,
    pub unconverged_projections: usize,
    /// Points where `c·dist(x, M) > ‖f(x)‖`.
    pub bound_violations: Vec<Vec<f64>>,
    pub sample_box: Vec<(f64, f64)>,
    pub shell_width: f64,
    pub seed: u64,
    #[serde(skip)]
    pub samples: Vec<ShellSample>,
}

impl ManifoldCertificate {
    /// `0 < s < n`, a consistent kernel dimension, `c̃ > 0` and no bound violations.
    pub fn passed(&self) -> bool {
        self.s > 0
            && self.s < self.state_dim
            && self.kernel_dim_consistent
            && self.sigma_min_nonzero_lower > 0.0
            && self.bound_violations.is_empty()
            && self.unconverged_projections == 0
    }

    /// In-shell points where `c·dist(x, M) > ‖f(x)‖` for the given `c`.
    pub fn violations_at(&self, c: f64) -> Vec<Vec<f64>> {
        self.samples.iter().filter(|r| c * r.distance > r.f_norm).map(|r| r.point.clone()).collect()
    }

    /// Whether `x` lies in the sampled box and within the shell around `M`.
    pub fn covers(&self, dm: &DissipationMap<'_>, x: &[f64]) -> bool {
        x.len() == self.sample_box.len()
            && x.iter().zip(&self.sample_box).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
            && dm.distance(x).value <= self.shell_width
    }
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    out
}

/// Cranley–Patterson rotated Halton points in a box.
pub fn halton_points(sample_box: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(sample_box.len() <= PRIMES.len(), "halton_points supports up to {} dimensions", PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = sample_box.iter().map(|_| rng.gen::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            sample_box
                .iter()
                .enumerate()
                .map(|(d, (lo, hi))| {
                    let u = (radical_inverse(i, PRIMES[d]) + shift[d]).fract();
                    lo + (hi - lo) * u
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phsys::{LinearPh, Ph1, Ph2};
    use approx::assert_abs_diff_eq;

    fn rand_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect()
    }

    #[test]
    fn eval_f_examples() {
        let dm = DissipationMap::new(&Ph1);
        let f = dm.eval_f(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(f[0], 5.0, epsilon = 1e-14);
        assert_eq!(f[1], 0.0);
        assert_eq!(dm.eval_f(&[0.0, 7.0]).unwrap(), vec![0.0, 0.0]);
        let dm2 = DissipationMap::new(&Ph2);
        let f = dm2.eval_f(&[1.0, 0.0, 5.0]).unwrap();
        assert_abs_diff_eq!(f[0], 5.0, epsilon = 1e-14);
        assert_eq!(&f[1..], &[0.0, 0.0]);
    }

    #[test]
    fn kernel_dimensions() {
        let dm = DissipationMap::new(&Ph1);
        let dm2 = DissipationMap::new(&Ph2);
        for x in rand_points(2, 100, 1) {
            assert_eq!(dm.kernel_dim(&x), 1);
        }
        for x in rand_points(3, 100, 2) {
            assert_eq!(dm2.kernel_dim(&x), 2);
        }
        let full = LinearPh::new(
            Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]),
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::from_rows(&[[1.0], [0.0]]),
        )
        .unwrap();
        assert_eq!(DissipationMap::new(&full).kernel_dim(&[0.3, 0.1]), 0);
    }

    #[test]
    fn smallest_nonzero_singular_value() {
        let dm = DissipationMap::new(&Ph1);
        assert_abs_diff_eq!(dm.sigma_min_nonzero(&[0.0, 0.0]).unwrap(), 1.0, epsilon = 1e-14);
        // The closed-form expression 144x₁⁴ + … + 1 quoted for this example gives 169 here,
        // which is the square of the singular value.
        assert_abs_diff_eq!(dm.sigma_min_nonzero(&[1.0, 0.0]).unwrap(), 13.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dm.sigma_min_nonzero(&[0.0, 1.0]).unwrap(), 5.0, epsilon = 1e-12);

        let conservative = LinearPh::new(
            Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]),
            Matrix::zeros(2, 2),
            Matrix::identity(2),
            Matrix::from_rows(&[[1.0], [0.0]]),
        )
        .unwrap();
        let dm0 = DissipationMap::new(&conservative);
        assert!(matches!(dm0.sigma_min_nonzero(&[1.0, 1.0]), Err(ManifoldError::DegeneratePoint { .. })));
    }

    #[test]
    fn projection_examples() {
        let dm = DissipationMap::new(&Ph1);
        let p = dm.project(&[0.3, -2.0]);
        assert!(p.converged);
        assert_abs_diff_eq!(p.point[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.point[1], -2.0, epsilon = 1e-12);

        let on = [0.0, 1.7];
        let p = dm.project(&on);
        assert_eq!(p.point, on.to_vec());

        let dm2 = DissipationMap::new(&Ph2);
        let p = dm2.project(&[2.0, 1.0, 10.0]);
        assert!(p.converged);
        for (a, b) in p.point.iter().zip([0.0, 1.0, 10.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn distance_examples() {
        let dm = DissipationMap::new(&Ph1);
        assert_abs_diff_eq!(dm.distance(&[0.3, -2.0]).value, 0.3, epsilon = 1e-12);
        assert_eq!(dm.distance(&[0.0, 5.0]).value, 0.0);
        assert_abs_diff_eq!(dm.distance(&[-1.5, 0.2]).value, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn distance_matches_closed_form_on_random_points() {
        for (sys, n) in [(&Ph1 as &dyn PortHamiltonian, 2), (&Ph2, 3)] {
            let dm = DissipationMap::new(sys);
            for x in rand_points(n, 1000, 7) {
                let d = dm.distance(&x);
                assert!(d.converged);
                assert!((d.value - x[0].abs()).abs() <= 1e-7, "{x:?}: {} vs {}", d.value, x[0].abs());
            }
        }
    }

    #[test]
    fn projection_is_idempotent_and_zero_iff_on_manifold() {
        let dm = DissipationMap::new(&Ph1);
        for x in rand_points(2, 200, 8) {
            let p = dm.project(&x);
            assert!(p.converged);
            let pp = dm.project(&p.point);
            assert!(norm2(&sub_vec(&pp.point, &p.point)) <= 1e-8);
            assert!(dm.distance(&p.point).value <= 1e-12);
            assert!(dm.f_norm(&p.point) <= 1e-9);
            let d = dm.distance(&x).value;
            assert_eq!(d == 0.0, dm.f_norm(&x) == 0.0);
        }
    }

    #[test]
    fn tangent_space_is_kernel_of_df() {
        let dm = DissipationMap::new(&Ph1);
        for x in rand_points(2, 50, 9) {
            let p = dm.project(&x).point;
            let basis = dm.kernel_basis(&p);
            assert_eq!(basis.len(), 1);
            // Angle between the computed kernel and e₂.
            assert!((basis[0][1].abs() - 1.0).abs() <= 1e-7);
            assert!(basis[0][0].abs() <= 1e-7);
        }
        let dm2 = DissipationMap::new(&Ph2);
        for x in rand_points(3, 50, 10) {
            let p = dm2.project(&x).point;
            let basis = dm2.kernel_basis(&p);
            assert_eq!(basis.len(), 2);
            // e₁ must be orthogonal to the kernel and the kernel must span {e₂, e₃}.
            for b in &basis {
                assert!(b[0].abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn linear_projection_uses_kernel_subspace() {
        // R^{1/2}Q = diag(1, 0)·Q with coupled Q makes M a tilted line.
        let q = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let sys = LinearPh::new(
            Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]),
            Matrix::from_diag(&[1.0, 0.0]),
            q,
            Matrix::from_rows(&[[1.0], [0.0]]),
        )
        .unwrap();
        let dm = DissipationMap::new(&sys);
        // M = {x : 2x₁ + x₂ = 0}; dist = |2x₁ + x₂| / √5.
        for x in rand_points(2, 100, 12) {
            let d = dm.distance(&x).value;
            let exact = (2.0 * x[0] + x[1]).abs() / 5f64.sqrt();
            assert_abs_diff_eq!(d, exact, epsilon = 1e-10);
        }
    }

    #[test]
    fn certify_builtins() {
        let dm = DissipationMap::new(&Ph1);
        let cert = dm.certify(&[(-3.0, 3.0), (-3.0, 3.0)], 2000, 3.0, 0).unwrap();
        assert_eq!(cert.s, 1);
        assert!(cert.kernel_dim_consistent);
        assert!(cert.sigma_min_nonzero_lower >= 1.0 - 1e-9);
        assert_eq!(cert.c, cert.sigma_min_nonzero_lower / 2.0);
        assert!(cert.bound_violations.is_empty());
        assert!(cert.violations_at(1.0).is_empty());
        assert!(cert.passed());

        let dm2 = DissipationMap::new(&Ph2);
        let cert = dm2.certify(&[(-3.0, 3.0); 3], 2000, 3.0, 1).unwrap();
        assert_eq!(cert.s, 2);
        assert!(cert.passed());
    }

    #[test]
    fn certify_linear_constant_matches_smallest_singular_value() {
        let sys = LinearPh::new(
            Matrix::from_rows(&[[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            Matrix::from_diag(&[1.0, 0.25, 0.0]),
            Matrix::from_diag(&[2.0, 1.0, 1.0]),
            Matrix::from_rows(&[[1.0], [0.0], [0.0]]),
        )
        .unwrap();
        let dm = DissipationMap::new(&sys);
        let cert = dm.certify(&[(-1.0, 1.0); 3], 500, 10.0, 3).unwrap();
        // R^{1/2}Q = diag(2, 0.5, 0).
        assert_abs_diff_eq!(cert.sigma_min_nonzero_lower, 0.5, epsilon = 1e-12);
        assert_eq!(cert.s, 1);
        assert!(cert.passed());
    }

    #[test]
    fn certify_conservative_system_fails_and_empty_shell_is_inconclusive() {
        let sys = LinearPh::new(
            Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]),
            Matrix::zeros(2, 2),
            Matrix::identity(2),
            Matrix::from_rows(&[[1.0], [0.0]]),
        )
        .unwrap();
        let cert = DissipationMap::new(&sys).certify(&[(-1.0, 1.0); 2], 100, 1.0, 0).unwrap();
        assert_eq!(cert.s, 2);
        assert!(!cert.passed());

        let dm = DissipationMap::new(&Ph1);
        let err = dm.certify(&[(5.0, 6.0), (-1.0, 1.0)], 50, 1.0, 0).unwrap_err();
        assert!(matches!(err, ManifoldError::Inconclusive { .. }));
        assert!(matches!(dm.certify(&[(0.0, 1.0)], 10, 1.0, 0), Err(ManifoldError::BoxDimension { .. })));
    }

    #[test]
    fn halton_points_are_seeded_and_in_box() {
        let b = [(-3.0, 3.0), (0.0, 1.0)];
        let a = halton_points(&b, 100, 5);
        assert_eq!(a, halton_points(&b, 100, 5));
        assert_ne!(a, halton_points(&b, 100, 6));
        assert!(a.iter().all(|p| p[0] >= -3.0 && p[0] <= 3.0 && p[1] >= 0.0 && p[1] <= 1.0));
    }
}
