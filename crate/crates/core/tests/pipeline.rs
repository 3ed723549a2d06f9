use std::sync::Arc;

use phturnpike::deriv::{self, FnMap};
use phturnpike::diagnose::{self, horizon_sweep};
use phturnpike::linalg::{self, Matrix};
use phturnpike::manifold::DissipationMap;
use phturnpike::phsys::{LinearPh, Ph1, Ph2, PortHamiltonian};
use phturnpike::solver::{self, SolveStatus, SolverOptions};
use phturnpike::transcribe::{self, OcpSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ph1_ocp() -> OcpSpec {
    OcpSpec {
        system: Arc::new(Ph1),
        x0: vec![2.0, 1.0],
        xt: vec![1.0, 1.0],
        horizon: 10.0,
        intervals: 100,
        u_lb: vec![-50.0],
        u_ub: vec![50.0],
        x_lb: None,
        x_ub: None,
    }
}

fn random_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect()
}

#[test]
fn builtin_derivatives_match_central_differences() {
    let systems: [&dyn PortHamiltonian; 2] = [&Ph1, &Ph2];
    for sys in systems {
        let n = sys.state_dim();
        let dm = DissipationMap::new(sys);
        let f = FnMap::new(n, n, |x: &[f64]| dm.eval_f(x).unwrap());
        let h = FnMap::new(n, 1, |x: &[f64]| vec![sys.hamiltonian(x)]);
        for x in random_points(n, 100, 11) {
            let analytic = sys.dissipation_jacobian(&x).unwrap();
            let fd = deriv::central_difference_jacobian(&f, &x).unwrap();
            assert!(deriv::relative_discrepancy(&fd, &analytic) <= 1e-6, "{} Df at {x:?}", sys.name());
            let grad = sys.hamiltonian_gradient(&x).unwrap();
            let fd_grad = deriv::gradient(&h, &x).unwrap();
            let a = Matrix::from_row_major(1, n, grad);
            let b = Matrix::from_row_major(1, n, fd_grad);
            assert!(deriv::relative_discrepancy(&b, &a) <= 1e-6, "{} ∇H at {x:?}", sys.name());
        }
    }
}

#[test]
fn distance_is_first_coordinate_magnitude() {
    for (sys, n) in [(&Ph1 as &dyn PortHamiltonian, 2), (&Ph2, 3)] {
        let dm = DissipationMap::new(sys);
        for x in random_points(n, 1000, 5) {
            let d = dm.distance(&x);
            assert!(d.converged);
            assert!((d.value - x[0].abs()).abs() <= 1e-7, "{} at {x:?}: {}", sys.name(), d.value);
        }
    }
}

#[test]
fn ph1_solve_then_diagnose() {
    let ocp = ph1_ocp();
    let nlp = transcribe::transcribe(ocp.clone()).unwrap();
    let sol = solver::solve(&nlp, &nlp.initial_guess(), &SolverOptions::default());
    assert_eq!(sol.status, SolveStatus::Converged);
    assert!(sol.eq_violation <= 1e-6);

    let traj = nlp.decode(&sol.w_star).unwrap();
    assert_eq!(traj.x[0], ocp.x0);
    assert!(linalg::norm_inf(&linalg::sub_vec(&traj.x[100], &ocp.xt)) <= 1e-6);

    let energy = diagnose::energy_balance(&traj, &Ph1).unwrap();
    assert!((energy.supplied - sol.cost).abs() <= 1e-10);
    assert!(sol.cost >= -3.0 - 1e-6);
    assert!(energy.dissipated >= 0.0);

    let dm = DissipationMap::new(&Ph1);
    let measures: Vec<f64> =
        [0.05, 0.1, 0.2].iter().map(|&eps| diagnose::turnpike_measure(&traj, &dm, eps).unwrap().measure_outside).collect();
    assert!(measures[0] >= measures[1] && measures[1] >= measures[2]);

    let cert = dm.certify(&[(-3.0, 3.0); 2], 2000, 9.0, 0).unwrap();
    let report = diagnose::dissipativity_check(&traj, &dm, cert.c, 1e-4).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn linear_sweep_bounded_with_subspace_oracle() {
    // f = R^{1/2}Qx = (x₁, 0), so M = {x₁ = 0} and dist = |x₁|.
    let sys = LinearPh::new(
        Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]),
        Matrix::from_diag(&[1.0, 0.0]),
        Matrix::identity(2),
        Matrix::from_rows(&[[0.0], [1.0]]),
    )
    .unwrap();
    let system: Arc<dyn PortHamiltonian> = Arc::new(sys);
    let template = OcpSpec {
        system: system.clone(),
        x0: vec![1.0, 0.5],
        xt: vec![0.5, 1.0],
        horizon: 5.0,
        intervals: 50,
        u_lb: vec![-10.0],
        u_ub: vec![10.0],
        x_lb: None,
        x_ub: None,
    };
    let report = horizon_sweep(&template, &[5.0, 10.0, 20.0], 0.1, &SolverOptions::default()).unwrap();
    assert!(report.all_converged, "{report:?}");
    assert!(report.bounded, "{report:?}");

    let dm = DissipationMap::new(system.as_ref());
    for x in random_points(2, 200, 9) {
        assert!((dm.distance(&x).value - x[0].abs()).abs() <= 1e-9);
    }
}
