//! Minimal-energy optimal control of port-Hamiltonian descriptor systems and
//! turnpike diagnostics with respect to the dissipation manifold
//! `M = {x : R(x)^{1/2} η(x) = 0}`.

pub mod deriv;
pub mod diagnose;
pub mod linalg;
pub mod manifold;
pub mod nlp;
pub mod phsys;
pub mod solver;
pub mod transcribe;
