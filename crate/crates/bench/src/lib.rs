//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use dgvisc_core::dg::Discretization;
use dgvisc_core::flux::FluxModel;
use dgvisc_core::mesh::{build_structured_tri_2d, build_uniform_1d};
use dgvisc_core::training::{ReferenceKind, TrainProblem, TrainingError};
use dgvisc_core::viscosity::EvConfig;

pub fn sine(x: [f64; 2]) -> Vec<f64> {
    vec![(2.0 * PI * x[0]).sin() + 0.5 * (2.0 * PI * x[1]).cos()]
}

/// Periodic Burgers on `n` cells of degree `k`.
pub fn burgers_1d(n: usize, k: usize) -> Discretization {
    let mesh = build_uniform_1d(0.0, 1.0, n, true).expect("valid mesh");
    Discretization::new(Arc::new(mesh), k, FluxModel::Burgers1d).expect("valid discretization")
}

/// Periodic 2D Burgers on an `n` x `n` triangulated square.
pub fn burgers_2d(n: usize, k: usize) -> Discretization {
    let mesh = build_structured_tri_2d([0.0; 2], [1.0; 2], n, n, true).expect("valid mesh");
    Discretization::new(Arc::new(mesh), k, FluxModel::Burgers2d).expect("valid discretization")
}

/// A small 1D Burgers training problem with an overkill reference.
pub fn training_problem(n_steps: usize) -> Result<TrainProblem, TrainingError> {
    let disc = Arc::new(burgers_1d(20, 2));
    let u0 = disc.interpolate(sine);
    let kind = ReferenceKind::Overkill {
        ic: Arc::new(sine),
        ev: EvConfig { c_k: 3.0, c_max: 1.0, eps_den: 1e-12 },
        levels: 2,
    };
    TrainProblem::new("bench-burgers", disc, u0, &kind, 0.4, 0.5, n_steps)
}
