//! Reference trajectories sampled at the run's nodes at `t_n = n dt`.

use std::fmt;
use std::sync::Arc;

use crate::dg::{Discretization, SolutionState};
use crate::flux::FluxModel;
use crate::mesh::FaceKind;
use crate::solver::{self, Integrator};
use crate::viscosity::{EvConfig, ViscosityModel};

use super::riemann::{Primitive, RiemannSolution};
use super::TrainingError;

/// Initial condition `x -> state`.
pub type IcFn = Arc<dyn Fn([f64; 2]) -> Vec<f64> + Send + Sync>;

/// Number of uniform refinements used by the overkill run (`h / 8`).
pub const OVERKILL_LEVELS: usize = 3;

/// How the reference solution of a problem is obtained.
#[derive(Clone)]
pub enum ReferenceKind {
    /// Periodic translation of the initial condition with constant velocity.
    Translation {
        ic: IcFn,
        beta: [f64; 2],
        lo: [f64; 2],
        hi: [f64; 2],
    },
    /// Exact one-dimensional Euler Riemann problem with interface at `x0`.
    Riemann {
        left: Primitive,
        right: Primitive,
        x0: f64,
        gamma: f64,
    },
    /// Solution on a mesh refined `levels` times with entropy viscosity.
    Overkill { ic: IcFn, ev: EvConfig, levels: usize },
}

impl fmt::Debug for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Translation { beta, .. } => write!(f, "Translation {{ beta: {beta:?} }}"),
            Self::Riemann { left, right, x0, .. } => write!(f, "Riemann {{ left: {left:?}, right: {right:?}, x0: {x0} }}"),
            Self::Overkill { ev, levels, .. } => write!(f, "Overkill {{ ev: {ev:?}, levels: {levels} }}"),
        }
    }
}

fn wrap(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if w <= 0.0 {
        return x;
    }
    lo + (x - lo).rem_euclid(w)
}

/// Evaluate an analytic reference at `x`, time `t`.
pub fn analytic_state(kind: &ReferenceKind, flux: &FluxModel, x: [f64; 2], t: f64) -> Option<Vec<f64>> {
    match kind {
        ReferenceKind::Translation { ic, beta, lo, hi } => {
            let y = [wrap(x[0] - beta[0] * t, lo[0], hi[0]), wrap(x[1] - beta[1] * t, lo[1], hi[1])];
            Some(ic(y))
        }
        ReferenceKind::Riemann { left, right, x0, gamma } => {
            let sol = RiemannSolution::solve(*left, *right, *gamma).ok()?;
            let s = sol.at(x[0], t, *x0);
            Some(flux.conserved(s.rho, [s.v, 0.0], s.p))
        }
        ReferenceKind::Overkill { .. } => None,
    }
}

/// Reference states `U_ref^0 .. U_ref^{n_steps}` at the nodes of `disc`.
pub fn build_reference(disc: &Discretization, kind: &ReferenceKind, dt: f64, n_steps: usize) -> Result<Vec<Vec<f64>>, TrainingError> {
    match kind {
        ReferenceKind::Translation { .. } => Ok((0..=n_steps)
            .map(|n| disc.interpolate(|x| analytic_state(kind, &disc.flux, x, n as f64 * dt).unwrap()))
            .collect()),
        ReferenceKind::Riemann { left, right, gamma, x0 } => {
            let sol = RiemannSolution::solve(*left, *right, *gamma)?;
            Ok((0..=n_steps)
                .map(|n| {
                    disc.interpolate(|x| {
                        let s = sol.at(x[0], n as f64 * dt, *x0);
                        disc.flux.conserved(s.rho, [s.v, 0.0], s.p)
                    })
                })
                .collect())
        }
        ReferenceKind::Overkill { ic, ev, levels } => overkill(disc, ic, ev, *levels, dt, n_steps),
    }
}

fn overkill(
    disc: &Discretization,
    ic: &IcFn,
    ev: &EvConfig,
    levels: usize,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<Vec<f64>>, TrainingError> {
    let mut mesh = (*disc.mesh).clone();
    for _ in 0..levels {
        mesh = mesh.refine()?;
    }
    let mut fine = Discretization::with_element(Arc::new(mesh), disc.el.clone(), disc.flux);
    if fine.mesh.faces.iter().any(|f| f.kind == FaceKind::Dirichlet) {
        fine.set_dirichlet(|x| ic(x));
    }
    let u0 = fine.interpolate(|x| ic(x));
    // each refinement halves h, so halving the step keeps the run's CFL number
    let sub = 1usize << levels;
    let h = dt / sub as f64;

    // where each coarse node lives on the fine mesh
    let mut probes = Vec::with_capacity(disc.mesh.n_cells() * disc.np());
    for c in 0..disc.mesh.n_cells() {
        for i in 0..disc.np() {
            let p = disc.sample_point(c, i);
            let hit = fine.mesh.locate(p).ok_or(TrainingError::Reference(format!("node {p:?} not found on the fine mesh")))?;
            probes.push((c, i, hit));
        }
    }
    let sample = |u: &[f64]| {
        let mut out = vec![0.0; disc.n_dofs()];
        for &(c, i, (fc, r)) in &probes {
            for v in 0..disc.n_vars() {
                out[disc.idx(c, v, i)] = fine.eval_at(u, fc, v, r);
            }
        }
        out
    };

    let model = ViscosityModel::Entropy(*ev);
    let integ = Integrator::default_for(disc.k());
    let mut state = SolutionState::new(u0);
    let mut out = vec![disc.interpolate(|x| ic(x))];
    let mut count = 0;
    for _ in 0..n_steps {
        for _ in 0..sub {
            state = solver::step(&fine, &model, &state, h, integ, count)?.0;
            count += 1;
        }
        out.push(sample(&state.u));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_1d, BoundaryTag};

    #[test]
    fn translation_matches_shifted_ic() {
        let m = build_uniform_1d(0.0, 1.0, 10, true).unwrap();
        let d = Discretization::new(Arc::new(m), 2, FluxModel::Advection1d { beta: 1.0 }).unwrap();
        let ic: IcFn = Arc::new(|x| vec![(2.0 * std::f64::consts::PI * x[0]).sin()]);
        let kind = ReferenceKind::Translation {
            ic: ic.clone(),
            beta: [1.0, 0.0],
            lo: [0.0, 0.0],
            hi: [1.0, 0.0],
        };
        let r = build_reference(&d, &kind, 0.05, 5).unwrap();
        assert_eq!(r.len(), 6);
        let want = d.interpolate(|x| ic([x[0] - 0.25, 0.0]));
        for (a, b) in r[5].iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sod_reference_contains_star_density() {
        let m = build_uniform_1d(0.0, 1.0, 100, false)
            .unwrap()
            .retag(|_, _| BoundaryTag::Dirichlet)
            .unwrap();
        let d = Discretization::new(Arc::new(m), 1, FluxModel::Euler1d { gamma: 1.4 }).unwrap();
        let kind = ReferenceKind::Riemann {
            left: Primitive::new(1.0, 0.0, 1.0),
            right: Primitive::new(0.125, 0.0, 0.1),
            x0: 0.5,
            gamma: 1.4,
        };
        let r = build_reference(&d, &kind, 0.1, 2).unwrap();
        // x = 0.75 sits between the contact and the shock at t = 0.2
        let c = 75;
        let rho = r[2][d.idx(c, 0, 0)];
        assert!((rho - 0.26557).abs() < 1e-4);
        assert_eq!(r[0][d.idx(10, 0, 0)], 1.0);
    }

    #[test]
    fn overkill_tracks_smooth_translation() {
        let m = build_uniform_1d(0.0, 1.0, 8, true).unwrap();
        let d = Discretization::new(Arc::new(m), 2, FluxModel::Advection1d { beta: 1.0 }).unwrap();
        let ic: IcFn = Arc::new(|x| vec![(2.0 * std::f64::consts::PI * x[0]).sin()]);
        let kind = ReferenceKind::Overkill {
            ic: ic.clone(),
            ev: EvConfig::default(),
            levels: 2,
        };
        let r = build_reference(&d, &kind, 0.01, 10).unwrap();
        let want = d.interpolate(|x| ic([x[0] - 0.1, 0.0]));
        let err = r[10].iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
    }
}
