//! Initial conditions and the test-case registry.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dg::Discretization;
use crate::flux::{FluxModel, GAMMA};
use crate::mesh::{build_structured_tri_2d, build_uniform_1d, BoundaryTag, Mesh};
use crate::training::{IcFn, Primitive, ReferenceKind};
use crate::viscosity::EvConfig;

use super::ExperimentError;

fn ind(x: f64, a: f64, b: f64) -> f64 {
    if x >= a && x <= b {
        1.0
    } else {
        0.0
    }
}

/// A closed-form initial state. Euler variants store primitive values and
/// convert to conserved variables at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `mean + amp sin(2 pi freq x)`.
    ShiftedSine { mean: f64, amp: f64, freq: f64 },
    /// `mean + amp sin(2 pi freq x) sin(2 pi freq y)`.
    ShiftedSine2d { mean: f64, amp: f64, freq: f64 },
    /// `w/2 sin(w pi x)`.
    Sine { omega: f64 },
    /// Indicator of `[1/4, 3/4]`.
    Box,
    /// `10 (1/2 - |x - 1/2|)`.
    Hat,
    /// `exp(-100 (x - 1/2)^2)`.
    Gaussian,
    /// `w1 1[0,1/5] + w2 1[1/5,2/5] + w3 1[3/5,1]`.
    WeightedBoxes { w: [f64; 3] },
    /// `sin(w pi x) 1[1/4,1/2] + sin(2 w pi x) 1[1/2,3/4]`.
    SinePatches { omega: f64 },
    /// `-sin(6 pi x) 1[1/6,5/6]`.
    NegSine,
    /// `w1 (x-1/6) 1[1/6,1/3] + w2 (x-1/2) 1[1/3,2/3] + w3 (x-5/6) 1[2/3,5/6]`.
    Ramps { w: [f64; 3] },
    /// `(16 |x - 1/2| - 2) 1[1/4,3/4]`.
    VShape,
    /// Piecewise profile with two ramps, a plateau and a negative step.
    Piecewise,
    /// `w1 w2/2 sin(w1 pi x) sin(w2 pi y)`.
    Sine2d { w1: f64, w2: f64 },
    Box2d,
    Gaussian2d,
    WeightedBoxes2d { w: [f64; 3] },
    /// Sine patches on the diagonal squares, oscillating in `x`.
    SinePatches2d { omega: f64 },
    /// `(w1 x + w2 y - 1/4)` on `[1/4,3/4]^2`.
    Plane2d { w1: f64, w2: f64 },
    /// 2 on `(1/5,4/5)^2`, 1 on `(1,3/2)^2`, 0 elsewhere.
    TwoBoxes,
    /// `7 pi/2` inside the unit disc, `pi/4` outside.
    Kpp,
    Constant { values: Vec<f64> },
    /// Two Euler states separated at `x0`.
    Riemann1d { left: Primitive, right: Primitive, x0: f64 },
    ShuOsher,
    /// Four Euler quadrant states `(rho, v1, v2, p)` ordered `++, -+, --, +-`.
    Quadrants { states: [[f64; 4]; 4] },
}

pub const SOD_LEFT: Primitive = Primitive::new(1.0, 0.0, 1.0);
pub const SOD_RIGHT: Primitive = Primitive::new(0.125, 0.0, 0.1);
pub const RIEMANN12: [[f64; 4]; 4] = [
    [0.5313, 0.0, 0.0, 0.4],
    [1.0, 0.7276, 0.0, 1.0],
    [0.8, 0.0, 0.0, 1.0],
    [1.0, 0.0, 0.7276, 1.0],
];

impl InitialCondition {
    pub fn sod() -> Self {
        Self::Riemann1d {
            left: SOD_LEFT,
            right: SOD_RIGHT,
            x0: 0.5,
        }
    }

    /// Scalar value of the non-Euler profiles.
    fn scalar(&self, p: [f64; 2]) -> Option<f64> {
        let [x, y] = p;
        let s = |w: f64, t: f64| (w * PI * t).sin();
        Some(match *self {
            Self::ShiftedSine { mean, amp, freq } => mean + amp * (2.0 * PI * freq * x).sin(),
            Self::ShiftedSine2d { mean, amp, freq } => mean + amp * (2.0 * PI * freq * x).sin() * (2.0 * PI * freq * y).sin(),
            Self::Sine { omega } => omega / 2.0 * s(omega, x),
            Self::Box => ind(x, 0.25, 0.75),
            Self::Hat => 10.0 * (0.5 - (x - 0.5).abs()),
            Self::Gaussian => (-100.0 * (x - 0.5).powi(2)).exp(),
            Self::WeightedBoxes { w } => w[0] * ind(x, 0.0, 0.2) + w[1] * ind(x, 0.2, 0.4) + w[2] * ind(x, 0.6, 1.0),
            Self::SinePatches { omega } => s(omega, x) * ind(x, 0.25, 0.5) + s(2.0 * omega, x) * ind(x, 0.5, 0.75),
            Self::NegSine => -s(6.0, x) * ind(x, 1.0 / 6.0, 5.0 / 6.0),
            Self::Ramps { w } => {
                w[0] * (x - 1.0 / 6.0) * ind(x, 1.0 / 6.0, 1.0 / 3.0)
                    + w[1] * (x - 0.5) * ind(x, 1.0 / 3.0, 2.0 / 3.0)
                    + w[2] * (x - 5.0 / 6.0) * ind(x, 2.0 / 3.0, 5.0 / 6.0)
            }
            Self::VShape => (16.0 * (x - 0.5).abs() - 2.0) * ind(x, 0.25, 0.75),
            Self::Piecewise => {
                if x <= 0.0 {
                    0.0
                } else if x <= 1.0 / 6.0 {
                    6.0 * x
                } else if x <= 1.0 / 3.0 {
                    6.0 * (x - 1.0 / 3.0)
                } else if x <= 0.5 {
                    2.0
                } else if x <= 0.75 {
                    -0.5
                } else {
                    0.0
                }
            }
            Self::Sine2d { w1, w2 } => w1 * w2 / 2.0 * s(w1, x) * s(w2, y),
            Self::Box2d => ind(x, 0.25, 0.75) * ind(y, 0.25, 0.75),
            Self::Gaussian2d => (-100.0 * ((x - 0.5).powi(2) + (y - 0.5).powi(2))).exp(),
            Self::WeightedBoxes2d { w } => {
                w[0] * ind(x, 0.0, 0.2) * ind(y, 0.6, 1.0) + w[1] * ind(x, 0.2, 0.4) * ind(y, 0.2, 0.4) + w[2] * ind(x, 0.6, 1.0) * ind(y, 0.0, 0.2)
            }
            Self::SinePatches2d { omega } => {
                s(omega, x) * ind(x, 0.25, 0.5) * ind(y, 0.25, 0.5) + s(2.0 * omega, x) * ind(x, 0.5, 0.75) * ind(y, 0.5, 0.75)
            }
            Self::Plane2d { w1, w2 } => (w1 * x + w2 * y - 0.25) * ind(x, 0.25, 0.75) * ind(y, 0.25, 0.75),
            Self::TwoBoxes => {
                let open = |t: f64, a: f64, b: f64| t > a && t < b;
                if open(x, 0.2, 0.8) && open(y, 0.2, 0.8) {
                    2.0
                } else if open(x, 1.0, 1.5) && open(y, 1.0, 1.5) {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Kpp => {
                if x * x + y * y < 1.0 {
                    3.5 * PI
                } else {
                    0.25 * PI
                }
            }
            _ => return None,
        })
    }

    /// State at `p` for `flux`.
    pub fn eval(&self, flux: &FluxModel, p: [f64; 2]) -> Vec<f64> {
        if let Some(v) = self.scalar(p) {
            return vec![v; flux.n_vars()];
        }
        match self {
            Self::Constant { values } => values.clone(),
            Self::Riemann1d { left, right, x0 } => {
                let s = if p[0] <= *x0 { left } else { right };
                flux.conserved(s.rho, [s.v, 0.0], s.p)
            }
            Self::ShuOsher => {
                if p[0] <= -4.0 {
                    flux.conserved(3.857143, [2.629369, 0.0], 10.333333)
                } else {
                    flux.conserved(1.0 + 0.5 * (5.0 * p[0]).sin(), [0.0, 0.0], 1.0)
                }
            }
            Self::Quadrants { states } => {
                let q = match (p[0] > 0.0, p[1] > 0.0) {
                    (true, true) => 0,
                    (false, true) => 1,
                    (false, false) => 2,
                    (true, false) => 3,
                };
                let [rho, v1, v2, pr] = states[q];
                flux.conserved(rho, [v1, v2], pr)
            }
            _ => unreachable!("scalar profiles are handled above"),
        }
    }

    /// Shareable closure for reference builders.
    pub fn ic_fn(&self, flux: FluxModel) -> IcFn {
        let ic = self.clone();
        Arc::new(move |p| ic.eval(&flux, p))
    }
}

/// Registry id and formula of every training profile, 1D then 2D.
pub fn table_ics() -> Vec<(String, InitialCondition)> {
    use InitialCondition as I;
    let mut out: Vec<(String, I)> = Vec::new();
    for w in [1.0, 3.0, 5.0] {
        out.push((format!("sine-w{w}"), I::Sine { omega: w }));
    }
    out.push(("box".into(), I::Box));
    out.push(("hat".into(), I::Hat));
    out.push(("gaussian".into(), I::Gaussian));
    out.push(("weighted-boxes".into(), I::WeightedBoxes { w: [-4.0, 6.0, 10.0] }));
    for w in [4.0, 8.0] {
        out.push((format!("sine-patches-w{w}"), I::SinePatches { omega: w }));
    }
    out.push(("neg-sine".into(), I::NegSine));
    out.push(("ramps".into(), I::Ramps { w: [2.0, 6.0, 10.0] }));
    out.push(("v-shape".into(), I::VShape));
    for w1 in [1.0, 3.0, 5.0] {
        for w2 in [1.0, 3.0, 5.0] {
            out.push((format!("2d-sine-w{w1}-{w2}"), I::Sine2d { w1, w2 }));
        }
    }
    out.push(("2d-box".into(), I::Box2d));
    out.push(("2d-gaussian".into(), I::Gaussian2d));
    out.push(("2d-weighted-boxes".into(), I::WeightedBoxes2d { w: [-4.0, 6.0, 10.0] }));
    for w in [2.5, 4.0, 8.0] {
        out.push((format!("2d-sine-patches-w{w}"), I::SinePatches2d { omega: w }));
    }
    for w1 in [-1.0, 0.0, 1.0, 4.0] {
        for w2 in [-1.0, 0.0, 1.0, 4.0] {
            out.push((format!("2d-plane-w{w1}-{w2}"), I::Plane2d { w1, w2 }));
        }
    }
    out
}

/// Look up a named profile: the training table plus the test-case states.
pub fn ic_by_id(id: &str) -> Result<InitialCondition, ExperimentError> {
    let extra = [
        ("piecewise", InitialCondition::Piecewise),
        ("sod", InitialCondition::sod()),
        ("shu-osher", InitialCondition::ShuOsher),
        ("two-boxes", InitialCondition::TwoBoxes),
        ("kpp", InitialCondition::Kpp),
        ("riemann12", InitialCondition::Quadrants { states: RIEMANN12 }),
    ];
    if let Some((_, ic)) = extra.iter().find(|(n, _)| *n == id) {
        return Ok(ic.clone());
    }
    let table = table_ics();
    table.iter().find(|(n, _)| n == id).map(|(_, ic)| ic.clone()).ok_or_else(|| {
        let mut known: Vec<String> = extra.iter().map(|(n, _)| n.to_string()).collect();
        known.extend(table.into_iter().map(|(n, _)| n));
        ExperimentError::Registry(format!("unknown initial condition '{id}'; known: {}", known.join(", ")))
    })
}

/// How the boundary of a test case is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySpec {
    Periodic,
    Dirichlet,
    /// Dirichlet on the left end, Neumann on the right.
    DirichletNeumann,
}

/// Per-degree defaults: cells per direction and CFL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseDefault {
    pub k: usize,
    pub n: usize,
    pub cfl: f64,
}

/// Where the error metrics of a test case come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    /// Exact translation of the initial profile.
    Translation,
    /// Exact Euler Riemann solution.
    Riemann,
    /// Refined entropy-viscosity run.
    Overkill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: u32,
    pub name: String,
    pub flux: FluxModel,
    pub ic: InitialCondition,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub boundary: BoundarySpec,
    pub t_final: f64,
    pub defaults: Vec<CaseDefault>,
    /// Tuned entropy-viscosity constants.
    pub ev: EvConfig,
    pub reference: ReferenceSource,
}

fn ev(c_k: f64, c_max: f64) -> EvConfig {
    EvConfig {
        c_k,
        c_max,
        ..EvConfig::default()
    }
}

fn triple(n: [usize; 3], cfl: [f64; 3]) -> Vec<CaseDefault> {
    [1, 3, 5].iter().enumerate().map(|(i, &k)| CaseDefault { k, n: n[i], cfl: cfl[i] }).collect()
}

/// Test cases 1 to 9.
pub fn test_cases() -> Vec<TestCase> {
    let unit = ([0.0, 0.0], [1.0, 0.0]);
    let conv = |k| CaseDefault { k, n: 10, cfl: 0.05 };
    vec![
        TestCase {
            id: 1,
            name: "advection-1d-smooth".into(),
            flux: FluxModel::Advection1d { beta: 1.0 },
            ic: InitialCondition::ShiftedSine { mean: 0.5, amp: 1.0, freq: 1.0 },
            lo: unit.0,
            hi: unit.1,
            boundary: BoundarySpec::Periodic,
            t_final: 0.4,
            defaults: (1..=4).map(conv).collect(),
            ev: ev(1.0, 0.5),
            reference: ReferenceSource::Translation,
        },
        TestCase {
            id: 2,
            name: "advection-2d-smooth".into(),
            flux: FluxModel::Advection2d { beta: [1.0, 1.0] },
            ic: InitialCondition::ShiftedSine2d { mean: 0.5, amp: 1.0, freq: 1.0 },
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
            boundary: BoundarySpec::Periodic,
            t_final: 0.4,
            defaults: (1..=3).map(conv).collect(),
            ev: ev(1.0, 0.5),
            reference: ReferenceSource::Translation,
        },
        TestCase {
            id: 3,
            name: "advection-1d-piecewise".into(),
            flux: FluxModel::Advection1d { beta: 1.0 },
            ic: InitialCondition::Piecewise,
            lo: unit.0,
            hi: unit.1,
            boundary: BoundarySpec::Periodic,
            t_final: 0.4,
            defaults: triple([60, 30, 15], [0.2, 0.5, 0.75]),
            ev: ev(0.6, 0.3),
            reference: ReferenceSource::Translation,
        },
        TestCase {
            id: 4,
            name: "burgers-1d-piecewise".into(),
            flux: FluxModel::Burgers1d,
            ic: InitialCondition::Piecewise,
            lo: unit.0,
            hi: unit.1,
            boundary: BoundarySpec::Periodic,
            t_final: 0.4,
            defaults: triple([60, 30, 15], [0.15, 0.4, 0.4]),
            ev: ev(3.0, 1.0),
            reference: ReferenceSource::Overkill,
        },
        TestCase {
            id: 5,
            name: "sod".into(),
            flux: FluxModel::Euler1d { gamma: GAMMA },
            ic: InitialCondition::sod(),
            lo: unit.0,
            hi: unit.1,
            boundary: BoundarySpec::Dirichlet,
            t_final: 0.2,
            defaults: triple([60, 30, 15], [0.27, 0.61, 0.88]),
            ev: ev(1.0, 0.5),
            reference: ReferenceSource::Riemann,
        },
        TestCase {
            id: 6,
            name: "shu-osher".into(),
            flux: FluxModel::Euler1d { gamma: GAMMA },
            ic: InitialCondition::ShuOsher,
            lo: [-5.0, 0.0],
            hi: [5.0, 0.0],
            boundary: BoundarySpec::DirichletNeumann,
            t_final: 1.8,
            defaults: triple([1500, 750, 500], [0.12, 0.3, 0.4]),
            ev: ev(1.0, 0.5),
            reference: ReferenceSource::Overkill,
        },
        TestCase {
            id: 7,
            name: "advection-2d-boxes".into(),
            flux: FluxModel::Advection2d { beta: [1.0, 1.0] },
            ic: InitialCondition::TwoBoxes,
            lo: [0.0, 0.0],
            hi: [2.0, 2.0],
            boundary: BoundarySpec::Periodic,
            t_final: 0.25,
            defaults: triple([60, 30, 15], [0.075, 0.3, 0.32]),
            ev: ev(1.0, 0.5),
            reference: ReferenceSource::Translation,
        },
        TestCase {
            id: 8,
            name: "kpp".into(),
            flux: FluxModel::Kpp2d,
            ic: InitialCondition::Kpp,
            lo: [-2.0, -2.0],
            hi: [2.0, 2.0],
            boundary: BoundarySpec::Periodic,
            t_final: 1.0,
            defaults: triple([60, 30, 15], [0.11, 0.4, 0.48]),
            ev: ev(1.0, 0.5),
            reference: ReferenceSource::Overkill,
        },
        TestCase {
            id: 9,
            name: "riemann-2d-config12".into(),
            flux: FluxModel::Euler2d { gamma: GAMMA },
            ic: InitialCondition::Quadrants { states: RIEMANN12 },
            lo: [-1.5, -1.5],
            hi: [1.5, 1.5],
            boundary: BoundarySpec::Periodic,
            t_final: 0.25,
            defaults: triple([60, 30, 15], [0.05, 0.18, 0.21]),
            ev: ev(1.0, 0.5),
            reference: ReferenceSource::Overkill,
        },
    ]
}

/// Test case by id; the error lists the registry.
pub fn test_case(id: u32) -> Result<TestCase, ExperimentError> {
    let all = test_cases();
    let ids: Vec<String> = all.iter().map(|c| format!("{} ({})", c.id, c.name)).collect();
    all.into_iter()
        .find(|c| c.id == id)
        .ok_or_else(|| ExperimentError::Registry(format!("unknown test case {id}; known: {}", ids.join(", "))))
}

impl TestCase {
    pub fn dim(&self) -> usize {
        self.flux.dim()
    }

    /// Defaults for degree `k`; falls back to the entry of nearest degree.
    pub fn defaults_for(&self, k: usize) -> CaseDefault {
        let d = *self.defaults.iter().min_by_key(|d| d.k.abs_diff(k)).expect("every case has defaults");
        CaseDefault { k, ..d }
    }

    /// Mesh with `n` cells per direction and the case's boundary tags.
    pub fn mesh(&self, n: usize) -> Result<Mesh, ExperimentError> {
        let periodic = self.boundary == BoundarySpec::Periodic;
        let mesh = if self.dim() == 1 {
            build_uniform_1d(self.lo[0], self.hi[0], n, periodic)?
        } else {
            build_structured_tri_2d(self.lo, self.hi, n, n, periodic)?
        };
        Ok(match self.boundary {
            BoundarySpec::DirichletNeumann => {
                let left = self.lo[0];
                mesh.retag(move |a, _| if a[0] <= left { BoundaryTag::Dirichlet } else { BoundaryTag::Neumann })?
            }
            _ => mesh,
        })
    }

    /// Discretization on `mesh` with Dirichlet data from the initial state.
    pub fn discretize(&self, mesh: Mesh, k: usize) -> Result<Discretization, ExperimentError> {
        let mut disc = Discretization::new(Arc::new(mesh), k, self.flux)?;
        if self.boundary != BoundarySpec::Periodic {
            let (ic, flux) = (self.ic.clone(), self.flux);
            disc.set_dirichlet(move |p| ic.eval(&flux, p));
        }
        Ok(disc)
    }

    pub fn initial_state(&self, disc: &Discretization) -> Vec<f64> {
        disc.interpolate(|p| self.ic.eval(&self.flux, p))
    }

    /// Reference builder for this case with `levels` refinements when an
    /// overkill run is needed.
    pub fn reference_kind(&self, levels: usize) -> ReferenceKind {
        match (self.reference, &self.ic) {
            (ReferenceSource::Translation, _) => {
                let beta = match self.flux {
                    FluxModel::Advection1d { beta } => [beta, 0.0],
                    FluxModel::Advection2d { beta } => beta,
                    _ => [0.0, 0.0],
                };
                ReferenceKind::Translation {
                    ic: self.ic.ic_fn(self.flux),
                    beta,
                    lo: self.lo,
                    hi: self.hi,
                }
            }
            (ReferenceSource::Riemann, InitialCondition::Riemann1d { left, right, x0 }) => ReferenceKind::Riemann {
                left: *left,
                right: *right,
                x0: *x0,
                gamma: GAMMA,
            },
            _ => ReferenceKind::Overkill {
                ic: self.ic.ic_fn(self.flux),
                ev: self.ev,
                levels,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // hand-written formulas, independent of the enum above
    fn oracle(id: &str, x: f64, y: f64) -> Option<f64> {
        let i = |t: f64, a: f64, b: f64| if (a..=b).contains(&t) { 1.0 } else { 0.0 };
        let sn = |t: f64| t.sin();
        Some(match id {
            "sine-w3" => 1.5 * sn(3.0 * PI * x),
            "box" => i(x, 0.25, 0.75),
            "hat" => 10.0 * (0.5 - (x - 0.5).abs()),
            "gaussian" => (-100.0 * (x - 0.5) * (x - 0.5)).exp(),
            "weighted-boxes" => -4.0 * i(x, 0.0, 0.2) + 6.0 * i(x, 0.2, 0.4) + 10.0 * i(x, 0.6, 1.0),
            "sine-patches-w8" => sn(8.0 * PI * x) * i(x, 0.25, 0.5) + sn(16.0 * PI * x) * i(x, 0.5, 0.75),
            "neg-sine" => -sn(6.0 * PI * x) * i(x, 1.0 / 6.0, 5.0 / 6.0),
            "ramps" => 2.0 * (x - 1.0 / 6.0) * i(x, 1.0 / 6.0, 1.0 / 3.0) + 6.0 * (x - 0.5) * i(x, 1.0 / 3.0, 2.0 / 3.0) + 10.0 * (x - 5.0 / 6.0) * i(x, 2.0 / 3.0, 5.0 / 6.0),
            "v-shape" => (16.0 * (x - 0.5).abs() - 2.0) * i(x, 0.25, 0.75),
            "2d-sine-w3-5" => 7.5 * sn(3.0 * PI * x) * sn(5.0 * PI * y),
            "2d-box" => i(x, 0.25, 0.75) * i(y, 0.25, 0.75),
            "2d-gaussian" => (-100.0 * ((x - 0.5).powi(2) + (y - 0.5).powi(2))).exp(),
            "2d-weighted-boxes" => -4.0 * i(x, 0.0, 0.2) * i(y, 0.6, 1.0) + 6.0 * i(x, 0.2, 0.4) * i(y, 0.2, 0.4) + 10.0 * i(x, 0.6, 1.0) * i(y, 0.0, 0.2),
            "2d-sine-patches-w2.5" => sn(2.5 * PI * x) * i(x, 0.25, 0.5) * i(y, 0.25, 0.5) + sn(5.0 * PI * x) * i(x, 0.5, 0.75) * i(y, 0.5, 0.75),
            "2d-plane-w4--1" => (4.0 * x - y - 0.25) * i(x, 0.25, 0.75) * i(y, 0.25, 0.75),
            "piecewise" => match x {
                x if x <= 1.0 / 6.0 => 6.0 * x,
                x if x <= 1.0 / 3.0 => 6.0 * x - 2.0,
                x if x <= 0.5 => 2.0,
                x if x <= 0.75 => -0.5,
                _ => 0.0,
            },
            _ => return None,
        })
    }

    #[test]
    fn table_profiles_match_hand_formulas() {
        let ids = [
            "sine-w3",
            "box",
            "hat",
            "gaussian",
            "weighted-boxes",
            "sine-patches-w8",
            "neg-sine",
            "ramps",
            "v-shape",
            "2d-sine-w3-5",
            "2d-box",
            "2d-gaussian",
            "2d-weighted-boxes",
            "2d-sine-patches-w2.5",
            "2d-plane-w4--1",
            "piecewise",
        ];
        let flux = FluxModel::Burgers1d;
        for id in ids {
            let ic = ic_by_id(id).unwrap();
            let two_d = id.starts_with("2d");
            for s in 0..10 {
                // off-grid samples that avoid the indicator edges
                let x = 0.013 + 0.0977 * s as f64;
                let y = if two_d { 0.91 - 0.0891 * s as f64 } else { 0.0 };
                let want = oracle(id, x, y).unwrap();
                let got = ic.eval(&flux, [x, y])[0];
                assert!((got - want).abs() < 1e-12, "{id} at ({x}, {y}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn every_table_id_resolves() {
        let t = table_ics();
        assert_eq!(t.iter().filter(|(n, _)| !n.starts_with("2d")).count(), 12);
        for (id, ic) in &t {
            assert_eq!(&ic_by_id(id).unwrap(), ic);
        }
        let err = ic_by_id("nope").unwrap_err().to_string();
        assert!(err.contains("piecewise") && err.contains("2d-box"), "{err}");
    }

    #[test]
    fn every_case_resolves_and_builds() {
        for id in 1..=9 {
            let c = test_case(id).unwrap();
            assert_eq!(c.id, id);
            let d = c.defaults_for(1);
            assert!(d.cfl > 0.0);
            let m = c.mesh(if c.dim() == 1 { 6 } else { 3 }).unwrap();
            let disc = c.discretize(m, 1).unwrap();
            let u0 = c.initial_state(&disc);
            assert!(u0.iter().all(|x| x.is_finite()));
        }
        assert!(test_case(10).unwrap_err().to_string().contains("9 (riemann-2d-config12)"));
    }

    #[test]
    fn published_case_defaults_are_stored() {
        let c = test_case(3).unwrap();
        let cfl: Vec<f64> = [1, 3, 5].iter().map(|&k| c.defaults_for(k).cfl).collect();
        assert_eq!(cfl, vec![0.2, 0.5, 0.75]);
        assert_eq!(test_case(6).unwrap().defaults_for(1).n, 1500);
        // degree 2 borrows the nearest stored entry
        assert_eq!(c.defaults_for(2).n, 60);
    }

    #[test]
    fn euler_states_are_converted() {
        let f = FluxModel::Euler1d { gamma: GAMMA };
        let l = InitialCondition::sod().eval(&f, [0.2, 0.0]);
        assert_eq!(&l[..2], &[1.0, 0.0]);
        assert!((l[2] - 2.5).abs() < 1e-14);
        let r = InitialCondition::sod().eval(&f, [0.7, 0.0]);
        assert!((r[2] - 0.25).abs() < 1e-15);
        let s = InitialCondition::ShuOsher.eval(&f, [-4.5, 0.0]);
        let e = 10.333333 / 0.4 + 0.5 * 3.857143 * 2.629369f64.powi(2);
        assert!((s[1] - 3.857143 * 2.629369).abs() < 1e-12 && (s[2] - e).abs() < 1e-12);
        let f2 = FluxModel::Euler2d { gamma: GAMMA };
        let q = InitialCondition::Quadrants { states: RIEMANN12 }.eval(&f2, [-0.3, 0.4]);
        assert_eq!(q[0], 1.0);
        assert!((q[1] - 0.7276).abs() < 1e-15 && q[2] == 0.0);
    }

    #[test]
    fn shu_osher_mesh_tags_both_ends() {
        let c = test_case(6).unwrap();
        let m = c.mesh(20).unwrap();
        let tags: Vec<BoundaryTag> = m.boundary_tags().map(|(_, t)| *t).collect();
        assert!(tags.contains(&BoundaryTag::Dirichlet) && tags.contains(&BoundaryTag::Neumann));
    }
}
