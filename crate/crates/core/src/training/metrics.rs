//! Per-step solution metrics, written against [`Real`] so the same code
//! produces plain values and taped loss terms.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::dg::Discretization;
use crate::viscosity::ViscosityField;

use super::TrainingError;

/// One value per metric.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics<T> {
    /// `||U - U_ref||_q`
    pub eps: T,
    /// `||grad U - grad U_ref||_q`
    pub grad_eps: T,
    /// `||[U - U_ref]||_q` over interior face points
    pub jump_eps: T,
    /// Overshoot plus undershoot with respect to the reference range.
    pub ou: T,
    /// `|int U^n - int U^{n-1}|`, summed over variables.
    pub mv: T,
    /// Cell-mean viscosity over the cell gradient norm, summed over cells.
    pub vp: T,
}

impl<T: Real> Metrics<T> {
    pub fn values(&self) -> Metrics<f64> {
        Metrics {
            eps: self.eps.value(),
            grad_eps: self.grad_eps.value(),
            jump_eps: self.jump_eps.value(),
            ou: self.ou.value(),
            mv: self.mv.value(),
            vp: self.vp.value(),
        }
    }
}

impl Metrics<f64> {
    pub fn add(&mut self, o: &Metrics<f64>) {
        self.eps += o.eps;
        self.grad_eps += o.grad_eps;
        self.jump_eps += o.jump_eps;
        self.ou += o.ou;
        self.mv += o.mv;
        self.vp += o.vp;
    }

    pub const NAMES: [&'static str; 6] = ["eps", "grad_eps", "jump_eps", "ou", "mv", "vp"];

    pub fn as_array(&self) -> [f64; 6] {
        [self.eps, self.grad_eps, self.jump_eps, self.ou, self.mv, self.vp]
    }
}

/// `sum |x_i|^q`, the q-th power of the discrete norm.
pub fn pow_sum<T: Real>(xs: &[T], q: u32) -> T {
    let terms: Vec<T> = match q {
        1 => xs.iter().map(|x| x.abs()).collect(),
        _ => xs.iter().map(|x| x.abs().powi(q as i32)).collect(),
    };
    T::sum(&terms)
}

/// `(sum |x_i|^q)^(1/q)`. An exactly zero sum maps to a constant zero so the
/// root never sees a zero argument on the tape.
pub fn norm<T: Real>(xs: &[T], q: u32) -> T {
    root(pow_sum(xs, q), q)
}

fn root<T: Real>(s: T, q: u32) -> T {
    if s.value() == 0.0 {
        return T::zero();
    }
    match q {
        1 => s,
        2 => s.sqrt(),
        _ => s.powf(1.0 / q as f64),
    }
}

/// Error gradient entries of every variable, cell and direction.
fn gradient_entries<T: Real>(disc: &Discretization, e: &[T], cells: impl Iterator<Item = usize>) -> Vec<T> {
    let mut out = Vec::new();
    for c in cells {
        for v in 0..disc.n_vars() {
            for g in disc.nodal_gradient(e, c, v) {
                out.extend(g);
            }
        }
    }
    out
}

/// Jump of `e` at the points of every face shared by two cells.
fn jump_entries<T: Real>(disc: &Discretization, e: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for (fi, f) in disc.mesh.faces.iter().enumerate() {
        let Some(p) = f.plus else { continue };
        for v in 0..disc.n_vars() {
            let tm = disc.trace(e, f.minus, v, f.local_minus);
            let tp = disc.trace(e, p, v, f.local_plus);
            for (q, &a) in tm.iter().enumerate() {
                out.push(a - tp[disc.plus_index(fi, q)]);
            }
        }
    }
    out
}

/// Mean of the piecewise-linear viscosity over cell `c`.
pub fn cell_mean_viscosity<T: Real>(disc: &Discretization, mu: &ViscosityField<T>, c: usize) -> T {
    let vs = disc.mesh.cell_vertices(c);
    let vals: Vec<T> = vs.iter().map(|&v| mu.vertex[disc.mesh.vertex_class[v]]).collect();
    T::sum(&vals) * (1.0 / vals.len() as f64)
}

/// Every metric for step `n`: `u` is `U^n`, `u_prev` is `U^{n-1}` and `mu` the
/// viscosity used to advance from `U^{n-1}` to `U^n`.
pub fn compute_metrics<T: Real>(
    disc: &Discretization,
    u: &[T],
    u_ref: &[f64],
    mu: Option<&ViscosityField<T>>,
    u_prev: &[T],
    q: u32,
    vp_eps: f64,
) -> Result<Metrics<T>, TrainingError> {
    let n = disc.n_dofs();
    for len in [u.len(), u_ref.len(), u_prev.len()] {
        if len != n {
            return Err(TrainingError::Shape { expected: n, got: len });
        }
    }
    let e: Vec<T> = u.iter().zip(u_ref).map(|(&a, &b)| a - b).collect();
    let eps = norm(&e, q);
    let grad_eps = norm(&gradient_entries(disc, &e, 0..disc.mesh.n_cells()), q);
    let jump_eps = norm(&jump_entries(disc, &e), q);

    let np = disc.np();
    let mut over = Vec::new();
    let mut under = Vec::new();
    for v in 0..disc.n_vars() {
        let idx = |c: usize, i: usize| disc.idx(c, v, i);
        let all = || (0..disc.mesh.n_cells()).flat_map(move |c| (0..np).map(move |i| idx(c, i)));
        let hi = all().map(|j| u_ref[j]).fold(f64::NEG_INFINITY, f64::max);
        let lo = all().map(|j| u_ref[j]).fold(f64::INFINITY, f64::min);
        for j in all() {
            let x = u[j].value();
            if x > hi {
                over.push(u[j] - hi);
            } else if x < lo {
                under.push(u[j] - lo);
            }
        }
    }
    let ou = norm(&over, q) + norm(&under, q);

    let now = disc.integral(u);
    let before = disc.integral(u_prev);
    let diffs: Vec<T> = now.iter().zip(&before).map(|(&a, &b)| (a - b).abs()).collect();
    let mv = T::sum(&diffs);

    let vp = match mu {
        None => T::zero(),
        Some(mu) => {
            let terms: Vec<T> = (0..disc.mesh.n_cells())
                .map(|c| {
                    let g = norm(&gradient_entries(disc, u, std::iter::once(c)), q);
                    cell_mean_viscosity(disc, mu, c) / (g + vp_eps)
                })
                .collect();
            T::sum(&terms)
        }
    };
    Ok(Metrics {
        eps,
        grad_eps,
        jump_eps,
        ou,
        mv,
        vp,
    })
}

/// `q`-th power used in the loss; undoes the root without differentiating it.
pub fn powq<T: Real>(x: T, q: u32) -> T {
    match q {
        1 => x,
        _ => x.powi(q as i32),
    }
}
