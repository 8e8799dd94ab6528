//! Artificial viscosity: per-cell producers (entropy residual, neural network),
//! the upper bound, and vertex smoothing into a continuous P1 field.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, Real};
use crate::dg::{DgError, Discretization, SolutionState};
use crate::flux::FluxError;
use crate::mesh::Mesh;
use crate::nn::{feature_count, NetworkParams, NnError};

#[derive(Debug, thiserror::Error)]
pub enum ViscosityError {
    #[error(transparent)]
    Dg(#[from] DgError),
    #[error("flux failure in cell {cell}: {source}")]
    Flux {
        cell: usize,
        #[source]
        source: FluxError,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid viscosity configuration: {0}")]
    Config(String),
}

/// Piecewise-linear continuous viscosity: one value per vertex class, plus
/// the per-cell values it was smoothed from.
#[derive(Debug, Clone)]
pub struct ViscosityField<T> {
    pub cell: Vec<T>,
    pub vertex: Vec<T>,
}

impl<T: Real> ViscosityField<T> {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            cell: vec![T::zero(); mesh.n_cells()],
            vertex: vec![T::zero(); mesh.class_cells.len()],
        }
    }

    /// Interpolant at the point with vertex barycentric weights `bary` in cell `c`.
    pub fn eval(&self, mesh: &Mesh, c: usize, bary: &[f64]) -> T {
        let vs = mesh.cell_vertices(c);
        let vals: Vec<T> = vs.iter().map(|&v| self.vertex[mesh.vertex_class[v]]).collect();
        T::lincomb(&bary[..vs.len()], &vals)
    }

    pub fn values(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.cell.iter().map(|x| x.value()).collect(),
            self.vertex.iter().map(|x| x.value()).collect(),
        )
    }

    pub fn max_value(&self) -> f64 {
        self.vertex.iter().map(|x| x.value()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvConfig {
    pub c_k: f64,
    pub c_max: f64,
    pub eps_den: f64,
}

impl Default for EvConfig {
    fn default() -> Self {
        Self {
            c_k: 1.0,
            c_max: 0.5,
            eps_den: 1e-12,
        }
    }
}

impl EvConfig {
    pub fn validate(&self) -> Result<(), ViscosityError> {
        if self.c_k > 0.0 && self.c_max > 0.0 && self.eps_den > 0.0 {
            Ok(())
        } else {
            Err(ViscosityError::Config(format!("entropy viscosity constants must be positive: {self:?}")))
        }
    }
}

/// Network-driven producer. `param` links the network to a tape parameter
/// block when gradients with respect to its weights are wanted.
#[derive(Debug, Clone)]
pub struct NeuralViscosity {
    pub net: Arc<NetworkParams>,
    pub param: Option<ParamId>,
    pub c_max: f64,
}

#[derive(Debug, Clone, Default)]
pub enum ViscosityModel {
    #[default]
    None,
    Entropy(EvConfig),
    Neural(NeuralViscosity),
}

impl ViscosityModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Entropy(_) => "entropy",
            Self::Neural(_) => "neural",
        }
    }

    pub fn c_max(&self) -> Option<f64> {
        match self {
            Self::None => None,
            Self::Entropy(c) => Some(c.c_max),
            Self::Neural(n) => Some(n.c_max),
        }
    }

    /// Bounded per-cell viscosity smoothed into a continuous field, or `None`
    /// for the inviscid model.
    pub fn compute<T: Real>(&self, disc: &Discretization, state: &SolutionState<T>) -> Result<Option<ViscosityField<T>>, ViscosityError> {
        let raw = match self {
            Self::None => return Ok(None),
            Self::Entropy(cfg) => {
                let raw = entropy_viscosity(disc, state, cfg)?;
                apply_bound(&raw, &viscosity_bound(disc, &state.u, cfg.c_max)?)
            }
            Self::Neural(n) => {
                let raw = neural_viscosity(disc, state, &n.net, n.param)?;
                apply_bound(&raw, &viscosity_bound(disc, &state.u, n.c_max)?)
            }
        };
        Ok(Some(smooth(&raw, &disc.mesh)))
    }
}

/// Largest `|f'(u)|` over the nodes of cell `c`.
pub fn cell_wave_speed<T: Real>(disc: &Discretization, u: &[T], c: usize) -> Result<T, ViscosityError> {
    let nv = disc.n_vars();
    let speeds = (0..disc.np())
        .map(|i| {
            let s: Vec<T> = (0..nv).map(|v| u[disc.idx(c, v, i)]).collect();
            disc.flux.wave_speed(&s).map_err(|source| ViscosityError::Flux { cell: c, source })
        })
        .collect::<Result<Vec<T>, _>>()?;
    Ok(T::max_of(&speeds))
}

/// `mu_max = c_max (h/k) max |f'(u)|` per cell.
pub fn viscosity_bound<T: Real>(disc: &Discretization, u: &[T], c_max: f64) -> Result<Vec<T>, ViscosityError> {
    let k = disc.k() as f64;
    (0..disc.mesh.n_cells())
        .map(|c| Ok(cell_wave_speed(disc, u, c)? * (c_max * disc.mesh.cell_h[c] / k)))
        .collect()
}

/// Cap each raw value at its bound.
pub fn apply_bound<T: Real>(raw: &[T], bound: &[T]) -> Vec<T> {
    raw.iter().zip(bound).map(|(&r, &b)| r.min(b)).collect()
}

/// Average cell values onto vertex classes.
pub fn smooth<T: Real>(raw: &[T], mesh: &Mesh) -> ViscosityField<T> {
    let vertex = mesh
        .class_cells
        .iter()
        .map(|cells| {
            let vals: Vec<T> = cells.iter().map(|&c| raw[c]).collect();
            T::sum(&vals) * (1.0 / cells.len().max(1) as f64)
        })
        .collect();
    ViscosityField {
        cell: raw.to_vec(),
        vertex,
    }
}

/// Per-face max of `|g(u-) - g(u+)|` along the face points, where `g` maps a
/// state to a scalar. Boundary faces use the ghost or interior state.
fn face_max_jump<T: Real>(
    disc: &Discretization,
    u: &[T],
    g: impl Fn(&[T]) -> Result<T, FluxError>,
) -> Result<Vec<T>, ViscosityError> {
    let nv = disc.n_vars();
    (0..disc.mesh.faces.len())
        .map(|fi| {
            let (um, up) = disc.face_states(u, fi)?;
            let cell = disc.mesh.faces[fi].minus;
            let js = um
                .iter()
                .zip(&up)
                .map(|(a, b)| Ok((g(&a[..nv])? - g(&b[..nv])?).abs()))
                .collect::<Result<Vec<T>, FluxError>>()
                .map_err(|source| ViscosityError::Flux { cell, source })?;
            Ok(T::max_of(&js))
        })
        .collect()
}

/// Raw entropy viscosity `c_K (h/k)^2 max(|D_h|, |H_h|) / ||E - mean(E)||_inf`.
///
/// `D_h` uses a backward difference in time over the last accepted step and
/// the nodal divergence of the entropy flux; `H_h` is `(k/h)` times the
/// largest normal entropy-flux jump on the cell's faces.
pub fn entropy_viscosity<T: Real>(disc: &Discretization, state: &SolutionState<T>, cfg: &EvConfig) -> Result<Vec<T>, ViscosityError> {
    cfg.validate()?;
    let mesh = &disc.mesh;
    let (np, nv, dim) = (disc.np(), disc.n_vars(), mesh.dim);
    let k = disc.k() as f64;
    let node_state = |u: &[T], c: usize, i: usize| -> Vec<T> { (0..nv).map(|v| u[disc.idx(c, v, i)]).collect() };

    let mut e = Vec::with_capacity(mesh.n_cells() * np);
    let mut fl: Vec<Vec<T>> = vec![Vec::with_capacity(mesh.n_cells() * np); dim];
    let mut e_prev = Vec::with_capacity(mesh.n_cells() * np);
    for c in 0..mesh.n_cells() {
        for i in 0..np {
            let (ei, fi) = disc
                .flux
                .entropy_pair(&node_state(&state.u, c, i))
                .map_err(|source| ViscosityError::Flux { cell: c, source })?;
            e.push(ei);
            for d in 0..dim {
                fl[d].push(fi[d]);
            }
            let (ep, _) = disc
                .flux
                .entropy_pair(&node_state(&state.u_prev, c, i))
                .map_err(|source| ViscosityError::Flux { cell: c, source })?;
            e_prev.push(ep);
        }
    }

    let mean = disc.integrate_nodal(&e) * (1.0 / mesh.domain_measure());
    let dev: Vec<T> = e.iter().map(|&x| (x - mean).abs()).collect();
    let den = T::max_of(&dev);
    if den.value() < cfg.eps_den {
        return Ok(vec![T::zero(); mesh.n_cells()]);
    }

    let flux = disc.flux;
    let h_face: Vec<T> = (0..mesh.faces.len())
        .map(|fi| {
            let f = &mesh.faces[fi];
            let (um, up) = disc.face_states(&state.u, fi)?;
            let js = um
                .iter()
                .zip(&up)
                .map(|(a, b)| {
                    let (_, fa) = flux.entropy_pair(&a[..nv])?;
                    let (_, fb) = flux.entropy_pair(&b[..nv])?;
                    Ok(((fa[0] - fb[0]) * f.normal[0] + (fa[1] - fb[1]) * f.normal[1]).abs())
                })
                .collect::<Result<Vec<T>, FluxError>>()
                .map_err(|source| ViscosityError::Flux { cell: f.minus, source })?;
            Ok(T::max_of(&js))
        })
        .collect::<Result<_, ViscosityError>>()?;

    let inv_dt = if state.dt_prev > 0.0 { 1.0 / state.dt_prev } else { 0.0 };
    let el = &disc.el;
    (0..mesh.n_cells())
        .map(|c| {
            let g = &mesh.geom[c];
            let h = mesh.cell_h[c];
            let base = c * np;
            // reference derivatives of each entropy-flux component
            let mut div = vec![T::zero(); np];
            for (d, fd) in fl.iter().enumerate() {
                let fc = &fd[base..base + np];
                for a in 0..dim {
                    let w = g.inv[d][a];
                    if w == 0.0 {
                        continue;
                    }
                    for (i, slot) in div.iter_mut().enumerate() {
                        *slot = *slot + T::lincomb(el.diff[a].row(i), fc) * w;
                    }
                }
            }
            let d_res: Vec<T> = (0..np)
                .map(|i| ((e[base + i] - e_prev[base + i]) * inv_dt + div[i]).abs())
                .collect();
            let d_max = T::max_of(&d_res);
            let hs: Vec<T> = mesh.faces_of(c).iter().map(|&fi| h_face[fi]).collect();
            let h_max = T::max_of(&hs) * (k / h);
            Ok(d_max.max(h_max) * (cfg.c_k * (h / k).powi(2)) / den)
        })
        .collect()
}

/// Unscaled features per cell plus the scaling inputs of the neural producer.
#[derive(Debug, Clone)]
pub struct Features<T> {
    /// Row-major `n_cells x n_cols`, already scaled to `[-1, 1]` except the last column (`k`).
    pub rows: Vec<T>,
    pub n_cols: usize,
    /// `min(max |[u]|, h)` per cell.
    pub h_tilde: Vec<T>,
    /// Largest wave speed per cell.
    pub speed: Vec<T>,
}

fn stats<T: Real>(xs: &[T]) -> [T; 4] {
    let n = xs.len() as f64;
    let mean = T::sum(xs) * (1.0 / n);
    let dev: Vec<T> = xs.iter().map(|&x| (x - mean).sq()).collect();
    let var = T::sum(&dev) * (1.0 / n);
    [T::min_of(xs), T::max_of(xs), mean, (var + 1e-30).sqrt()]
}

/// Affine map of each column to `[-1, 1]` by its global range. Degenerate
/// columns become 0; the trailing `k` column is left as is.
pub fn scale_columns<T: Real>(rows: &mut [T], n_cols: usize) {
    let n_rows = rows.len() / n_cols;
    for j in 0..n_cols - 1 {
        let col: Vec<T> = (0..n_rows).map(|r| rows[r * n_cols + j]).collect();
        let lo = T::min_of(&col);
        let hi = T::max_of(&col);
        let span = hi - lo;
        let degenerate = span.value() <= 1e-13 * (1.0 + hi.value().abs() + lo.value().abs());
        for r in 0..n_rows {
            let x = &mut rows[r * n_cols + j];
            *x = if degenerate { T::zero() } else { (*x - lo) * 2.0 / span - 1.0 };
        }
    }
}

/// Feature extraction for the neural producer (19 columns in 1D, 29 in 2D).
pub fn neural_features<T: Real>(disc: &Discretization, state: &SolutionState<T>) -> Result<Features<T>, ViscosityError> {
    let mesh = &disc.mesh;
    let (np, nv, dim) = (disc.np(), disc.n_vars(), mesh.dim);
    let rep = disc.flux.rep_var();
    let n_cols = feature_count(dim);
    let face_jump = face_max_jump(disc, &state.u, |s| Ok(s[rep]))?;

    let mut rows = Vec::with_capacity(mesh.n_cells() * n_cols);
    let mut h_tilde = Vec::with_capacity(mesh.n_cells());
    let mut speed = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let u = disc.cell_var(&state.u, c, rep);
        let up = disc.cell_var(&state.u_prev, c, rep);
        let mut fx: Vec<Vec<T>> = vec![Vec::with_capacity(np); dim];
        for i in 0..np {
            let s: Vec<T> = (0..nv).map(|v| state.u[disc.idx(c, v, i)]).collect();
            let f = disc.flux.eval(&s).map_err(|source| ViscosityError::Flux { cell: c, source })?;
            for d in 0..dim {
                fx[d].push(f[rep][d]);
            }
        }
        let grad = disc.nodal_gradient(&state.u, c, rep);
        rows.extend(stats(u));
        for f in &fx {
            rows.extend(stats(f));
        }
        for g in &grad {
            rows.extend(stats(g));
        }
        rows.extend(stats(up));
        let jumps: Vec<T> = mesh.faces_of(c).iter().map(|&fi| face_jump[fi]).collect();
        if dim == 1 {
            rows.extend(jumps.iter().copied());
        } else {
            rows.extend(stats(&jumps));
        }
        rows.push(T::cst(disc.k() as f64));
        h_tilde.push(T::max_of(&jumps).min(T::cst(mesh.cell_h[c])));
        speed.push(cell_wave_speed(disc, &state.u, c)?);
    }
    debug_assert_eq!(rows.len(), mesh.n_cells() * n_cols);
    scale_columns(&mut rows, n_cols);
    Ok(Features {
        rows,
        n_cols,
        h_tilde,
        speed,
    })
}

/// Raw neural viscosity `y_K * Lambda_K * h_tilde_K` (before the bound).
pub fn neural_viscosity<T: Real>(
    disc: &Discretization,
    state: &SolutionState<T>,
    net: &Arc<NetworkParams>,
    param: Option<ParamId>,
) -> Result<Vec<T>, ViscosityError> {
    let f = neural_features(disc, state)?;
    if net.n_inputs() != f.n_cols {
        return Err(NnError::FeatureSize {
            expected: net.n_inputs(),
            got: f.n_cols,
        }
        .into());
    }
    let y = net.apply(&state.u[0], &f.rows, param)?;
    Ok(y.iter()
        .zip(f.speed.iter().zip(&f.h_tilde))
        .map(|(&y, (&s, &h))| y * s * h)
        .collect())
}
