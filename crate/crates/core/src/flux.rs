//! Physical flux functions, wave speeds and entropy pairs.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;

/// Maximum number of conserved variables of any model.
pub const MAX_VARS: usize = 4;

pub const GAMMA: f64 = 1.4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FluxError {
    #[error("nonphysical state: density {rho}, pressure {p}")]
    Nonphysical { rho: f64, p: f64 },
    #[error("unknown flux model '{0}'")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum FluxModel {
    Advection1d { beta: f64 },
    Burgers1d,
    Euler1d { gamma: f64 },
    Advection2d { beta: [f64; 2] },
    /// `f(u) = u^2/2 (1, 1)`.
    Burgers2d,
    Kpp2d,
    Euler2d { gamma: f64 },
}

/// Flux tensor: `[variable][direction]`.
pub type FluxTensor<T> = [[T; 2]; MAX_VARS];

impl FluxModel {
    pub fn from_id(id: &str) -> Result<Self, FluxError> {
        Ok(match id {
            "advection1d" => Self::Advection1d { beta: 1.0 },
            "burgers1d" => Self::Burgers1d,
            "euler1d" => Self::Euler1d { gamma: GAMMA },
            "advection2d" => Self::Advection2d { beta: [1.0, 1.0] },
            "burgers2d" => Self::Burgers2d,
            "kpp2d" => Self::Kpp2d,
            "euler2d" => Self::Euler2d { gamma: GAMMA },
            other => return Err(FluxError::Unknown(other.to_string())),
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Advection1d { .. } => "advection1d",
            Self::Burgers1d => "burgers1d",
            Self::Euler1d { .. } => "euler1d",
            Self::Advection2d { .. } => "advection2d",
            Self::Burgers2d => "burgers2d",
            Self::Kpp2d => "kpp2d",
            Self::Euler2d { .. } => "euler2d",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Advection1d { .. } | Self::Burgers1d | Self::Euler1d { .. } => 1,
            _ => 2,
        }
    }

    pub fn n_vars(&self) -> usize {
        match self {
            Self::Euler1d { .. } => 3,
            Self::Euler2d { .. } => 4,
            _ => 1,
        }
    }

    /// Index of the variable used by viscosity sensors (density for Euler).
    pub fn rep_var(&self) -> usize {
        0
    }

    pub fn is_euler(&self) -> bool {
        matches!(self, Self::Euler1d { .. } | Self::Euler2d { .. })
    }

    fn gamma(&self) -> f64 {
        match self {
            Self::Euler1d { gamma } | Self::Euler2d { gamma } => *gamma,
            _ => GAMMA,
        }
    }

    /// Density, velocity and pressure of an Euler state.
    pub fn primitives<T: Real>(&self, u: &[T]) -> Result<(T, [T; 2], T), FluxError> {
        let g = self.gamma();
        let rho = u[0];
        let (v, e) = match self {
            Self::Euler1d { .. } => ([u[1] / rho, T::zero()], u[2]),
            _ => ([u[1] / rho, u[2] / rho], u[3]),
        };
        let ke = if self.dim() == 1 {
            u[1] * v[0] * 0.5
        } else {
            (u[1] * v[0] + u[2] * v[1]) * 0.5
        };
        let p = (e - ke) * (g - 1.0);
        let (r, pv) = (rho.value(), p.value());
        if !(r > 0.0 && pv > 0.0) || !r.is_finite() || !pv.is_finite() {
            return Err(FluxError::Nonphysical { rho: r, p: pv });
        }
        Ok((rho, v, p))
    }

    /// Conserved state from density, velocity and pressure.
    pub fn conserved(&self, rho: f64, v: [f64; 2], p: f64) -> Vec<f64> {
        let g = self.gamma();
        let e = p / (g - 1.0) + 0.5 * rho * (v[0] * v[0] + v[1] * v[1]);
        match self {
            Self::Euler1d { .. } => vec![rho, rho * v[0], e],
            _ => vec![rho, rho * v[0], rho * v[1], e],
        }
    }

    pub fn eval<T: Real>(&self, u: &[T]) -> Result<FluxTensor<T>, FluxError> {
        let z = T::zero();
        let mut f = [[z; 2]; MAX_VARS];
        match self {
            Self::Advection1d { beta } => f[0][0] = u[0] * *beta,
            Self::Burgers1d => f[0][0] = u[0].sq() * 0.5,
            Self::Advection2d { beta } => f[0] = [u[0] * beta[0], u[0] * beta[1]],
            Self::Burgers2d => {
                let q = u[0].sq() * 0.5;
                f[0] = [q, q];
            }
            Self::Kpp2d => f[0] = [u[0].sin(), u[0].cos()],
            Self::Euler1d { .. } => {
                let (_, v, p) = self.primitives(u)?;
                f[0][0] = u[1];
                f[1][0] = u[1] * v[0] + p;
                f[2][0] = v[0] * (u[2] + p);
            }
            Self::Euler2d { .. } => {
                let (_, v, p) = self.primitives(u)?;
                f[0] = [u[1], u[2]];
                f[1] = [u[1] * v[0] + p, u[1] * v[1]];
                f[2] = [u[2] * v[0], u[2] * v[1] + p];
                f[3] = [v[0] * (u[3] + p), v[1] * (u[3] + p)];
            }
        }
        Ok(f)
    }

    /// Largest absolute eigenvalue of `(df/du) n` at `u`.
    pub fn normal_speed<T: Real>(&self, u: &[T], n: [f64; 2]) -> Result<T, FluxError> {
        Ok(match self {
            Self::Advection1d { beta } => T::cst((beta * n[0]).abs()),
            Self::Advection2d { beta } => T::cst((beta[0] * n[0] + beta[1] * n[1]).abs()),
            Self::Burgers1d => (u[0] * n[0]).abs(),
            Self::Burgers2d => (u[0] * (n[0] + n[1])).abs(),
            Self::Kpp2d => T::cst(1.0),
            Self::Euler1d { .. } | Self::Euler2d { .. } => {
                let (rho, v, p) = self.primitives(u)?;
                let c = (p * self.gamma() / rho).sqrt();
                (v[0] * n[0] + v[1] * n[1]).abs() + c
            }
        })
    }

    /// Largest wave speed over all directions, `|f'(u)|`.
    pub fn wave_speed<T: Real>(&self, u: &[T]) -> Result<T, FluxError> {
        Ok(match self {
            Self::Advection1d { beta } => T::cst(beta.abs()),
            Self::Advection2d { beta } => T::cst((beta[0] * beta[0] + beta[1] * beta[1]).sqrt()),
            Self::Burgers1d => u[0].abs(),
            Self::Burgers2d => u[0].abs() * std::f64::consts::SQRT_2,
            Self::Kpp2d => T::cst(1.0),
            Self::Euler1d { .. } | Self::Euler2d { .. } => {
                let (rho, v, p) = self.primitives(u)?;
                let c = (p * self.gamma() / rho).sqrt();
                let speed = if self.dim() == 1 {
                    v[0].abs()
                } else {
                    (v[0].sq() + v[1].sq() + 1e-300).sqrt()
                };
                speed + c
            }
        })
    }

    /// Rusanov flux `F.n` per variable across a face with normal `n`.
    pub fn rusanov<T: Real>(&self, um: &[T], up: &[T], n: [f64; 2]) -> Result<[T; MAX_VARS], FluxError> {
        let fm = self.eval(um)?;
        let fp = self.eval(up)?;
        let lam = self.normal_speed(um, n)?.max(self.normal_speed(up, n)?);
        let mut out = [T::zero(); MAX_VARS];
        for v in 0..self.n_vars() {
            let avg = (fm[v][0] + fp[v][0]) * (0.5 * n[0]) + (fm[v][1] + fp[v][1]) * (0.5 * n[1]);
            out[v] = avg + lam * (um[v] - up[v]) * 0.5;
        }
        Ok(out)
    }

    /// Entropy `E` and entropy flux `F` of the representative variable.
    pub fn entropy_pair<T: Real>(&self, u: &[T]) -> Result<(T, [T; 2]), FluxError> {
        let w = u[0];
        let e = w.sq() * 0.5;
        let z = T::zero();
        Ok(match self {
            Self::Advection1d { beta } => (e, [e * *beta, z]),
            Self::Advection2d { beta } => (e, [e * beta[0], e * beta[1]]),
            Self::Burgers1d => (e, [w.powi(3) / 3.0, z]),
            Self::Burgers2d => {
                let f = w.powi(3) / 3.0;
                (e, [f, f])
            }
            Self::Kpp2d => {
                let (s, c) = (w.sin(), w.cos());
                (e, [w * s + c - 1.0, w * c - s])
            }
            Self::Euler1d { .. } | Self::Euler2d { .. } => {
                let (_, v, _) = self.primitives(u)?;
                (e, [e * v[0], e * v[1]])
            }
        })
    }
}
