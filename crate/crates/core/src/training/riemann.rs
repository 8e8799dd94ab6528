//! Exact solution of the one-dimensional Euler Riemann problem for an ideal gas.
//!
//! The star pressure solves `f_L(p) + f_R(p) + (v_R - v_L) = 0` with Newton's
//! method; the wave fan is then sampled along `x/t`.

/// Primitive state `(rho, v, p)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Primitive {
    pub rho: f64,
    pub v: f64,
    pub p: f64,
}

impl Primitive {
    pub const fn new(rho: f64, v: f64, p: f64) -> Self {
        Self { rho, v, p }
    }

    fn sound_speed(&self, gamma: f64) -> f64 {
        (gamma * self.p / self.rho).sqrt()
    }

    /// Conserved variables `(rho, rho v, E)`.
    pub fn conserved(&self, gamma: f64) -> [f64; 3] {
        [self.rho, self.rho * self.v, self.p / (gamma - 1.0) + 0.5 * self.rho * self.v * self.v]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum RiemannError {
    #[error("non-physical input state (density and pressure must be positive)")]
    NonPhysical,
    #[error("vacuum generated: pressure positivity condition violated")]
    Vacuum,
    #[error("Newton iteration for the star pressure did not converge")]
    NoConvergence,
}

/// Star-region values and the data needed to sample the fan.
#[derive(Debug, Clone, Copy)]
pub struct RiemannSolution {
    pub left: Primitive,
    pub right: Primitive,
    pub gamma: f64,
    pub p_star: f64,
    pub v_star: f64,
    pub rho_star_left: f64,
    pub rho_star_right: f64,
}

/// Pressure function of one side and its derivative.
fn pressure_fn(p: f64, s: &Primitive, gamma: f64) -> (f64, f64) {
    let c = s.sound_speed(gamma);
    if p > s.p {
        let a = 2.0 / ((gamma + 1.0) * s.rho);
        let b = (gamma - 1.0) / (gamma + 1.0) * s.p;
        let q = (a / (p + b)).sqrt();
        ((p - s.p) * q, q * (1.0 - 0.5 * (p - s.p) / (p + b)))
    } else {
        let e = (gamma - 1.0) / (2.0 * gamma);
        let r = p / s.p;
        (2.0 * c / (gamma - 1.0) * (r.powf(e) - 1.0), r.powf(-(gamma + 1.0) / (2.0 * gamma)) / (s.rho * c))
    }
}

fn star_density(p: f64, s: &Primitive, gamma: f64) -> f64 {
    let r = p / s.p;
    if p > s.p {
        let g = (gamma - 1.0) / (gamma + 1.0);
        s.rho * (r + g) / (g * r + 1.0)
    } else {
        s.rho * r.powf(1.0 / gamma)
    }
}

impl RiemannSolution {
    pub fn solve(left: Primitive, right: Primitive, gamma: f64) -> Result<Self, RiemannError> {
        if !(left.rho > 0.0 && left.p > 0.0 && right.rho > 0.0 && right.p > 0.0) {
            return Err(RiemannError::NonPhysical);
        }
        let (cl, cr) = (left.sound_speed(gamma), right.sound_speed(gamma));
        if 2.0 / (gamma - 1.0) * (cl + cr) <= right.v - left.v {
            return Err(RiemannError::Vacuum);
        }
        // two-rarefaction guess, a good start for Newton in every wave configuration
        let e = (gamma - 1.0) / (2.0 * gamma);
        let num = cl + cr - 0.5 * (gamma - 1.0) * (right.v - left.v);
        let den = cl / left.p.powf(e) + cr / right.p.powf(e);
        let mut p = (num / den).powf(1.0 / e).max(1e-12);
        let dv = right.v - left.v;
        let mut converged = false;
        for _ in 0..100 {
            let (fl, dl) = pressure_fn(p, &left, gamma);
            let (fr, dr) = pressure_fn(p, &right, gamma);
            let next = (p - (fl + fr + dv) / (dl + dr)).max(1e-14);
            let change = 2.0 * (next - p).abs() / (next + p);
            p = next;
            if change < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(RiemannError::NoConvergence);
        }
        let (fl, _) = pressure_fn(p, &left, gamma);
        let (fr, _) = pressure_fn(p, &right, gamma);
        Ok(Self {
            left,
            right,
            gamma,
            p_star: p,
            v_star: 0.5 * (left.v + right.v) + 0.5 * (fr - fl),
            rho_star_left: star_density(p, &left, gamma),
            rho_star_right: star_density(p, &right, gamma),
        })
    }

    /// State on the ray `s = x / t`.
    pub fn sample(&self, s: f64) -> Primitive {
        let g = self.gamma;
        let (ps, vs) = (self.p_star, self.v_star);
        if s <= vs {
            let w = self.left;
            let c = w.sound_speed(g);
            if ps > w.p {
                let shock = w.v - c * ((g + 1.0) / (2.0 * g) * ps / w.p + (g - 1.0) / (2.0 * g)).sqrt();
                if s <= shock {
                    w
                } else {
                    Primitive::new(self.rho_star_left, vs, ps)
                }
            } else {
                let head = w.v - c;
                let cs = c * (ps / w.p).powf((g - 1.0) / (2.0 * g));
                let tail = vs - cs;
                if s <= head {
                    w
                } else if s >= tail {
                    Primitive::new(self.rho_star_left, vs, ps)
                } else {
                    let a = 2.0 / (g + 1.0) + (g - 1.0) / ((g + 1.0) * c) * (w.v - s);
                    Primitive::new(
                        w.rho * a.powf(2.0 / (g - 1.0)),
                        2.0 / (g + 1.0) * (c + 0.5 * (g - 1.0) * w.v + s),
                        w.p * a.powf(2.0 * g / (g - 1.0)),
                    )
                }
            }
        } else {
            let w = self.right;
            let c = w.sound_speed(g);
            if ps > w.p {
                let shock = w.v + c * ((g + 1.0) / (2.0 * g) * ps / w.p + (g - 1.0) / (2.0 * g)).sqrt();
                if s >= shock {
                    w
                } else {
                    Primitive::new(self.rho_star_right, vs, ps)
                }
            } else {
                let head = w.v + c;
                let cs = c * (ps / w.p).powf((g - 1.0) / (2.0 * g));
                let tail = vs + cs;
                if s >= head {
                    w
                } else if s <= tail {
                    Primitive::new(self.rho_star_right, vs, ps)
                } else {
                    let a = 2.0 / (g + 1.0) - (g - 1.0) / ((g + 1.0) * c) * (w.v - s);
                    Primitive::new(
                        w.rho * a.powf(2.0 / (g - 1.0)),
                        2.0 / (g + 1.0) * (-c + 0.5 * (g - 1.0) * w.v + s),
                        w.p * a.powf(2.0 * g / (g - 1.0)),
                    )
                }
            }
        }
    }

    /// State at `(x, t)` for an interface initially at `x0`.
    pub fn at(&self, x: f64, t: f64, x0: f64) -> Primitive {
        if t <= 0.0 {
            return if x < x0 { self.left } else { self.right };
        }
        self.sample((x - x0) / t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sod() -> RiemannSolution {
        RiemannSolution::solve(Primitive::new(1.0, 0.0, 1.0), Primitive::new(0.125, 0.0, 0.1), 1.4).unwrap()
    }

    #[test]
    fn sod_star_states() {
        let s = sod();
        assert!((s.p_star - 0.30313).abs() < 1e-5);
        assert!((s.v_star - 0.92745).abs() < 1e-5);
        assert!((s.rho_star_left - 0.42632).abs() < 1e-5);
        assert!((s.rho_star_right - 0.26557).abs() < 1e-5);
    }

    #[test]
    fn star_pressure_is_a_root() {
        let s = sod();
        let (fl, _) = pressure_fn(s.p_star, &s.left, 1.4);
        let (fr, _) = pressure_fn(s.p_star, &s.right, 1.4);
        assert!((fl + fr).abs() < 1e-14);
        // Rankine-Hugoniot mass balance across the right shock
        let r = s.right;
        let c = r.sound_speed(1.4);
        let w = r.v + c * (2.4 / 2.8 * s.p_star / r.p + 0.4 / 2.8).sqrt();
        let lhs = s.rho_star_right * (s.v_star - w);
        let rhs = r.rho * (r.v - w);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn fan_is_continuous_through_rarefaction() {
        let s = sod();
        let c = s.left.sound_speed(1.4);
        let head = s.sample(-c + 1e-12);
        assert!((head.rho - 1.0).abs() < 1e-9);
        let tail_speed = s.v_star - c * (s.p_star / s.left.p).powf(0.4 / 2.8);
        let tail = s.sample(tail_speed - 1e-12);
        assert!((tail.rho - s.rho_star_left).abs() < 1e-9);
        assert!((tail.v - s.v_star).abs() < 1e-9);
    }

    #[test]
    fn symmetric_collision_and_rejections() {
        let a = Primitive::new(1.0, 1.0, 1.0);
        let b = Primitive::new(1.0, -1.0, 1.0);
        let s = RiemannSolution::solve(a, b, 1.4).unwrap();
        assert!(s.v_star.abs() < 1e-14);
        assert!(s.p_star > 1.0);
        let fast = RiemannSolution::solve(Primitive::new(1.0, -20.0, 1.0), Primitive::new(1.0, 20.0, 1.0), 1.4);
        assert_eq!(fast.unwrap_err(), RiemannError::Vacuum);
        assert_eq!(RiemannSolution::solve(Primitive::new(-1.0, 0.0, 1.0), a, 1.4).unwrap_err(), RiemannError::NonPhysical);
    }
}
