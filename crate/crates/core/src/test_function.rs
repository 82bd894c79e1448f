//! Smooth, compactly supported space-time test functions with closed-form
//! gradients, Hessians, and time derivatives.
//!
//! Spatial profiles are radial (or radial-enveloped linear) polynomials of
//! the scaled distance rho = |x - c|/R, identically zero for rho >= 1.
//! Time profiles are polynomial bumps on [t0 - w, t0 + w] intersected with
//! [0, infinity); a profile centered at t0 = 0 enters the initial-data
//! boundary term with full weight.

use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpaceProfile {
    /// A (1 - rho^2)^4; C^3 at the support boundary.
    PolynomialBump { amplitude: f64 },
    /// A exp(-4 rho^2) (1 - s7(rho)); the septic smoothstep s7 takes the
    /// Gaussian identically to zero at rho = 1 with C^3 contact.
    GaussianBumpTruncated { amplitude: f64 },
    /// A (g . (x - c))/R on a plateau rho <= 1/2, decaying like
    /// 1 - s7(2 rho - 1) outside: the gradient is constant on the core.
    LinearCore { amplitude: f64, gx: f64, gy: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeProfile {
    pub t0: f64,
    pub width: f64,
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        let u = (t - self.t0) / self.width;
        if t < 0.0 || u.abs() >= 1.0 {
            0.0
        } else {
            let q = 1.0 - u * u;
            q * q * q * q
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let u = (t - self.t0) / self.width;
        if t < 0.0 || u.abs() >= 1.0 {
            0.0
        } else {
            let q = 1.0 - u * u;
            -8.0 * u * q * q * q / self.width
        }
    }

    pub fn support_end(&self) -> f64 {
        self.t0 + self.width
    }
}

/// Septic smoothstep: 0 at 0 and 1 at 1 with vanishing first three
/// derivatives at both ends.
fn s7(u: f64) -> f64 {
    u * u * u * u * (35.0 - 84.0 * u + 70.0 * u * u - 20.0 * u * u * u)
}

fn s7_d(u: f64) -> f64 {
    u * u * u * (140.0 - 420.0 * u + 420.0 * u * u - 140.0 * u * u * u)
}

fn s7_dd(u: f64) -> f64 {
    u * u * (420.0 - 1680.0 * u + 2100.0 * u * u - 840.0 * u * u * u)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub space: SpaceProfile,
    pub center: Vec2,
    pub radius: f64,
    pub time: TimeProfile,
    /// Certified upper bound on sup |grad^2 phi(., t)| over all t.
    hessian_bound: f64,
}

/// Radial profile value and first two derivatives with respect to rho.
fn radial(space: &SpaceProfile, rho: f64) -> (f64, f64, f64) {
    match *space {
        SpaceProfile::PolynomialBump { amplitude } => {
            if rho >= 1.0 {
                return (0.0, 0.0, 0.0);
            }
            let q = 1.0 - rho * rho;
            let f = amplitude * q * q * q * q;
            let fp = amplitude * -8.0 * rho * q * q * q;
            let fpp = amplitude * (-8.0 * q * q * q + 48.0 * rho * rho * q * q);
            (f, fp, fpp)
        }
        SpaceProfile::GaussianBumpTruncated { amplitude } => {
            if rho >= 1.0 {
                return (0.0, 0.0, 0.0);
            }
            let g = (-4.0 * rho * rho).exp();
            let gp = -8.0 * rho * g;
            let gpp = (-8.0 + 64.0 * rho * rho) * g;
            let b = 1.0 - s7(rho);
            let bp = -s7_d(rho);
            let bpp = -s7_dd(rho);
            (
                amplitude * g * b,
                amplitude * (gp * b + g * bp),
                amplitude * (gpp * b + 2.0 * gp * bp + g * bpp),
            )
        }
        SpaceProfile::LinearCore { .. } => unreachable!("linear core is not radial"),
    }
}

/// Envelope of the linear-core profile and its first two rho-derivatives.
fn core_envelope(rho: f64) -> (f64, f64, f64) {
    if rho <= 0.5 {
        (1.0, 0.0, 0.0)
    } else if rho >= 1.0 {
        (0.0, 0.0, 0.0)
    } else {
        let u = 2.0 * rho - 1.0;
        (1.0 - s7(u), -2.0 * s7_d(u), -4.0 * s7_dd(u))
    }
}

impl TestFunction {
    pub fn new(
        id: impl Into<String>,
        space: SpaceProfile,
        center: Vec2,
        radius: f64,
        time: TimeProfile,
    ) -> Self {
        assert!(radius > 0.0 && time.width > 0.0);
        let mut tf = TestFunction {
            id: id.into(),
            space,
            center,
            radius,
            time,
            hessian_bound: 0.0,
        };
        tf.hessian_bound = tf.compute_hessian_bound();
        tf
    }

    pub fn hessian_bound(&self) -> f64 {
        self.hessian_bound
    }

    fn compute_hessian_bound(&self) -> f64 {
        // dense scan of the spectral norm of the spatial Hessian at the
        // time-profile maximum, with a safety factor
        let mut worst = 0.0f64;
        let t = self.time.t0.max(0.0);
        let dirs = 48;
        for i in 0..=1600 {
            let rho = i as f64 / 1600.0 * 0.99999;
            for k in 0..dirs {
                let a = 2.0 * std::f64::consts::PI * k as f64 / dirs as f64;
                let x = self.center + Vec2::new(a.cos(), a.sin()) * (rho * self.radius);
                let h = self.hessian(x, t);
                worst = worst.max(spectral_norm(h));
            }
        }
        worst * 1.02
    }

    pub fn value(&self, x: Vec2, t: f64) -> f64 {
        self.spatial(x) * self.time.value(t)
    }

    pub fn phi_t(&self, x: Vec2, t: f64) -> f64 {
        self.spatial(x) * self.time.derivative(t)
    }

    pub fn grad(&self, x: Vec2, t: f64) -> Vec2 {
        self.spatial_grad(x) * self.time.value(t)
    }

    /// Spatial Hessian as (xx, xy, yy), scaled by the time profile.
    pub fn hessian(&self, x: Vec2, t: f64) -> (f64, f64, f64) {
        let (xx, xy, yy) = self.spatial_hessian(x);
        let w = self.time.value(t);
        (xx * w, xy * w, yy * w)
    }

    pub fn spatial(&self, x: Vec2) -> f64 {
        let r = x.dist(self.center) / self.radius;
        match self.space {
            SpaceProfile::LinearCore { amplitude, gx, gy } => {
                let (env, _, _) = core_envelope(r);
                let u = (x - self.center) / self.radius;
                amplitude * (gx * u.x + gy * u.y) * env
            }
            _ => radial(&self.space, r).0,
        }
    }

    pub fn spatial_grad(&self, x: Vec2) -> Vec2 {
        let d = x - self.center;
        let rho = d.norm() / self.radius;
        if rho >= 1.0 {
            return Vec2::ZERO;
        }
        match self.space {
            SpaceProfile::LinearCore { amplitude, gx, gy } => {
                let g = Vec2::new(gx, gy);
                let (env, envp, _) = core_envelope(rho);
                let lin = g.dot(d) / self.radius;
                let mut grad = g * (env / self.radius);
                if rho > 0.0 {
                    let rhat = d / d.norm();
                    grad += rhat * (lin * envp / self.radius);
                }
                grad * amplitude
            }
            _ => {
                let (_, fp, _) = radial(&self.space, rho);
                if rho == 0.0 {
                    Vec2::ZERO
                } else {
                    (d / d.norm()) * (fp / self.radius)
                }
            }
        }
    }

    fn spatial_hessian(&self, x: Vec2) -> (f64, f64, f64) {
        let d = x - self.center;
        let rho = d.norm() / self.radius;
        if rho >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let r2 = self.radius * self.radius;
        match self.space {
            SpaceProfile::LinearCore { amplitude, gx, gy } => {
                let g = Vec2::new(gx, gy);
                let (_, envp, envpp) = core_envelope(rho);
                if rho == 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let rhat = d / d.norm();
                let lin = g.dot(d) / self.radius;
                // grad = g env / R + rhat lin envp / R
                // hessian = (envp/R) (g rhat^T + rhat g^T)/R
                //   + lin [envpp rhat rhat^T + envp (I - rhat rhat^T)/rho] / R^2
                let a = envp / r2;
                let sym_xx = 2.0 * g.x * rhat.x;
                let sym_xy = g.x * rhat.y + g.y * rhat.x;
                let sym_yy = 2.0 * g.y * rhat.y;
                let b = lin * envpp / r2;
                let c = lin * envp / (rho * r2);
                let xx = a * sym_xx + b * rhat.x * rhat.x + c * (1.0 - rhat.x * rhat.x);
                let xy = a * sym_xy + b * rhat.x * rhat.y - c * rhat.x * rhat.y;
                let yy = a * sym_yy + b * rhat.y * rhat.y + c * (1.0 - rhat.y * rhat.y);
                (amplitude * xx, amplitude * xy, amplitude * yy)
            }
            _ => {
                let (_, fp, fpp) = radial(&self.space, rho);
                if rho == 0.0 {
                    // radial limit: f''(0)/R^2 I
                    return (fpp / r2, 0.0, fpp / r2);
                }
                let rhat = d / d.norm();
                let radial_term = fpp / r2;
                let tangent_term = fp / (rho * r2);
                let xx = radial_term * rhat.x * rhat.x + tangent_term * (1.0 - rhat.x * rhat.x);
                let xy = (radial_term - tangent_term) * rhat.x * rhat.y;
                let yy = radial_term * rhat.y * rhat.y + tangent_term * (1.0 - rhat.y * rhat.y);
                (xx, xy, yy)
            }
        }
    }

    /// True if the space-time support of phi intersects the disk swept by
    /// `p(t)` over the time support (used to classify tip-covering bumps).
    pub fn covers_trajectory_point(&self, p: impl Fn(f64) -> Vec2) -> bool {
        let t_lo = (self.time.t0 - self.time.width).max(0.0);
        let t_hi = self.time.support_end();
        let steps = 64;
        for k in 0..=steps {
            let t = t_lo + (t_hi - t_lo) * k as f64 / steps as f64;
            if self.spatial(p(t)).abs() > 0.0 && self.time.value(t) > 0.0 {
                return true;
            }
        }
        false
    }
}

fn spectral_norm(h: (f64, f64, f64)) -> f64 {
    let (a, b, c) = h;
    let tr = 0.5 * (a + c);
    let det = ((a - c) * 0.5).hypot(b);
    (tr + det).abs().max((tr - det).abs())
}
