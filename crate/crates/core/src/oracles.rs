//! Exact and semi-analytic reference solutions.
//!
//! The elliptically loaded wing (Prandtl-Munk sheet) is the sharpness
//! anchor: a flat sheet on [-1, 1] with density s/sqrt(1 - s^2) that
//! translates rigidly at speed 1/2 downward. Its states are stored in the
//! Chebyshev variable theta (s = -cos theta), where the transformed
//! density -cos theta is bounded and smooth. Flat uniform periodic sheets
//! are stationary references; small sinusoidal perturbations of them feed
//! the equivalence and conservation studies.

use crate::error::{Error, Result};
use crate::kernels::{pv_velocity_all, QuadratureSpec};
use crate::state::{ParamKind, SheetState, SheetTrajectory, Topology};
use crate::vec2::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlatUniformSpec {
    pub period: f64,
    pub gbar: f64,
    /// Number of distinct nodes per period (even).
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PrandtlMunkSpec {
    /// Number of Chebyshev intervals: nodes sit at s_j = -cos(pi j / n).
    pub n: usize,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PeriodicPerturbedSpec {
    pub period: f64,
    pub gbar: f64,
    pub amplitude: f64,
    pub wavenumber: usize,
    /// Number of distinct nodes per period (even).
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OracleSpec {
    FlatUniform(FlatUniformSpec),
    PrandtlMunk(PrandtlMunkSpec),
    PeriodicPerturbed(PeriodicPerturbedSpec),
}

/// One time slice of the Prandtl-Munk evolution xi(s, t) = (s, -t/2),
/// gamma(s, t) = s / sqrt(1 - s^2), in Chebyshev parametrization.
pub fn prandtl_munk_state(n_intervals: usize, t: f64) -> Result<SheetState> {
    if n_intervals < 4 {
        return Err(Error::InvalidState("need at least 4 intervals".into()));
    }
    let n = n_intervals + 1;
    let eta: Vec<f64> = (0..n).map(|j| PI * j as f64 / n_intervals as f64).collect();
    let xi: Vec<Vec2> = eta.iter().map(|&th| Vec2::new(-th.cos(), -0.5 * t)).collect();
    let sigma: Vec<f64> = eta.iter().map(|&th| -th.cos()).collect();
    SheetState::new(t, ParamKind::Lagrangian, Topology::Open, eta, xi, sigma)
}

/// Exact translating trajectory of the elliptically loaded wing.
pub fn prandtl_munk_trajectory(spec: &PrandtlMunkSpec) -> Result<SheetTrajectory> {
    if !(spec.dt > 0.0) || !(spec.t_end > 0.0) {
        return Err(Error::InvalidState("dt and t_end must be positive".into()));
    }
    let steps = (spec.t_end / spec.dt).round() as usize;
    let mut states = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        states.push(prandtl_munk_state(spec.n, k as f64 * spec.dt)?);
    }
    SheetTrajectory::new(states)
}

/// Flat uniform x-periodic sheet: the stationary reference state.
pub fn flat_uniform_state(spec: &FlatUniformSpec) -> Result<SheetState> {
    if spec.n < 4 || spec.n % 2 != 0 {
        return Err(Error::InvalidState(
            "flat_uniform needs an even node count of at least 4".into(),
        ));
    }
    let n = spec.n + 1;
    let eta: Vec<f64> = (0..n)
        .map(|j| spec.period * j as f64 / spec.n as f64)
        .collect();
    let xi: Vec<Vec2> = eta.iter().map(|&e| Vec2::new(e, 0.0)).collect();
    SheetState::new(
        0.0,
        ParamKind::Arclength,
        Topology::Closed,
        eta,
        xi,
        vec![spec.gbar; n],
    )
}

/// Sinusoidally perturbed periodic sheet, density uniform per unit
/// parameter. The returned state is Lagrangian-parametrized; callers
/// wanting the arclength chart reparametrize it.
pub fn periodic_perturbed_state(spec: &PeriodicPerturbedSpec) -> Result<SheetState> {
    if spec.n < 4 || spec.n % 2 != 0 {
        return Err(Error::InvalidState(
            "periodic_perturbed needs an even node count of at least 4".into(),
        ));
    }
    let n = spec.n + 1;
    let kappa = 2.0 * PI * spec.wavenumber as f64 / spec.period;
    let eta: Vec<f64> = (0..n)
        .map(|j| spec.period * j as f64 / spec.n as f64)
        .collect();
    let xi: Vec<Vec2> = eta
        .iter()
        .map(|&x| Vec2::new(x, spec.amplitude * (kappa * x).sin()))
        .collect();
    SheetState::new(
        0.0,
        ParamKind::Lagrangian,
        Topology::Closed,
        eta,
        xi,
        vec![spec.gbar; n],
    )
}

pub fn build_initial_state(spec: &OracleSpec) -> Result<SheetState> {
    match spec {
        OracleSpec::FlatUniform(s) => flat_uniform_state(s),
        OracleSpec::PrandtlMunk(s) => prandtl_munk_state(s.n, 0.0),
        OracleSpec::PeriodicPerturbed(s) => periodic_perturbed_state(s),
    }
}

/// Growth rate of the linearized evolution at the flat uniform state, per
/// perturbation wavenumber: the restricted finite-difference Jacobian of
/// the discrete velocity operator on the four-dimensional mode-k subspace,
/// dominant eigenvalue by power iteration on its square.
pub fn kh_linearized_growth(
    base: &SheetState,
    wavenumbers: &[usize],
    spec: &QuadratureSpec,
) -> Result<Vec<(usize, f64)>> {
    base.validate()?;
    if base.topology != Topology::Closed {
        return Err(Error::InvalidState(
            "linearized growth is computed about a periodic base state".into(),
        ));
    }
    let n = base.len();
    let m = n - 1;
    let mut out = Vec::new();
    for &k in wavenumbers {
        if k == 0 {
            out.push((0, 0.0));
            continue;
        }
        // mode-k basis: x/y displacements with cos/sin phases
        let mut basis: Vec<Vec<Vec2>> = Vec::with_capacity(4);
        for comp in 0..2 {
            for phase in 0..2 {
                let mut v = vec![Vec2::ZERO; n];
                for (j, vj) in v.iter_mut().enumerate().take(m) {
                    let ang = 2.0 * PI * (k * j) as f64 / m as f64;
                    let val = if phase == 0 { ang.cos() } else { ang.sin() };
                    if comp == 0 {
                        vj.x = val;
                    } else {
                        vj.y = val;
                    }
                }
                v[m] = v[0];
                basis.push(v);
            }
        }
        let eps = 1e-6 * base.diameter().max(1.0);
        let mut a = [[0.0f64; 4]; 4];
        for (b, vb) in basis.iter().enumerate() {
            let up = perturbed_velocity(base, vb, eps, spec)?;
            let um = perturbed_velocity(base, vb, -eps, spec)?;
            let col: Vec<Vec2> = up
                .iter()
                .zip(&um)
                .map(|(p, q)| (*p - *q) / (2.0 * eps))
                .collect();
            for (r, vr) in basis.iter().enumerate() {
                let mut dot = 0.0;
                for j in 0..m {
                    dot += vr[j].dot(col[j]);
                }
                a[r][b] = dot / (m as f64 / 2.0);
            }
        }
        let rate = dominant_growth(&a)?;
        out.push((k, rate));
    }
    Ok(out)
}

fn perturbed_velocity(
    base: &SheetState,
    dir: &[Vec2],
    eps: f64,
    spec: &QuadratureSpec,
) -> Result<Vec<Vec2>> {
    let mut s = base.clone();
    for j in 0..s.len() {
        s.xi[j] += dir[j] * eps;
    }
    Ok(pv_velocity_all(&s, spec)?.iter().map(|p| p.v).collect())
}

/// Largest |Re lambda| of a small matrix whose spectrum comes in +/- pairs:
/// power iteration on A^2 (dominant eigenvalue rate^2).
fn dominant_growth(a: &[[f64; 4]; 4]) -> Result<f64> {
    let mul = |m: &[[f64; 4]; 4], v: &[f64; 4]| -> [f64; 4] {
        let mut r = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                r[i] += m[i][j] * v[j];
            }
        }
        r
    };
    let mut a2 = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for l in 0..4 {
                a2[i][j] += a[i][l] * a[l][j];
            }
        }
    }
    let mut v = [1.0, 0.5, 0.25, 0.125];
    let mut lambda = 0.0;
    for it in 0..500 {
        let w = mul(&a2, &v);
        let norm = (w.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = [w[0] / norm, w[1] / norm, w[2] / norm, w[3] / norm];
        let new_lambda = {
            let av = mul(&a2, &next);
            next.iter().zip(&av).map(|(x, y)| x * y).sum::<f64>()
        };
        let done = (new_lambda - lambda).abs() <= 1e-12 * new_lambda.abs().max(1.0);
        lambda = new_lambda;
        v = next;
        if done && it > 3 {
            return Ok(lambda.max(0.0).sqrt());
        }
    }
    Err(Error::NoConvergence(500))
}

/// Deterministic family of smooth densities on a closed grid of m distinct
/// nodes: unit mean plus a seeded Fourier series up to `max_mode` with
/// algebraically decaying coefficients.
pub fn random_smooth_density(m: usize, seed: u64, max_mode: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = Vec::new();
    for k in 1..=max_mode {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        let decay = (k as f64).powf(-1.5);
        coeffs.push((a * decay, b * decay));
    }
    let mut out: Vec<f64> = (0..m)
        .map(|j| {
            let x = 2.0 * PI * j as f64 / m as f64;
            let mut v = 1.0;
            for (k, (a, b)) in coeffs.iter().enumerate() {
                let kk = (k + 1) as f64;
                v += 0.5 * (a * (kk * x).cos() + b * (kk * x).sin());
            }
            v
        })
        .collect();
    out.push(out[0]);
    out
}

/// L^p(ds) norm of the density on the polyline.
pub fn density_lp_norm(state: &SheetState, p: f64) -> f64 {
    let w = state.eta_weights();
    let speed = state.speed();
    let mut acc = 0.0;
    for j in 0..state.len() {
        let gamma = (state.sigma[j] / speed[j]).abs();
        acc += w[j] * gamma.powf(p) * speed[j];
    }
    acc.powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{normal_defect, total_circulation};
    use crate::kernels::{velocity_off_sheet, PvFlag};
    use approx::assert_relative_eq;

    #[test]
    fn prandtl_munk_time_slices() {
        let traj = prandtl_munk_trajectory(&PrandtlMunkSpec {
            n: 64,
            t_end: 1.0,
            dt: 0.25,
        })
        .unwrap();
        let s0 = &traj.states[0];
        assert_relative_eq!(s0.xi[0].x, -1.0);
        assert_relative_eq!(s0.xi.last().unwrap().x, 1.0);
        assert_relative_eq!(s0.xi[0].y, 0.0);
        let s1 = traj.states.last().unwrap();
        assert_relative_eq!(s1.t, 1.0);
        for p in &s1.xi {
            assert_relative_eq!(p.y, -0.5);
        }
        // density constant in time
        for (a, b) in s0.sigma.iter().zip(&s1.sigma) {
            assert_eq!(a, b);
        }
        // sigma(theta) = gamma ds/dtheta = -cos theta
        assert_relative_eq!(s0.sigma[0], -1.0);
        assert_relative_eq!(s0.sigma[32], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn prandtl_munk_lp_norms_diverge_only_at_two() {
        let s_small = prandtl_munk_state(128, 0.0).unwrap();
        let s_big = prandtl_munk_state(2048, 0.0).unwrap();
        // p = 1.5 < 2: the norm settles under refinement
        let a = density_lp_norm(&s_small, 1.5);
        let b = density_lp_norm(&s_big, 1.5);
        assert!((b - a).abs() / a < 0.05, "L1.5 {a} -> {b}");
        // p = 2: the norm keeps growing under refinement
        let c = density_lp_norm(&s_small, 2.0);
        let d = density_lp_norm(&s_big, 2.0);
        assert!(d > c + 0.2, "L2 {c} -> {d}");
        // p = 3 grows much faster still
        let e = density_lp_norm(&s_small, 3.0);
        let f = density_lp_norm(&s_big, 3.0);
        assert!(f / e > 1.5, "L3 {e} -> {f}");
    }

    #[test]
    fn prandtl_munk_normal_defect_vanishes() {
        let traj = prandtl_munk_trajectory(&PrandtlMunkSpec {
            n: 64,
            t_end: 0.2,
            dt: 0.1,
        })
        .unwrap();
        let spec = QuadratureSpec::alternate_point();
        let u = pv_velocity_all(&traj.states[0], &spec).unwrap();
        let uv: Vec<Vec2> = u.iter().map(|p| p.v).collect();
        let b = normal_defect(&traj.states[0], &traj.states[1], &uv).unwrap();
        for (j, bj) in b.iter().enumerate().take(64).skip(1) {
            assert!(bj.abs() < 1e-8, "node {j}: b = {bj}");
        }
    }

    #[test]
    fn flat_uniform_is_discrete_fixed_point() {
        let s = flat_uniform_state(&FlatUniformSpec {
            period: 2.0 * PI,
            gbar: 1.0,
            n: 64,
        })
        .unwrap();
        let u = pv_velocity_all(&s, &QuadratureSpec::alternate_point()).unwrap();
        for p in &u {
            assert!(p.v.norm() < 1e-13);
            assert_eq!(p.flag, PvFlag::Ok);
        }
    }

    #[test]
    fn flat_uniform_off_sheet_velocity() {
        let gbar = 1.3;
        let l = 2.0 * PI;
        let s = flat_uniform_state(&FlatUniformSpec {
            period: l,
            gbar,
            n: 128,
        })
        .unwrap();
        for &h in &[0.5, 1.0] {
            let above = velocity_off_sheet(&s, Vec2::new(1.234, h)).unwrap().v;
            let below = velocity_off_sheet(&s, Vec2::new(1.234, -h)).unwrap().v;
            assert_relative_eq!(above.x, -gbar / 2.0, max_relative = 1e-10);
            assert_relative_eq!(below.x, gbar / 2.0, max_relative = 1e-10);
            assert!(above.y.abs() < 1e-12 && below.y.abs() < 1e-12);
        }
    }

    #[test]
    fn kh_growth_scales_linearly_in_k_and_gbar() {
        let spec = QuadratureSpec::alternate_point();
        let base = flat_uniform_state(&FlatUniformSpec {
            period: 2.0 * PI,
            gbar: 1.3,
            n: 64,
        })
        .unwrap();
        let rates = kh_linearized_growth(&base, &[1, 2, 4], &spec).unwrap();
        let r1 = rates[0].1;
        let r2 = rates[1].1;
        let r4 = rates[2].1;
        assert_relative_eq!(r1, 1.3 / 2.0, max_relative = 1e-3);
        assert_relative_eq!(r2 / r1, 2.0, max_relative = 1e-3);
        assert_relative_eq!(r4 / r2, 2.0, max_relative = 1e-3);

        let base2 = flat_uniform_state(&FlatUniformSpec {
            period: 2.0 * PI,
            gbar: 2.6,
            n: 64,
        })
        .unwrap();
        let rr = kh_linearized_growth(&base2, &[1], &spec).unwrap()[0].1;
        assert_relative_eq!(rr / r1, 2.0, max_relative = 1e-3);

        // zero perturbation wavenumber: zero rate
        let z = kh_linearized_growth(&base, &[0], &spec).unwrap()[0].1;
        assert_eq!(z, 0.0);
    }

    #[test]
    fn oracle_states_round_trip_through_json() {
        let states = [
            flat_uniform_state(&FlatUniformSpec {
                period: 2.0 * PI,
                gbar: 0.7,
                n: 16,
            })
            .unwrap(),
            prandtl_munk_state(16, 0.3).unwrap(),
            periodic_perturbed_state(&PeriodicPerturbedSpec {
                period: 2.0 * PI,
                gbar: 1.0,
                amplitude: 0.01,
                wavenumber: 3,
                n: 16,
            })
            .unwrap(),
        ];
        for s in &states {
            let j = s.to_json().unwrap();
            let b = SheetState::from_json(&j).unwrap();
            assert_eq!(s.eta, b.eta);
            assert_eq!(s.xi, b.xi);
            assert_eq!(s.sigma, b.sigma);
            assert_eq!(s.t, b.t);
        }
    }

    #[test]
    fn random_densities_are_deterministic_and_smooth() {
        let a = random_smooth_density(64, 17, 6);
        let b = random_smooth_density(64, 17, 6);
        assert_eq!(a, b);
        let c = random_smooth_density(64, 18, 6);
        assert_ne!(a, c);
        assert_eq!(a.len(), 65);
        assert_eq!(a[0], a[64]);
    }

    #[test]
    fn perturbed_state_total_circulation() {
        let s = periodic_perturbed_state(&PeriodicPerturbedSpec {
            period: 2.0 * PI,
            gbar: 1.5,
            amplitude: 0.01,
            wavenumber: 1,
            n: 32,
        })
        .unwrap();
        assert_relative_eq!(total_circulation(&s), 1.5 * 2.0 * PI, max_relative = 1e-12);
    }
}
