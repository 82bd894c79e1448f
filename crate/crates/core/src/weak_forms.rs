//! Weak-form residual functionals on sheet trajectories.
//!
//! The weak sheet identity pairs the density with a test function along
//! the trajectory: the transport form uses the principal-value velocity,
//! the vorticity form replaces it with the symmetrized double integral of
//! H_phi. For square-integrable densities on uniformly regular curves the
//! two residuals agree in the refinement limit; the sharpness example
//! (the elliptically loaded wing) separates them through its tips.
//!
//! Residuals are evaluated at three joint space-time coarsenings of the
//! stored trajectory and Aitken-extrapolated; "zero residual" means the
//! extrapolated limit falls below the floor 1e-4 times the scale of the
//! linear terms.
//!
//! For x-periodic sheets the test function is replaced by the sum of its
//! horizontal translates that meet the principal period, and the kernel by
//! the periodic image sum; compact support makes both sums finite.

use crate::error::{Error, Result};
use crate::kernels::{pv_velocity_all, Kernel, QuadratureSpec};
use crate::state::{SheetState, SheetTrajectory, Topology};
use crate::test_function::{SpaceProfile, TestFunction, TimeProfile};
use crate::vec2::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Floor coefficient of the zero / nonzero decision rule.
pub const DECISION_FLOOR_COEFF: f64 = 1e-4;

/// Test function together with the image translates needed on an
/// x-periodic sheet.
struct PhiOnSheet<'a> {
    phi: &'a TestFunction,
    shifts: Vec<f64>,
}

impl<'a> PhiOnSheet<'a> {
    fn new(phi: &'a TestFunction, state: &SheetState) -> Self {
        let shifts = match state.period() {
            Some(p) if p > 0.0 => {
                let (lo, hi) = state.bounding_box();
                let mut v = Vec::new();
                let n_lo = ((lo.x - phi.center.x - phi.radius) / p).floor() as i64 - 1;
                let n_hi = ((hi.x - phi.center.x + phi.radius) / p).ceil() as i64 + 1;
                for k in n_lo..=n_hi {
                    v.push(k as f64 * p);
                }
                v
            }
            _ => vec![0.0],
        };
        PhiOnSheet { phi, shifts }
    }

    fn value(&self, x: Vec2, t: f64) -> f64 {
        self.shifts
            .iter()
            .map(|&s| self.phi.value(x - Vec2::new(s, 0.0), t))
            .sum()
    }

    fn phi_t(&self, x: Vec2, t: f64) -> f64 {
        self.shifts
            .iter()
            .map(|&s| self.phi.phi_t(x - Vec2::new(s, 0.0), t))
            .sum()
    }

    fn grad(&self, x: Vec2, t: f64) -> Vec2 {
        let mut g = Vec2::ZERO;
        for &s in &self.shifts {
            g += self.phi.grad(x - Vec2::new(s, 0.0), t);
        }
        g
    }
}

/// Per-state pieces of a residual evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ResidualBreakdown {
    pub time_term: f64,
    pub transport_term: f64,
    pub interaction_term: f64,
    pub initial_term: f64,
}

fn linear_interp_state(state: &SheetState, eta: f64) -> (Vec2, f64) {
    let n = state.len();
    let e = eta.clamp(state.eta[0], state.eta[n - 1]);
    let j = match state
        .eta
        .binary_search_by(|v| v.partial_cmp(&e).unwrap())
    {
        Ok(k) => return (state.xi[k], state.sigma[k]),
        Err(k) => k.clamp(1, n - 1) - 1,
    };
    let f = (e - state.eta[j]) / (state.eta[j + 1] - state.eta[j]);
    (
        state.xi[j] + (state.xi[j + 1] - state.xi[j]) * f,
        state.sigma[j] * (1.0 - f) + state.sigma[j + 1] * f,
    )
}

/// Interaction (H_phi) term of one state: the double sum over node pairs
/// with the diagonal cells integrated by an antisymmetric two-point sample
/// just off the diagonal, where H is continuous and bounded.
fn interaction_term(state: &SheetState, phi: &TestFunction) -> f64 {
    let kernel = Kernel::for_state(state);
    let p = PhiOnSheet::new(phi, state);
    let t = state.t;
    let n = state.len();
    let w = state.eta_weights();
    let g: Vec<Vec2> = (0..n).map(|i| p.grad(state.xi[i], t)).collect();
    let ws: Vec<f64> = (0..n).map(|i| w[i] * state.sigma[i]).collect();

    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in i + 1..n {
                let d = state.xi[i] - state.xi[j];
                let k = kernel.eval(d);
                let h = (g[i] - g[j]).dot(k) * 0.5;
                acc += 2.0 * ws[i] * ws[j] * h;
            }
            // diagonal cell, sampled symmetrically off the diagonal
            let off = w[i] / (2.0 * 3.0f64.sqrt());
            let (xa, sa) = linear_interp_state(state, state.eta[i] - off);
            let (xb, sb) = linear_interp_state(state, state.eta[i] + off);
            if xa != xb {
                let k = kernel.eval(xa - xb);
                let h = (p.grad(xa, t) - p.grad(xb, t)).dot(k) * 0.5;
                acc += w[i] * w[i] * sa * sb * h;
            }
            acc
        })
        .collect();
    rows.iter().sum()
}

/// Linear (time-derivative) term of one state.
fn time_term(state: &SheetState, phi: &TestFunction) -> f64 {
    let p = PhiOnSheet::new(phi, state);
    let w = state.eta_weights();
    (0..state.len())
        .map(|j| w[j] * state.sigma[j] * p.phi_t(state.xi[j], state.t))
        .sum()
}

/// Transport term of one state: gamma U . grad phi, with U recomputed from
/// the stored state by the configured principal-value scheme.
fn transport_term(state: &SheetState, phi: &TestFunction, spec: &QuadratureSpec) -> Result<f64> {
    let p = PhiOnSheet::new(phi, state);
    let u = pv_velocity_all(state, spec)?;
    if u.iter().any(|v| !v.v.is_finite()) {
        return Err(Error::InvalidState(
            "non-finite sheet velocity in weak form".into(),
        ));
    }
    let w = state.eta_weights();
    Ok((0..state.len())
        .map(|j| w[j] * state.sigma[j] * u[j].v.dot(p.grad(state.xi[j], state.t)))
        .sum())
}

fn initial_term(state0: &SheetState, phi: &TestFunction) -> f64 {
    let p = PhiOnSheet::new(phi, state0);
    let w = state0.eta_weights();
    (0..state0.len())
        .map(|j| w[j] * state0.sigma[j] * p.value(state0.xi[j], 0.0))
        .sum()
}

fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let d = 0.5 * (times[k + 1] - times[k]);
        w[k] += d;
        w[k + 1] += d;
    }
    w
}

fn coarsen_state(s: &SheetState, stride: usize) -> SheetState {
    if stride == 1 {
        return s.clone();
    }
    let idx: Vec<usize> = (0..s.len()).step_by(stride).collect();
    debug_assert_eq!(*idx.last().unwrap(), s.len() - 1);
    SheetState {
        t: s.t,
        param_kind: s.param_kind,
        topology: s.topology,
        eta: idx.iter().map(|&j| s.eta[j]).collect(),
        xi: idx.iter().map(|&j| s.xi[j]).collect(),
        sigma: idx.iter().map(|&j| s.sigma[j]).collect(),
    }
}

fn coarsen_trajectory(traj: &SheetTrajectory, stride: usize) -> Vec<SheetState> {
    traj.states
        .iter()
        .step_by(stride)
        .cloned()
        .collect()
}

/// Strides usable on this trajectory: node and state counts must subsample
/// evenly so every level keeps the endpoints (and closure).
pub fn valid_strides(traj: &SheetTrajectory) -> Vec<usize> {
    let nt = traj.states.len();
    let nn = traj.states[0].len();
    [4usize, 2, 1]
        .into_iter()
        .filter(|&s| (nt - 1) % s == 0 && (nn - 1) % s == 0)
        .collect()
}

fn check_support(traj: &SheetTrajectory, phi: &TestFunction) -> Result<()> {
    if phi.time.support_end() > traj.t_end() + 1e-12 {
        return Err(Error::InvalidState(format!(
            "test function {} has time support up to {} beyond the trajectory end {}",
            phi.id,
            phi.time.support_end(),
            traj.t_end()
        )));
    }
    Ok(())
}

/// Weak transport-form residual at one coarsening stride.
pub fn weak_br_residual_at(
    traj: &SheetTrajectory,
    phi: &TestFunction,
    spec: &QuadratureSpec,
    stride: usize,
) -> Result<f64> {
    check_support(traj, phi)?;
    let states = coarsen_trajectory(traj, stride);
    let coarse: Vec<SheetState> = states.iter().map(|s| coarsen_state(s, stride)).collect();
    let times: Vec<f64> = coarse.iter().map(|s| s.t).collect();
    let wt = time_weights(&times);
    let inner: Vec<f64> = coarse
        .par_iter()
        .map(|s| -> Result<f64> { Ok(time_term(s, phi) + transport_term(s, phi, spec)?) })
        .collect::<Result<Vec<f64>>>()?;
    let integral: f64 = inner.iter().zip(&wt).map(|(v, w)| v * w).sum();
    Ok(integral + initial_term(&coarse[0], phi))
}

/// Weak vorticity-form residual at one coarsening stride.
pub fn weak_euler_residual_at(
    traj: &SheetTrajectory,
    phi: &TestFunction,
    stride: usize,
) -> Result<f64> {
    check_support(traj, phi)?;
    let states = coarsen_trajectory(traj, stride);
    let coarse: Vec<SheetState> = states.iter().map(|s| coarsen_state(s, stride)).collect();
    let times: Vec<f64> = coarse.iter().map(|s| s.t).collect();
    let wt = time_weights(&times);
    let inner: Vec<f64> = coarse
        .par_iter()
        .map(|s| time_term(s, phi) + interaction_term(s, phi))
        .collect();
    let integral: f64 = inner.iter().zip(&wt).map(|(v, w)| v * w).sum();
    Ok(integral + initial_term(&coarse[0], phi))
}

/// Weak Birkhoff-Rott residual at the trajectory's stored resolution.
pub fn weak_br_residual(
    traj: &SheetTrajectory,
    phi: &TestFunction,
    spec: &QuadratureSpec,
) -> Result<f64> {
    weak_br_residual_at(traj, phi, spec, 1)
}

/// Weak Euler (vorticity-form) residual at the stored resolution.
pub fn weak_euler_residual(
    traj: &SheetTrajectory,
    phi: &TestFunction,
    _spec: &QuadratureSpec,
) -> Result<f64> {
    weak_euler_residual_at(traj, phi, 1)
}

/// Both sides of the fixed-cutoff symmetrization identity on one state:
/// the single sum pairs grad phi with the truncated velocity, the double
/// sum pairs H_phi with the density twice. They agree to rounding for any
/// state, any test function, and any cutoff.
pub fn diagonal_equivalence_check(
    state: &SheetState,
    phi: &TestFunction,
    eps: f64,
) -> (f64, f64) {
    assert!(eps > 0.0, "cutoff must be positive");
    let kernel = Kernel::for_state(state);
    let p = PhiOnSheet::new(phi, state);
    let t = state.t;
    let n = state.len();
    let w = state.eta_weights();
    let g: Vec<Vec2> = (0..n).map(|i| p.grad(state.xi[i], t)).collect();

    let mut single = 0.0;
    for i in 0..n {
        let mut inner = Vec2::ZERO;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = state.xi[i] - state.xi[j];
            if kernel.dist(d) < eps {
                continue;
            }
            inner += kernel.eval(d) * (w[j] * state.sigma[j]);
        }
        single += w[i] * state.sigma[i] * g[i].dot(inner);
    }

    let mut double = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = state.xi[i] - state.xi[j];
            if kernel.dist(d) < eps {
                continue;
            }
            let h = (g[i] - g[j]).dot(kernel.eval(d)) * 0.5;
            double += w[i] * state.sigma[i] * w[j] * state.sigma[j] * h;
        }
    }
    (single, double)
}

/// Magnitude scale of the identity's linear terms, with the integrands
/// taken in absolute value so parity cancellations cannot zero it out:
/// max of int int |sigma phi_t|, int int |sigma U . grad phi|, and
/// int |sigma_0 phi(., 0)|.
pub fn linear_term_scale(
    traj: &SheetTrajectory,
    phi: &TestFunction,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let times: Vec<f64> = traj.states.iter().map(|s| s.t).collect();
    let wt = time_weights(&times);
    let per_state: Vec<(f64, f64)> = traj
        .states
        .par_iter()
        .map(|s| -> Result<(f64, f64)> {
            let p = PhiOnSheet::new(phi, s);
            let w = s.eta_weights();
            let mut abs_time = 0.0;
            for j in 0..s.len() {
                abs_time += w[j] * (s.sigma[j] * p.phi_t(s.xi[j], s.t)).abs();
            }
            let u = pv_velocity_all(s, spec)?;
            let mut abs_transport = 0.0;
            for j in 0..s.len() {
                abs_transport +=
                    w[j] * (s.sigma[j] * u[j].v.dot(p.grad(s.xi[j], s.t))).abs();
            }
            Ok((abs_time, abs_transport))
        })
        .collect::<Result<Vec<_>>>()?;
    let abs_time: f64 = per_state.iter().zip(&wt).map(|(v, w)| v.0 * w).sum();
    let abs_transport: f64 = per_state.iter().zip(&wt).map(|(v, w)| v.1 * w).sum();
    let s0 = &traj.states[0];
    let p0 = PhiOnSheet::new(phi, s0);
    let w0 = s0.eta_weights();
    let abs_init: f64 = (0..s0.len())
        .map(|j| w0[j] * (s0.sigma[j] * p0.value(s0.xi[j], 0.0)).abs())
        .sum();
    Ok(abs_time.max(abs_transport).max(abs_init))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefinementRow {
    pub resolution: usize,
    pub residual_br: f64,
    pub residual_euler: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Decision {
    /// Aitken-extrapolated limit of the refinement sequence.
    pub limit: f64,
    pub order_estimate: f64,
    pub converged: bool,
    /// True when the limit falls below the decision floor.
    pub vanishes: bool,
}

fn decide(values: &[f64], floor: f64) -> Decision {
    let m = values.len();
    let r3 = values[m - 1];
    if m < 3 {
        let converged = m == 2 && {
            let d = (values[1] - values[0]).abs();
            d < 0.1 * values[1].abs().max(values[0].abs()) || d <= floor
        };
        return Decision {
            limit: r3,
            order_estimate: f64::NAN,
            converged,
            vanishes: r3.abs() <= floor,
        };
    }
    let (r1, r2) = (values[m - 3], values[m - 2]);
    let d1 = r2 - r1;
    let d2 = r3 - r2;
    let (limit, order) = if d2.abs() <= 1e-300 {
        (r3, 99.0)
    } else {
        let order = (d1.abs() / d2.abs()).log2();
        let denom = d2 - d1;
        let limit = if denom.abs() <= 1e-300 {
            r3
        } else {
            r3 - d2 * d2 / denom
        };
        (limit, order)
    };
    let converged = d2.abs() < 0.1 * r3.abs().max(r2.abs()) || d2.abs() <= floor;
    Decision {
        limit,
        order_estimate: order,
        converged,
        vanishes: limit.abs() <= floor || r3.abs() <= floor,
    }
}

/// Full diagnostic for one test function: residuals across refinement
/// levels, extrapolated limits, convergence flags, and the zero / nonzero
/// decisions. `residual_br` / `residual_euler` are the extrapolated
/// limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub test_function_id: String,
    pub residual_br: f64,
    pub residual_euler: f64,
    pub quadrature_refinements: Vec<RefinementRow>,
    pub converged_br: bool,
    pub converged_euler: bool,
    pub pass_br: bool,
    pub pass_euler: bool,
    pub order_br: f64,
    pub order_euler: f64,
    pub floor: f64,
}

/// Evaluate both residuals across the trajectory's valid coarsening
/// levels and apply the decision rule.
pub fn evaluate_residuals(
    traj: &SheetTrajectory,
    phi: &TestFunction,
    spec: &QuadratureSpec,
) -> Result<ResidualReport> {
    let mut strides = valid_strides(traj);
    if strides.is_empty() {
        strides = vec![1];
    }
    let mut rows = Vec::new();
    for &s in &strides {
        let res = ((traj.states[0].len() - 1) / s) + 1;
        let br = weak_br_residual_at(traj, phi, spec, s)?;
        let eu = weak_euler_residual_at(traj, phi, s)?;
        rows.push(RefinementRow {
            resolution: res,
            residual_br: br,
            residual_euler: eu,
        });
    }
    rows.sort_by_key(|r| r.resolution);

    let floor = DECISION_FLOOR_COEFF * linear_term_scale(traj, phi, spec)?;

    let br_vals: Vec<f64> = rows.iter().map(|r| r.residual_br).collect();
    let eu_vals: Vec<f64> = rows.iter().map(|r| r.residual_euler).collect();
    let db = decide(&br_vals, floor);
    let de = decide(&eu_vals, floor);

    Ok(ResidualReport {
        test_function_id: phi.id.clone(),
        residual_br: db.limit,
        residual_euler: de.limit,
        quadrature_refinements: rows,
        converged_br: db.converged,
        converged_euler: de.converged,
        pass_br: db.vanishes,
        pass_euler: de.vanishes,
        order_br: db.order_estimate,
        order_euler: de.order_estimate,
        floor,
    })
}

/// Deterministic suite of test functions for a trajectory.
///
/// Construction rules, in order: a centroid bump of radius diameter/4;
/// for open sheets one bump over each tip (their whole trajectory); an
/// off-sheet bump above the swept region; a linear-core bump whose plateau
/// covers the sheet near the centroid; then node-centered bumps with
/// cycling radii, time profiles, and profile kinds. Centers depend only on
/// the stored geometry, so the suite is reproducible.
pub fn build_test_suite(traj: &SheetTrajectory, n: usize) -> Vec<TestFunction> {
    assert!(n >= 1);
    let t_end = traj.t_end();
    let s0 = &traj.states[0];
    let diam = s0.diameter();
    let centroid = s0.xi.iter().fold(Vec2::ZERO, |a, &p| a + p) / s0.len() as f64;

    let early = TimeProfile {
        t0: 0.0,
        width: 0.55 * t_end,
    };
    let mid = TimeProfile {
        t0: 0.4 * t_end,
        width: 0.5 * t_end,
    };
    let late = TimeProfile {
        t0: 0.6 * t_end,
        width: 0.4 * t_end,
    };
    let profiles = [early, mid, late];

    let mut suite: Vec<TestFunction> = Vec::new();
    suite.push(TestFunction::new(
        "tf00_centroid",
        SpaceProfile::PolynomialBump { amplitude: 1.0 },
        centroid,
        diam / 4.0,
        early,
    ));

    if s0.topology == Topology::Open {
        for (label, node) in [("tip_lo", 0usize), ("tip_hi", s0.len() - 1)] {
            // center on the tip's position midway through the bump's life,
            // radius large enough to hold the tip for the whole window
            let t_mid = mid.t0;
            let tip_path = |t: f64| tip_position(traj, node, t);
            let center = tip_path(t_mid);
            let mut radius = diam / 6.0;
            let reach = tip_path(mid.t0 + mid.width).dist(center).max(
                tip_path((mid.t0 - mid.width).max(0.0)).dist(center),
            );
            radius = radius.max(1.5 * reach);
            suite.push(TestFunction::new(
                format!("tf{:02}_{label}", suite.len()),
                SpaceProfile::PolynomialBump { amplitude: 1.0 },
                center,
                radius,
                mid,
            ));
            if suite.len() == n {
                return truncate_ids(suite, n);
            }
        }
    }

    // off-sheet bump, above everything the trajectory sweeps
    let mut y_hi = f64::NEG_INFINITY;
    for s in &traj.states {
        for p in &s.xi {
            y_hi = y_hi.max(p.y);
        }
    }
    suite.push(TestFunction::new(
        format!("tf{:02}_offsheet", suite.len()),
        SpaceProfile::GaussianBumpTruncated { amplitude: 1.0 },
        Vec2::new(centroid.x, y_hi + 0.45 * diam),
        0.3 * diam,
        mid,
    ));

    suite.push(TestFunction::new(
        format!("tf{:02}_lincore", suite.len()),
        SpaceProfile::LinearCore {
            amplitude: 1.0,
            gx: 0.8,
            gy: 0.6,
        },
        centroid,
        diam / 3.0,
        early,
    ));

    let radii = [diam / 4.0, diam / 6.0, diam / 5.0];
    let mut k = 0usize;
    while suite.len() < n {
        let node = (k * 7919 + 3) % s0.distinct_nodes();
        let state_idx = (k * 5) % traj.states.len();
        let center = traj.states[state_idx].xi[node];
        let profile = profiles[k % profiles.len()];
        let radius = radii[k % radii.len()];
        let space = if k % 2 == 0 {
            SpaceProfile::PolynomialBump { amplitude: 1.0 }
        } else {
            SpaceProfile::GaussianBumpTruncated { amplitude: 1.0 }
        };
        suite.push(TestFunction::new(
            format!("tf{:02}_node{node}", suite.len()),
            space,
            center,
            radius,
            profile,
        ));
        k += 1;
    }
    truncate_ids(suite, n)
}

fn truncate_ids(mut suite: Vec<TestFunction>, n: usize) -> Vec<TestFunction> {
    suite.truncate(n);
    suite
}

/// Position of a boundary node at an arbitrary time, interpolated linearly
/// between stored states.
pub fn tip_position(traj: &SheetTrajectory, node: usize, t: f64) -> Vec2 {
    let states = &traj.states;
    if t <= states[0].t {
        return states[0].xi[node];
    }
    if t >= states.last().unwrap().t {
        return states.last().unwrap().xi[node];
    }
    let mut k = 0;
    while states[k + 1].t < t {
        k += 1;
    }
    let f = (t - states[k].t) / (states[k + 1].t - states[k].t);
    states[k].xi[node] + (states[k + 1].xi[node] - states[k].xi[node]) * f
}

/// True when the test function's space-time support meets the trajectory
/// of the given boundary node.
pub fn covers_tip(traj: &SheetTrajectory, phi: &TestFunction, node: usize) -> bool {
    phi.covers_trajectory_point(|t| tip_position(traj, node, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use crate::state::ParamKind;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn pm_traj(n_int: usize, t_end: f64, steps: usize) -> SheetTrajectory {
        oracles::prandtl_munk_trajectory(&oracles::PrandtlMunkSpec {
            n: n_int,
            t_end,
            dt: t_end / steps as f64,
        })
        .unwrap()
    }

    fn random_state(seed: u64, n: usize) -> SheetState {
        // smooth open curve with smooth density, deterministic in the seed
        let a = (seed % 97) as f64 / 97.0;
        let eta: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
        let xi: Vec<Vec2> = eta
            .iter()
            .map(|&e| {
                Vec2::new(
                    e + 0.1 * (2.0 * PI * e + a).sin(),
                    0.3 * (2.0 * PI * e * (1.0 + a)).cos(),
                )
            })
            .collect();
        let sg: Vec<f64> = eta.iter().map(|&e| 0.5 + (PI * e + 2.0 * a).sin()).collect();
        SheetState::new(0.1, ParamKind::Lagrangian, Topology::Open, eta, xi, sg).unwrap()
    }

    fn a_bump(center: Vec2, radius: f64) -> TestFunction {
        TestFunction::new(
            "bump",
            SpaceProfile::PolynomialBump { amplitude: 1.0 },
            center,
            radius,
            TimeProfile { t0: 0.2, width: 0.3 },
        )
    }

    #[test]
    fn zero_test_function_gives_zero_residual() {
        let traj = pm_traj(32, 0.4, 4);
        let phi = TestFunction::new(
            "zero",
            SpaceProfile::PolynomialBump { amplitude: 0.0 },
            Vec2::ZERO,
            1.0,
            TimeProfile { t0: 0.0, width: 0.2 },
        );
        let spec = QuadratureSpec::alternate_point();
        assert_eq!(weak_br_residual(&traj, &phi, &spec).unwrap(), 0.0);
        assert_eq!(weak_euler_residual(&traj, &phi, &spec).unwrap(), 0.0);
    }

    #[test]
    fn zero_density_gives_zero_both_sides() {
        let mut s = random_state(5, 33);
        s.sigma.iter_mut().for_each(|v| *v = 0.0);
        let phi = a_bump(Vec2::new(0.5, 0.0), 0.8);
        let (a, b) = diagonal_equivalence_check(&s, &phi, 0.1);
        assert_eq!(a, 0.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn symmetrization_identity_exact_on_random_states() {
        for seed in 0..25u64 {
            let n = 16 + (seed as usize * 13) % 48;
            let s = random_state(seed, n);
            let phi = a_bump(Vec2::new(0.5 + 0.01 * seed as f64, 0.05), 0.9);
            let eps = 0.03 + 0.01 * (seed % 7) as f64;
            let (single, double) = diagonal_equivalence_check(&s, &phi, eps);
            let tol = 1e-12 * single.abs().max(1.0);
            assert!(
                (single - double).abs() <= tol,
                "seed {seed}: {single} vs {double}"
            );
        }
    }

    #[test]
    fn symmetrization_identity_on_periodic_state() {
        let s = oracles::periodic_perturbed_state(&oracles::PeriodicPerturbedSpec {
            period: 2.0 * PI,
            gbar: 1.0,
            amplitude: 0.05,
            wavenumber: 2,
            n: 64,
        })
        .unwrap();
        let phi = a_bump(Vec2::new(1.0, 0.0), 1.5);
        let (single, double) = diagonal_equivalence_check(&s, &phi, 0.05);
        assert!(
            (single - double).abs() <= 1e-12 * single.abs().max(1.0),
            "{single} vs {double}"
        );
    }

    #[test]
    fn double_sum_converges_under_cutoff_sweep() {
        // dominated-convergence leg: the double side stabilizes as the
        // cutoff shrinks
        let traj = pm_traj(128, 0.4, 4);
        let s = &traj.states[0];
        let phi = a_bump(Vec2::new(0.3, -0.15), 0.5);
        let vals: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&e| diagonal_equivalence_check(s, &phi, e).1)
            .collect();
        let d1 = (vals[1] - vals[0]).abs();
        let d3 = (vals[3] - vals[2]).abs();
        assert!(d3 < d1, "sweep not settling: {vals:?}");
    }

    #[test]
    fn linear_core_kills_interaction_term() {
        // sheet inside the plateau: gradient differences vanish on the
        // sheet, so the H term is identically zero
        let traj = pm_traj(48, 0.4, 4);
        let s = &traj.states[0];
        let phi = TestFunction::new(
            "lin",
            SpaceProfile::LinearCore {
                amplitude: 1.0,
                gx: 0.3,
                gy: 0.9,
            },
            Vec2::ZERO,
            5.0,
            TimeProfile { t0: 0.0, width: 0.3 },
        );
        let h = interaction_term(s, &phi);
        assert!(h.abs() < 1e-13, "interaction {h}");
    }

    #[test]
    fn interaction_term_is_quadratic_in_density() {
        let traj = pm_traj(48, 0.4, 4);
        let mut s = traj.states[1].clone();
        let phi = a_bump(Vec2::new(0.4, -0.1), 0.6);
        let h1 = interaction_term(&s, &phi);
        let l1 = time_term(&s, &phi);
        s.sigma.iter_mut().for_each(|v| *v *= 2.0);
        let h2 = interaction_term(&s, &phi);
        let l2 = time_term(&s, &phi);
        assert_relative_eq!(h2, 4.0 * h1, max_relative = 1e-12);
        assert_relative_eq!(l2, 2.0 * l1, max_relative = 1e-12);
    }

    #[test]
    fn interaction_term_respects_h_bound() {
        let traj = pm_traj(64, 0.4, 4);
        let phi = a_bump(Vec2::new(0.2, 0.0), 0.7);
        let bound = phi.hessian_bound() / (4.0 * PI);
        for s in &traj.states {
            let l1: f64 = s
                .eta_weights()
                .iter()
                .zip(&s.sigma)
                .map(|(w, sg)| w * sg.abs())
                .sum();
            let h = interaction_term(s, &phi);
            assert!(
                h.abs() <= bound * l1 * l1 * 1.05,
                "h {} vs bound {}",
                h,
                bound * l1 * l1
            );
        }
    }

    #[test]
    fn suite_is_deterministic_and_structured() {
        let traj = pm_traj(32, 0.5, 5);
        let a = build_test_suite(&traj, 12);
        let b = build_test_suite(&traj, 12);
        assert_eq!(a.len(), 12);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.center, y.center);
            assert_eq!(x.radius, y.radius);
        }
        // open sheet: both tips covered by dedicated bumps
        assert!(a.iter().any(|f| f.id.contains("tip_lo")));
        assert!(a.iter().any(|f| f.id.contains("tip_hi")));
        // n = 1 default: single centroid bump, radius diameter/4
        let one = build_test_suite(&traj, 1);
        assert_eq!(one.len(), 1);
        assert!(one[0].id.contains("centroid"));
        assert_relative_eq!(one[0].radius, traj.states[0].diameter() / 4.0);
    }

    #[test]
    fn tip_bumps_cover_tips() {
        let traj = pm_traj(32, 1.0, 10);
        let suite = build_test_suite(&traj, 12);
        let lo = suite.iter().find(|f| f.id.contains("tip_lo")).unwrap();
        let hi = suite.iter().find(|f| f.id.contains("tip_hi")).unwrap();
        assert!(covers_tip(&traj, lo, 0));
        assert!(covers_tip(&traj, hi, traj.states[0].len() - 1));
        let off = suite.iter().find(|f| f.id.contains("offsheet")).unwrap();
        assert!(!covers_tip(&traj, off, 0));
    }

    #[test]
    fn prandtl_munk_br_residual_refines_to_zero() {
        // the tip bumps converge slowest; they need the full working
        // resolution and enough stored states for the coarsest time level
        // to sit in the asymptotic trapezoid regime
        let traj = pm_traj(256, 1.0, 40);
        let suite = build_test_suite(&traj, 3);
        let spec = QuadratureSpec::alternate_point();
        for phi in &suite {
            let rep = evaluate_residuals(&traj, phi, &spec).unwrap();
            assert!(
                rep.pass_br,
                "{}: br limit {} floor {} rows {:?}",
                rep.test_function_id, rep.residual_br, rep.floor, rep.quadrature_refinements
            );
        }
    }

    #[test]
    fn wrong_speed_trajectory_fails_br() {
        // translate at (0, -1) instead of (0, -1/2): the transport term no
        // longer cancels the time term. The probe bump sits off the sheet
        // midline so the odd density cannot hide the mismatch.
        let t_end = 1.0;
        let steps = 20;
        let mut traj = pm_traj(64, t_end, steps);
        for s in traj.states.iter_mut() {
            let shift = -(s.t) * 0.5; // extra displacement beyond the true one
            for p in s.xi.iter_mut() {
                p.y += shift;
            }
        }
        let phi = TestFunction::new(
            "probe",
            SpaceProfile::PolynomialBump { amplitude: 1.0 },
            Vec2::new(0.5, -0.35),
            0.5,
            TimeProfile { t0: 0.3, width: 0.3 },
        );
        let spec = QuadratureSpec::alternate_point();
        let rep = evaluate_residuals(&traj, &phi, &spec).unwrap();
        assert!(
            !rep.pass_br,
            "br limit {} floor {}",
            rep.residual_br, rep.floor
        );
    }
}
