//! Time evolution of the sheet: positions are transported by the
//! principal-value velocity, the density by the conservative transport
//! equation, in Lagrangian, circulation, or arclength parametrization.
//!
//! In the arclength scheme the tangential coefficient `a` is recovered
//! each stage from the constraint |d xi / ds| = 1 with a(0) = 0, so the
//! parameter origin rides a material marker. The density moves in flux
//! form on node-centered cells; the outer end of the last cell is a
//! material boundary (its relative flux vanishes), so total circulation is
//! conserved by construction while the domain stretches. Remeshing
//! restores a uniform arclength grid.

use crate::error::{Error, Result};
use crate::geometry::reparametrize_arclength;
use crate::kernels::{pv_velocity_all, QuadratureSpec};
use crate::state::{ParamKind, SheetState, SheetTrajectory, Topology, ARCLENGTH_REMESH_TOL};
use crate::vec2::Vec2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionScheme {
    Lagrangian,
    Arclength,
    Circulation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub scheme: EvolutionScheme,
    pub dt: f64,
    pub t_end: f64,
    pub quadrature: QuadratureSpec,
    /// Steps between arclength remeshes (arclength scheme only).
    #[serde(default = "default_remesh")]
    pub remesh_every: usize,
    /// Krasny-style spectral filter threshold on closed sheets; Fourier
    /// modes of the position residual below this magnitude are zeroed
    /// after every step. Off by default.
    #[serde(default)]
    pub fourier_filter_level: Option<f64>,
    /// Store every k-th step in the emitted trajectory.
    #[serde(default = "default_stride")]
    pub output_every: usize,
}

fn default_remesh() -> usize {
    5
}

fn default_stride() -> usize {
    1
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::InvalidState("dt and t_end must be positive".into()));
        }
        if self.remesh_every < 1 || self.output_every < 1 {
            return Err(Error::InvalidState(
                "remesh_every and output_every must be at least 1".into(),
            ));
        }
        self.quadrature.validate()
    }
}

/// Tangential parametrization coefficient on an arclength state:
/// a(s) = int_0^s xi_s . dU/ds' ds', the cumulative tangential strain,
/// with the origin pinned by a(0) = 0.
pub fn recover_tangential_coefficient(state: &SheetState, u: &[Vec2]) -> Result<Vec<f64>> {
    if state.param_kind != ParamKind::Arclength {
        return Err(Error::NotArclength(format!("{:?}", state.param_kind)));
    }
    let n = state.len();
    if u.len() != n {
        return Err(Error::GridMismatch(format!(
            "velocity length {} vs state {}",
            u.len(),
            n
        )));
    }
    let tangents = state.unit_tangents();
    // strain density xi_s . U_s at nodes (central differences)
    let mut strain = vec![0.0; n];
    for j in 0..n {
        let (jm, jp) = neighbor_indices(state, j);
        let de = eta_gap(state, jm, jp);
        let du = (u[jp.0] - u[jm.0]) / de;
        strain[j] = tangents[j].dot(du);
    }
    let mut a = vec![0.0; n];
    for j in 1..n {
        a[j] = a[j - 1] + 0.5 * (strain[j] + strain[j - 1]) * (state.eta[j] - state.eta[j - 1]);
    }
    Ok(a)
}

/// Neighbor node indices for central differencing, wrap-aware; the second
/// tuple element is the eta shift of that neighbor (periodic images).
fn neighbor_indices(state: &SheetState, j: usize) -> ((usize, f64), (usize, f64)) {
    let n = state.len();
    let span = state.eta[n - 1] - state.eta[0];
    match state.topology {
        Topology::Open => {
            let jm = if j == 0 { 0 } else { j - 1 };
            let jp = if j == n - 1 { n - 1 } else { j + 1 };
            ((jm, 0.0), (jp, 0.0))
        }
        Topology::Closed => {
            let m = n - 1;
            if j == 0 || j == n - 1 {
                ((m - 1, -span), (1, 0.0))
            } else {
                ((j - 1, 0.0), (j + 1, 0.0))
            }
        }
    }
}

fn eta_gap(state: &SheetState, jm: (usize, f64), jp: (usize, f64)) -> f64 {
    (state.eta[jp.0] + jp.1) - (state.eta[jm.0] + jm.1)
}

/// Trapezoid of sigma over eta: the total circulation of the sheet.
pub fn total_circulation(state: &SheetState) -> f64 {
    state
        .eta_weights()
        .iter()
        .zip(&state.sigma)
        .map(|(w, s)| w * s)
        .sum()
}

/// Normal defect b = xi_s_perp . (U - xi_t) between two consecutive states
/// on a common grid; vanishing b (weighted by the density) certifies that
/// the discrete motion is a true sheet evolution.
pub fn normal_defect(state: &SheetState, next: &SheetState, u: &[Vec2]) -> Result<Vec<f64>> {
    let n = state.len();
    if next.len() != n || u.len() != n {
        return Err(Error::GridMismatch("state sizes differ".into()));
    }
    if state
        .eta
        .iter()
        .zip(&next.eta)
        .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return Err(Error::GridMismatch("eta grids differ".into()));
    }
    let dt = next.t - state.t;
    if !(dt > 0.0) {
        return Err(Error::GridMismatch("states not in time order".into()));
    }
    let tangents = state.unit_tangents();
    let mut b = vec![0.0; n];
    for j in 0..n {
        let xi_t = (next.xi[j] - state.xi[j]) / dt;
        b[j] = tangents[j].perp().dot(u[j] - xi_t);
    }
    Ok(b)
}

/// Diagnostics accumulated over a simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub remesh_count: usize,
    pub filter_level: Option<f64>,
    pub initial_circulation: f64,
    pub max_circulation_drift: f64,
    pub max_speed_seen: f64,
    pub arclength_deviation_after_remesh: f64,
}

struct Workspace {
    xi: Vec<Vec2>,
    sigma: Vec<f64>,
    /// eta coordinate of the moving outer end (arclength scheme).
    eta_end: f64,
}

/// One explicit RK4 step of the coupled system. Aborts on CFL violation
/// (max |a| dt exceeding the node spacing) and on node collision.
pub fn step(state: &SheetState, cfg: &EvolutionConfig) -> Result<SheetState> {
    cfg.validate()?;
    state.validate()?;
    check_scheme_matches(state, cfg)?;
    let mut w = Workspace {
        xi: state.xi.clone(),
        sigma: state.sigma.clone(),
        eta_end: *state.eta.last().unwrap(),
    };
    rk4_step(state, cfg, &mut w)?;
    rebuild_state(state, cfg, w, state.t + cfg.dt)
}

fn check_scheme_matches(state: &SheetState, cfg: &EvolutionConfig) -> Result<()> {
    match cfg.scheme {
        EvolutionScheme::Arclength if state.param_kind != ParamKind::Arclength => Err(
            Error::NotArclength(format!("{:?} state in arclength scheme", state.param_kind)),
        ),
        EvolutionScheme::Circulation if state.param_kind != ParamKind::Circulation => {
            Err(Error::InvalidState(
                "circulation scheme requires a circulation-parametrized state".into(),
            ))
        }
        _ => Ok(()),
    }
}

/// Evaluate the RHS of the evolution system at a stage configuration.
/// Returns (dxi/dt, dsigma/dt, d eta_end/dt).
fn rhs(
    base: &SheetState,
    cfg: &EvolutionConfig,
    xi: &[Vec2],
    sigma: &[f64],
    eta_end: f64,
) -> Result<(Vec<Vec2>, Vec<f64>, f64)> {
    let n = base.len();
    let mut eta = base.eta.clone();
    eta[n - 1] = eta_end;
    let stage = SheetState {
        t: base.t,
        param_kind: base.param_kind,
        topology: base.topology,
        eta,
        xi: xi.to_vec(),
        sigma: sigma.to_vec(),
    };
    stage.validate()?;
    let u = pv_velocity_all(&stage, &cfg.quadrature)?;
    let uv: Vec<Vec2> = u.iter().map(|p| p.v).collect();

    match cfg.scheme {
        EvolutionScheme::Lagrangian | EvolutionScheme::Circulation => {
            // a = 0: positions move with U, the per-node density is constant
            Ok((uv, vec![0.0; n], 0.0))
        }
        EvolutionScheme::Arclength => {
            let a = recover_tangential_coefficient(&stage, &uv)?;
            let spacing = min_spacing(&stage);
            let reach = a.iter().fold(0.0f64, |m, &v| m.max(v.abs())) * cfg.dt;
            if reach > spacing {
                return Err(Error::CflViolation { reach, spacing });
            }
            let tangents = stage.unit_tangents();
            let mut dxi = Vec::with_capacity(n);
            for j in 0..n {
                dxi.push(uv[j] - tangents[j] * a[j]);
            }
            // endpoints are material: they move with U and carry the chart end
            let d_eta_end = a[n - 1];
            if base.topology == Topology::Open {
                dxi[0] = uv[0];
                dxi[n - 1] = uv[n - 1];
            } else {
                // wrap node mirrors node 0 (material origin, a(0) = 0)
                dxi[n - 1] = dxi[0];
            }
            let dsigma = sigma_flux_divergence(&stage, &a);
            Ok((dxi, dsigma, d_eta_end))
        }
    }
}

/// Conservative update of sigma on node-centered cells in ALE form.
///
/// Between remeshes only the outer chart end moves (at a(eta_end), the
/// material speed), so the last face between the final two nodes moves at
/// half that rate. Fluxes are measured relative to the face motion, which
/// makes the outer boundary flux vanish identically (material boundary)
/// and the scheme conserve total circulation to rounding:
/// d sigma_j/dt = [-(F_right - F_left) - sigma_j (xdot_right - xdot_left)] / w_j,
/// with F = (a - xdot) sigma at the face.
fn sigma_flux_divergence(state: &SheetState, a: &[f64]) -> Vec<f64> {
    let n = state.len();
    let a_end = a[n - 1];
    // face between nodes j and j+1: relative flux and face velocity
    let face_vel = |j: usize| -> f64 {
        if j == n - 2 {
            0.5 * a_end
        } else {
            0.0
        }
    };
    let face_flux = |j: usize| -> f64 {
        let af = 0.5 * (a[j] + a[j + 1]);
        let sf = 0.5 * (state.sigma[j] + state.sigma[j + 1]);
        (af - face_vel(j)) * sf
    };
    let mut d = vec![0.0; n];
    for j in 0..n {
        let w = cell_width(state, j);
        // (flux, velocity) at the cell's left and right boundaries;
        // the domain ends are material: a(0) = 0 pins the left, the right
        // boundary moves at a_end with zero relative flux
        let (f_l, v_l, f_r, v_r) = if j == 0 {
            (0.0, 0.0, face_flux(0), face_vel(0))
        } else if j == n - 1 {
            (face_flux(n - 2), face_vel(n - 2), 0.0, a_end)
        } else {
            (face_flux(j - 1), face_vel(j - 1), face_flux(j), face_vel(j))
        };
        d[j] = (-(f_r - f_l) - state.sigma[j] * (v_r - v_l)) / w;
    }
    d
}

fn cell_width(state: &SheetState, j: usize) -> f64 {
    let n = state.len();
    if j == 0 {
        0.5 * (state.eta[1] - state.eta[0])
    } else if j == n - 1 {
        0.5 * (state.eta[n - 1] - state.eta[n - 2])
    } else {
        0.5 * (state.eta[j + 1] - state.eta[j - 1])
    }
}

fn min_spacing(state: &SheetState) -> f64 {
    state
        .eta
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

fn rk4_step(state: &SheetState, cfg: &EvolutionConfig, w: &mut Workspace) -> Result<()> {
    let dt = cfg.dt;
    let n = state.len();
    let (k1x, k1s, k1e) = rhs(state, cfg, &w.xi, &w.sigma, w.eta_end)?;
    let (x2, s2, e2) = advance(&w.xi, &w.sigma, w.eta_end, &k1x, &k1s, k1e, 0.5 * dt);
    let (k2x, k2s, k2e) = rhs(state, cfg, &x2, &s2, e2)?;
    let (x3, s3, e3) = advance(&w.xi, &w.sigma, w.eta_end, &k2x, &k2s, k2e, 0.5 * dt);
    let (k3x, k3s, k3e) = rhs(state, cfg, &x3, &s3, e3)?;
    let (x4, s4, e4) = advance(&w.xi, &w.sigma, w.eta_end, &k3x, &k3s, k3e, dt);
    let (k4x, k4s, k4e) = rhs(state, cfg, &x4, &s4, e4)?;
    for j in 0..n {
        w.xi[j] += (k1x[j] + (k2x[j] + k3x[j]) * 2.0 + k4x[j]) * (dt / 6.0);
        w.sigma[j] += (k1s[j] + 2.0 * (k2s[j] + k3s[j]) + k4s[j]) * (dt / 6.0);
    }
    w.eta_end += (k1e + 2.0 * (k2e + k3e) + k4e) * (dt / 6.0);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn advance(
    xi: &[Vec2],
    sigma: &[f64],
    eta_end: f64,
    dx: &[Vec2],
    ds: &[f64],
    de: f64,
    dt: f64,
) -> (Vec<Vec2>, Vec<f64>, f64) {
    let x: Vec<Vec2> = xi.iter().zip(dx).map(|(a, b)| *a + *b * dt).collect();
    let s: Vec<f64> = sigma.iter().zip(ds).map(|(a, b)| a + b * dt).collect();
    (x, s, eta_end + de * dt)
}

fn rebuild_state(
    state: &SheetState,
    cfg: &EvolutionConfig,
    w: Workspace,
    t: f64,
) -> Result<SheetState> {
    let n = state.len();
    let mut eta = state.eta.clone();
    if cfg.scheme == EvolutionScheme::Arclength {
        eta[n - 1] = w.eta_end;
    }
    let out = SheetState {
        t,
        param_kind: state.param_kind,
        topology: state.topology,
        eta,
        xi: w.xi,
        sigma: w.sigma,
    };
    // node-collision guard
    let resolution = 0.2 * state.min_segment_length();
    let min_chord = out.min_segment_length();
    if min_chord < resolution {
        return Err(Error::SelfApproach {
            i: 0,
            j: 0,
            dist: min_chord,
            resolution,
        });
    }
    Ok(out)
}

/// Segment-pair sweep for self-intersection: smallest distance between
/// non-adjacent segments.
pub fn min_nonadjacent_distance(state: &SheetState) -> f64 {
    let n = state.len();
    let m = n - 1; // segments
    let mut best = f64::INFINITY;
    for i in 0..m {
        for j in (i + 2)..m {
            if state.topology == Topology::Closed && i == 0 && j == m - 1 {
                continue; // wrap-adjacent
            }
            let d = segment_segment_distance(
                state.xi[i],
                state.xi[i + 1],
                state.xi[j],
                state.xi[j + 1],
            );
            if d < best {
                best = d;
            }
        }
    }
    best
}

fn segment_segment_distance(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> f64 {
    use crate::geometry::point_segment_distance as psd;
    psd(a0, b0, b1)
        .min(psd(a1, b0, b1))
        .min(psd(b0, a0, a1))
        .min(psd(b1, a0, a1))
}

/// Zero Fourier modes of the closed-sheet position residual whose
/// normalized magnitude falls below `level` (Krasny filtering). The
/// residual is taken against the linear closure ramp so x-periodic sheets
/// filter their periodic part.
pub fn spectral_filter(state: &mut SheetState, level: f64) {
    if state.topology != Topology::Closed {
        return;
    }
    let n = state.len();
    let m = n - 1;
    let off = *state.xi.last().unwrap() - state.xi[0];
    let span = state.eta[n - 1] - state.eta[0];
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let frac = (state.eta[j] - state.eta[0]) / span;
            let ramp = state.xi[0] + off * frac;
            let r = state.xi[j] - ramp;
            Complex::new(r.x, r.y)
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        if c.norm() / (m as f64) < level {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    for j in 0..m {
        let frac = (state.eta[j] - state.eta[0]) / span;
        let ramp = state.xi[0] + off * frac;
        state.xi[j] = ramp + Vec2::new(buf[j].re / m as f64, buf[j].im / m as f64);
    }
    state.xi[n - 1] = state.xi[0] + off;
}

/// Advance a sheet from t = 0 to t_end, emitting stored states every
/// `output_every` steps plus run diagnostics.
pub fn simulate(initial: &SheetState, cfg: &EvolutionConfig) -> Result<(SheetTrajectory, RunDiagnostics)> {
    cfg.validate()?;
    initial.validate()?;
    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    if n_steps == 0 {
        return Err(Error::InvalidState("t_end shorter than one step".into()));
    }
    let mut current = initial.clone();
    current.t = 0.0;
    let gamma0 = total_circulation(&current);
    let mut diag = RunDiagnostics {
        steps: n_steps,
        remesh_count: 0,
        filter_level: cfg.fourier_filter_level,
        initial_circulation: gamma0,
        max_circulation_drift: 0.0,
        max_speed_seen: 0.0,
        arclength_deviation_after_remesh: 0.0,
    };
    let mut states = vec![current.clone()];
    for k in 1..=n_steps {
        current = step(&current, cfg)?;

        if let Some(level) = cfg.fourier_filter_level {
            spectral_filter(&mut current, level);
        }
        if cfg.scheme == EvolutionScheme::Arclength && k % cfg.remesh_every == 0 {
            let sweep = min_nonadjacent_distance(&current);
            let resolution = 0.5 * current.min_segment_length();
            if sweep < resolution {
                return Err(Error::SelfApproach {
                    i: 0,
                    j: 0,
                    dist: sweep,
                    resolution,
                });
            }
            current = reparametrize_arclength(&current, current.len())?;
            diag.remesh_count += 1;
            let dev = current
                .speed()
                .iter()
                .skip(1)
                .take(current.len().saturating_sub(2))
                .map(|s| (s - 1.0).abs())
                .fold(0.0, f64::max);
            diag.arclength_deviation_after_remesh =
                diag.arclength_deviation_after_remesh.max(dev);
            debug_assert!(dev <= ARCLENGTH_REMESH_TOL * 10.0);
        }
        let drift = (total_circulation(&current) - gamma0).abs() / (1.0 + gamma0.abs());
        diag.max_circulation_drift = diag.max_circulation_drift.max(drift);
        if k % cfg.output_every == 0 || k == n_steps {
            let prev = states.last().unwrap();
            let dt_out = current.t - prev.t;
            if dt_out > 0.0 && prev.len() == current.len() {
                let disp = current
                    .xi
                    .iter()
                    .zip(&prev.xi)
                    .map(|(a, b)| a.dist(*b))
                    .fold(0.0, f64::max);
                diag.max_speed_seen = diag.max_speed_seen.max(disp / dt_out);
            }
            states.push(current.clone());
        }
    }
    Ok((SheetTrajectory::new(states)?, diag))
}

/// Eta-coordinate trajectories of material markers: d eta_m / dt = a.
/// Only the arclength scheme transports markers (a = 0 otherwise).
pub fn advect_markers(
    state: &SheetState,
    cfg: &EvolutionConfig,
    markers: &[f64],
) -> Result<Vec<f64>> {
    match cfg.scheme {
        EvolutionScheme::Lagrangian | EvolutionScheme::Circulation => Ok(markers.to_vec()),
        EvolutionScheme::Arclength => {
            let u = pv_velocity_all(state, &cfg.quadrature)?;
            let uv: Vec<Vec2> = u.iter().map(|p| p.v).collect();
            let a = recover_tangential_coefficient(state, &uv)?;
            // single-stage marker transport per step (markers are
            // diagnostics; a varies slowly over one dt)
            Ok(markers
                .iter()
                .map(|&em| em + cfg.dt * interp_linear(&state.eta, &a, em))
                .collect())
        }
    }
}

fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(k) => return ys[k],
        Err(k) => k - 1,
    };
    let f = (x - xs[j]) / (xs[j + 1] - xs[j]);
    ys[j] * (1.0 - f) + ys[j + 1] * f
}

/// Circulation of the sub-segment between two eta markers (piecewise-linear
/// sigma, exact partial cells).
pub fn segment_circulation(state: &SheetState, eta_lo: f64, eta_hi: f64) -> f64 {
    let n = state.len();
    let mut total = 0.0;
    for j in 0..n - 1 {
        let a = state.eta[j].max(eta_lo);
        let b = state.eta[j + 1].min(eta_hi);
        if b <= a {
            continue;
        }
        let de = state.eta[j + 1] - state.eta[j];
        let sg = |e: f64| {
            let f = (e - state.eta[j]) / de;
            state.sigma[j] * (1.0 - f) + state.sigma[j + 1] * f
        };
        total += 0.5 * (sg(a) + sg(b)) * (b - a);
    }
    total
}
