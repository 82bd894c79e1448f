//! Induced-velocity kernels and principal-value quadratures.
//!
//! The free-space kernel is K(x) = x_perp / (2 pi |x|^2). States that close
//! up to a horizontal period use its image sum, which telescopes to the
//! cotangent kernel. The sheet velocity is the principal-value integral of
//! K against the density; three desingularizations are provided:
//!
//! * `epsilon_cutoff` - midpoint-offset sampling of the polyline (cubic
//!   reconstruction of positions and density at parameter midpoints),
//!   discarding samples inside the ambient cutoff |xi - y| < epsilon.
//! * `alternate_point` - node sums over the opposite parity class on an
//!   even-structured grid. On closed sheets this is the classical
//!   spectrally accurate rule; on open sheets with cosine-type grids it is
//!   the folded even extension of the same rule, so the samples sit at
//!   midpoints of the coarsened grid around the target node.
//! * `blob` - regularized kernel, no exclusions.

use crate::error::{Error, Result};
use crate::geometry::point_polyline_distance;
use crate::state::{SheetState, Topology};
use crate::test_function::TestFunction;
use crate::vec2::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Biot-Savart kernel K(x) = x_perp / (2 pi |x|^2).
///
/// The origin is a hard error, never a silent zero: excluding the
/// singularity is the quadrature layer's job.
pub fn biot_savart_kernel(x: Vec2) -> Result<Vec2> {
    let r2 = x.norm_sq();
    if r2 == 0.0 {
        return Err(Error::KernelSingularity);
    }
    Ok(x.perp() / (2.0 * PI * r2))
}

/// Induced-velocity kernel of a state: free-space, or the x-periodic image
/// sum when the state closes up to a horizontal period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Free,
    PeriodicX { period: f64 },
}

impl Kernel {
    pub fn for_state(state: &SheetState) -> Kernel {
        match state.period() {
            Some(p) if p > 0.0 => Kernel::PeriodicX { period: p },
            _ => Kernel::Free,
        }
    }

    /// Kernel value at separation `d` (caller excludes the singularity).
    pub fn eval(&self, d: Vec2) -> Vec2 {
        match *self {
            Kernel::Free => d.perp() / (2.0 * PI * d.norm_sq()),
            Kernel::PeriodicX { period } => {
                let a = 2.0 * PI * d.x / period;
                let b = 2.0 * PI * d.y / period;
                let den = 2.0 * period * (b.cosh() - a.cos());
                Vec2::new(-b.sinh() / den, a.sin() / den)
            }
        }
    }

    /// Blob-regularized kernel with ambient blob radius `delta`.
    pub fn eval_blob(&self, d: Vec2, delta: f64) -> Vec2 {
        match *self {
            Kernel::Free => d.perp() / (2.0 * PI * (d.norm_sq() + delta * delta)),
            Kernel::PeriodicX { period } => {
                let a = 2.0 * PI * d.x / period;
                let b = 2.0 * PI * d.y / period;
                let dl = 2.0 * PI * delta / period;
                let den = 2.0 * period * (b.cosh() - a.cos() + 0.5 * dl * dl);
                Vec2::new(-b.sinh() / den, a.sin() / den)
            }
        }
    }

    /// Separation distance honoring periodicity (nearest image).
    pub fn dist(&self, d: Vec2) -> f64 {
        match *self {
            Kernel::Free => d.norm(),
            Kernel::PeriodicX { period } => {
                let dx = d.x - (d.x / period).round() * period;
                Vec2::new(dx, d.y).norm()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EpsilonCutoff,
    AlternatePoint,
    Blob,
}

/// Desingularization scheme and resolution controls for the
/// principal-value integrals.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    /// Ambient cutoff |xi(s) - xi(s')| >= epsilon. Required positive for
    /// `epsilon_cutoff`; optional (0 = no cutoff) for the other schemes.
    #[serde(default)]
    pub epsilon: f64,
    /// Blob radius for `blob`.
    #[serde(default)]
    pub delta: f64,
    /// Oversampling of midpoint samples per segment (convergence studies).
    #[serde(default = "default_refine")]
    pub refine_factor: u32,
}

fn default_refine() -> u32 {
    1
}

impl QuadratureSpec {
    pub fn epsilon_cutoff(epsilon: f64) -> Self {
        QuadratureSpec {
            scheme: Scheme::EpsilonCutoff,
            epsilon,
            delta: 0.0,
            refine_factor: 1,
        }
    }

    pub fn alternate_point() -> Self {
        QuadratureSpec {
            scheme: Scheme::AlternatePoint,
            epsilon: 0.0,
            delta: 0.0,
            refine_factor: 1,
        }
    }

    pub fn blob(delta: f64) -> Self {
        QuadratureSpec {
            scheme: Scheme::Blob,
            epsilon: 0.0,
            delta,
            refine_factor: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            Scheme::EpsilonCutoff if self.epsilon <= 0.0 => Err(Error::InvalidQuadrature(
                "epsilon_cutoff requires epsilon > 0".into(),
            )),
            Scheme::Blob if self.delta <= 0.0 => Err(Error::InvalidQuadrature(
                "blob requires delta > 0".into(),
            )),
            _ if self.refine_factor == 0 => Err(Error::InvalidQuadrature(
                "refine_factor must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Default scheme policy: alternate-point on closed / periodic sheets
    /// (spectral on smooth data), epsilon cutoff below the grid scale for
    /// open sheets. Chebyshev-sampled open sheets may opt into
    /// alternate-point explicitly, where it is the midpoint-offset rule of
    /// the even extension.
    pub fn default_for(state: &SheetState) -> Self {
        if state.topology == Topology::Closed && alternate_point_applicable(state) {
            QuadratureSpec::alternate_point()
        } else {
            QuadratureSpec::epsilon_cutoff(0.25 * state.min_segment_length())
        }
    }
}

pub fn alternate_point_applicable(state: &SheetState) -> bool {
    let n = state.len();
    let span = state.eta[n - 1] - state.eta[0];
    let h = span / (n - 1) as f64;
    // evolving arclength charts stretch their last cell between remeshes;
    // tolerate mild nonuniformity (the weights are local spacings anyway)
    let uniform = state
        .eta
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 0.15 * h);
    match state.topology {
        Topology::Closed => uniform && (n - 1) % 2 == 0,
        Topology::Open => uniform,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvFlag {
    Ok,
    /// Open-sheet endpoint: value extrapolated from the interior.
    Extrapolated,
    /// Another part of the curve passes within the resolution scale.
    NearSelfIntersection,
}

#[derive(Debug, Clone, Copy)]
pub struct PvVelocity {
    pub v: Vec2,
    pub flag: PvFlag,
}

struct Sample {
    eta: f64,
    pos: Vec2,
    sigma: f64,
    weight: f64,
}

/// Node accessor with wrap-around for closed states: index shifts by the
/// number of distinct nodes, eta by the parameter span, position by the
/// closure offset.
fn node_cyclic(state: &SheetState, k: isize) -> (f64, Vec2, f64) {
    let n = state.len() as isize;
    match state.topology {
        Topology::Open => {
            let j = k.clamp(0, n - 1) as usize;
            (state.eta[j], state.xi[j], state.sigma[j])
        }
        Topology::Closed => {
            let m = n - 1;
            let span = state.eta[(n - 1) as usize] - state.eta[0];
            let off = *state.xi.last().unwrap() - state.xi[0];
            let mut j = k;
            let mut shift = 0i64;
            while j < 0 {
                j += m;
                shift -= 1;
            }
            while j >= m {
                j -= m;
                shift += 1;
            }
            let j = j as usize;
            (
                state.eta[j] + shift as f64 * span,
                state.xi[j] + off * shift as f64,
                state.sigma[j],
            )
        }
    }
}

fn lagrange4(xs: [f64; 4], ys: [f64; 4], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let mut l = 1.0;
        for j in 0..4 {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += l * ys[i];
    }
    acc
}

/// Midpoint samples of the integral `int K(xi_i - y(eta)) sigma(eta) deta`,
/// with positions and density reconstructed cubically at parameter
/// midpoints. `refine` subdivides each segment.
fn midpoint_samples(state: &SheetState, refine: u32) -> Vec<Sample> {
    let n = state.len();
    let mut out = Vec::with_capacity((n - 1) * refine as usize);
    for j in 0..n - 1 {
        let stencil: [isize; 4] = [j as isize - 1, j as isize, j as isize + 1, j as isize + 2];
        let mut xs = [0.0; 4];
        let mut px = [0.0; 4];
        let mut py = [0.0; 4];
        let mut sg = [0.0; 4];
        for (q, &k) in stencil.iter().enumerate() {
            let (e, p, s) = node_cyclic(state, k);
            xs[q] = e;
            px[q] = p.x;
            py[q] = p.y;
            sg[q] = s;
        }
        // open-sheet boundary stencils are clamped and may repeat nodes;
        // fall back to the one-sided 4 distinct nodes
        if state.topology == Topology::Open {
            if j == 0 {
                for (q, k) in (0..4).enumerate() {
                    let (e, p, s) = node_cyclic(state, k as isize);
                    xs[q] = e;
                    px[q] = p.x;
                    py[q] = p.y;
                    sg[q] = s;
                }
            } else if j == n - 2 {
                for (q, k) in ((n - 4)..n).enumerate() {
                    let (e, p, s) = node_cyclic(state, k as isize);
                    xs[q] = e;
                    px[q] = p.x;
                    py[q] = p.y;
                    sg[q] = s;
                }
            }
        }
        let de = state.eta[j + 1] - state.eta[j];
        let sub = refine as f64;
        for q in 0..refine {
            let em = state.eta[j] + de * (q as f64 + 0.5) / sub;
            out.push(Sample {
                eta: em,
                pos: Vec2::new(lagrange4(xs, px, em), lagrange4(xs, py, em)),
                sigma: lagrange4(xs, sg, em),
                weight: de / sub,
            });
        }
    }
    out
}

/// Resolution scale used by self-approach detection.
fn resolution_scale(state: &SheetState) -> f64 {
    state.min_segment_length()
}

fn velocity_at_node(
    state: &SheetState,
    kernel: Kernel,
    samples: &[Sample],
    spec: &QuadratureSpec,
    i: usize,
) -> PvVelocity {
    let xi = state.xi[i];
    let eta_i = state.eta[i];
    let span = state.eta[state.len() - 1] - state.eta[0];
    let local = local_spacing(state, i);
    let resolution = resolution_scale(state);
    let mut v = Vec2::ZERO;
    let mut closest_far = f64::INFINITY;
    match spec.scheme {
        Scheme::EpsilonCutoff | Scheme::Blob => {
            for s in samples {
                let d = xi - s.pos;
                let dist = kernel.dist(d);
                let mut deta = (s.eta - eta_i).abs();
                if state.topology == Topology::Closed {
                    deta = deta.min(span - deta);
                }
                if deta > 2.5 * local && dist < closest_far {
                    closest_far = dist;
                }
                match spec.scheme {
                    Scheme::EpsilonCutoff => {
                        if dist >= spec.epsilon {
                            v += kernel.eval(d) * (s.sigma * s.weight);
                        }
                    }
                    Scheme::Blob => {
                        if spec.epsilon > 0.0 && dist < spec.epsilon {
                            continue;
                        }
                        v += kernel.eval_blob(d, spec.delta) * (s.sigma * s.weight);
                    }
                    _ => unreachable!(),
                }
            }
        }
        Scheme::AlternatePoint => {
            let n = state.len();
            let (lo, hi) = match state.topology {
                Topology::Closed => (0usize, n - 1), // distinct nodes
                Topology::Open => (0usize, n),
            };
            for j in lo..hi {
                if (j as isize - i as isize).rem_euclid(2) != 1 {
                    continue;
                }
                let d = xi - state.xi[j];
                let dist = kernel.dist(d);
                if spec.epsilon > 0.0 && dist < spec.epsilon {
                    continue;
                }
                if dist == 0.0 {
                    continue;
                }
                let mut deta = (state.eta[j] - eta_i).abs();
                if state.topology == Topology::Closed {
                    deta = deta.min(span - deta);
                }
                if deta > 2.5 * local && dist < closest_far {
                    closest_far = dist;
                }
                let w = alternate_weight(state, j);
                v += kernel.eval(d) * (state.sigma[j] * w);
            }
        }
    }
    let flag = if closest_far < 0.5 * resolution {
        PvFlag::NearSelfIntersection
    } else {
        PvFlag::Ok
    };
    PvVelocity { v, flag }
}

fn local_spacing(state: &SheetState, i: usize) -> f64 {
    let n = state.len();
    if i == 0 {
        state.eta[1] - state.eta[0]
    } else if i == n - 1 {
        state.eta[n - 1] - state.eta[n - 2]
    } else {
        0.5 * (state.eta[i + 1] - state.eta[i - 1])
    }
}

/// Weight of node j in the alternate-point sum: the coarsened cell width
/// eta_{j+1} - eta_{j-1} (wrap-aware), halved at open ends where the even
/// extension folds.
fn alternate_weight(state: &SheetState, j: usize) -> f64 {
    let n = state.len();
    match state.topology {
        Topology::Closed => {
            let (e_prev, _, _) = node_cyclic(state, j as isize - 1);
            let (e_next, _, _) = node_cyclic(state, j as isize + 1);
            e_next - e_prev
        }
        Topology::Open => {
            if j == 0 {
                state.eta[1] - state.eta[0]
            } else if j == n - 1 {
                state.eta[n - 1] - state.eta[n - 2]
            } else {
                state.eta[j + 1] - state.eta[j - 1]
            }
        }
    }
}

/// Principal-value sheet velocity at every node.
///
/// Open-sheet endpoint values are quadratically extrapolated from the three
/// nearest interior nodes and flagged.
pub fn pv_velocity_all(state: &SheetState, spec: &QuadratureSpec) -> Result<Vec<PvVelocity>> {
    state.validate()?;
    spec.validate()?;
    if spec.scheme == Scheme::AlternatePoint && !alternate_point_applicable(state) {
        return Err(Error::InvalidQuadrature(
            "alternate_point requires a uniform grid with an even number of intervals".into(),
        ));
    }
    let kernel = Kernel::for_state(state);
    let samples = match spec.scheme {
        Scheme::AlternatePoint => Vec::new(),
        _ => midpoint_samples(state, spec.refine_factor),
    };
    let n = state.len();
    let interior: Vec<PvVelocity> = (0..n)
        .into_par_iter()
        .map(|i| velocity_at_node(state, kernel, &samples, spec, i))
        .collect();
    let mut out = interior;
    if state.topology == Topology::Open {
        for &(end, a, b, c) in &[(0usize, 1usize, 2usize, 3usize), (n - 1, n - 2, n - 3, n - 4)] {
            let xs = [state.eta[a], state.eta[b], state.eta[c]];
            let target = state.eta[end];
            let vx = lagrange3(xs, [out[a].v.x, out[b].v.x, out[c].v.x], target);
            let vy = lagrange3(xs, [out[a].v.y, out[b].v.y, out[c].v.y], target);
            out[end] = PvVelocity {
                v: Vec2::new(vx, vy),
                flag: PvFlag::Extrapolated,
            };
        }
    }
    Ok(out)
}

fn lagrange3(xs: [f64; 3], ys: [f64; 3], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        let mut l = 1.0;
        for j in 0..3 {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += l * ys[i];
    }
    acc
}

/// Principal-value sheet velocity at one node.
pub fn pv_velocity(state: &SheetState, node: usize, spec: &QuadratureSpec) -> Result<PvVelocity> {
    let all = pv_velocity_all(state, spec)?;
    all.get(node)
        .copied()
        .ok_or_else(|| Error::InvalidState(format!("node {node} out of range")))
}

/// Richardson extrapolation of the epsilon-cutoff family: evaluates the
/// truncated velocity at eps0 / 2^k for `levels` levels and extrapolates
/// the polynomial in epsilon to zero (Neville tableau).
pub fn pv_velocity_richardson(
    state: &SheetState,
    node: usize,
    spec: &QuadratureSpec,
    eps0: f64,
    levels: usize,
) -> Result<PvVelocity> {
    if eps0 <= 0.0 || levels < 2 {
        return Err(Error::InvalidQuadrature(
            "richardson needs eps0 > 0 and at least 2 levels".into(),
        ));
    }
    let mut eps = Vec::with_capacity(levels);
    let mut vals = Vec::with_capacity(levels);
    let mut flag = PvFlag::Ok;
    for k in 0..levels {
        let e = eps0 / 2f64.powi(k as i32);
        let mut s = *spec;
        s.epsilon = e;
        let r = pv_velocity(state, node, &s)?;
        if r.flag != PvFlag::Ok {
            flag = r.flag;
        }
        eps.push(e);
        vals.push(r.v);
    }
    // Neville to epsilon = 0, componentwise
    for j in 1..levels {
        for i in (j..levels).rev() {
            let num = vals[i] * (0.0 - eps[i - j]) - vals[i - 1] * (0.0 - eps[i]);
            vals[i] = num / (eps[i] - eps[i - j]);
        }
    }
    Ok(PvVelocity {
        v: vals[levels - 1],
        flag,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct OffSheetVelocity {
    pub v: Vec2,
    pub near_singular: bool,
}

/// Plain (non-principal-value) quadrature of the induced velocity at a
/// point off the sheet. Errors if the point lies on the polyline; flags
/// points within one node spacing of the curve.
pub fn velocity_off_sheet(state: &SheetState, x: Vec2) -> Result<OffSheetVelocity> {
    state.validate()?;
    let kernel = Kernel::for_state(state);
    let dist = match kernel {
        Kernel::Free => point_polyline_distance(state, x),
        Kernel::PeriodicX { period } => {
            let mut d = f64::INFINITY;
            for shift in [-1.0, 0.0, 1.0] {
                d = d.min(point_polyline_distance(
                    state,
                    x - Vec2::new(shift * period, 0.0),
                ));
            }
            d
        }
    };
    if dist <= 1e-14 * state.diameter().max(1.0) {
        return Err(Error::OnSheet);
    }
    let w = state.eta_weights();
    let mut v = Vec2::ZERO;
    let (n, skip_last) = match state.topology {
        Topology::Open => (state.len(), false),
        Topology::Closed => (state.len(), false), // trapezoid halves handle the wrap
    };
    for j in 0..n {
        if skip_last && j == n - 1 {
            continue;
        }
        v += kernel.eval(x - state.xi[j]) * (state.sigma[j] * w[j]);
    }
    let spacing = state
        .xi
        .windows(2)
        .map(|p| p[0].dist(p[1]))
        .fold(0.0, f64::max);
    Ok(OffSheetVelocity {
        v,
        near_singular: dist < spacing,
    })
}

/// Maximal operator: per node, the maximum over the cutoff grid of the
/// magnitude of the truncated velocity, using the sampling family of the
/// supplied scheme. The grid must be positive and decreasing.
pub fn maximal_operator(
    state: &SheetState,
    eps_grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    if eps_grid.is_empty()
        || eps_grid.iter().any(|&e| e <= 0.0)
        || eps_grid.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidQuadrature(
            "eps_grid must be positive and strictly decreasing".into(),
        ));
    }
    let n = state.len();
    let mut best = vec![0.0f64; n];
    for &eps in eps_grid {
        let mut s = *spec;
        s.epsilon = eps;
        let u = pv_velocity_all(state, &s)?;
        for i in 0..n {
            best[i] = best[i].max(u[i].v.norm());
        }
    }
    Ok(best)
}

/// Symmetrized test-function kernel
/// H_phi(x, y, t) = (grad phi(x,t) - grad phi(y,t))/2 . K(x - y).
///
/// Returns the quadrature-excluded marker `None` on the diagonal x = y,
/// where H is defined only by continuity.
pub fn h_phi(x: Vec2, y: Vec2, t: f64, phi: &TestFunction) -> Option<f64> {
    if x == y {
        return None;
    }
    let k = Kernel::Free.eval(x - y);
    Some((phi.grad(x, t) - phi.grad(y, t)).dot(k) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ParamKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_direct_values() {
        let k = biot_savart_kernel(Vec2::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(k.x, 0.0);
        assert_relative_eq!(k.y, 1.0 / (2.0 * PI));
        let k = biot_savart_kernel(Vec2::new(0.0, 2.0)).unwrap();
        assert_relative_eq!(k.x, -1.0 / (4.0 * PI));
        assert_relative_eq!(k.y, 0.0);
    }

    #[test]
    fn kernel_origin_is_error() {
        assert!(matches!(
            biot_savart_kernel(Vec2::ZERO),
            Err(Error::KernelSingularity)
        ));
    }

    #[test]
    fn kernel_divergence_free() {
        // central differences of the kernel components off the origin
        let h = 1e-4;
        for &p in &[Vec2::new(0.7, 0.3), Vec2::new(-1.1, 0.4), Vec2::new(0.2, -0.9)] {
            let kx = |v: Vec2| biot_savart_kernel(v).unwrap().x;
            let ky = |v: Vec2| biot_savart_kernel(v).unwrap().y;
            let div = (kx(p + Vec2::new(h, 0.0)) - kx(p - Vec2::new(h, 0.0))) / (2.0 * h)
                + (ky(p + Vec2::new(0.0, h)) - ky(p - Vec2::new(0.0, h))) / (2.0 * h);
            assert!(div.abs() < 1e-6, "div = {div}");
        }
    }

    fn pm_state(n_intervals: usize) -> SheetState {
        let n = n_intervals + 1;
        let eta: Vec<f64> = (0..n).map(|j| PI * j as f64 / n_intervals as f64).collect();
        let xi: Vec<Vec2> = eta.iter().map(|&th| Vec2::new(-th.cos(), 0.0)).collect();
        let sg: Vec<f64> = eta.iter().map(|&th| -th.cos()).collect();
        SheetState::new(0.0, ParamKind::Lagrangian, Topology::Open, eta, xi, sg).unwrap()
    }

    fn flat_symmetric(n: usize) -> SheetState {
        let eta: Vec<f64> = (0..n).map(|j| -1.0 + 2.0 * j as f64 / (n - 1) as f64).collect();
        let xi: Vec<Vec2> = eta.iter().map(|&e| Vec2::new(e, 0.0)).collect();
        SheetState::new(
            0.0,
            ParamKind::Arclength,
            Topology::Open,
            eta,
            xi,
            vec![1.0; n],
        )
        .unwrap()
    }

    fn circle(n_distinct: usize, radius: f64, gbar: f64) -> SheetState {
        let n = n_distinct + 1;
        let s_total = 2.0 * PI * radius;
        let eta: Vec<f64> = (0..n).map(|j| s_total * j as f64 / n_distinct as f64).collect();
        let xi: Vec<Vec2> = (0..n)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / n_distinct as f64;
                Vec2::new(radius * a.cos(), radius * a.sin())
            })
            .collect();
        SheetState::new(
            0.0,
            ParamKind::Lagrangian,
            Topology::Closed,
            eta,
            xi,
            vec![gbar; n],
        )
        .unwrap()
    }

    #[test]
    fn flat_sheet_center_node_is_stationary() {
        let s = flat_symmetric(41);
        let u = pv_velocity(&s, 20, &QuadratureSpec::epsilon_cutoff(1e-4)).unwrap();
        assert!(u.v.norm() < 1e-12, "{:?}", u.v);
        let u = pv_velocity(&s, 20, &QuadratureSpec::alternate_point()).unwrap();
        assert!(u.v.norm() < 1e-12, "{:?}", u.v);
    }

    #[test]
    fn prandtl_munk_velocity_alternate_point() {
        let s = pm_state(256);
        let u = pv_velocity_all(&s, &QuadratureSpec::alternate_point()).unwrap();
        let mut worst = 0.0f64;
        for i in 1..256 {
            worst = worst
                .max((u[i].v.x).abs())
                .max((u[i].v.y + 0.5).abs());
        }
        assert!(worst < 1e-9, "max interior error {worst}");
    }

    #[test]
    fn prandtl_munk_velocity_epsilon_cutoff() {
        let s = pm_state(256);
        let spec = QuadratureSpec::epsilon_cutoff(0.25 * s.min_segment_length());
        let u = pv_velocity_all(&s, &spec).unwrap();
        let mut worst = 0.0f64;
        for i in 1..256 {
            worst = worst.max((u[i].v.x).abs()).max((u[i].v.y + 0.5).abs());
        }
        assert!(worst < 1e-3, "max interior error {worst}");
    }

    #[test]
    fn far_field_matches_point_vortex() {
        // velocity induced by a short flat sheet, observed far away,
        // approaches K(separation) times the total circulation
        let n = 101;
        let eta: Vec<f64> = (0..n).map(|j| j as f64 * 0.001).collect();
        let xi: Vec<Vec2> = eta.iter().map(|&e| Vec2::new(e, 0.0)).collect();
        let s = SheetState::new(
            0.0,
            ParamKind::Arclength,
            Topology::Open,
            eta,
            xi,
            vec![2.0; n],
        )
        .unwrap();
        let total = 2.0 * 0.1;
        let x = Vec2::new(7.0, 3.0);
        let v = velocity_off_sheet(&s, x).unwrap();
        assert!(!v.near_singular);
        let expect = biot_savart_kernel(x - Vec2::new(0.05, 0.0)).unwrap() * total;
        assert_relative_eq!(v.v.x, expect.x, max_relative = 1e-3);
        assert_relative_eq!(v.v.y, expect.y, max_relative = 1e-3);
    }

    #[test]
    fn zero_total_circulation_decays_like_dipole() {
        let n = 101;
        let eta: Vec<f64> = (0..n).map(|j| -0.5 + j as f64 / (n - 1) as f64).collect();
        let xi: Vec<Vec2> = eta.iter().map(|&e| Vec2::new(e, 0.0)).collect();
        let sg: Vec<f64> = eta.iter().map(|&e| e).collect(); // odd: total = 0
        let s = SheetState::new(0.0, ParamKind::Arclength, Topology::Open, eta, xi, sg).unwrap();
        let v1 = velocity_off_sheet(&s, Vec2::new(10.0, 0.0)).unwrap().v.norm();
        let v2 = velocity_off_sheet(&s, Vec2::new(20.0, 0.0)).unwrap().v.norm();
        let order = (v1 / v2).log2();
        assert!(order > 1.8, "decay order {order}");
    }

    #[test]
    fn mean_of_one_sided_limits_matches_pv() {
        let s = flat_symmetric(201);
        let foot = Vec2::new(0.13, 0.0);
        // two-sided extrapolation to the sheet: v(h) + v(-h) averages out
        // the tangential jump
        let h = 0.05;
        let above = velocity_off_sheet(&s, foot + Vec2::new(0.0, h)).unwrap().v;
        let below = velocity_off_sheet(&s, foot - Vec2::new(0.0, h)).unwrap().v;
        let mean = (above + below) * 0.5;
        // nearest node to the foot point
        let i = s
            .xi
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dist(foot).partial_cmp(&b.1.dist(foot)).unwrap())
            .unwrap()
            .0;
        let pv = pv_velocity(&s, i, &QuadratureSpec::epsilon_cutoff(1e-4)).unwrap();
        assert!((mean - pv.v).norm() < 2e-2, "mean {mean:?} pv {:?}", pv.v);
    }

    #[test]
    fn circle_uniform_density_moves_tangentially() {
        let gbar = 0.7;
        let s = circle(128, 1.0, gbar);
        let u = pv_velocity_all(&s, &QuadratureSpec::alternate_point()).unwrap();
        for (j, ui) in u.iter().enumerate().take(128) {
            let a = 2.0 * PI * j as f64 / 128.0;
            let tangent = Vec2::new(-a.sin(), a.cos());
            let expect = tangent * (gbar / 2.0);
            assert!(
                (ui.v - expect).norm() < 2e-3,
                "node {j}: {:?} vs {:?}",
                ui.v,
                expect
            );
        }
    }

    fn flat_periodic_density(m: usize, density: impl Fn(f64) -> f64) -> SheetState {
        let n = m + 1;
        let l = 2.0 * PI;
        let eta: Vec<f64> = (0..n).map(|j| l * j as f64 / m as f64).collect();
        let xi: Vec<Vec2> = eta.iter().map(|&e| Vec2::new(e, 0.0)).collect();
        let sg: Vec<f64> = eta.iter().map(|&e| density(e)).collect();
        SheetState::new(0.0, ParamKind::Arclength, Topology::Closed, eta, xi, sg).unwrap()
    }

    #[test]
    fn schemes_converge_pairwise_on_smooth_sheets() {
        // flat periodic sheet with smooth nonuniform density (zero
        // curvature, so the blob bias is the clean O(delta^2) one);
        // alternate-point is spectrally accurate and serves as reference
        let density = |x: f64| 1.0 + 0.4 * x.sin() + 0.2 * (2.0 * x).cos();
        let s = flat_periodic_density(256, density);
        let reference = pv_velocity_all(&s, &QuadratureSpec::alternate_point()).unwrap();

        // the blob bias on a sheet is first order: the kernel difference
        // decays like delta^2/r^2, and integrated against the density's
        // linear variation it leaves a -gamma' delta/2 term
        let mut blob_err = Vec::new();
        for &delta in &[0.2, 0.1, 0.05] {
            let u = pv_velocity_all(&s, &QuadratureSpec::blob(delta)).unwrap();
            let e = u
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a.v - b.v).norm())
                .fold(0.0, f64::max);
            blob_err.push(e);
        }
        let order1 = (blob_err[0] / blob_err[1]).log2();
        let order2 = (blob_err[1] / blob_err[2]).log2();
        assert!(
            order1 > 0.7 && order2 > 0.7 && blob_err[2] < blob_err[0],
            "blob orders {order1} {order2} ({blob_err:?})"
        );
        // leading term check: error / delta approaches |gamma'|_max / 2
        let gp_max: f64 = 0.4 + 0.4; // sup |0.4 cos x - 0.4 sin 2x| bound
        assert!(blob_err[2] / 0.05 <= gp_max, "leading coefficient too large");

        // epsilon cutoff at the grid scale converges at O(h^2) on a curved
        // smooth sheet as the grid refines
        let circle_density = |a: f64| 1.0 + 0.4 * a.sin() + 0.2 * (2.0 * a).cos();
        let build = |m: usize| {
            let mut s = circle(m, 1.0, 1.0);
            for j in 0..=m {
                let a = 2.0 * PI * j as f64 / m as f64;
                s.sigma[j] = circle_density(a);
            }
            s
        };
        let mut eps_err = Vec::new();
        for &m in &[64usize, 128, 256] {
            let sm = build(m);
            let refm = pv_velocity_all(&sm, &QuadratureSpec::alternate_point()).unwrap();
            let u = pv_velocity_all(
                &sm,
                &QuadratureSpec::epsilon_cutoff(0.25 * sm.min_segment_length()),
            )
            .unwrap();
            let e = u
                .iter()
                .zip(&refm)
                .map(|(a, b)| (a.v - b.v).norm())
                .fold(0.0, f64::max);
            eps_err.push(e);
        }
        let o1 = (eps_err[0] / eps_err[1]).log2();
        let o2 = (eps_err[1] / eps_err[2]).log2();
        assert!(o1 > 1.6 && o2 > 1.6, "eps orders {o1} {o2} ({eps_err:?})");
    }

    fn reversed(s: &SheetState) -> SheetState {
        let n = s.len();
        let span = s.eta[n - 1] + s.eta[0];
        let eta_rev: Vec<f64> = (0..n).map(|j| span - s.eta[n - 1 - j]).collect();
        let xi_rev: Vec<Vec2> = (0..n).map(|j| s.xi[n - 1 - j]).collect();
        let sg_rev: Vec<f64> = (0..n).map(|j| s.sigma[n - 1 - j]).collect();
        SheetState::new(s.t, s.param_kind, s.topology, eta_rev, xi_rev, sg_rev).unwrap()
    }

    #[test]
    fn orientation_reversal_leaves_pv_unchanged() {
        // the velocity is geometric: reversing the parameter orientation
        // (same points, same masses) must not change it
        let n = 65;
        let eta: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
        let xi: Vec<Vec2> = eta
            .iter()
            .map(|&e| Vec2::new(e, 0.2 * (3.0 * e).sin()))
            .collect();
        let sg: Vec<f64> = eta.iter().map(|&e| 1.0 + 0.5 * (2.0 * e).cos()).collect();
        let s = SheetState::new(0.0, ParamKind::Lagrangian, Topology::Open, eta, xi, sg).unwrap();
        let r = reversed(&s);
        let spec = QuadratureSpec::epsilon_cutoff(0.25 * s.min_segment_length());
        let u = pv_velocity_all(&s, &spec).unwrap();
        let v = pv_velocity_all(&r, &spec).unwrap();
        for i in 1..n - 1 {
            let diff = (u[i].v - v[n - 1 - i].v).norm();
            assert!(diff <= 1e-12, "node {i} differs by {diff}");
        }

        // Chebyshev tip clustering amplifies rounding in the interpolation
        // arithmetic; the invariance still holds far beyond the quadrature
        // accuracy
        let pm = pm_state(64);
        let rev = reversed(&pm);
        let spec = QuadratureSpec::epsilon_cutoff(0.25 * pm.min_segment_length());
        let u = pv_velocity_all(&pm, &spec).unwrap();
        let v = pv_velocity_all(&rev, &spec).unwrap();
        for i in 1..pm.len() - 1 {
            let diff = (u[i].v - v[pm.len() - 1 - i].v).norm();
            assert!(diff <= 1e-10, "node {i} differs by {diff}");
        }
    }

    #[test]
    fn richardson_reproduces_untruncated_value() {
        let s = pm_state(128);
        let spec = QuadratureSpec::alternate_point();
        let plain = pv_velocity(&s, 64, &spec).unwrap();
        let rich =
            pv_velocity_richardson(&s, 64, &spec, 0.25 * s.min_segment_length(), 3).unwrap();
        assert!((plain.v - rich.v).norm() < 1e-9);
    }

    #[test]
    fn maximal_operator_dominates_pv() {
        let s = pm_state(64);
        let spec = QuadratureSpec::epsilon_cutoff(0.25 * s.min_segment_length());
        let grid = vec![0.5, 0.25, 0.1, 0.25 * s.min_segment_length()];
        let star = maximal_operator(&s, &grid, &spec).unwrap();
        let u = pv_velocity_all(&s, &spec).unwrap();
        for i in 1..s.len() - 1 {
            assert!(
                star[i] >= u[i].v.norm() - 1e-12,
                "node {i}: U* {} < |U| {}",
                star[i],
                u[i].v.norm()
            );
        }
    }

    #[test]
    fn maximal_operator_zero_on_symmetric_flat_sheet() {
        let s = flat_symmetric(41);
        let spec = QuadratureSpec::epsilon_cutoff(1e-4);
        let star = maximal_operator(&s, &[0.5, 0.2, 0.05, 1e-3], &spec).unwrap();
        assert!(star[20] < 1e-12, "{}", star[20]);
    }

    proptest! {
        #[test]
        fn kernel_antisymmetry(x in -3.0..3.0f64, y in -3.0..3.0f64) {
            prop_assume!(x != 0.0 || y != 0.0);
            let v = Vec2::new(x, y);
            let a = biot_savart_kernel(v).unwrap();
            let b = biot_savart_kernel(-v).unwrap();
            prop_assert_eq!(a.x, -b.x);
            prop_assert_eq!(a.y, -b.y);
        }

        #[test]
        fn periodic_kernel_antisymmetry(x in -3.0..3.0f64, y in -2.0..2.0f64) {
            prop_assume!(x.abs() > 1e-9 || y.abs() > 1e-9);
            let k = Kernel::PeriodicX { period: 2.0 * PI };
            let v = Vec2::new(x, y);
            let a = k.eval(v);
            let b = k.eval(-v);
            prop_assert!((a + b).norm() <= 1e-14 * (1.0 + a.norm()));
        }
    }
}
