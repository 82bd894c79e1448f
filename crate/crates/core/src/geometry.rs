//! Curve geometry: arclength tables, conservative arclength
//! reparametrization, segment-exact disk clipping, and the regular-curve
//! constant estimator.
//!
//! All geometric predicates treat the sheet as the polyline through its
//! nodes and are segment-exact; no quadrature enters the regularity
//! estimator.

use crate::error::{Error, Result};
use crate::state::{ParamKind, SheetState, Topology};
use crate::vec2::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Cumulative polyline arclength per node; s[0] = 0.
pub fn arclength_table(state: &SheetState) -> Result<Vec<f64>> {
    state.validate()?;
    let n = state.len();
    let mut s = vec![0.0; n];
    for j in 1..n {
        let c = state.xi[j].dist(state.xi[j - 1]);
        if c <= 0.0 {
            return Err(Error::DegenerateSegment(j - 1, j));
        }
        s[j] = s[j - 1] + c;
    }
    Ok(s)
}

/// Resample a state onto a uniform arclength grid with `n_out` nodes.
///
/// Positions are interpolated linearly along the polyline. The density is
/// remapped conservatively: each output node receives the exact pushforward
/// mass of its node-centered cell, so the total circulation (trapezoid of
/// sigma over eta) is preserved to rounding. For closed states the two end
/// half-cells are the same wrapped cell and receive the combined mass.
pub fn reparametrize_arclength(state: &SheetState, n_out: usize) -> Result<SheetState> {
    state.validate()?;
    if n_out < 3 {
        return Err(Error::InvalidState(format!(
            "reparametrization needs at least 3 output nodes, got {n_out}"
        )));
    }
    let s = arclength_table(state)?;
    let total = *s.last().unwrap();
    let n = state.len();

    // cumulative mass M(eta) at input nodes, piecewise-linear sigma
    let mut mass = vec![0.0; n];
    for j in 1..n {
        mass[j] = mass[j - 1]
            + 0.5 * (state.sigma[j] + state.sigma[j - 1]) * (state.eta[j] - state.eta[j - 1]);
    }

    // M as a function of arclength: s and eta are both piecewise-linear in
    // the node index, so invert s -> node interval and evaluate the exact
    // per-cell quadratic antiderivative.
    let mass_at_s = |target: f64| -> f64 {
        let t = target.clamp(0.0, total);
        // locate interval by binary search
        let j = match s.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(k) => return mass[k.min(n - 1)],
            Err(k) => k.clamp(1, n - 1) - 1,
        };
        let f = (t - s[j]) / (s[j + 1] - s[j]);
        let de = state.eta[j + 1] - state.eta[j];
        let sg0 = state.sigma[j];
        let sg1 = state.sigma[j + 1];
        // integral of linear sigma over the first fraction f of the cell
        mass[j] + de * f * (sg0 + 0.5 * f * (sg1 - sg0))
    };

    let h = total / (n_out - 1) as f64;
    let grid: Vec<f64> = (0..n_out).map(|k| k as f64 * h).collect();

    // positions by linear interpolation along the polyline
    let mut xi = Vec::with_capacity(n_out);
    let mut cursor = 0usize;
    for &sk in &grid {
        while cursor + 2 < n && s[cursor + 1] < sk {
            cursor += 1;
        }
        let f = ((sk - s[cursor]) / (s[cursor + 1] - s[cursor])).clamp(0.0, 1.0);
        xi.push(state.xi[cursor] + (state.xi[cursor + 1] - state.xi[cursor]) * f);
    }
    // pin the endpoints exactly
    xi[0] = state.xi[0];
    xi[n_out - 1] = state.xi[n - 1];

    // conservative node-centered cell masses
    let mut sigma = vec![0.0; n_out];
    let m_at: Vec<f64> = (0..=2 * (n_out - 1))
        .map(|k| mass_at_s(0.5 * k as f64 * h))
        .collect();
    // m_at[k] = M at s = k*h/2; cell of node j spans [j*h - h/2, j*h + h/2]
    for j in 1..n_out - 1 {
        let cell = m_at[2 * j + 1] - m_at[2 * j - 1];
        sigma[j] = cell / h;
    }
    let first_half = m_at[1] - m_at[0];
    let last_half = m_at[2 * (n_out - 1)] - m_at[2 * (n_out - 1) - 1];
    match state.topology {
        Topology::Open => {
            sigma[0] = first_half / (0.5 * h);
            sigma[n_out - 1] = last_half / (0.5 * h);
        }
        Topology::Closed => {
            let wrapped = (first_half + last_half) / h;
            sigma[0] = wrapped;
            sigma[n_out - 1] = wrapped;
        }
    }

    SheetState::new(
        state.t,
        ParamKind::Arclength,
        state.topology,
        grid,
        xi,
        sigma,
    )
}

/// Length of the polyline inside the closed disk of radius `r` about
/// `center`, clipping every segment against the circle exactly.
pub fn curve_length_in_disk(state: &SheetState, center: Vec2, r: f64) -> f64 {
    assert!(r > 0.0, "disk radius must be positive");
    let mut total = 0.0;
    for w in state.xi.windows(2) {
        total += segment_length_in_disk(w[0], w[1], center, r);
    }
    total
}

fn segment_length_in_disk(a: Vec2, b: Vec2, c: Vec2, r: f64) -> f64 {
    let d = b - a;
    let m = a - c;
    let aa = d.norm_sq();
    if aa == 0.0 {
        return 0.0;
    }
    let bb = m.dot(d);
    let cc = m.norm_sq() - r * r;
    let disc = bb * bb - aa * cc;
    if disc <= 0.0 {
        // no crossing: the quadratic keeps one sign; test it at the midpoint
        let inside = aa * 0.25 + bb + cc <= 0.0;
        return if inside { aa.sqrt() } else { 0.0 };
    }
    let sq = disc.sqrt();
    let t0 = ((-bb - sq) / aa).max(0.0);
    let t1 = ((-bb + sq) / aa).min(1.0);
    if t1 > t0 {
        (t1 - t0) * aa.sqrt()
    } else {
        0.0
    }
}

/// Distance from a point to the polyline (segment-exact).
pub fn point_polyline_distance(state: &SheetState, p: Vec2) -> f64 {
    state
        .xi
        .windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let l2 = d.norm_sq();
    if l2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / l2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

/// Symmetric Hausdorff distance between two polylines, measured from the
/// nodes of each to the other polyline.
pub fn hausdorff_distance(a: &SheetState, b: &SheetState) -> f64 {
    let one = a
        .xi
        .iter()
        .map(|&p| point_polyline_distance(b, p))
        .fold(0.0, f64::max);
    let two = b
        .xi
        .iter()
        .map(|&p| point_polyline_distance(a, p))
        .fold(0.0, f64::max);
    one.max(two)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterStrategy {
    /// Curve nodes, a 32x32 lattice over the 1.5x-inflated bounding box,
    /// the node centroid, and the bounding-box center.
    Default,
    /// Curve nodes only.
    NodesOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    pub a_estimate: f64,
    pub r_grid: Vec<f64>,
    pub centers_sampled: usize,
    pub worst_case: (Vec2, f64),
    pub l2_gamma: f64,
    pub l1_gamma: f64,
}

/// Default radius grid: 24 logarithmically spaced radii from the minimum
/// segment length to the curve diameter.
pub fn default_r_grid(state: &SheetState) -> Vec<f64> {
    let lo = state.min_segment_length().max(1e-12);
    let hi = state.diameter().max(lo * 2.0);
    log_spaced(lo, hi, 24)
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn centers(state: &SheetState, strategy: CenterStrategy) -> Vec<Vec2> {
    let mut cs: Vec<Vec2> = state.xi.clone();
    if strategy == CenterStrategy::Default {
        let (lo, hi) = state.bounding_box();
        let mid = (lo + hi) * 0.5;
        let half = (hi - lo) * 0.75; // 1.5x inflation
        let m = 32;
        for iy in 0..m {
            for ix in 0..m {
                let fx = ix as f64 / (m - 1) as f64 * 2.0 - 1.0;
                let fy = iy as f64 / (m - 1) as f64 * 2.0 - 1.0;
                cs.push(mid + Vec2::new(half.x * fx, half.y * fy));
            }
        }
        let centroid = state
            .xi
            .iter()
            .fold(Vec2::ZERO, |acc, &p| acc + p)
            / state.len() as f64;
        cs.push(centroid);
        cs.push(mid);
    }
    cs
}

/// Lower estimate of the regular-curve constant: the maximum over sampled
/// centers and radii of length(curve in disk)/radius. For each center the
/// circumradius of the node cloud is also tried, which catches the
/// full-containment optimum. Also reports L1 and L2 arclength norms of the
/// density gamma = sigma / |dxi/deta|.
pub fn estimate_regularity_constant(
    state: &SheetState,
    r_grid: &[f64],
    strategy: CenterStrategy,
) -> RegularityReport {
    assert!(
        !r_grid.is_empty() && r_grid.iter().all(|&r| r > 0.0),
        "r_grid must be nonempty and positive"
    );
    let cs = centers(state, strategy);
    let per_center: Vec<(f64, Vec2, f64)> = cs
        .par_iter()
        .map(|&c| {
            let mut best = (0.0f64, c, r_grid[0]);
            let circum = state
                .xi
                .iter()
                .map(|&p| p.dist(c))
                .fold(0.0, f64::max);
            for &r in r_grid.iter().chain(std::iter::once(&circum)) {
                if r <= 0.0 {
                    continue;
                }
                let ratio = curve_length_in_disk(state, c, r) / r;
                if ratio > best.0 {
                    best = (ratio, c, r);
                }
            }
            best
        })
        .collect();
    let mut worst = (0.0f64, Vec2::ZERO, 1.0f64);
    for b in per_center {
        if b.0 > worst.0 {
            worst = b;
        }
    }

    let (l1, l2) = density_norms(state);
    RegularityReport {
        a_estimate: worst.0,
        r_grid: r_grid.to_vec(),
        centers_sampled: cs.len(),
        worst_case: (worst.1, worst.2),
        l2_gamma: l2,
        l1_gamma: l1,
    }
}

/// L1 and L2 norms of gamma with respect to arclength, evaluated on the
/// polyline: gamma_j = sigma_j / speed_j and ds = speed deta.
pub fn density_norms(state: &SheetState) -> (f64, f64) {
    let w = state.eta_weights();
    let speed = state.speed();
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for j in 0..state.len() {
        let gamma = state.sigma[j] / speed[j];
        l1 += w[j] * state.sigma[j].abs();
        l2 += w[j] * gamma * gamma * speed[j];
    }
    (l1, l2.sqrt())
}
