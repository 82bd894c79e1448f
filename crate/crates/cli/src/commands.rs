//! The five subcommands: simulate, residual, regularity, convergence,
//! oracle-check. Each writes its outputs under a target directory and
//! embeds the config hash in every file.

use crate::config::LoadedConfig;
use crate::output::{fmt_f64, write_json, write_metadata, CsvWriter};
use serde::Serialize;
use sheetlab::dynamics::{simulate, EvolutionConfig, EvolutionScheme};
use sheetlab::geometry::{
    default_r_grid, estimate_regularity_constant, hausdorff_distance, reparametrize_arclength,
    CenterStrategy,
};
use sheetlab::kernels::{pv_velocity_all, QuadratureSpec};
use sheetlab::oracles::{
    self, flat_uniform_state, kh_linearized_growth, prandtl_munk_state, FlatUniformSpec,
    PrandtlMunkSpec,
};
use sheetlab::state::{ParamKind, SheetState, SheetTrajectory, Topology};
use sheetlab::weak_forms::{build_test_suite, evaluate_residuals, ResidualReport};
use sheetlab::Vec2;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or inconsistent configuration, unreadable inputs,
    /// unwritable outputs (exit code 2).
    Config(String),
    /// Numerical abort: self-intersection, CFL violation, divergence
    /// (exit code 3).
    Numerical(String),
    /// Strict-mode regularity run detected a violated hypothesis
    /// (exit code 4).
    HypothesisViolated(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical abort: {m}"),
            CliError::HypothesisViolated(m) => write!(f, "hypothesis violated: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::HypothesisViolated(_) => 4,
        }
    }
}

fn numerical(e: sheetlab::Error) -> CliError {
    match e {
        sheetlab::Error::Io(m) => CliError::Config(m.to_string()),
        sheetlab::Error::Serde(m) => CliError::Config(m.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Serialize)]
struct SimulateDiagnostics {
    scheme: EvolutionScheme,
    states_written: usize,
    #[serde(flatten)]
    run: sheetlab::dynamics::RunDiagnostics,
}

/// Build the initial state from the oracle section and evolve it; emits
/// `trajectory.jsonl` and `metadata.json`.
pub fn cmd_simulate(lc: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let spec = lc
        .config
        .initial_data
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate requires an initial_data section".into()))?;
    let evo = lc
        .config
        .evolution
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate requires an evolution section".into()))?;
    evo.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let mut initial = oracles::build_initial_state(spec).map_err(numerical)?;
    if evo.scheme == EvolutionScheme::Arclength && initial.param_kind != ParamKind::Arclength {
        initial = reparametrize_arclength(&initial, initial.len()).map_err(numerical)?;
    }
    let (traj, diag) = simulate(&initial, evo).map_err(numerical)?;

    std::fs::create_dir_all(out).map_err(io_err)?;
    traj.save(&out.join("trajectory.jsonl")).map_err(numerical)?;
    write_metadata(
        &out.join("metadata.json"),
        "simulate",
        &lc.raw,
        &lc.hash,
        lc.config.seed,
        SimulateDiagnostics {
            scheme: evo.scheme,
            states_written: traj.states.len(),
            run: diag,
        },
    )
    .map_err(io_err)?;
    Ok(())
}

fn load_trajectory(path: &Path) -> Result<SheetTrajectory, CliError> {
    SheetTrajectory::load(path).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
struct ResidualDiagnostics {
    suite_size: usize,
    quadrature: QuadratureSpec,
    pass_br_count: usize,
    pass_euler_count: usize,
}

/// Evaluate the weak-form residual suite on a stored trajectory; emits
/// `residuals.json`, `residuals.csv`, `metadata.json`, and prints one
/// summary line per test function.
pub fn cmd_residual(
    lc: &LoadedConfig,
    trajectory: &Path,
    out: &Path,
) -> Result<Vec<ResidualReport>, CliError> {
    let section = lc.config.residual.clone().unwrap_or_default();
    let traj = load_trajectory(trajectory)?;
    let spec = section
        .quadrature
        .unwrap_or_else(|| QuadratureSpec::default_for(&traj.states[0]));
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let suite = build_test_suite(&traj, section.suite_size);
    let mut reports = Vec::with_capacity(suite.len());
    for phi in &suite {
        let rep = evaluate_residuals(&traj, phi, &spec).map_err(numerical)?;
        println!(
            "{} {} {}",
            rep.test_function_id,
            if rep.pass_br { "PASS_BR" } else { "FAIL_BR" },
            if rep.pass_euler {
                "PASS_EULER"
            } else {
                "FAIL_EULER"
            }
        );
        reports.push(rep);
    }

    std::fs::create_dir_all(out).map_err(io_err)?;
    let mut csv = CsvWriter::new(
        &lc.hash,
        &[
            "test_function_id",
            "residual_br",
            "residual_euler",
            "converged_br",
            "converged_euler",
            "pass_br",
            "pass_euler",
        ],
    );
    for r in &reports {
        csv.row(&[
            r.test_function_id.clone(),
            fmt_f64(r.residual_br),
            fmt_f64(r.residual_euler),
            r.converged_br.to_string(),
            r.converged_euler.to_string(),
            r.pass_br.to_string(),
            r.pass_euler.to_string(),
        ]);
    }
    csv.write(&out.join("residuals.csv")).map_err(io_err)?;
    write_json(&out.join("residuals.json"), &reports).map_err(io_err)?;
    write_metadata(
        &out.join("metadata.json"),
        "residual",
        &lc.raw,
        &lc.hash,
        lc.config.seed,
        ResidualDiagnostics {
            suite_size: suite.len(),
            quadrature: spec,
            pass_br_count: reports.iter().filter(|r| r.pass_br).count(),
            pass_euler_count: reports.iter().filter(|r| r.pass_euler).count(),
        },
    )
    .map_err(io_err)?;
    Ok(reports)
}

/// Threshold on L2-norm growth under node-halving used as the divergence
/// signal: a convergent density changes by O(h^2), a square-nonintegrable
/// one keeps growing.
pub const L2_REFINEMENT_TOL: f64 = 0.02;

#[derive(Serialize, Clone)]
pub struct RegularityRow {
    pub t: f64,
    pub a_estimate: f64,
    pub l1_gamma: f64,
    pub l2_gamma: f64,
    pub l2_gamma_coarse: f64,
    pub hypothesis_violated: bool,
}

#[derive(Serialize)]
pub struct RegularitySummary {
    pub a_max_over_time: f64,
    pub l2_max_over_time: f64,
    pub violated_any: bool,
    pub rows: Vec<RegularityRow>,
}

/// Regular-curve constant and density norms per state, with the
/// L2-divergence flag; emits `regularity.json`, `regularity.csv`, and
/// `metadata.json`. In strict mode a violated hypothesis is the exit
/// condition.
pub fn cmd_regularity(
    lc: &LoadedConfig,
    trajectory: &Path,
    out: &Path,
) -> Result<RegularitySummary, CliError> {
    let section = lc.config.regularity.clone().unwrap_or_default();
    let traj = load_trajectory(trajectory)?;

    let mut rows = Vec::new();
    for s in &traj.states {
        let grid = default_r_grid(s);
        let rep = estimate_regularity_constant(s, &grid, CenterStrategy::Default);
        let coarse = coarsen_for_norms(s);
        let (_, l2_coarse) = sheetlab::geometry::density_norms(&coarse);
        let violated = rep.l2_gamma > (1.0 + L2_REFINEMENT_TOL) * l2_coarse;
        rows.push(RegularityRow {
            t: s.t,
            a_estimate: rep.a_estimate,
            l1_gamma: rep.l1_gamma,
            l2_gamma: rep.l2_gamma,
            l2_gamma_coarse: l2_coarse,
            hypothesis_violated: violated,
        });
    }
    let summary = RegularitySummary {
        a_max_over_time: rows.iter().map(|r| r.a_estimate).fold(0.0, f64::max),
        l2_max_over_time: rows.iter().map(|r| r.l2_gamma).fold(0.0, f64::max),
        violated_any: rows.iter().any(|r| r.hypothesis_violated),
        rows: rows.clone(),
    };

    std::fs::create_dir_all(out).map_err(io_err)?;
    let mut csv = CsvWriter::new(
        &lc.hash,
        &[
            "t",
            "a_estimate",
            "l1_gamma",
            "l2_gamma",
            "l2_gamma_coarse",
            "hypothesis_violated",
        ],
    );
    for r in &rows {
        csv.row(&[
            fmt_f64(r.t),
            fmt_f64(r.a_estimate),
            fmt_f64(r.l1_gamma),
            fmt_f64(r.l2_gamma),
            fmt_f64(r.l2_gamma_coarse),
            r.hypothesis_violated.to_string(),
        ]);
    }
    csv.write(&out.join("regularity.csv")).map_err(io_err)?;
    write_json(&out.join("regularity.json"), &summary).map_err(io_err)?;
    write_metadata(
        &out.join("metadata.json"),
        "regularity",
        &lc.raw,
        &lc.hash,
        lc.config.seed,
        serde_json::json!({
            "strict": section.strict,
            "violated_any": summary.violated_any,
            "flag": if summary.violated_any { "HYPOTHESIS_VIOLATED" } else { "OK" },
        }),
    )
    .map_err(io_err)?;

    for r in &rows {
        println!(
            "t={} A={:.4} l2={:.4} {}",
            r.t,
            r.a_estimate,
            r.l2_gamma,
            if r.hypothesis_violated {
                "HYPOTHESIS_VIOLATED"
            } else {
                "OK"
            }
        );
    }

    if section.strict && summary.violated_any {
        return Err(CliError::HypothesisViolated(
            "density L2 norm diverges under refinement".into(),
        ));
    }
    Ok(summary)
}

/// Node-halved copy of a state (for the L2 refinement comparison).
fn coarsen_for_norms(s: &SheetState) -> SheetState {
    let stride = if (s.len() - 1) % 2 == 0 { 2 } else { 1 };
    let idx: Vec<usize> = (0..s.len()).step_by(stride).collect();
    SheetState {
        t: s.t,
        param_kind: s.param_kind,
        topology: s.topology,
        eta: idx.iter().map(|&j| s.eta[j]).collect(),
        xi: idx.iter().map(|&j| s.xi[j]).collect(),
        sigma: idx.iter().map(|&j| s.sigma[j]).collect(),
    }
}

/// Named convergence studies; each emits `convergence.csv` with
/// (resolution, error) rows.
pub fn cmd_convergence(lc: &LoadedConfig, out: &Path) -> Result<Vec<(usize, f64)>, CliError> {
    let section = lc
        .config
        .convergence
        .as_ref()
        .ok_or_else(|| CliError::Config("convergence requires a convergence section".into()))?;
    let rows = match section.study.as_str() {
        "pv-prandtl-munk" => study_pv_prandtl_munk()?,
        "reparam-invariance" => study_reparam_invariance()?,
        "residual-refinement" => study_residual_refinement()?,
        other => {
            return Err(CliError::Config(format!(
                "unknown study '{other}'; available: pv-prandtl-munk, reparam-invariance, residual-refinement"
            )))
        }
    };
    std::fs::create_dir_all(out).map_err(io_err)?;
    let mut csv = CsvWriter::new(&lc.hash, &["resolution", "error"]);
    for (res, err) in &rows {
        csv.row(&[res.to_string(), fmt_f64(*err)]);
    }
    csv.write(&out.join("convergence.csv")).map_err(io_err)?;
    write_metadata(
        &out.join("metadata.json"),
        "convergence",
        &lc.raw,
        &lc.hash,
        lc.config.seed,
        serde_json::json!({"study": section.study, "levels": rows.len()}),
    )
    .map_err(io_err)?;
    Ok(rows)
}

/// Error of the principal-value velocity on the Chebyshev-discretized
/// elliptically loaded wing against the exact (0, -1/2).
fn study_pv_prandtl_munk() -> Result<Vec<(usize, f64)>, CliError> {
    let mut rows = Vec::new();
    for &n in &[32usize, 64, 128, 256] {
        let s = prandtl_munk_state(n, 0.0).map_err(numerical)?;
        let u = pv_velocity_all(&s, &QuadratureSpec::alternate_point()).map_err(numerical)?;
        let mut err = 0.0f64;
        for p in u.iter().take(n).skip(1) {
            err = err.max((p.v - Vec2::new(0.0, -0.5)).norm());
        }
        rows.push((n, err));
    }
    Ok(rows)
}

/// Hausdorff distance between Lagrangian and arclength evolutions of the
/// same smooth closed sheet.
fn study_reparam_invariance() -> Result<Vec<(usize, f64)>, CliError> {
    let mut rows = Vec::new();
    let t_end = 0.1;
    for &m in &[32usize, 64, 128] {
        let n = m + 1;
        let eta: Vec<f64> = (0..n)
            .map(|j| 2.0 * std::f64::consts::PI * j as f64 / m as f64)
            .collect();
        let xi: Vec<Vec2> = eta.iter().map(|&a| Vec2::new(a.cos(), a.sin())).collect();
        let sg: Vec<f64> = eta.iter().map(|&a| 1.0 + 0.3 * a.sin()).collect();
        let raw = SheetState::new(0.0, ParamKind::Lagrangian, Topology::Closed, eta, xi, sg)
            .map_err(numerical)?;
        let arc = reparametrize_arclength(&raw, n).map_err(numerical)?;
        let mut lag = arc.clone();
        lag.param_kind = ParamKind::Lagrangian;
        let dt = 0.005 * (32.0 / m as f64).sqrt();
        let steps = (t_end / dt).ceil() as usize;
        let dt = t_end / steps as f64;
        let mk = |scheme| EvolutionConfig {
            scheme,
            dt,
            t_end,
            quadrature: QuadratureSpec::alternate_point(),
            remesh_every: 4,
            fourier_filter_level: None,
            output_every: steps,
        };
        let (ta, _) = simulate(&arc, &mk(EvolutionScheme::Arclength)).map_err(numerical)?;
        let (tl, _) = simulate(&lag, &mk(EvolutionScheme::Lagrangian)).map_err(numerical)?;
        let d = hausdorff_distance(ta.states.last().unwrap(), tl.states.last().unwrap());
        rows.push((m, d));
    }
    Ok(rows)
}

/// Magnitude of the transport-form residual of the exact wing trajectory
/// across its quadrature refinement levels.
fn study_residual_refinement() -> Result<Vec<(usize, f64)>, CliError> {
    let traj = oracles::prandtl_munk_trajectory(&PrandtlMunkSpec {
        n: 128,
        t_end: 1.0,
        dt: 0.025,
    })
    .map_err(numerical)?;
    let suite = build_test_suite(&traj, 1);
    let rep = evaluate_residuals(&traj, &suite[0], &QuadratureSpec::alternate_point())
        .map_err(numerical)?;
    Ok(rep
        .quadrature_refinements
        .iter()
        .map(|r| (r.resolution, r.residual_br.abs()))
        .collect())
}

#[derive(Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Quick self-checks of the reference solutions; prints one PASS/FAIL
/// line each and writes `oracle_check.json`.
pub fn cmd_oracle_check(lc: &LoadedConfig, out: &Path) -> Result<Vec<OracleCheck>, CliError> {
    let mut checks = Vec::new();

    // stationary flat sheet
    let flat = flat_uniform_state(&FlatUniformSpec {
        period: 2.0 * std::f64::consts::PI,
        gbar: 1.0,
        n: 64,
    })
    .map_err(numerical)?;
    let cfg = EvolutionConfig {
        scheme: EvolutionScheme::Arclength,
        dt: 0.05,
        t_end: 1.0,
        quadrature: QuadratureSpec::alternate_point(),
        remesh_every: 5,
        fourier_filter_level: None,
        output_every: 20,
    };
    let (traj, _) = simulate(&flat, &cfg).map_err(numerical)?;
    let disp = traj
        .states
        .last()
        .unwrap()
        .xi
        .iter()
        .zip(&flat.xi)
        .map(|(a, b)| a.dist(*b))
        .fold(0.0, f64::max);
    checks.push(OracleCheck {
        name: "flat_uniform_stationary_displacement".into(),
        value: disp,
        threshold: 1e-10,
        pass: disp <= 1e-10,
    });

    // wing velocity
    let pm = prandtl_munk_state(128, 0.0).map_err(numerical)?;
    let u = pv_velocity_all(&pm, &QuadratureSpec::alternate_point()).map_err(numerical)?;
    let err = u
        .iter()
        .take(128)
        .skip(1)
        .map(|p| (p.v - Vec2::new(0.0, -0.5)).norm())
        .fold(0.0, f64::max);
    checks.push(OracleCheck {
        name: "prandtl_munk_velocity_error".into(),
        value: err,
        threshold: 1e-6,
        pass: err <= 1e-6,
    });

    // serialization round trip
    let json = pm.to_json().map_err(numerical)?;
    let back = SheetState::from_json(&json).map_err(numerical)?;
    let rt = pm
        .xi
        .iter()
        .zip(&back.xi)
        .map(|(a, b)| a.dist(*b))
        .fold(0.0, f64::max);
    checks.push(OracleCheck {
        name: "state_json_round_trip".into(),
        value: rt,
        threshold: 1e-15,
        pass: rt <= 1e-15,
    });

    // linearized growth scaling
    let rates = kh_linearized_growth(&flat, &[1, 2], &QuadratureSpec::alternate_point())
        .map_err(numerical)?;
    let ratio_err = (rates[1].1 / rates[0].1 - 2.0).abs();
    checks.push(OracleCheck {
        name: "kh_growth_k_scaling".into(),
        value: ratio_err,
        threshold: 1e-2,
        pass: ratio_err <= 1e-2,
    });

    for c in &checks {
        println!(
            "{} {}: {} (threshold {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    std::fs::create_dir_all(out).map_err(io_err)?;
    write_json(&out.join("oracle_check.json"), &checks).map_err(io_err)?;
    write_metadata(
        &out.join("metadata.json"),
        "oracle-check",
        &lc.raw,
        &lc.hash,
        lc.config.seed,
        serde_json::json!({"pass": checks.iter().all(|c| c.pass)}),
    )
    .map_err(io_err)?;

    if checks.iter().all(|c| c.pass) {
        Ok(checks)
    } else {
        Err(CliError::Numerical("oracle self-check failed".into()))
    }
}
