// Development probe: enumerate the default suite on the exact wing
// trajectory, classify tip coverage, and print both residual routes.
use sheetlab::kernels::QuadratureSpec;
use sheetlab::oracles::{prandtl_munk_trajectory, PrandtlMunkSpec};
use sheetlab::weak_forms::{build_test_suite, covers_tip, evaluate_residuals};

fn main() {
    let traj = prandtl_munk_trajectory(&PrandtlMunkSpec {
        n: 256,
        t_end: 1.0,
        dt: 0.0125,
    })
    .unwrap();
    let suite = build_test_suite(&traj, 12);
    let spec = QuadratureSpec::alternate_point();
    let n_last = traj.states[0].len() - 1;
    for phi in &suite {
        let tip = covers_tip(&traj, phi, 0) || covers_tip(&traj, phi, n_last);
        let rep = evaluate_residuals(&traj, phi, &spec).unwrap();
        println!(
            "{:20} center=({:+.4},{:+.4}) r={:.4} t0={:.2} w={:.3} tip={} | BR lim {:+.3e} pass={} | EU lim {:+.3e} pass={} floor {:.3e}",
            phi.id, phi.center.x, phi.center.y, phi.radius, phi.time.t0, phi.time.width,
            tip, rep.residual_br, rep.pass_br, rep.residual_euler, rep.pass_euler, rep.floor
        );
        for row in &rep.quadrature_refinements {
            println!(
                "    res {:4}: br {:+.6e}  eu {:+.6e}",
                row.resolution, row.residual_br, row.residual_euler
            );
        }
    }
}
