//! Coupled mesh/flow adjoint gradient of the pressure-matching objective,
//! checked against central finite differences.
//!
//! `cargo run --release --example adjoint_gradient`

use foilopt::config::RunConfig;
use foilopt::geometry::naca0012_cst;
use foilopt::pipeline::{evaluate_design, evaluate_gradient, gradient_check, make_reference, perturbed_design, Tolerances};

fn main() -> foilopt::Result<()> {
    let cfg = RunConfig::default();
    let reference = make_reference(&cfg)?;
    let design = perturbed_design(&naca0012_cst(), 5e-3, 11);

    let eval = evaluate_design(&design, &cfg, &reference, Tolerances::nominal(&cfg), None)?;
    let g = evaluate_gradient(&eval, &cfg, &reference)?;
    println!("objective {:.6e}", g.objective);
    println!(
        "adjoint solves: flow {:.1e} ({} refinements), mesh {:.1e} ({} refinements)",
        g.adjoints.flow_report.relative,
        g.adjoints.flow_report.refinements,
        g.adjoints.mesh_report.relative,
        g.adjoints.mesh_report.refinements
    );

    let check = gradient_check(&cfg, &reference, &design)?;
    println!("{:>3} {:>15} {:>15} {:>10}", "k", "adjoint", "central FD", "rel err");
    for c in &check.components {
        let r = c.rel_error(cfg.check.abs_floor).map_or("-".into(), |r| format!("{r:.2e}"));
        println!("{:>3} {:>15.8e} {:>15.8e} {:>10}", c.index, c.adjoint, c.fd, r);
    }
    println!("max relative error {:.2e}", check.max_rel_error(cfg.check.abs_floor));
    Ok(())
}
