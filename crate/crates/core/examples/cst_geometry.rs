//! CST parameterization: NACA 0012 coefficients, the sampled O-grid body
//! and a perturbed design.
//!
//! `cargo run --example cst_geometry [out_dir]`

use std::path::PathBuf;

use foilopt::geometry::{naca0012_analytic, naca0012_cst, sample_boundary, surfaces_cross, CstConfig};
use foilopt::pipeline::perturbed_design;

fn main() -> foilopt::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/cst_geometry".into()));
    std::fs::create_dir_all(&out)?;
    let cfg = CstConfig::default();
    let base = naca0012_cst();
    println!("NACA 0012 CST coefficients: {}", base.to_text_row());

    let body = sample_boundary(&base, &cfg, 49)?;
    let worst = body
        .points
        .iter()
        .map(|&(x, y)| (y.abs() - naca0012_analytic(x, 0.12).unwrap()).abs())
        .fold(0.0, f64::max);
    println!("{} boundary points, max deviation from the analytic profile {worst:.2e}", body.i_max());
    body.write_csv(&out.join("naca0012.csv"))?;

    let p = perturbed_design(&base, 5e-3, 2024);
    println!("perturbed design: {}", p.to_text_row());
    println!("surfaces cross: {}", surfaces_cross(&p, &cfg, 49)?);
    sample_boundary(&p, &cfg, 49)?.write_csv(&out.join("perturbed.csv"))?;
    println!("boundaries written to {}", out.display());
    Ok(())
}
