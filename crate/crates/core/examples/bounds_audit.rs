//! Samples the state, adjoint and gradient error bounds on a synthetic
//! affine residual family and picks directional tolerances.
//!
//! `cargo run --example bounds_audit [samples]`

use foilopt::bounds::{directional_tolerances, run_audit, AuditConfig, Check};

fn main() -> foilopt::Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let cfg = AuditConfig { samples, ..AuditConfig::default() };
    let rep = run_audit(&cfg)?;
    let c = &rep.constants;
    println!("C_R = {:.4}, C_Y = {:.4}, M_F = {:.4}", c.c_r_bar, c.c_y_bar, c.m_f_bar);
    println!("D_R = {:.4}, D_psi = {:.4}", c.d_r_bar, c.d_psi_bar);
    for check in [Check::State, Check::Adjoint, Check::Gradient, Check::Directional] {
        let worst = rep
            .records
            .iter()
            .filter(|r| r.check == check)
            .map(|r| if r.bound > 0.0 { r.measured / r.bound } else { 0.0 })
            .fold(0.0, f64::max);
        println!(
            "{:>12}: {:>5} samples, {} violations, largest measured/bound {worst:.3}",
            check.name(),
            rep.count(check),
            rep.violations_of(check, cfg.rel_slack)
        );
    }
    let t = directional_tolerances(cfg.zeta, cfg.omega, c.d_r_bar, c.d_psi_bar, 1.0)?;
    println!("for |g| = 1 and zeta = {}: {t:?}", cfg.zeta);
    Ok(())
}
