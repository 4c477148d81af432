//! Bounded, diminishing and Armijo steps on a strongly convex quadratic
//! whose gradients carry adversarial relative error.
//!
//! `cargo run --example descent_rules [zeta]`

use foilopt::descent::{run_demo, DemoConfig};

fn main() -> foilopt::Result<()> {
    let zeta = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let cfg = DemoConfig { zeta, ..DemoConfig::default() };
    let (problem, cc, runs) = run_demo(&cfg)?;
    println!("m = {}, mu = {}, L = {}, zeta = {zeta}", cfg.m, problem.mu, problem.l);
    println!("c1 = {:.5}, c2 = {:.5}, C = {:.5}", cc.c1, cc.c2, cc.big_c);
    for r in &runs {
        let h = &r.history;
        let last = h.last();
        let backtracks: usize = h.records.iter().map(|x| x.backtracks).sum();
        println!(
            "{:>12}: {:>5} iterations, exact |grad| {:.2e}, {} backtracks",
            h.rule,
            last.k,
            last.exact_norm.unwrap_or(f64::NAN),
            backtracks
        );
    }
    Ok(())
}
