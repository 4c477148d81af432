//! Recovers NACA 0012 from a perturbed start by matching its upper-surface
//! pressure with fixed-step or Armijo steepest descent.
//!
//! `cargo run --release --example pressure_matching [iterations] [fixed|armijo] [out_dir]`

use std::path::PathBuf;

use foilopt::config::{RunConfig, StepKind};
use foilopt::pipeline::{make_reference, optimize, start_design, write_evaluation, write_geometry};

fn main() -> foilopt::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    cfg.optimizer.max_iters = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    if args.next().as_deref() == Some("armijo") {
        cfg.optimizer.rule = StepKind::Armijo;
    }
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/pressure_matching".into()));
    std::fs::create_dir_all(&out)?;

    let reference = make_reference(&cfg)?;
    let start = start_design(&cfg)?;
    let res = optimize(&cfg, &reference, &start)?;
    for r in res.history.records.iter().step_by(10) {
        println!("{:>5} J = {:.4e} |g| = {:.3e}", r.k, r.value, r.gbar_norm);
    }
    let last = res.history.last();
    println!("{:>5} J = {:.4e} |g| = {:.3e} ({:?})", last.k, last.value, last.gbar_norm, res.history.stop);
    println!("{} pipeline evaluations", res.evaluations);

    res.history.write_csv(&out.join("history.csv"))?;
    write_evaluation(&out, &res.final_eval, &cfg, &reference)?;
    write_geometry(&out.join("geometry.csv"), &cfg, &start, &res.final_eval.design)?;
    println!("results written to {}", out.display());
    Ok(())
}
