//! Command-line entry points. Every subcommand resolves the layered
//! configuration, writes its artifacts under the output directory together
//! with `metadata.toml`, and maps outcomes to exit codes: 0 success, 1 a
//! failed check or run, 2 a usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::bounds::run_audit;
use crate::config::{RunConfig, StepKind};
use crate::descent::run_demo;
use crate::error::{Error, Result};
use crate::flow::{solve_flow, surface_cp, write_fields_csv};
use crate::geometry::{naca0012_cst, sample_boundary, DesignVector};
use crate::meshgen::{check_conformity, elliptic_smooth, parabolic_march, Grid, SmoothReport};
use crate::pipeline::{
    check_designs, gradient_check, make_reference, mirror_station, optimize, start_design,
    write_evaluation, write_geometry, GradCheck, ReferencePressure,
};

#[derive(Debug, Parser)]
#[command(name = "foilopt", version, about = "Airfoil pressure matching with discrete adjoints")]
pub struct Cli {
    /// TOML configuration layered over the built-in defaults.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(short, long, global = true, env = "FOILOPT_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Dotted override such as `flow.tol=1e-10`; repeatable.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and smooth the O-grid around a design.
    Mesh {
        /// Design file; NACA 0012 when absent.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Mesh plus a converged flow solution.
    Flow {
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Compute the NACA 0012 reference pressure and save it.
    Reference,
    /// Run the pressure-matching optimization.
    Optimize {
        /// Step rule; the configured one when absent.
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
    },
    /// Compare the adjoint gradient with central finite differences.
    GradCheck {
        /// Design to check; the seeded perturbed designs when absent.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Sample the error-bound inequalities on synthetic affine families.
    BoundsAudit,
    /// Run the step-rule convergence demo on an injected quadratic.
    DescentDemo,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RuleArg {
    Fixed,
    Armijo,
}

/// Parses arguments, runs the command and reports errors on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Runs one command; `Ok(false)` means it completed but its check failed.
pub fn run(cli: &Cli) -> Result<bool> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Command::Optimize { rule: Some(r) } = &cli.command {
        cfg.optimizer.rule = match r {
            RuleArg::Fixed => StepKind::Fixed,
            RuleArg::Armijo => StepKind::Armijo,
        };
    }
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)?;
    let (name, summary, ok) = match &cli.command {
        Command::Mesh { design } => cmd_mesh(&cfg, out, design.as_deref())?,
        Command::Flow { design } => cmd_flow(&cfg, out, design.as_deref())?,
        Command::Reference => cmd_reference(&cfg, out)?,
        Command::Optimize { .. } => cmd_optimize(&cfg, out)?,
        Command::GradCheck { design } => cmd_grad_check(&cfg, out, design.as_deref())?,
        Command::BoundsAudit => cmd_bounds(&cfg, out)?,
        Command::DescentDemo => cmd_descent(&cfg, out)?,
    };
    write_metadata(out, &cfg, name, &summary, ok)?;
    Ok(ok)
}

type Outcome = (&'static str, Vec<(&'static str, toml::Value)>, bool);

fn load_design(path: Option<&Path>) -> Result<DesignVector> {
    path.map_or_else(|| Ok(naca0012_cst()), DesignVector::load)
}

fn build_mesh(cfg: &RunConfig, design: &DesignVector) -> Result<(Grid, SmoothReport, crate::geometry::BoundaryCurve)> {
    let body = sample_boundary(design, &cfg.cst, cfg.grid.i_max)?;
    let g0 = parabolic_march(&body, &cfg.farfield, cfg.grid.j_max)?;
    let (g, rep) = elliptic_smooth(&g0, &cfg.mesh)?;
    Ok((g, rep, body))
}

fn cmd_mesh(cfg: &RunConfig, out: &Path, design: Option<&Path>) -> Result<Outcome> {
    let d = load_design(design)?;
    let (g, rep, body) = build_mesh(cfg, &d)?;
    let v = check_conformity(&g, &body, &cfg.farfield);
    g.write_mesh_csv(&out.join("mesh.csv"))?;
    g.write_grid_file(&out.join("grid.dat"))?;
    body.write_csv(&out.join("boundary.csv"))?;
    println!("mesh {}x{}: {} iterations, max |L| = {:.3e}", cfg.grid.i_max, cfg.grid.j_max, rep.iterations, rep.residual);
    println!(
        "cell jacobian in [{:.3e}, {:.3e}], folded cells {}",
        v.min_cell_jacobian, v.max_cell_jacobian, v.folded_cells
    );
    let ok = rep.residual <= cfg.mesh.tol && v.is_valid();
    let summary = vec![
        ("iterations", toml::Value::Integer(rep.iterations as i64)),
        ("residual", toml::Value::Float(rep.residual)),
        ("min_cell_jacobian", toml::Value::Float(v.min_cell_jacobian)),
    ];
    Ok(("mesh", summary, ok))
}

fn cmd_flow(cfg: &RunConfig, out: &Path, design: Option<&Path>) -> Result<Outcome> {
    let d = load_design(design)?;
    let (g, rep, body) = build_mesh(cfg, &d)?;
    let s = solve_flow(&g, &cfg.freestream, &cfg.flow, None)?;
    let cp = surface_cp(&s, &g, &cfg.freestream)?;
    let n = g.ni();
    let asym = (0..n).map(|i| (cp[i] - cp[mirror_station(i, n)]).abs()).fold(0.0, f64::max);
    let cp_min = cp.iter().copied().fold(f64::INFINITY, f64::min);
    g.write_mesh_csv(&out.join("mesh.csv"))?;
    write_fields_csv(&out.join("fields.csv"), &s, &g, &cfg.freestream)?;
    let e = crate::pipeline::Evaluation {
        design: d.clone(),
        boundary: body,
        grid: g,
        state: s.clone(),
        cp,
        objective: f64::NAN,
        mesh: rep,
        warm: false,
    };
    let empty = ReferencePressure { stations: Vec::new(), cp: Vec::new() };
    crate::pipeline::write_surface_cp(&out.join("surface_cp.csv"), &e, &empty)?;
    println!("flow: {} iterations, max |L| = {:.3e}, converged {}", s.iterations, s.residual, s.converged);
    println!("Cp min {cp_min:.6}, max upper/lower mismatch {asym:.3e}");
    let summary = vec![
        ("iterations", toml::Value::Integer(s.iterations as i64)),
        ("residual", toml::Value::Float(s.residual)),
        ("cp_min", toml::Value::Float(cp_min)),
        ("cp_asymmetry", toml::Value::Float(asym)),
    ];
    Ok(("flow", summary, s.converged))
}

fn cmd_reference(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let r = make_reference(cfg)?;
    r.save_csv(&out.join("reference.csv"))?;
    println!("reference: {} stations written to {}", r.len(), out.join("reference.csv").display());
    Ok(("reference", vec![("stations", toml::Value::Integer(r.len() as i64))], true))
}

fn cmd_optimize(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let reference = make_reference(cfg)?;
    let start = start_design(cfg)?;
    let res = optimize(cfg, &reference, &start)?;
    res.history.write_csv(&out.join("history.csv"))?;
    write_evaluation(out, &res.final_eval, cfg, &reference)?;
    write_geometry(&out.join("geometry.csv"), cfg, &start, &res.final_eval.design)?;
    reference.save_csv(&out.join("reference.csv"))?;
    let first = &res.history.records[0];
    let last = res.history.last();
    println!(
        "optimize ({}): {} iterations, objective {:.6e} -> {:.6e}, |g| {:.3e} -> {:.3e}, stop {:?}",
        res.history.rule, last.k, first.value, last.value, first.gbar_norm, last.gbar_norm, res.history.stop
    );
    let ok = !matches!(res.history.stop, crate::descent::StopReason::EvaluationFailed(_));
    let summary = vec![
        ("iterations", toml::Value::Integer(last.k as i64)),
        ("evaluations", toml::Value::Integer(res.evaluations as i64)),
        ("objective_start", toml::Value::Float(first.value)),
        ("objective_final", toml::Value::Float(last.value)),
        ("grad_norm_start", toml::Value::Float(first.gbar_norm)),
        ("grad_norm_final", toml::Value::Float(last.gbar_norm)),
        ("stop", toml::Value::String(format!("{:?}", res.history.stop))),
    ];
    Ok(("optimize", summary, ok))
}

fn cmd_grad_check(cfg: &RunConfig, out: &Path, design: Option<&Path>) -> Result<Outcome> {
    let reference = make_reference(cfg)?;
    let designs = match design {
        Some(p) => vec![DesignVector::load(p)?],
        None => check_designs(cfg),
    };
    let (rel, floor) = (cfg.check.rel_tol, cfg.check.abs_floor);
    let mut checks: Vec<GradCheck> = Vec::new();
    for d in &designs {
        let c = gradient_check(cfg, &reference, d)?;
        println!("design {} (objective {:.6e})", checks.len(), c.objective);
        println!("{:>4} {:>16} {:>16} {:>10} {:>10}", "k", "adjoint", "fd", "step", "rel err");
        for comp in &c.components {
            let r = comp.rel_error(floor).map_or("below floor".to_string(), |r| format!("{r:.3e}"));
            println!("{:>4} {:>16.9e} {:>16.9e} {:>10.1e} {:>10}", comp.index, comp.adjoint, comp.fd, comp.step, r);
        }
        checks.push(c);
    }
    write_grad_check_csv(&out.join("grad_check.csv"), &checks, floor)?;
    let worst = checks.iter().map(|c| c.max_rel_error(floor)).fold(0.0, f64::max);
    let nominal = checks.iter().map(|c| c.max_nominal_rel_error(floor)).fold(0.0, f64::max);
    let ok = checks.iter().all(|c| c.passes(rel, floor));
    println!("max relative error {worst:.3e} (tolerance {rel:.1e}): {}", if ok { "pass" } else { "FAIL" });
    println!("at nominal solve tolerances: {nominal:.3e}");
    let summary = vec![
        ("designs", toml::Value::Integer(checks.len() as i64)),
        ("max_rel_error", toml::Value::Float(worst)),
        ("max_rel_error_nominal", toml::Value::Float(nominal)),
    ];
    Ok(("grad-check", summary, ok))
}

/// Columns `design,k,adjoint,adjoint_nominal,fd,step,rel_error`.
pub fn write_grad_check_csv(path: &Path, checks: &[GradCheck], floor: f64) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "design,k,adjoint,adjoint_nominal,fd,step,rel_error")?;
    for (d, c) in checks.iter().enumerate() {
        for p in &c.components {
            let r = p.rel_error(floor).map(|r| format!("{r:.6e}")).unwrap_or_default();
            writeln!(
                w,
                "{d},{},{:.16e},{:.16e},{:.16e},{:e},{r}",
                p.index, p.adjoint, p.adjoint_nominal, p.fd, p.step
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_bounds(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let rep = run_audit(&cfg.bounds)?;
    rep.write_csv(&out.join("bounds_audit.csv"))?;
    println!("bounds audit: {} samples, {} checks, {} violations", cfg.bounds.samples, rep.records.len(), rep.violations);
    let c = &rep.constants;
    println!("uniform constants: D_R = {:.4e}, D_psi = {:.4e}", c.d_r_bar, c.d_psi_bar);
    let summary = vec![
        ("samples", toml::Value::Integer(cfg.bounds.samples as i64)),
        ("checks", toml::Value::Integer(rep.records.len() as i64)),
        ("violations", toml::Value::Integer(rep.violations as i64)),
    ];
    Ok(("bounds-audit", summary, rep.violations == 0))
}

fn cmd_descent(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let (_, cc, runs) = run_demo(&cfg.descent)?;
    println!("converted constants: c1 = {:.6}, c2 = {:.6}, C = {:.6}", cc.c1, cc.c2, cc.big_c);
    let mut ok = true;
    let mut summary = Vec::new();
    for r in &runs {
        let h = &r.history;
        h.write_csv(&out.join(format!("descent_{}.csv", h.rule)))?;
        let last = h.last();
        let exact = last.exact_norm.unwrap_or(f64::NAN);
        let reached = exact < cfg.descent.tol;
        ok &= reached;
        println!("{:>12}: {:>6} iterations, exact |grad| {:.3e}, stop {:?}", h.rule, last.k, exact, h.stop);
        summary.push((h.rule, toml::Value::Integer(last.k as i64)));
    }
    Ok(("descent-demo", summary, ok))
}

/// `metadata.toml`: a `[run]` table with the command and its summary,
/// followed by the fully resolved configuration.
pub fn write_metadata(
    out: &Path,
    cfg: &RunConfig,
    command: &str,
    summary: &[(&str, toml::Value)],
    ok: bool,
) -> Result<()> {
    let mut tree = toml::Value::try_from(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let mut run = toml::Table::new();
    run.insert("command".into(), toml::Value::String(command.into()));
    run.insert("version".into(), toml::Value::String(env!("CARGO_PKG_VERSION").into()));
    run.insert("ok".into(), toml::Value::Boolean(ok));
    for (k, v) in summary {
        if !(matches!(v, toml::Value::Float(f) if !f.is_finite())) {
            run.insert((*k).into(), v.clone());
        }
    }
    if let toml::Value::Table(t) = &mut tree {
        t.insert("run".into(), toml::Value::Table(run));
    }
    let text = toml::to_string(&tree).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(out.join("metadata.toml"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_globals_after_subcommand() {
        let c = Cli::try_parse_from(["foilopt", "mesh", "-s", "mesh.tol=1e-4", "--out", "x"]).unwrap();
        assert_eq!(c.overrides, vec!["mesh.tol=1e-4".to_string()]);
        assert_eq!(c.out, PathBuf::from("x"));
        assert!(matches!(c.command, Command::Mesh { design: None }));
    }

    #[test]
    fn bad_key_exits_with_two() {
        let dir = tempfile::tempdir().unwrap();
        let code = main_with_args([
            "foilopt",
            "descent-demo",
            "--out",
            dir.path().to_str().unwrap(),
            "-s",
            "descent.nonsense=1",
        ]);
        assert_eq!(code, ExitCode::from(2));
    }
}
