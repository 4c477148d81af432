//! Reduced pressure-matching problem: design → boundary → mesh → flow →
//! objective, its adjoint gradient, and the optimization driver.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjoint::{adjoint_gradient, AdjointProblem, GradientResult};
use crate::config::{RunConfig, StepKind};
use crate::descent::{run_descent, DescentHistory, DescentProblem, DirectionPolicy, StepRule, StopCriteria};
use crate::error::{Error, Result};
use crate::flow::{solve_flow, surface_cp, write_fields_csv, Af2Params, FlowState};
use crate::geometry::{naca0012_cst, sample_boundary, surfaces_cross, BoundaryCurve, DesignVector};
use crate::meshgen::{check_validity, elliptic_smooth, parabolic_march, EllipticParams, Grid, SmoothReport};

/// Upper-surface stations from the trailing edge to the leading edge:
/// `0, N−1, …, N/2` in periodic column numbering.
pub fn upper_stations(n: usize) -> Vec<usize> {
    std::iter::once(0).chain((n / 2..n).rev()).collect()
}

/// Lower-surface partner of each upper station (same chordwise position).
pub fn mirror_station(i: usize, n: usize) -> usize {
    (n - i) % n
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePressure {
    pub stations: Vec<usize>,
    pub cp: Vec<f64>,
}

impl ReferencePressure {
    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    /// Columns `station,cp`, station in periodic numbering.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "station,cp")?;
        for (s, c) in self.stations.iter().zip(&self.cp) {
            writeln!(w, "{s},{c:.16e}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut stations = Vec::new();
        let mut cp = Vec::new();
        for (k, line) in f.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || k == 0 && t.starts_with("station") {
                continue;
            }
            let (a, b) = t
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("{}:{}: expected `station,cp`", path.display(), k + 1)))?;
            stations.push(
                a.trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), k + 1)))?,
            );
            cp.push(
                b.trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), k + 1)))?,
            );
        }
        if stations.is_empty() {
            return Err(Error::Parse(format!("{}: no reference rows", path.display())));
        }
        Ok(ReferencePressure { stations, cp })
    }

    fn check(&self, n: usize) -> Result<()> {
        if let Some(&s) = self.stations.iter().find(|&&s| s >= n) {
            return Err(Error::Config(format!("reference station {s} outside 0..{n}")));
        }
        Ok(())
    }
}

/// Converged mesh and flow at one design.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub design: DesignVector,
    pub boundary: BoundaryCurve,
    pub grid: Grid,
    pub state: FlowState,
    /// Wall `Cp` at every periodic station.
    pub cp: Vec<f64>,
    pub objective: f64,
    pub mesh: SmoothReport,
    pub warm: bool,
}

impl Evaluation {
    pub fn matched_cp(&self, reference: &ReferencePressure) -> Vec<f64> {
        reference.stations.iter().map(|&i| self.cp[i]).collect()
    }
}

/// Solver tolerances for one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub mesh: f64,
    pub flow: f64,
}

impl Tolerances {
    pub fn nominal(cfg: &RunConfig) -> Self {
        Tolerances { mesh: cfg.mesh.tol, flow: cfg.flow.tol }
    }

    pub fn check(cfg: &RunConfig) -> Self {
        Tolerances { mesh: cfg.check.mesh_tol, flow: cfg.check.flow_tol }
    }
}

fn objective_value(cp: &[f64], reference: &ReferencePressure) -> f64 {
    reference
        .stations
        .iter()
        .zip(&reference.cp)
        .map(|(&i, &r)| 0.5 * (cp[i] - r) * (cp[i] - r))
        .sum()
}

fn replace_body_row(grid: &Grid, body: &BoundaryCurve) -> Grid {
    let mut g = grid.clone();
    for i in 0..g.ni() {
        g.x[(i, 0)] = body.points[i].0;
        g.y[(i, 0)] = body.points[i].1;
    }
    g
}

/// One full evaluation. With `warm`, mesh smoothing starts from the warm
/// grid with its body row replaced, and the flow from the warm potential;
/// a warm mesh that folds falls back to a fresh parabolic march.
pub fn evaluate_design(
    design: &DesignVector,
    cfg: &RunConfig,
    reference: &ReferencePressure,
    tol: Tolerances,
    warm: Option<&Evaluation>,
) -> Result<Evaluation> {
    let i_max = cfg.grid.i_max;
    if design.upper.len() != cfg.cst.order + 1 || design.lower.len() != cfg.cst.order + 1 {
        return Err(Error::Dimension { expected: 2 * (cfg.cst.order + 1), got: design.len() });
    }
    if surfaces_cross(design, &cfg.cst, i_max)? {
        return Err(Error::Evaluation("upper and lower surfaces cross".into()));
    }
    let boundary = sample_boundary(design, &cfg.cst, i_max)?;
    reference.check(i_max - 1)?;
    let mp = EllipticParams { tol: tol.mesh, ..cfg.mesh.clone() };
    let cold = || -> Result<(Grid, SmoothReport)> {
        let g0 = parabolic_march(&boundary, &cfg.farfield, cfg.grid.j_max)?;
        elliptic_smooth(&g0, &mp)
    };
    let mut used_warm = false;
    let (grid, mesh) = match warm {
        Some(w) if w.grid.ni() == i_max - 1 && w.grid.nj() == cfg.grid.j_max => {
            let g0 = replace_body_row(&w.grid, &boundary);
            let smoothed = if check_validity(&g0).is_valid() { elliptic_smooth(&g0, &mp).ok() } else { None };
            match smoothed {
                Some(r) => {
                    used_warm = true;
                    r
                }
                None => cold()?,
            }
        }
        _ => cold()?,
    };
    let v = check_validity(&grid);
    if !v.is_valid() {
        return Err(Error::InvalidMesh(format!("{} folded cells", v.folded_cells)));
    }
    let fp = Af2Params { tol: tol.flow, ..cfg.flow.clone() };
    let init = if used_warm { warm.map(|w| &w.state) } else { None };
    let state = match solve_flow(&grid, &cfg.freestream, &fp, init) {
        Ok(s) => s,
        // a poor warm potential can destabilize AF2; retry from freestream
        Err(_) if init.is_some() => solve_flow(&grid, &cfg.freestream, &fp, None)?,
        Err(e) => return Err(e),
    };
    let cp = surface_cp(&state, &grid, &cfg.freestream)?;
    let objective = objective_value(&cp, reference);
    Ok(Evaluation { design: design.clone(), boundary, grid, state, cp, objective, mesh, warm: used_warm })
}

/// Reference `Cp` from the configured file, or computed at NACA 0012.
pub fn make_reference(cfg: &RunConfig) -> Result<ReferencePressure> {
    if let Some(p) = &cfg.reference.path {
        let r = ReferencePressure::load_csv(p)?;
        r.check(cfg.grid.i_max - 1)?;
        return Ok(r);
    }
    let stations = upper_stations(cfg.grid.i_max - 1);
    let placeholder = ReferencePressure { cp: vec![0.0; stations.len()], stations };
    let e = evaluate_design(&naca0012_cst(), cfg, &placeholder, Tolerances::nominal(cfg), None)?;
    let cp = e.matched_cp(&placeholder);
    Ok(ReferencePressure { stations: placeholder.stations, cp })
}

/// NACA 0012 plus `±perturbation` per coefficient with seeded signs, or the
/// configured start file.
pub fn start_design(cfg: &RunConfig) -> Result<DesignVector> {
    if let Some(p) = &cfg.optimizer.start {
        return DesignVector::load(p);
    }
    Ok(perturbed_design(&naca0012_cst(), cfg.optimizer.perturbation, cfg.optimizer.seed))
}

pub fn perturbed_design(base: &DesignVector, magnitude: f64, seed: u64) -> DesignVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = base
        .to_flat()
        .into_iter()
        .map(|v| v + if rng.gen::<bool>() { magnitude } else { -magnitude })
        .collect();
    DesignVector::from_flat(&z).expect("same length as the base design")
}

/// Seeded perturbed NACA 0012 designs used by the gradient check.
pub fn check_designs(cfg: &RunConfig) -> Vec<DesignVector> {
    (0..cfg.check.designs as u64)
        .map(|k| perturbed_design(&naca0012_cst(), cfg.optimizer.perturbation, cfg.check.seed + k))
        .collect()
}

pub fn evaluate_gradient(eval: &Evaluation, cfg: &RunConfig, reference: &ReferencePressure) -> Result<GradientResult> {
    let p = AdjointProblem {
        design: &eval.design,
        cst: &cfg.cst,
        grid: &eval.grid,
        state: &eval.state,
        fs: &cfg.freestream,
        kappa: cfg.flow.kappa,
        stations: &reference.stations,
        cp_ref: &reference.cp,
    };
    adjoint_gradient(&p, cfg.adjoint.tol)
}

/// Stateful evaluator that warm-starts each design from the last one.
pub struct Pipeline {
    pub config: RunConfig,
    pub reference: ReferencePressure,
    pub tolerances: Tolerances,
    last: Option<Evaluation>,
    pub evaluations: usize,
}

impl Pipeline {
    pub fn new(config: RunConfig, reference: ReferencePressure) -> Self {
        let tolerances = Tolerances::nominal(&config);
        Pipeline { config, reference, tolerances, last: None, evaluations: 0 }
    }

    pub fn last(&self) -> Option<&Evaluation> {
        self.last.as_ref()
    }

    pub fn evaluate(&mut self, z: &[f64]) -> Result<&Evaluation> {
        let hit = self.last.as_ref().is_some_and(|e| e.design.to_flat() == z);
        if !hit {
            let design = DesignVector::from_flat(z)?;
            let warm = if self.config.optimizer.warm_start { self.last.as_ref() } else { None };
            let e = evaluate_design(&design, &self.config, &self.reference, self.tolerances, warm)?;
            self.evaluations += 1;
            self.last = Some(e);
        }
        Ok(self.last.as_ref().expect("set above"))
    }

    pub fn gradient_at(&mut self, z: &[f64]) -> Result<GradientResult> {
        self.evaluate(z)?;
        let e = self.last.as_ref().expect("evaluated");
        evaluate_gradient(e, &self.config, &self.reference)
    }
}

impl DescentProblem for Pipeline {
    fn value(&mut self, z: &[f64]) -> Result<f64> {
        Ok(self.evaluate(z)?.objective)
    }

    fn gradient(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.gradient_at(z)?.gradient)
    }
}

pub struct OptimizationResult {
    pub history: DescentHistory,
    pub start: DesignVector,
    pub final_eval: Evaluation,
    pub evaluations: usize,
}

pub fn step_rule(cfg: &RunConfig) -> StepRule {
    let o = &cfg.optimizer;
    match o.rule {
        StepKind::Fixed => StepRule::Fixed { step: o.step },
        StepKind::Armijo => StepRule::Armijo {
            t0: o.armijo_t0,
            theta: o.armijo_theta,
            sigma: o.armijo_sigma,
            max_backtracks: o.armijo_max_backtracks,
        },
    }
}

/// Steepest descent on the adjoint gradient from `start`.
pub fn optimize(cfg: &RunConfig, reference: &ReferencePressure, start: &DesignVector) -> Result<OptimizationResult> {
    let mut p = Pipeline::new(cfg.clone(), reference.clone());
    let stop = StopCriteria { max_iters: cfg.optimizer.max_iters, grad_tol: cfg.optimizer.grad_tol, exact_grad_tol: None };
    let history = run_descent(&mut p, &start.to_flat(), &DirectionPolicy::Steepest, &step_rule(cfg), &stop)?;
    let zf = &history.last().z;
    let final_eval = p.evaluate(zf)?.clone();
    Ok(OptimizationResult { history, start: start.clone(), final_eval, evaluations: p.evaluations })
}

/// One component of a finite-difference check.
#[derive(Clone, Debug, PartialEq)]
pub struct FdComponent {
    pub index: usize,
    /// Adjoint gradient at the check tolerances.
    pub adjoint: f64,
    /// Adjoint gradient at the nominal run tolerances.
    pub adjoint_nominal: f64,
    pub fd: f64,
    pub step: f64,
    /// Estimates at every configured step.
    pub estimates: Vec<f64>,
}

impl FdComponent {
    pub fn abs_error(&self) -> f64 {
        (self.adjoint - self.fd).abs()
    }

    /// Relative error, or `None` when both values sit below `floor`.
    pub fn rel_error(&self, floor: f64) -> Option<f64> {
        let scale = self.adjoint.abs().max(self.fd.abs());
        (scale > floor).then(|| self.abs_error() / scale)
    }

    pub fn nominal_rel_error(&self, floor: f64) -> Option<f64> {
        let scale = self.adjoint_nominal.abs().max(self.fd.abs());
        (scale > floor).then(|| (self.adjoint_nominal - self.fd).abs() / scale)
    }
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub design: DesignVector,
    pub objective: f64,
    pub components: Vec<FdComponent>,
}

impl GradCheck {
    pub fn max_rel_error(&self, floor: f64) -> f64 {
        self.components.iter().filter_map(|c| c.rel_error(floor)).fold(0.0, f64::max)
    }

    pub fn max_nominal_rel_error(&self, floor: f64) -> f64 {
        self.components.iter().filter_map(|c| c.nominal_rel_error(floor)).fold(0.0, f64::max)
    }

    pub fn passes(&self, rel_tol: f64, floor: f64) -> bool {
        self.components.iter().all(|c| match c.rel_error(floor) {
            Some(r) => r <= rel_tol,
            None => c.abs_error() <= floor,
        })
    }
}

/// Adjoint gradient against central differences of the reduced objective,
/// both on states converged to the check tolerances. The adjoint at the
/// nominal tolerances is reported alongside. With several steps each
/// component takes the smaller step of the consecutive pair that agrees best.
pub fn gradient_check(cfg: &RunConfig, reference: &ReferencePressure, design: &DesignVector) -> Result<GradCheck> {
    let nominal = evaluate_design(design, cfg, reference, Tolerances::nominal(cfg), None)?;
    let grad_nominal = evaluate_gradient(&nominal, cfg, reference)?;
    let tight = Tolerances::check(cfg);
    let center = evaluate_design(design, cfg, reference, tight, Some(&nominal))?;
    let grad = evaluate_gradient(&center, cfg, reference)?;
    let z = design.to_flat();
    let steps = &cfg.check.steps;
    let mut components = Vec::with_capacity(z.len());
    for k in 0..z.len() {
        let mut estimates = Vec::with_capacity(steps.len());
        for &h in steps {
            let eval_at = |d: f64| -> Result<f64> {
                let mut zz = z.clone();
                zz[k] += d;
                let dv = DesignVector::from_flat(&zz)?;
                Ok(evaluate_design(&dv, cfg, reference, tight, Some(&center))?.objective)
            };
            let fp = eval_at(h)?;
            let fm = eval_at(-h)?;
            estimates.push((fp - fm) / (2.0 * h));
        }
        let (fd, step) = if estimates.len() == 1 {
            (estimates[0], steps[0])
        } else {
            let best = (0..estimates.len() - 1)
                .min_by(|&a, &b| {
                    let da = (estimates[a] - estimates[a + 1]).abs();
                    let db = (estimates[b] - estimates[b + 1]).abs();
                    da.total_cmp(&db)
                })
                .expect("at least two steps");
            (estimates[best + 1], steps[best + 1])
        };
        components.push(FdComponent {
            index: k,
            adjoint: grad.gradient[k],
            adjoint_nominal: grad_nominal.gradient[k],
            fd, step, estimates });
    }
    Ok(GradCheck { design: design.clone(), objective: center.objective, components })
}

/// Mesh, fields, surface `Cp` and geometry files of one evaluation.
pub fn write_evaluation(dir: &Path, e: &Evaluation, cfg: &RunConfig, reference: &ReferencePressure) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    e.grid.write_mesh_csv(&dir.join("mesh.csv"))?;
    write_fields_csv(&dir.join("fields.csv"), &e.state, &e.grid, &cfg.freestream)?;
    write_surface_cp(&dir.join("surface_cp.csv"), e, reference)?;
    e.design.save(&dir.join("design.txt"))?;
    Ok(())
}

/// Columns `i,x,y,cp,cp_ref` over the exported body stations (1-based,
/// trailing edge repeated); `cp_ref` is empty off the matched stations.
pub fn write_surface_cp(path: &Path, e: &Evaluation, reference: &ReferencePressure) -> Result<()> {
    let n = e.grid.ni();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "i,x,y,cp,cp_ref")?;
    for i in 0..=n {
        let k = i % n;
        let (x, y) = e.boundary.points[i];
        let r = reference
            .stations
            .iter()
            .position(|&s| s == k && (i < n || k != 0 || s == 0))
            .map(|p| format!("{:.16e}", reference.cp[p]))
            .unwrap_or_default();
        writeln!(w, "{},{:.16e},{:.16e},{:.16e},{}", i + 1, x, y, e.cp[k], r)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `i,x,y_start,y_final,y_reference` on the common chordwise stations.
pub fn write_geometry(path: &Path, cfg: &RunConfig, start: &DesignVector, fin: &DesignVector) -> Result<()> {
    let a = sample_boundary(start, &cfg.cst, cfg.grid.i_max)?;
    let b = sample_boundary(fin, &cfg.cst, cfg.grid.i_max)?;
    let c = sample_boundary(&naca0012_cst(), &cfg.cst, cfg.grid.i_max)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "i,x,y_start,y_final,y_reference")?;
    for i in 0..a.points.len() {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            i + 1,
            a.points[i].0,
            a.points[i].1,
            b.points[i].1,
            c.points[i].1
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn station_lists() {
        let s = upper_stations(48);
        assert_eq!(s.len(), 25);
        assert_eq!(s[0], 0);
        assert_eq!(s[1], 47);
        assert_eq!(*s.last().unwrap(), 24);
        assert_eq!(mirror_station(47, 48), 1);
        assert_eq!(mirror_station(0, 48), 0);
        assert_eq!(mirror_station(24, 48), 24);
    }

    #[test]
    fn reference_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ref.csv");
        let r = ReferencePressure { stations: vec![0, 47, 46], cp: vec![0.1, -0.2, 1.0 / 3.0] };
        r.save_csv(&p).unwrap();
        assert_eq!(ReferencePressure::load_csv(&p).unwrap(), r);
    }

    #[test]
    fn perturbation_is_seeded() {
        let a = perturbed_design(&naca0012_cst(), 5e-3, 1);
        let b = perturbed_design(&naca0012_cst(), 5e-3, 1);
        assert_eq!(a, b);
        for (x, y) in a.to_flat().iter().zip(naca0012_cst().to_flat()) {
            assert!(((x - y).abs() - 5e-3).abs() < 1e-15);
        }
    }

    #[test]
    fn crossing_design_is_rejected_before_solving() {
        let cfg = RunConfig::default();
        let r = ReferencePressure { stations: upper_stations(48), cp: vec![0.0; 25] };
        let mut z = naca0012_cst().to_flat();
        for v in &mut z[..6] {
            *v = -0.5;
        }
        let d = DesignVector::from_flat(&z).unwrap();
        let e = evaluate_design(&d, &cfg, &r, Tolerances::nominal(&cfg), None).unwrap_err();
        assert!(matches!(e, Error::Evaluation(_)));
    }
}
