//! Inexact general directions method: `z_{k+1} = z_k + t_k s_k`, with
//! directions built from an inexact gradient `ḡ` whose error satisfies
//! `‖ḡ − ∇F̃‖ ≤ ζ ‖ḡ‖`, and bounded, diminishing, Armijo or fixed steps.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction quality constants: `c₁′‖ḡ‖² ≤ −ḡᵀs` and `‖s‖ ≤ c₂′‖ḡ‖`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionSpec {
    pub c1p: f64,
    pub c2p: f64,
    pub zeta: f64,
}

impl DirectionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1p > 0.0 && self.c2p >= self.c1p) {
            return Err(Error::Domain(format!(
                "direction constants need 0 < c1' <= c2', got {} and {}",
                self.c1p, self.c2p
            )));
        }
        if !(self.zeta >= 0.0 && self.zeta < self.c1p / self.c2p) {
            return Err(Error::Domain(format!(
                "zeta = {} outside [0, c1'/c2') = [0, {})",
                self.zeta,
                self.c1p / self.c2p
            )));
        }
        Ok(())
    }
}

/// Constants of the exact-gradient direction conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvertedConstants {
    pub c1: f64,
    pub c2: f64,
    /// `C = c₁ / c₂²`.
    pub big_c: f64,
}

/// `c₁ = (c₁′ − ζc₂′)/(1+ζ)²`, `c₂ = c₂′/(1−ζ)`.
pub fn convert_constants(spec: &DirectionSpec) -> Result<ConvertedConstants> {
    spec.validate()?;
    let z = spec.zeta;
    let c1 = (spec.c1p - z * spec.c2p) / ((1.0 + z) * (1.0 + z));
    let c2 = spec.c2p / (1.0 - z);
    Ok(ConvertedConstants { c1, c2, big_c: c1 / (c2 * c2) })
}

/// Interval `[(1−ζ)‖ḡ‖, (1+ζ)‖ḡ‖]` containing `‖∇F̃‖`.
pub fn gradient_comparison_bounds(zeta: f64, gbar_norm: f64) -> (f64, f64) {
    ((1.0 - zeta) * gbar_norm, (1.0 + zeta) * gbar_norm)
}

#[derive(Clone, Debug, PartialEq)]
pub enum DirectionPolicy {
    /// `s = −ḡ` (`c₁′ = c₂′ = 1`).
    Steepest,
    /// `s = −D ḡ` with positive diagonal `D` (`c₁′ = min D`, `c₂′ = max D`).
    DiagonalScaled(Vec<f64>),
}

impl DirectionPolicy {
    pub fn constants(&self) -> (f64, f64) {
        match self {
            DirectionPolicy::Steepest => (1.0, 1.0),
            DirectionPolicy::DiagonalScaled(d) => (
                d.iter().copied().fold(f64::INFINITY, f64::min),
                d.iter().copied().fold(0.0, f64::max),
            ),
        }
    }

    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        match self {
            DirectionPolicy::Steepest => g.iter().map(|v| -v).collect(),
            DirectionPolicy::DiagonalScaled(d) => g.iter().zip(d).map(|(v, s)| -v * s).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepRule {
    /// Constant `t ∈ [t̄, (2c₁ − γ)/(c₂² L)]`.
    Bounded { t: f64, t_bar: f64, gamma: f64, lipschitz: f64 },
    /// `t_k = t₀ / (k + 1)`.
    Diminishing { t0: f64 },
    Armijo { t0: f64, theta: f64, sigma: f64, max_backtracks: usize },
    /// `z_{k+1} = z_k − α ḡ` regardless of constants.
    Fixed { step: f64 },
}

impl StepRule {
    /// Admissibility against the converted direction constants.
    pub fn validate(&self, cc: &ConvertedConstants) -> Result<()> {
        match *self {
            StepRule::Bounded { t, t_bar, gamma, lipschitz } => {
                if !(gamma > 0.0 && gamma < 2.0 * cc.c1 && lipschitz > 0.0) {
                    return Err(Error::Domain(format!(
                        "bounded steps need gamma in (0, 2c1) = (0, {}) and L > 0",
                        2.0 * cc.c1
                    )));
                }
                let hi = (2.0 * cc.c1 - gamma) / (cc.c2 * cc.c2 * lipschitz);
                if !(t_bar > 0.0 && t_bar <= hi && t >= t_bar && t <= hi) {
                    return Err(Error::Domain(format!(
                        "step {t} outside the admissible interval [{t_bar}, {hi}]"
                    )));
                }
            }
            StepRule::Diminishing { t0 } => {
                if !(t0 > 0.0) {
                    return Err(Error::Domain("diminishing t0 must be positive".into()));
                }
            }
            StepRule::Armijo { t0, theta, sigma, .. } => {
                if !(t0 > 0.0 && theta > 0.0 && theta < 1.0) {
                    return Err(Error::Domain("armijo needs t0 > 0 and theta in (0, 1)".into()));
                }
                if !(sigma > 0.0 && sigma < cc.big_c) {
                    return Err(Error::Domain(format!("armijo sigma {sigma} outside (0, C) = (0, {})", cc.big_c)));
                }
            }
            StepRule::Fixed { step } => {
                if !(step > 0.0) {
                    return Err(Error::Domain("fixed step must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepRule::Bounded { .. } => "bounded",
            StepRule::Diminishing { .. } => "diminishing",
            StepRule::Armijo { .. } => "armijo",
            StepRule::Fixed { .. } => "fixed",
        }
    }
}

/// Reduced objective with an inexact-gradient oracle.
pub trait DescentProblem {
    fn value(&mut self, z: &[f64]) -> Result<f64>;
    fn gradient(&mut self, z: &[f64]) -> Result<Vec<f64>>;
    /// Exact gradient, when known (synthetic problems); used for auditing.
    fn exact_gradient(&mut self, _z: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(z: &[f64], t: f64, s: &[f64]) -> Vec<f64> {
    z.iter().zip(s).map(|(a, b)| a + t * b).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmijoOutcome {
    pub t: f64,
    pub value: f64,
    pub backtracks: usize,
    /// Trial points whose evaluation failed (counted as rejections).
    pub failures: usize,
}

/// Largest `t ∈ {t₀ θⁱ}` with `F̃(z + t s) ≤ F̃(z) − t σ ‖s‖²`. Evaluation
/// failures at trial points count as rejections.
pub fn armijo_backtrack(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    z: &[f64],
    fz: f64,
    s: &[f64],
    t0: f64,
    theta: f64,
    sigma: f64,
    max_backtracks: usize,
) -> Result<ArmijoOutcome> {
    let s2 = dot(s, s);
    let mut t = t0;
    let mut failures = 0;
    for i in 0..=max_backtracks {
        match f(&axpy(z, t, s)) {
            Ok(v) if v <= fz - t * sigma * s2 => {
                return Ok(ArmijoOutcome { t, value: v, backtracks: i, failures });
            }
            Ok(_) => {}
            Err(_) => failures += 1,
        }
        t *= theta;
    }
    Err(Error::NonConvergence {
        solver: "Armijo backtracking",
        iterations: max_backtracks,
        residual: t,
        history: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StopCriteria {
    pub max_iters: usize,
    /// Stop once the inexact gradient norm is at most this.
    pub grad_tol: f64,
    /// Stop once the exact gradient norm (if known) is at most this.
    pub exact_grad_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    pub z: Vec<f64>,
    pub value: f64,
    pub gbar_norm: f64,
    pub exact_norm: Option<f64>,
    /// Step taken from this iterate (zero on the last record).
    pub t: f64,
    pub backtracks: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    EvaluationFailed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentHistory {
    pub rule: &'static str,
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
}

impl DescentHistory {
    pub fn last(&self) -> &IterRecord {
        self.records.last().expect("history always holds the start point")
    }

    /// Columns `k,objective,grad_norm,exact_grad_norm,step,backtracks,failures`
    /// (empty exact column when unknown).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "k,objective,grad_norm,exact_grad_norm,step,backtracks,failures")?;
        for r in &self.records {
            let ex = r.exact_norm.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{:.16e},{:.16e},{},{:.16e},{},{}",
                r.k, r.value, r.gbar_norm, ex, r.t, r.backtracks, r.failures
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the method from `z0`. Evaluation failures at accepted iterates end
/// the run with `StopReason::EvaluationFailed`; a direction that is not a
/// descent direction for `ḡ` is an error.
pub fn run_descent(
    problem: &mut dyn DescentProblem,
    z0: &[f64],
    policy: &DirectionPolicy,
    rule: &StepRule,
    stop: &StopCriteria,
) -> Result<DescentHistory> {
    let mut z = z0.to_vec();
    let mut fz = problem.value(&z)?;
    let mut records = Vec::new();
    for k in 0.. {
        let g = match problem.gradient(&z) {
            Ok(g) => g,
            Err(e) if k > 0 => {
                return Ok(DescentHistory { rule: rule.name(), records, stop: StopReason::EvaluationFailed(e.to_string()) });
            }
            Err(e) => return Err(e),
        };
        let gn = norm(&g);
        let exact_norm = problem.exact_gradient(&z).map(|e| norm(&e));
        records.push(IterRecord {
            k,
            z: z.clone(),
            value: fz,
            gbar_norm: gn,
            exact_norm,
            t: 0.0,
            backtracks: 0,
            failures: 0,
        });
        let done = gn <= stop.grad_tol
            || matches!((stop.exact_grad_tol, exact_norm), (Some(tol), Some(e)) if e <= tol);
        if done {
            return Ok(DescentHistory { rule: rule.name(), records, stop: StopReason::GradientTolerance });
        }
        if k == stop.max_iters {
            return Ok(DescentHistory { rule: rule.name(), records, stop: StopReason::MaxIterations });
        }
        let s = policy.direction(&g);
        if dot(&g, &s) >= 0.0 {
            return Err(Error::Evaluation(format!(
                "iteration {k}: direction is not a descent direction (gᵀs = {:.3e})",
                dot(&g, &s)
            )));
        }
        let (t, value, backtracks, failures) = match *rule {
            StepRule::Bounded { t, .. } => (t, None, 0, 0),
            StepRule::Diminishing { t0 } => (t0 / (k + 1) as f64, None, 0, 0),
            StepRule::Fixed { step } => (step, None, 0, 0),
            StepRule::Armijo { t0, theta, sigma, max_backtracks } => {
                let mut f = |x: &[f64]| problem.value(x);
                match armijo_backtrack(&mut f, &z, fz, &s, t0, theta, sigma, max_backtracks) {
                    Ok(o) => (o.t, Some(o.value), o.backtracks, o.failures),
                    Err(e) => {
                        return Ok(DescentHistory {
                            rule: rule.name(),
                            records,
                            stop: StopReason::EvaluationFailed(e.to_string()),
                        })
                    }
                }
            }
        };
        let rec = records.last_mut().expect("pushed above");
        rec.t = t;
        rec.backtracks = backtracks;
        rec.failures = failures;
        let znew = axpy(&z, t, &s);
        let fnew = match value {
            Some(v) => v,
            None => match problem.value(&znew) {
                Ok(v) => v,
                Err(e) => {
                    return Ok(DescentHistory {
                        rule: rule.name(),
                        records,
                        stop: StopReason::EvaluationFailed(e.to_string()),
                    })
                }
            },
        };
        z = znew;
        fz = fnew;
    }
    unreachable!("the loop returns on max_iters")
}

/// `F̃(z) = ½ (z − z*)ᵀ Q (z − z*)` with eigenvalues of `Q` in `[μ, L]`.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    pub q: DMatrix<f64>,
    pub zstar: DVector<f64>,
    pub mu: f64,
    pub l: f64,
}

impl QuadraticProblem {
    pub fn synthetic(m: usize, mu: f64, l: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let u = g.qr().q();
        let eig = DVector::from_fn(m, |i, _| {
            if m == 1 {
                mu
            } else {
                mu * (l / mu).powf(i as f64 / (m - 1) as f64)
            }
        });
        let q = &u * DMatrix::from_diagonal(&eig) * u.transpose();
        let q = (&q + q.transpose()) * 0.5;
        let zstar = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        QuadraticProblem { q, zstar, mu, l }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let d = DVector::from_column_slice(z) - &self.zstar;
        0.5 * d.dot(&(&self.q * &d))
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let d = DVector::from_column_slice(z) - &self.zstar;
        (&self.q * d).as_slice().to_vec()
    }
}

/// Worst-case inexact gradient within the relative-error model: the exact
/// gradient rotated by the largest admissible angle `asin ζ`, so that
/// `e ⊥ ∇F̃` and `‖e‖ = ζ ‖ḡ‖`.
#[derive(Clone, Debug)]
pub struct AdversarialInjector {
    pub zeta: f64,
    rng: ChaCha8Rng,
}

impl AdversarialInjector {
    pub fn new(zeta: f64, seed: u64) -> Self {
        AdversarialInjector { zeta, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn inject(&mut self, g: &[f64]) -> Vec<f64> {
        let gn = norm(g);
        if gn == 0.0 || self.zeta == 0.0 || g.len() < 2 {
            return g.to_vec();
        }
        let v = loop {
            let r: Vec<f64> = (0..g.len()).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
            let p = dot(&r, g) / (gn * gn);
            let perp: Vec<f64> = r.iter().zip(g).map(|(a, b)| a - p * b).collect();
            let pn = norm(&perp);
            if pn > 1e-8 {
                break perp.into_iter().map(|x| x / pn).collect::<Vec<_>>();
            }
        };
        // shrink by a hair so roundoff cannot push ‖e‖ past ζ‖ḡ‖
        let z = self.zeta * (1.0 - 1e-12);
        let amp = gn * z / (1.0 - z * z).sqrt();
        g.iter().zip(&v).map(|(a, b)| a + amp * b).collect()
    }
}

/// Quadratic with adversarially perturbed gradients.
pub struct InjectedQuadratic {
    pub problem: QuadraticProblem,
    pub injector: AdversarialInjector,
    /// `(‖e‖, ‖ḡ‖, ‖∇F̃‖, ∇F̃ᵀḡ)` for every gradient request.
    pub log: Vec<(f64, f64, f64, f64)>,
}

impl DescentProblem for InjectedQuadratic {
    fn value(&mut self, z: &[f64]) -> Result<f64> {
        Ok(self.problem.value(z))
    }

    fn gradient(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let g = self.problem.gradient(z);
        let gb = self.injector.inject(&g);
        let e: Vec<f64> = gb.iter().zip(&g).map(|(a, b)| a - b).collect();
        self.log.push((norm(&e), norm(&gb), norm(&g), dot(&g, &gb)));
        Ok(gb)
    }

    fn exact_gradient(&mut self, z: &[f64]) -> Option<Vec<f64>> {
        Some(self.problem.gradient(z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    pub m: usize,
    pub mu: f64,
    pub l: f64,
    pub zeta: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// `γ` as a fraction of `2c₁`.
    pub gamma_frac: f64,
    /// Bounded step as a fraction of the admissible upper end.
    pub bounded_step_frac: f64,
    pub diminishing_t0: f64,
    pub armijo_t0: f64,
    pub armijo_theta: f64,
    /// `σ` as a fraction of `C`.
    pub armijo_sigma_frac: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            m: 12,
            mu: 1.0,
            l: 4.0,
            zeta: 0.3,
            seed: 7,
            max_iters: 20000,
            tol: 1e-6,
            gamma_frac: 0.5,
            bounded_step_frac: 1.0,
            diminishing_t0: 3.0,
            armijo_t0: 1.0,
            armijo_theta: 0.5,
            armijo_sigma_frac: 0.5,
        }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<()> {
        let e = |m: &str| Err(Error::Config(m.to_string()));
        if self.m == 0 || !(self.mu > 0.0 && self.l >= self.mu) {
            return e("descent needs m > 0 and 0 < mu <= l");
        }
        if !(self.zeta >= 0.0 && self.zeta < 1.0) {
            return e("descent.zeta must lie in [0, c1'/c2') = [0, 1) for steepest descent");
        }
        if !(self.gamma_frac > 0.0 && self.gamma_frac < 1.0) {
            return e("descent.gamma_frac must lie in (0, 1)");
        }
        if !(self.bounded_step_frac > 0.0 && self.bounded_step_frac <= 1.0) {
            return e("descent.bounded_step_frac must lie in (0, 1]: larger steps leave the admissible interval");
        }
        if !(self.armijo_sigma_frac > 0.0 && self.armijo_sigma_frac < 1.0) {
            return e("descent.armijo_sigma_frac must lie in (0, 1)");
        }
        if !(self.diminishing_t0 > 0.0 && self.armijo_t0 > 0.0 && self.armijo_theta > 0.0 && self.armijo_theta < 1.0) {
            return e("descent step parameters must be positive with armijo_theta < 1");
        }
        Ok(())
    }

    /// The three convergent rules for steepest descent at this `ζ`.
    pub fn rules(&self) -> Result<(ConvertedConstants, [StepRule; 3])> {
        self.validate()?;
        let cc = convert_constants(&DirectionSpec { c1p: 1.0, c2p: 1.0, zeta: self.zeta })?;
        let gamma = self.gamma_frac * 2.0 * cc.c1;
        let hi = (2.0 * cc.c1 - gamma) / (cc.c2 * cc.c2 * self.l);
        let t = self.bounded_step_frac * hi;
        let rules = [
            StepRule::Bounded { t, t_bar: t, gamma, lipschitz: self.l },
            StepRule::Diminishing { t0: self.diminishing_t0 },
            StepRule::Armijo {
                t0: self.armijo_t0,
                theta: self.armijo_theta,
                sigma: self.armijo_sigma_frac * cc.big_c,
                max_backtracks: 60,
            },
        ];
        for r in &rules {
            r.validate(&cc)?;
        }
        Ok((cc, rules))
    }
}

#[derive(Clone, Debug)]
pub struct DemoRun {
    pub history: DescentHistory,
    pub log: Vec<(f64, f64, f64, f64)>,
}

/// Runs the three rules on the injected quadratic.
pub fn run_demo(cfg: &DemoConfig) -> Result<(QuadraticProblem, ConvertedConstants, Vec<DemoRun>)> {
    let (cc, rules) = cfg.rules()?;
    let problem = QuadraticProblem::synthetic(cfg.m, cfg.mu, cfg.l, cfg.seed);
    let z0 = vec![0.0; cfg.m];
    let stop = StopCriteria { max_iters: cfg.max_iters, grad_tol: 0.0, exact_grad_tol: Some(cfg.tol) };
    let mut runs = Vec::new();
    for (k, rule) in rules.iter().enumerate() {
        let mut p = InjectedQuadratic {
            problem: problem.clone(),
            injector: AdversarialInjector::new(cfg.zeta, cfg.seed.wrapping_add(100 + k as u64)),
            log: Vec::new(),
        };
        let history = run_descent(&mut p, &z0, &DirectionPolicy::Steepest, rule, &stop)?;
        runs.push(DemoRun { history, log: p.log });
    }
    Ok((problem, cc, runs))
}
