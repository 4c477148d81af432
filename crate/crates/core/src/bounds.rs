//! Error propagation from inexact state and adjoint solves into the reduced
//! gradient, for residuals affine in the state: `R(z, y) = A(z) y − b(z)`.
//!
//! The built-in family has `A(z) = I + ε Σ z_k S_k` and `b(z) = b₀ + B z`
//! with a quadratic objective, so every regularity constant is available in
//! closed form and the audits compare measured errors against exact bounds.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spectral norm via SVD.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Affine residual family with derivative information.
pub trait AffineResidual {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn a(&self, z: &DVector<f64>) -> DMatrix<f64>;
    fn b(&self, z: &DVector<f64>) -> DVector<f64>;
    /// `∂A/∂z_k` at `z`.
    fn da(&self, z: &DVector<f64>, k: usize) -> DMatrix<f64>;
    /// `∂b/∂z` at `z` (`n × m`).
    fn db(&self, z: &DVector<f64>) -> DMatrix<f64>;
    /// `C_A ≥ ‖∂A/∂z_k‖₂` for all `z`, `k`.
    fn c_a(&self) -> f64;
    /// `C_b ≥ ‖∂b/∂z‖₂` for all `z`.
    fn c_b(&self) -> f64;
}

/// `A(z) = I + ε Σ z_k S_k`, `b(z) = b₀ + B z` with symmetric `S_k`
/// normalized to `‖S_k‖₂ = 1`. On the box `|z_k| ≤ radius`,
/// `‖A − I‖₂ ≤ ε m radius`, which `synthetic` keeps at one half.
#[derive(Clone, Debug)]
pub struct SyntheticFamily {
    pub eps: f64,
    pub radius: f64,
    pub s: Vec<DMatrix<f64>>,
    pub b0: DVector<f64>,
    pub bmat: DMatrix<f64>,
}

impl SyntheticFamily {
    pub fn synthetic(n: usize, m: usize, radius: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..m)
            .map(|_| {
                let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                let sym = &g + g.transpose();
                let nrm = spectral_norm(&sym);
                sym / nrm
            })
            .collect();
        let b0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let bmat = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        SyntheticFamily {
            eps: 0.5 / (m as f64 * radius),
            radius,
            s,
            b0,
            bmat,
        }
    }

    /// Uniform sample from the design box.
    pub fn sample_z(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(self.s.len(), |_, _| rng.gen_range(-self.radius..=self.radius))
    }
}

impl AffineResidual for SyntheticFamily {
    fn n(&self) -> usize {
        self.b0.len()
    }

    fn m(&self) -> usize {
        self.s.len()
    }

    fn a(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::identity(n, n);
        for (k, sk) in self.s.iter().enumerate() {
            a += sk * (self.eps * z[k]);
        }
        a
    }

    fn b(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.b0 + &self.bmat * z
    }

    fn da(&self, _z: &DVector<f64>, k: usize) -> DMatrix<f64> {
        &self.s[k] * self.eps
    }

    fn db(&self, _z: &DVector<f64>) -> DMatrix<f64> {
        self.bmat.clone()
    }

    fn c_a(&self) -> f64 {
        self.s.iter().map(|s| self.eps * spectral_norm(s)).fold(0.0, f64::max)
    }

    fn c_b(&self) -> f64 {
        spectral_norm(&self.bmat)
    }
}

/// `F(w) = ½ wᵀ H w + gᵀ w` with `w = (z, y)`.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    pub m: usize,
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl QuadraticObjective {
    pub fn synthetic(m: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let d = m + n;
        let r = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let h = (&r + r.transpose()) * 0.5;
        let g = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        QuadraticObjective { m, h, g }
    }

    fn stack(&self, z: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut w = DVector::zeros(z.len() + y.len());
        w.rows_mut(0, z.len()).copy_from(z);
        w.rows_mut(z.len(), y.len()).copy_from(y);
        w
    }

    pub fn value(&self, z: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let w = self.stack(z, y);
        0.5 * w.dot(&(&self.h * &w)) + self.g.dot(&w)
    }

    fn grad(&self, z: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let w = self.stack(z, y);
        &self.h * w + &self.g
    }

    pub fn grad_z(&self, z: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.grad(z, y).rows(0, self.m).into_owned()
    }

    pub fn grad_y(&self, z: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = y.len();
        self.grad(z, y).rows(self.m, n).into_owned()
    }

    /// `L_F = ‖H‖₂`.
    pub fn l_f(&self) -> f64 {
        spectral_norm(&self.h)
    }

    /// Lipschitz constant of `∇_y F` in `y` alone: `‖H_yy‖₂ ≤ L_F`.
    pub fn l_yy(&self) -> f64 {
        let n = self.h.nrows() - self.m;
        spectral_norm(&self.h.view((self.m, self.m), (n, n)).into_owned())
    }
}

fn unit_direction(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let nv = v.norm();
        if nv > 1e-3 {
            return v / nv;
        }
    }
}

fn solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::Singular { row: 0 })
}

/// `y* = A(z)⁻¹ b(z)`.
pub fn exact_state(f: &dyn AffineResidual, z: &DVector<f64>) -> Result<DVector<f64>> {
    solve(&f.a(z), &f.b(z))
}

/// `y = y* + A⁻¹ r` with `‖r‖₂ = τ_R` along a seeded unit direction.
pub fn perturbed_state(f: &dyn AffineResidual, z: &DVector<f64>, tau_r: f64, seed: u64) -> Result<DVector<f64>> {
    if !(tau_r >= 0.0) {
        return Err(Error::Domain(format!("tau_R = {tau_r} must be >= 0")));
    }
    let a = f.a(z);
    let r = unit_direction(f.n(), seed) * tau_r;
    Ok(solve(&a, &f.b(z))? + solve(&a, &r)?)
}

/// Adjoint for state `y`: `Aᵀ ψ* = ∇_y F(z, y)`.
pub fn exact_adjoint(
    f: &dyn AffineResidual,
    obj: &QuadraticObjective,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    solve(&f.a(z).transpose(), &obj.grad_y(z, y))
}

/// `ψ = ψ*_{z,y} + A⁻ᵀ r_ψ` with `‖r_ψ‖₂ = τ_ψ`.
pub fn perturbed_adjoint(
    f: &dyn AffineResidual,
    obj: &QuadraticObjective,
    z: &DVector<f64>,
    y: &DVector<f64>,
    tau_psi: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    if !(tau_psi >= 0.0) {
        return Err(Error::Domain(format!("tau_psi = {tau_psi} must be >= 0")));
    }
    let at = f.a(z).transpose();
    let r = unit_direction(f.n(), seed) * tau_psi;
    Ok(exact_adjoint(f, obj, z, y)? + solve(&at, &r)?)
}

/// `∂R/∂z = [∂A/∂z_k y]_k − ∂b/∂z`.
pub fn residual_dz(f: &dyn AffineResidual, z: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let mut d = -f.db(z);
    for k in 0..f.m() {
        let col = f.da(z, k) * y;
        let mut c = d.column_mut(k);
        c += col;
    }
    d
}

/// `∇_z F(z, y) − (∂R/∂z)ᵀ ψ`.
pub fn adjoint_gradient(
    f: &dyn AffineResidual,
    obj: &QuadraticObjective,
    z: &DVector<f64>,
    y: &DVector<f64>,
    psi: &DVector<f64>,
) -> DVector<f64> {
    obj.grad_z(z, y) - residual_dz(f, z, y).transpose() * psi
}

pub fn exact_gradient(f: &dyn AffineResidual, obj: &QuadraticObjective, z: &DVector<f64>) -> Result<DVector<f64>> {
    let y = exact_state(f, z)?;
    let psi = exact_adjoint(f, obj, z, &y)?;
    Ok(adjoint_gradient(f, obj, z, &y, &psi))
}

/// `C_R(z) = ‖A(z)⁻¹‖₂ = 1 / σ_min(A(z))`.
pub fn c_r(f: &dyn AffineResidual, z: &DVector<f64>) -> Result<f64> {
    let s = f.a(z).singular_values();
    let smin = s.min();
    if !(smin > 0.0) {
        return Err(Error::Singular { row: 0 });
    }
    Ok(1.0 / smin)
}

pub fn state_error_bound(f: &dyn AffineResidual, z: &DVector<f64>, tau_r: f64) -> Result<f64> {
    Ok(c_r(f, z)? * tau_r)
}

/// `C_R² L_F τ_R + C_R τ_ψ`.
pub fn adjoint_error_bound(
    f: &dyn AffineResidual,
    z: &DVector<f64>,
    l_f: f64,
    tau_r: f64,
    tau_psi: f64,
) -> Result<f64> {
    let c = c_r(f, z)?;
    Ok(c * c * l_f * tau_r + c * tau_psi)
}

/// Pointwise constants at one design.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointConstants {
    pub c_r: f64,
    /// `‖y*‖ + C_R τ_R ≥ sup ‖y‖` over the admissible states.
    pub c_y: f64,
    /// `‖∇_y F(z, y*)‖ + ‖H_yy‖ C_R τ_R ≥ sup ‖∇_y F‖` over the admissible states.
    pub m_f: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub l_f: f64,
    pub d_r: f64,
    pub d_psi: f64,
}

fn d_constants(m: usize, c_r: f64, c_y: f64, m_f: f64, c_a: f64, c_b: f64, l_f: f64) -> (f64, f64) {
    let sm = (m as f64).sqrt();
    let k = sm * c_a * c_y + c_b;
    let d_r = l_f * c_r + l_f * k * c_r * c_r + sm * c_a * m_f * c_r * c_r;
    (d_r, k * c_r)
}

/// Constants at `z` for admissible states with residual at most `tau_r_max`.
pub fn point_constants(
    f: &dyn AffineResidual,
    obj: &QuadraticObjective,
    z: &DVector<f64>,
    tau_r_max: f64,
) -> Result<PointConstants> {
    let c_r = c_r(f, z)?;
    let y = exact_state(f, z)?;
    let c_y = y.norm() + c_r * tau_r_max;
    let m_f = obj.grad_y(z, &y).norm() + obj.l_yy() * c_r * tau_r_max;
    let (c_a, c_b, l_f) = (f.c_a(), f.c_b(), obj.l_f());
    let (d_r, d_psi) = d_constants(f.m(), c_r, c_y, m_f, c_a, c_b, l_f);
    Ok(PointConstants { c_r, c_y, m_f, c_a, c_b, l_f, d_r, d_psi })
}

/// `(D_R, D_ψ, D_R τ_R + D_ψ τ_ψ)`.
pub fn gradient_error_bound(
    f: &dyn AffineResidual,
    obj: &QuadraticObjective,
    z: &DVector<f64>,
    tau_r: f64,
    tau_psi: f64,
) -> Result<(f64, f64, f64)> {
    let p = point_constants(f, obj, z, tau_r)?;
    Ok((p.d_r, p.d_psi, p.d_r * tau_r + p.d_psi * tau_psi))
}

/// Constants uniform over a finite design sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundConstants {
    pub c_r_bar: f64,
    pub c_y_bar: f64,
    pub m_f_bar: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub l_a: f64,
    pub l_b: f64,
    pub l_f: f64,
    pub d_r_bar: f64,
    pub d_psi_bar: f64,
    pub points: Vec<PointConstants>,
}

/// Maxima of the pointwise constants over `zs` (Lipschitz constants of the
/// synthetic family's derivatives are zero: they do not depend on `z`).
pub fn uniform_constants(
    f: &dyn AffineResidual,
    obj: &QuadraticObjective,
    zs: &[DVector<f64>],
    tau_r_max: f64,
) -> Result<BoundConstants> {
    if zs.is_empty() {
        return Err(Error::Domain("uniform constants need a nonempty design sample".into()));
    }
    let points = zs
        .iter()
        .map(|z| point_constants(f, obj, z, tau_r_max))
        .collect::<Result<Vec<_>>>()?;
    let max = |g: fn(&PointConstants) -> f64| points.iter().map(g).fold(0.0, f64::max);
    let (c_r_bar, c_y_bar, m_f_bar) = (max(|p| p.c_r), max(|p| p.c_y), max(|p| p.m_f));
    let (c_a, c_b, l_f) = (f.c_a(), f.c_b(), obj.l_f());
    let (d_r_bar, d_psi_bar) = d_constants(f.m(), c_r_bar, c_y_bar, m_f_bar, c_a, c_b, l_f);
    Ok(BoundConstants {
        c_r_bar,
        c_y_bar,
        m_f_bar,
        c_a,
        c_b,
        l_a: 0.0,
        l_b: 0.0,
        l_f,
        d_r_bar,
        d_psi_bar,
        points,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToleranceSpec {
    pub tau_r: f64,
    pub tau_psi: f64,
    pub zeta: f64,
    pub omega: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Largest admissible `γ₁ = ωζ/D̄_R`, `γ₂ = (1−ω)ζ/D̄_ψ` and `τ = γ ‖ḡ‖`.
pub fn directional_tolerances(zeta: f64, omega: f64, d_r_bar: f64, d_psi_bar: f64, gnorm: f64) -> Result<ToleranceSpec> {
    if !(zeta > 0.0) || !(omega > 0.0 && omega < 1.0) {
        return Err(Error::Domain(format!("need zeta > 0 and omega in (0, 1), got {zeta}, {omega}")));
    }
    if !(d_r_bar > 0.0 && d_psi_bar > 0.0) || !(gnorm >= 0.0) {
        return Err(Error::Domain("bound constants must be positive".into()));
    }
    let gamma1 = omega * zeta / d_r_bar;
    let gamma2 = (1.0 - omega) * zeta / d_psi_bar;
    Ok(ToleranceSpec {
        tau_r: gamma1 * gnorm,
        tau_psi: gamma2 * gnorm,
        zeta,
        omega,
        gamma1,
        gamma2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub samples: usize,
    pub n: usize,
    pub m: usize,
    /// Half-width of the design box.
    pub radius: f64,
    /// Designs in the finite compact sample used for the uniform constants.
    pub design_points: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub zeta: f64,
    pub omega: f64,
    pub seed: u64,
    /// Relative slack for floating-point roundoff in the comparisons.
    pub rel_slack: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            samples: 1000,
            n: 8,
            m: 4,
            radius: 1.0,
            design_points: 25,
            tau_min: 1e-8,
            tau_max: 1e-1,
            zeta: 0.3,
            omega: 0.5,
            seed: 42,
            rel_slack: 1e-10,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.design_points == 0 {
            return Err(Error::Config("bounds.n, bounds.m and bounds.design_points must be positive".into()));
        }
        if !(self.radius > 0.0) || !(0.0 <= self.tau_min && self.tau_min <= self.tau_max) {
            return Err(Error::Config("bounds needs radius > 0 and 0 <= tau_min <= tau_max".into()));
        }
        // steepest descent on the inexact gradient has c₁′ = c₂′ = 1
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::Config(format!("bounds.zeta = {} must lie in (0, c1'/c2') = (0, 1)", self.zeta)));
        }
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return Err(Error::Config("bounds.omega must lie in (0, 1)".into()));
        }
        if !(self.rel_slack >= 0.0) {
            return Err(Error::Config("bounds.rel_slack must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    State,
    Adjoint,
    Gradient,
    Directional,
    ResidualDz,
    ResidualDzLipschitz,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::State => "state",
            Check::Adjoint => "adjoint",
            Check::Gradient => "gradient",
            Check::Directional => "directional",
            Check::ResidualDz => "residual_dz",
            Check::ResidualDzLipschitz => "residual_dz_lipschitz",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditRecord {
    pub sample: usize,
    pub check: Check,
    pub measured: f64,
    pub bound: f64,
}

impl AuditRecord {
    pub fn slack(&self) -> f64 {
        self.bound - self.measured
    }
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub records: Vec<AuditRecord>,
    pub violations: usize,
    pub constants: BoundConstants,
}

impl AuditReport {
    pub fn count(&self, c: Check) -> usize {
        self.records.iter().filter(|r| r.check == c).count()
    }

    pub fn violations_of(&self, c: Check, rel_slack: f64) -> usize {
        self.records
            .iter()
            .filter(|r| r.check == c && violates(r, rel_slack))
            .count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "sample,check,measured,bound,slack")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{:.16e}",
                r.sample,
                r.check.name(),
                r.measured,
                r.bound,
                r.slack()
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn violates(r: &AuditRecord, rel_slack: f64) -> bool {
    r.measured > r.bound * (1.0 + rel_slack) + f64::MIN_POSITIVE
}

/// Inexact gradient at `z` whose residual tolerances are tied to its own
/// norm: starting from `τ = γ ‖∇F̃‖`, tolerances are reset to `γ ‖ḡ‖` until
/// they no longer exceed it.
pub fn directional_gradient(
    f: &dyn AffineResidual,
    obj: &QuadraticObjective,
    z: &DVector<f64>,
    tol: &ToleranceSpec,
    seeds: (u64, u64),
) -> Result<(DVector<f64>, f64, f64)> {
    let g_exact = exact_gradient(f, obj, z)?;
    let mut gn = g_exact.norm();
    for _ in 0..200 {
        let (tr, tp) = (tol.gamma1 * gn, tol.gamma2 * gn);
        let y = perturbed_state(f, z, tr, seeds.0)?;
        let psi = perturbed_adjoint(f, obj, z, &y, tp, seeds.1)?;
        let g = adjoint_gradient(f, obj, z, &y, &psi);
        let gnew = g.norm();
        if tr <= tol.gamma1 * gnew && tp <= tol.gamma2 * gnew {
            return Ok((g, tr, tp));
        }
        gn = gnew;
    }
    Err(Error::NonConvergence {
        solver: "directional tolerance",
        iterations: 200,
        residual: gn,
        history: Vec::new(),
    })
}

/// Runs every bound audit on the synthetic family.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    cfg.validate()?;
    let fam = SyntheticFamily::synthetic(cfg.n, cfg.m, cfg.radius, cfg.seed);
    let obj = QuadraticObjective::synthetic(cfg.m, cfg.n, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let zs: Vec<_> = (0..cfg.design_points).map(|_| fam.sample_z(&mut rng)).collect();
    let uni = uniform_constants(&fam, &obj, &zs, cfg.tau_max)?;
    let l_f = obj.l_f();
    let sm = (cfg.m as f64).sqrt();
    let log_tau = |rng: &mut ChaCha8Rng| {
        if cfg.tau_min == cfg.tau_max || cfg.tau_min == 0.0 {
            cfg.tau_max * rng.gen::<f64>()
        } else {
            (rng.gen_range(cfg.tau_min.ln()..=cfg.tau_max.ln())).exp()
        }
    };
    let mut records = Vec::with_capacity(6 * cfg.samples);
    for s in 0..cfg.samples {
        let zi = rng.gen_range(0..zs.len());
        let z = &zs[zi];
        let pc = &uni.points[zi];
        let tau_r = log_tau(&mut rng);
        let tau_psi = log_tau(&mut rng);
        let (s1, s2, s3) = (rng.gen::<u64>(), rng.gen::<u64>(), rng.gen::<u64>());

        let ystar = exact_state(&fam, z)?;
        let y = perturbed_state(&fam, z, tau_r, s1)?;
        records.push(AuditRecord {
            sample: s,
            check: Check::State,
            measured: (&y - &ystar).norm(),
            bound: state_error_bound(&fam, z, tau_r)?,
        });

        let psi_star = exact_adjoint(&fam, &obj, z, &ystar)?;
        let psi = perturbed_adjoint(&fam, &obj, z, &y, tau_psi, s2)?;
        records.push(AuditRecord {
            sample: s,
            check: Check::Adjoint,
            measured: (&psi - &psi_star).norm(),
            bound: adjoint_error_bound(&fam, z, l_f, tau_r, tau_psi)?,
        });

        let g_exact = adjoint_gradient(&fam, &obj, z, &ystar, &psi_star);
        let g_bar = adjoint_gradient(&fam, &obj, z, &y, &psi);
        let (_, _, gbound) = gradient_error_bound(&fam, &obj, z, tau_r, tau_psi)?;
        records.push(AuditRecord {
            sample: s,
            check: Check::Gradient,
            measured: (&g_bar - &g_exact).norm(),
            bound: gbound,
        });

        let dz = residual_dz(&fam, z, &y);
        records.push(AuditRecord {
            sample: s,
            check: Check::ResidualDz,
            measured: spectral_norm(&dz),
            bound: sm * pc.c_a * pc.c_y + pc.c_b,
        });
        let y2 = perturbed_state(&fam, z, tau_r, s3)?;
        records.push(AuditRecord {
            sample: s,
            check: Check::ResidualDzLipschitz,
            measured: spectral_norm(&(&dz - residual_dz(&fam, z, &y2))),
            bound: sm * pc.c_a * (&y - &y2).norm(),
        });

        let tol = directional_tolerances(cfg.zeta, cfg.omega, uni.d_r_bar, uni.d_psi_bar, 1.0)?;
        let (g_dir, _, _) = directional_gradient(&fam, &obj, z, &tol, (s1, s2))?;
        records.push(AuditRecord {
            sample: s,
            check: Check::Directional,
            measured: (&g_dir - &g_exact).norm(),
            bound: cfg.zeta * g_dir.norm(),
        });
    }
    let violations = records.iter().filter(|r| violates(r, cfg.rel_slack)).count();
    Ok(AuditReport { records, violations, constants: uni })
}
