//! O-grid generation: parabolic marching for the initial grid, ADI
//! relaxation of the Laplace grid equations, metrics and validity checks.
//!
//! Columns `i = 0..N` are the distinct periodic stations (the exported
//! `I_max = N + 1` columns repeat the seam). Row `j = 0` is the body and
//! row `J - 1` the far-field circle.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::geometry::BoundaryCurve;
use crate::linsolve::{solve_periodic_tridiagonal, solve_tridiagonal};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarField {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    /// Geometric growth of consecutive radial spacings in the initial grid.
    pub ratio: f64,
}

impl Default for FarField {
    fn default() -> Self {
        FarField {
            center_x: 0.5,
            center_y: 0.0,
            radius: 12.0,
            ratio: 1.08,
        }
    }
}

impl FarField {
    pub fn validate(&self, chord: f64) -> Result<()> {
        if !(self.radius > chord) {
            return Err(Error::Config(format!(
                "far-field radius {} must exceed the chord {chord}",
                self.radius
            )));
        }
        if !(self.ratio > 0.0) {
            return Err(Error::Config("far-field ratio must be positive".into()));
        }
        Ok(())
    }

    /// Circle points matched to boundary stations: station 0 at angle 0,
    /// then clockwise, following the body ordering.
    pub fn points(&self, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let th = -2.0 * std::f64::consts::PI * i as f64 / n as f64;
                (
                    self.center_x + self.radius * th.cos(),
                    self.center_y + self.radius * th.sin(),
                )
            })
            .collect()
    }
}

/// Structured grid; `shift` is the coordinate jump across the seam
/// (zero for O-grids).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T = f64> {
    pub x: Field2<T>,
    pub y: Field2<T>,
    pub shift: [f64; 2],
}

impl<T: Real> Grid<T> {
    pub fn ni(&self) -> usize {
        self.x.ni()
    }

    pub fn nj(&self) -> usize {
        self.x.nj()
    }

    #[inline]
    fn xa(&self, i: isize, j: usize) -> T {
        self.x.periodic(i, j, self.shift[0])
    }

    #[inline]
    fn ya(&self, i: isize, j: usize) -> T {
        self.y.periodic(i, j, self.shift[1])
    }
}

impl Grid<f64> {
    pub fn from_fn(ni: usize, nj: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        Grid {
            x: Field2::from_fn(ni, nj, |i, j| f(i, j).0),
            y: Field2::from_fn(ni, nj, |i, j| f(i, j).1),
            shift: [0.0; 2],
        }
    }

    /// Exported point `(i, j)` for `i` in `0..=N`, repeating the seam.
    pub fn export_point(&self, i: usize, j: usize) -> (f64, f64) {
        (self.xa(i as isize, j), self.ya(i as isize, j))
    }

    pub fn write_grid_file(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{} {}", self.ni() + 1, self.nj())?;
        for j in 0..self.nj() {
            for i in 0..=self.ni() {
                let (x, y) = self.export_point(i, j);
                writeln!(f, "{} {} {:.16e} {:.16e}", i + 1, j + 1, x, y)?;
            }
        }
        Ok(())
    }

    pub fn read_grid_file(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty grid file".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| Error::Parse(format!("grid header: {e}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 2 || dims[0] < 4 || dims[1] < 2 {
            return Err(Error::Parse(format!("bad grid header {header:?}")));
        }
        let (im, jm) = (dims[0], dims[1]);
        let mut x = Field2::filled(im - 1, jm, f64::NAN);
        let mut y = x.clone();
        let mut seen = 0;
        for line in lines {
            let line = line?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() {
                continue;
            }
            if t.len() != 4 {
                return Err(Error::Parse(format!("bad grid row {line:?}")));
            }
            let p = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            let i: usize = t[0].parse().map_err(|_| Error::Parse(format!("bad index in {line:?}")))?;
            let j: usize = t[1].parse().map_err(|_| Error::Parse(format!("bad index in {line:?}")))?;
            if i == 0 || j == 0 || i > im || j > jm {
                return Err(Error::Parse(format!("index out of range in {line:?}")));
            }
            seen += 1;
            if i < im {
                x[(i - 1, j - 1)] = p(t[2])?;
                y[(i - 1, j - 1)] = p(t[3])?;
            }
        }
        if seen != im * jm || x.as_slice().iter().any(|v| v.is_nan()) {
            return Err(Error::Parse(format!("expected {} grid rows, got {seen}", im * jm)));
        }
        Ok(Grid { x, y, shift: [0.0; 2] })
    }

    pub fn write_mesh_csv(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "i,j,x,y")?;
        for j in 0..self.nj() {
            for i in 0..=self.ni() {
                let (x, y) = self.export_point(i, j);
                writeln!(f, "{},{},{:.16e},{:.16e}", i + 1, j + 1, x, y)?;
            }
        }
        Ok(())
    }

    /// Relabels columns `i -> i + k` (periodic).
    pub fn rolled(&self, k: usize) -> Self {
        let n = self.ni();
        Grid {
            x: Field2::from_fn(n, self.nj(), |i, j| self.x[((i + n - k % n) % n, j)]),
            y: Field2::from_fn(n, self.nj(), |i, j| self.y[((i + n - k % n) % n, j)]),
            shift: self.shift,
        }
    }
}

/// Coordinate derivatives at a node: centered in `i`, centered in `j` inside
/// and second-order one-sided on the first and last rows.
#[derive(Clone, Copy, Debug)]
pub struct NodeDerivs<T> {
    pub x_xi: T,
    pub y_xi: T,
    pub x_eta: T,
    pub y_eta: T,
}

impl<T: Real> NodeDerivs<T> {
    /// `x_ξ y_η − x_η y_ξ`.
    pub fn det(&self) -> T {
        self.x_xi * self.y_eta - self.x_eta * self.y_xi
    }
}

/// Derivative in `j` of a row-indexed quantity.
#[inline]
pub fn eta_derivative<T: Real>(f: impl Fn(usize) -> T, j: usize, nj: usize) -> T {
    if j == 0 {
        (f(0) * -3.0 + f(1) * 4.0 - f(2)) * 0.5
    } else if j + 1 == nj {
        (f(j) * 3.0 - f(j - 1) * 4.0 + f(j - 2)) * 0.5
    } else {
        (f(j + 1) - f(j - 1)) * 0.5
    }
}

pub fn node_derivs<T: Real>(g: &Grid<T>, i: usize, j: usize) -> NodeDerivs<T> {
    let ii = i as isize;
    let nj = g.nj();
    NodeDerivs {
        x_xi: (g.xa(ii + 1, j) - g.xa(ii - 1, j)) * 0.5,
        y_xi: (g.ya(ii + 1, j) - g.ya(ii - 1, j)) * 0.5,
        x_eta: eta_derivative(|jj| g.x[(i, jj)], j, nj),
        y_eta: eta_derivative(|jj| g.y[(i, jj)], j, nj),
    }
}

/// Laplace-grid coefficients at an interior node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCoefficients<T = f64> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

pub fn grid_coefficients<T: Real>(g: &Grid<T>, i: usize, j: usize) -> GridCoefficients<T> {
    let m = node_derivs(g, i, j);
    let det = m.det();
    GridCoefficients {
        a: m.x_eta * m.x_eta + m.y_eta * m.y_eta,
        b: m.x_xi * m.x_eta + m.y_xi * m.y_eta,
        c: m.x_xi * m.x_xi + m.y_xi * m.y_xi,
        d: det * det,
    }
}

/// `A r_ξξ − 2B r_ξη + C r_ηη` for `r = x, y` at an interior node.
pub fn mesh_residual_at<T: Real>(g: &Grid<T>, i: usize, j: usize) -> (T, T) {
    let k = grid_coefficients(g, i, j);
    let ii = i as isize;
    let op = |f: &dyn Fn(isize, usize) -> T| {
        let rxx = f(ii + 1, j) - f(ii, j) * 2.0 + f(ii - 1, j);
        let ryy = f(ii, j + 1) - f(ii, j) * 2.0 + f(ii, j - 1);
        let rxy = (f(ii + 1, j + 1) - f(ii + 1, j - 1) - f(ii - 1, j + 1) + f(ii - 1, j - 1)) * 0.25;
        k.a * rxx - k.b * rxy * 2.0 + k.c * ryy
    };
    (op(&|a, b| g.xa(a, b)), op(&|a, b| g.ya(a, b)))
}

/// Residual fields; rows 0 and `J-1` are zero (Dirichlet).
pub fn mesh_residual(g: &Grid) -> (Field2<f64>, Field2<f64>) {
    let (ni, nj) = (g.ni(), g.nj());
    let mut rx = Field2::filled(ni, nj, 0.0);
    let mut ry = Field2::filled(ni, nj, 0.0);
    for j in 1..nj.saturating_sub(1) {
        for i in 0..ni {
            let (a, b) = mesh_residual_at(g, i, j);
            rx[(i, j)] = a;
            ry[(i, j)] = b;
        }
    }
    (rx, ry)
}

pub fn mesh_residual_norm(g: &Grid) -> f64 {
    let (rx, ry) = mesh_residual(g);
    rx.max_abs().max(ry.max_abs())
}

/// Initial grid by marching one level at a time from the body. Each level
/// solves a periodic tridiagonal system in `ξ`; the `j + 1` terms come from
/// a reference level placed on the straight line from the previous level to
/// the far-field point with geometric spacing.
pub fn parabolic_march(boundary: &BoundaryCurve, far: &FarField, nj: usize) -> Result<Grid> {
    let pts = &boundary.points;
    if pts.len() < 4 {
        return Err(Error::InvalidMesh("boundary needs at least 4 points".into()));
    }
    let n = pts.len() - 1;
    let (a, b) = (pts[0], pts[n]);
    if (a.0 - b.0).abs() > 1e-12 || (a.1 - b.1).abs() > 1e-12 {
        return Err(Error::InvalidMesh("boundary curve is not closed".into()));
    }
    march_from(&pts[..n], &far.points(n), far.ratio, nj)
}

/// Marching between arbitrary inner and outer closed curves of equal
/// station count.
pub fn march_from(inner: &[(f64, f64)], outer: &[(f64, f64)], ratio: f64, nj: usize) -> Result<Grid> {
    let n = inner.len();
    if outer.len() != n {
        return Err(Error::Dimension { expected: n, got: outer.len() });
    }
    if n < 3 {
        return Err(Error::InvalidMesh("need at least 3 stations".into()));
    }
    if nj < 2 {
        return Err(Error::InvalidMesh(format!("J_max = {nj} < 2")));
    }
    let mut x = Field2::filled(n, nj, 0.0);
    let mut y = Field2::filled(n, nj, 0.0);
    for i in 0..n {
        x[(i, 0)] = inner[i].0;
        y[(i, 0)] = inner[i].1;
        x[(i, nj - 1)] = outer[i].0;
        y[(i, nj - 1)] = outer[i].1;
    }
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rx = vec![0.0; n];
    let mut ry = vec![0.0; n];
    for j in 1..nj - 1 {
        // reference positions for levels j and j+1
        let m = (nj - j) as i32;
        let mut r0 = vec![(0.0, 0.0); n];
        let mut r1 = vec![(0.0, 0.0); n];
        for i in 0..n {
            let p = (x[(i, j - 1)], y[(i, j - 1)]);
            let f = outer[i];
            let d1 = if (ratio - 1.0).abs() < 1e-12 {
                1.0 / m as f64
            } else {
                (ratio - 1.0) / (ratio.powi(m) - 1.0)
            };
            let s0 = d1;
            let s1 = if m >= 2 { d1 * (1.0 + ratio) } else { 1.0 };
            r0[i] = (p.0 + s0 * (f.0 - p.0), p.1 + s0 * (f.1 - p.1));
            r1[i] = (p.0 + s1 * (f.0 - p.0), p.1 + s1 * (f.1 - p.1));
        }
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let x_xi = 0.5 * (r0[ip].0 - r0[im].0);
            let y_xi = 0.5 * (r0[ip].1 - r0[im].1);
            let x_eta = 0.5 * (r1[i].0 - x[(i, j - 1)]);
            let y_eta = 0.5 * (r1[i].1 - y[(i, j - 1)]);
            let a = x_eta * x_eta + y_eta * y_eta;
            let b = x_xi * x_eta + y_xi * y_eta;
            let c = x_xi * x_xi + y_xi * y_xi;
            if !(a > 0.0 && c > 0.0) {
                return Err(Error::InvalidMesh(format!("degenerate reference mesh at ({i}, {j})")));
            }
            sub[i] = a;
            sup[i] = a;
            diag[i] = -2.0 * (a + c);
            let cross = |k: usize| -> f64 {
                let v = |q: usize, jj: bool| -> (f64, f64) {
                    if jj {
                        r1[q]
                    } else {
                        (x[(q, j - 1)], y[(q, j - 1)])
                    }
                };
                let f = |q: (f64, f64)| if k == 0 { q.0 } else { q.1 };
                0.25 * (f(v(ip, true)) - f(v(ip, false)) - f(v(im, true)) + f(v(im, false)))
            };
            rx[i] = -c * (r1[i].0 + x[(i, j - 1)]) + 2.0 * b * cross(0);
            ry[i] = -c * (r1[i].1 + y[(i, j - 1)]) + 2.0 * b * cross(1);
        }
        let sx = solve_periodic_tridiagonal(&sub, &diag, &sup, &rx)?;
        let sy = solve_periodic_tridiagonal(&sub, &diag, &sup, &ry)?;
        for i in 0..n {
            x[(i, j)] = sx[i];
            y[(i, j)] = sy[i];
        }
    }
    Ok(Grid { x, y, shift: [0.0; 2] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticParams {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub cycle: usize,
    pub omega: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for EllipticParams {
    fn default() -> Self {
        EllipticParams {
            alpha_lo: 0.3,
            alpha_hi: 30.0,
            cycle: 6,
            omega: 1.0,
            tol: 1e-8,
            max_iters: 20000,
        }
    }
}

impl EllipticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_lo > 0.0 && self.alpha_hi >= self.alpha_lo) {
            return Err(Error::Config("mesh alpha range must satisfy 0 < lo <= hi".into()));
        }
        if self.cycle == 0 || !(self.omega > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Config("mesh cycle, omega and tol must be positive".into()));
        }
        Ok(())
    }
}

/// Geometric sequence `hi, .., lo` of length `n`.
pub fn alpha_cycle(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let q = (lo / hi).powf(1.0 / (n - 1) as f64);
    (0..n).map(|k| hi * q.powi(k as i32)).collect()
}

#[derive(Clone, Debug, Default)]
pub struct SmoothReport {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// ADI relaxation of the Laplace grid equations,
/// `(α̂ − A δξξ) f = α̂ ω L`, `(α̂ − C δηη) Δr = f`, `r += Δr`,
/// with `α̂ = α (A + C)` so that one α schedule serves cells of any size.
pub fn elliptic_smooth(grid: &Grid, p: &EllipticParams) -> Result<(Grid, SmoothReport)> {
    p.validate()?;
    let mut g = grid.clone();
    let (n, nj) = (g.ni(), g.nj());
    let mut report = SmoothReport::default();
    if nj < 3 {
        return Ok((g, report));
    }
    let alphas = alpha_cycle(p.alpha_lo, p.alpha_hi, p.cycle);
    let nint = nj - 2;
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut bx = vec![0.0; n];
    let mut by = vec![0.0; n];
    let mut fx = Field2::filled(n, nj, 0.0);
    let mut fy = Field2::filled(n, nj, 0.0);
    let mut coef = Field2::filled(n, nj, GridCoefficients { a: 0.0, b: 0.0, c: 0.0, d: 0.0 });
    let (mut tsub, mut tdiag, mut tsup) = (vec![0.0; nint], vec![0.0; nint], vec![0.0; nint]);
    let (mut tx, mut ty) = (vec![0.0; nint], vec![0.0; nint]);
    for it in 0..=p.max_iters {
        let mut res = 0.0f64;
        for j in 1..nj - 1 {
            for i in 0..n {
                coef[(i, j)] = grid_coefficients(&g, i, j);
                let (lx, ly) = mesh_residual_at(&g, i, j);
                fx[(i, j)] = lx;
                fy[(i, j)] = ly;
                res = res.max(lx.abs()).max(ly.abs());
            }
        }
        if !res.is_finite() {
            return Err(Error::Divergence { solver: "elliptic mesh", iteration: it, residual: res });
        }
        report.history.push(res);
        report.residual = res;
        report.iterations = it;
        if res <= p.tol {
            return Ok((g, report));
        }
        if it == p.max_iters {
            break;
        }
        let alpha = alphas[it % alphas.len()];
        // step 1: periodic lines in ξ
        for j in 1..nj - 1 {
            for i in 0..n {
                let k = coef[(i, j)];
                let ah = alpha * (k.a + k.c);
                sub[i] = -k.a;
                sup[i] = -k.a;
                diag[i] = ah + 2.0 * k.a;
                bx[i] = ah * p.omega * fx[(i, j)];
                by[i] = ah * p.omega * fy[(i, j)];
            }
            let sx = solve_periodic_tridiagonal(&sub, &diag, &sup, &bx)?;
            let sy = solve_periodic_tridiagonal(&sub, &diag, &sup, &by)?;
            fx.row_mut(j).copy_from_slice(&sx);
            fy.row_mut(j).copy_from_slice(&sy);
        }
        // step 2: lines in η with Δr = 0 on both boundary rows
        for i in 0..n {
            for jj in 0..nint {
                let k = coef[(i, jj + 1)];
                let ah = alpha * (k.a + k.c);
                tsub[jj] = -k.c;
                tsup[jj] = -k.c;
                tdiag[jj] = ah + 2.0 * k.c;
                tx[jj] = fx[(i, jj + 1)];
                ty[jj] = fy[(i, jj + 1)];
            }
            let dx = solve_tridiagonal(&tsub, &tdiag, &tsup, &tx)?;
            let dy = solve_tridiagonal(&tsub, &tdiag, &tsup, &ty)?;
            for jj in 0..nint {
                g.x[(i, jj + 1)] += dx[jj];
                g.y[(i, jj + 1)] += dy[jj];
            }
        }
        let v = check_validity(&g);
        if v.min_cell_jacobian <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "cell Jacobian {:.3e} <= 0 at iteration {}",
                v.min_cell_jacobian,
                it + 1
            )));
        }
    }
    Err(Error::NonConvergence {
        solver: "elliptic mesh",
        iterations: p.max_iters,
        residual: report.residual,
        history: report.history,
    })
}

/// Nodal flow metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowMetric<T = f64> {
    pub a1: T,
    pub a2: T,
    pub a3: T,
    /// `1 / (x_ξ y_η − x_η y_ξ)`.
    pub jac: T,
    pub xi_x: T,
    pub xi_y: T,
    pub eta_x: T,
    pub eta_y: T,
}

pub fn flow_metric_at<T: Real>(g: &Grid<T>, i: usize, j: usize) -> FlowMetric<T> {
    let m = node_derivs(g, i, j);
    let jac = T::cst(1.0) / m.det();
    let xi_x = m.y_eta * jac;
    let xi_y = -(m.x_eta * jac);
    let eta_x = -(m.y_xi * jac);
    let eta_y = m.x_xi * jac;
    FlowMetric {
        a1: xi_x * xi_x + xi_y * xi_y,
        a2: xi_x * eta_x + xi_y * eta_y,
        a3: eta_x * eta_x + eta_y * eta_y,
        jac,
        xi_x,
        xi_y,
        eta_x,
        eta_y,
    }
}

pub fn flow_metrics(g: &Grid) -> Result<Field2<FlowMetric>> {
    let mut out = Vec::with_capacity(g.ni() * g.nj());
    for j in 0..g.nj() {
        for i in 0..g.ni() {
            let det = node_derivs(g, i, j).det();
            if !(det > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "nonpositive metric determinant {det:.3e} at ({i}, {j})"
                )));
            }
            out.push(flow_metric_at(g, i, j));
        }
    }
    let mut k = 0;
    Ok(Field2::from_fn(g.ni(), g.nj(), |_, _| {
        k += 1;
        out[k - 1]
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidityReport {
    /// Smallest corner cross product over all cells.
    pub min_cell_jacobian: f64,
    pub max_cell_jacobian: f64,
    /// Cells with at least one nonpositive corner.
    pub folded_cells: usize,
    pub body_deviation: Option<f64>,
    pub farfield_deviation: Option<f64>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.folded_cells == 0
            && self.min_cell_jacobian > 0.0
            && self.body_deviation.map_or(true, |d| d <= 1e-12)
            && self.farfield_deviation.map_or(true, |d| d <= 1e-9)
    }
}

pub fn check_validity(g: &Grid) -> ValidityReport {
    let (n, nj) = (g.ni(), g.nj());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut folded = 0;
    for j in 0..nj - 1 {
        for i in 0..n {
            let ii = i as isize;
            let p = [
                (g.xa(ii, j), g.ya(ii, j)),
                (g.xa(ii + 1, j), g.ya(ii + 1, j)),
                (g.xa(ii + 1, j + 1), g.ya(ii + 1, j + 1)),
                (g.xa(ii, j + 1), g.ya(ii, j + 1)),
            ];
            let mut bad = false;
            for k in 0..4 {
                let a = p[k];
                let b = p[(k + 1) % 4];
                let c = p[(k + 3) % 4];
                let cr = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                lo = lo.min(cr);
                hi = hi.max(cr);
                bad |= !(cr > 0.0);
            }
            folded += bad as usize;
        }
    }
    ValidityReport {
        min_cell_jacobian: lo,
        max_cell_jacobian: hi,
        folded_cells: folded,
        body_deviation: None,
        farfield_deviation: None,
    }
}

/// Validity plus conformity of the first row to `body` and of the last row
/// to the far-field circle.
pub fn check_conformity(g: &Grid, body: &BoundaryCurve, far: &FarField) -> ValidityReport {
    let mut r = check_validity(g);
    let n = g.ni();
    let mut bd = if body.points.len() == n + 1 { 0.0f64 } else { f64::INFINITY };
    if bd == 0.0 {
        for i in 0..n {
            let (x, y) = body.points[i];
            bd = bd.max((g.x[(i, 0)] - x).abs()).max((g.y[(i, 0)] - y).abs());
        }
    }
    let mut fd = 0.0f64;
    for (i, (x, y)) in far.points(n).into_iter().enumerate() {
        let j = g.nj() - 1;
        fd = fd.max((g.x[(i, j)] - x).abs()).max((g.y[(i, j)] - y).abs());
    }
    r.body_deviation = Some(bd);
    r.farfield_deviation = Some(fd);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{naca0012_cst, sample_boundary, CstConfig};
    use crate::real::Dual;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn affine(n: usize, nj: usize, m: [f64; 4], off: (f64, f64)) -> Grid {
        // periodic in i only up to a jump; carry it in `shift`
        let mut g = Grid::from_fn(n, nj, |i, j| {
            let (a, b) = (i as f64, j as f64);
            (m[0] * a + m[1] * b + off.0, m[2] * a + m[3] * b + off.1)
        });
        g.shift = [m[0] * n as f64, m[2] * n as f64];
        g
    }

    fn annulus(n: usize, nj: usize, r0: f64, r1: f64) -> Grid {
        Grid::from_fn(n, nj, |i, j| {
            let th = -2.0 * PI * i as f64 / n as f64;
            let r = r0 * (r1 / r0).powf(j as f64 / (nj - 1) as f64);
            (r * th.cos(), r * th.sin())
        })
    }

    fn naca_grid() -> (Grid, BoundaryCurve) {
        let b = sample_boundary(&naca0012_cst(), &CstConfig::default(), 49).unwrap();
        (parabolic_march(&b, &FarField::default(), 31).unwrap(), b)
    }

    #[test]
    fn cartesian_coefficients() {
        let h = 0.25;
        let g = affine(8, 6, [0.0, h, -h, 0.0], (0.0, 0.0));
        let k = grid_coefficients(&g, 3, 2);
        assert!((k.a - h * h).abs() < 1e-15 && (k.c - h * h).abs() < 1e-15);
        assert!(k.b.abs() < 1e-15);
        assert!((k.d - h.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn rotation_leaves_sums_of_squares() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = [1.0, 0.3, -0.2, 0.8];
        let r = [s * m[0] - s * m[2], s * m[1] - s * m[3], s * m[0] + s * m[2], s * m[1] + s * m[3]];
        let g0 = affine(10, 5, m, (0.0, 0.0));
        let g1 = affine(10, 5, r, (0.0, 0.0));
        let (a, b) = (grid_coefficients(&g0, 4, 2), grid_coefficients(&g1, 4, 2));
        assert!((a.a - b.a).abs() < 1e-14 && (a.c - b.c).abs() < 1e-14 && (a.d - b.d).abs() < 1e-14);
    }

    #[test]
    fn coefficients_match_differentiated_polar_map() {
        // x = r cos θ, y = r sin θ with r = 2 + 0.1 j, θ = -2π i / n;
        // centered differences of a trigonometric map against the exact
        // values of the same differences
        let n = 64;
        let g = Grid::from_fn(n, 6, |i, j| {
            let th = -2.0 * PI * i as f64 / n as f64;
            let r = 2.0 + 0.1 * j as f64;
            (r * th.cos(), r * th.sin())
        });
        let (i, j) = (5, 3);
        let dth = 2.0 * PI / n as f64;
        let r = 2.0 + 0.1 * j as f64;
        // centered difference of cos/sin over ±dθ: r sin(dθ) in the tangential direction
        let xi_len = r * dth.sin();
        let k = grid_coefficients(&g, i, j);
        assert!((k.c - xi_len * xi_len).abs() < 1e-12);
        assert!((k.a - 0.01).abs() < 1e-12);
        assert!(k.b.abs() < 1e-12);
        assert!((k.d - (xi_len * 0.1).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn affine_grid_has_zero_residual() {
        let g = affine(12, 7, [0.3, -0.1, 0.2, 0.5], (1.0, -2.0));
        assert!(mesh_residual_norm(&g) < 1e-13);
        let v = check_validity(&g);
        assert!((v.min_cell_jacobian - v.max_cell_jacobian).abs() < 1e-12);
        assert!(v.min_cell_jacobian > 0.0);
    }

    #[test]
    fn two_level_march_is_the_two_curves() {
        let b = sample_boundary(&naca0012_cst(), &CstConfig::default(), 49).unwrap();
        let far = FarField::default();
        let g = parabolic_march(&b, &far, 2).unwrap();
        assert_eq!(g.nj(), 2);
        let r = check_conformity(&g, &b, &far);
        assert_eq!(r.body_deviation, Some(0.0));
        assert!(r.farfield_deviation.unwrap() < 1e-14);
    }

    #[test]
    fn march_between_circles_is_polar() {
        let n = 40;
        let inner: Vec<_> = FarField { center_x: 0.0, center_y: 0.0, radius: 1.0, ratio: 1.0 }.points(n);
        let outer: Vec<_> = FarField { center_x: 0.0, center_y: 0.0, radius: 8.0, ratio: 1.0 }.points(n);
        let g = march_from(&inner, &outer, 1.1, 15).unwrap();
        let v = check_validity(&g);
        assert!(v.is_valid());
        for j in 0..15 {
            let r0 = g.x[(0, j)].hypot(g.y[(0, j)]);
            for i in 0..n {
                let th = -2.0 * PI * i as f64 / n as f64;
                let r = g.x[(i, j)].hypot(g.y[(i, j)]);
                assert!((r - r0).abs() < 1e-10);
                assert!((g.y[(i, j)].atan2(g.x[(i, j)]) - th.sin().atan2(th.cos())).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn naca_march_valid() {
        let (g, b) = naca_grid();
        assert_eq!((g.ni() + 1, g.nj()), (49, 31));
        let r = check_conformity(&g, &b, &FarField::default());
        assert!(r.is_valid(), "{r:?}");
    }

    #[test]
    fn smoothing_annulus_recovers_log_spacing() {
        let n = 32;
        let nj = 12;
        let inner = FarField { center_x: 0.0, center_y: 0.0, radius: 1.0, ratio: 1.0 }.points(n);
        let outer = FarField { center_x: 0.0, center_y: 0.0, radius: 6.0, ratio: 1.0 }.points(n);
        let g0 = march_from(&inner, &outer, 1.0, nj).unwrap();
        let (g, rep) = elliptic_smooth(&g0, &EllipticParams::default()).unwrap();
        assert!(rep.residual < 1e-8);
        let exact = annulus(n, nj, 1.0, 6.0);
        for j in 0..nj {
            let r = g.x[(3, j)].hypot(g.y[(3, j)]);
            let re = exact.x[(3, j)].hypot(exact.y[(3, j)]);
            assert!((r - re).abs() / re < 2e-2, "j={j}: {r} vs {re}");
            for i in 0..n {
                let ri = g.x[(i, j)].hypot(g.y[(i, j)]);
                assert!((ri - r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn converged_grid_needs_no_iterations() {
        let g = affine(12, 7, [0.3, -0.1, 0.2, 0.5], (0.0, 0.0));
        let (g2, rep) = elliptic_smooth(&g, &EllipticParams::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(g2, g);
    }

    #[test]
    fn naca_smoothing_converges_and_is_symmetric() {
        let (g0, b) = naca_grid();
        let (g, rep) = elliptic_smooth(&g0, &EllipticParams::default()).unwrap();
        assert!(rep.residual < 1e-8, "{}", rep.residual);
        let v = check_conformity(&g, &b, &FarField::default());
        assert!(v.is_valid(), "{v:?}");
        let n = g.ni();
        for j in 0..g.nj() {
            for i in 0..n {
                let m = (n - i) % n;
                assert!((g.x[(i, j)] - g.x[(m, j)]).abs() < 1e-9);
                assert!((g.y[(i, j)] + g.y[(m, j)]).abs() < 1e-9);
            }
        }
        // affine image keeps zero residual up to the tolerance scaling
        let mut h = g.clone();
        for k in 0..h.x.as_slice().len() {
            let (x, y) = (g.x.as_slice()[k], g.y.as_slice()[k]);
            h.x.as_mut_slice()[k] = 0.8 * x - 0.6 * y + 3.0;
            h.y.as_mut_slice()[k] = 0.6 * x + 0.8 * y - 1.0;
        }
        assert!(mesh_residual_norm(&h) < 2e-8);
        // perturbing the converged grid raises the residual
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = g.clone();
        for j in 1..p.nj() - 1 {
            for i in 0..n {
                p.x[(i, j)] += 1e-4 * rng.gen_range(-1.0..1.0);
            }
        }
        assert!(mesh_residual_norm(&p) > 1e-7);
        // relabeling the columns permutes the residual
        let r = g.rolled(7);
        let (a, _) = mesh_residual(&g);
        let (c, _) = mesh_residual(&r);
        assert!((a.max_abs() - c.max_abs()).abs() < 1e-15);
        assert!((a[(3, 4)] - c[(10, 4)]).abs() < 1e-15);
    }

    #[test]
    fn swapped_nodes_fold_a_cell() {
        let mut g = annulus(16, 6, 1.0, 4.0);
        let (a, b) = ((3, 2), (4, 2));
        let t = (g.x[a], g.y[a]);
        g.x[a] = g.x[b];
        g.y[a] = g.y[b];
        g.x[b] = t.0;
        g.y[b] = t.1;
        let v = check_validity(&g);
        assert!(v.min_cell_jacobian < 0.0 && v.folded_cells > 0);
        assert!(!v.is_valid());
    }

    #[test]
    fn metrics_on_cartesian_and_scaled_grids() {
        let g = affine(8, 6, [0.0, 1.0, -1.0, 0.0], (0.0, 0.0));
        let m = flow_metrics(&g).unwrap();
        for mm in m.as_slice() {
            assert!((mm.a1 - 1.0).abs() < 1e-14 && (mm.a3 - 1.0).abs() < 1e-14);
            assert!(mm.a2.abs() < 1e-14 && (mm.jac - 1.0).abs() < 1e-14);
        }
        let s = 3.0;
        let gs = affine(8, 6, [0.0, s, -s, 0.0], (0.0, 0.0));
        let ms = flow_metrics(&gs).unwrap();
        assert!((ms[(2, 0)].a1 - 1.0 / (s * s)).abs() < 1e-14);
        assert!((ms[(2, 5)].jac - 1.0 / (s * s)).abs() < 1e-14);
    }

    #[test]
    fn polar_metrics_nearly_orthogonal_and_dual() {
        let g = annulus(64, 20, 1.0, 5.0);
        let m = flow_metrics(&g).unwrap();
        for j in 1..19 {
            for i in 0..64 {
                let mm = m[(i, j)];
                assert!(mm.a2.abs() < 1e-12 * (mm.a1 + mm.a3));
                let d = node_derivs(&g, i, j);
                assert!((mm.xi_x * d.x_xi + mm.xi_y * d.y_xi - 1.0).abs() < 1e-12);
                assert!((mm.xi_x * d.x_eta + mm.xi_y * d.y_eta).abs() < 1e-12);
            }
        }
        let mut bad = g.clone();
        bad.x[(5, 5)] = bad.x[(5, 7)];
        bad.y[(5, 5)] = bad.y[(5, 7)];
        bad.x[(5, 6)] = 0.0;
        bad.y[(5, 6)] = 0.0;
        assert!(flow_metrics(&bad).is_err());
    }

    #[test]
    fn generic_residual_matches_f64() {
        let (g, _) = naca_grid();
        let gd = Grid {
            x: g.x.map(|v| Dual::new(v, 0.0)),
            y: g.y.map(|v| Dual::new(v, 0.0)),
            shift: g.shift,
        };
        let (a, b) = mesh_residual_at(&g, 7, 4);
        let (c, d) = mesh_residual_at(&gd, 7, 4);
        assert_eq!((a, b), (c.re, d.re));
    }

    #[test]
    fn grid_file_round_trip() {
        let (g, _) = naca_grid();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("grid.dat");
        g.write_grid_file(&p).unwrap();
        let back = Grid::read_grid_file(&p).unwrap();
        assert_eq!(back, g);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("49 31\n"));
        assert_eq!(text.lines().count(), 1 + 49 * 31);
    }

    #[test]
    fn alpha_cycle_is_geometric() {
        let a = alpha_cycle(0.3, 30.0, 6);
        assert_eq!(a.len(), 6);
        assert!((a[0] - 30.0).abs() < 1e-12 && (a[5] - 0.3).abs() < 1e-12);
        let q = a[1] / a[0];
        for w in a.windows(2) {
            assert!((w[1] / w[0] - q).abs() < 1e-12);
        }
    }
}
