//! Coupled discrete adjoint of the pressure-matching objective.
//!
//! Unknowns: `u` is the potential on rows `j = 0..J-2`; `q` holds `(x, y)`
//! on the same rows. The body row of `q` is tied to the design by the
//! Dirichlet rows `q_b − X(z) = 0` of the mesh residual, so the design
//! enters only through `∂R_m/∂z` and the objective has `∂J/∂z = 0`.
//! The far-field row is fixed and carries no unknowns.

pub mod coloring;
pub mod sparse;

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::flow::{flow_residual_generic, wall_cp, FlowState, FreestreamSpec};
use crate::geometry::{boundary_stations, CstConfig, DesignVector};
use crate::meshgen::{mesh_residual_at, Grid};
use crate::real::{Dual, Real};

use coloring::{colored_jacobian, Lattice};
pub use sparse::{solve_refined, BandLu, CsrMatrix, SolveReport};

/// Flat numbering of the active unknowns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActiveIndexMap {
    pub ni: usize,
    pub nj: usize,
}

impl ActiveIndexMap {
    pub fn new(ni: usize, nj: usize) -> Self {
        ActiveIndexMap { ni, nj }
    }

    pub fn n_u(&self) -> usize {
        self.ni * (self.nj - 1)
    }

    pub fn n_q(&self) -> usize {
        2 * self.n_u()
    }

    pub fn u_lattice(&self) -> Lattice {
        Lattice { n: self.ni, nj: self.nj - 1, comps: 1 }
    }

    pub fn q_lattice(&self) -> Lattice {
        Lattice { n: self.ni, nj: self.nj - 1, comps: 2 }
    }

    pub fn u_index(&self, i: usize, j: usize) -> Option<usize> {
        (i < self.ni && j + 1 < self.nj).then(|| j * self.ni + i)
    }

    pub fn u_point(&self, k: usize) -> (usize, usize) {
        (k % self.ni, k / self.ni)
    }

    pub fn q_index(&self, i: usize, j: usize, c: usize) -> Option<usize> {
        (i < self.ni && j + 1 < self.nj && c < 2).then(|| 2 * (j * self.ni + i) + c)
    }

    pub fn q_point(&self, k: usize) -> (usize, usize, usize) {
        let (i, j) = self.u_point(k / 2);
        (i, j, k % 2)
    }
}

/// Everything the adjoint needs about one converged design point.
pub struct AdjointProblem<'a> {
    pub design: &'a DesignVector,
    pub cst: &'a CstConfig,
    pub grid: &'a Grid,
    pub state: &'a FlowState,
    pub fs: &'a FreestreamSpec,
    pub kappa: f64,
    /// Body stations entering the objective and their reference values.
    pub stations: &'a [usize],
    pub cp_ref: &'a [f64],
}

/// `½ Σ (Cp_p − Cp_ref,p)²` over the listed body stations.
pub fn objective_generic<T: Real>(
    phi: &Field2<T>,
    shift: f64,
    grid: &Grid<T>,
    fs: &FreestreamSpec,
    stations: &[usize],
    cp_ref: &[f64],
) -> Result<T> {
    if stations.len() != cp_ref.len() {
        return Err(Error::Dimension {
            expected: stations.len(),
            got: cp_ref.len(),
        });
    }
    let mut acc = T::zero();
    for (&i, &r) in stations.iter().zip(cp_ref) {
        let d = wall_cp(phi, shift, grid, i, fs)? - r;
        acc += d * d * 0.5;
    }
    Ok(acc)
}

pub struct Jacobians {
    pub map: ActiveIndexMap,
    pub rf_u: CsrMatrix,
    pub rf_q: CsrMatrix,
    pub rm_q: CsrMatrix,
    /// `n_q × m`; nonzero only on the body rows.
    pub rm_z: CsrMatrix,
    pub j_u: Vec<f64>,
    pub j_q: Vec<f64>,
    pub j_z: Vec<f64>,
    pub objective: f64,
}

fn to_dual(f: &Field2<f64>) -> Field2<Dual> {
    f.map(|v| Dual::new(v, 0.0))
}

fn dual_grid(g: &Grid) -> Grid<Dual> {
    Grid {
        x: to_dual(&g.x),
        y: to_dual(&g.y),
        shift: g.shift,
    }
}

fn du_rows(f: &Field2<Dual>, rows: usize) -> Vec<f64> {
    f.as_slice()[..rows * f.ni()].iter().map(|d| d.du).collect()
}

/// Body coordinates `X(z)` in `q` ordering (`n` stations, `x` then `y`).
pub fn body_coordinates<T: Real>(upper: &[T], lower: &[T], cst: &CstConfig, n: usize) -> Result<Vec<(f64, T)>> {
    boundary_stations(upper, lower, cst, n + 1)
}

/// Forward-mode assembly of all Jacobians and objective partials.
pub fn assemble_jacobians(p: &AdjointProblem) -> Result<Jacobians> {
    if !p.state.converged {
        return Err(Error::Evaluation(
            "Jacobian assembly requires a converged flow state".into(),
        ));
    }
    let g = p.grid;
    let (n, nj) = (g.ni(), g.nj());
    let map = ActiveIndexMap::new(n, nj);
    let ul = map.u_lattice();
    let ql = map.q_lattice();
    let na = nj - 1;
    let phi_d = to_dual(&p.state.phi);
    let grid_d = dual_grid(g);
    let shift = p.state.shift;

    let rf_u = colored_jacobian(ul, ul, 3, |seed| {
        let mut phi = phi_d.clone();
        for (k, s) in seed.iter().enumerate() {
            phi.as_mut_slice()[k].du = *s;
        }
        let ev = flow_residual_generic(&phi, shift, &grid_d, p.fs, p.kappa)?;
        Ok(du_rows(&ev.residual, na))
    })?;

    let seeded_grid = |seed: &[f64]| {
        let mut gd = grid_d.clone();
        for k in 0..seed.len() / 2 {
            gd.x.as_mut_slice()[k].du = seed[2 * k];
            gd.y.as_mut_slice()[k].du = seed[2 * k + 1];
        }
        gd
    };

    let rf_q = colored_jacobian(ql, ul, 4, |seed| {
        let gd = seeded_grid(seed);
        let ev = flow_residual_generic(&phi_d, shift, &gd, p.fs, p.kappa)?;
        Ok(du_rows(&ev.residual, na))
    })?;

    let rm_q = colored_jacobian(ql, ql, 1, |seed| {
        let gd = seeded_grid(seed);
        let mut out = vec![0.0; ql.len()];
        for i in 0..n {
            // body rows: q_b − X(z)
            out[ql.index(i, 0, 0)] = seed[ql.index(i, 0, 0)];
            out[ql.index(i, 0, 1)] = seed[ql.index(i, 0, 1)];
        }
        for j in 1..na {
            for i in 0..n {
                let (rx, ry) = mesh_residual_at(&gd, i, j);
                out[ql.index(i, j, 0)] = rx.du;
                out[ql.index(i, j, 1)] = ry.du;
            }
        }
        Ok(out)
    })?;

    let m = p.design.len();
    let h = p.design.upper.len();
    let mut tz = Vec::new();
    for k in 0..m {
        let seed = |a: &[f64], off: usize| -> Vec<Dual> {
            a.iter()
                .enumerate()
                .map(|(l, &v)| Dual::new(v, if l + off == k { 1.0 } else { 0.0 }))
                .collect()
        };
        let up = seed(&p.design.upper, 0);
        let lo = seed(&p.design.lower, h);
        let pts = body_coordinates(&up, &lo, p.cst, n)?;
        for (i, (_, y)) in pts.iter().enumerate() {
            if y.du != 0.0 {
                tz.push((ql.index(i, 0, 1), k, -y.du));
            }
        }
    }
    let rm_z = CsrMatrix::from_triplets(ql.len(), m, tz)?;

    // the objective reads φ on the body row and the metric of the body
    // nodes, which involves coordinate rows 0..=2 only
    let jrows = 3.min(na);
    let mut j_u = vec![0.0; ul.len()];
    for i in 0..n {
        let mut phi = phi_d.clone();
        phi[(i, 0)].du = 1.0;
        j_u[ul.index(i, 0, 0)] = objective_generic(&phi, shift, &grid_d, p.fs, p.stations, p.cp_ref)?.du;
    }
    let mut j_q = vec![0.0; ql.len()];
    for j in 0..jrows {
        for i in 0..n {
            for c in 0..2 {
                let mut gd = grid_d.clone();
                if c == 0 {
                    gd.x[(i, j)].du = 1.0;
                } else {
                    gd.y[(i, j)].du = 1.0;
                }
                j_q[ql.index(i, j, c)] =
                    objective_generic(&phi_d, shift, &gd, p.fs, p.stations, p.cp_ref)?.du;
            }
        }
    }
    let objective = objective_generic(&p.state.phi, shift, g, p.fs, p.stations, p.cp_ref)?;
    Ok(Jacobians {
        map,
        rf_u,
        rf_q,
        rm_q,
        rm_z,
        j_u,
        j_q,
        j_z: vec![0.0; m],
        objective,
    })
}

/// `[∂R_f/∂u]ᵀ λ_f = [∂J/∂u]ᵀ`.
pub fn solve_flow_adjoint(rf_u: &CsrMatrix, j_u: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport)> {
    solve_refined(&rf_u.transpose(), j_u, tol)
}

/// `[∂R_m/∂q]ᵀ λ_m = [∂J/∂q]ᵀ − [∂R_f/∂q]ᵀ λ_f`.
pub fn solve_mesh_adjoint(
    rm_q: &CsrMatrix,
    j_q: &[f64],
    rf_q: &CsrMatrix,
    lambda_f: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, SolveReport)> {
    let coupling = rf_q.tr_matvec(lambda_f);
    let rhs: Vec<f64> = j_q.iter().zip(&coupling).map(|(a, b)| a - b).collect();
    solve_refined(&rm_q.transpose(), &rhs, tol)
}

/// `∇J̃ = [∂J/∂z]ᵀ − [∂R_m/∂z]ᵀ λ_m`.
pub fn reduced_gradient(lambda_m: &[f64], rm_z: &CsrMatrix, j_z: &[f64]) -> Vec<f64> {
    let t = rm_z.tr_matvec(lambda_m);
    j_z.iter().zip(&t).map(|(a, b)| a - b).collect()
}

#[derive(Clone, Debug)]
pub struct AdjointPair {
    pub lambda_f: Vec<f64>,
    pub lambda_m: Vec<f64>,
    pub flow_report: SolveReport,
    pub mesh_report: SolveReport,
}

pub struct GradientResult {
    pub gradient: Vec<f64>,
    pub objective: f64,
    pub adjoints: AdjointPair,
}

/// Assembly, both adjoint solves and the contraction.
pub fn adjoint_gradient(p: &AdjointProblem, tol: f64) -> Result<GradientResult> {
    let jac = assemble_jacobians(p)?;
    let (lambda_f, flow_report) = solve_flow_adjoint(&jac.rf_u, &jac.j_u, tol)?;
    let (lambda_m, mesh_report) = solve_mesh_adjoint(&jac.rm_q, &jac.j_q, &jac.rf_q, &lambda_f, tol)?;
    let gradient = reduced_gradient(&lambda_m, &jac.rm_z, &jac.j_z);
    Ok(GradientResult {
        gradient,
        objective: jac.objective,
        adjoints: AdjointPair {
            lambda_f,
            lambda_m,
            flow_report,
            mesh_report,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_map_is_bijective() {
        let m = ActiveIndexMap::new(48, 31);
        assert_eq!(m.n_u(), 1440);
        assert_eq!(m.n_q(), 2880);
        for k in 0..m.n_u() {
            let (i, j) = m.u_point(k);
            assert_eq!(m.u_index(i, j), Some(k));
        }
        for k in 0..m.n_q() {
            let (i, j, c) = m.q_point(k);
            assert_eq!(m.q_index(i, j, c), Some(k));
        }
        assert_eq!(m.u_index(0, 30), None);
    }

    #[test]
    fn trivial_adjoint_systems() {
        let id = CsrMatrix::identity(6);
        let b = [1.0, -2.0, 0.5, 0.0, 3.0, 1.5];
        let (l, _) = solve_flow_adjoint(&id, &b, 1e-12).unwrap();
        assert_eq!(l, b.to_vec());
        let (z, _) = solve_flow_adjoint(&id, &[0.0; 6], 1e-12).unwrap();
        assert_eq!(z, vec![0.0; 6]);
        let zero = CsrMatrix::from_triplets(6, 6, vec![]).unwrap();
        let (m, _) = solve_mesh_adjoint(&id, &b, &zero, &[0.0; 6], 1e-12).unwrap();
        assert_eq!(m, b.to_vec());
        let (m0, _) = solve_mesh_adjoint(&id, &[0.0; 6], &id, &[0.0; 6], 1e-12).unwrap();
        assert_eq!(m0, vec![0.0; 6]);
        let rz = CsrMatrix::from_triplets(6, 2, vec![(0, 0, 1.0), (3, 1, -2.0)]).unwrap();
        assert_eq!(reduced_gradient(&[0.0; 6], &rz, &[0.0; 2]), vec![0.0, 0.0]);
        assert_eq!(reduced_gradient(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0], &rz, &[0.0; 2]), vec![-1.0, 4.0]);
    }
}
