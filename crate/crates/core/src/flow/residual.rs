//! Discrete mass residual. Written once over [`Real`] so the same code
//! serves the primal solve and forward-mode Jacobians.

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::meshgen::{eta_derivative, flow_metric_at, FlowMetric, Grid};
use crate::real::Real;

use super::{density, switching_nu, FreestreamSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeState<T> {
    pub metric: FlowMetric<T>,
    /// `x_ξ y_η − x_η y_ξ`.
    pub det: T,
    pub phi_xi: T,
    pub phi_eta: T,
    pub u: T,
    pub v: T,
    pub rho: T,
}

/// Face quantities: `f[(i, j)]` lives on face `(i+½, j)`, `g[(i, j)]` on
/// `(i, j+½)`. The coefficient fields carry the face density times the
/// averaged metric (`ρ̃ A₁/J` and `ρ̄ A₃/J`) for the implicit operator.
#[derive(Clone, Debug)]
pub struct FaceData<T> {
    pub f: Field2<T>,
    pub g: Field2<T>,
    pub coef_xi: Field2<f64>,
    pub coef_eta: Field2<f64>,
    /// Artificial-viscosity switch per `ξ`-face, for diagnostics.
    pub nu_xi: Field2<f64>,
    pub nu_eta: Field2<f64>,
}

pub struct FlowEval<T> {
    pub nodes: Field2<NodeState<T>>,
    pub faces: FaceData<T>,
    /// Residual rows `j = 0..J-2`; row `J-1` is zero.
    pub residual: Field2<T>,
}

fn nodal<T: Real>(
    phi: &Field2<T>,
    shift: f64,
    grid: &Grid<T>,
    gamma: f64,
    i: usize,
    j: usize,
) -> Result<NodeState<T>> {
    let metric = flow_metric_at(grid, i, j);
    let det = T::cst(1.0) / metric.jac;
    let ii = i as isize;
    let phi_xi = (phi.periodic(ii + 1, j, shift) - phi.periodic(ii - 1, j, shift)) * 0.5;
    let phi_eta = if j == 0 {
        // V = 0 on the body
        -(metric.a2 * phi_xi / metric.a3)
    } else {
        eta_derivative(|jj| phi[(i, jj)], j, phi.nj())
    };
    let u = metric.a1 * phi_xi + metric.a2 * phi_eta;
    let v = metric.a2 * phi_xi + metric.a3 * phi_eta;
    let rho = density(u * phi_xi + v * phi_eta, gamma).map_err(|e| match e {
        Error::Nonphysical { bracket, .. } => Error::Nonphysical { i, j, bracket },
        other => other,
    })?;
    Ok(NodeState {
        metric,
        det,
        phi_xi,
        phi_eta,
        u,
        v,
        rho,
    })
}

/// Upwind-blended face density on a line of nodal densities:
/// `ρ̃_{k+½} = (1−ν) ρ_{k+½} + ν ρ_{k+½+r}` with `r = −1` for positive face
/// velocity and `+1` otherwise, `ν` taken at the upwind node. Missing upwind
/// half-points at open ends fall back to the end node.
pub fn artificial_density_line<T: Real>(
    rho: &[T],
    vel: &[T],
    kappa: f64,
    gamma: f64,
    periodic: bool,
) -> Vec<T> {
    let n = rho.len();
    let nf = if periodic { n } else { n - 1 };
    let node = |k: isize| -> Option<T> {
        if periodic {
            Some(rho[k.rem_euclid(n as isize) as usize])
        } else if k >= 0 && (k as usize) < n {
            Some(rho[k as usize])
        } else {
            None
        }
    };
    (0..nf)
        .map(|k| {
            let k = k as isize;
            let a = node(k).unwrap();
            let b = node(k + 1).unwrap();
            let mid = (a + b) * 0.5;
            let forward = vel[k as usize].re() > 0.0;
            let (up, far) = if forward {
                (a, node(k - 1).map(|c| (c + a) * 0.5).unwrap_or(a))
            } else {
                (b, node(k + 2).map(|c| (b + c) * 0.5).unwrap_or(b))
            };
            let nu = switching_nu(up, kappa, gamma);
            mid * (T::cst(1.0) - nu) + far * nu
        })
        .collect()
}

/// Full evaluation: nodes, faces and residual.
pub fn flow_residual_generic<T: Real>(
    phi: &Field2<T>,
    shift: f64,
    grid: &Grid<T>,
    fs: &FreestreamSpec,
    kappa: f64,
) -> Result<FlowEval<T>> {
    let (n, nj) = (grid.ni(), grid.nj());
    if phi.ni() != n || phi.nj() != nj {
        return Err(Error::Dimension {
            expected: n * nj,
            got: phi.ni() * phi.nj(),
        });
    }
    let gamma = fs.gamma;
    let mut nodes = Vec::with_capacity(n * nj);
    for j in 0..nj {
        for i in 0..n {
            nodes.push(nodal(phi, shift, grid, gamma, i, j)?);
        }
    }
    let mut it = nodes.into_iter();
    let nodes = Field2::from_fn(n, nj, |_, _| it.next().unwrap());

    let zero = T::zero();
    let mut f = Field2::filled(n, nj, zero);
    let mut g = Field2::filled(n, nj, zero);
    let mut coef_xi = Field2::filled(n, nj, 0.0);
    let mut coef_eta = Field2::filled(n, nj, 0.0);
    let mut nu_xi = Field2::filled(n, nj, 0.0);
    let mut nu_eta = Field2::filled(n, nj, 0.0);

    let rho_at = |i: isize, j: usize| nodes[(i.rem_euclid(n as isize) as usize, j)].rho;

    for j in 0..nj {
        for i in 0..n {
            let ii = i as isize;
            let a = &nodes[(i, j)];
            let b = &nodes[((i + 1) % n, j)];
            let phx = phi.periodic(ii + 1, j, shift) - phi[(i, j)];
            let phe = (a.phi_eta + b.phi_eta) * 0.5;
            let a1d = (a.metric.a1 * a.det + b.metric.a1 * b.det) * 0.5;
            let a2d = (a.metric.a2 * a.det + b.metric.a2 * b.det) * 0.5;
            let flux = a1d * phx + a2d * phe;
            let mid = (a.rho + b.rho) * 0.5;
            let (up, far) = if flux.re() > 0.0 {
                (a.rho, (rho_at(ii - 1, j) + a.rho) * 0.5)
            } else {
                (b.rho, (b.rho + rho_at(ii + 2, j)) * 0.5)
            };
            let nu = switching_nu(up, kappa, gamma);
            let rt = mid * (T::cst(1.0) - nu) + far * nu;
            f[(i, j)] = rt * flux;
            coef_xi[(i, j)] = rt.re() * a1d.re();
            nu_xi[(i, j)] = nu.re();
        }
    }
    for j in 0..nj - 1 {
        for i in 0..n {
            let a = &nodes[(i, j)];
            let b = &nodes[(i, j + 1)];
            let phe = phi[(i, j + 1)] - phi[(i, j)];
            let phx = (a.phi_xi + b.phi_xi) * 0.5;
            let a2d = (a.metric.a2 * a.det + b.metric.a2 * b.det) * 0.5;
            let a3d = (a.metric.a3 * a.det + b.metric.a3 * b.det) * 0.5;
            let flux = a2d * phx + a3d * phe;
            let mid = (a.rho + b.rho) * 0.5;
            let (up, far) = if flux.re() > 0.0 {
                let far = if j >= 1 {
                    (nodes[(i, j - 1)].rho + a.rho) * 0.5
                } else {
                    a.rho
                };
                (a.rho, far)
            } else {
                let far = if j + 2 < nj {
                    (b.rho + nodes[(i, j + 2)].rho) * 0.5
                } else {
                    b.rho
                };
                (b.rho, far)
            };
            let nu = switching_nu(up, kappa, gamma);
            let rb = mid * (T::cst(1.0) - nu) + far * nu;
            g[(i, j)] = rb * flux;
            coef_eta[(i, j)] = rb.re() * a3d.re();
            nu_eta[(i, j)] = nu.re();
        }
    }

    let mut residual = Field2::filled(n, nj, zero);
    for j in 0..nj - 1 {
        for i in 0..n {
            let im = (i + n - 1) % n;
            let dxi = f[(i, j)] - f[(im, j)];
            residual[(i, j)] = if j == 0 {
                // half cell on the body; the wall face carries no flux
                dxi * 0.5 + g[(i, 0)]
            } else {
                dxi + g[(i, j)] - g[(i, j - 1)]
            };
        }
    }
    Ok(FlowEval {
        nodes,
        faces: FaceData {
            f,
            g,
            coef_xi,
            coef_eta,
            nu_xi,
            nu_eta,
        },
        residual,
    })
}

pub fn evaluate(
    phi: &Field2<f64>,
    shift: f64,
    grid: &Grid,
    fs: &FreestreamSpec,
    kappa: f64,
) -> Result<FlowEval<f64>> {
    flow_residual_generic(phi, shift, grid, fs, kappa)
}

/// Residual field `L(φ)`.
pub fn flow_residual(
    phi: &Field2<f64>,
    shift: f64,
    grid: &Grid,
    fs: &FreestreamSpec,
    kappa: f64,
) -> Result<Field2<f64>> {
    Ok(evaluate(phi, shift, grid, fs, kappa)?.residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowState;
    use crate::geometry::{naca0012_cst, sample_boundary, CstConfig};
    use crate::meshgen::{parabolic_march, FarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Periodic channel: x wraps with a jump, walls at y = 0 and far row at
    /// y = H (Dirichlet).
    fn channel(n: usize, nj: usize) -> Grid {
        let mut g = Grid::from_fn(n, nj, |i, j| (0.3 * i as f64, 0.2 * j as f64 * (1.0 + 0.05 * j as f64)));
        g.shift = [0.3 * n as f64, 0.0];
        g
    }

    #[test]
    fn uniform_flow_in_channel_is_exact() {
        let fs = FreestreamSpec::default();
        let g = channel(12, 8);
        let s = FlowState::freestream(&g, &fs);
        let ev = evaluate(&s.phi, s.shift, &g, &fs, 2.0).unwrap();
        assert!(ev.residual.max_abs() < 1e-14);
        let n = &ev.nodes[(3, 4)];
        // U = ξ_x φ_x relative to the index scaling: φ_ξ = 0.3 U∞, A₁ = 1/0.09
        assert!((n.u * 0.3 - fs.speed()).abs() < 1e-14);
        assert!(n.v.abs() < 1e-15);
    }

    #[test]
    fn constant_potential_has_no_velocity() {
        let fs = FreestreamSpec::default();
        let g = channel(10, 6);
        let phi = Field2::filled(10, 6, 1.7);
        let ev = evaluate(&phi, 0.0, &g, &fs, 2.0).unwrap();
        for nd in ev.nodes.as_slice() {
            assert!(nd.u.abs() < 1e-14 && nd.v.abs() < 1e-14);
            assert!((nd.rho - 1.0).abs() < 1e-15);
        }
        assert!(ev.residual.max_abs() < 1e-14);
    }

    #[test]
    fn subsonic_faces_average_and_constants_are_preserved() {
        let rho = [0.9, 0.95, 0.8, 0.85];
        let vel = [1.0, -1.0, 1.0, 1.0];
        let r = artificial_density_line(&rho, &vel, 2.0, 1.4, true);
        for k in 0..4 {
            assert!((r[k] - 0.5 * (rho[k] + rho[(k + 1) % 4])).abs() < 1e-15);
        }
        let c = [0.3; 5];
        let r = artificial_density_line(&c, &[1.0, -1.0, 1.0, 1.0], 50.0, 1.4, false);
        assert!(r.iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn supersonic_ramp_biases_upstream() {
        // decreasing density below sonic, flow in +i
        let rho: [f64; 4] = [0.6, 0.5, 0.4, 0.3];
        let vel = [1.0; 3];
        let kappa = 2.0;
        let r = artificial_density_line(&rho, &vel, kappa, 1.4, false);
        let c1 = crate::flow::sonic_density(1.4);
        // face 1+½: upwind node 1, upstream half point ρ_{½} = 0.55
        let nu = ((c1 - 0.5) * kappa).clamp(0.0, 1.0);
        let expect = (1.0 - nu) * 0.45 + nu * 0.55;
        assert!((r[1] - expect).abs() < 1e-15);
        assert!(r[1] > 0.45);
        // first face has no upstream half point and falls back to the node
        let nu0 = ((c1 - 0.6) * kappa).clamp(0.0, 1.0);
        assert!((r[0] - ((1.0 - nu0) * 0.55 + nu0 * 0.6)).abs() < 1e-15);
    }

    #[test]
    fn residual_sum_telescopes_to_outer_flux() {
        let fs = FreestreamSpec::default();
        let b = sample_boundary(&naca0012_cst(), &CstConfig::default(), 33).unwrap();
        let g = parabolic_march(&b, &FarField::default(), 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let mut s = FlowState::freestream(&g, &fs);
            for j in 0..g.nj() - 1 {
                for i in 0..g.ni() {
                    s.phi[(i, j)] += 1e-4 * rng.gen_range(-1.0..1.0);
                }
            }
            let ev = evaluate(&s.phi, 0.0, &g, &fs, 2.0).unwrap();
            let total: f64 = ev.residual.as_slice().iter().sum();
            let outer: f64 = (0..g.ni()).map(|i| ev.faces.g[(i, g.nj() - 2)]).sum();
            assert!((total - outer).abs() < 1e-12 * (1.0 + outer.abs()), "{total} vs {outer}");
        }
    }

    #[test]
    fn freestream_on_airfoil_leaves_body_residual() {
        let fs = FreestreamSpec::default();
        let b = sample_boundary(&naca0012_cst(), &CstConfig::default(), 49).unwrap();
        let g = parabolic_march(&b, &FarField::default(), 31).unwrap();
        let s = FlowState::freestream(&g, &fs);
        let ev = evaluate(&s.phi, 0.0, &g, &fs, 2.0).unwrap();
        let near = (0..g.ni()).map(|i| ev.residual[(i, 0)].abs()).fold(0.0, f64::max);
        let far = (0..g.ni()).map(|i| ev.residual[(i, 25)].abs()).fold(0.0, f64::max);
        assert!(near > 1e-3 && near > 10.0 * far, "{near} {far}");
        // the first η-faces carry the tangency violation of the freestream
        assert!((0..g.ni()).any(|i| ev.faces.g[(i, 0)].abs() > 1e-3));
    }
}
