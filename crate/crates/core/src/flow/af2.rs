//! AF2 approximate-factorization relaxation of `L(φ) = 0`.
//!
//! Step 1 solves `(α − δ⃗η A_j) f = α ω L` along each `η` line (upper
//! bidiagonal, swept from the far field to the body). Step 2 solves
//! `(α δ̄η − δ̄ξ A_i δ⃗ξ ± α β δξ) C = f` as one periodic tridiagonal system
//! per `j` row, swept outward from the body. The `β` term is upwinded with
//! the local contravariant velocity so it always adds to the diagonal.

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::linsolve::solve_periodic_tridiagonal;
use crate::meshgen::{alpha_cycle, flow_metrics, Grid};

use super::residual::evaluate;
use super::{Af2Params, FlowState, FreestreamSpec};

/// Iteration state carried between AF2 steps.
#[derive(Clone, Debug)]
pub struct Af2Workspace {
    pub alphas: Vec<f64>,
    pub step: usize,
    pub beta: f64,
    last: f64,
}

impl Af2Workspace {
    pub fn new(p: &Af2Params) -> Self {
        Af2Workspace {
            alphas: alpha_cycle(p.alpha_lo, p.alpha_hi, p.cycle),
            step: 0,
            beta: p.beta_subsonic,
            last: f64::INFINITY,
        }
    }
}

/// One AF2 step on `state`. Returns `max |L(φⁿ)|` over the active rows,
/// evaluated before the update.
pub fn af2_iterate(
    state: &mut FlowState,
    grid: &Grid,
    fs: &FreestreamSpec,
    p: &Af2Params,
    ws: &mut Af2Workspace,
) -> Result<f64> {
    let (n, nj) = (grid.ni(), grid.nj());
    let ev = evaluate(&state.phi, state.shift, grid, fs, p.kappa)?;
    let mut res = 0.0f64;
    for j in 0..nj - 1 {
        for v in ev.residual.row(j) {
            res = res.max(v.abs());
        }
    }
    if !res.is_finite() {
        return Err(Error::Divergence {
            solver: "AF2",
            iteration: ws.step,
            residual: res,
        });
    }
    if res <= p.tol {
        return Ok(res);
    }
    let supersonic = ev.faces.nu_xi.as_slice().iter().any(|&v| v > 0.0)
        || ev.faces.nu_eta.as_slice().iter().any(|&v| v > 0.0);
    if supersonic {
        let fac = if res > ws.last { 1.05 } else { 0.98 };
        ws.beta = (ws.beta * fac).clamp(p.beta_lo, p.beta_hi);
    } else {
        ws.beta = p.beta_subsonic;
    }
    ws.last = res;
    let alpha = ws.alphas[ws.step % ws.alphas.len()];
    ws.step += 1;
    let beta = ws.beta;
    let aj = &ev.faces.coef_eta;
    let ai = &ev.faces.coef_xi;

    // step 1
    let mut f = Field2::filled(n, nj, 0.0);
    for i in 0..n {
        for j in (0..nj - 1).rev() {
            let below = if j == 0 { 0.0 } else { aj[(i, j - 1)] };
            f[(i, j)] = (alpha * p.omega * ev.residual[(i, j)] + aj[(i, j)] * f[(i, j + 1)])
                / (alpha + below);
        }
    }

    // step 2
    let mut c = Field2::filled(n, nj, 0.0);
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for j in 0..nj - 1 {
        let w = if j == 0 { 0.5 } else { 1.0 };
        for i in 0..n {
            let im = (i + n - 1) % n;
            let (ap, am) = (ai[(i, j)], ai[(im, j)]);
            let ab = alpha * beta;
            let forward = ev.nodes[(i, j)].u > 0.0;
            sub[i] = -w * am - if forward { ab } else { 0.0 };
            sup[i] = -w * ap - if forward { 0.0 } else { ab };
            diag[i] = alpha + w * (ap + am) + ab;
            let prev = if j == 0 { 0.0 } else { c[(i, j - 1)] };
            rhs[i] = f[(i, j)] + alpha * prev;
        }
        let row = solve_periodic_tridiagonal(&sub, &diag, &sup, &rhs)?;
        c.row_mut(j).copy_from_slice(&row);
    }
    for j in 0..nj - 1 {
        for i in 0..n {
            state.phi[(i, j)] += c[(i, j)];
        }
    }
    Ok(res)
}

/// Runs AF2 to `max |L| ≤ tol`. `init` warm-starts from a previous state
/// (its far-field row is reset to the freestream of `grid`).
pub fn solve_flow(
    grid: &Grid,
    fs: &FreestreamSpec,
    p: &Af2Params,
    init: Option<&FlowState>,
) -> Result<FlowState> {
    fs.validate()?;
    p.validate()?;
    flow_metrics(grid)?;
    let mut state = match init {
        Some(s) if s.phi.ni() == grid.ni() && s.phi.nj() == grid.nj() => {
            let mut s = s.clone();
            s.impose_farfield(grid, fs);
            s.history.clear();
            s
        }
        _ => FlowState::freestream(grid, fs),
    };
    let mut ws = Af2Workspace::new(p);
    let cyc = ws.alphas.len();
    let mut best_cycle = f64::INFINITY;
    for it in 0..=p.max_iters {
        let res = af2_iterate(&mut state, grid, fs, p, &mut ws)?;
        state.history.push(res);
        state.residual = res;
        state.iterations = it;
        if res <= p.tol {
            state.converged = true;
            return Ok(state);
        }
        if it % cyc == 0 {
            if res > 10.0 * best_cycle {
                return Err(Error::Divergence {
                    solver: "AF2",
                    iteration: it,
                    residual: res,
                });
            }
            best_cycle = best_cycle.min(res);
        }
    }
    Err(Error::NonConvergence {
        solver: "AF2",
        iterations: p.max_iters,
        residual: state.residual,
        history: state.history,
    })
}
