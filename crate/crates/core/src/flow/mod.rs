//! Conservative full-potential flow: residual with artificial density,
//! AF2 relaxation and surface/field post-processing.
//!
//! Velocities are scaled by the critical speed of sound and densities by
//! the stagnation density, so `ρ = 1` at rest and sonic flow has `q = 1`.

mod af2;
mod residual;

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use af2::{af2_iterate, solve_flow, Af2Workspace};
pub use residual::{
    artificial_density_line, evaluate, flow_residual, flow_residual_generic, FaceData, FlowEval,
    NodeState,
};

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::meshgen::{flow_metric_at, Grid};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreestreamSpec {
    pub mach: f64,
    /// Angle of attack in radians.
    pub aoa: f64,
    pub gamma: f64,
}

impl Default for FreestreamSpec {
    fn default() -> Self {
        FreestreamSpec {
            mach: 0.7,
            aoa: 0.0,
            gamma: 1.4,
        }
    }
}

impl FreestreamSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mach > 0.0 && self.mach < 1.0) {
            return Err(Error::Config(format!("Mach number {} outside (0, 1)", self.mach)));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::Config("gamma must exceed 1".into()));
        }
        Ok(())
    }

    pub fn speed(&self) -> f64 {
        freestream_velocity(self.mach, self.gamma)
    }

    /// Density at freestream speed.
    pub fn density(&self) -> f64 {
        let u = self.speed();
        (1.0 - (self.gamma - 1.0) / (self.gamma + 1.0) * u * u).powf(1.0 / (self.gamma - 1.0))
    }

    pub fn pressure(&self) -> f64 {
        pressure(self.density(), self.gamma)
    }
}

/// `U∞ = ((γ+1)/(γ−1+2/M∞²))^½`.
pub fn freestream_velocity(mach: f64, gamma: f64) -> f64 {
    ((gamma + 1.0) / (gamma - 1.0 + 2.0 / (mach * mach))).sqrt()
}

pub fn farfield_potential(x: f64, y: f64, fs: &FreestreamSpec) -> f64 {
    fs.speed() * (x * fs.aoa.cos() + y * fs.aoa.sin())
}

/// Isentropic density from `q² = U φ_ξ + V φ_η`.
pub fn density<T: Real>(q2: T, gamma: f64) -> Result<T> {
    let bracket = T::cst(1.0) - q2 * ((gamma - 1.0) / (gamma + 1.0));
    if !(bracket.re() > 1e-12) {
        return Err(Error::Nonphysical {
            i: 0,
            j: 0,
            bracket: bracket.re(),
        });
    }
    Ok(bracket.powf(1.0 / (gamma - 1.0)))
}

/// Sonic density `(2/(γ+1))^{1/(γ−1)}`.
pub fn sonic_density(gamma: f64) -> f64 {
    (2.0 / (gamma + 1.0)).powf(1.0 / (gamma - 1.0))
}

/// `ν = clip(max(0, (C₁ − ρ) κ), 0, 1)`; the branch is taken on the real part.
pub fn switching_nu<T: Real>(rho: T, kappa: f64, gamma: f64) -> T {
    let v = (T::cst(sonic_density(gamma)) - rho) * kappa;
    if v.re() <= 0.0 {
        T::zero()
    } else if v.re() >= 1.0 {
        T::cst(1.0)
    } else {
        v
    }
}

/// `p = (γ+1)/(2γ) ρ^γ`.
pub fn pressure<T: Real>(rho: T, gamma: f64) -> T {
    rho.powf(gamma) * ((gamma + 1.0) / (2.0 * gamma))
}

pub fn pressure_coefficient<T: Real>(rho: T, fs: &FreestreamSpec) -> T {
    let u = fs.speed();
    let q = 0.5 * fs.density() * u * u;
    (pressure(rho, fs.gamma) - fs.pressure()) / q
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Af2Params {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub cycle: usize,
    pub omega: f64,
    pub beta_subsonic: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Switching gain multiplying `C₁ − ρ`.
    pub kappa: f64,
}

impl Default for Af2Params {
    fn default() -> Self {
        Af2Params {
            alpha_lo: 0.5,
            alpha_hi: 50.0,
            cycle: 8,
            omega: 1.0,
            beta_subsonic: 0.15,
            beta_lo: 0.05,
            beta_hi: 1.0,
            tol: 1e-8,
            max_iters: 20000,
            kappa: 2.0,
        }
    }
}

impl Af2Params {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.alpha_lo,
            self.alpha_hi,
            self.omega,
            self.beta_subsonic,
            self.beta_lo,
            self.beta_hi,
            self.tol,
            self.kappa,
        ];
        if pos.iter().any(|v| !(*v > 0.0)) || self.cycle == 0 {
            return Err(Error::Config("flow solver parameters must be positive".into()));
        }
        if self.alpha_lo > self.alpha_hi {
            return Err(Error::Config("flow alpha_lo > alpha_hi".into()));
        }
        if !(self.beta_lo <= self.beta_subsonic && self.beta_subsonic <= self.beta_hi) {
            return Err(Error::Config("need beta_lo <= beta_subsonic <= beta_hi".into()));
        }
        Ok(())
    }
}

/// Potential over the whole grid, far-field row included.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub phi: Field2<f64>,
    /// Potential jump across the seam (nonzero only for channel tests).
    pub shift: f64,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl FlowState {
    pub fn freestream(grid: &Grid, fs: &FreestreamSpec) -> Self {
        let phi = Field2::from_fn(grid.ni(), grid.nj(), |i, j| {
            farfield_potential(grid.x[(i, j)], grid.y[(i, j)], fs)
        });
        let u = fs.speed();
        FlowState {
            phi,
            shift: u * (grid.shift[0] * fs.aoa.cos() + grid.shift[1] * fs.aoa.sin()),
            converged: false,
            residual: f64::INFINITY,
            iterations: 0,
            history: Vec::new(),
        }
    }

    /// Resets the far-field row to the freestream potential of `grid`.
    pub fn impose_farfield(&mut self, grid: &Grid, fs: &FreestreamSpec) {
        let j = grid.nj() - 1;
        for i in 0..grid.ni() {
            self.phi[(i, j)] = farfield_potential(grid.x[(i, j)], grid.y[(i, j)], fs);
        }
    }
}

/// Physical velocity, density and pressure coefficient at every node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeOutput {
    pub rho: f64,
    pub cp: f64,
    pub vx: f64,
    pub vy: f64,
}

pub fn node_output<T: Real>(n: &NodeState<T>, fs: &FreestreamSpec) -> (T, T, T, T) {
    let m = &n.metric;
    let vx = m.xi_x * n.phi_xi + m.eta_x * n.phi_eta;
    let vy = m.xi_y * n.phi_xi + m.eta_y * n.phi_eta;
    (n.rho, pressure_coefficient(n.rho, fs), vx, vy)
}

pub fn field_output(state: &FlowState, grid: &Grid, fs: &FreestreamSpec) -> Result<Field2<NodeOutput>> {
    let ev = evaluate(&state.phi, state.shift, grid, fs, 2.0)?;
    Ok(ev.nodes.map(|n| {
        let (rho, cp, vx, vy) = node_output(&n, fs);
        NodeOutput { rho, cp, vx, vy }
    }))
}

/// Wall node state computed directly from the local stencil, used for the
/// objective. Wall tangency fixes `φ_η = −A₂ φ_ξ / A₃`.
pub fn wall_cp<T: Real>(phi: &Field2<T>, shift: f64, grid: &Grid<T>, i: usize, fs: &FreestreamSpec) -> Result<T> {
    let m = flow_metric_at(grid, i, 0);
    let ii = i as isize;
    let phi_xi = (phi.periodic(ii + 1, 0, shift) - phi.periodic(ii - 1, 0, shift)) * 0.5;
    let phi_eta = -(m.a2 * phi_xi / m.a3);
    let u = m.a1 * phi_xi + m.a2 * phi_eta;
    let rho = density(u * phi_xi, fs.gamma).map_err(|e| match e {
        Error::Nonphysical { bracket, .. } => Error::Nonphysical { i, j: 0, bracket },
        other => other,
    })?;
    Ok(pressure_coefficient(rho, fs))
}

/// Wall pressure coefficient at every periodic station.
pub fn surface_cp(state: &FlowState, grid: &Grid, fs: &FreestreamSpec) -> Result<Vec<f64>> {
    (0..grid.ni())
        .map(|i| wall_cp(&state.phi, state.shift, grid, i, fs))
        .collect()
}

pub fn write_fields_csv(path: &Path, state: &FlowState, grid: &Grid, fs: &FreestreamSpec) -> Result<()> {
    let out = field_output(state, grid, fs)?;
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "i,j,x,y,rho,cp,vx,vy")?;
    for j in 0..grid.nj() {
        for i in 0..=grid.ni() {
            let k = i % grid.ni();
            let (x, y) = grid.export_point(i, j);
            let o = out[(k, j)];
            writeln!(
                f,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                i + 1,
                j + 1,
                x,
                y,
                o.rho,
                o.cp,
                o.vx,
                o.vy
            )?;
        }
    }
    Ok(())
}
