//! Run configuration: a TOML tree layered over built-in defaults, with
//! `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::AuditConfig;
use crate::descent::DemoConfig;
use crate::error::{Error, Result};
use crate::flow::{Af2Params, FreestreamSpec};
use crate::geometry::CstConfig;
use crate::meshgen::{EllipticParams, FarField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSize {
    /// Exported circumferential points, trailing edge counted twice.
    pub i_max: usize,
    pub j_max: usize,
}

impl Default for GridSize {
    fn default() -> Self {
        GridSize { i_max: 49, j_max: 31 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjointSettings {
    pub tol: f64,
}

impl Default for AdjointSettings {
    fn default() -> Self {
        AdjointSettings { tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Fixed,
    Armijo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub rule: StepKind,
    pub step: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Magnitude of the seeded sign perturbation applied to the start design.
    pub perturbation: f64,
    pub seed: u64,
    /// Start design file (one whitespace-separated row); overrides the
    /// perturbed NACA 0012 start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<PathBuf>,
    pub armijo_t0: f64,
    pub armijo_theta: f64,
    pub armijo_sigma: f64,
    pub armijo_max_backtracks: usize,
    /// Initialize mesh smoothing and flow solve from the previous iterate.
    pub warm_start: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            rule: StepKind::Fixed,
            step: 2e-3,
            max_iters: 1000,
            grad_tol: 1e-4,
            perturbation: 5e-3,
            seed: 2024,
            start: None,
            armijo_t0: 0.05,
            armijo_theta: 0.5,
            armijo_sigma: 1e-4,
            armijo_max_backtracks: 60,
            warm_start: true,
        }
    }
}

/// Finite-difference gradient check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSettings {
    /// Candidate steps, decreasing; with more than one, each component uses
    /// the smaller step of the consecutive pair whose estimates agree best.
    pub steps: Vec<f64>,
    pub mesh_tol: f64,
    pub flow_tol: f64,
    pub designs: usize,
    pub seed: u64,
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            steps: vec![1e-4, 3e-5, 1e-5],
            mesh_tol: 1e-13,
            flow_tol: 1e-13,
            designs: 3,
            seed: 11,
            rel_tol: 1e-4,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSettings {
    /// CSV with columns `station,cp`; computed from NACA 0012 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSize,
    pub cst: CstConfig,
    pub farfield: FarField,
    pub freestream: FreestreamSpec,
    pub mesh: EllipticParams,
    pub flow: Af2Params,
    pub adjoint: AdjointSettings,
    pub optimizer: OptimizerSettings,
    pub check: CheckSettings,
    pub reference: ReferenceSettings,
    pub bounds: AuditConfig,
    pub descent: DemoConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.i_max < 7 || self.grid.i_max % 2 == 0 {
            return Err(Error::Config(format!("grid.i_max = {} must be odd and >= 7", self.grid.i_max)));
        }
        if self.grid.j_max < 3 {
            return Err(Error::Config("grid.j_max must be >= 3".into()));
        }
        self.cst.validate()?;
        self.farfield.validate(self.cst.chord)?;
        self.freestream.validate()?;
        self.mesh.validate()?;
        self.flow.validate()?;
        if !(self.adjoint.tol > 0.0) {
            return Err(Error::Config("adjoint.tol must be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.step > 0.0 && o.grad_tol >= 0.0 && o.perturbation >= 0.0) {
            return Err(Error::Config("optimizer step, grad_tol and perturbation must be nonnegative".into()));
        }
        if !(o.armijo_t0 > 0.0 && o.armijo_theta > 0.0 && o.armijo_theta < 1.0 && o.armijo_sigma > 0.0) {
            return Err(Error::Config("armijo needs t0 > 0, theta in (0, 1), sigma > 0".into()));
        }
        let c = &self.check;
        if c.steps.is_empty() || c.steps.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("check.steps must be nonempty and positive".into()));
        }
        self.bounds.validate()?;
        self.descent.validate()?;
        Ok(())
    }

    /// Defaults, then the file at `path` (if any), then the overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = toml::Value::try_from(RunConfig::default())
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)?;
            let file: toml::Value = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            merge(&mut tree, file);
        }
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: RunConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`. The value is read as a TOML literal, falling
/// back to a bare string.
pub fn apply_override(tree: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut node = tree;
    for (k, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not a section")))?;
        if k + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(Error::Config(format!("empty override key in `{spec}`")))
}
