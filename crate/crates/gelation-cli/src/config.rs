//! TOML run configuration. Every block has defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use gelation::coagops::{CoagOps, Kernel, QuadratureSpec};
use gelation::evolution::LinearSolveSpec;
use gelation::gelfix::FixedPointOptions;
use gelation::mellin::MellinOptions;
use gelation::model::{LogGrid, ModelParams};
use gelation::norms::{LocalKind, SpaceKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: ParamsConfig,
    pub grid: GridConfig,
    pub quadrature: QuadratureSpec,
    pub solver: LinearSolveSpec,
    pub contour: MellinOptions,
    pub simulate: SimulateConfig,
    pub construct: FixedPointOptions,
    pub fundsol: FundsolConfig,
    pub norms: NormsConfig,
    pub sweep: SweepConfig,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

/// `lambda` plus optional overrides of the derived defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub lambda: f64,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub delta_bar: Option<f64>,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub b: Option<f64>,
    pub t_horizon: Option<f64>,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig { lambda: 1.5, sigma: None, delta: None, delta_bar: None, d1: None, d2: None, b: None, t_horizon: None }
    }
}

impl ParamsConfig {
    pub fn resolve(&self) -> Result<ModelParams<f64>, CliError> {
        let mut p = ModelParams::with_lambda(self.lambda).map_err(|e| CliError::from_lib(e, "params"))?;
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.sigma, self.sigma);
        set(&mut p.delta, self.delta);
        set(&mut p.delta_bar, self.delta_bar);
        set(&mut p.d1, self.d1);
        set(&mut p.d2, self.d2);
        set(&mut p.b, self.b);
        set(&mut p.t_horizon, self.t_horizon);
        p.validate().map_err(|e| CliError::from_lib(e, "params"))?;
        Ok(p)
    }

    /// Same block with every override filled in from the resolved parameters.
    fn filled(p: &ModelParams<f64>) -> Self {
        ParamsConfig {
            lambda: p.lambda,
            sigma: Some(p.sigma),
            delta: Some(p.delta),
            delta_bar: Some(p.delta_bar),
            d1: Some(p.d1),
            d2: Some(p.d2),
            b: Some(p.b),
            t_horizon: Some(p.t_horizon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { x_min: 1.0 / 64.0, x_max: 16384.0, nodes: 2048 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Arc<LogGrid<f64>>, CliError> {
        LogGrid::new(self.x_min, self.x_max, self.nodes).map(Arc::new).map_err(|e| CliError::from_lib(e, "grid"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelChoice {
    /// `(xy)^{λ/2}` with `params.lambda`
    Power,
    Constant { c: f64 },
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialChoice {
    /// Cut-off power law with the default remainder.
    Model,
    /// Cut-off power law, no remainder.
    ModelNoRemainder,
    /// `D₁ x^{-(3+λ)/2}` on the whole grid.
    PurePower,
    /// `e^{-x}`
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub kernel: KernelChoice,
    pub initial: InitialChoice,
    pub t_end: f64,
    /// Output times, including `t = 0`.
    pub outputs: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { kernel: KernelChoice::Power, initial: InitialChoice::Model, t_end: 0.05, outputs: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FundsolConfig {
    /// Times at which `g(τ, ·, 1)` is tabulated.
    pub taus: Vec<f64>,
    /// Half-width of the `ln x` window.
    pub x_span: f64,
    pub smoothing: f64,
    pub theta_tau_min: f64,
    pub theta_tau_max: f64,
    pub per_decade: usize,
}

impl Default for FundsolConfig {
    fn default() -> Self {
        FundsolConfig { taus: vec![0.5, 1.0, 2.0], x_span: 12.0, smoothing: 0.0, theta_tau_min: 1e-3, theta_tau_max: 10.0, per_decade: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormsConfig {
    /// Trajectory CSV with header `tau,x,f`.
    pub input: Option<PathBuf>,
    pub space: Vec<SpaceKind>,
    pub local: Vec<LocalKind>,
    pub q: f64,
    /// Far-field weight; `p̄` when absent.
    pub p: Option<f64>,
    /// Fractional order; `params.sigma` when absent.
    pub sigma: Option<f64>,
    /// Windows `(t0, R)` for the local functionals.
    pub windows: Vec<(f64, f64)>,
}

impl Default for NormsConfig {
    fn default() -> Self {
        NormsConfig {
            input: None,
            space: vec![SpaceKind::TripleQp, SpaceKind::Xqp],
            local: Vec::new(),
            q: 1.5,
            p: None,
            sigma: None,
            windows: vec![(0.0, 1.0)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Simulate,
    Construct,
    Fundsol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub pipeline: Pipeline,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { lambdas: vec![1.2, 1.5, 1.8], pipeline: Pipeline::Simulate }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config { path, msg: e.into_inner().message().trim().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_toml(&text)
    }

    /// Checks every block and fills in the derived parameters.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let p = self.params.resolve()?;
        self.grid.build()?;
        let q = &self.quadrature;
        if q.panels_per_decade == 0 {
            return Err(CliError::config("quadrature.panels_per_decade", "must be positive"));
        }
        if !(q.singularity_split > 0.0 && q.singularity_split <= 0.5) {
            return Err(CliError::config("quadrature.singularity_split", "must lie in (0, 1/2]"));
        }
        self.solver.validate().map_err(|e| CliError::from_lib(e, "solver"))?;
        self.construct.validate().map_err(|e| CliError::from_lib(e, "construct"))?;
        let s = &self.simulate;
        if !(s.t_end > 0.0 && s.t_end.is_finite()) {
            return Err(CliError::config("simulate.t_end", "must be positive"));
        }
        if s.outputs < 2 {
            return Err(CliError::config("simulate.outputs", "need at least 2 output times"));
        }
        if let KernelChoice::Constant { c } = s.kernel {
            if !(c > 0.0) {
                return Err(CliError::config("simulate.kernel.c", "must be positive"));
            }
        }
        let f = &self.fundsol;
        if f.taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(CliError::config("fundsol.taus", "all times must be positive"));
        }
        if !(f.theta_tau_min > 0.0 && f.theta_tau_max > f.theta_tau_min) {
            return Err(CliError::config("fundsol.theta_tau_min", "need 0 < theta_tau_min < theta_tau_max"));
        }
        if f.per_decade == 0 || !(f.x_span > 0.0) || f.smoothing < 0.0 {
            return Err(CliError::config("fundsol", "per_decade and x_span must be positive, smoothing nonnegative"));
        }
        if !(self.norms.q > 0.0) {
            return Err(CliError::config("norms.q", "must be positive"));
        }
        for (i, l) in self.sweep.lambdas.iter().enumerate() {
            ModelParams::with_lambda(*l).map_err(|e| CliError::from_lib(e, &format!("sweep.lambdas[{i}]")))?;
        }
        let mut out = self.clone();
        out.params = ParamsConfig::filled(&p);
        Ok(out)
    }

    pub fn model_params(&self) -> Result<ModelParams<f64>, CliError> {
        self.params.resolve()
    }

    pub fn ops(&self, kernel: Kernel<f64>) -> Result<CoagOps<f64>, CliError> {
        CoagOps::new(self.grid.build()?, kernel, self.quadrature).map_err(|e| CliError::from_lib(e, "grid"))
    }
}
