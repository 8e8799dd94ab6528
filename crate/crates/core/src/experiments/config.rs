//! TOML run descriptions. Every field except the case id has a default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::solver::Integrator;
use crate::training::{LossConfig, TrainConfig, OVERKILL_LEVELS};
use crate::viscosity::EvConfig;

use super::ExperimentError;

/// Viscosity model named on the command line or in a config:
/// `none`, `ev`, `ev:<c_k>:<c_max>`, `nn:<checkpoint>` or `nn:<checkpoint>:<c_max>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    None,
    /// Entropy viscosity; missing constants come from the test case.
    Ev { c_k: Option<f64>, c_max: Option<f64> },
    Nn { checkpoint: PathBuf, c_max: Option<f64> },
}

const MODEL_HELP: &str = "known models: none, ev, ev:<c_k>:<c_max>, nn:<checkpoint>, nn:<checkpoint>:<c_max>";

impl FromStr for ModelSpec {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExperimentError::Registry(format!("unknown model '{s}'; {MODEL_HELP}"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["none"] => Ok(ModelSpec::None),
            ["ev"] => Ok(ModelSpec::Ev { c_k: None, c_max: None }),
            ["ev", a, b] => Ok(ModelSpec::Ev {
                c_k: Some(num(a)?),
                c_max: Some(num(b)?),
            }),
            ["nn", p] if !p.is_empty() => Ok(ModelSpec::Nn {
                checkpoint: PathBuf::from(p),
                c_max: None,
            }),
            ["nn", p, c] if !p.is_empty() => Ok(ModelSpec::Nn {
                checkpoint: PathBuf::from(p),
                c_max: Some(num(c)?),
            }),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = ExperimentError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::None => write!(f, "none"),
            ModelSpec::Ev { c_k: Some(a), c_max: Some(b) } => write!(f, "ev:{a}:{b}"),
            ModelSpec::Ev { .. } => write!(f, "ev"),
            ModelSpec::Nn { checkpoint, c_max: None } => write!(f, "nn:{}", checkpoint.display()),
            ModelSpec::Nn { checkpoint, c_max: Some(c) } => write!(f, "nn:{}:{c}", checkpoint.display()),
        }
    }
}

/// `solve`: one run of a registered test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub case: u32,
    #[serde(default = "one")]
    pub k: usize,
    /// Cells per direction; the case default for `k` when absent.
    pub n: Option<usize>,
    pub cfl: Option<f64>,
    pub t_final: Option<f64>,
    /// Mesh file replacing the generated mesh.
    pub mesh: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    /// Refinements of the overkill reference; 0 disables it.
    #[serde(default = "levels")]
    pub reference_levels: usize,
    /// Step with a fixed `dt` derived from the viscosity cap instead of adaptive CFL.
    #[serde(default)]
    pub fixed_dt: bool,
    /// Solution and viscosity fields are written every this many steps (and at the end).
    #[serde(default = "every")]
    pub field_every: usize,
}

/// `convergence`: L2 errors under refinement for a smooth case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default = "one_u32")]
    pub case: u32,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Cells per direction on the coarsest mesh.
    #[serde(default = "ten")]
    pub n0: usize,
    pub cfl: Option<f64>,
    pub t_final: Option<f64>,
    #[serde(default = "rk4")]
    pub integrator: Integrator,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
}

/// `compare`: several viscosity models on the same discretization and steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub case: u32,
    #[serde(default = "one")]
    pub k: usize,
    pub n: Option<usize>,
    pub cfl: Option<f64>,
    pub t_final: Option<f64>,
    pub mesh: Option<PathBuf>,
    pub models: Vec<ModelSpec>,
    #[serde(default = "levels")]
    pub reference_levels: usize,
}

/// Cartesian product of training problems on the unit interval or square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSet {
    /// Registry ids of the initial conditions.
    pub ics: Vec<String>,
    /// Flux ids, e.g. `advection1d`, `burgers1d`, `euler1d`.
    pub fluxes: Vec<String>,
    /// Cells per direction.
    pub cells: Vec<usize>,
    pub ks: Vec<usize>,
    #[serde(default = "half")]
    pub cfl: f64,
    /// Cap of the neural viscosity.
    #[serde(default = "half")]
    pub c_max: f64,
    pub n_steps: usize,
    /// Entropy viscosity for overkill references and the baseline of held-out problems.
    #[serde(default)]
    pub ev: EvConfig,
    #[serde(default = "levels")]
    pub levels: usize,
}

/// `train`: pre-training plus the main loop, then a held-out comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub problems: Vec<ProblemSet>,
    #[serde(default)]
    pub test: Vec<ProblemSet>,
    #[serde(default)]
    pub held_out: Vec<ProblemSet>,
    /// Hidden layer widths; the default network when absent.
    pub hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub net_seed: u64,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub skip_multistep: bool,
    /// Continue from this checkpoint instead of a fresh network.
    pub resume: Option<PathBuf>,
}

/// `mesh-gen`: a structured mesh written in the mesh text format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshGenConfig {
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub lo: [f64; 2],
    #[serde(default = "unit")]
    pub hi: [f64; 2],
    #[serde(default = "ten")]
    pub n: usize,
    pub ny: Option<usize>,
    #[serde(default = "yes")]
    pub periodic: bool,
    #[serde(default)]
    pub refine: usize,
}

impl Default for MeshGenConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            lo: [0.0; 2],
            hi: unit(),
            n: 10,
            ny: None,
            periodic: true,
            refine: 0,
        }
    }
}

fn one() -> usize {
    1
}
fn one_u32() -> u32 {
    1
}
fn ten() -> usize {
    10
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn unit() -> [f64; 2] {
    [1.0, 1.0]
}
fn levels() -> usize {
    OVERKILL_LEVELS
}
fn every() -> usize {
    10
}
fn default_ks() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_levels() -> usize {
    4
}
fn rk4() -> Integrator {
    Integrator::Lserk45
}
fn default_model() -> ModelSpec {
    ModelSpec::None
}

/// Parse a TOML config file.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    parse(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, ExperimentError> {
    toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
}
