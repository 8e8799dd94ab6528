//! Problem registry, batch drivers and result files behind the command line.

pub mod config;
pub mod output;
pub mod registry;
mod run;
mod train;

use std::path::{Path, PathBuf};

use crate::dg::DgError;
use crate::mesh::MeshError;
use crate::nn::NnError;
use crate::solver::SolverError;
use crate::training::TrainingError;
use crate::viscosity::ViscosityError;

pub use config::{CompareConfig, ConvergenceConfig, MeshGenConfig, ModelSpec, ProblemSet, SolveConfig, TrainRunConfig};
pub use output::{read_csv, read_metric_rows, write_csv, write_json, MetricRow};
pub use registry::{ic_by_id, table_ics, test_case, test_cases, BoundarySpec, CaseDefault, InitialCondition, ReferenceSource, TestCase};
pub use run::{compare, convergence, mesh_gen, solve, CompareRow, CompareSummary, ConvergenceRow, ConvergenceTable, Cumulative, SolveSummary};
pub use train::{build_problems, evaluate_model, train_run, HeldOutRow, TrainSummary};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Registry(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl ExperimentError {
    /// Process exit code: 1 for numerical failures, 2 for usage and setup errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Numerical(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<SolverError> for ExperimentError {
    fn from(e: SolverError) -> Self {
        if e.is_blowup() {
            ExperimentError::Numerical(e.to_string())
        } else {
            ExperimentError::Config(e.to_string())
        }
    }
}

impl From<TrainingError> for ExperimentError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Solver(s) => s.into(),
            TrainingError::AllFailed(_) => ExperimentError::Numerical(e.to_string()),
            e => ExperimentError::Config(e.to_string()),
        }
    }
}

macro_rules! config_error {
    ($($t:ty),*) => {$(
        impl From<$t> for ExperimentError {
            fn from(e: $t) -> Self {
                ExperimentError::Config(e.to_string())
            }
        }
    )*};
}

config_error!(MeshError, DgError, NnError, ViscosityError);

/// Create `dir` and its parents.
pub(crate) fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))
}
