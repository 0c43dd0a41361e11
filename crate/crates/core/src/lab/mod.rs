//! Scenario files, experiment orchestration and run artifacts.

mod config;
mod run;

pub use config::{
    load_scenario, parse_scenario, scenario_hash, BoundarySpec, CoefficientSpec, DiagnosticsSpec, ForcingSpec,
    InterfaceSpec, MeshSpec, Mode, ScenarioConfig, Side, SolverSpec, StackPreset, SweepSpec,
};
pub use run::{
    finite_json, fitted_rate, read_mesh_json, run_scenario, run_stage, write_csv, write_mesh_json, ConvergenceLevel,
    ConvergenceRates, ConvergenceTable, FluxSummary, InterfaceFlux, MeshSummary, RunManifest, RunOptions, RunReport,
    ScenarioSummary, SolverSummary, Stage, ARTIFACTS, TOOL_VERSION,
};

use std::path::PathBuf;

use crate::diagnostics::DiagnosticsError;
use crate::geometry::GeometryError;
use crate::mesh::MeshError;
use crate::solver::SolverError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario key `{key}`: {reason}")]
    Validation { key: String, reason: String },
    #[error("{0} already holds a run; pass --force to replace it")]
    OutputExists(PathBuf),
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("run recorded {} error(s): {}", .0.len(), .0.join("; "))]
    RunFailed(Vec<String>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

impl LabError {
    /// 2 for bad input, 3 for numerical failure, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) | Self::Validation { .. } | Self::OutputExists(_) | Self::Geometry(_) => 2,
            Self::Mesh(MeshError::InvalidParams(_)) => 2,
            Self::Io { .. } | Self::Csv(_) => 1,
            _ => 3,
        }
    }
}
