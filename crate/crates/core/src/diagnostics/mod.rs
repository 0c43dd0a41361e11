//! Regularity measurements on computed fields: Hölder seminorms, oscillation
//! decay, time quotients, corrected flux data and gap sweeps.

mod campanato;
mod fields;
mod holder;
mod norms;
mod sweep;

pub use campanato::{
    campanato_phi, decay_fit, half_power_deviation, phi_from_samples, piecewise_const_project,
    projection_decay, ball_samples, DecayFit, PiecewiseProjection, ProjectionDecay,
};
pub use fields::{
    corrected_flux_data, CorrectedFlux, DirectionalFields, FieldJumps, FnGradient, GradientSource,
    RecoveredGradient,
};
pub use holder::{
    holder_seminorm, parabolic_distance, time_quotient, Metric, ParabolicPoint, SampleDomain,
    SeminormEstimate, SeminormRequest, TimeQuotient, VectorSampler,
};
pub use norms::{
    piecewise_norm_table, DecayRecord, NormTable, NormTableOptions, Provenance, RegionNorms,
    RegularityReport, Window,
};
pub use sweep::{gap_sweep, neck_layers, GapSweepSpec, SweepRow, SweepTable};

use crate::geometry::GeometryError;
use crate::mesh::MeshError;
use crate::solver::SolverError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no sample points fell inside the requested set")]
    EmptySample,
    #[error("decay fit needs at least 3 positive records, got {usable}")]
    TooFewRecords { usable: usize },
    #[error("time level {t} - {h} lies before the solved range starting at {start}")]
    TimeOutOfRange { t: f64, h: f64, start: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}
