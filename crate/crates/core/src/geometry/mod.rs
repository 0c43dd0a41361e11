//! Layered interface geometry: graph interfaces, region lookup and the
//! interface-adapted frame fields built from them.

mod frame;
mod interface;
mod selftest;
mod stack;

pub use frame::{
    extended_tangent, frame_at_anchor, frame_from_slopes, frame_jet, orthonormal_frame, raw_slopes,
    raw_tangent, AnchorFrame, AnchorStrips, FrameAtPoint, FrameJet, RawRule,
};
pub use interface::{InterfaceJet, InterfaceShape, Monomial};
pub use selftest::{geometry_selftest, neck_stack, GapMetrics, GeometrySelftestReport, SelftestOptions};
pub use stack::{
    normal_from_gradient, IncidenceKind, InterfaceStack, Projection, RegionIncidence, TOL_IFACE,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("unsupported dimension {0}; expected 2 or 3")]
    UnsupportedDimension(usize),
    #[error("interface {interface} leaves (-1, 1) at x' = {at:?}")]
    OutOfRange { interface: usize, at: Vec<f64> },
    #[error("interfaces {lower} and {upper} cross near x' = {at:?}")]
    OrderingViolation { lower: usize, upper: usize, at: Vec<f64> },
    #[error("interface index {index} out of range 1..={m}")]
    InterfaceIndex { index: usize, m: usize },
    #[error("region index {index} out of range 1..={regions}")]
    RegionIndex { index: usize, regions: usize },
    #[error("tangent index {index} out of range 1..{dim}")]
    TangentIndex { index: usize, dim: usize },
    #[error("point has dimension {got}, stack has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {0:?} is outside the domain")]
    OutsideDomain(Vec<f64>),
    #[error("projection onto interface {interface} from {point:?} hit the bracket edge; widen the bracket")]
    BracketFailure { interface: usize, point: Vec<f64> },
    #[error("strip {strip} has zero gap at x' = {at:?}")]
    TouchingGap { strip: usize, at: Vec<f64> },
    #[error("raw tangents are linearly dependent at {0:?}")]
    DegenerateFrame(Vec<f64>),
}
