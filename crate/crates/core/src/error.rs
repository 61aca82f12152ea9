use thiserror::Error;

use crate::model::PrimitiveType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
    #[error("primitive sequence is empty")]
    EmptySequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("window [{t}-{k_past}, {t}+{k_future}] does not fit in {len} frames")]
    WindowOutOfRange {
        t: usize,
        k_past: usize,
        k_future: usize,
        len: usize,
    },
    #[error("no termination boundary found for primitive #{index} ({primitive})")]
    BoundaryNotFound { index: usize, primitive: PrimitiveType },
    #[error("trajectory is invalid: {0}")]
    InvalidTrajectory(String),
    #[error("invalid rule for {primitive}: {reason}")]
    InvalidRule { primitive: PrimitiveType, reason: String },
    #[error(transparent)]
    Mcr(#[from] McrError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum McrError {
    #[error("role `{0}` is required by the canonical template but was not bound")]
    MissingRole(String),
    #[error("grid shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("not enough object pairs: segment #{segment} needs pair #{pair}")]
    InsufficientObjects { segment: usize, pair: usize },
    #[error("label {label} exceeds the declared maximum of {max_objects} objects")]
    LabelOutOfRange { label: u8, max_objects: u8 },
    #[error("malformed canonical table: {0}")]
    Table(String),
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("cannot serialize non-finite number")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("library file is malformed: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("embedding header mismatch: {0}")]
    HeaderMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no template rule matches `{0}`")]
    NoTemplateMatch(String),
    #[error("external plan rejected: {0}")]
    PlanRejected(String),
    #[error("reasoner unavailable: {0}")]
    Reasoner(String),
    #[error("no plan could be produced for `{0}`")]
    NoPlan(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    SpecInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwitchError {
    #[error("stream ended while {active} was active; pending: {pending:?}")]
    StreamEnded {
        active: PrimitiveType,
        pending: Vec<PrimitiveType>,
        events: Vec<crate::switcher::SwitchEvent>,
    },
}
