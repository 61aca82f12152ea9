//! Primitive-level tooling for robot manipulation demonstrations.
//!
//! * [`segmenter`] splits recorded trajectories into primitive segments
//!   using windowed termination criteria.
//! * [`switcher`] applies the causal form of the same criteria to a live
//!   frame stream and decides when to advance to the next primitive.
//! * [`mcr`] maps primitives to canonical instructions and masks
//!   observations down to the objects a primitive acts on.
//! * [`library`] and [`planner`] turn an instruction into a primitive plan
//!   by retrieval, an optional external reasoner, or keyword templates.
//! * [`synth`] renders synthetic demonstrations with exact boundaries.

pub mod config;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod library;
pub mod mcr;
pub mod model;
pub mod planner;
pub mod segmenter;
pub mod switcher;
pub mod synth;

pub use error::{FormatError, LibraryError, McrError, ModelError, PlanError, SegmentError, SwitchError, SynthError};
pub use model::{
    parse_primitive, validate_trajectory, ActionDelta, Frame, PrimitiveSequence, PrimitiveType, ProprioState, Segment,
    SequenceItem, Trajectory, ValidationReport, Violation,
};
