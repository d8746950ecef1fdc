//! Collar-aware training objective, boundary detection and collar-based
//! evaluation for speaker change detection.

pub mod detection;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod losses;
pub mod math;
pub mod model;
pub mod synth;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    ChangePointSet, ChangePointTimes, CollarConfig, CollarSemantics, EdgePolicy,
    FrameScoreSequence, LabelSequence,
};
