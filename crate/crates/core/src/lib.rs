//! Interaction probabilistic movement primitives with EMG-augmented
//! observations: learn per-task distributions over coupled human and robot
//! trajectories, recognize the task from a short human prefix, and generate
//! the robot response by conditioning.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod data;
pub mod error;
pub mod eval;
pub mod interaction;
pub mod phase;
pub mod promp;
pub mod recognition;

pub use basis::BasisSystem;
pub use data::{Channel, Demonstration, ObservationNoise};
pub use error::{Error, Result};
pub use eval::{aggregate, run_eval, Aggregate, EvalCell, EvalConfig, EvalReport};
pub use interaction::{
    ChannelLayout, InteractionModel, ObservedSample, PartialObservation, PosteriorModel, Prediction, Role,
    TrainConfig,
};
pub use phase::{estimate_phase, PhaseEstimate, PhasePrior};
pub use promp::{train_promp, CovFloor, PrompParams};
pub use recognition::{RecognitionResult, TaskLibrary, TaskScore};
