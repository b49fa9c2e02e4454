//! Diffusion posterior sampling for linear inverse problems with
//! noise-scheduled frequency continuation.
//!
//! Each outer step denoises the current iterate with a short probability-flow
//! solve, refines it with Langevin dynamics against a band-limited likelihood,
//! fuses the two in the Haar domain and re-noises to the next level.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod forward_ops;
pub mod grid;
pub mod haar;
pub mod io;
pub mod prior;
pub mod sampler;
pub mod schedules;
pub mod spectral;
pub mod synthetic;

pub use error::{NfcError, Result};
pub use forward_ops::{degrade, LinearOperator, Measurement, OperatorKind};
pub use grid::{ImageTensor, SeededRng, Shape};
pub use prior::{ScoreModel, SolverConfig};
pub use sampler::{AblationMode, RunRecord, Sampler, SamplerConfig, StepRecord};
pub use schedules::{ContinuationState, ScheduleConfig};
