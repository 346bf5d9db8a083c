//! Self-stabilizing estimation of an unknown qubit precession rate.
//!
//! A qubit precesses about a known axis `G` at an unknown rate `φ` while
//! being weakly and continuously measured. The measurement axis is steered to
//! keep the state pure, and a bank of hypothesis filters turns the record into
//! a posterior over `φ`.

// `!(x > 0.0)` is used on purpose: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod cli_io;
pub mod error;
pub mod feedback;
pub mod noise;
pub mod protocol;
pub mod qubit;
pub mod sme;

pub use bayes::{HypothesisBank, PhaseEstimate, PhaseGrid, Posterior};
pub use error::{Error, Result};
pub use feedback::{plan_block, purification_axis, track_purification, MeasurementSchedule};
pub use noise::NoiseModel;
pub use protocol::{run, run_ensemble, EnsembleSummary, ProtocolConfig, ProtocolResult, Termination};
pub use qubit::{cramer_rao_bound, linear_entropy, qfi, Bloch, Operator, PauliAxis, QubitState};
pub use sme::{MeasurementOp, SimConfig, TrajectoryRecord};
