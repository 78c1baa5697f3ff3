//! Fixed-confidence identification of the best policy from noisy pairwise
//! preference comparisons.
//!
//! The crate covers unstructured preference matrices and Bradley-Terry
//! models over policy features: optimal designs, GLR stopping, the adaptive
//! track-and-stop engine, five benchmark samplers and a replication harness.

pub mod allocation;
pub mod baselines;
pub mod bench;
pub mod design;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod instances;
pub mod judge;
pub mod ledger;
pub mod linalg;
pub mod rng;
pub mod sampler;
pub mod unstructured;

pub use allocation::Allocation;
pub use error::{Error, Result};
pub use instances::{Instance, PairIndex, PreferenceInstance, StructuredModel};
pub use judge::{Judge, JudgeError};
pub use ledger::{ComparisonRecord, TrialLedger};
pub use rng::RngState;
pub use sampler::{ExperimentConfig, ExperimentOutcome, Method};
pub use unstructured::ThresholdMode;
