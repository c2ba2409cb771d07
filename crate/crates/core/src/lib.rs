//! Asynchrony-resilient total-order broadcast for the sleepy model.
//!
//! The crate holds the protocol (graded agreement with vote expiration and the
//! per-process broadcast state machine), a deterministic round-based
//! simulator with adversarial schedules, validators for the participation
//! constraints, and trace oracles for the safety and liveness properties.

pub mod campaign;
pub mod checks;
pub mod ga;
pub mod oracle;
pub mod scenario;
pub mod stats;
pub mod sweep;
pub mod tob;
pub mod types;
pub mod vrf;
pub mod world;

mod serde_pairs;

pub use checks::{ModelParams, Rational, Scalar};
pub use ga::{GaOutput, GaRecord, Grade, InitialVoteSet};
pub use types::{
    compatible, is_prefix, longest_common_prefix, Log, Message, ProcessId, ProcessSet, ProposeMsg,
    Recipients, Round, Value, View, VoteMsg,
};
pub use vrf::{vrf_eval, vrf_verify, VrfTag};
