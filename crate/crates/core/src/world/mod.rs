//! The sleepy-model environment: schedules, adversaries, the round loop and
//! its traces.

pub mod adversary;
pub mod generator;
pub mod schedule;
pub mod sim;
pub mod trace;

pub use adversary::{Adversary, AdversaryView, Envelope, Outgoing, StrategyKind};
pub use generator::{generate_schedule, GeneratorError, GeneratorParams};
pub use schedule::{AsyncWindow, RoundSpec, Schedule, ScheduleError};
pub use sim::{run, RunConfig, WorldError};
pub use trace::{Decision, Event, EventBody, MsgId, Trace, TraceHeader};
