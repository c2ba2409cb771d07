//! Scenario files: everything needed to reproduce a run.
//!
//! ```toml
//! name = "suppress_baseline"
//! n = 10
//! horizon = 40
//! seed = 7
//!
//! [model]
//! tau = 4
//! eta = 0          # or "inf"
//! pi = 2
//! gamma = "0"
//! beta = "1/3"
//!
//! [schedule]
//! byzantine = [8, 9]
//! window = { last_sync = 8, length = 2 }
//!
//! [adversary]
//! strategy = "suppress_override"
//! ```
//!
//! An explicit `[schedule]` wins over `[generator]`; with neither, every
//! process is awake and well-behaved in every round.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::checks::{check_all, ModelError, ModelParams, ModelReport, Rational};
use crate::oracle::{evaluate, OracleConfig, OracleReport};
use crate::stats::{run_stats, RunStats};
use crate::types::{ProcessId, ProcessSet, Round};
use crate::world::{
    generate_schedule, run, GeneratorError, GeneratorParams, RoundSpec, RunConfig, Schedule,
    StrategyKind, Trace, WorldError,
};

pub const SEED_ENV: &str = "SLEEPY_TOB_SEED";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelParams<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ExplicitSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSection>,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default)]
    pub oracles: OracleConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    pub strategy: StrategyKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSchedule {
    /// Byzantine from round 0.
    #[serde(default)]
    pub byzantine: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub asleep: Vec<Asleep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corruptions: Vec<Corruption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

/// `pids` sleep in every round of `[from, to]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Asleep {
    pub from: Round,
    pub to: Round,
    pub pids: Vec<u32>,
}

/// `pid` is Byzantine from `round` on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corruption {
    pub round: Round,
    pub pid: u32,
}

/// Rounds `[last_sync + 1, last_sync + length]` are asynchronous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub last_sync: Round,
    pub length: u64,
}

/// Generator knobs not already fixed by `n`, `horizon` and `[model]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_sync: Option<Round>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub byzantine: Option<usize>,
    pub enforce_tau_sleepiness: bool,
    pub violate_async: bool,
    pub sleep_prob: f64,
    pub wake_prob: f64,
}

impl Eq for GeneratorSection {}

impl Default for GeneratorSection {
    fn default() -> Self {
        let d = GeneratorParams::default();
        GeneratorSection {
            last_sync: d.last_sync,
            byzantine: d.byzantine,
            enforce_tau_sleepiness: d.enforce_tau_sleepiness,
            violate_async: d.violate_async,
            sleep_prob: d.sleep_prob,
            wake_prob: d.wake_prob,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {err}")]
    Io { path: String, err: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("domain error: {0}")]
    Domain(ModelError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    World(#[from] WorldError),
}

impl From<ModelError> for ScenarioError {
    fn from(e: ModelError) -> Self {
        ScenarioError::Domain(e)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    pub report: OracleReport,
    pub stats: RunStats,
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        // toml's error rendering carries the line, column and offending key
        toml::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|err| ScenarioError::Io {
            path: path.display().to_string(),
            err,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Seed precedence: `flag`, then `SLEEPY_TOB_SEED`, then the file.
    pub fn with_seed_override(mut self, flag: Option<u64>) -> Result<Self, ScenarioError> {
        if let Some(seed) = flag {
            self.seed = seed;
        } else if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| ScenarioError::Invalid(format!("{SEED_ENV}={v:?} is not a u64")))?;
        }
        Ok(self)
    }

    pub fn generator_params(&self) -> GeneratorParams {
        let g = self.generator.clone().unwrap_or_default();
        GeneratorParams {
            n: self.n,
            horizon: self.horizon,
            tau: self.model.tau,
            gamma: self.model.gamma,
            beta: self.model.beta,
            beta_tilde: self.model.beta_tilde,
            last_sync: g.last_sync,
            pi: self.model.pi,
            byzantine: g.byzantine,
            enforce_tau_sleepiness: g.enforce_tau_sleepiness,
            violate_async: g.violate_async,
            sleep_prob: g.sleep_prob,
            wake_prob: g.wake_prob,
        }
    }

    pub fn build_schedule(&self) -> Result<Schedule, ScenarioError> {
        self.model.validate()?;
        if self.n == 0 || self.horizon == 0 {
            return Err(ScenarioError::Invalid(
                "n and horizon must be positive".into(),
            ));
        }
        match (&self.schedule, &self.generator) {
            (Some(x), _) => self.explicit_schedule(x),
            (None, Some(_)) => Ok(generate_schedule(&self.generator_params(), self.seed)?),
            (None, None) => Ok(Schedule::all_awake(self.n, self.horizon)),
        }
    }

    fn explicit_schedule(&self, x: &ExplicitSchedule) -> Result<Schedule, ScenarioError> {
        let pid = |p: u32| -> Result<ProcessId, ScenarioError> {
            if (p as usize) < self.n {
                Ok(ProcessId(p))
            } else {
                Err(ScenarioError::Invalid(format!(
                    "process {p} out of range for n = {}",
                    self.n
                )))
            }
        };
        let byz0: ProcessSet = x
            .byzantine
            .iter()
            .map(|&p| pid(p))
            .collect::<Result<_, _>>()?;
        for a in &x.asleep {
            for &p in &a.pids {
                pid(p)?;
            }
        }
        for c in &x.corruptions {
            pid(c.pid)?;
        }
        let rounds = (0..self.horizon as Round)
            .map(|r| {
                let mut byzantine = byz0.clone();
                byzantine.extend(
                    x.corruptions
                        .iter()
                        .filter(|c| c.round <= r)
                        .map(|c| ProcessId(c.pid)),
                );
                let honest = (0..self.n as u32)
                    .map(ProcessId)
                    .filter(|p| !byzantine.contains(p))
                    .filter(|p| {
                        !x.asleep
                            .iter()
                            .any(|a| a.from <= r && r <= a.to && a.pids.contains(&p.0))
                    })
                    .collect();
                RoundSpec {
                    honest,
                    byzantine,
                    synchronous: true,
                }
            })
            .collect();
        let s = Schedule { n: self.n, rounds };
        let s = match x.window {
            Some(w) => {
                if w.length > 0 && (w.last_sync + w.length) as usize >= self.horizon {
                    return Err(ScenarioError::Invalid(format!(
                        "window [{}, {}] does not fit in horizon {}",
                        w.last_sync + 1,
                        w.last_sync + w.length,
                        self.horizon
                    )));
                }
                s.with_window(w.last_sync, w.length)
            }
            None => s,
        };
        s.validate().map_err(WorldError::from)?;
        Ok(s)
    }

    /// Model constraints only; the protocol is not run.
    pub fn check(&self) -> Result<(Schedule, ModelReport), ScenarioError> {
        let s = self.build_schedule()?;
        let rep = check_all(&s, &self.model)?;
        Ok((s, rep))
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            scenario: self.name.clone(),
            scenario_hash: self.hash(),
            seed: self.seed,
            model: self.model.clone(),
        }
    }

    pub fn run(&self) -> Result<RunOutcome, ScenarioError> {
        let s = self.build_schedule()?;
        let mut adv = self.adversary.strategy.build();
        let trace = run(&s, adv.as_mut(), &self.run_config())?;
        let report = evaluate(&trace, &self.oracles);
        let stats = run_stats(&trace);
        Ok(RunOutcome {
            trace,
            report,
            stats,
        })
    }
}
