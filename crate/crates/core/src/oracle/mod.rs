//! Post-hoc checks over run traces.
//!
//! Everything here reads a [`Trace`] and nothing else. Graded-agreement
//! outputs are re-derived from the send and delivery events with a separate,
//! deliberately naive implementation so that a bug in [`crate::ga`] or
//! [`crate::tob`] cannot hide itself.

mod ga_props;
mod integrity;
mod props;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::checks::{self, ModelParams, Rational};
use crate::ga::GaOutput;
use crate::types::{Log, ProcessId, Round};
use crate::world::schedule::{AsyncWindow, Schedule};
use crate::world::trace::{Decision, Trace};

pub use ga_props::{check_ga_properties, naive_grade, GaChecks};
pub use integrity::{check_tally_equivalence, check_trace_integrity};
pub use props::{
    check_async_resilience, check_clique_persistence, check_decided_implies_voted, check_healing,
    check_liveness_after, check_liveness_throughout, check_safety_after, healing_round, Healing,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { witness: Witness },
    NotApplicable { reason: String },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn na(reason: impl Into<String>) -> Self {
        Verdict::NotApplicable {
            reason: reason.into(),
        }
    }

    pub fn inconclusive(reason: impl Into<String>) -> Self {
        Verdict::Inconclusive {
            reason: reason.into(),
        }
    }

    pub fn fail(witness: Witness) -> Self {
        Verdict::Fail { witness }
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }

    pub fn is_applicable(&self) -> bool {
        !matches!(self, Verdict::NotApplicable { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Fail { witness } => Some(witness),
            _ => None,
        }
    }

    /// First failure wins, then any pass, then any inconclusive.
    pub fn fold<I: IntoIterator<Item = Verdict>>(verdicts: I, empty_reason: &str) -> Verdict {
        let mut seen_pass = false;
        let mut inconclusive = None;
        let mut na = None;
        for v in verdicts {
            match v {
                Verdict::Fail { .. } => return v,
                Verdict::Pass => seen_pass = true,
                Verdict::Inconclusive { .. } => {
                    inconclusive.get_or_insert(v);
                }
                Verdict::NotApplicable { .. } => {
                    na.get_or_insert(v);
                }
            }
        }
        if seen_pass {
            Verdict::Pass
        } else if let Some(v) = inconclusive {
            v
        } else {
            na.unwrap_or_else(|| Verdict::na(empty_reason))
        }
    }
}

/// Evidence attached to a failed check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Two well-behaved decisions on conflicting logs.
    Conflict { first: Decision, second: Decision },
    /// A well-behaved process awake throughout `[from, to]` delivered no new
    /// well-behaved value.
    NoProgress {
        pid: ProcessId,
        from: Round,
        to: Round,
        delivered: Log,
    },
    /// A graded-agreement property broken at `round`.
    Ga {
        round: Round,
        property: String,
        receiver: Option<ProcessId>,
        log: Log,
        detail: String,
    },
    /// The recorded output differs from the one recomputed from deliveries.
    Tally {
        round: Round,
        receiver: ProcessId,
        recomputed: GaOutput,
        recorded: GaOutput,
    },
    /// A well-behaved vote that does not extend a log it was bound to.
    Vote {
        round: Round,
        pid: ProcessId,
        log: Log,
        required: Log,
        since: Round,
    },
    /// Structural problem with the trace itself.
    Malformed { round: Round, detail: String },
}

/// A verdict plus whether the hypotheses of the property held for the run.
///
/// A failure with `hypotheses_hold` set on a deterministic property is a
/// counterexample; probabilistic liveness failures never are.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub hypotheses_hold: bool,
    pub probabilistic: bool,
}

impl CheckResult {
    fn deterministic(verdict: Verdict, hypotheses_hold: bool) -> Self {
        CheckResult {
            verdict,
            hypotheses_hold,
            probabilistic: false,
        }
    }

    fn probabilistic(verdict: Verdict, hypotheses_hold: bool) -> Self {
        CheckResult {
            verdict,
            hypotheses_hold,
            probabilistic: true,
        }
    }

    pub fn is_counterexample(&self) -> bool {
        self.verdict.is_fail() && self.hypotheses_hold && !self.probabilistic
    }
}

/// Which checks to run and the liveness measurement window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub ga: bool,
    pub safety: bool,
    pub liveness: bool,
    pub async_resilience: bool,
    pub healing: bool,
    pub vote_locking: bool,
    /// Rounds a continuously awake process is given to deliver a new value.
    pub liveness_window: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            ga: true,
            safety: true,
            liveness: true,
            async_resilience: true,
            healing: true,
            vote_locking: true,
            liveness_window: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFailure {
    pub check: String,
    pub round: Round,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Every participation constraint of the model held.
    pub in_model: bool,
    pub model_failures: Vec<ModelFailure>,
    pub checks: BTreeMap<String, CheckResult>,
}

impl OracleReport {
    /// No applicable check failed.
    pub fn passed(&self) -> bool {
        self.checks.values().all(|c| !c.verdict.is_fail())
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &CheckResult)> {
        self.checks
            .iter()
            .filter(|(_, c)| c.verdict.is_fail())
            .map(|(k, c)| (k.as_str(), c))
    }

    pub fn counterexamples(&self) -> impl Iterator<Item = (&str, &CheckResult)> {
        self.failures().filter(|(_, c)| c.is_counterexample())
    }

    pub fn get(&self, name: &str) -> Option<&Verdict> {
        self.checks.get(name).map(|c| &c.verdict)
    }
}

/// `|H_r| > 2/3·|S_{r−η,r}|` for every round in `rounds`. `η = ∞` looks back
/// to round 0.
pub fn eta_sleepy(s: &Schedule, params: &ModelParams<Rational>, rounds: &[Round]) -> bool {
    rounds.iter().all(|&r| {
        let lo = params.eta.window_start(r) as i64;
        3 * s.honest(r).len() > 2 * s.awake_union(lo, r as i64).len()
    })
}

/// Both asynchrony conditions for a single window, measured against the
/// expiration window `S_{r−η,r}`.
pub fn window_conditions(s: &Schedule, params: &ModelParams<Rational>) -> bool {
    let AsyncWindow::Single { last_sync, length } = s.async_window() else {
        return false;
    };
    let before = s.honest(last_sync);
    let last_round = s.horizon() as Round - 1;
    let contained = last_sync + 1 > last_round || before.is_subset(s.honest(last_sync + 1));
    contained
        && (last_sync + 1..=(last_sync + length + 1).min(last_round)).all(|r| {
            let lo = params.eta.window_start(r) as i64;
            let kept = before.difference(s.byzantine(r)).count();
            3 * kept > 2 * s.awake_union(lo, r as i64).len()
        })
}

/// Runs every enabled check over `trace`. Model parameters come from the
/// trace header.
pub fn evaluate(trace: &Trace, cfg: &OracleConfig) -> OracleReport {
    let s = trace.schedule();
    let params = &trace.header.model;
    let horizon = s.horizon() as Round;
    let all_rounds: Vec<Round> = (0..horizon).collect();
    let sync_rounds: Vec<Round> = all_rounds
        .iter()
        .copied()
        .filter(|&r| s.is_sync(r))
        .collect();

    let (in_model, model_failures) = match checks::check_all(s, params) {
        Ok(rep) => (
            rep.all_hold(),
            rep.failures()
                .into_iter()
                .map(|(check, round)| ModelFailure {
                    check: check.into(),
                    round,
                })
                .collect(),
        ),
        Err(e) => (
            false,
            vec![ModelFailure {
                check: format!("params: {e}"),
                round: 0,
            }],
        ),
    };

    let window = s.async_window();
    let sleepy = eta_sleepy(s, params, &sync_rounds);
    let resilient_setting = match &window {
        AsyncWindow::None => true,
        AsyncWindow::Single { length, .. } => {
            params.eta.exceeds(*length) && *length < params.tau && window_conditions(s, params)
        }
        AsyncWindow::Multiple { .. } => false,
    };
    let w = cfg.liveness_window;

    let mut checks = BTreeMap::new();
    checks.insert(
        "trace_integrity".to_string(),
        CheckResult::deterministic(check_trace_integrity(trace), true),
    );

    if cfg.ga {
        checks.insert(
            "ga_tally_equivalence".into(),
            CheckResult::deterministic(check_tally_equivalence(trace), true),
        );
        let per_record: Vec<GaChecks> = trace
            .ga_records()
            .map(|rec| {
                let mut awake = s.awake(rec.round);
                awake.extend(rec.byzantine.iter().copied());
                check_ga_properties(rec, &awake)
            })
            .collect();
        for (name, pick) in GaChecks::NAMES {
            let v = Verdict::fold(
                per_record.iter().map(|g| pick(g).clone()),
                "no graded-agreement instance met its hypotheses",
            );
            checks.insert(format!("ga_{name}"), CheckResult::deterministic(v, true));
        }
    }

    if cfg.safety {
        checks.insert(
            "safety".into(),
            CheckResult::deterministic(
                check_safety_after(trace, None),
                sleepy && resilient_setting,
            ),
        );
    }

    if cfg.liveness {
        let v = match &window {
            AsyncWindow::None => check_liveness_throughout(trace, 1, w),
            _ => Verdict::na("asynchronous rounds present; liveness is measured by healing"),
        };
        checks.insert(
            "liveness".into(),
            CheckResult::probabilistic(v, sleepy && in_model),
        );
    }

    if cfg.async_resilience {
        let v = match &window {
            AsyncWindow::None => Verdict::Pass,
            AsyncWindow::Single { last_sync, length } => {
                check_async_resilience(trace, *last_sync, *length)
            }
            AsyncWindow::Multiple { .. } => {
                Verdict::na("more than one asynchronous period; unverified territory")
            }
        };
        checks.insert(
            "async_resilience".into(),
            CheckResult::deterministic(v, sleepy && resilient_setting),
        );
    }

    if cfg.healing {
        let (safety_part, liveness_part) = match &window {
            AsyncWindow::None => (
                Verdict::na("no asynchronous period"),
                Verdict::na("no asynchronous period"),
            ),
            AsyncWindow::Single { last_sync, length } => {
                let h = check_healing(trace, last_sync + length, w);
                (h.safety, h.liveness)
            }
            AsyncWindow::Multiple { .. } => {
                let why = "more than one asynchronous period; unverified territory";
                (Verdict::na(why), Verdict::na(why))
            }
        };
        // healing only needs the sleepiness condition after the window
        let after: Vec<Round> = window
            .first_sync_after()
            .map(|f| (f..horizon).collect())
            .unwrap_or_default();
        let hyp = eta_sleepy(s, params, &after);
        checks.insert(
            "healing_safety".into(),
            CheckResult::deterministic(safety_part, hyp),
        );
        checks.insert(
            "healing_liveness".into(),
            CheckResult::probabilistic(liveness_part, hyp && in_model),
        );
    }

    if cfg.vote_locking {
        let last_sync = match &window {
            AsyncWindow::None => Some(horizon.saturating_sub(1)),
            AsyncWindow::Single { last_sync, .. } => Some(*last_sync),
            AsyncWindow::Multiple { .. } => None,
        };
        let v = match last_sync {
            Some(ra) => {
                let before: Vec<Round> = (0..=ra).collect();
                if eta_sleepy(s, params, &before) {
                    check_decided_implies_voted(trace, ra)
                } else {
                    Verdict::na("sleepiness condition fails before the last synchronous round")
                }
            }
            None => Verdict::na("more than one asynchronous period"),
        };
        checks.insert(
            "decided_implies_voted".into(),
            CheckResult::deterministic(v, true),
        );

        let v = match &window {
            AsyncWindow::Single { last_sync, length } => {
                let before: Vec<Round> = (0..=*last_sync).collect();
                if !params.eta.exceeds(*length) || *length >= params.tau.max(1) {
                    Verdict::na("expiration window does not outlast the asynchronous period")
                } else if !window_conditions(s, params) || !eta_sleepy(s, params, &before) {
                    Verdict::na("asynchrony conditions do not hold")
                } else {
                    check_clique_persistence(trace, *last_sync, *length)
                }
            }
            _ => Verdict::na("needs exactly one asynchronous period"),
        };
        checks.insert(
            "clique_persistence".into(),
            CheckResult::deterministic(v, true),
        );
    }

    OracleReport {
        in_model,
        model_failures,
        checks,
    }
}
