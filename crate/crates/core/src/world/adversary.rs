//! Byzantine behaviour and adversarial delivery.
//!
//! A strategy authors messages for the processes in `B_r` and, in
//! asynchronous rounds only, picks which in-flight messages each awake
//! well-behaved process receives. Synchronous delivery is not its call.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tob::ViewClock;
use crate::types::{
    Log, Message, ProcessId, ProcessSet, ProposeMsg, Recipients, Round, Value, VoteMsg,
};
use crate::vrf::vrf_eval;
use crate::world::schedule::{AsyncWindow, Schedule};
use crate::world::trace::MsgId;

/// A message in flight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub id: MsgId,
    pub round: Round,
    pub to: Recipients,
    pub msg: Message,
}

pub struct AdversaryView<'a> {
    pub round: Round,
    pub schedule: &'a Schedule,
    pub seed: u64,
    /// Messages the well-behaved processes sent this round.
    pub honest_sent: &'a [Envelope],
    /// Current delivered log of every well-behaved process that decided something.
    pub delivered: &'a BTreeMap<ProcessId, Log>,
}

impl AdversaryView<'_> {
    pub fn byzantine(&self) -> &ProcessSet {
        self.schedule.byzantine(self.round)
    }

    /// Longest delivered log, smallest first among equals.
    pub fn longest_decided(&self) -> Log {
        self.delivered
            .values()
            .max_by(|a, b| a.len().cmp(&b.len()).then(b.cmp(a)))
            .cloned()
            .unwrap_or_default()
    }

    /// Every process that is not Byzantine this round.
    pub fn well_behaved(&self) -> ProcessSet {
        let byz = self.byzantine();
        (0..self.schedule.n as u32)
            .map(ProcessId)
            .filter(|p| !byz.contains(p))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub msg: Message,
    pub to: Recipients,
}

pub trait Adversary {
    fn name(&self) -> &'static str;

    /// Messages authored by Byzantine processes this round.
    fn act(&mut self, view: &AdversaryView<'_>) -> Vec<Outgoing>;

    /// Asynchronous rounds: ids of `pending` to hand to `receiver`.
    fn deliver(
        &mut self,
        view: &AdversaryView<'_>,
        receiver: ProcessId,
        pending: &[&Envelope],
    ) -> Vec<MsgId>;
}

/// Named strategies available to scenarios.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Byzantine processes stay quiet; asynchrony delivers everything.
    #[default]
    Silent,
    /// Conflicting votes and proposals to the two halves of the well-behaved processes.
    Equivocate,
    /// Suppress well-behaved traffic during asynchrony and push a conflicting log.
    SuppressOverride,
    /// Show each half of the well-behaved processes a different conflicting log during asynchrony.
    SplitVote,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Silent,
        StrategyKind::Equivocate,
        StrategyKind::SuppressOverride,
        StrategyKind::SplitVote,
    ];

    pub fn build(self) -> Box<dyn Adversary + Send> {
        match self {
            StrategyKind::Silent => Box::new(Silent),
            StrategyKind::Equivocate => Box::new(Equivocate),
            StrategyKind::SuppressOverride => Box::new(SuppressOverride::default()),
            StrategyKind::SplitVote => Box::new(SplitVote),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Silent => "silent",
            StrategyKind::Equivocate => "equivocate",
            StrategyKind::SuppressOverride => "suppress_override",
            StrategyKind::SplitVote => "split_vote",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

// Adversarial block ids live far above the per-process counters.
const EVIL_BASE: u64 = 1 << 40;

fn evil(proposer: ProcessId, view: u64, salt: u64) -> Value {
    Value {
        id: EVIL_BASE + (view << 8) + salt,
        proposer,
        view,
    }
}

fn only_byzantine(view: &AdversaryView<'_>, pending: &[&Envelope]) -> Vec<MsgId> {
    let byz = view.byzantine();
    pending
        .iter()
        .filter(|e| byz.contains(&e.msg.sender()))
        .map(|e| e.id)
        .collect()
}

fn all(pending: &[&Envelope]) -> Vec<MsgId> {
    pending.iter().map(|e| e.id).collect()
}

fn halves(set: &ProcessSet) -> (ProcessSet, ProcessSet) {
    let k = set.len() / 2;
    let first: ProcessSet = set.iter().take(k).copied().collect();
    let second = set.difference(&first).copied().collect();
    (first, second)
}

fn vote(sender: ProcessId, round: Round, log: Log) -> Message {
    VoteMsg { sender, round, log }.into()
}

fn propose(seed: u64, sender: ProcessId, view: u64, log: Log) -> Message {
    ProposeMsg {
        sender,
        view,
        log,
        vrf: vrf_eval(seed, sender, view),
    }
    .into()
}

/// The decided log with its last block replaced: conflicts with it, shares the rest.
fn sibling_of(base: &Log, value: Value) -> Log {
    base.truncated(base.len().saturating_sub(1)).extended(value)
}

pub struct Silent;

impl Adversary for Silent {
    fn name(&self) -> &'static str {
        StrategyKind::Silent.name()
    }

    fn act(&mut self, _: &AdversaryView<'_>) -> Vec<Outgoing> {
        Vec::new()
    }

    fn deliver(
        &mut self,
        _: &AdversaryView<'_>,
        _: ProcessId,
        pending: &[&Envelope],
    ) -> Vec<MsgId> {
        all(pending)
    }
}

#[derive(Default)]
pub struct Equivocate;

impl Adversary for Equivocate {
    fn name(&self) -> &'static str {
        StrategyKind::Equivocate.name()
    }

    fn act(&mut self, view: &AdversaryView<'_>) -> Vec<Outgoing> {
        let (a, b) = halves(&view.well_behaved());
        let base = view.longest_decided();
        let clock = ViewClock::at(view.round);
        let mut out = Vec::new();
        for &p in view.byzantine() {
            let la = base.extended(evil(p, clock.view, 1));
            let lb = base.extended(evil(p, clock.view, 2));
            out.push(Outgoing {
                msg: vote(p, view.round, la.clone()),
                to: Recipients::Only(a.clone()),
            });
            out.push(Outgoing {
                msg: vote(p, view.round, lb.clone()),
                to: Recipients::Only(b.clone()),
            });
            if view.round.is_multiple_of(2) {
                out.push(Outgoing {
                    msg: propose(view.seed, p, clock.view + 1, la),
                    to: Recipients::Only(a.clone()),
                });
                out.push(Outgoing {
                    msg: propose(view.seed, p, clock.view + 1, lb),
                    to: Recipients::Only(b.clone()),
                });
            }
        }
        out
    }

    fn deliver(
        &mut self,
        _: &AdversaryView<'_>,
        _: ProcessId,
        pending: &[&Envelope],
    ) -> Vec<MsgId> {
        all(pending)
    }
}

/// Quiet until the asynchronous window opens. From then on every Byzantine
/// process votes for a fixed log `Λ′` that conflicts with the longest decided
/// log, and proposes extensions of it; during asynchrony only
/// Byzantine-authored messages are delivered.
#[derive(Default)]
pub struct SuppressOverride {
    target: Option<Log>,
}

impl SuppressOverride {
    pub fn target(&self) -> Option<&Log> {
        self.target.as_ref()
    }
}

fn first_async_round(s: &Schedule) -> Option<Round> {
    match s.async_window() {
        AsyncWindow::None => None,
        AsyncWindow::Single { last_sync, .. } => Some(last_sync + 1),
        AsyncWindow::Multiple { periods } => periods.first().map(|p| p.0),
    }
}

impl Adversary for SuppressOverride {
    fn name(&self) -> &'static str {
        StrategyKind::SuppressOverride.name()
    }

    fn act(&mut self, view: &AdversaryView<'_>) -> Vec<Outgoing> {
        let Some(start) = first_async_round(view.schedule) else {
            return Vec::new();
        };
        let Some(&lead) = view.byzantine().iter().next() else {
            return Vec::new();
        };
        if view.round < start {
            return Vec::new();
        }
        let clock = ViewClock::at(view.round);
        let target = self
            .target
            .get_or_insert_with(|| sibling_of(&view.longest_decided(), evil(lead, clock.view, 0)))
            .clone();
        let mut out = Vec::new();
        for &p in view.byzantine() {
            out.push(Outgoing {
                msg: vote(p, view.round, target.clone()),
                to: Recipients::All,
            });
            if view.round.is_multiple_of(2) {
                out.push(Outgoing {
                    msg: propose(
                        view.seed,
                        p,
                        clock.view + 1,
                        target.extended(evil(p, clock.view + 1, 3)),
                    ),
                    to: Recipients::All,
                });
            }
        }
        out
    }

    fn deliver(
        &mut self,
        view: &AdversaryView<'_>,
        _: ProcessId,
        pending: &[&Envelope],
    ) -> Vec<MsgId> {
        only_byzantine(view, pending)
    }
}

/// In asynchronous rounds, splits the well-behaved processes into two halves
/// and shows each half Byzantine votes for its own conflicting log.
#[derive(Default)]
pub struct SplitVote;

impl Adversary for SplitVote {
    fn name(&self) -> &'static str {
        StrategyKind::SplitVote.name()
    }

    fn act(&mut self, view: &AdversaryView<'_>) -> Vec<Outgoing> {
        if view.schedule.is_sync(view.round) {
            return Vec::new();
        }
        let Some(&lead) = view.byzantine().iter().next() else {
            return Vec::new();
        };
        let (a, b) = halves(&view.well_behaved());
        let base = view.longest_decided();
        let clock = ViewClock::at(view.round);
        let xa = sibling_of(&base, evil(lead, clock.view, 4));
        let xb = sibling_of(&base, evil(lead, clock.view, 5));
        let mut out = Vec::new();
        for &p in view.byzantine() {
            out.push(Outgoing {
                msg: vote(p, view.round, xa.clone()),
                to: Recipients::Only(a.clone()),
            });
            out.push(Outgoing {
                msg: vote(p, view.round, xb.clone()),
                to: Recipients::Only(b.clone()),
            });
        }
        out
    }

    fn deliver(
        &mut self,
        view: &AdversaryView<'_>,
        _: ProcessId,
        pending: &[&Envelope],
    ) -> Vec<MsgId> {
        only_byzantine(view, pending)
    }
}
