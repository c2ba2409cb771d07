//! Extended weak graded agreement.
//!
//! One send phase (every awake well-behaved process multicasts a vote for its
//! input log) and one receive phase. At the receive phase each receiver
//! merges the round's votes with an initial set `M₀` of earlier votes, tallies
//! the merged set, and outputs logs with a grade bit. With every `M₀` empty
//! this is the plain single-round graded agreement.
//!
//! Thresholds are compared in integers (`3·count > 2m`, `3·count > m`) so that
//! no verdict depends on rounding.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serde_pairs;
use crate::types::{Log, ProcessId, ProcessSet, Recipients, Round, VoteMsg};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GaError {
    #[error("vote attributed to {sender} in round {round}, which is not Byzantine in that round")]
    Forged { sender: ProcessId, round: Round },
    #[error("vote from {sender} carries round {found}, instance round is {expected}")]
    WrongRound {
        sender: ProcessId,
        found: Round,
        expected: Round,
    },
    #[error("initial vote from {sender} for {owner} is from round {found}, must precede {round}")]
    StaleInitial {
        owner: ProcessId,
        sender: ProcessId,
        found: Round,
        round: Round,
    },
    #[error("{0} is both an input owner and Byzantine")]
    ByzantineInput(ProcessId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Grade {
    Zero,
    One,
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        match g {
            Grade::Zero => 0,
            Grade::One => 1,
        }
    }
}

impl TryFrom<u8> for Grade {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Grade::Zero),
            1 => Ok(Grade::One),
            _ => Err(format!("grade must be 0 or 1, got {v}")),
        }
    }
}

/// Earlier votes a receiver enters the instance with (`M₀ⁱ`).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialVoteSet {
    pub owner: ProcessId,
    /// At most one message per sender, keyed by sender.
    pub messages: BTreeMap<ProcessId, VoteMsg>,
}

impl InitialVoteSet {
    pub fn new(owner: ProcessId) -> Self {
        InitialVoteSet {
            owner,
            messages: BTreeMap::new(),
        }
    }

    /// Builds a set from messages; a sender appearing with two different
    /// votes is dropped.
    pub fn from_messages<I: IntoIterator<Item = VoteMsg>>(owner: ProcessId, msgs: I) -> Self {
        let mut messages: BTreeMap<ProcessId, VoteMsg> = BTreeMap::new();
        let mut equivocators = ProcessSet::new();
        for m in msgs {
            match messages.get(&m.sender) {
                Some(prev) if *prev != m => {
                    equivocators.insert(m.sender);
                }
                _ => {
                    messages.insert(m.sender, m);
                }
            }
        }
        for e in equivocators {
            messages.remove(&e);
        }
        InitialVoteSet { owner, messages }
    }

    pub fn senders(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.messages.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Graded output of one receiver. One entry per log, carrying the maximal
/// grade reached.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaOutput {
    #[serde(with = "serde_pairs")]
    pub entries: BTreeMap<Log, Grade>,
}

impl GaOutput {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn grade_of(&self, log: &Log) -> Option<Grade> {
        self.entries.get(log).copied()
    }

    pub fn grade_one(&self) -> impl Iterator<Item = &Log> {
        self.entries
            .iter()
            .filter(|(_, g)| **g == Grade::One)
            .map(|(l, _)| l)
    }

    /// Longest grade-1 log.
    pub fn longest_grade_one(&self) -> Option<&Log> {
        // grade-1 logs at one receiver never conflict, so "longest" is unique
        self.grade_one().max_by_key(|l| l.len())
    }

    /// Longest log output with any grade. Equal-length conflicting logs are
    /// resolved in favour of grade 1, then the smaller log.
    pub fn longest_any(&self) -> Option<&Log> {
        self.entries
            .iter()
            .max_by(|(la, ga), (lb, gb)| la.len().cmp(&lb.len()).then(ga.cmp(gb)).then(lb.cmp(la)))
            .map(|(l, _)| l)
    }
}

/// Everything the oracle needs about one instance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaRecord {
    pub round: Round,
    pub synchronous: bool,
    /// `B_r`.
    pub byzantine: ProcessSet,
    /// Inputs of the awake well-behaved senders (`H_r`).
    pub inputs: BTreeMap<ProcessId, Log>,
    /// `M₀ⁱ` per receiver.
    pub initial: BTreeMap<ProcessId, InitialVoteSet>,
    /// Round-`r` votes each receiver holds at its receive phase, own vote included.
    pub received: BTreeMap<ProcessId, Vec<VoteMsg>>,
    pub outputs: BTreeMap<ProcessId, GaOutput>,
    /// Perceived participation `m` per receiver.
    pub participation: BTreeMap<ProcessId, usize>,
}

impl GaRecord {
    pub fn receivers(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.outputs.keys().copied()
    }

    /// `P₀`: every sender appearing in some initial set.
    pub fn initial_senders(&self) -> ProcessSet {
        self.initial.values().flat_map(|s| s.senders()).collect()
    }
}

/// Merges a receiver's initial set with the round's votes.
///
/// A sender that voted twice differently in `round_msgs` contributes nothing,
/// and neither does its initial vote. A sender with a single round vote is
/// represented by that vote only.
pub fn merge_latest(
    initial: &InitialVoteSet,
    round_msgs: &[VoteMsg],
) -> BTreeMap<ProcessId, VoteMsg> {
    let mut by_sender: BTreeMap<ProcessId, BTreeSet<&VoteMsg>> = BTreeMap::new();
    for m in round_msgs {
        by_sender.entry(m.sender).or_default().insert(m);
    }
    let mut merged: BTreeMap<ProcessId, VoteMsg> = initial
        .messages
        .iter()
        .filter(|(s, _)| !by_sender.contains_key(s))
        .map(|(s, m)| (*s, m.clone()))
        .collect();
    for (sender, msgs) in by_sender {
        let mut distinct = msgs
            .iter()
            .map(|m| &m.log)
            .collect::<BTreeSet<_>>()
            .into_iter();
        if let (Some(_), None) = (distinct.next(), distinct.next()) {
            let first = *msgs.iter().next().expect("nonempty");
            merged.insert(sender, first.clone());
        }
    }
    merged
}

/// For every prefix of every voted log, the number of senders whose vote
/// extends it.
pub fn tally<'a, I>(votes: I) -> BTreeMap<Log, usize>
where
    I: IntoIterator<Item = &'a VoteMsg>,
{
    let mut counts = BTreeMap::new();
    for v in votes {
        for prefix in v.log.prefixes() {
            *counts.entry(prefix).or_insert(0) += 1;
        }
    }
    counts
}

/// Grades a merged vote set (at most one vote per sender).
pub fn grade(merged: &BTreeMap<ProcessId, VoteMsg>) -> GaOutput {
    let m = merged.len();
    let entries = tally(merged.values())
        .into_iter()
        .filter_map(|(log, count)| {
            if 3 * count > 2 * m {
                Some((log, Grade::One))
            } else if 3 * count > m {
                Some((log, Grade::Zero))
            } else {
                None
            }
        })
        .collect();
    GaOutput { entries }
}

/// Description of one instance for [`run_instance`].
#[derive(Clone, Debug, Default)]
pub struct Instance {
    pub round: Round,
    pub synchronous: bool,
    pub byzantine: ProcessSet,
    pub inputs: BTreeMap<ProcessId, Log>,
    pub byzantine_votes: Vec<(VoteMsg, Recipients)>,
    pub initial: BTreeMap<ProcessId, InitialVoteSet>,
    /// `H_{r+1}`: well-behaved processes awake at the receive phase.
    pub receivers: ProcessSet,
}

/// Runs one instance end to end.
///
/// In a synchronous instance every sent vote reaches every addressed receiver
/// and `delivery` is not consulted. Otherwise `delivery(receiver, vote)`
/// decides which foreign votes arrive. A receiver always holds its own vote.
pub fn run_instance<F>(inst: &Instance, mut delivery: F) -> Result<GaRecord, GaError>
where
    F: FnMut(ProcessId, &VoteMsg) -> bool,
{
    for p in inst.inputs.keys() {
        if inst.byzantine.contains(p) {
            return Err(GaError::ByzantineInput(*p));
        }
    }
    for (v, _) in &inst.byzantine_votes {
        if !inst.byzantine.contains(&v.sender) {
            return Err(GaError::Forged {
                sender: v.sender,
                round: inst.round,
            });
        }
        if v.round != inst.round {
            return Err(GaError::WrongRound {
                sender: v.sender,
                found: v.round,
                expected: inst.round,
            });
        }
    }
    for (owner, set) in &inst.initial {
        if let Some(m) = set.messages.values().find(|m| m.round >= inst.round) {
            return Err(GaError::StaleInitial {
                owner: *owner,
                sender: m.sender,
                found: m.round,
                round: inst.round,
            });
        }
    }

    let honest_votes: Vec<VoteMsg> = inst
        .inputs
        .iter()
        .map(|(p, log)| VoteMsg {
            sender: *p,
            round: inst.round,
            log: log.clone(),
        })
        .collect();

    let mut record = GaRecord {
        round: inst.round,
        synchronous: inst.synchronous,
        byzantine: inst.byzantine.clone(),
        inputs: inst.inputs.clone(),
        ..GaRecord::default()
    };
    for &rx in &inst.receivers {
        let mut received: Vec<VoteMsg> = Vec::new();
        for v in &honest_votes {
            if v.sender == rx || inst.synchronous || delivery(rx, v) {
                received.push(v.clone());
            }
        }
        for (v, to) in &inst.byzantine_votes {
            if to.includes(rx) && (inst.synchronous || delivery(rx, v)) {
                received.push(v.clone());
            }
        }
        received.sort();
        received.dedup();
        let initial = inst
            .initial
            .get(&rx)
            .cloned()
            .unwrap_or_else(|| InitialVoteSet::new(rx));
        let merged = merge_latest(&initial, &received);
        record.participation.insert(rx, merged.len());
        record.outputs.insert(rx, grade(&merged));
        record.received.insert(rx, received);
        record.initial.insert(rx, initial);
    }
    Ok(record)
}
