//! Per-process total-order broadcast state machine.
//!
//! View 0 is round 0 and only proposes the genesis block. View `v ≥ 1` spans
//! round `2v−1` (decide from the previous view, vote on a proposal) and round
//! `2v` (vote on the first instance's grade-1 output, propose for `v+1`).
//!
//! Each graded-agreement instance reads the latest unexpired vote of every
//! sender from the last `η` rounds, not only the current round's votes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ga::{self, GaOutput, InitialVoteSet};
use crate::types::{Log, Message, ProcessId, ProposeMsg, Round, Value, View, VoteMsg};
use crate::vrf::{vrf_eval, vrf_verify};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    View0,
    Round1,
    Round2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewClock {
    pub round: Round,
    pub view: View,
    pub phase: Phase,
}

impl ViewClock {
    pub fn at(round: Round) -> Self {
        let (view, phase) = match round {
            0 => (0, Phase::View0),
            r if r % 2 == 1 => (r.div_ceil(2), Phase::Round1),
            r => (r / 2, Phase::Round2),
        };
        ViewClock { round, view, phase }
    }

    pub fn round1(view: View) -> Round {
        assert!(view >= 1, "view 0 has no first voting round");
        2 * view - 1
    }

    pub fn round2(view: View) -> Round {
        2 * view
    }
}

/// Expiration period `η` in rounds. `None` means votes never expire.
///
/// Serialized as the number of rounds, or the string `"inf"` for no expiry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Expiration(pub Option<u64>);

impl Serialize for Expiration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(eta) => s.serialize_u64(eta),
            None => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Expiration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Rounds(u64),
            Named(String),
        }
        match Raw::deserialize(d)? {
            Raw::Rounds(eta) => Ok(Expiration(Some(eta))),
            Raw::Named(s) if s == "inf" => Ok(Expiration(None)),
            Raw::Named(s) => Err(serde::de::Error::custom(format!(
                "expiration must be a round count or \"inf\", got {s:?}"
            ))),
        }
    }
}

impl Expiration {
    pub const NEVER: Expiration = Expiration(None);

    pub fn rounds(eta: u64) -> Self {
        Expiration(Some(eta))
    }

    /// First round whose votes are still admissible at the receive phase of `r`.
    pub fn window_start(self, r: Round) -> Round {
        match self.0 {
            Some(eta) => r.saturating_sub(eta),
            None => 0,
        }
    }

    /// True iff the window is strictly longer than `pi` rounds.
    pub fn exceeds(self, pi: u64) -> bool {
        self.0.is_none_or(|eta| eta > pi)
    }
}

impl fmt::Display for Expiration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(eta) => write!(f, "{eta}"),
            None => write!(f, "inf"),
        }
    }
}

/// Everything a process has received, own messages included.
#[derive(Clone, Debug, Default)]
pub struct MessageStore {
    // sender → round → distinct logs (two are enough to prove equivocation)
    votes: BTreeMap<ProcessId, BTreeMap<Round, BTreeSet<Log>>>,
    proposals: BTreeMap<View, BTreeSet<ProposeMsg>>,
}

impl MessageStore {
    pub fn insert(&mut self, msg: &Message) {
        match msg {
            Message::Vote(v) => {
                let logs = self
                    .votes
                    .entry(v.sender)
                    .or_default()
                    .entry(v.round)
                    .or_default();
                if logs.len() < 2 {
                    logs.insert(v.log.clone());
                }
            }
            Message::Propose(p) => {
                self.proposals.entry(p.view).or_default().insert(p.clone());
            }
        }
    }

    pub fn proposals_for(&self, view: View) -> impl Iterator<Item = &ProposeMsg> {
        self.proposals.get(&view).into_iter().flatten()
    }

    /// Round-`r` votes held, equivocating pairs included.
    pub fn votes_at(&self, r: Round) -> Vec<VoteMsg> {
        let mut out = Vec::new();
        for (sender, rounds) in &self.votes {
            for log in rounds.get(&r).into_iter().flatten() {
                out.push(VoteMsg {
                    sender: *sender,
                    round: r,
                    log: log.clone(),
                });
            }
        }
        out
    }

    /// The inputs of the round-`r` instance: per sender, the latest
    /// non-equivocating vote from `[r−η, r)` as the initial set, and every
    /// round-`r` vote held.
    pub fn latest_unexpired(
        &self,
        owner: ProcessId,
        r: Round,
        eta: Expiration,
    ) -> (InitialVoteSet, Vec<VoteMsg>) {
        let lo = eta.window_start(r);
        let mut initial = InitialVoteSet::new(owner);
        let mut current = Vec::new();
        for (sender, rounds) in &self.votes {
            for log in rounds.get(&r).into_iter().flatten() {
                current.push(VoteMsg {
                    sender: *sender,
                    round: r,
                    log: log.clone(),
                });
            }
            if let Some((&round, logs)) = rounds.range(lo..r).next_back() {
                if let [log] = logs.iter().collect::<Vec<_>>()[..] {
                    initial.messages.insert(
                        *sender,
                        VoteMsg {
                            sender: *sender,
                            round,
                            log: log.clone(),
                        },
                    );
                }
            }
        }
        (initial, current)
    }
}

/// What a process emits in one send phase.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub messages: Vec<Message>,
    /// Longest log decided this round, if nonempty.
    pub decided: Option<Log>,
}

/// One instance's output as seen by its receiver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceiveOutcome {
    pub initial: InitialVoteSet,
    pub received: Vec<VoteMsg>,
    pub participation: usize,
    pub output: GaOutput,
}

#[derive(Clone, Debug)]
pub struct ProcessState {
    pub pid: ProcessId,
    seed: u64,
    pub eta: Expiration,
    /// `𝓛_{v−1}`.
    pub candidate: Log,
    /// `𝓒_v`.
    pub chain_head: Log,
    /// Longest decided log.
    pub delivered: Log,
    pub last_vote: Option<Log>,
    pub store: MessageStore,
    /// Output of the most recent instance this process took part in.
    pub ga_output: Option<(Round, GaOutput)>,
    next_value: u64,
}

impl ProcessState {
    pub fn new(pid: ProcessId, seed: u64, eta: Expiration) -> Self {
        ProcessState {
            pid,
            seed,
            eta,
            candidate: Log::empty(),
            chain_head: Log::empty(),
            delivered: Log::empty(),
            last_vote: None,
            store: MessageStore::default(),
            ga_output: None,
            next_value: 1,
        }
    }

    /// Stores a delivered message.
    pub fn receive(&mut self, msg: &Message) {
        self.store.insert(msg);
    }

    /// Send phase of round `r`. Own messages are stored immediately.
    pub fn step(&mut self, r: Round) -> StepOutput {
        let clock = ViewClock::at(r);
        let out = match clock.phase {
            Phase::View0 => self.step_view0(),
            Phase::Round1 => {
                let prev = self.output_of(r.checked_sub(1));
                self.step_round1(clock.view, prev)
            }
            Phase::Round2 => {
                let prev = self.output_of(r.checked_sub(1));
                self.step_round2(clock.view, prev)
            }
        };
        for m in &out.messages {
            self.store.insert(m);
        }
        out
    }

    /// Receive phase of round `r`, after deliveries have been stored.
    pub fn finish_round(&mut self, r: Round) -> ReceiveOutcome {
        let (initial, received) = self.store.latest_unexpired(self.pid, r, self.eta);
        let merged = ga::merge_latest(&initial, &received);
        let output = ga::grade(&merged);
        self.ga_output = Some((r, output.clone()));
        ReceiveOutcome {
            initial,
            received,
            participation: merged.len(),
            output,
        }
    }

    fn output_of(&self, round: Option<Round>) -> Option<GaOutput> {
        match (&self.ga_output, round) {
            (Some((r, out)), Some(want)) if *r == want => Some(out.clone()),
            _ => None,
        }
    }

    pub fn step_view0(&mut self) -> StepOutput {
        let log = Log::new(vec![Value::GENESIS]);
        self.chain_head = log.clone();
        StepOutput {
            messages: vec![self.propose(1, log)],
            decided: None,
        }
    }

    /// First round of view `v`, given the output of the previous view's
    /// second instance.
    pub fn step_round1(&mut self, v: View, prev: Option<GaOutput>) -> StepOutput {
        let mut decided = None;
        if let Some(out) = &prev {
            if let Some(d) = out.longest_grade_one().filter(|d| !d.is_empty()) {
                self.deliver(d.clone());
                decided = Some(d.clone());
            }
            if let Some(l) = out.longest_any() {
                self.candidate = l.clone();
            }
        }
        let vote = match self.best_proposal(v) {
            // a proposal that is a strict prefix of the candidate would
            // drop blocks the candidate already carries
            Some(p) if p.len() > self.candidate.len() => p,
            _ => self.candidate.clone(),
        };
        StepOutput {
            messages: vec![self.vote(ViewClock::round1(v), vote)],
            decided,
        }
    }

    /// Second round of view `v`, given the output of this view's first
    /// instance.
    pub fn step_round2(&mut self, v: View, cur: Option<GaOutput>) -> StepOutput {
        let grade_one = cur.as_ref().and_then(|o| o.longest_grade_one().cloned());
        let vote = grade_one
            .or_else(|| self.last_vote.clone())
            .unwrap_or_else(|| self.candidate.clone());
        self.chain_head = cur
            .as_ref()
            .and_then(|o| o.longest_any().cloned())
            .unwrap_or_else(|| self.candidate.clone());
        let block = Value {
            id: self.next_value,
            proposer: self.pid,
            view: v + 1,
        };
        self.next_value += 1;
        let proposal = self.chain_head.extended(block);
        StepOutput {
            messages: vec![
                self.vote(ViewClock::round2(v), vote),
                self.propose(v + 1, proposal),
            ],
            decided: None,
        }
    }

    /// Log of the valid proposal for `view` with the highest VRF score among
    /// those not conflicting with the candidate.
    pub fn best_proposal(&self, view: View) -> Option<Log> {
        self.store
            .proposals_for(view)
            .filter(|p| {
                p.vrf.sender == p.sender && p.vrf.view == view && vrf_verify(&p.vrf, self.seed)
            })
            .filter(|p| !p.log.conflicts_with(&self.candidate))
            .min_by(|a, b| {
                b.vrf
                    .value
                    .cmp(&a.vrf.value)
                    .then(a.sender.cmp(&b.sender))
                    .then(a.log.cmp(&b.log))
            })
            .map(|p| p.log.clone())
    }

    fn deliver(&mut self, log: Log) {
        if !log.is_prefix_of(&self.delivered) {
            self.delivered = log;
        }
    }

    fn vote(&mut self, round: Round, log: Log) -> Message {
        self.last_vote = Some(log.clone());
        VoteMsg {
            sender: self.pid,
            round,
            log,
        }
        .into()
    }

    fn propose(&self, view: View, log: Log) -> Message {
        ProposeMsg {
            sender: self.pid,
            view,
            log,
            vrf: vrf_eval(self.seed, self.pid, view),
        }
        .into()
    }
}
