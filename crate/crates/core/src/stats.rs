//! Latency and leader statistics read off a trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{Message, ProcessId, Round, Value, View};
use crate::vrf::vrf_verify;
use crate::world::trace::Trace;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub decisions: usize,
    /// Well-behaved values proposed early enough to be decided in the horizon.
    pub values_proposed: usize,
    pub values_decided: usize,
    /// Mean of (first decision round containing the value − proposal round).
    pub mean_latency: Option<f64>,
    /// Views whose highest valid VRF belongs to a well-behaved proposer.
    pub honest_leader_views: usize,
    /// Of those, views whose leader's block was decided.
    pub honest_leader_decided: usize,
    pub leader_frequency: Option<f64>,
    pub longest_delivered: usize,
}

struct Proposal {
    round: Round,
    sender: ProcessId,
    score: u64,
    block: Value,
    honest: bool,
}

/// Rounds from a proposal to the earliest decision that can contain it
/// (vote, vote, decide).
const MIN_LATENCY: Round = 3;

pub fn run_stats(trace: &Trace) -> RunStats {
    let s = trace.schedule();
    let seed = trace.header.seed;
    let horizon = s.horizon() as Round;

    let mut first_decided: BTreeMap<Value, Round> = BTreeMap::new();
    let mut decisions = 0;
    for d in trace.decisions() {
        decisions += 1;
        for v in d.log.values() {
            first_decided.entry(*v).or_insert(d.round);
        }
    }

    let mut by_view: BTreeMap<View, Vec<Proposal>> = BTreeMap::new();
    for (round, sender, p) in trace.sends() {
        let Message::Propose(prop) = &p.msg else {
            continue;
        };
        let Some(block) = prop.log.last().copied() else {
            continue;
        };
        if block == Value::GENESIS || !vrf_verify(&prop.vrf, seed) || prop.vrf.sender != sender {
            continue;
        }
        by_view.entry(prop.view).or_default().push(Proposal {
            round,
            sender,
            score: prop.vrf.value,
            block,
            honest: s.honest(round).contains(&sender),
        });
    }

    let mut latencies = Vec::new();
    let mut values_proposed = 0;
    let mut honest_leader_views = 0;
    let mut honest_leader_decided = 0;
    for props in by_view.values() {
        let in_range = |p: &Proposal| p.round + MIN_LATENCY < horizon;
        for p in props.iter().filter(|p| p.honest && in_range(p)) {
            values_proposed += 1;
            if let Some(&d) = first_decided.get(&p.block) {
                latencies.push((d - p.round) as f64);
            }
        }
        let leader = props
            .iter()
            .max_by(|a, b| a.score.cmp(&b.score).then(b.sender.cmp(&a.sender)));
        if let Some(l) = leader.filter(|l| l.honest && in_range(l)) {
            honest_leader_views += 1;
            if first_decided.contains_key(&l.block) {
                honest_leader_decided += 1;
            }
        }
    }

    RunStats {
        decisions,
        values_proposed,
        values_decided: latencies.len(),
        mean_latency: mean(&latencies),
        honest_leader_views,
        honest_leader_decided,
        leader_frequency: (honest_leader_views > 0)
            .then(|| honest_leader_decided as f64 / honest_leader_views as f64),
        longest_delivered: trace
            .final_delivered()
            .values()
            .map(|l| l.len())
            .max()
            .unwrap_or(0),
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}
