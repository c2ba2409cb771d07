//! Safety, liveness, asynchrony resilience, healing and the two vote-locking
//! properties behind resilience.

use std::collections::{BTreeMap, BTreeSet};

use crate::tob::ViewClock;
use crate::types::{Log, Message, ProcessId, Round, Value};
use crate::world::trace::{Decision, Trace};

use super::{Verdict, Witness};

fn conflict(first: &Decision, second: &Decision) -> Verdict {
    Verdict::fail(Witness::Conflict {
        first: first.clone(),
        second: second.clone(),
    })
}

/// Earliest decision of every distinct log, in decision order.
fn distinct_decisions<'a, I: Iterator<Item = Decision> + 'a>(it: I) -> Vec<Decision> {
    let mut seen = BTreeSet::new();
    it.filter(|d| seen.insert(d.log.clone())).collect()
}

/// All well-behaved decisions taken after round `after` (all of them for
/// `None`) are pairwise compatible.
pub fn check_safety_after(trace: &Trace, after: Option<Round>) -> Verdict {
    let ds = distinct_decisions(
        trace
            .decisions()
            .filter(|d| after.is_none_or(|a| d.round > a)),
    );
    for (i, a) in ds.iter().enumerate() {
        if let Some(b) = ds[i + 1..].iter().find(|b| a.log.conflicts_with(&b.log)) {
            // prefer a witness naming two different processes
            let other = trace
                .decisions()
                .filter(|d| after.is_none_or(|x| d.round > x))
                .find(|d| d.log == b.log && d.pid != a.pid);
            return conflict(a, other.as_ref().unwrap_or(b));
        }
    }
    Verdict::Pass
}

/// Delivered log of every process at the end of the send phase of `until`.
fn delivered_by(trace: &Trace, until: Round) -> BTreeMap<ProcessId, Log> {
    let mut out: BTreeMap<ProcessId, Log> = BTreeMap::new();
    for d in trace.decisions().filter(|d| d.round <= until) {
        let slot = out.entry(d.pid).or_default();
        if !d.log.is_prefix_of(slot) {
            *slot = d.log;
        }
    }
    out
}

/// Every well-behaved process awake throughout `[r, r+w]` has, by round
/// `r+w`, delivered a log holding a value proposed by a well-behaved process
/// at round `r` or later.
pub fn check_liveness_after(trace: &Trace, r: Round, w: u64) -> Verdict {
    let s = trace.schedule();
    let end = r + w;
    if end >= s.horizon() as Round {
        return Verdict::inconclusive(format!(
            "horizon {} too short for window [{r}, {end}]",
            s.horizon()
        ));
    }
    let watched = s.continuously_awake(r, end);
    if watched.is_empty() {
        return Verdict::na(format!(
            "no well-behaved process awake throughout [{r}, {end}]"
        ));
    }
    let fresh: BTreeSet<Value> = trace
        .sends()
        .filter(|(round, a, _)| *round >= r && *round <= end && s.honest(*round).contains(a))
        .filter_map(|(_, _, p)| match &p.msg {
            Message::Propose(prop) => prop.log.last().copied(),
            _ => None,
        })
        .collect();
    let delivered = delivered_by(trace, end);
    for p in watched {
        let log = delivered.get(&p).cloned().unwrap_or_default();
        if !log.values().iter().any(|v| fresh.contains(v)) {
            return Verdict::fail(Witness::NoProgress {
                pid: p,
                from: r,
                to: end,
                delivered: log,
            });
        }
    }
    Verdict::Pass
}

/// Liveness over every view-aligned window `[r, r+w]` with `r ≥ from`
/// that fits in the horizon.
pub fn check_liveness_throughout(trace: &Trace, from: Round, w: u64) -> Verdict {
    let horizon = trace.schedule().horizon() as Round;
    let starts: Vec<Round> = (from..)
        .step_by(2)
        .take_while(|r| r + w < horizon)
        .collect();
    if starts.is_empty() {
        return check_liveness_after(trace, from, w);
    }
    Verdict::fold(
        starts
            .into_iter()
            .map(|r| check_liveness_after(trace, r, w)),
        "no window",
    )
}

/// No well-behaved process awake at `r_a` decides a log conflicting with
/// `D_{r_a}` during `[r_a+1, r_a+π+1]`, and none at all does afterwards.
///
/// Decisions are stamped with the send phase that follows the instance they
/// read, so `D_{r_a}` holds the decisions stamped up to `r_a + 1`: those
/// were taken on the output of the synchronous round `r_a`.
pub fn check_async_resilience(trace: &Trace, last_sync: Round, length: u64) -> Verdict {
    if length == 0 {
        return Verdict::Pass;
    }
    let s = trace.schedule();
    let cut = last_sync + 1;
    let before = distinct_decisions(trace.decisions().filter(|d| d.round <= cut));
    let awake_before = s.honest(last_sync);
    let heal = last_sync + length + 1;
    for d in trace.decisions().filter(|d| d.round > cut) {
        if d.round <= heal && !awake_before.contains(&d.pid) {
            continue;
        }
        if let Some(b) = before.iter().find(|b| b.log.conflicts_with(&d.log)) {
            return conflict(b, &d);
        }
    }
    Verdict::Pass
}

/// Last round of the first view lying entirely after `last_async`.
pub fn healing_round(last_async: Round) -> Round {
    let v = (last_async + 2).div_ceil(2);
    ViewClock::round2(v)
}

/// Healing verdicts: safety among decisions after `after`, and liveness
/// over `[after, after + w]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Healing {
    pub after: Round,
    pub safety: Verdict,
    pub liveness: Verdict,
}

pub fn check_healing(trace: &Trace, last_async: Round, w: u64) -> Healing {
    let after = healing_round(last_async);
    let last = trace.schedule().horizon() as Round - 1;
    // at least two more views so that a decision can happen
    let safety = if last < after + 4 {
        Verdict::inconclusive(format!(
            "trace ends at {last}, before two views past {after}"
        ))
    } else {
        check_safety_after(trace, Some(after))
    };
    Healing {
        after,
        safety,
        liveness: check_liveness_after(trace, after, w),
    }
}

/// Every log decided at some round `r ≤ r_a` is extended by every
/// well-behaved vote cast in `[r, r_a]`.
pub fn check_decided_implies_voted(trace: &Trace, last_sync: Round) -> Verdict {
    let s = trace.schedule();
    let decided = distinct_decisions(trace.decisions().filter(|d| d.round <= last_sync));
    if decided.is_empty() {
        return Verdict::na(format!("nothing decided by round {last_sync}"));
    }
    let votes: Vec<(Round, ProcessId, &Log)> = trace
        .sends()
        .filter(|(r, a, _)| *r <= last_sync && s.honest(*r).contains(a))
        .filter_map(|(r, a, p)| match &p.msg {
            Message::Vote(v) => Some((r, a, &v.log)),
            _ => None,
        })
        .collect();
    for d in &decided {
        if let Some((r, a, log)) = votes
            .iter()
            .find(|(r, _, log)| *r >= d.round && !d.log.is_prefix_of(log))
        {
            return Verdict::fail(Witness::Vote {
                round: *r,
                pid: *a,
                log: (*log).clone(),
                required: d.log.clone(),
                since: d.round,
            });
        }
    }
    Verdict::Pass
}

/// With `Λ` the common prefix of the round-`r_a` votes of `H_{r_a}`, every
/// vote by `H_{r_a} ∩ H_r \ B_r` for `r ∈ [r_a+1, r_a+π+1]` extends `Λ`.
pub fn check_clique_persistence(trace: &Trace, last_sync: Round, length: u64) -> Verdict {
    let s = trace.schedule();
    let clique = s.honest(last_sync);
    let votes: Vec<(Round, ProcessId, &Log)> = trace
        .sends()
        .filter_map(|(r, a, p)| match &p.msg {
            Message::Vote(v) if s.honest(r).contains(&a) => Some((r, a, &v.log)),
            _ => None,
        })
        .collect();
    let base: Vec<&Log> = votes
        .iter()
        .filter(|(r, a, _)| *r == last_sync && clique.contains(a))
        .map(|(_, _, l)| *l)
        .collect();
    let Some(lambda) = crate::types::longest_common_prefix(base.iter().copied()) else {
        return Verdict::na(format!("no votes at round {last_sync}"));
    };
    let last = last_sync + length + 1;
    for (r, a, log) in &votes {
        if *r > last_sync && *r <= last && clique.contains(a) && !lambda.is_prefix_of(log) {
            return Verdict::fail(Witness::Vote {
                round: *r,
                pid: *a,
                log: (*log).clone(),
                required: lambda,
                since: last_sync,
            });
        }
    }
    Verdict::Pass
}
