//! Structural checks on a trace and the independent re-tally of every
//! recorded graded-agreement instance.

use std::collections::{BTreeMap, BTreeSet};

use crate::types::{Log, Message, ProcessId, Recipients, Round, VoteMsg};
use crate::world::trace::{EventBody, MsgId, Trace};

use super::{naive_grade, Verdict, Witness};

fn malformed(round: Round, detail: String) -> Verdict {
    Verdict::fail(Witness::Malformed { round, detail })
}

/// Events are well-formed with respect to the schedule:
///
/// * senders are awake, well-behaved senders multicast at most one vote per
///   round and stamp it with the current round;
/// * deliveries name a message sent earlier, addressed to a well-behaved
///   receiver awake at the next round, at most once;
/// * after a synchronous round, every receiver holds every message
///   addressed to it so far;
/// * deciders are awake and well-behaved.
pub fn check_trace_integrity(trace: &Trace) -> Verdict {
    let s = trace.schedule();
    if let Err(e) = s.validate() {
        return malformed(0, format!("schedule: {e}"));
    }
    let horizon = s.horizon() as Round;
    let mut sent: BTreeMap<MsgId, (Round, ProcessId, &Recipients)> = BTreeMap::new();
    let mut delivered: BTreeSet<(ProcessId, MsgId)> = BTreeSet::new();
    let mut honest_votes: BTreeSet<(Round, ProcessId)> = BTreeSet::new();
    let mut last_round = 0;

    let mut idx = 0;
    for r in 0..horizon {
        while let Some(e) = trace.events.get(idx) {
            if e.round != r {
                break;
            }
            idx += 1;
            match (&e.body, e.actor) {
                (EventBody::Send(p), Some(a)) => {
                    if p.msg.sender() != a {
                        return malformed(
                            r,
                            format!("message {} sent by {a} as {}", p.id, p.msg.sender()),
                        );
                    }
                    if !s.awake(r).contains(&a) {
                        return malformed(r, format!("{a} sent while asleep"));
                    }
                    if sent.insert(p.id, (r, a, &p.to)).is_some() {
                        return malformed(r, format!("message id {} reused", p.id));
                    }
                    if s.honest(r).contains(&a) {
                        if p.to != Recipients::All {
                            return malformed(r, format!("{a} did not multicast"));
                        }
                        if let Message::Vote(v) = &p.msg {
                            if v.round != r || !honest_votes.insert((r, a)) {
                                return malformed(r, format!("{a} voted twice or off-round"));
                            }
                        }
                    }
                }
                (EventBody::Deliver(id), Some(rx)) => {
                    let Some(&(at, from, to)) = sent.get(id) else {
                        return malformed(r, format!("delivery of unknown message {id}"));
                    };
                    if at > r || from == rx || !to.includes(rx) {
                        return malformed(r, format!("message {id} not deliverable to {rx}"));
                    }
                    if r + 1 >= horizon || !s.honest(r + 1).contains(&rx) {
                        return malformed(r, format!("{rx} received while not awake"));
                    }
                    if !delivered.insert((rx, *id)) {
                        return malformed(r, format!("message {id} delivered twice to {rx}"));
                    }
                }
                (EventBody::Decide(_), Some(p)) => {
                    if !s.honest(r).contains(&p) {
                        return malformed(r, format!("{p} decided while not awake"));
                    }
                }
                (EventBody::Ga(rec), None) => {
                    if rec.round != r || r == 0 {
                        return malformed(r, "instance record out of place".into());
                    }
                    let rx: BTreeSet<ProcessId> = rec.outputs.keys().copied().collect();
                    if r + 1 < horizon && &rx != s.honest(r + 1) {
                        return malformed(
                            r,
                            "instance receivers differ from the next round's awake set".into(),
                        );
                    }
                }
                _ => return malformed(r, "event without the expected actor".into()),
            }
        }
        if s.is_sync(r) && r + 1 < horizon {
            for &rx in s.honest(r + 1) {
                let missing = sent
                    .iter()
                    .find(|(id, (_, from, to))| {
                        *from != rx && to.includes(rx) && !delivered.contains(&(rx, **id))
                    })
                    .map(|(id, _)| *id);
                if let Some(id) = missing {
                    return malformed(
                        r,
                        format!("synchronous round ended with message {id} undelivered to {rx}"),
                    );
                }
            }
        }
        last_round = r;
    }
    if idx != trace.events.len() {
        let e = &trace.events[idx];
        return malformed(
            e.round.max(last_round),
            "events out of round order or past the horizon".into(),
        );
    }
    Verdict::Pass
}

/// Recomputes every receiver's output from the messages it was delivered
/// (plus its own) and compares with the recorded one.
///
/// Admissible votes per sender: the latest round within the expiration
/// window up to the instance round; two different logs in that round void
/// the sender.
pub fn check_tally_equivalence(trace: &Trace) -> Verdict {
    let s = trace.schedule();
    let eta = trace.header.model.eta;
    let mut msgs: BTreeMap<MsgId, &VoteMsg> = BTreeMap::new();
    let mut held: BTreeMap<ProcessId, Vec<&VoteMsg>> = BTreeMap::new();
    let mut checked = 0usize;

    for e in &trace.events {
        match (&e.body, e.actor) {
            (EventBody::Send(p), Some(a)) => {
                if let Message::Vote(v) = &p.msg {
                    msgs.insert(p.id, v);
                    if s.honest(e.round).contains(&a) {
                        held.entry(a).or_default().push(v);
                    }
                }
            }
            (EventBody::Deliver(id), Some(rx)) => {
                if let Some(v) = msgs.get(id) {
                    held.entry(rx).or_default().push(v);
                }
            }
            (EventBody::Ga(rec), _) => {
                let r = rec.round;
                let lo = eta.window_start(r);
                for (rx, recorded) in &rec.outputs {
                    let mut latest: BTreeMap<ProcessId, (Round, BTreeSet<&Log>)> = BTreeMap::new();
                    for v in held.get(rx).into_iter().flatten() {
                        if v.round < lo || v.round > r {
                            continue;
                        }
                        let slot = latest.entry(v.sender).or_insert((v.round, BTreeSet::new()));
                        if v.round > slot.0 {
                            *slot = (v.round, BTreeSet::new());
                        }
                        if v.round == slot.0 {
                            slot.1.insert(&v.log);
                        }
                    }
                    let votes: BTreeMap<ProcessId, Log> = latest
                        .into_iter()
                        .filter(|(_, (_, logs))| logs.len() == 1)
                        .map(|(p, (_, logs))| (p, (*logs.iter().next().expect("one")).clone()))
                        .collect();
                    let recomputed = naive_grade(&votes);
                    let participation = rec.participation.get(rx).copied();
                    if &recomputed != recorded || participation != Some(votes.len()) {
                        return Verdict::fail(Witness::Tally {
                            round: r,
                            receiver: *rx,
                            recomputed,
                            recorded: recorded.clone(),
                        });
                    }
                    checked += 1;
                }
            }
            _ => {}
        }
    }
    if checked == 0 {
        Verdict::na("no graded-agreement instance recorded")
    } else {
        Verdict::Pass
    }
}
