//! The round loop.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::checks::{ModelParams, Rational};
use crate::ga::GaRecord;
use crate::tob::ProcessState;
use crate::types::{Log, Message, ProcessId, Recipients, Round};
use crate::world::adversary::{Adversary, AdversaryView, Envelope};
use crate::world::schedule::{Schedule, ScheduleError};
use crate::world::trace::{Event, EventBody, MsgId, SendPayload, Trace, TraceHeader};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("round {round}: adversary authored a message as {sender}, which is not Byzantine")]
    Forged { round: Round, sender: ProcessId },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub model: ModelParams<Rational>,
}

struct World<'a> {
    schedule: &'a Schedule,
    cfg: &'a RunConfig,
    procs: Vec<ProcessState>,
    envelopes: BTreeMap<MsgId, Envelope>,
    pending: BTreeMap<ProcessId, BTreeSet<MsgId>>,
    delivered: BTreeMap<ProcessId, Log>,
    events: Vec<Event>,
    next_id: MsgId,
}

impl World<'_> {
    fn push(&mut self, round: Round, actor: Option<ProcessId>, body: EventBody) {
        self.events.push(Event { round, actor, body });
    }

    fn send(&mut self, round: Round, to: Recipients, msg: Message) -> Envelope {
        let id = self.next_id;
        self.next_id += 1;
        let sender = msg.sender();
        let byz = self.schedule.byzantine(round);
        for q in (0..self.schedule.n as u32).map(ProcessId) {
            if q != sender && !byz.contains(&q) && to.includes(q) {
                self.pending.entry(q).or_default().insert(id);
            }
        }
        let env = Envelope {
            id,
            round,
            to: to.clone(),
            msg: msg.clone(),
        };
        self.envelopes.insert(id, env.clone());
        self.push(
            round,
            Some(sender),
            EventBody::Send(SendPayload { id, to, msg }),
        );
        env
    }

    fn deliver(&mut self, round: Round, rx: ProcessId, ids: impl IntoIterator<Item = MsgId>) {
        let Some(pending) = self.pending.get_mut(&rx) else {
            return;
        };
        let ids: BTreeSet<MsgId> = ids.into_iter().filter(|id| pending.remove(id)).collect();
        for id in ids {
            self.procs[rx.index()].receive(&self.envelopes[&id].msg);
            self.push(round, Some(rx), EventBody::Deliver(id));
        }
    }
}

/// Runs the protocol over `schedule`. Deterministic in all inputs.
pub fn run(
    schedule: &Schedule,
    adversary: &mut dyn Adversary,
    cfg: &RunConfig,
) -> Result<Trace, WorldError> {
    schedule.validate()?;
    let mut w = World {
        schedule,
        cfg,
        procs: (0..schedule.n as u32)
            .map(|p| ProcessState::new(ProcessId(p), cfg.seed, cfg.model.eta))
            .collect(),
        envelopes: BTreeMap::new(),
        pending: BTreeMap::new(),
        delivered: BTreeMap::new(),
        events: Vec::new(),
        next_id: 0,
    };
    let horizon = schedule.horizon() as Round;
    for r in 0..horizon {
        let spec = schedule.round(r);
        // corrupted processes stop receiving on behalf of the protocol
        for b in &spec.byzantine {
            w.pending.remove(b);
        }

        let mut honest_sent = Vec::new();
        for &p in &spec.honest {
            let out = w.procs[p.index()].step(r);
            if let Some(d) = out.decided {
                w.delivered.insert(p, w.procs[p.index()].delivered.clone());
                w.push(r, Some(p), EventBody::Decide(d));
            }
            for m in out.messages {
                honest_sent.push(w.send(r, Recipients::All, m));
            }
        }

        let outgoing = {
            let view = AdversaryView {
                round: r,
                schedule,
                seed: cfg.seed,
                honest_sent: &honest_sent,
                delivered: &w.delivered,
            };
            adversary.act(&view)
        };
        for o in outgoing {
            let sender = o.msg.sender();
            if !spec.byzantine.contains(&sender) {
                return Err(WorldError::Forged { round: r, sender });
            }
            w.send(r, o.to, o.msg);
        }

        if r + 1 == horizon {
            break;
        }
        let receivers = schedule.honest(r + 1).clone();
        for &rx in &receivers {
            let pending: Vec<MsgId> = w
                .pending
                .get(&rx)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            let chosen = if spec.synchronous {
                pending
            } else {
                let envs: Vec<&Envelope> = pending.iter().map(|id| &w.envelopes[id]).collect();
                let view = AdversaryView {
                    round: r,
                    schedule,
                    seed: cfg.seed,
                    honest_sent: &honest_sent,
                    delivered: &w.delivered,
                };
                adversary.deliver(&view, rx, &envs)
            };
            w.deliver(r, rx, chosen);
        }

        if r >= 1 {
            let mut record = GaRecord {
                round: r,
                synchronous: spec.synchronous,
                byzantine: spec.byzantine.clone(),
                ..GaRecord::default()
            };
            for env in &honest_sent {
                if let Message::Vote(v) = &env.msg {
                    record.inputs.insert(v.sender, v.log.clone());
                }
            }
            for &rx in &receivers {
                let out = w.procs[rx.index()].finish_round(r);
                record.initial.insert(rx, out.initial);
                record.received.insert(rx, out.received);
                record.outputs.insert(rx, out.output);
                record.participation.insert(rx, out.participation);
            }
            w.push(r, None, EventBody::Ga(Box::new(record)));
        }
    }

    Ok(Trace {
        header: TraceHeader {
            kind: "header".into(),
            scenario: w.cfg.scenario.clone(),
            scenario_hash: w.cfg.scenario_hash.clone(),
            seed: cfg.seed,
            model: cfg.model.clone(),
            strategy: adversary.name().into(),
            schedule: schedule.clone(),
        },
        events: w.events,
    })
}
