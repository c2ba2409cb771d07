//! Run traces and their JSON-lines encoding.
//!
//! The first line is a header (`"kind": "header"`); every further line is one
//! event object with `kind`, `round`, `actor` and `payload`.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::{ModelParams, Rational};
use crate::ga::GaRecord;
use crate::types::{Log, Message, ProcessId, Recipients, Round};
use crate::world::schedule::Schedule;

pub type MsgId = u64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendPayload {
    pub id: MsgId,
    pub to: Recipients,
    pub msg: Message,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventBody {
    Send(SendPayload),
    /// Id of a previously sent message.
    Deliver(MsgId),
    Decide(Log),
    Ga(Box<GaRecord>),
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::Send(_) => EventKind::Send,
            EventBody::Deliver(_) => EventKind::Deliver,
            EventBody::Decide(_) => EventKind::Decide,
            EventBody::Ga(_) => EventKind::Ga,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Send,
    Deliver,
    Decide,
    Ga,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub round: Round,
    /// Sender, receiver or decider; absent for instance records.
    pub actor: Option<ProcessId>,
    pub body: EventBody,
}

impl Serialize for Event {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Event", 4)?;
        st.serialize_field("kind", &self.body.kind())?;
        st.serialize_field("round", &self.round)?;
        st.serialize_field("actor", &self.actor)?;
        match &self.body {
            EventBody::Send(p) => st.serialize_field("payload", p)?,
            EventBody::Deliver(id) => st.serialize_field("payload", id)?,
            EventBody::Decide(log) => st.serialize_field("payload", log)?,
            EventBody::Ga(rec) => st.serialize_field("payload", rec)?,
        }
        st.end()
    }
}

impl<'de> Deserialize<'de> for Event {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            kind: EventKind,
            round: Round,
            actor: Option<ProcessId>,
            payload: serde_json::Value,
        }
        use serde::de::Error;
        let raw = Raw::deserialize(d)?;
        let p = raw.payload;
        let body = match raw.kind {
            EventKind::Send => {
                EventBody::Send(serde_json::from_value(p).map_err(D::Error::custom)?)
            }
            EventKind::Deliver => {
                EventBody::Deliver(serde_json::from_value(p).map_err(D::Error::custom)?)
            }
            EventKind::Decide => {
                EventBody::Decide(serde_json::from_value(p).map_err(D::Error::custom)?)
            }
            EventKind::Ga => EventBody::Ga(serde_json::from_value(p).map_err(D::Error::custom)?),
        };
        Ok(Event {
            round: raw.round,
            actor: raw.actor,
            body,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub kind: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub model: ModelParams<Rational>,
    pub strategy: String,
    pub schedule: Schedule,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<Event>,
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("trace has no header line")]
    MissingHeader,
}

/// A decision taken by a well-behaved process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub round: Round,
    pub pid: ProcessId,
    pub log: Log,
}

impl Trace {
    pub fn schedule(&self) -> &Schedule {
        &self.header.schedule
    }

    pub fn decisions(&self) -> impl Iterator<Item = Decision> + '_ {
        self.events.iter().filter_map(|e| match (&e.body, e.actor) {
            (EventBody::Decide(log), Some(pid)) => Some(Decision {
                round: e.round,
                pid,
                log: log.clone(),
            }),
            _ => None,
        })
    }

    /// `D_r`: every log decided by a well-behaved process in rounds `≤ r`.
    pub fn decided_by(&self, r: Round) -> Vec<Log> {
        let mut out: Vec<Log> = self
            .decisions()
            .filter(|d| d.round <= r)
            .map(|d| d.log)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Longest log each process decided, at the end of the run.
    pub fn final_delivered(&self) -> BTreeMap<ProcessId, Log> {
        let mut out: BTreeMap<ProcessId, Log> = BTreeMap::new();
        for d in self.decisions() {
            let slot = out.entry(d.pid).or_default();
            if !d.log.is_prefix_of(slot) {
                *slot = d.log;
            }
        }
        out
    }

    pub fn sends(&self) -> impl Iterator<Item = (Round, ProcessId, &SendPayload)> {
        self.events.iter().filter_map(|e| match (&e.body, e.actor) {
            (EventBody::Send(p), Some(a)) => Some((e.round, a, p)),
            _ => None,
        })
    }

    pub fn ga_records(&self) -> impl Iterator<Item = &GaRecord> {
        self.events.iter().filter_map(|e| match &e.body {
            EventBody::Ga(rec) => Some(rec.as_ref()),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TraceIoError> {
        serde_json::to_writer(&mut w, &self.header)
            .map_err(|source| TraceIoError::Json { line: 1, source })?;
        w.write_all(b"\n")?;
        for (i, e) in self.events.iter().enumerate() {
            serde_json::to_writer(&mut w, e).map_err(|source| TraceIoError::Json {
                line: i + 2,
                source,
            })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceIoError> {
        let mut lines = r.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?)
                .map_err(|source| TraceIoError::Json { line: 1, source })?,
            None => return Err(TraceIoError::MissingHeader),
        };
        let mut events = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(
                serde_json::from_str(&line).map_err(|source| TraceIoError::Json {
                    line: i + 1,
                    source,
                })?,
            );
        }
        Ok(Trace { header, events })
    }
}
