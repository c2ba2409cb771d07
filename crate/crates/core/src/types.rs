//! Identities, values, logs and protocol messages.
//!
//! A [`Log`] is a finite sequence of [`Value`]s ordered by the prefix
//! relation. Everything above this module (graded agreement, the broadcast
//! state machine, the oracles) is expressed in terms of that relation.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::vrf::VrfTag;

pub type Round = u64;
pub type View = u64;

/// Index of a process in `[0, n)`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

pub type ProcessSet = BTreeSet<ProcessId>;

/// All process ids `0..n`.
pub fn all_processes(n: usize) -> ProcessSet {
    (0..n as u32).map(ProcessId).collect()
}

/// A block. `(proposer, view, id)` identifies it globally.
///
/// Field order matters: the derived `Ord` compares by `id` first, which is
/// the tie-break used when two conflicting logs have the same length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Value {
    pub id: u64,
    pub proposer: ProcessId,
    pub view: View,
}

impl Value {
    /// The block every process proposes in view 0.
    pub const GENESIS: Value = Value {
        id: 0,
        proposer: ProcessId(0),
        view: 0,
    };
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Value::GENESIS {
            write!(f, "b0")
        } else {
            write!(f, "{}@v{}#{}", self.proposer, self.view, self.id)
        }
    }
}

/// Finite sequence of values. Cloning is cheap.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Log(Arc<[Value]>);

impl Default for Log {
    fn default() -> Self {
        Log::empty()
    }
}

impl Log {
    pub fn empty() -> Self {
        Log(Arc::from(Vec::new()))
    }

    pub fn new(values: Vec<Value>) -> Self {
        Log(Arc::from(values))
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<&Value> {
        self.0.last()
    }

    /// `self ∥ value`.
    pub fn extended(&self, value: Value) -> Log {
        let mut v = self.0.to_vec();
        v.push(value);
        Log::new(v)
    }

    /// The first `len` values (clamped).
    pub fn truncated(&self, len: usize) -> Log {
        Log::new(self.0[..len.min(self.len())].to_vec())
    }

    /// Every prefix of `self`, shortest first, including `[]` and `self`.
    pub fn prefixes(&self) -> impl Iterator<Item = Log> + '_ {
        (0..=self.len()).map(move |k| self.truncated(k))
    }

    pub fn contains(&self, value: &Value) -> bool {
        self.0.contains(value)
    }

    /// `self ⪯ other`.
    pub fn is_prefix_of(&self, other: &Log) -> bool {
        is_prefix(self, other)
    }

    /// `other ⪯ self`.
    pub fn extends(&self, other: &Log) -> bool {
        is_prefix(other, self)
    }

    pub fn conflicts_with(&self, other: &Log) -> bool {
        !compatible(self, other)
    }
}

impl From<Vec<Value>> for Log {
    fn from(values: Vec<Value>) -> Self {
        Log::new(values)
    }
}

impl fmt::Debug for Log {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Log {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

/// True iff `a` is an initial segment of `b`.
pub fn is_prefix(a: &Log, b: &Log) -> bool {
    a.len() <= b.len() && a.values() == &b.values()[..a.len()]
}

/// True iff one of the logs is a prefix of the other.
pub fn compatible(a: &Log, b: &Log) -> bool {
    is_prefix(a, b) || is_prefix(b, a)
}

/// Longest log that is a prefix of every member. `None` for an empty input.
pub fn longest_common_prefix<'a, I>(logs: I) -> Option<Log>
where
    I: IntoIterator<Item = &'a Log>,
{
    let mut iter = logs.into_iter();
    let first = iter.next()?;
    let mut len = first.len();
    for log in iter {
        len = first
            .values()
            .iter()
            .zip(log.values())
            .take(len)
            .take_while(|(a, b)| a == b)
            .count();
    }
    Some(first.truncated(len))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoteMsg {
    pub sender: ProcessId,
    pub round: Round,
    pub log: Log,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProposeMsg {
    pub sender: ProcessId,
    pub view: View,
    pub log: Log,
    pub vrf: VrfTag,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Vote(VoteMsg),
    Propose(ProposeMsg),
}

impl Message {
    pub fn sender(&self) -> ProcessId {
        match self {
            Message::Vote(v) => v.sender,
            Message::Propose(p) => p.sender,
        }
    }
}

impl From<VoteMsg> for Message {
    fn from(v: VoteMsg) -> Self {
        Message::Vote(v)
    }
}

impl From<ProposeMsg> for Message {
    fn from(p: ProposeMsg) -> Self {
        Message::Propose(p)
    }
}

/// Addressees of a message. Well-behaved processes always multicast;
/// Byzantine ones may target a subset.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipients {
    All,
    Only(ProcessSet),
}

impl Recipients {
    pub fn includes(&self, p: ProcessId) -> bool {
        match self {
            Recipients::All => true,
            Recipients::Only(set) => set.contains(&p),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn val(id: u64) -> Value {
        Value {
            id,
            proposer: ProcessId(0),
            view: 1,
        }
    }

    pub(crate) fn log(ids: &[u64]) -> Log {
        Log::new(ids.iter().map(|&i| val(i)).collect())
    }

    #[test]
    fn prefix_examples() {
        assert!(is_prefix(&log(&[]), &log(&[1])));
        assert!(is_prefix(&log(&[1, 2]), &log(&[1, 2])));
        assert!(!is_prefix(&log(&[1, 2]), &log(&[1, 3])));
    }

    #[test]
    fn compatible_examples() {
        assert!(compatible(&log(&[1]), &log(&[1, 2])));
        assert!(!compatible(&log(&[1, 2]), &log(&[1, 3])));
        assert!(compatible(&log(&[]), &log(&[])));
    }

    #[test]
    fn lcp_examples() {
        let lcp = |ls: &[Log]| longest_common_prefix(ls).unwrap();
        assert_eq!(lcp(&[log(&[1, 2]), log(&[1, 3])]), log(&[1]));
        assert_eq!(lcp(&[log(&[1, 2])]), log(&[1, 2]));
        assert_eq!(lcp(&[log(&[1]), log(&[2])]), log(&[]));
        assert_eq!(longest_common_prefix(std::iter::empty()), None);
    }

    /// Every log of length ≤ 4 over three values.
    fn small_logs() -> Vec<Log> {
        let mut out = vec![log(&[])];
        let mut frontier = vec![Vec::<u64>::new()];
        for _ in 0..4 {
            let mut next = Vec::new();
            for prefix in &frontier {
                for v in 1..=3 {
                    let mut l = prefix.clone();
                    l.push(v);
                    out.push(log(&l));
                    next.push(l);
                }
            }
            frontier = next;
        }
        out
    }

    #[test]
    fn prefix_is_partial_order_exhaustive() {
        let logs = small_logs();
        assert_eq!(logs.len(), 1 + 3 + 9 + 27 + 81);
        for a in &logs {
            assert!(is_prefix(a, a));
            for b in &logs {
                if is_prefix(a, b) && is_prefix(b, a) {
                    assert_eq!(a, b);
                }
                assert_eq!(compatible(a, b), compatible(b, a));
                for c in &logs {
                    if is_prefix(a, b) && is_prefix(b, c) {
                        assert!(is_prefix(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn conflict_survives_extension_exhaustive() {
        let logs = small_logs();
        for a in &logs {
            for b in &logs {
                if !compatible(a, b) {
                    for ext in logs.iter().filter(|e| is_prefix(a, e)) {
                        assert!(!compatible(ext, b), "{ext} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn lcp_is_greatest_common_prefix_exhaustive() {
        let logs = small_logs();
        for a in logs.iter().step_by(3) {
            for b in logs.iter().step_by(5) {
                let l = longest_common_prefix([a, b]).unwrap();
                assert!(is_prefix(&l, a) && is_prefix(&l, b));
                // no longer common prefix
                if l.len() < a.len() {
                    let longer = a.truncated(l.len() + 1);
                    assert!(!is_prefix(&longer, b));
                }
            }
        }
    }
}
