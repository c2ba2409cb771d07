//! Who is awake, who is Byzantine, and which rounds are synchronous.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ProcessId, ProcessSet, Round};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSpec {
    /// `H_r`: well-behaved processes awake at the beginning of the round.
    pub honest: ProcessSet,
    /// `B_r`.
    pub byzantine: ProcessSet,
    pub synchronous: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub n: usize,
    pub rounds: Vec<RoundSpec>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("schedule has no rounds")]
    Empty,
    #[error("round {round}: process {pid} out of range for n = {n}")]
    OutOfRange {
        round: Round,
        pid: ProcessId,
        n: usize,
    },
    #[error("round {round}: {pid} is both well-behaved and Byzantine")]
    Overlap { round: Round, pid: ProcessId },
    #[error("round {round}: Byzantine {pid} stops being Byzantine")]
    Shrinking { round: Round, pid: ProcessId },
    #[error("round 0 must be synchronous")]
    AsyncStart,
}

/// Where the asynchronous rounds are.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AsyncWindow {
    None,
    /// Rounds `[last_sync + 1, last_sync + length]` are asynchronous.
    Single {
        last_sync: Round,
        length: u64,
    },
    /// More than one asynchronous period; outside what the oracles can vouch for.
    Multiple {
        periods: Vec<(Round, Round)>,
    },
}

impl AsyncWindow {
    /// First synchronous round after the window (`r_a + π + 1`).
    pub fn first_sync_after(&self) -> Option<Round> {
        match self {
            AsyncWindow::Single { last_sync, length } => Some(last_sync + length + 1),
            _ => None,
        }
    }
}

impl Schedule {
    /// `n` well-behaved processes awake in every round, all synchronous.
    pub fn all_awake(n: usize, horizon: usize) -> Self {
        let honest = crate::types::all_processes(n);
        Schedule {
            n,
            rounds: vec![
                RoundSpec {
                    honest,
                    byzantine: ProcessSet::new(),
                    synchronous: true,
                };
                horizon
            ],
        }
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn round(&self, r: Round) -> &RoundSpec {
        &self.rounds[r as usize]
    }

    pub fn honest(&self, r: Round) -> &ProcessSet {
        &self.round(r).honest
    }

    pub fn byzantine(&self, r: Round) -> &ProcessSet {
        &self.round(r).byzantine
    }

    pub fn is_sync(&self, r: Round) -> bool {
        self.round(r).synchronous
    }

    /// `S_r = H_r ∪ B_r`.
    pub fn awake(&self, r: Round) -> ProcessSet {
        let spec = self.round(r);
        spec.honest.union(&spec.byzantine).copied().collect()
    }

    /// `H_{s,r}`: union of `H` over `[max(s, 0), r]`, empty when `s > r`.
    pub fn honest_union(&self, s: i64, r: i64) -> ProcessSet {
        self.union_over(s, r, |spec| Box::new(spec.honest.iter()))
    }

    /// `S_{s,r}`.
    pub fn awake_union(&self, s: i64, r: i64) -> ProcessSet {
        self.union_over(s, r, |spec| {
            Box::new(spec.honest.iter().chain(spec.byzantine.iter()))
        })
    }

    fn union_over<F>(&self, s: i64, r: i64, members: F) -> ProcessSet
    where
        F: for<'a> Fn(&'a RoundSpec) -> Box<dyn Iterator<Item = &'a ProcessId> + 'a>,
    {
        let lo = s.max(0);
        let hi = r.min(self.horizon() as i64 - 1);
        if lo > hi {
            return ProcessSet::new();
        }
        (lo..=hi)
            .flat_map(|k| members(&self.rounds[k as usize]).copied())
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.rounds.is_empty() {
            return Err(ScheduleError::Empty);
        }
        if !self.rounds[0].synchronous {
            return Err(ScheduleError::AsyncStart);
        }
        for (r, spec) in self.rounds.iter().enumerate() {
            let round = r as Round;
            for &pid in spec.honest.iter().chain(spec.byzantine.iter()) {
                if pid.index() >= self.n {
                    return Err(ScheduleError::OutOfRange {
                        round,
                        pid,
                        n: self.n,
                    });
                }
            }
            if let Some(&pid) = spec.honest.intersection(&spec.byzantine).next() {
                return Err(ScheduleError::Overlap { round, pid });
            }
            if r > 0 {
                let prev = &self.rounds[r - 1].byzantine;
                if let Some(&pid) = prev.difference(&spec.byzantine).next() {
                    return Err(ScheduleError::Shrinking { round, pid });
                }
            }
        }
        Ok(())
    }

    /// Maximal runs of asynchronous rounds.
    pub fn async_periods(&self) -> Vec<(Round, Round)> {
        let mut out = Vec::new();
        let mut start = None;
        for (r, spec) in self.rounds.iter().enumerate() {
            match (spec.synchronous, start) {
                (false, None) => start = Some(r as Round),
                (true, Some(s)) => {
                    out.push((s, r as Round - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.horizon() as Round - 1));
        }
        out
    }

    pub fn async_window(&self) -> AsyncWindow {
        let periods = self.async_periods();
        match periods.as_slice() {
            [] => AsyncWindow::None,
            [(s, e)] => AsyncWindow::Single {
                last_sync: s - 1,
                length: e - s + 1,
            },
            _ => AsyncWindow::Multiple { periods },
        }
    }

    /// Marks `[last_sync + 1, last_sync + length]` asynchronous (clamped to the horizon).
    pub fn with_window(mut self, last_sync: Round, length: u64) -> Self {
        for r in last_sync + 1..=last_sync + length {
            if let Some(spec) = self.rounds.get_mut(r as usize) {
                spec.synchronous = false;
            }
        }
        self
    }

    /// Well-behaved processes awake in every round of `[from, to]`.
    pub fn continuously_awake(&self, from: Round, to: Round) -> ProcessSet {
        let mut iter = (from..=to.min(self.horizon() as Round - 1)).map(|r| self.honest(r));
        let Some(first) = iter.next() else {
            return ProcessSet::new();
        };
        let mut acc = first.clone();
        for set in iter {
            acc.retain(|p| set.contains(p));
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[u32]) -> ProcessSet {
        ids.iter().copied().map(ProcessId).collect()
    }

    #[test]
    fn unions_clamp_negative_start() {
        let mut s = Schedule::all_awake(4, 3);
        s.rounds[0].honest = set(&[0]);
        s.rounds[1].honest = set(&[1]);
        assert_eq!(s.honest_union(-3, 1), set(&[0, 1]));
        assert!(s.honest_union(2, 1).is_empty());
    }

    #[test]
    fn window_detection() {
        let s = Schedule::all_awake(3, 10).with_window(4, 2);
        assert_eq!(
            s.async_window(),
            AsyncWindow::Single {
                last_sync: 4,
                length: 2
            }
        );
        let s = s.with_window(7, 1);
        assert!(matches!(s.async_window(), AsyncWindow::Multiple { .. }));
        assert_eq!(Schedule::all_awake(3, 4).async_window(), AsyncWindow::None);
    }

    #[test]
    fn validation_errors() {
        let mut s = Schedule::all_awake(3, 3);
        s.rounds[1].byzantine = set(&[0]);
        assert!(matches!(s.validate(), Err(ScheduleError::Overlap { .. })));
        s.rounds[1].honest = set(&[1, 2]);
        s.rounds[2].honest = set(&[1, 2]);
        assert!(matches!(s.validate(), Err(ScheduleError::Shrinking { .. })));
        s.rounds[2].byzantine = set(&[0]);
        assert_eq!(s.validate(), Ok(()));
        s.rounds[2].byzantine = set(&[0, 7]);
        assert!(matches!(
            s.validate(),
            Err(ScheduleError::OutOfRange { .. })
        ));
        let s = Schedule::all_awake(3, 3).with_window(0, 1);
        assert_eq!(s.validate(), Ok(()));
        let mut s = Schedule::all_awake(3, 3);
        s.rounds[0].synchronous = false;
        assert_eq!(s.validate(), Err(ScheduleError::AsyncStart));
    }

    #[test]
    fn continuously_awake_intersects() {
        let mut s = Schedule::all_awake(3, 4);
        s.rounds[2].honest = set(&[0, 1]);
        assert_eq!(s.continuously_awake(1, 3), set(&[0, 1]));
        assert_eq!(s.continuously_awake(3, 3), set(&[0, 1, 2]));
    }
}
