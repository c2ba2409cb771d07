#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use sleepy_tob::ga::{GaOutput, Grade, InitialVoteSet, Instance};
use sleepy_tob::types::{Log, ProcessId, ProcessSet, Recipients, Value, VoteMsg};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

pub fn value(id: u64) -> Value {
    Value {
        id,
        proposer: ProcessId(0),
        view: id,
    }
}

pub fn log(ids: &[u64]) -> Log {
    Log::new(ids.iter().map(|&i| value(i)).collect())
}

pub fn pids(ids: impl IntoIterator<Item = u32>) -> ProcessSet {
    ids.into_iter().map(ProcessId).collect()
}

/// A log from a small tree: at depth `d` the value is one of three siblings,
/// so random logs overlap and conflict often.
pub fn random_log<R: Rng>(rng: &mut R, bias: &Log) -> Log {
    if rng.gen_bool(0.4) {
        let keep = rng.gen_range(0..=bias.len());
        let mut l = bias.truncated(keep);
        for _ in 0..rng.gen_range(0..=1) {
            l = l.extended(value(10 * (l.len() as u64 + 1) + rng.gen_range(0..3)));
        }
        return l;
    }
    let depth = rng.gen_range(0..=4);
    Log::new(
        (1..=depth)
            .map(|d| value(10 * d + rng.gen_range(0..3)))
            .collect(),
    )
}

/// A synchronous instance at round 5 with random inputs, random targeted
/// Byzantine votes and random initial sets, subject to
/// `|H_r| > 2/3·|S_r ∪ P₀|`. Returns the instance and `S_r`.
pub fn random_sync_instance<R: Rng>(rng: &mut R, with_initial: bool) -> (Instance, ProcessSet) {
    loop {
        let n = rng.gen_range(3..=12u32);
        let mut ids: Vec<u32> = (0..n).collect();
        ids.shuffle(rng);
        let b = rng.gen_range(0..=(n as usize - 1) / 3);
        let byzantine = pids(ids[..b].iter().copied());
        let rest = &ids[b..];
        let h = rng.gen_range(1..=rest.len());
        let honest = pids(rest[..h].iter().copied());
        let sleepers: Vec<u32> = rest[h..].to_vec();
        let mut awake = honest.clone();
        awake.extend(byzantine.iter().copied());

        let bias = random_log(rng, &Log::empty());
        let common = rng.gen_bool(0.3);
        let inputs: BTreeMap<ProcessId, Log> = honest
            .iter()
            .map(|&p| {
                let l = if common {
                    bias.clone()
                } else {
                    random_log(rng, &bias)
                };
                (p, l)
            })
            .collect();

        let mut byzantine_votes = Vec::new();
        for &q in &byzantine {
            for _ in 0..rng.gen_range(0..=2) {
                let to = if rng.gen_bool(0.5) {
                    Recipients::All
                } else {
                    Recipients::Only(
                        honest
                            .iter()
                            .copied()
                            .filter(|_| rng.gen_bool(0.5))
                            .collect(),
                    )
                };
                byzantine_votes.push((
                    VoteMsg {
                        sender: q,
                        round: 5,
                        log: random_log(rng, &bias),
                    },
                    to,
                ));
            }
        }

        let mut initial = BTreeMap::new();
        if with_initial {
            let extra: Vec<u32> = sleepers
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.3))
                .collect();
            let mut pool: Vec<ProcessId> = awake.iter().copied().collect();
            pool.extend(extra.iter().map(|&p| ProcessId(p)));
            for &rx in &honest {
                let mut msgs = Vec::new();
                for &s in &pool {
                    if rng.gen_bool(0.5) {
                        msgs.push(VoteMsg {
                            sender: s,
                            round: rng.gen_range(3..5),
                            log: random_log(rng, &bias),
                        });
                    }
                }
                initial.insert(rx, InitialVoteSet::from_messages(rx, msgs));
            }
        }
        let mut universe = awake.clone();
        for set in initial.values() {
            universe.extend(set.senders());
        }
        if 3 * honest.len() <= 2 * universe.len() {
            continue;
        }
        let inst = Instance {
            round: 5,
            synchronous: true,
            byzantine,
            inputs,
            byzantine_votes,
            initial,
            receivers: honest,
        };
        return (inst, awake);
    }
}

/// Straight tally: for every candidate log, count the distinct senders
/// whose single vote extends it.
pub fn tally_by_hand(inst: &Instance, rx: ProcessId) -> GaOutput {
    let mut by_sender: BTreeMap<ProcessId, Vec<Log>> = BTreeMap::new();
    for (p, l) in &inst.inputs {
        by_sender.entry(*p).or_default().push(l.clone());
    }
    for (v, to) in &inst.byzantine_votes {
        if to.includes(rx) {
            by_sender.entry(v.sender).or_default().push(v.log.clone());
        }
    }
    let votes: Vec<Log> = by_sender
        .into_values()
        .filter_map(|mut ls| {
            ls.sort();
            ls.dedup();
            (ls.len() == 1).then(|| ls.pop().unwrap())
        })
        .collect();
    let m = votes.len();
    let mut out = GaOutput::default();
    let mut candidates: Vec<Log> = Vec::new();
    for v in &votes {
        for k in 0..=v.len() {
            candidates.push(v.truncated(k));
        }
    }
    candidates.sort();
    candidates.dedup();
    for c in candidates {
        let count = votes.iter().filter(|v| c.is_prefix_of(v)).count();
        if 3 * count > 2 * m {
            out.entries.insert(c, Grade::One);
        } else if 3 * count > m {
            out.entries.insert(c, Grade::Zero);
        }
    }
    out
}

/// The two-round split example: seven well-behaved processes (0–2 vote
/// `[1, 11]`, 3–6 vote `[1, 12]`) and three Byzantine ones (7–9). Round 4
/// is synchronous, round 5 delivers only Byzantine votes.
pub mod split {
    use super::*;
    use sleepy_tob::ga::{run_instance, GaRecord};

    pub const ROUND: u64 = 5;

    pub fn b() -> Log {
        log(&[1, 11])
    }
    pub fn b_prime() -> Log {
        log(&[1, 12])
    }
    pub fn c() -> Log {
        log(&[1, 13])
    }
    pub fn common() -> Log {
        log(&[1])
    }

    pub fn honest_vote(p: u32) -> Log {
        if p < 3 {
            b()
        } else {
            b_prime()
        }
    }

    pub fn byzantine() -> [ProcessId; 3] {
        [ProcessId(7), ProcessId(8), ProcessId(9)]
    }

    /// `earlier[i]` / `now[i]`: what Byzantine `7+i` sends `rx` in rounds 4 and 5.
    /// With `expiring`, round-4 votes are carried into round 5.
    pub fn instance(
        rx: u32,
        expiring: bool,
        earlier: [Option<Log>; 3],
        now: [Option<Log>; 3],
    ) -> GaRecord {
        let rxp = ProcessId(rx);
        let mut initial = InitialVoteSet::new(rxp);
        if expiring {
            let mut msgs: Vec<VoteMsg> = (0..7)
                .map(|p| VoteMsg {
                    sender: ProcessId(p),
                    round: ROUND - 1,
                    log: honest_vote(p),
                })
                .collect();
            for (q, l) in byzantine().into_iter().zip(earlier) {
                if let Some(l) = l {
                    msgs.push(VoteMsg {
                        sender: q,
                        round: ROUND - 1,
                        log: l,
                    });
                }
            }
            initial = InitialVoteSet::from_messages(rxp, msgs);
        }
        let inst = Instance {
            round: ROUND,
            synchronous: false,
            byzantine: byzantine().into_iter().collect(),
            inputs: (0..7).map(|p| (ProcessId(p), honest_vote(p))).collect(),
            byzantine_votes: byzantine()
                .into_iter()
                .zip(now)
                .filter_map(|(q, l)| {
                    l.map(|l| {
                        (
                            VoteMsg {
                                sender: q,
                                round: ROUND,
                                log: l,
                            },
                            Recipients::Only([rxp].into_iter().collect()),
                        )
                    })
                })
                .collect(),
            initial: [(rxp, initial)].into_iter().collect(),
            receivers: [rxp].into_iter().collect(),
        };
        // only Byzantine votes cross the network
        run_instance(&inst, |_, m| m.sender.0 >= 7).expect("well-formed instance")
    }

    /// The adversary of the example: `b` to the `b` voters, a fresh `c` to the others.
    pub fn targeted(rx: u32) -> Option<Log> {
        Some(if rx < 3 { b() } else { c() })
    }

    /// Grade-1 logs output by each well-behaved receiver under the example adversary.
    pub fn grade_one_outputs(expiring: bool) -> BTreeMap<u32, Vec<Log>> {
        (0..7)
            .map(|rx| {
                let t = targeted(rx);
                let rec = instance(
                    rx,
                    expiring,
                    [t.clone(), t.clone(), t.clone()],
                    [t.clone(), t.clone(), t],
                );
                let out = &rec.outputs[&ProcessId(rx)];
                (rx, out.grade_one().cloned().collect())
            })
            .collect()
    }

    /// Every grade-1 log any receiver can be driven to, over all Byzantine
    /// choices among `b`, `b′`, `c` or silence in both rounds.
    pub fn reachable_grade_one(expiring: bool) -> Vec<Log> {
        let options = [None, Some(b()), Some(b_prime()), Some(c())];
        let mut out: Vec<Log> = Vec::new();
        let choices: Vec<[Option<Log>; 3]> = (0..64)
            .map(|k| {
                [
                    options[k % 4].clone(),
                    options[(k / 4) % 4].clone(),
                    options[k / 16].clone(),
                ]
            })
            .collect();
        for rx in 0..7 {
            for earlier in &choices {
                for now in &choices {
                    let rec = instance(rx, expiring, earlier.clone(), now.clone());
                    out.extend(rec.outputs[&ProcessId(rx)].grade_one().cloned());
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

/// Decision round at which a view-`view` block is first delivered, if any.
pub fn first_decision_of_view(trace: &sleepy_tob::world::Trace, view: u64) -> Option<u64> {
    trace
        .decisions()
        .filter(|d| d.log.values().iter().any(|v| v.view == view))
        .map(|d| d.round)
        .min()
}
