//! Graded-agreement properties of a single recorded instance.

use std::collections::{BTreeMap, BTreeSet};

use crate::ga::{GaOutput, GaRecord, Grade};
use crate::types::{Log, ProcessId, ProcessSet};

use super::{Verdict, Witness};

/// Per-property verdicts for one instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaChecks {
    pub graded_consistency: Verdict,
    pub integrity: Verdict,
    pub validity: Verdict,
    pub uniqueness: Verdict,
    pub bounded_divergence: Verdict,
    pub clique_validity: Verdict,
}

type Pick = fn(&GaChecks) -> &Verdict;

impl GaChecks {
    pub const NAMES: [(&'static str, Pick); 6] = [
        ("graded_consistency", |g| &g.graded_consistency),
        ("integrity", |g| &g.integrity),
        ("validity", |g| &g.validity),
        ("uniqueness", |g| &g.uniqueness),
        ("bounded_divergence", |g| &g.bounded_divergence),
        ("clique_validity", |g| &g.clique_validity),
    ];

    pub fn all(&self) -> impl Iterator<Item = (&'static str, &Verdict)> {
        Self::NAMES.iter().map(move |(n, f)| (*n, f(self)))
    }
}

/// Grades a set of votes, one per sender, by brute force over every prefix
/// of every voted log.
pub fn naive_grade(votes: &BTreeMap<ProcessId, Log>) -> GaOutput {
    let m = votes.len();
    let mut candidates = BTreeSet::new();
    for log in votes.values() {
        for k in 0..=log.len() {
            candidates.insert(log.truncated(k));
        }
    }
    let mut entries = BTreeMap::new();
    for c in candidates {
        let count = votes.values().filter(|v| c.is_prefix_of(v)).count();
        if count * 3 > m * 2 {
            entries.insert(c, Grade::One);
        } else if count * 3 > m {
            entries.insert(c, Grade::Zero);
        }
    }
    GaOutput { entries }
}

fn ga_fail(
    round: u64,
    property: &str,
    receiver: Option<ProcessId>,
    log: &Log,
    detail: String,
) -> Verdict {
    Verdict::fail(Witness::Ga {
        round,
        property: property.into(),
        receiver,
        log: log.clone(),
        detail,
    })
}

/// Checks one instance. `awake` is `S_r`, the processes awake at its send
/// phase (well-behaved and Byzantine).
///
/// The five original properties are judged only for synchronous instances
/// with `|H_r| > 2/3·|S_r ∪ P₀|`; clique validity is judged whenever a
/// qualifying clique can be found, synchronous or not.
pub fn check_ga_properties(rec: &GaRecord, awake: &ProcessSet) -> GaChecks {
    let honest: ProcessSet = rec.inputs.keys().copied().collect();
    let mut universe = awake.clone();
    universe.extend(rec.initial_senders());
    let quorum = 3 * honest.len() > 2 * universe.len();

    let why = if !rec.synchronous {
        Some("asynchronous round")
    } else if rec.inputs.is_empty() {
        Some("no well-behaved inputs")
    } else if !quorum {
        Some("well-behaved senders do not exceed 2/3 of possible participants")
    } else if rec.outputs.is_empty() {
        Some("no well-behaved receivers")
    } else {
        None
    };
    let clique_validity = clique_validity(rec, &honest, universe.len());
    if let Some(why) = why {
        return GaChecks {
            graded_consistency: Verdict::na(why),
            integrity: Verdict::na(why),
            validity: Verdict::na(why),
            uniqueness: Verdict::na(why),
            bounded_divergence: Verdict::na(why),
            clique_validity,
        };
    }

    GaChecks {
        graded_consistency: graded_consistency(rec),
        integrity: integrity(rec),
        validity: validity(rec),
        uniqueness: uniqueness(rec),
        bounded_divergence: bounded_divergence(rec),
        clique_validity,
    }
}

fn graded_consistency(rec: &GaRecord) -> Verdict {
    for (p, out) in &rec.outputs {
        for log in out.grade_one() {
            for (q, other) in &rec.outputs {
                if other.grade_of(log).is_none() {
                    return ga_fail(
                        rec.round,
                        "graded_consistency",
                        Some(*q),
                        log,
                        format!("{p} output it with grade 1, {q} did not output it"),
                    );
                }
            }
        }
    }
    Verdict::Pass
}

fn integrity(rec: &GaRecord) -> Verdict {
    for (p, out) in &rec.outputs {
        for log in out.entries.keys() {
            if !rec.inputs.values().any(|i| log.is_prefix_of(i)) {
                return ga_fail(
                    rec.round,
                    "integrity",
                    Some(*p),
                    log,
                    "no well-behaved input extends it".into(),
                );
            }
        }
    }
    Verdict::Pass
}

fn validity(rec: &GaRecord) -> Verdict {
    let mut lcp: Option<Log> = None;
    for input in rec.inputs.values() {
        lcp = Some(match lcp {
            None => input.clone(),
            Some(acc) => {
                let k = acc
                    .values()
                    .iter()
                    .zip(input.values())
                    .take_while(|(a, b)| a == b)
                    .count();
                acc.truncated(k)
            }
        });
    }
    let Some(lcp) = lcp else {
        return Verdict::na("no well-behaved inputs");
    };
    for (p, out) in &rec.outputs {
        if out.grade_of(&lcp) != Some(Grade::One) {
            return ga_fail(
                rec.round,
                "validity",
                Some(*p),
                &lcp,
                "common prefix of well-behaved inputs not output with grade 1".into(),
            );
        }
    }
    Verdict::Pass
}

fn uniqueness(rec: &GaRecord) -> Verdict {
    let ones: Vec<(ProcessId, &Log)> = rec
        .outputs
        .iter()
        .flat_map(|(p, out)| out.grade_one().map(move |l| (*p, l)))
        .collect();
    for (i, (p, a)) in ones.iter().enumerate() {
        for (q, b) in &ones[i + 1..] {
            if a.conflicts_with(b) {
                return ga_fail(
                    rec.round,
                    "uniqueness",
                    Some(*q),
                    b,
                    format!("{p} output conflicting {a} with grade 1"),
                );
            }
        }
    }
    Verdict::Pass
}

fn bounded_divergence(rec: &GaRecord) -> Verdict {
    for (p, out) in &rec.outputs {
        let logs: Vec<&Log> = out.entries.keys().collect();
        let leaves: Vec<&Log> = logs
            .iter()
            .filter(|a| !logs.iter().any(|b| b.len() > a.len() && a.is_prefix_of(b)))
            .copied()
            .collect();
        if leaves.len() > 2 {
            return ga_fail(
                rec.round,
                "bounded_divergence",
                Some(*p),
                leaves[2],
                format!("{} pairwise conflicting outputs", leaves.len()),
            );
        }
    }
    Verdict::Pass
}

/// Searches, for every candidate log `Λ`, a set `H′ ⊆ H_r ∪ H_{r+1}` meeting
/// the clique hypotheses, and checks the conclusion for each one found.
///
/// The search drops the worst offender until every remaining receiver's
/// initial set holds an extension of `Λ` from every remaining member. It
/// may miss cliques, never invents one.
fn clique_validity(rec: &GaRecord, honest: &ProcessSet, universe: usize) -> Verdict {
    let receivers: ProcessSet = rec.outputs.keys().copied().collect();
    let mut candidates = BTreeSet::new();
    let initial_logs = rec
        .initial
        .values()
        .flat_map(|s| s.messages.values().map(|m| &m.log));
    for log in rec.inputs.values().chain(initial_logs) {
        candidates.extend(log.prefixes());
    }

    let mut found = false;
    // longest first so a witness names the most specific log
    for lambda in candidates.iter().rev() {
        let mut clique: ProcessSet = honest
            .iter()
            .filter(|p| lambda.is_prefix_of(&rec.inputs[p]))
            .chain(receivers.difference(honest))
            .copied()
            .collect();
        loop {
            let missing: BTreeMap<ProcessId, ProcessSet> = clique
                .intersection(&receivers)
                .map(|q| {
                    let init = rec.initial.get(q);
                    let miss = clique
                        .iter()
                        .filter(|p| {
                            !init
                                .and_then(|s| s.messages.get(p))
                                .is_some_and(|m| lambda.is_prefix_of(&m.log))
                        })
                        .copied()
                        .collect();
                    (*q, miss)
                })
                .collect();
            if missing.values().all(|m| m.is_empty()) {
                break;
            }
            let worst = clique
                .iter()
                .max_by_key(|p| {
                    let blamed = missing.values().filter(|m| m.contains(p)).count();
                    let own = missing.get(p).map_or(0, |m| m.len());
                    // ties go to the smallest id
                    (blamed + own, std::cmp::Reverse(**p))
                })
                .copied()
                .expect("nonempty clique has missing entries");
            clique.remove(&worst);
        }
        if 3 * clique.len() <= 2 * universe || clique.is_disjoint(&receivers) {
            continue;
        }
        found = true;
        for q in clique.intersection(&receivers) {
            if rec.outputs[q].grade_of(lambda) != Some(Grade::One) {
                return ga_fail(
                    rec.round,
                    "clique_validity",
                    Some(*q),
                    lambda,
                    format!(
                        "clique of {} out of {} possible participants",
                        clique.len(),
                        universe
                    ),
                );
            }
        }
    }
    if found {
        Verdict::Pass
    } else {
        Verdict::na("no clique meeting the hypotheses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ga::{run_instance, InitialVoteSet, Instance};
    use crate::types::tests::log;
    use crate::types::{Recipients, VoteMsg};

    fn pids(ids: &[u32]) -> ProcessSet {
        ids.iter().map(|&i| ProcessId(i)).collect()
    }

    #[test]
    fn unanimous_sync_all_pass() {
        let inst = Instance {
            round: 3,
            synchronous: true,
            inputs: (0..4).map(|i| (ProcessId(i), log(&[1, 2]))).collect(),
            receivers: pids(&[0, 1, 2, 3]),
            ..Instance::default()
        };
        let rec = run_instance(&inst, |_, _| true).unwrap();
        let g = check_ga_properties(&rec, &pids(&[0, 1, 2, 3]));
        for (name, v) in g.all().take(5) {
            assert!(v.is_pass(), "{name}: {v:?}");
        }
    }

    #[test]
    fn async_record_without_clique_is_not_applicable() {
        // honest split, adversary shows each receiver only its own vote
        let inst = Instance {
            round: 5,
            synchronous: false,
            byzantine: pids(&[4, 5]),
            inputs: [(0, &[1][..]), (1, &[1]), (2, &[2]), (3, &[2])]
                .iter()
                .map(|(p, l)| (ProcessId(*p), log(l)))
                .collect(),
            byzantine_votes: vec![
                (
                    VoteMsg {
                        sender: ProcessId(4),
                        round: 5,
                        log: log(&[9]),
                    },
                    Recipients::All,
                ),
                (
                    VoteMsg {
                        sender: ProcessId(5),
                        round: 5,
                        log: log(&[9]),
                    },
                    Recipients::All,
                ),
            ],
            receivers: pids(&[0, 1, 2, 3]),
            ..Instance::default()
        };
        let rec = run_instance(&inst, |_, m| m.sender.0 >= 4).unwrap();
        let g = check_ga_properties(&rec, &pids(&[0, 1, 2, 3, 4, 5]));
        for (name, v) in g.all() {
            assert!(!v.is_fail(), "{name}: {v:?}");
        }
        assert!(!g.graded_consistency.is_applicable());
        assert!(!g.clique_validity.is_applicable());
    }

    #[test]
    fn clique_in_initial_sets_passes_under_asynchrony() {
        let clique = pids(&[0, 1, 2, 3]);
        let old: Vec<VoteMsg> = clique
            .iter()
            .map(|&p| VoteMsg {
                sender: p,
                round: 4,
                log: log(&[1]),
            })
            .collect();
        let inst = Instance {
            round: 5,
            synchronous: false,
            byzantine: pids(&[4]),
            inputs: clique.iter().map(|&p| (p, log(&[1, 2]))).collect(),
            byzantine_votes: vec![(
                VoteMsg {
                    sender: ProcessId(4),
                    round: 5,
                    log: log(&[7]),
                },
                Recipients::All,
            )],
            initial: clique
                .iter()
                .map(|&p| (p, InitialVoteSet::from_messages(p, old.clone())))
                .collect(),
            receivers: clique.clone(),
        };
        let rec = run_instance(&inst, |_, m| m.sender == ProcessId(4)).unwrap();
        let g = check_ga_properties(&rec, &pids(&[0, 1, 2, 3, 4]));
        assert!(g.clique_validity.is_pass(), "{:?}", g.clique_validity);
    }

    #[test]
    fn broken_output_is_caught() {
        let inst = Instance {
            round: 3,
            synchronous: true,
            inputs: (0..4).map(|i| (ProcessId(i), log(&[1]))).collect(),
            receivers: pids(&[0, 1, 2, 3]),
            ..Instance::default()
        };
        let mut rec = run_instance(&inst, |_, _| true).unwrap();
        rec.outputs
            .get_mut(&ProcessId(2))
            .unwrap()
            .entries
            .insert(log(&[5]), Grade::One);
        let g = check_ga_properties(&rec, &pids(&[0, 1, 2, 3]));
        assert!(g.integrity.is_fail());
        assert!(g.uniqueness.is_fail());
        assert!(g.graded_consistency.is_fail());
    }

    #[test]
    fn naive_grade_thresholds() {
        let votes: BTreeMap<ProcessId, Log> = (0..10)
            .map(|i| (ProcessId(i), if i < 6 { log(&[1]) } else { log(&[2]) }))
            .collect();
        let out = naive_grade(&votes);
        assert_eq!(out.grade_of(&log(&[1])), Some(Grade::Zero));
        assert_eq!(out.grade_of(&log(&[2])), Some(Grade::Zero));
        assert_eq!(out.grade_of(&log(&[])), Some(Grade::One));
        assert!(naive_grade(&BTreeMap::new()).is_empty());
    }
}
