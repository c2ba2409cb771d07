//! Random schedules that respect the participation constraints.
//!
//! Rounds are built one at a time. Each round starts from the processes
//! awake in the last `τ` rounds, drops at most `⌊γ·|H_{r−τ,r−1}|⌋` of them,
//! lets sleeping processes join, and is resampled until the failure-ratio
//! (and, if requested, τ-sleepiness and asynchrony) conditions hold for that
//! round. If sampling keeps failing, the round falls back to "everyone
//! recently awake stays awake", which satisfies every condition whenever the
//! previous rounds did.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::{beta_tilde, ModelError, Rational, Scalar};
use crate::types::{ProcessId, ProcessSet, Round};
use crate::world::schedule::{RoundSpec, Schedule};
use num_traits::One;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n: usize,
    pub horizon: usize,
    pub tau: u64,
    #[serde(with = "crate::checks::scalar_str")]
    pub gamma: Rational,
    #[serde(with = "crate::checks::scalar_str")]
    pub beta: Rational,
    #[serde(with = "crate::checks::scalar_str::option", default)]
    pub beta_tilde: Option<Rational>,
    /// Asynchronous window `[last_sync + 1, last_sync + pi]`, if any.
    pub last_sync: Option<Round>,
    pub pi: u64,
    /// Byzantine count; defaults to the largest that leaves room for some sleeping.
    pub byzantine: Option<usize>,
    pub enforce_tau_sleepiness: bool,
    /// Break asynchrony containment on purpose: half of `H_{r_a}` falls
    /// asleep at the window while everyone else wakes up.
    pub violate_async: bool,
    pub sleep_prob: f64,
    pub wake_prob: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            n: 10,
            horizon: 30,
            tau: 4,
            gamma: Rational::new(1, 20),
            beta: Rational::new(1, 3),
            beta_tilde: None,
            last_sync: None,
            pi: 0,
            byzantine: None,
            enforce_tau_sleepiness: true,
            violate_async: false,
            sleep_prob: 0.1,
            wake_prob: 0.3,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneratorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("window length {pi} must be below τ = {tau}")]
    WindowTooLong { pi: u64, tau: u64 },
    #[error("window [{start}, {end}] does not fit in horizon {horizon}")]
    WindowOutOfRange {
        start: Round,
        end: Round,
        horizon: usize,
    },
    #[error("infeasible: {0}")]
    Infeasible(String),
}

const ATTEMPTS_PER_ROUND: usize = 20;

struct Limits {
    tau: u64,
    gamma: Rational,
    beta: Rational,
    beta_tilde: Rational,
    window: Option<(Round, u64)>,
    tau_sleepy: bool,
}

impl Limits {
    fn churn_ok(&self, s: &Schedule, r: Round) -> bool {
        let recent = s.honest_union(r as i64 - self.tau as i64, r as i64 - 1);
        let gone = recent.difference(s.honest(r)).count();
        self.tau == 0
            || Rational::from_count(gone) <= self.gamma * Rational::from_count(recent.len())
    }

    fn ratio_ok(&self, s: &Schedule, r: Round) -> bool {
        Rational::from_count(s.byzantine(r).len())
            < self.beta_tilde * Rational::from_count(s.awake(r).len())
    }

    fn sleepy_ok(&self, s: &Schedule, r: Round) -> bool {
        let span = s.awake_union(r as i64 - self.tau as i64, r as i64).len();
        Rational::from_count(s.honest(r).len())
            > (Rational::one() - self.beta) * Rational::from_count(span)
    }

    fn window_ok(&self, s: &Schedule, r: Round) -> bool {
        let Some((a, pi)) = self.window else {
            return true;
        };
        if r == a {
            return self.sleepy_ok(s, r);
        }
        if r == a + 1 && !s.honest(a).is_subset(s.honest(r)) {
            return false;
        }
        if r > a && r <= a + pi + 1 {
            let kept = s.honest(a).difference(s.byzantine(r)).count();
            let span = s.awake_union(r as i64 - self.tau as i64, r as i64).len();
            return Rational::from_count(kept)
                > (Rational::one() - self.beta) * Rational::from_count(span);
        }
        true
    }

    fn round_ok(&self, s: &Schedule, r: Round) -> bool {
        self.churn_ok(s, r)
            && self.ratio_ok(s, r)
            && (!self.tau_sleepy || self.sleepy_ok(s, r))
            && self.window_ok(s, r)
    }
}

fn default_byzantine(n: usize, bt: Rational) -> usize {
    let fits = |b: usize, awake: Rational| Rational::from_count(b) < bt * awake;
    let room = Rational::from_count(n) * Rational::new(4, 5);
    let mut b = (0..n).take_while(|&b| fits(b, room)).last().unwrap_or(0);
    if b < 2 && fits(2, Rational::from_count(n)) {
        b = 2;
    }
    b
}

pub fn generate_schedule(p: &GeneratorParams, seed: u64) -> Result<Schedule, GeneratorError> {
    let bt = match p.beta_tilde {
        Some(bt) => bt,
        None => beta_tilde(p.beta, p.gamma)?,
    };
    let window = match p.last_sync {
        Some(a) if p.pi > 0 => {
            if p.pi >= p.tau {
                return Err(GeneratorError::WindowTooLong {
                    pi: p.pi,
                    tau: p.tau,
                });
            }
            if (a + p.pi) as usize >= p.horizon {
                return Err(GeneratorError::WindowOutOfRange {
                    start: a + 1,
                    end: a + p.pi,
                    horizon: p.horizon,
                });
            }
            Some((a, p.pi))
        }
        _ => None,
    };
    if p.horizon == 0 {
        return Err(GeneratorError::Infeasible("empty horizon".into()));
    }
    let limits = Limits {
        tau: p.tau,
        gamma: p.gamma,
        beta: p.beta,
        beta_tilde: bt,
        window,
        tau_sleepy: p.enforce_tau_sleepiness,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = p.byzantine.unwrap_or_else(|| default_byzantine(p.n, bt));
    if b > p.n {
        return Err(GeneratorError::Infeasible(format!(
            "{b} Byzantine out of {}",
            p.n
        )));
    }
    let mut ids: Vec<ProcessId> = (0..p.n as u32).map(ProcessId).collect();
    ids.shuffle(&mut rng);
    let byzantine: ProcessSet = ids[..b].iter().copied().collect();
    let pool: Vec<ProcessId> = {
        let mut v: Vec<_> = ids[b..].to_vec();
        v.sort();
        v
    };

    let mut s = Schedule {
        n: p.n,
        rounds: Vec::with_capacity(p.horizon),
    };
    for r in 0..p.horizon as Round {
        let synchronous = window.is_none_or(|(a, pi)| r <= a || r > a + pi);
        let spec = |honest: ProcessSet| RoundSpec {
            honest,
            byzantine: byzantine.clone(),
            synchronous,
        };

        if p.violate_async && window.is_some_and(|(a, _)| r == a + 1) {
            let (a, _) = window.unwrap();
            let before: Vec<ProcessId> = s.honest(a).iter().copied().collect();
            let leaving: ProcessSet = before.iter().step_by(2).copied().collect();
            let honest = pool
                .iter()
                .filter(|q| !leaving.contains(q))
                .copied()
                .collect();
            s.rounds.push(spec(honest));
            continue;
        }

        let recent = s.honest_union(r as i64 - p.tau as i64, r as i64 - 1);
        let base: ProcessSet = if r == 0 {
            pool.iter().copied().collect()
        } else if p.tau == 0 {
            s.honest(r - 1).clone()
        } else {
            recent.clone()
        };

        let mut accepted = false;
        for _ in 0..ATTEMPTS_PER_ROUND {
            let honest = if r == 0 {
                pool.iter()
                    .filter(|_| !rng.gen_bool(p.sleep_prob))
                    .copied()
                    .collect()
            } else {
                sample_round(&mut rng, p, &pool, &base, &recent)
            };
            s.rounds.push(spec(honest));
            if limits.round_ok(&s, r) {
                accepted = true;
                break;
            }
            s.rounds.pop();
        }
        if !accepted {
            s.rounds.push(spec(base));
            if !limits.round_ok(&s, r) {
                return Err(GeneratorError::Infeasible(format!(
                    "round {r}: no awake set satisfies the constraints with {b} Byzantine of {}",
                    p.n
                )));
            }
        }
    }
    Ok(s)
}

fn sample_round(
    rng: &mut ChaCha8Rng,
    p: &GeneratorParams,
    pool: &[ProcessId],
    base: &ProcessSet,
    recent: &ProcessSet,
) -> ProcessSet {
    let mut honest = base.clone();
    if p.tau == 0 {
        honest.retain(|_| !rng.gen_bool(p.sleep_prob));
    } else {
        let max_drop = (p.gamma * Rational::from_count(recent.len()))
            .floor()
            .to_integer() as usize;
        let drop = if max_drop > 0 && rng.gen_bool(p.sleep_prob.min(1.0)) {
            rng.gen_range(1..=max_drop)
        } else {
            0
        };
        let mut members: Vec<ProcessId> = honest.iter().copied().collect();
        members.shuffle(rng);
        for q in members.into_iter().take(drop) {
            honest.remove(&q);
        }
    }
    for &q in pool {
        if !base.contains(&q) && rng.gen_bool(p.wake_prob) {
            honest.insert(q);
        }
    }
    honest
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::{check_all, ModelParams};
    use crate::tob::Expiration;
    use num_traits::Zero;

    fn model(p: &GeneratorParams) -> ModelParams<Rational> {
        ModelParams {
            tau: p.tau,
            eta: Expiration::rounds(p.tau),
            pi: p.pi,
            gamma: p.gamma,
            beta: p.beta,
            beta_tilde: p.beta_tilde,
        }
    }

    #[test]
    fn output_passes_all_checks() {
        for seed in 0..50 {
            let p = GeneratorParams {
                n: 12,
                last_sync: Some(10),
                pi: 2,
                ..GeneratorParams::default()
            };
            let s = generate_schedule(&p, seed).unwrap();
            s.validate().unwrap();
            let rep = check_all(&s, &model(&p)).unwrap();
            assert!(rep.all_hold(), "seed {seed}: {:?}", rep.failures());
        }
    }

    #[test]
    fn zero_drop_off_never_sleeps_within_window() {
        let p = GeneratorParams {
            gamma: Rational::zero(),
            ..GeneratorParams::default()
        };
        for seed in 0..20 {
            let s = generate_schedule(&p, seed).unwrap();
            for r in 1..s.horizon() as Round {
                let recent = s.honest_union(r as i64 - p.tau as i64, r as i64 - 1);
                assert!(recent.is_subset(s.honest(r)), "seed {seed} round {r}");
            }
        }
    }

    #[test]
    fn zero_tau_allows_free_churn() {
        let p = GeneratorParams {
            tau: 0,
            sleep_prob: 0.4,
            wake_prob: 0.5,
            enforce_tau_sleepiness: false,
            ..GeneratorParams::default()
        };
        let mut changed = false;
        for seed in 0..20 {
            let s = generate_schedule(&p, seed).unwrap();
            changed |= s
                .rounds
                .windows(2)
                .any(|w| !w[0].honest.is_subset(&w[1].honest));
            assert!(check_all(&s, &model(&p)).unwrap().failure_ratio_holds());
        }
        assert!(changed);
    }

    #[test]
    fn deterministic_in_seed() {
        let p = GeneratorParams::default();
        assert_eq!(generate_schedule(&p, 9), generate_schedule(&p, 9));
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = GeneratorParams {
            gamma: Rational::new(1, 2),
            ..GeneratorParams::default()
        };
        assert!(matches!(
            generate_schedule(&p, 0),
            Err(GeneratorError::Model(_))
        ));
        let p = GeneratorParams {
            last_sync: Some(4),
            pi: 4,
            ..GeneratorParams::default()
        };
        assert!(matches!(
            generate_schedule(&p, 0),
            Err(GeneratorError::WindowTooLong { .. })
        ));
        let p = GeneratorParams {
            byzantine: Some(5),
            ..GeneratorParams::default()
        };
        assert!(matches!(
            generate_schedule(&p, 0),
            Err(GeneratorError::Infeasible(_))
        ));
    }

    #[test]
    fn violation_flag_breaks_containment() {
        let p = GeneratorParams {
            last_sync: Some(8),
            pi: 2,
            violate_async: true,
            ..GeneratorParams::default()
        };
        let s = generate_schedule(&p, 3).unwrap();
        let rep = check_all(&s, &model(&p)).unwrap();
        assert!(!rep.async_holds());
    }
}
