//! Many seeded randomized runs, aggregated.
//!
//! Every run is a [`Scenario`] with a `[generator]` section, so a failing
//! run can be replayed from the TOML attached to its counterexample.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::{check_all, ModelParams, Rational};
use crate::oracle::{OracleConfig, Witness};
use crate::scenario::{
    Asleep, Corruption, ExplicitSchedule, GeneratorSection, Scenario, ScenarioError, Window,
};
use crate::tob::Expiration;
use crate::types::{ProcessId, Round};
use crate::world::{generate_schedule, AsyncWindow, GeneratorParams, Schedule, StrategyKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignParams {
    pub seeds: u64,
    pub first_seed: u64,
    pub n_min: usize,
    pub n_max: usize,
    pub horizon: usize,
    pub tau: u64,
    pub eta: Expiration,
    pub pi: u64,
    #[serde(with = "crate::checks::scalar_str")]
    pub beta: Rational,
    /// `γ` is drawn from `{0, 1/40, …, gamma_max}` in steps of 1/40.
    #[serde(with = "crate::checks::scalar_str")]
    pub gamma_max: Rational,
    /// Cycled through by seed.
    pub strategies: Vec<StrategyKind>,
    /// Place one asynchronous window of length `pi` at a random round.
    pub window: bool,
    /// Break asynchrony containment on purpose.
    pub violate_async: bool,
    pub liveness_window: u64,
}

impl Default for CampaignParams {
    fn default() -> Self {
        CampaignParams {
            seeds: 100,
            first_seed: 0,
            n_min: 7,
            n_max: 16,
            horizon: 48,
            tau: 4,
            eta: Expiration::rounds(4),
            pi: 2,
            beta: Rational::new(1, 3),
            gamma_max: Rational::new(1, 20),
            strategies: StrategyKind::ALL.to_vec(),
            window: true,
            violate_async: false,
            liveness_window: 12,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckTally {
    pub pass: usize,
    pub fail: usize,
    pub not_applicable: usize,
    pub inconclusive: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub seed: u64,
    pub check: String,
    pub witness: Option<Witness>,
    /// Replays the run with `sleepy-tob run`.
    pub scenario: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub runs: usize,
    /// Seeds for which the generator found no admissible schedule.
    pub skipped: usize,
    pub in_model: usize,
    pub checks: BTreeMap<String, CheckTally>,
    /// Deterministic failures with every assumption met.
    pub counterexamples: Vec<Counterexample>,
    /// Failures in runs whose schedule breaks the model; expected, not counterexamples.
    pub out_of_model_failures: usize,
    pub mean_latency: Option<f64>,
    pub leader_frequency: Option<f64>,
}

impl CampaignReport {
    pub fn tally(&self, check: &str) -> CheckTally {
        self.checks.get(check).cloned().unwrap_or_default()
    }
}

const GAMMA_STEP: i64 = 40;

/// The scenario run for `seed`.
pub fn campaign_scenario(p: &CampaignParams, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ca3f);
    let n = rng.gen_range(p.n_min..=p.n_max.max(p.n_min));
    let top = (p.gamma_max * Rational::from_integer(GAMMA_STEP))
        .floor()
        .to_integer()
        .max(0);
    let gamma = Rational::new(rng.gen_range(0..=top), GAMMA_STEP);
    let strategy = p.strategies[(seed as usize) % p.strategies.len().max(1)];
    let last_sync = (p.window && p.pi > 0).then(|| {
        let hi = (p.horizon as Round).saturating_sub(p.pi + 20).max(7);
        rng.gen_range(6..=hi)
    });
    Scenario {
        name: format!("campaign-{seed}"),
        n,
        horizon: p.horizon,
        seed,
        model: ModelParams {
            tau: p.tau,
            eta: p.eta,
            pi: if last_sync.is_some() { p.pi } else { 0 },
            gamma,
            beta: p.beta,
            beta_tilde: None,
        },
        schedule: None,
        generator: Some(GeneratorSection {
            last_sync,
            violate_async: p.violate_async,
            ..GeneratorSection::default()
        }),
        adversary: crate::scenario::AdversarySection { strategy },
        oracles: OracleConfig {
            liveness_window: p.liveness_window,
            ..OracleConfig::default()
        },
    }
}

struct RunResult {
    seed: u64,
    scenario: Scenario,
    outcome: Result<crate::scenario::RunOutcome, ScenarioError>,
}

pub fn run_campaign(p: &CampaignParams) -> CampaignReport {
    let results: Vec<RunResult> = (p.first_seed..p.first_seed + p.seeds)
        .into_par_iter()
        .map(|seed| {
            let scenario = campaign_scenario(p, seed);
            let outcome = scenario.run();
            RunResult {
                seed,
                scenario,
                outcome,
            }
        })
        .collect();

    let mut rep = CampaignReport::default();
    let mut latencies = Vec::new();
    let (mut leader_views, mut leader_decided) = (0, 0);
    for r in results {
        let out = match r.outcome {
            Ok(out) => out,
            Err(_) => {
                rep.skipped += 1;
                continue;
            }
        };
        rep.runs += 1;
        let in_model = out.report.in_model;
        rep.in_model += usize::from(in_model);
        for (name, c) in &out.report.checks {
            let t = rep.checks.entry(name.clone()).or_default();
            use crate::oracle::Verdict::*;
            match &c.verdict {
                Pass => t.pass += 1,
                Fail { .. } => t.fail += 1,
                NotApplicable { .. } => t.not_applicable += 1,
                Inconclusive { .. } => t.inconclusive += 1,
            }
        }
        let failures: Vec<_> = out.report.failures().collect();
        if !in_model {
            rep.out_of_model_failures += failures.len();
        } else {
            for (name, c) in out.report.counterexamples() {
                rep.counterexamples.push(Counterexample {
                    seed: r.seed,
                    check: name.to_string(),
                    witness: c.verdict.witness().cloned(),
                    scenario: r.scenario.to_toml(),
                });
            }
        }
        if let Some(m) = out.stats.mean_latency {
            latencies.extend(std::iter::repeat_n(m, out.stats.values_decided));
        }
        leader_views += out.stats.honest_leader_views;
        leader_decided += out.stats.honest_leader_decided;
    }
    rep.mean_latency =
        (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / latencies.len() as f64);
    rep.leader_frequency = (leader_views > 0).then(|| leader_decided as f64 / leader_views as f64);
    rep
}

/// Explicit form of a generated schedule, for replay files.
pub fn explicit_from(s: &Schedule) -> ExplicitSchedule {
    let byzantine: Vec<u32> = s.byzantine(0).iter().map(|p| p.0).collect();
    let mut corruptions = Vec::new();
    let mut asleep = Vec::new();
    for (r, spec) in s.rounds.iter().enumerate() {
        let r = r as Round;
        for p in &spec.byzantine {
            let fresh = if r == 0 {
                false
            } else {
                !s.byzantine(r - 1).contains(p)
            };
            if fresh {
                corruptions.push(Corruption { round: r, pid: p.0 });
            }
        }
        let sleeping: Vec<u32> = (0..s.n as u32)
            .map(ProcessId)
            .filter(|p| !spec.honest.contains(p) && !spec.byzantine.contains(p))
            .map(|p| p.0)
            .collect();
        if !sleeping.is_empty() {
            asleep.push(Asleep {
                from: r,
                to: r,
                pids: sleeping,
            });
        }
    }
    let window = match s.async_window() {
        AsyncWindow::Single { last_sync, length } => Some(Window { last_sync, length }),
        _ => None,
    };
    ExplicitSchedule {
        byzantine,
        asleep,
        corruptions,
        window,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImplicationReport {
    /// Admissible schedules examined.
    pub schedules: usize,
    /// Seeds tried, including those for which no admissible schedule came out.
    pub seeds_drawn: u64,
    pub rounds_checked: usize,
    /// Replayable scenarios for every schedule with a failing round.
    pub counterexamples: Vec<String>,
}

/// Draws schedules that satisfy the drop-off and failure-ratio constraints
/// (without asking for τ-sleepiness) until `target` of them are admissible,
/// and checks that τ-sleepiness holds in every round anyway.
pub fn implication_sweep(target: usize, first_seed: u64) -> ImplicationReport {
    let mut out = ImplicationReport::default();
    let mut next = first_seed;
    while out.schedules < target {
        let batch = (target - out.schedules) as u64 * 3 / 2 + 16;
        let drawn: Vec<Option<(usize, Option<String>)>> = (next..next + batch)
            .into_par_iter()
            .map(implication_case)
            .collect();
        next += batch;
        for (checked, replay) in drawn.into_iter().flatten() {
            if out.schedules == target {
                break;
            }
            out.schedules += 1;
            out.rounds_checked += checked;
            out.counterexamples.extend(replay);
        }
    }
    out.seeds_drawn = next - first_seed;
    out
}

fn implication_case(seed: u64) -> Option<(usize, Option<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a9e_5eed);
    let beta = Rational::new(1, 3);
    let gamma = Rational::new(rng.gen_range(0..13), 40);
    let n = rng.gen_range(4..=20);
    let tau = rng.gen_range(0..=6);
    let gp = GeneratorParams {
        n,
        horizon: 24,
        tau,
        gamma,
        beta,
        enforce_tau_sleepiness: false,
        byzantine: Some(rng.gen_range(0..=n / 3)),
        sleep_prob: rng.gen_range(0.05..0.6),
        wake_prob: rng.gen_range(0.05..0.6),
        ..GeneratorParams::default()
    };
    let model = ModelParams {
        tau,
        eta: Expiration::rounds(tau),
        pi: 0,
        gamma,
        beta,
        beta_tilde: None,
    };
    let s = generate_schedule(&gp, seed).ok()?;
    let rep = check_all(&s, &model).expect("γ < β");
    if !(rep.churn_holds() && rep.failure_ratio_holds()) {
        return None;
    }
    let broken = !rep.tau_sleepiness_holds();
    let replay = broken.then(|| {
        Scenario {
            name: format!("implication-{seed}"),
            n,
            horizon: s.horizon(),
            seed,
            model,
            schedule: Some(explicit_from(&s)),
            generator: None,
            adversary: Default::default(),
            oracles: Default::default(),
        }
        .to_toml()
    });
    Some((s.horizon(), replay))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_form_rebuilds_the_schedule() {
        for seed in 0..10 {
            let p = GeneratorParams {
                n: 9,
                last_sync: Some(7),
                pi: 2,
                ..GeneratorParams::default()
            };
            let s = generate_schedule(&p, seed).unwrap();
            let sc = Scenario {
                name: "x".into(),
                n: 9,
                horizon: s.horizon(),
                seed,
                model: ModelParams::default(),
                schedule: Some(explicit_from(&s)),
                generator: None,
                adversary: Default::default(),
                oracles: Default::default(),
            };
            let again = Scenario::from_toml_str(&sc.to_toml()).unwrap();
            assert_eq!(again.build_schedule().unwrap(), s, "seed {seed}");
        }
    }

    #[test]
    fn campaign_scenarios_are_replayable() {
        let p = CampaignParams::default();
        for seed in 0..5 {
            let sc = campaign_scenario(&p, seed);
            let again = Scenario::from_toml_str(&sc.to_toml()).unwrap();
            assert_eq!(sc, again);
            assert_eq!(
                sc.build_schedule().unwrap(),
                again.build_schedule().unwrap()
            );
        }
    }
}
