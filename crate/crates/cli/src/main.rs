use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use sleepy_tob::campaign::{run_campaign, CampaignParams};
use sleepy_tob::checks::{AsyncVerdict, ModelReport, RoundVerdict, Scalar};
use sleepy_tob::scenario::{RunOutcome, Scenario};
use sleepy_tob::sweep::{sweep_beta, to_csv};
use sleepy_tob::tob::Expiration;
use sleepy_tob::world::StrategyKind;
use sleepy_tob::Rational;

#[derive(Parser)]
#[command(
    name = "sleepy-tob",
    version,
    about = "Simulate and check total-order broadcast in the sleepy model"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and check the trace. Exit 1 if an oracle fails.
    Run {
        scenario: PathBuf,
        /// Overrides both the file and SLEEPY_TOB_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for trace.jsonl, report.json and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the participation constraints without running the protocol.
    Check { scenario: PathBuf },
    /// Allowable failure ratio over a uniform grid of drop-off rates.
    SweepBeta {
        #[arg(long, default_value = "1/3", value_parser = parse_ratio)]
        beta: Rational,
        #[arg(long, default_value_t = 21)]
        steps: usize,
        /// CSV destination; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized runs with generated schedules. Exit 1 on any counterexample.
    Campaign {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 7)]
        n_min: usize,
        #[arg(long, default_value_t = 16)]
        n_max: usize,
        #[arg(long, default_value_t = 48)]
        horizon: usize,
        #[arg(long, default_value_t = 4)]
        tau: u64,
        /// Rounds, or "inf".
        #[arg(long, default_value = "4", value_parser = parse_eta)]
        eta: Expiration,
        #[arg(long, default_value_t = 2)]
        pi: u64,
        #[arg(long, default_value = "1/3", value_parser = parse_ratio)]
        beta: Rational,
        #[arg(long, default_value = "1/20", value_parser = parse_ratio)]
        gamma_max: Rational,
        /// Comma-separated; cycled through by seed.
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
        strategies: Vec<StrategyKind>,
        /// Fully synchronous runs.
        #[arg(long)]
        no_window: bool,
        /// Break asynchrony containment; failures are flagged as out of model.
        #[arg(long)]
        violate_async: bool,
        #[arg(long, default_value_t = 12)]
        liveness_window: u64,
        /// Directory for report.json and one TOML per counterexample.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_ratio(s: &str) -> Result<Rational, String> {
    Rational::parse(s).map_err(|e| e.to_string())
}

fn parse_eta(s: &str) -> Result<Expiration, String> {
    if s == "inf" {
        return Ok(Expiration::NEVER);
    }
    s.parse()
        .map(Expiration::rounds)
        .map_err(|_| format!("{s:?} is neither a round count nor \"inf\""))
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse()
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn write_json(path: &Path, v: serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn dispatch(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
        } => cmd_run(&scenario, seed, out.as_deref()),
        Cmd::Check { scenario } => cmd_check(&scenario),
        Cmd::SweepBeta { beta, steps, out } => {
            if steps < 2 {
                bail!("--steps must be at least 2");
            }
            let csv = to_csv(&sweep_beta(beta, steps)?);
            match out {
                Some(p) => {
                    fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?
                }
                None => std::io::stdout().write_all(csv.as_bytes())?,
            }
            Ok(true)
        }
        Cmd::Campaign {
            seeds,
            first_seed,
            n_min,
            n_max,
            horizon,
            tau,
            eta,
            pi,
            beta,
            gamma_max,
            strategies,
            no_window,
            violate_async,
            liveness_window,
            out,
        } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let mut p = CampaignParams {
                seeds,
                first_seed,
                n_min,
                n_max,
                horizon,
                tau,
                eta,
                pi,
                beta,
                gamma_max,
                window: !no_window,
                violate_async,
                liveness_window,
                ..CampaignParams::default()
            };
            if !strategies.is_empty() {
                p.strategies = strategies;
            }
            cmd_campaign(&p, out.as_deref())
        }
    }
}

fn summary(sc: &Scenario, out: &RunOutcome) -> serde_json::Value {
    let verdicts: serde_json::Map<String, serde_json::Value> = out
        .report
        .checks
        .iter()
        .map(|(k, c)| {
            let v = serde_json::to_value(c).expect("serializable");
            (k.clone(), v["verdict"].clone())
        })
        .collect();
    json!({
        "scenario": sc.name,
        "scenario_hash": out.trace.header.scenario_hash,
        "seed": sc.seed,
        "passed": out.report.passed(),
        "in_model": out.report.in_model,
        "decisions": out.stats.decisions,
        "mean_latency": out.stats.mean_latency,
        "leader_frequency": out.stats.leader_frequency,
        "longest_delivered": out.stats.longest_delivered,
        "verdicts": verdicts,
    })
}

fn cmd_run(path: &Path, seed: Option<u64>, out_dir: Option<&Path>) -> Result<bool> {
    let sc = Scenario::load(path)?.with_seed_override(seed)?;
    let out = sc.run()?;
    let summary = summary(&sc, &out);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let trace = fs::File::create(dir.join("trace.jsonl"))?;
        out.trace.write_jsonl(std::io::BufWriter::new(trace))?;
        write_json(&dir.join("report.json"), serde_json::to_value(&out.report)?)?;
        write_json(&dir.join("summary.json"), summary.clone())?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if out.report.passed() {
        return Ok(true);
    }
    let failures: Vec<serde_json::Value> = out
        .report
        .failures()
        .map(|(name, c)| {
            json!({
                "check": name,
                "counterexample": c.is_counterexample(),
                "witness": c.verdict.witness(),
            })
        })
        .collect();
    eprintln!(
        "{}",
        serde_json::to_string(&json!({ "status": "fail", "failures": failures }))?
    );
    Ok(false)
}

fn row(name: &str, verdicts: &[RoundVerdict]) -> (String, bool) {
    let failing: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.holds)
        .map(|v| v.round.to_string())
        .collect();
    let status = if !failing.is_empty() {
        format!("FAIL  rounds {}", failing.join(","))
    } else if verdicts.iter().all(|v| v.vacuous) {
        "pass  (vacuous)".to_string()
    } else {
        "pass".to_string()
    };
    (format!("{name:<16} {status}"), failing.is_empty())
}

fn table(rep: &ModelReport) -> (Vec<String>, bool) {
    let mut lines = vec![format!("{:<16} {}", "beta_tilde", rep.beta_tilde)];
    let mut ok = true;
    for (name, v) in [
        ("churn", &rep.churn),
        ("failure_ratio", &rep.failure_ratio),
        ("tau_sleepiness", &rep.tau_sleepiness),
    ] {
        let (line, holds) = row(name, v);
        lines.push(line);
        ok &= holds;
    }
    let async_line = match &rep.async_conditions {
        AsyncVerdict::NoWindow => "pass  (no asynchronous window)".to_string(),
        AsyncVerdict::Unverified => "FAIL  more than one asynchronous period".to_string(),
        AsyncVerdict::Checked {
            containment,
            outnumber,
            ..
        } => {
            let bad: Vec<String> = outnumber
                .iter()
                .filter(|v| !v.holds)
                .map(|v| v.round.to_string())
                .collect();
            match (containment, bad.is_empty()) {
                (true, true) => "pass".to_string(),
                (false, _) => "FAIL  containment".to_string(),
                (true, false) => format!("FAIL  outnumber rounds {}", bad.join(",")),
            }
        }
    };
    ok &= rep.async_holds();
    lines.push(format!("{:<16} {async_line}", "asynchrony"));
    (lines, ok)
}

fn cmd_check(path: &Path) -> Result<bool> {
    let sc = Scenario::load(path)?;
    let (_, rep) = sc.check()?;
    let (lines, ok) = table(&rep);
    for l in lines {
        println!("{l}");
    }
    Ok(ok)
}

fn cmd_campaign(p: &CampaignParams, out_dir: Option<&Path>) -> Result<bool> {
    let rep = run_campaign(p);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(
            &dir.join("report.json"),
            json!({ "params": p, "report": rep }),
        )?;
        for c in &rep.counterexamples {
            fs::write(
                dir.join(format!("counterexample-{}-{}.toml", c.seed, c.check)),
                &c.scenario,
            )?;
        }
    }
    let checks: serde_json::Map<String, serde_json::Value> = rep
        .checks
        .iter()
        .map(|(k, t)| {
            let applicable = t.pass + t.fail;
            (
                k.clone(),
                json!({
                    "pass": t.pass,
                    "applicable": applicable,
                    "not_applicable": t.not_applicable,
                    "inconclusive": t.inconclusive,
                }),
            )
        })
        .collect();
    let counterexamples: Vec<serde_json::Value> = rep
        .counterexamples
        .iter()
        .map(|c| json!({ "seed": c.seed, "check": c.check, "witness": c.witness }))
        .collect();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "runs": rep.runs,
            "skipped": rep.skipped,
            "in_model": rep.in_model,
            "out_of_model_failures": rep.out_of_model_failures,
            "mean_latency": rep.mean_latency,
            "leader_frequency": rep.leader_frequency,
            "checks": checks,
            "counterexamples": counterexamples,
        }))?
    );
    Ok(rep.counterexamples.is_empty())
}
