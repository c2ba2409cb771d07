mod common;

use common::{first_decision_of_view, scenario_path};
use sleepy_tob::oracle::{evaluate, Witness};
use sleepy_tob::scenario::Scenario;
use sleepy_tob::tob::{Expiration, ViewClock};
use sleepy_tob::world::Trace;

fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).unwrap()
}

#[test]
fn suppress_baseline_breaks_agreement() {
    let out = load("suppress_baseline").run().unwrap();
    assert!(out.report.in_model);
    assert!(!out.report.passed());
    let safety = out.report.get("safety").unwrap();
    match safety.witness() {
        Some(Witness::Conflict { first, second }) => {
            assert!(first.log.conflicts_with(&second.log));
            assert_ne!(first.pid, second.pid);
        }
        other => panic!("expected a conflict, got {other:?}"),
    }
    assert!(out.report.get("async_resilience").unwrap().is_fail());
    // votes expire too fast for the resilience guarantee to apply
    assert!(!out.report.checks["async_resilience"].hypotheses_hold);
}

#[test]
fn suppress_baseline_still_heals() {
    let out = load("suppress_baseline").run().unwrap();
    assert!(out.report.get("healing_safety").unwrap().is_pass());
    assert!(out.report.get("healing_liveness").unwrap().is_pass());
}

#[test]
fn expiring_votes_defeat_both_attacks() {
    for name in ["suppress_expiring", "split_expiring"] {
        let out = load(name).run().unwrap();
        assert!(out.report.in_model, "{name}");
        assert!(
            out.report.passed(),
            "{name}: {:?}",
            out.report.failures().collect::<Vec<_>>()
        );
        for check in [
            "async_resilience",
            "healing_safety",
            "healing_liveness",
            "clique_persistence",
        ] {
            assert!(out.report.get(check).unwrap().is_pass(), "{name} {check}");
        }
    }
}

#[test]
fn split_vote_without_expiry_breaks_agreement() {
    let mut sc = load("split_expiring");
    sc.model.eta = Expiration::rounds(0);
    let out = sc.run().unwrap();
    assert!(out.report.get("safety").unwrap().is_fail());
}

#[test]
fn fault_free_run_decides_every_view() {
    let out = load("sync_faultfree").run().unwrap();
    assert!(out.report.passed());
    assert!(out.report.get("liveness").unwrap().is_pass());
    assert_eq!(out.stats.mean_latency, Some(3.0));
    assert_eq!(out.stats.leader_frequency, Some(1.0));
}

#[test]
fn participation_drop_stalls_the_next_view() {
    let sc = load("stall_dropoff");
    // four of nine fall asleep at the first round of view 5
    let v = 5;
    let slot = ViewClock::round1(v + 1);
    let out = sc.run().unwrap();
    assert!(!out.report.in_model);
    let first = first_decision_of_view(&out.trace, v).expect("decided eventually");
    assert!(first > slot, "view-{v} block decided at {first}");

    let mut fresh = sc.clone();
    fresh.model.eta = Expiration::rounds(0);
    let out = fresh.run().unwrap();
    assert_eq!(first_decision_of_view(&out.trace, v), Some(slot));
}

#[test]
fn runs_are_byte_identical() {
    for name in [
        "suppress_baseline",
        "suppress_expiring",
        "sync_faultfree",
        "stall_dropoff",
        "split_expiring",
    ] {
        let a = load(name).run().unwrap();
        let b = load(name).run().unwrap();
        assert_eq!(a.trace.to_jsonl(), b.trace.to_jsonl(), "{name}");
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn written_trace_replays_to_the_same_report() {
    for name in ["suppress_baseline", "split_expiring"] {
        let sc = load(name);
        let out = sc.run().unwrap();
        let text = out.trace.to_jsonl();
        let back = Trace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, out.trace);
        assert_eq!(evaluate(&back, &sc.oracles), out.report);
    }
}

#[test]
fn header_records_the_scenario() {
    let sc = load("suppress_expiring");
    let out = sc.run().unwrap();
    let h = &out.trace.header;
    assert_eq!(h.scenario, "suppress_expiring");
    assert_eq!(h.scenario_hash, sc.hash());
    assert_eq!(h.strategy, "suppress_override");
    assert_eq!(h.model, sc.model);
}

#[test]
fn different_seeds_change_leaders_not_verdicts() {
    let a = load("sync_faultfree")
        .with_seed_override(Some(1))
        .unwrap()
        .run()
        .unwrap();
    let b = load("sync_faultfree")
        .with_seed_override(Some(2))
        .unwrap()
        .run()
        .unwrap();
    assert_ne!(a.trace.to_jsonl(), b.trace.to_jsonl());
    assert!(a.report.passed() && b.report.passed());
}
