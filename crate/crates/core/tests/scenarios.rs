use std::collections::BTreeSet;
use std::path::PathBuf;

use kbauthz_core::engine::AuthorizationMode;
use kbauthz_core::sim::{read_snapshot, run_scenario, RunOptions, ScenarioConfig, ScenarioReport, STATUS_COMPLETED};
use kbauthz_core::{Iri, Literal, Triple};

fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios").join(name);
    ScenarioConfig::load(&path).unwrap()
}

fn run(name: &str, mode: AuthorizationMode) -> ScenarioReport {
    let mut config = scenario(name);
    config.mode = mode;
    run_scenario(&config, RunOptions::default(), None).unwrap()
}

fn ex(local: &str) -> Iri {
    Iri::new(format!("http://example.org/kb#{local}")).unwrap()
}

#[test]
fn closed_loop_completes_without_denials() {
    let report = run("closed_loop.ttl", AuthorizationMode::Hybrid);
    assert_eq!(report.status, STATUS_COMPLETED, "{report}");
    assert_eq!(report.denied(), 0, "{report}");
    assert_eq!(report.unexpected(), 0, "{report}");
    assert_eq!(report.agents.len(), 5);
    assert!(report.agents.values().all(|a| a.registered && a.terminated.is_none()));

    let snapshot = read_snapshot(&report.snapshot).unwrap();
    let goal = Triple::from_parts(ex("actuation1"), ex("actuates"), ex("action2")).unwrap();
    assert!(snapshot.contains(&ex("kb"), &goal));
    let metric = Triple::from_parts(ex("cell1"), ex("latencyMs"), Literal::plain("42")).unwrap();
    assert!(snapshot.contains(&ex("kb"), &metric));
}

#[test]
fn closed_loop_audit_is_reproducible() {
    let a = run("closed_loop.ttl", AuthorizationMode::Hybrid);
    let b = run("closed_loop.ttl", AuthorizationMode::Hybrid);
    assert!(!a.audit.is_empty());
    assert_eq!(a.audit, b.audit);
    assert_eq!(a.to_string(), b.to_string());
    assert_eq!(a.snapshot, b.snapshot);
}

#[test]
fn different_seed_changes_audit() {
    let mut config = scenario("closed_loop.ttl");
    let a = run_scenario(&config, RunOptions::default(), None).unwrap();
    config.seed += 1;
    let b = run_scenario(&config, RunOptions::default(), None).unwrap();
    assert_ne!(a.audit, b.audit);
}

#[test]
fn compromised_grounder_hybrid_denies_every_overreach() {
    let report = run("compromised_grounder.ttl", AuthorizationMode::Hybrid);
    assert_eq!(report.overreach_total(), 6);
    assert_eq!(report.overreach_permitted(), 0, "{report}");
    assert_eq!(report.unexpected(), 0, "{report}");
    let reasons: Vec<&str> = report.steps.iter().filter(|s| s.overreach).map(|s| s.reason.as_str()).collect();
    assert_eq!(
        reasons,
        [
            "RESOURCE_NOT_IN_SCOPE",
            "PREDICATE_NOT_AUTHORIZED",
            "GRAPH_NOT_CONFINED",
            "ACTION_NOT_ALLOWED",
            "WILDCARD_REJECTED",
            "RESOURCE_NOT_IN_SCOPE"
        ]
    );
}

#[test]
fn compromised_grounder_rbac_only_permits_overreach() {
    let report = run("compromised_grounder.ttl", AuthorizationMode::RbacOnly);
    let permitted: Vec<u64> = report.steps.iter().filter(|s| s.overreach && s.permitted()).map(|s| s.order).collect();
    assert_eq!(permitted, [2, 3, 6, 7], "{report}");
}

#[test]
fn hybrid_permits_are_a_subset_of_rbac_permits() {
    for name in ["closed_loop.ttl", "compromised_grounder.ttl"] {
        let permitted = |r: &ScenarioReport| -> BTreeSet<Iri> {
            r.steps.iter().filter(|s| s.permitted()).map(|s| s.step.clone()).collect()
        };
        let hybrid = permitted(&run(name, AuthorizationMode::Hybrid));
        let rbac = permitted(&run(name, AuthorizationMode::RbacOnly));
        assert!(hybrid.is_subset(&rbac), "{name}: {hybrid:?} vs {rbac:?}");
    }
}

#[test]
fn artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&scenario("closed_loop.ttl"), RunOptions::default(), Some(dir.path())).unwrap();
    let audit = std::fs::read_to_string(dir.path().join("closed_loop.audit.tsv")).unwrap();
    assert_eq!(audit, report.audit);
    let records = kbauthz_core::audit::parse_audit(&audit).unwrap();
    assert!(records.iter().all(|r| r.to_line().split('\t').count() == 9));
    assert!(dir.path().join("closed_loop.snapshot.ttl").is_file());
}

#[test]
fn concurrent_mode_reaches_same_outcomes() {
    let config = scenario("compromised_grounder.ttl");
    let seq = run_scenario(&config, RunOptions::default(), None).unwrap();
    let conc = run_scenario(&config, RunOptions { concurrent: true }, None).unwrap();
    let outcomes =
        |r: &ScenarioReport| r.steps.iter().map(|s| (s.order, s.outcome.clone(), s.reason.clone())).collect::<Vec<_>>();
    assert_eq!(outcomes(&seq), outcomes(&conc));
}

#[test]
fn undeclared_iri_fails_before_running() {
    let text =
        std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios/closed_loop.ttl"))
            .unwrap()
            .replace(
                "ex:actuation1 ex:actuates ex:action2 .\" ; sc:expect",
                "ex:actuation9 ex:actuates ex:action2 .\" ; sc:expect",
            );
    let err = ScenarioConfig::parse(&text, std::path::Path::new(".")).unwrap_err();
    assert!(err.to_string().contains("actuation9"), "{err}");
}
