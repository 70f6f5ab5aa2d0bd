//! Browser demo: decide a single request, round-trip Turtle, and compare the
//! hybrid engine with the rbac-only baseline on a scenario.
//!
//! Each operation is a plain function returning text so it can be tested
//! natively; the `#[wasm_bindgen]` wrappers only convert errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use kbauthz_core::engine::{load_exceptions, PermissionAction, RequestBody};
use kbauthz_core::ontology::Ontology;
use kbauthz_core::sim::{run_scenario, scenario_prefixes, RunOptions, ScenarioConfig, ScenarioReport};
use kbauthz_core::turtle;
use kbauthz_core::wire::{format_bindings, split_graph_line, PatternText};
use kbauthz_core::{AuthorizationMode, Engine, EngineConfig, Iri, Request};
use wasm_bindgen::prelude::*;

pub static CLOSED_LOOP: &str = include_str!("../../../data/scenarios/closed_loop.ttl");
pub static COMPROMISED_GROUNDER: &str = include_str!("../../../data/scenarios/compromised_grounder.ttl");

fn engine(mode: AuthorizationMode) -> Result<Engine, String> {
    let ontology = Ontology::default_ontology();
    let exceptions =
        load_exceptions(kbauthz_core::DEFAULT_EXCEPTIONS, &ontology.vocabulary).map_err(|e| e.to_string())?;
    Ok(Engine::new(ontology, exceptions, EngineConfig { mode, ..EngineConfig::default() }))
}

fn parse_mode(mode: &str) -> Result<AuthorizationMode, String> {
    AuthorizationMode::parse(mode).ok_or_else(|| format!("unknown mode {mode:?}"))
}

/// Seeds `facts` into the default graph, registers the single agent described
/// by `registration`, then decides and executes one request.
pub fn authorize_text(facts: &str, registration: &str, action: &str, body: &str, mode: &str) -> Result<String, String> {
    let mut engine = engine(parse_mode(mode)?)?;
    let prefixes = scenario_prefixes(engine.ontology());
    let default_graph = engine.config().default_graph.clone();

    let facts = turtle::parse_with(facts, prefixes.clone()).map_err(|d| format!("facts {d}"))?;
    for t in facts.triples {
        engine.seed(&default_graph, t);
    }

    let claims = turtle::parse_with(registration, prefixes.clone()).map_err(|d| format!("registration {d}"))?.triples;
    let subjects: BTreeSet<&Iri> = claims.iter().map(|t| t.subject()).collect();
    let [agent] = subjects.into_iter().collect::<Vec<_>>()[..] else {
        return Err("registration must describe exactly one agent".into());
    };
    let agent = agent.clone();
    if let Err(e) = engine.register(&agent, None, &claims) {
        return Ok(format!("registration: {}\ndetail: {e}\n", e.code()));
    }

    let action = PermissionAction::parse(action).ok_or_else(|| format!("unknown action {action:?}"))?;
    let (graph, request_body) = match action {
        PermissionAction::Query => {
            let p = PatternText::parse(body, &prefixes).map_err(|e| format!("request {e}"))?;
            (p.graph, RequestBody::Patterns(p.patterns))
        }
        _ => {
            let (graph, rest) = split_graph_line(body).map_err(|e| format!("request {e}"))?;
            let doc = turtle::parse_with(rest, prefixes.clone()).map_err(|d| format!("request {d}"))?;
            (graph, RequestBody::Triples(doc.triples.into_iter().collect()))
        }
    };
    let request =
        Request::new(agent, action, graph.unwrap_or(default_graph), request_body).map_err(|e| e.to_string())?;
    let execution = engine.execute(&request);

    let d = &execution.decision;
    let mut out = String::new();
    let _ = writeln!(out, "registration: OK");
    let _ = writeln!(out, "outcome: {}", d.outcome().as_str());
    let _ = writeln!(out, "reason: {}", d.reason().as_str());
    let _ = writeln!(out, "rule: {}", d.fired_rule());
    if !d.detail().is_empty() {
        let _ = writeln!(out, "detail: {}", d.detail());
    }
    if d.is_permit() {
        match action {
            PermissionAction::Query => {
                let _ = writeln!(out, "bindings: {}", execution.bindings.len());
                out.push_str(&format_bindings(&execution.bindings));
            }
            _ => {
                let _ = writeln!(out, "changed: {}", execution.changed);
            }
        }
    }
    Ok(out)
}

/// Parses Turtle and returns its canonical serialization, after checking
/// that the canonical text parses back to the same triples.
pub fn roundtrip_text(text: &str) -> Result<String, String> {
    let doc = turtle::parse(text).map_err(|d| d.to_string())?;
    let canonical = turtle::serialize(&doc.triples, &doc.prefixes);
    let again = turtle::parse(&canonical).map_err(|d| format!("canonical text does not parse: {d}"))?;
    if again.triples != doc.triples {
        return Err("canonical text parses to different triples".into());
    }
    Ok(canonical)
}

/// Runs a scenario under both modes and tabulates the step outcomes.
pub fn compare_text(scenario: &str) -> Result<String, String> {
    let mut config = ScenarioConfig::parse(scenario, Path::new(".")).map_err(|e| e.to_string())?;
    config.mode = AuthorizationMode::Hybrid;
    let hybrid = run_scenario(&config, RunOptions::default(), None).map_err(|e| e.to_string())?;
    config.mode = AuthorizationMode::RbacOnly;
    let rbac = run_scenario(&config, RunOptions::default(), None).map_err(|e| e.to_string())?;
    Ok(comparison(&hybrid, &rbac))
}

fn cell(outcome: &str, reason: &str) -> String {
    if reason.is_empty() {
        outcome.to_string()
    } else {
        format!("{outcome} {reason}")
    }
}

fn comparison(hybrid: &ScenarioReport, rbac: &ScenarioReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", hybrid.name);
    let _ = writeln!(out, "step\tagent\taction\toverreach\thybrid\trbac-only");
    for (h, r) in hybrid.steps.iter().zip(&rbac.steps) {
        let agent = h.agent.as_str().rsplit('/').next().unwrap_or_default();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            h.order,
            agent,
            h.action,
            if h.overreach { "yes" } else { "no" },
            cell(&h.outcome, &h.reason),
            cell(&r.outcome, &r.reason)
        );
    }
    let permitted =
        |r: &ScenarioReport| r.steps.iter().filter(|s| s.permitted()).map(|s| s.step.clone()).collect::<BTreeSet<_>>();
    let _ =
        writeln!(out, "overreach permitted (hybrid): {}/{}", hybrid.overreach_permitted(), hybrid.overreach_total());
    let _ = writeln!(out, "overreach permitted (rbac-only): {}/{}", rbac.overreach_permitted(), rbac.overreach_total());
    let _ = writeln!(out, "hybrid permits within rbac-only permits: {}", permitted(hybrid).is_subset(&permitted(rbac)));
    let _ = writeln!(out, "status: hybrid {} / rbac-only {}", hybrid.status, rbac.status);
    out
}

#[wasm_bindgen]
pub fn authorize(facts: &str, registration: &str, action: &str, body: &str, mode: &str) -> Result<String, JsValue> {
    authorize_text(facts, registration, action, body, mode).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn turtle_roundtrip(text: &str) -> Result<String, JsValue> {
    roundtrip_text(text).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare_modes(scenario: &str) -> Result<String, JsValue> {
    compare_text(scenario).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sample_scenario(name: &str) -> Option<String> {
    match name {
        "closed_loop" => Some(CLOSED_LOOP.to_string()),
        "compromised_grounder" => Some(COMPROMISED_GROUNDER.to_string()),
        _ => None,
    }
}
