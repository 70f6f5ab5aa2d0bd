//! Scenario execution over the loopback transport.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;

use chrono::{TimeZone, Utc};
use thiserror::Error;

use super::scenario::{scenario_prefixes, Expectation, ScenarioConfig, Step};
use super::snapshot::write_snapshot;
use crate::audit::MemoryAudit;
use crate::clock::VirtualClock;
use crate::engine::{load_exceptions, Engine, EngineConfig, ExceptionError};
use crate::rdf::Iri;
use crate::session::{CertificateAuthority, SessionController, TrustStore};
use crate::wire::{loopback, shared, Client, LoopbackTransport, Reply, SharedController};

pub const STATUS_COMPLETED: &str = "COMPLETED";
pub const STATUS_STALLED: &str = "SCENARIO_STALLED";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("exceptions: {0}")]
    Exceptions(#[from] ExceptionError),
    #[error("agent {agent}: transport failure: {message}")]
    Transport { agent: String, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// One thread per agent for the step phase. Audit order is then not reproducible.
    pub concurrent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub step: Iri,
    pub order: u64,
    pub agent: Iri,
    pub action: &'static str,
    /// `PERMIT`, `DENY`, `ERROR` or `SKIPPED` (session already ended).
    pub outcome: String,
    pub reason: String,
    pub expect: Expectation,
    pub expect_reason: Option<String>,
    pub overreach: bool,
}

impl StepOutcome {
    pub fn permitted(&self) -> bool {
        self.outcome == "PERMIT"
    }

    pub fn as_expected(&self) -> bool {
        let outcome_ok = match self.expect {
            Expectation::Any => true,
            Expectation::Permit => self.outcome == "PERMIT",
            Expectation::Deny => self.outcome == "DENY",
        };
        outcome_ok && self.expect_reason.as_ref().is_none_or(|r| *r == self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentStats {
    pub registered: bool,
    pub permits: usize,
    pub denials: usize,
    pub terminated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioReport {
    pub name: String,
    pub mode: &'static str,
    pub seed: u64,
    pub status: &'static str,
    pub steps: Vec<StepOutcome>,
    pub agents: BTreeMap<Iri, AgentStats>,
    pub denial_reasons: BTreeMap<String, usize>,
    pub decisions: u64,
    pub audit: String,
    pub snapshot: String,
    pub audit_path: Option<PathBuf>,
    pub snapshot_path: Option<PathBuf>,
}

impl ScenarioReport {
    pub fn permitted(&self) -> usize {
        self.steps.iter().filter(|s| s.permitted()).count()
    }

    pub fn denied(&self) -> usize {
        self.steps.iter().filter(|s| s.outcome == "DENY").count()
    }

    pub fn overreach_total(&self) -> usize {
        self.steps.iter().filter(|s| s.overreach).count()
    }

    pub fn overreach_permitted(&self) -> usize {
        self.steps.iter().filter(|s| s.overreach && s.permitted()).count()
    }

    pub fn unexpected(&self) -> usize {
        self.steps.iter().filter(|s| !s.as_expected()).count()
    }
}

fn local(iri: &Iri) -> &str {
    let s = iri.as_str();
    s.rsplit(['#', '/']).next().unwrap_or(s)
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario: {}", self.name)?;
        writeln!(f, "mode: {}", self.mode)?;
        writeln!(f, "seed: {}", self.seed)?;
        writeln!(f, "status: {}", self.status)?;
        writeln!(f, "steps: {}", self.steps.len())?;
        writeln!(f, "permitted: {}", self.permitted())?;
        writeln!(f, "denied: {}", self.denied())?;
        writeln!(f, "overreach_permitted: {}/{}", self.overreach_permitted(), self.overreach_total())?;
        writeln!(f, "unexpected: {}", self.unexpected())?;
        writeln!(f, "decisions: {}", self.decisions)?;
        for (agent, s) in &self.agents {
            writeln!(
                f,
                "agent: {} registered={} permits={} denials={} terminated={}",
                agent,
                s.registered,
                s.permits,
                s.denials,
                s.terminated.as_deref().unwrap_or("-")
            )?;
        }
        for (reason, n) in &self.denial_reasons {
            writeln!(f, "denial: {reason} {n}")?;
        }
        for s in &self.steps {
            writeln!(
                f,
                "step: {} {} {} {} {} expect={}{}{}",
                s.order,
                local(&s.step),
                local(&s.agent),
                s.action,
                s.outcome,
                s.expect.as_str(),
                s.expect_reason.as_ref().map(|r| format!("/{r}")).unwrap_or_default(),
                if s.reason.is_empty() { String::new() } else { format!(" reason={}", s.reason) },
            )?;
        }
        writeln!(f, "audit: {}", self.audit_path.as_ref().map_or("-".into(), |p| p.display().to_string()))?;
        writeln!(f, "snapshot: {}", self.snapshot_path.as_ref().map_or("-".into(), |p| p.display().to_string()))
    }
}

fn outcome_of(reply: &Reply) -> (&'static str, String) {
    match reply {
        Reply::Ok(_) => ("PERMIT", "OK".into()),
        Reply::Deny { code, .. } => ("DENY", code.clone()),
        Reply::Error { code, .. } => ("ERROR", code.clone()),
        Reply::Bye(reason) => ("ERROR", reason.clone()),
    }
}

fn run_step(client: &mut Client<LoopbackTransport>, step: &Step) -> (String, String) {
    if let Some(reason) = client.terminated() {
        return ("SKIPPED".into(), reason.to_string());
    }
    match client.call(step.kind, &step.body) {
        Ok(reply) => {
            let (o, r) = outcome_of(&reply);
            (o.into(), r)
        }
        Err(e) => ("ERROR".into(), e.to_string()),
    }
}

/// Builds the engine, connects and registers every agent, plays the steps,
/// snapshots the knowledge base and disconnects. Deterministic for a given
/// scenario and seed unless `options.concurrent` is set.
pub fn run_scenario(
    config: &ScenarioConfig,
    options: RunOptions,
    out_dir: Option<&Path>,
) -> Result<ScenarioReport, RunError> {
    let exceptions_text = match &config.exceptions_path {
        Some(p) => fs::read_to_string(p).map_err(|source| RunError::Read { path: p.clone(), source })?,
        None => crate::DEFAULT_EXCEPTIONS.to_string(),
    };
    let exceptions = load_exceptions(&exceptions_text, &config.ontology.vocabulary)?;
    let engine_config =
        EngineConfig { mode: config.mode, strict_termination: config.strict_termination, ..EngineConfig::default() };
    let mut engine = Engine::new(config.ontology.clone(), exceptions, engine_config);
    for (g, t) in &config.facts {
        engine.seed(g, t.clone());
    }

    let ca = CertificateAuthority::from_seed("kbauthz-scenario-ca", &format!("scenario:{}", config.seed));
    let audit = MemoryAudit::new();
    let controller = SessionController::new(
        engine,
        TrustStore::from(ca.anchor()),
        Arc::new(VirtualClock::seeded(config.seed)),
        Box::new(audit.clone()),
    )
    .with_seed(config.seed);
    let controller = shared(controller);

    let prefixes = scenario_prefixes(&config.ontology);
    let not_before = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let not_after = Utc.with_ymd_and_hms(2030, 1, 1, 0, 0, 0).unwrap();

    let mut agents: BTreeMap<Iri, AgentStats> = BTreeMap::new();
    let mut clients: BTreeMap<Iri, Client<LoopbackTransport>> = BTreeMap::new();
    for entry in &config.agents {
        let mut client = loopback(&controller);
        let credential = ca.issue_agent(&entry.common_name, &entry.certificate_role, not_before, not_after);
        let transport = |e: crate::wire::ClientError| RunError::Transport {
            agent: entry.common_name.clone(),
            message: e.to_string(),
        };
        let mut stats = AgentStats::default();
        let hello = client.hello(&credential.to_text()).map_err(transport)?;
        if hello.is_ok() {
            let reply = client.register(&entry.registration_payload(&config.ontology, &prefixes)).map_err(transport)?;
            stats.registered = reply.is_ok();
        }
        stats.terminated = client.terminated().map(str::to_string);
        agents.insert(entry.agent.clone(), stats);
        clients.insert(entry.agent.clone(), client);
    }

    let mut results: Vec<(usize, String, String)> = Vec::new();
    if options.concurrent {
        let mut per_agent: BTreeMap<Iri, Vec<(usize, &Step)>> = BTreeMap::new();
        for (i, s) in config.steps.iter().enumerate() {
            per_agent.entry(s.agent.clone()).or_default().push((i, s));
        }
        thread::scope(|scope| {
            let handles: Vec<_> = per_agent
                .into_iter()
                .filter_map(|(agent, steps)| {
                    let mut client = clients.remove(&agent)?;
                    Some(scope.spawn(move || {
                        let out: Vec<_> = steps
                            .into_iter()
                            .map(|(i, s)| {
                                let (o, r) = run_step(&mut client, s);
                                (i, o, r)
                            })
                            .collect();
                        (agent, client, out)
                    }))
                })
                .collect();
            for h in handles {
                let (agent, client, out) = h.join().expect("agent thread");
                clients.insert(agent, client);
                results.extend(out);
            }
        });
        results.sort_by_key(|(i, _, _)| *i);
    } else {
        for (i, step) in config.steps.iter().enumerate() {
            let (o, r) = match clients.get_mut(&step.agent) {
                Some(client) => run_step(client, step),
                None => ("SKIPPED".into(), "NOT_CONNECTED".into()),
            };
            results.push((i, o, r));
        }
    }

    let mut steps = Vec::new();
    let mut denial_reasons: BTreeMap<String, usize> = BTreeMap::new();
    for (i, outcome, reason) in results {
        let step = &config.steps[i];
        let stats = agents.entry(step.agent.clone()).or_default();
        match outcome.as_str() {
            "PERMIT" => stats.permits += 1,
            "DENY" => {
                stats.denials += 1;
                *denial_reasons.entry(reason.clone()).or_default() += 1;
            }
            _ => {}
        }
        steps.push(StepOutcome {
            step: step.node.clone(),
            order: step.order,
            agent: step.agent.clone(),
            action: step.kind.as_str(),
            reason: if outcome == "PERMIT" { String::new() } else { reason },
            outcome,
            expect: step.expect,
            expect_reason: step.expect_reason.clone(),
            overreach: step.overreach,
        });
    }

    let (snapshot, status, decisions) = {
        let c = lock(&controller);
        let dataset = c.engine().dataset();
        let reached = config.goal.as_ref().is_none_or(|goal| dataset.quads().any(|(_, t)| t == goal));
        (
            write_snapshot(dataset, &prefixes),
            if reached { STATUS_COMPLETED } else { STATUS_STALLED },
            c.engine().decision_count(),
        )
    };

    for (agent, mut client) in clients {
        if client.terminated().is_none() {
            let _ = client.bye();
        }
        if let Some(stats) = agents.get_mut(&agent) {
            if stats.terminated.is_none() {
                stats.terminated = client.terminated().filter(|r| *r != "CLIENT_BYE").map(str::to_string);
            }
        }
    }
    lock(&controller).flush_audit();
    let audit_text = audit.to_text();

    let (audit_path, snapshot_path) = match out_dir {
        Some(dir) => {
            let write = |name: String, text: &str| -> Result<PathBuf, RunError> {
                fs::create_dir_all(dir).map_err(|source| RunError::Write { path: dir.to_path_buf(), source })?;
                let path = dir.join(name);
                fs::write(&path, text).map_err(|source| RunError::Write { path: path.clone(), source })?;
                Ok(path)
            };
            (
                Some(write(format!("{}.audit.tsv", config.name), &audit_text)?),
                Some(write(format!("{}.snapshot.ttl", config.name), &snapshot)?),
            )
        }
        None => (None, None),
    };

    Ok(ScenarioReport {
        name: config.name.clone(),
        mode: config.mode.as_str(),
        seed: config.seed,
        status,
        steps,
        agents,
        denial_reasons,
        decisions,
        audit: audit_text,
        snapshot,
        audit_path,
        snapshot_path,
    })
}

fn lock(c: &SharedController) -> std::sync::MutexGuard<'_, SessionController> {
    c.lock().unwrap_or_else(|p| p.into_inner())
}
