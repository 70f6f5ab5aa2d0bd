//! Scenario files: agents, seed facts and scripted steps, all as triples in
//! the `sc:` namespace.
//!
//! ```text
//! sc:run a sc:Scenario ; sc:name "demo" ; sc:mode "hybrid" ; sc:seed "7" ;
//!     sc:goal "ex:actuation1 ex:actuates ex:action2" .
//! sc:g1 a sc:Agent ; sc:order "1" ; sc:commonName "g1" ; sc:certificateRole "grounder" ;
//!     sc:identity <http://example.org/handlers/g1> ; sc:function ex:UserPlaneGrounding ;
//!     sc:accessTo ex:cell1 ; sc:predicate ex:latencyMs .
//! sc:f1 a sc:Facts ; sc:graph ex:kb ; sc:triples "ex:cell1 ex:servedBy ex:gnb1 ." .
//! sc:s1 a sc:Step ; sc:order "1" ; sc:agent sc:g1 ; sc:action "ASSERT" ;
//!     sc:body "ex:cell1 ex:latencyMs \"42\" ." ; sc:expect "PERMIT" .
//! ```
//!
//! Step bodies use pattern text for `QUERY` and Turtle for `ASSERT` and
//! `RETRACT`; the ontology prefixes and `agents:` are predeclared.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{AuthorizationMode, RegistrationClaims};
use crate::ontology::{load_ontology, Ontology, OntologyError, NS};
use crate::rdf::{Iri, Term, Triple};
use crate::session::DEFAULT_AGENT_NAMESPACE;
use crate::turtle::{self, Canonical, Document, ParseDiagnostic, PrefixMap};
use crate::wire::{split_graph_line, BodyError, MessageType, PatternText};

pub const SCENARIO_NS: &str = "http://example.org/scenario#";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(#[from] ParseDiagnostic),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("ontology: {0}")]
    Ontology(#[from] OntologyError),
    #[error("no sc:Scenario node")]
    NoScenario,
    #[error("{node}: missing {key}")]
    Missing { node: String, key: &'static str },
    #[error("{node}: {key} has more than one value")]
    Several { node: String, key: &'static str },
    #[error("{node}: bad value for {key}: {value}")]
    BadValue { node: String, key: &'static str, value: String },
    #[error("agent common name {0:?} is used twice")]
    DuplicateAgent(String),
    #[error("step {step} names unknown agent {agent}")]
    UnknownAgent { step: String, agent: String },
    #[error("{node}: body line {line}: {message}")]
    Body { node: String, line: usize, message: String },
    #[error("{node} references undeclared IRI {iri}")]
    Undeclared { node: String, iri: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    Permit,
    Deny,
    Any,
}

impl Expectation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Permit => "PERMIT",
            Self::Deny => "DENY",
            Self::Any => "ANY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSpec {
    pub node: Iri,
    pub order: u64,
    pub common_name: String,
    pub certificate_role: String,
    pub agent: Iri,
    pub claims: RegistrationClaims,
    /// Extra registration Turtle appended verbatim.
    pub extra_claims: Option<String>,
}

impl AgentSpec {
    pub fn registration_payload(&self, ontology: &Ontology, prefixes: &PrefixMap) -> String {
        let mut text = turtle::serialize(&self.claims.to_triples(&ontology.vocabulary), prefixes);
        if let Some(extra) = &self.extra_claims {
            text.push_str(extra);
            text.push('\n');
        }
        text
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub node: Iri,
    pub order: u64,
    pub agent: Iri,
    pub kind: MessageType,
    /// Wire body, including a `GRAPH` line when the step names a graph.
    pub body: String,
    pub expect: Expectation,
    pub expect_reason: Option<String>,
    pub overreach: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: AuthorizationMode,
    pub seed: u64,
    pub strict_termination: bool,
    pub ontology_path: Option<PathBuf>,
    pub exceptions_path: Option<PathBuf>,
    pub ontology: Ontology,
    pub agents: Vec<AgentSpec>,
    pub facts: Vec<(Iri, Triple)>,
    pub steps: Vec<Step>,
    pub goal: Option<Triple>,
}

pub fn scenario_prefixes(ontology: &Ontology) -> PrefixMap {
    let mut p = ontology.vocabulary.prefixes();
    p.insert("agents", Iri::new(DEFAULT_AGENT_NAMESPACE).expect("constant"));
    p.insert("sc", Iri::new(SCENARIO_NS).expect("constant"));
    p
}

struct Nodes<'a> {
    doc: &'a Document,
}

impl<'a> Nodes<'a> {
    fn sc(local: &str) -> Iri {
        Iri::new(format!("{SCENARIO_NS}{local}")).expect("constant")
    }

    fn typed(&self, class: &str) -> Vec<&'a Iri> {
        let rdf_type = Iri::new(turtle::RDF_TYPE).expect("constant");
        let class = Self::sc(class);
        self.doc
            .triples
            .iter()
            .filter(|t| *t.predicate() == rdf_type && t.object().as_iri() == Some(&class))
            .map(|t| t.subject())
            .collect()
    }

    fn values(&self, node: &Iri, key: &str) -> Vec<&'a Term> {
        let p = Self::sc(key);
        self.doc.triples.iter().filter(|t| t.subject() == node && *t.predicate() == p).map(|t| t.object()).collect()
    }

    fn optional(&self, node: &Iri, key: &'static str) -> Result<Option<&'a Term>, ScenarioError> {
        let v = self.values(node, key);
        match v.as_slice() {
            [] => Ok(None),
            [one] => Ok(Some(one)),
            _ => Err(ScenarioError::Several { node: node.to_string(), key }),
        }
    }

    fn text(&self, node: &Iri, key: &'static str) -> Result<Option<&'a str>, ScenarioError> {
        match self.optional(node, key)? {
            None => Ok(None),
            Some(Term::Literal(l)) => Ok(Some(l.lexical())),
            Some(other) => Err(bad(node, key, other)),
        }
    }

    fn required_text(&self, node: &Iri, key: &'static str) -> Result<&'a str, ScenarioError> {
        self.text(node, key)?.ok_or_else(|| ScenarioError::Missing { node: node.to_string(), key })
    }

    fn iri(&self, node: &Iri, key: &'static str) -> Result<Option<&'a Iri>, ScenarioError> {
        match self.optional(node, key)? {
            None => Ok(None),
            Some(Term::Iri(i)) => Ok(Some(i)),
            Some(other) => Err(bad(node, key, other)),
        }
    }

    fn iris(&self, node: &Iri, key: &'static str) -> Result<Vec<Iri>, ScenarioError> {
        self.values(node, key).into_iter().map(|t| t.as_iri().cloned().ok_or_else(|| bad(node, key, t))).collect()
    }

    fn number(&self, node: &Iri, key: &'static str) -> Result<Option<u64>, ScenarioError> {
        self.text(node, key)?
            .map(|s| s.parse().map_err(|_| ScenarioError::BadValue { node: node.to_string(), key, value: s.into() }))
            .transpose()
    }

    fn flag(&self, node: &Iri, key: &'static str) -> Result<Option<bool>, ScenarioError> {
        match self.text(node, key)? {
            None => Ok(None),
            Some("true") => Ok(Some(true)),
            Some("false") => Ok(Some(false)),
            Some(s) => Err(ScenarioError::BadValue { node: node.to_string(), key, value: s.into() }),
        }
    }
}

fn bad(node: &Iri, key: &'static str, value: &Term) -> ScenarioError {
    ScenarioError::BadValue { node: node.to_string(), key, value: Canonical(value).to_string() }
}

fn body_error(node: &Iri, e: BodyError) -> ScenarioError {
    let BodyError::Syntax { line, message } = e;
    ScenarioError::Body { node: node.to_string(), line, message }
}

fn diag_error(node: &Iri, d: ParseDiagnostic) -> ScenarioError {
    ScenarioError::Body { node: node.to_string(), line: d.line, message: d.message }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = read(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses and validates a scenario; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let bootstrap = scenario_prefixes(&Ontology::default_ontology());
        let doc = turtle::parse_with(text, bootstrap)?;
        let nodes = Nodes { doc: &doc };
        let run = *nodes.typed("Scenario").first().ok_or(ScenarioError::NoScenario)?;

        let ontology_path = nodes.text(run, "ontology")?.map(|p| base.join(p));
        let exceptions_path = nodes.text(run, "exceptions")?.map(|p| base.join(p));
        let ontology = match &ontology_path {
            Some(p) => load_ontology(&read(p)?)?,
            None => Ontology::default_ontology(),
        };
        let prefixes = scenario_prefixes(&ontology);

        let mode = match nodes.text(run, "mode")? {
            None => AuthorizationMode::Hybrid,
            Some(m) => AuthorizationMode::parse(m).ok_or_else(|| ScenarioError::BadValue {
                node: run.to_string(),
                key: "mode",
                value: m.into(),
            })?,
        };
        let name = nodes.required_text(run, "name")?.to_string();
        let seed = nodes.number(run, "seed")?.unwrap_or(0);
        let strict_termination = nodes.flag(run, "strictTermination")?.unwrap_or(true);
        let goal = match nodes.text(run, "goal")? {
            None => None,
            Some(g) => {
                let p = PatternText::parse(g, &prefixes).map_err(|e| body_error(run, e))?;
                let [pattern] = p.patterns.as_slice() else {
                    return Err(ScenarioError::BadValue { node: run.to_string(), key: "goal", value: g.into() });
                };
                Some(pattern.instantiate(&Default::default()).ok_or_else(|| ScenarioError::BadValue {
                    node: run.to_string(),
                    key: "goal",
                    value: g.into(),
                })?)
            }
        };

        let mut agents = Vec::new();
        let mut names = BTreeSet::new();
        for node in nodes.typed("Agent") {
            let common_name = nodes.required_text(node, "commonName")?.to_string();
            if !names.insert(common_name.clone()) {
                return Err(ScenarioError::DuplicateAgent(common_name));
            }
            let agent = Iri::new(format!("{DEFAULT_AGENT_NAMESPACE}{common_name}")).map_err(|_| {
                ScenarioError::BadValue { node: node.to_string(), key: "commonName", value: common_name.clone() }
            })?;
            let mut claims = RegistrationClaims::new(agent.clone())
                .access(nodes.iris(node, "accessTo")?)
                .predicates(nodes.iris(node, "predicate")?)
                .graphs(nodes.iris(node, "graph")?)
                .values(nodes.values(node, "allowedValue").into_iter().filter_map(|t| t.as_literal().cloned()));
            if let Some(i) = nodes.iri(node, "identity")? {
                claims = claims.identity(i.clone());
            }
            if let Some(f) = nodes.iri(node, "function")? {
                claims = claims.function(f.clone());
            }
            agents.push(AgentSpec {
                node: node.clone(),
                order: nodes.number(node, "order")?.unwrap_or(0),
                certificate_role: nodes.required_text(node, "certificateRole")?.to_string(),
                common_name,
                agent,
                claims,
                extra_claims: nodes.text(node, "claims")?.map(str::to_string),
            });
        }
        agents.sort_by(|a, b| (a.order, &a.common_name).cmp(&(b.order, &b.common_name)));

        let mut facts = Vec::new();
        for node in nodes.typed("Facts") {
            let graph =
                nodes.iri(node, "graph")?.cloned().unwrap_or_else(|| Iri::new(format!("{NS}kb")).expect("constant"));
            let text = nodes.required_text(node, "triples")?;
            let parsed = turtle::parse_with(text, prefixes.clone()).map_err(|d| diag_error(node, d))?;
            facts.extend(parsed.triples.into_iter().map(|t| (graph.clone(), t)));
        }

        let mut steps = Vec::new();
        for node in nodes.typed("Step") {
            let agent_node = nodes
                .iri(node, "agent")?
                .ok_or_else(|| ScenarioError::Missing { node: node.to_string(), key: "agent" })?;
            let agent =
                agents.iter().find(|a| &a.node == agent_node).map(|a| a.agent.clone()).ok_or_else(|| {
                    ScenarioError::UnknownAgent { step: node.to_string(), agent: agent_node.to_string() }
                })?;
            let action = nodes.required_text(node, "action")?;
            let kind = match action {
                "QUERY" => MessageType::Query,
                "ASSERT" => MessageType::Assert,
                "RETRACT" => MessageType::Retract,
                other => {
                    return Err(ScenarioError::BadValue { node: node.to_string(), key: "action", value: other.into() })
                }
            };
            let mut body = String::new();
            if let Some(g) = nodes.iri(node, "graph")? {
                body.push_str(&format!("GRAPH <{}>\n", g.as_str()));
            }
            body.push_str(nodes.required_text(node, "body")?);
            let expect = match nodes.text(node, "expect")?.unwrap_or("ANY") {
                "PERMIT" => Expectation::Permit,
                "DENY" => Expectation::Deny,
                "ANY" => Expectation::Any,
                other => {
                    return Err(ScenarioError::BadValue { node: node.to_string(), key: "expect", value: other.into() })
                }
            };
            steps.push(Step {
                node: node.clone(),
                order: nodes.number(node, "order")?.unwrap_or(0),
                agent,
                kind,
                body,
                expect,
                expect_reason: nodes.text(node, "expectReason")?.map(str::to_string),
                overreach: nodes.flag(node, "overreach")?.unwrap_or(false),
            });
        }
        steps.sort_by(|a, b| (a.order, &a.node).cmp(&(b.order, &b.node)));

        let config = Self {
            name,
            mode,
            seed,
            strict_termination,
            ontology_path,
            exceptions_path,
            ontology,
            agents,
            facts,
            steps,
            goal,
        };
        config.check_declared(&nodes.iris(run, "declares")?, &prefixes)?;
        Ok(config)
    }

    /// IRIs a step body may mention: the vocabulary, everything the agents
    /// declare, the seed facts, the goal, and explicit `sc:declares` values.
    fn declared(&self, extra: &[Iri]) -> BTreeSet<Iri> {
        let mut out: BTreeSet<Iri> = extra.iter().cloned().collect();
        let ex = |l: &str| Iri::new(format!("{NS}{l}")).expect("constant");
        out.extend([ex("ANY"), ex("kb")]);
        let add_triple = |t: &Triple, out: &mut BTreeSet<Iri>| {
            out.insert(t.subject().clone());
            out.insert(t.predicate().clone());
            if let Some(i) = t.object().as_iri() {
                out.insert(i.clone());
            }
        };
        for a in &self.agents {
            out.insert(a.agent.clone());
            for t in a.claims.to_triples(&self.ontology.vocabulary) {
                add_triple(&t, &mut out);
            }
        }
        for (g, t) in &self.facts {
            out.insert(g.clone());
            add_triple(t, &mut out);
        }
        if let Some(goal) = &self.goal {
            add_triple(goal, &mut out);
        }
        out
    }

    fn check_declared(&self, extra: &[Iri], prefixes: &PrefixMap) -> Result<(), ScenarioError> {
        let declared = self.declared(extra);
        let known = |i: &Iri| declared.contains(i) || self.ontology.is_vocabulary(i);
        for step in &self.steps {
            let (graph, rest) = split_graph_line(&step.body).map_err(|e| body_error(&step.node, e))?;
            let mut iris: Vec<Iri> = graph.into_iter().collect();
            let terms: Vec<Term> = match step.kind {
                MessageType::Query => PatternText::parse(rest, prefixes)
                    .map_err(|e| body_error(&step.node, e))?
                    .patterns
                    .iter()
                    .flat_map(|p| p.terms().map(Term::clone))
                    .collect(),
                _ => turtle::parse_with(rest, prefixes.clone())
                    .map_err(|d| diag_error(&step.node, d))?
                    .triples
                    .iter()
                    .flat_map(|t| {
                        [Term::Iri(t.subject().clone()), Term::Iri(t.predicate().clone()), t.object().clone()]
                    })
                    .collect(),
            };
            iris.extend(terms.into_iter().filter_map(|t| t.as_iri().cloned()));
            if let Some(unknown) = iris.iter().find(|i| !known(i)) {
                return Err(ScenarioError::Undeclared {
                    node: step.node.to_string(),
                    iri: unknown.as_str().to_string(),
                });
            }
        }
        Ok(())
    }
}
