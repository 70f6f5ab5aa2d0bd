//! Least-privilege, deny-by-default authorization of knowledge-base agents.
//!
//! Agents of an intent management loop (grounding, proposal, prediction,
//! evaluation, actuation) read and write an RDF knowledge base of named
//! graphs. Each agent registers the resources and predicates it handles; the
//! engine turns that into a per-agent profile graph and decides every query
//! or assertion against it.

pub mod audit;
pub mod clock;
pub mod config;
pub mod engine;
pub mod ontology;
pub mod rdf;
pub mod session;
pub mod sim;
pub mod turtle;
pub mod wire;

pub use engine::{AuthorizationMode, Decision, Engine, EngineConfig, PermissionAction, ReasonCode, Request};
pub use rdf::{Dataset, Iri, Literal, Term, Triple, TriplePattern};

pub static DEFAULT_EXCEPTIONS: &str = include_str!("../../../data/exceptions.ttl");
pub static DEFAULT_RULES: &str = include_str!("../../../data/rules.ttl");
