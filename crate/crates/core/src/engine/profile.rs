//! Per-agent authorization profiles and their graph encoding.

use std::collections::BTreeSet;

use thiserror::Error;

use super::PermissionAction;
use crate::ontology::Vocabulary;
use crate::rdf::{Iri, Literal, NamedGraph, Term, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("profile graph names no agent")]
    NoAgent,
    #[error("profile graph is missing {0}")]
    Missing(&'static str),
    #[error("profile graph has several values for {0}")]
    Multiple(&'static str),
    #[error("unexpected value for {predicate}: {value}")]
    BadValue { predicate: &'static str, value: String },
}

/// The live policy of one agent. Stored one-to-one as triples in `profile_graph`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorizationProfile {
    pub profile_graph: Iri,
    pub agent: Iri,
    /// Handler IRI the agent registered with.
    pub identity: Iri,
    pub member_of: Iri,
    pub role: Iri,
    pub confined_graphs: BTreeSet<Iri>,
    pub authorized_predicates: BTreeSet<Iri>,
    pub access_to: BTreeSet<Iri>,
    pub allowed_permissions: BTreeSet<PermissionAction>,
    pub allowed_permission_values: BTreeSet<Literal>,
    pub attributes: BTreeSet<(Iri, Term)>,
}

pub fn profile_graph_name(agent: &Iri) -> Iri {
    Iri::new(format!("{}#profile", agent.as_str())).expect("suffix keeps the IRI valid")
}

pub fn agent_graph_name(agent: &Iri) -> Iri {
    Iri::new(format!("{}#facts", agent.as_str())).expect("suffix keeps the IRI valid")
}

impl AuthorizationProfile {
    pub fn to_triples(&self, vocab: &Vocabulary) -> Vec<Triple> {
        let node = &self.profile_graph;
        let t = |p: &Iri, o: Term| Triple::from_parts(node.clone(), p.clone(), o).expect("ground profile triple");
        let mut out = vec![
            Triple::from_parts(self.agent.clone(), vocab.has_authorization_profile.clone(), node.clone())
                .expect("ground profile triple"),
            t(&vocab.rdf_type, vocab.authorization_profile.clone().into()),
            t(&vocab.member_of, self.member_of.clone().into()),
            t(&vocab.has_identity, self.identity.clone().into()),
            t(&vocab.has_role, self.role.clone().into()),
        ];
        out.extend(self.confined_graphs.iter().map(|g| t(&vocab.confined_to_graph, g.clone().into())));
        out.extend(self.authorized_predicates.iter().map(|p| t(&vocab.authorized_predicates, p.clone().into())));
        out.extend(self.access_to.iter().map(|r| t(&vocab.access_to, r.clone().into())));
        out.extend(
            self.allowed_permissions
                .iter()
                .map(|a| t(&vocab.allowed_permission, vocab.permission_iri(*a).clone().into())),
        );
        out.extend(
            self.allowed_permission_values.iter().map(|v| t(&vocab.allowed_permission_values, v.clone().into())),
        );
        out.extend(self.attributes.iter().map(|(p, o)| t(p, o.clone())));
        out
    }

    pub fn from_graph(graph: &NamedGraph, vocab: &Vocabulary) -> Result<Self, ProfileError> {
        let node = graph.name().clone();
        let agent = graph
            .triples()
            .iter()
            .find(|t| t.predicate() == &vocab.has_authorization_profile && t.object().as_iri() == Some(&node))
            .map(|t| t.subject().clone())
            .ok_or(ProfileError::NoAgent)?;

        let mut identity = None;
        let mut member_of = None;
        let mut role = None;
        let mut profile = AuthorizationProfile {
            profile_graph: node.clone(),
            agent,
            identity: node.clone(),
            member_of: node.clone(),
            role: node.clone(),
            confined_graphs: BTreeSet::new(),
            authorized_predicates: BTreeSet::new(),
            access_to: BTreeSet::new(),
            allowed_permissions: BTreeSet::new(),
            allowed_permission_values: BTreeSet::new(),
            attributes: BTreeSet::new(),
        };

        fn single(slot: &mut Option<Iri>, value: &Term, name: &'static str) -> Result<(), ProfileError> {
            let iri = iri_value(value, name)?;
            if slot.replace(iri).is_some() {
                return Err(ProfileError::Multiple(name));
            }
            Ok(())
        }

        for t in graph.with_subject(&node) {
            let p = t.predicate();
            let o = t.object();
            if *p == vocab.rdf_type {
                if o.as_iri() != Some(&vocab.authorization_profile) {
                    profile.attributes.insert((p.clone(), o.clone()));
                }
            } else if *p == vocab.has_identity {
                single(&mut identity, o, "hasIdentity")?;
            } else if *p == vocab.member_of {
                single(&mut member_of, o, "memberOf")?;
            } else if *p == vocab.has_role {
                single(&mut role, o, "hasRole")?;
            } else if *p == vocab.confined_to_graph {
                profile.confined_graphs.insert(iri_value(o, "confinedToGraph")?);
            } else if *p == vocab.authorized_predicates {
                profile.authorized_predicates.insert(iri_value(o, "authorizedPredicates")?);
            } else if *p == vocab.access_to {
                profile.access_to.insert(iri_value(o, "accessTo")?);
            } else if *p == vocab.allowed_permission {
                let action =
                    o.as_iri().and_then(|i| vocab.permission_from_iri(i)).ok_or_else(|| bad("allowedPermission", o))?;
                profile.allowed_permissions.insert(action);
            } else if *p == vocab.allowed_permission_values {
                let lit = o.as_literal().ok_or_else(|| bad("allowedPermissionValues", o))?;
                profile.allowed_permission_values.insert(lit.clone());
            } else {
                profile.attributes.insert((p.clone(), o.clone()));
            }
        }
        profile.identity = identity.ok_or(ProfileError::Missing("hasIdentity"))?;
        profile.member_of = member_of.ok_or(ProfileError::Missing("memberOf"))?;
        profile.role = role.ok_or(ProfileError::Missing("hasRole"))?;
        Ok(profile)
    }
}

fn bad(predicate: &'static str, value: &Term) -> ProfileError {
    ProfileError::BadValue { predicate, value: crate::turtle::Canonical(value).to_string() }
}

fn iri_value(value: &Term, predicate: &'static str) -> Result<Iri, ProfileError> {
    value.as_iri().cloned().ok_or_else(|| bad(predicate, value))
}
