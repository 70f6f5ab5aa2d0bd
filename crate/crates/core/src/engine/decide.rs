//! Per-request decision: subsumption of the request by the agent's profile.
//!
//! Checks run in a fixed order (profile, action, graph, predicate, wildcard,
//! resource) so the reason code of a denial is deterministic.

use super::{extract_request_pattern, AuthorizationProfile, Decision, PermissionAction, ReasonCode, Request};
use crate::ontology::{Ontology, VAR_NS};
use crate::rdf::{Binding, Iri, Term, TriplePattern};
use crate::turtle::Canonical;

/// What the decision needs besides the profile: the vocabulary (resources are
/// the non-vocabulary IRIs) and the wildcard sentinel.
#[derive(Debug, Clone, Copy)]
pub struct PolicyView<'a> {
    pub ontology: &'a Ontology,
    pub wildcard: &'a Iri,
}

impl PolicyView<'_> {
    pub fn is_wildcard(&self, iri: &Iri) -> bool {
        iri == self.wildcard || iri.as_str().starts_with(VAR_NS)
    }

    /// Any IRI outside the vocabulary denotes a managed resource. Literals never do.
    pub fn is_resource(&self, iri: &Iri) -> bool {
        !self.ontology.is_vocabulary(iri)
    }
}

pub fn authorize(profile: Option<&AuthorizationProfile>, request: &Request, policy: &PolicyView<'_>) -> Decision {
    let Some(profile) = profile.filter(|p| p.agent == *request.agent()) else {
        return Decision::deny(ReasonCode::NoProfile, format!("no live profile for {}", request.agent()));
    };

    if !profile.allowed_permissions.contains(&request.action()) {
        return Decision::deny(
            ReasonCode::ActionNotAllowed,
            format!("{} is not an allowed permission", request.action()),
        );
    }
    if request.action() == PermissionAction::Assert && !profile.allowed_permission_values.is_empty() {
        for t in request.triples() {
            if let Term::Literal(lit) = t.object() {
                if !profile.allowed_permission_values.contains(lit) {
                    return Decision::deny(
                        ReasonCode::ActionNotAllowed,
                        format!("value {} is not an allowed permission value", Canonical(t.object())),
                    );
                }
            }
        }
    }

    if !profile.confined_graphs.contains(request.target_graph()) {
        return Decision::deny(
            ReasonCode::GraphNotConfined,
            format!("graph {} is outside the confined graphs", request.target_graph()),
        );
    }

    let patterns = extract_request_pattern(request);
    for pattern in &patterns {
        match pattern.predicate() {
            Term::Iri(p) if profile.authorized_predicates.contains(p) => {}
            Term::Iri(p) => {
                return Decision::deny(ReasonCode::PredicateNotAuthorized, format!("predicate {p} is not authorized"))
            }
            other => {
                return Decision::deny(
                    ReasonCode::PredicateNotAuthorized,
                    format!("predicate position must be concrete, found {}", Canonical(other)),
                )
            }
        }
    }

    for pattern in &patterns {
        for node in node_iris(pattern) {
            if policy.is_wildcard(node) {
                return Decision::deny(ReasonCode::WildcardRejected, format!("{node} is a wildcard"));
            }
        }
    }

    for pattern in &patterns {
        for node in node_iris(pattern) {
            if policy.is_resource(node) && !profile.access_to.contains(node) {
                return Decision::deny(ReasonCode::ResourceNotInScope, format!("{node} is not in scope"));
            }
        }
    }

    Decision::permit()
}

fn node_iris(pattern: &TriplePattern) -> impl Iterator<Item = &Iri> {
    [pattern.subject(), pattern.object()].into_iter().filter_map(Term::as_iri)
}

/// Drops bindings that would reveal a resource outside the profile's scope.
pub fn filter_bindings(
    bindings: Vec<Binding>,
    patterns: &[TriplePattern],
    profile: &AuthorizationProfile,
    policy: &PolicyView<'_>,
) -> Vec<Binding> {
    let node_vars: Vec<&str> = patterns
        .iter()
        .flat_map(|p| [p.subject(), p.object()])
        .filter_map(|t| match t {
            Term::Variable(v) => Some(v.as_str()),
            _ => None,
        })
        .collect();
    bindings
        .into_iter()
        .filter(|b| {
            node_vars.iter().all(|v| match b.get(*v) {
                Some(Term::Iri(iri)) => !policy.is_resource(iri) || profile.access_to.contains(iri),
                _ => true,
            })
        })
        .collect()
}
