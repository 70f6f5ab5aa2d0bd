use std::fmt;

use thiserror::Error;

use crate::rdf::{Iri, Triple, TriplePattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PermissionAction {
    Query,
    Assert,
    Retract,
}

impl PermissionAction {
    pub const ALL: [PermissionAction; 3] = [Self::Query, Self::Assert, Self::Retract];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Query => "Query",
            Self::Assert => "Assert",
            Self::Retract => "Retract",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for PermissionAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RequestBody {
    Patterns(Vec<TriplePattern>),
    Triples(Vec<Triple>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RequestError {
    #[error("{0} requests carry triple patterns")]
    ExpectedPatterns(PermissionAction),
    #[error("{0} requests carry ground triples")]
    ExpectedTriples(PermissionAction),
    #[error("request body is empty")]
    Empty,
    #[error("full-scan patterns are not accepted from agents")]
    FullScan,
}

/// One agent operation against one graph of the KB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    agent: Iri,
    action: PermissionAction,
    target_graph: Iri,
    body: RequestBody,
}

impl Request {
    pub fn new(
        agent: Iri,
        action: PermissionAction,
        target_graph: Iri,
        body: RequestBody,
    ) -> Result<Self, RequestError> {
        match (&body, action) {
            (RequestBody::Patterns(p), PermissionAction::Query) => {
                if p.is_empty() {
                    return Err(RequestError::Empty);
                }
                if p.iter().any(TriplePattern::is_full_scan) {
                    return Err(RequestError::FullScan);
                }
            }
            (RequestBody::Triples(t), PermissionAction::Assert | PermissionAction::Retract) => {
                if t.is_empty() {
                    return Err(RequestError::Empty);
                }
            }
            (RequestBody::Patterns(_), a) => return Err(RequestError::ExpectedTriples(a)),
            (RequestBody::Triples(_), a) => return Err(RequestError::ExpectedPatterns(a)),
        }
        Ok(Self { agent, action, target_graph, body })
    }

    pub fn query(agent: Iri, target_graph: Iri, patterns: Vec<TriplePattern>) -> Result<Self, RequestError> {
        Self::new(agent, PermissionAction::Query, target_graph, RequestBody::Patterns(patterns))
    }

    pub fn assert(agent: Iri, target_graph: Iri, triples: Vec<Triple>) -> Result<Self, RequestError> {
        Self::new(agent, PermissionAction::Assert, target_graph, RequestBody::Triples(triples))
    }

    pub fn retract(agent: Iri, target_graph: Iri, triples: Vec<Triple>) -> Result<Self, RequestError> {
        Self::new(agent, PermissionAction::Retract, target_graph, RequestBody::Triples(triples))
    }

    pub fn agent(&self) -> &Iri {
        &self.agent
    }

    pub fn action(&self) -> PermissionAction {
        self.action
    }

    pub fn target_graph(&self) -> &Iri {
        &self.target_graph
    }

    pub fn body(&self) -> &RequestBody {
        &self.body
    }

    pub fn triples(&self) -> &[Triple] {
        match &self.body {
            RequestBody::Triples(t) => t,
            RequestBody::Patterns(_) => &[],
        }
    }
}

/// The request as a list of patterns: queries verbatim, writes lifted to ground patterns.
pub fn extract_request_pattern(request: &Request) -> Vec<TriplePattern> {
    match &request.body {
        RequestBody::Patterns(p) => p.clone(),
        RequestBody::Triples(t) => t.iter().map(Triple::to_pattern).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReasonCode {
    NoProfile,
    NotAuthenticated,
    ActionNotAllowed,
    GraphNotConfined,
    PredicateNotAuthorized,
    ResourceNotInScope,
    WildcardRejected,
    Ok,
}

impl ReasonCode {
    pub const ALL: [ReasonCode; 8] = [
        Self::NoProfile,
        Self::NotAuthenticated,
        Self::ActionNotAllowed,
        Self::GraphNotConfined,
        Self::PredicateNotAuthorized,
        Self::ResourceNotInScope,
        Self::WildcardRejected,
        Self::Ok,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoProfile => "NO_PROFILE",
            Self::NotAuthenticated => "NOT_AUTHENTICATED",
            Self::ActionNotAllowed => "ACTION_NOT_ALLOWED",
            Self::GraphNotConfined => "GRAPH_NOT_CONFINED",
            Self::PredicateNotAuthorized => "PREDICATE_NOT_AUTHORIZED",
            Self::ResourceNotInScope => "RESOURCE_NOT_IN_SCOPE",
            Self::WildcardRejected => "WILDCARD_REJECTED",
            Self::Ok => "OK",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }

    /// Identifier of the rule that yields this reason.
    pub fn rule(self) -> &'static str {
        match self {
            Self::NoProfile => "authz:deny-by-default",
            Self::NotAuthenticated => "authz:authentication-required",
            Self::ActionNotAllowed => "authz:permission-match",
            Self::GraphNotConfined => "authz:graph-confinement",
            Self::PredicateNotAuthorized => "authz:predicate-match",
            Self::ResourceNotInScope => "authz:resource-scope",
            Self::WildcardRejected => "authz:least-privilege",
            Self::Ok => "authz:pattern-match",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Permit,
    Deny,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Permit => "PERMIT",
            Outcome::Deny => "DENY",
        }
    }
}

/// A permit/deny outcome. The outcome is derived from the reason, so
/// `Permit` and `OK` always coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    reason: ReasonCode,
    fired_rule: &'static str,
    detail: String,
}

impl Decision {
    pub fn permit() -> Self {
        Self { reason: ReasonCode::Ok, fired_rule: ReasonCode::Ok.rule(), detail: String::new() }
    }

    pub fn deny(reason: ReasonCode, detail: impl Into<String>) -> Self {
        debug_assert_ne!(reason, ReasonCode::Ok);
        Self { reason, fired_rule: reason.rule(), detail: detail.into() }
    }

    /// Relabels the rule that produced this decision.
    pub fn fired_by(mut self, rule: &'static str) -> Self {
        self.fired_rule = rule;
        self
    }

    pub fn outcome(&self) -> Outcome {
        if self.reason == ReasonCode::Ok {
            Outcome::Permit
        } else {
            Outcome::Deny
        }
    }

    pub fn is_permit(&self) -> bool {
        self.reason == ReasonCode::Ok
    }

    pub fn reason(&self) -> ReasonCode {
        self.reason
    }

    pub fn fired_rule(&self) -> &'static str {
        self.fired_rule
    }

    pub fn detail(&self) -> &str {
        &self.detail
    }
}
