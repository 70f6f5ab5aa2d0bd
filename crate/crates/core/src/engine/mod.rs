//! Policy decision and enforcement over the knowledge base.
//!
//! Registration derives an agent's role from its declared function, derives
//! permissions from the role defaults and any matching exception rules,
//! rejects wildcard or empty scopes, and writes a per-agent profile graph.
//! Every request is then decided against that live graph.

mod claims;
mod decide;
mod exceptions;
mod profile;
mod request;
mod rules;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub use claims::RegistrationClaims;
pub use decide::{authorize, filter_bindings, PolicyView};
pub use exceptions::{load_exceptions, ExceptionError, ExceptionRule};
pub use profile::{agent_graph_name, profile_graph_name, AuthorizationProfile, ProfileError};
pub use request::{
    extract_request_pattern, Decision, Outcome, PermissionAction, ReasonCode, Request, RequestBody, RequestError,
};
pub use rules::{load_rules, RuleDocument, RuleError};

use crate::ontology::{default_permissions, Ontology, NS};
use crate::rdf::{Binding, Dataset, Iri, Term, Triple};
use crate::turtle::{Canonical, ParseDiagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuthorizationMode {
    #[default]
    Hybrid,
    /// Baseline: role permissions and graph confinement only.
    RbacOnly,
}

impl AuthorizationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hybrid => "hybrid",
            Self::RbacOnly => "rbac-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hybrid" => Some(Self::Hybrid),
            "rbac-only" => Some(Self::RbacOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    pub wildcard: Iri,
    /// Graph an agent is confined to when it claims none.
    pub default_graph: Iri,
    pub ontology_graph: Iri,
    pub derivations_graph: Iri,
    pub strict_termination: bool,
    pub mode: AuthorizationMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let ex = |l: &str| Iri::new(format!("{NS}{l}")).expect("constant");
        Self {
            wildcard: ex("ANY"),
            default_graph: ex("kb"),
            ontology_graph: ex("ontology"),
            derivations_graph: ex("derivations"),
            strict_termination: true,
            mode: AuthorizationMode::Hybrid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoleError {
    #[error("{0} declares no function")]
    MissingFunction(Iri),
    #[error("{0} declares more than one function")]
    AmbiguousFunction(Iri),
    #[error("function {0} maps to no role")]
    UnmappedFunction(Iri),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Wildcard,
    Variable,
    EmptyScope,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("least privilege violation ({kind:?}){}", .triple.as_ref().map(|t| format!(": {} {} {}", t.subject(), t.predicate(), Canonical(t.object()))).unwrap_or_default())]
pub struct LeastPrivilegeViolation {
    pub kind: ViolationKind,
    pub triple: Option<Box<Triple>>,
}

impl LeastPrivilegeViolation {
    pub fn code(&self) -> &'static str {
        match self.kind {
            ViolationKind::Wildcard | ViolationKind::Variable => "WILDCARD_REJECTED",
            ViolationKind::EmptyScope => "EMPTY_SCOPE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistrationError {
    #[error("registration payload does not parse: {0}")]
    Parse(#[from] ParseDiagnostic),
    #[error("a live profile already exists for {0}")]
    Conflict(Iri),
    #[error("registration is missing a {0} claim")]
    MissingClaim(&'static str),
    #[error("registration has several {0} claims")]
    DuplicateClaim(&'static str),
    #[error("claim about {0} does not have the agent as subject")]
    ForeignSubject(Iri),
    #[error("claim uses {0}, which is not in the vocabulary")]
    UnknownPredicate(Iri),
    #[error("claim value {0} has the wrong kind")]
    BadClaimValue(String),
    #[error(transparent)]
    Role(#[from] RoleError),
    #[error("credential role {annotation:?} does not match derived role {derived}")]
    RoleMismatch { annotation: String, derived: Iri },
    #[error(transparent)]
    LeastPrivilege(#[from] LeastPrivilegeViolation),
}

impl RegistrationError {
    /// Code recorded in the audit log and sent on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Parse(_)
            | Self::MissingClaim(_)
            | Self::DuplicateClaim(_)
            | Self::ForeignSubject(_)
            | Self::UnknownPredicate(_)
            | Self::BadClaimValue(_) => "MALFORMED_REGISTRATION",
            Self::Conflict(_) => "CONFLICT",
            Self::Role(_) => "ROLE_DERIVATION_FAILED",
            Self::RoleMismatch { .. } => "ROLE_MISMATCH",
            Self::LeastPrivilege(v) => v.code(),
        }
    }
}

/// Outcome of an enforced request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Execution {
    pub decision: Decision,
    pub bindings: Vec<Binding>,
    /// Triples inserted or removed.
    pub changed: usize,
}

pub struct Engine {
    dataset: Dataset,
    ontology: Ontology,
    exceptions: Vec<ExceptionRule>,
    config: EngineConfig,
    decisions: AtomicU64,
}

impl Engine {
    pub fn new(ontology: Ontology, exceptions: Vec<ExceptionRule>, config: EngineConfig) -> Self {
        let mut dataset = Dataset::new();
        for t in &ontology.triples {
            dataset.insert(&config.ontology_graph, t.clone());
        }
        Self { dataset, ontology, exceptions, config, decisions: AtomicU64::new(0) }
    }

    pub fn with_defaults() -> Self {
        Self::new(Ontology::default_ontology(), Vec::new(), EngineConfig::default())
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Direct write access for seeding world state; bypasses authorization.
    pub fn seed(&mut self, graph: &Iri, triple: Triple) -> bool {
        self.dataset.insert(graph, triple)
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn set_mode(&mut self, mode: AuthorizationMode) {
        self.config.mode = mode;
    }

    pub fn policy(&self) -> PolicyView<'_> {
        PolicyView { ontology: &self.ontology, wildcard: &self.config.wildcard }
    }

    /// Number of decisions taken so far.
    pub fn decision_count(&self) -> u64 {
        self.decisions.load(Ordering::SeqCst)
    }

    /// Reads the agent's profile from its graph. Nothing is cached.
    pub fn profile(&self, agent: &Iri) -> Option<AuthorizationProfile> {
        let graph = self.dataset.graph(&profile_graph_name(agent))?;
        AuthorizationProfile::from_graph(graph, &self.ontology.vocabulary).ok()
    }

    pub fn authorize(&self, request: &Request) -> Decision {
        self.decisions.fetch_add(1, Ordering::SeqCst);
        let profile = self.profile(request.agent());
        match self.config.mode {
            AuthorizationMode::Hybrid => authorize(profile.as_ref(), request, &self.policy()),
            AuthorizationMode::RbacOnly => crate::sim::rbac_only_authorize(profile.as_ref(), request),
        }
    }

    /// Decision for a request arriving on a session that has not completed
    /// authentication and registration. Counted like any other decision.
    pub fn refuse_unauthenticated(&self, request: &Request) -> Decision {
        self.decisions.fetch_add(1, Ordering::SeqCst);
        Decision::deny(ReasonCode::NotAuthenticated, format!("no operating session for {}", request.agent()))
    }

    /// Authorizes, then applies the request. A denial leaves the dataset untouched.
    pub fn execute(&mut self, request: &Request) -> Execution {
        let decision = self.authorize(request);
        if !decision.is_permit() {
            return Execution { decision, bindings: Vec::new(), changed: 0 };
        }
        let graph = request.target_graph();
        match request.body() {
            RequestBody::Patterns(patterns) => {
                let bindings = self.dataset.match_patterns([graph], patterns).unwrap_or_default();
                let bindings = match (self.config.mode, self.profile(request.agent())) {
                    (AuthorizationMode::Hybrid, Some(profile)) => {
                        filter_bindings(bindings, patterns, &profile, &self.policy())
                    }
                    _ => bindings,
                };
                Execution { decision, bindings, changed: 0 }
            }
            RequestBody::Triples(triples) => {
                let changed = match request.action() {
                    PermissionAction::Assert => {
                        triples.iter().filter(|t| self.dataset.insert(graph, (*t).clone())).count()
                    }
                    _ => triples.iter().filter(|t| self.dataset.remove(graph, t)).count(),
                };
                Execution { decision, bindings: Vec::new(), changed }
            }
        }
    }

    /// Role from the agent's declared function; records `hasRole` in the agent graph.
    pub fn derive_role(&mut self, agent: &Iri) -> Result<Iri, RoleError> {
        let vocab = &self.ontology.vocabulary;
        let agent_graph = agent_graph_name(agent);
        let functions: BTreeSet<Term> = self
            .dataset
            .graph(&agent_graph)
            .map(|g| {
                g.with_subject(agent)
                    .filter(|t| *t.predicate() == vocab.has_function)
                    .map(|t| t.object().clone())
                    .collect()
            })
            .unwrap_or_default();
        let mut iter = functions.into_iter();
        let function = match (iter.next(), iter.next()) {
            (None, _) => return Err(RoleError::MissingFunction(agent.clone())),
            (Some(_), Some(_)) => return Err(RoleError::AmbiguousFunction(agent.clone())),
            (Some(Term::Iri(f)), None) => f,
            (Some(_), None) => return Err(RoleError::MissingFunction(agent.clone())),
        };
        let role = self.ontology.functions.get(&function).cloned().ok_or(RoleError::UnmappedFunction(function))?;
        let fact =
            Triple::from_parts(agent.clone(), self.ontology.vocabulary.has_role.clone(), role.clone()).expect("ground");
        self.dataset.insert(&agent_graph, fact);
        Ok(role)
    }

    /// Role defaults, transformed by every exception rule that matches the agent's facts.
    pub fn derive_permissions(&self, agent: &Iri, role: &Iri) -> BTreeSet<PermissionAction> {
        let mut permissions = default_permissions(role, &self.ontology.roles).unwrap_or_default();
        let agent_graph = self.dataset.graph(&agent_graph_name(agent));
        let holds = |(p, o): &(Iri, Term)| {
            agent_graph
                .is_some_and(|g| Triple::from_parts(agent.clone(), p.clone(), o.clone()).is_ok_and(|t| g.contains(&t)))
        };
        for rule in self.exceptions.iter().filter(|r| r.role == *role) {
            if rule.match_attributes.iter().all(holds) {
                for a in &rule.remove_permissions {
                    permissions.remove(a);
                }
                permissions.extend(rule.add_permissions.iter().copied());
            }
        }
        permissions
    }

    /// Writes the profile graph for an agent that passed the registration checks.
    pub fn build_profile(
        &mut self,
        agent: &Iri,
        claims: &BTreeSet<Triple>,
        role: &Iri,
        permissions: BTreeSet<PermissionAction>,
    ) -> Result<AuthorizationProfile, RegistrationError> {
        let profile_graph = profile_graph_name(agent);
        if self.dataset.graph(&profile_graph).is_some() {
            return Err(RegistrationError::Conflict(agent.clone()));
        }
        let vocab = &self.ontology.vocabulary;
        let mut identity = None;
        let mut confined_graphs = BTreeSet::new();
        let mut authorized_predicates = BTreeSet::new();
        let mut access_to = BTreeSet::new();
        let mut allowed_permission_values = BTreeSet::new();
        let mut attributes = BTreeSet::new();

        let iri_of = |t: &Triple| {
            t.object()
                .as_iri()
                .cloned()
                .ok_or_else(|| RegistrationError::BadClaimValue(Canonical(t.object()).to_string()))
        };
        for t in claims {
            if t.subject() != agent {
                return Err(RegistrationError::ForeignSubject(t.subject().clone()));
            }
            let p = t.predicate();
            if *p == vocab.has_identity {
                if identity.replace(iri_of(t)?).is_some() {
                    return Err(RegistrationError::DuplicateClaim("hasIdentity"));
                }
            } else if *p == vocab.confined_to_graph {
                confined_graphs.insert(iri_of(t)?);
            } else if *p == vocab.authorized_predicates {
                authorized_predicates.insert(iri_of(t)?);
            } else if *p == vocab.access_to {
                access_to.insert(iri_of(t)?);
            } else if *p == vocab.allowed_permission_values {
                let lit = t
                    .object()
                    .as_literal()
                    .ok_or_else(|| RegistrationError::BadClaimValue(Canonical(t.object()).to_string()))?;
                allowed_permission_values.insert(lit.clone());
            } else if *p == vocab.has_function || *p == vocab.rdf_type {
                // Function feeds role derivation; type claims carry no policy.
            } else if self.ontology.vocabulary.contains(p) && !is_policy_owned(p, vocab) {
                attributes.insert((p.clone(), t.object().clone()));
            } else {
                return Err(RegistrationError::UnknownPredicate(p.clone()));
            }
        }
        let identity = identity.ok_or(RegistrationError::MissingClaim("hasIdentity"))?;
        if access_to.is_empty() {
            return Err(LeastPrivilegeViolation { kind: ViolationKind::EmptyScope, triple: None }.into());
        }
        if authorized_predicates.is_empty() {
            return Err(RegistrationError::MissingClaim("authorizedPredicates"));
        }
        if confined_graphs.is_empty() {
            confined_graphs.insert(self.config.default_graph.clone());
        }
        let member_of = self
            .ontology
            .roles
            .get(role)
            .map(|r| r.parent_profile())
            .unwrap_or_else(|| Iri::new(format!("{}Profile", role.as_str())).expect("valid"));

        let profile = AuthorizationProfile {
            profile_graph: profile_graph.clone(),
            agent: agent.clone(),
            identity,
            member_of,
            role: role.clone(),
            confined_graphs,
            authorized_predicates,
            access_to,
            allowed_permissions: permissions,
            allowed_permission_values,
            attributes,
        };
        for t in profile.to_triples(vocab) {
            self.dataset.insert(&profile_graph, t);
        }
        Ok(profile)
    }

    /// Full registration pipeline. Any failure retracts everything known about the agent.
    pub fn register(
        &mut self,
        agent: &Iri,
        certificate_role: Option<&str>,
        claims: &BTreeSet<Triple>,
    ) -> Result<AuthorizationProfile, RegistrationError> {
        if self.dataset.graph(&profile_graph_name(agent)).is_some() {
            return Err(RegistrationError::Conflict(agent.clone()));
        }
        let result = self.register_inner(agent, certificate_role, claims);
        if result.is_err() {
            self.retract_agent(agent);
        }
        result
    }

    fn register_inner(
        &mut self,
        agent: &Iri,
        certificate_role: Option<&str>,
        claims: &BTreeSet<Triple>,
    ) -> Result<AuthorizationProfile, RegistrationError> {
        if let Some(foreign) = claims.iter().find(|t| t.subject() != agent) {
            return Err(RegistrationError::ForeignSubject(foreign.subject().clone()));
        }
        let vocab = &self.ontology.vocabulary;
        if !claims.iter().any(|t| *t.predicate() == vocab.has_identity) {
            return Err(RegistrationError::MissingClaim("hasIdentity"));
        }
        if !claims.iter().any(|t| *t.predicate() == vocab.authorized_predicates) {
            return Err(RegistrationError::MissingClaim("authorizedPredicates"));
        }

        let agent_graph = agent_graph_name(agent);
        for t in claims {
            self.dataset.insert(&agent_graph, t.clone());
        }
        let role = self.derive_role(agent)?;
        if let Some(annotation) = certificate_role {
            let declared = self.ontology.role_for_certificate(annotation).map(|r| &r.name);
            if declared != Some(&role) {
                return Err(RegistrationError::RoleMismatch { annotation: annotation.to_string(), derived: role });
            }
        }
        let claimed: Vec<Triple> = claims.iter().cloned().collect();
        check_least_privilege(&claimed, &self.policy())?;
        let permissions = self.derive_permissions(agent, &role);
        self.build_profile(agent, claims, &role, permissions)
    }

    /// Removes the agent's profile and facts graphs plus every triple, in any
    /// graph, that has the agent as subject. Idempotent.
    pub fn retract_agent(&mut self, agent: &Iri) -> usize {
        self.dataset.retract_graph(&profile_graph_name(agent))
            + self.dataset.retract_graph(&agent_graph_name(agent))
            + self.dataset.remove_subject(agent)
    }

    /// Dynamic policy update: drops one resource from a live profile.
    /// Refuses to empty the scope.
    pub fn revoke_access(&mut self, agent: &Iri, resource: &Iri) -> bool {
        let Some(profile) = self.profile(agent) else { return false };
        if !profile.access_to.contains(resource) || profile.access_to.len() == 1 {
            return false;
        }
        let t = Triple::from_parts(
            profile.profile_graph.clone(),
            self.ontology.vocabulary.access_to.clone(),
            resource.clone(),
        )
        .expect("ground");
        self.dataset.remove(&profile.profile_graph, &t)
    }

    /// Adds one resource to a live profile, subject to the wildcard check.
    pub fn grant_access(&mut self, agent: &Iri, resource: &Iri) -> Result<bool, LeastPrivilegeViolation> {
        let Some(profile) = self.profile(agent) else { return Ok(false) };
        let t = Triple::from_parts(
            profile.profile_graph.clone(),
            self.ontology.vocabulary.access_to.clone(),
            resource.clone(),
        )
        .expect("ground");
        if self.policy().is_wildcard(resource) {
            return Err(LeastPrivilegeViolation { kind: ViolationKind::Wildcard, triple: Some(Box::new(t)) });
        }
        Ok(self.dataset.insert(&profile.profile_graph, t))
    }

    /// Forward-chains `rules` to a fixpoint into the derivations graph.
    pub fn apply_rules(&mut self, rules: &[RuleDocument]) -> Result<usize, RuleError> {
        let derived = rules::forward_chain(&self.dataset, rules, &self.config.derivations_graph);
        let target = self.config.derivations_graph.clone();
        for t in &derived {
            self.dataset.insert(&target, t.clone());
        }
        if let Err((graph, violation)) = self.check_profiles_at_rest() {
            for t in &derived {
                self.dataset.remove(&target, t);
            }
            return Err(RuleError::LeastPrivilege { graph, violation });
        }
        Ok(derived.len())
    }

    /// Every stored profile has a non-empty, wildcard-free scope.
    pub fn check_profiles_at_rest(&self) -> Result<(), (Iri, LeastPrivilegeViolation)> {
        let vocab = &self.ontology.vocabulary;
        let policy = self.policy();
        for graph in self.dataset.graphs().filter(|g| g.name().as_str().ends_with("#profile")) {
            let scope: Vec<&Triple> = graph.triples().iter().filter(|t| t.predicate() == &vocab.access_to).collect();
            if scope.is_empty() {
                return Err((
                    graph.name().clone(),
                    LeastPrivilegeViolation { kind: ViolationKind::EmptyScope, triple: None },
                ));
            }
            for t in scope {
                if let Some(kind) = wildcard_kind(t.object(), &policy) {
                    return Err((
                        graph.name().clone(),
                        LeastPrivilegeViolation { kind, triple: Some(Box::new(t.clone())) },
                    ));
                }
            }
        }
        Ok(())
    }
}

fn is_policy_owned(p: &Iri, vocab: &crate::ontology::Vocabulary) -> bool {
    [
        &vocab.has_role,
        &vocab.has_authorization_profile,
        &vocab.allowed_permission,
        &vocab.member_of,
        &vocab.access_granted,
    ]
    .contains(&p)
}

fn wildcard_kind(object: &Term, policy: &PolicyView<'_>) -> Option<ViolationKind> {
    match object {
        Term::Iri(iri) if iri == policy.wildcard => Some(ViolationKind::Wildcard),
        Term::Iri(iri) if policy.is_wildcard(iri) => Some(ViolationKind::Variable),
        Term::Variable(_) => Some(ViolationKind::Variable),
        _ => None,
    }
}

/// No claimed object may be a wildcard or variable marker, and the claims
/// must name at least one resource.
pub fn check_least_privilege(claimed: &[Triple], policy: &PolicyView<'_>) -> Result<(), LeastPrivilegeViolation> {
    if claimed.is_empty() {
        return Err(LeastPrivilegeViolation { kind: ViolationKind::EmptyScope, triple: None });
    }
    for t in claimed {
        if let Some(kind) = wildcard_kind(t.object(), policy) {
            return Err(LeastPrivilegeViolation { kind, triple: Some(Box::new(t.clone())) });
        }
    }
    let access_to = &policy.ontology.vocabulary.access_to;
    if !claimed.iter().any(|t| t.predicate() == access_to) {
        return Err(LeastPrivilegeViolation { kind: ViolationKind::EmptyScope, triple: None });
    }
    Ok(())
}

#[cfg(test)]
mod tests;
