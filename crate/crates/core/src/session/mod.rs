//! Agent sessions: credential authentication, registration and the
//! lifecycle state machine, with every outcome written to the audit log.

mod credential;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use credential::{
    key_id, CertificateAuthority, Credential, CredentialError, SubjectFields, TrustAnchor, TrustStore,
};

use crate::audit::{pattern_text, AuditRecord, AuditSink};
use crate::clock::{format_rfc3339, Clock};
use crate::engine::{
    extract_request_pattern, AuthorizationProfile, Decision, Engine, Execution, PermissionAction, RegistrationError,
    Request, RequestBody, RequestError,
};
use crate::rdf::{Iri, Triple};
use crate::turtle::{self, PrefixMap};

pub const DEFAULT_AGENT_NAMESPACE: &str = "http://example.org/agents/";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SessionState {
    Connected,
    Authenticated,
    Registered,
    Operating,
    Terminated,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Connected => "Connected",
            Self::Authenticated => "Authenticated",
            Self::Registered => "Registered",
            Self::Operating => "Operating",
            Self::Terminated => "Terminated",
        }
    }

    pub fn can_move_to(self, next: SessionState) -> bool {
        use SessionState::*;
        matches!((self, next), (Connected, Authenticated) | (Authenticated, Registered) | (Registered, Operating))
            || (self != Terminated && next == Terminated)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("session {session} cannot {operation} in state {state}")]
pub struct StateError {
    pub session: String,
    pub state: SessionState,
    pub operation: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    id: String,
    agent: Option<Iri>,
    state: SessionState,
    credential_subject: Option<String>,
    role_annotation: Option<String>,
    established_at: DateTime<Utc>,
}

impl Session {
    pub fn new(id: impl Into<String>, established_at: DateTime<Utc>) -> Self {
        Self {
            id: id.into(),
            agent: None,
            state: SessionState::Connected,
            credential_subject: None,
            role_annotation: None,
            established_at,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Set once the credential's signature has been verified.
    pub fn agent(&self) -> Option<&Iri> {
        self.agent.as_ref()
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn credential_subject(&self) -> Option<&str> {
        self.credential_subject.as_deref()
    }

    pub fn role_annotation(&self) -> Option<&str> {
        self.role_annotation.as_deref()
    }

    pub fn established_at(&self) -> DateTime<Utc> {
        self.established_at
    }

    pub fn is_terminated(&self) -> bool {
        self.state == SessionState::Terminated
    }

    pub fn advance(&mut self, next: SessionState, operation: &'static str) -> Result<(), StateError> {
        if !self.state.can_move_to(next) {
            return Err(self.state_error(operation));
        }
        self.state = next;
        Ok(())
    }

    fn state_error(&self, operation: &'static str) -> StateError {
        StateError { session: self.id.clone(), state: self.state, operation }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthnError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("credential does not parse: {0}")]
    Malformed(#[from] CredentialError),
    #[error("no trust anchor for issuer {0:?}")]
    UnknownIssuer(String),
    #[error("credential key id {0} does not match the issuer's anchor")]
    KeyMismatch(String),
    #[error("signature does not verify")]
    BadSignature,
    #[error("credential is not valid before {0}")]
    NotYetValid(String),
    #[error("credential expired at {0}")]
    Expired(String),
    #[error("subject has no CN field")]
    MissingCommonName,
    #[error("CN {0:?} is not a valid agent name")]
    BadCommonName(String),
    #[error("subject has no role field")]
    MissingRole,
}

impl AuthnError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::State(_) => "ILLEGAL_STATE",
            Self::Expired(_) | Self::NotYetValid(_) => "CREDENTIAL_EXPIRED",
            Self::MissingRole => "MISSING_ROLE",
            _ => "AUTHENTICATION_FAILED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegisterError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

impl RegisterError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::State(_) => "ILLEGAL_STATE",
            Self::Registration(e) => e.code(),
        }
    }
}

/// Result of one request on a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Executed {
    pub execution: Execution,
    /// The denial ended the session.
    pub terminated: bool,
}

fn valid_common_name(cn: &str) -> bool {
    !cn.is_empty() && cn.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// The reasoner's front door: owns the engine, the trust anchors and the
/// audit log, and drives sessions through their lifecycle. Callers that
/// share it across threads wrap it in a mutex, which serializes all
/// knowledge-base effects.
pub struct SessionController {
    engine: Engine,
    anchors: TrustStore,
    clock: Arc<dyn Clock>,
    audit: Box<dyn AuditSink>,
    agent_namespace: String,
    rng: ChaCha8Rng,
}

impl SessionController {
    pub fn new(engine: Engine, anchors: TrustStore, clock: Arc<dyn Clock>, audit: Box<dyn AuditSink>) -> Self {
        Self {
            engine,
            anchors,
            clock,
            audit,
            agent_namespace: DEFAULT_AGENT_NAMESPACE.to_string(),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Seeds session id generation.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn agent_iri(&self, common_name: &str) -> Option<Iri> {
        if !valid_common_name(common_name) {
            return None;
        }
        Iri::new(format!("{}{common_name}", self.agent_namespace)).ok()
    }

    pub fn open_session(&mut self) -> Session {
        let id = format!("s-{:016x}", self.rng.gen::<u64>());
        Session::new(id, self.clock.now())
    }

    #[allow(clippy::too_many_arguments)]
    fn audit(
        &mut self,
        session: &Session,
        action: &str,
        graph: &str,
        pattern: String,
        outcome: &str,
        reason: &str,
        rule: &str,
    ) {
        let record = AuditRecord {
            timestamp: format_rfc3339(&self.clock.now()),
            agent: session.agent.as_ref().map(|a| a.as_str().to_string()).unwrap_or_else(|| "-".into()),
            session: session.id.clone(),
            action: action.to_string(),
            target_graph: graph.to_string(),
            pattern,
            outcome: outcome.to_string(),
            reason: reason.to_string(),
            fired_rule: rule.to_string(),
        };
        // The log is best effort; a full disk must not change decisions.
        let _ = self.audit.append(&record);
    }

    pub fn flush_audit(&mut self) {
        let _ = self.audit.flush();
    }

    /// Verifies the credential and moves the session to `Authenticated`.
    /// On failure the session is terminated; if the signature verified, the
    /// named agent is known and everything about it is retracted.
    pub fn authenticate(&mut self, session: &mut Session, credential_text: &str) -> Result<Iri, AuthnError> {
        if session.state != SessionState::Connected {
            let err = session.state_error("authenticate");
            self.audit(session, "Authenticate", "-", "-".into(), "DENY", "ILLEGAL_STATE", "session:state-machine");
            return Err(err.into());
        }
        match self.verify(session, credential_text) {
            Ok(agent) => {
                session.advance(SessionState::Authenticated, "authenticate")?;
                self.audit(session, "Authenticate", "-", "-".into(), "PERMIT", "OK", "session:credential");
                Ok(agent)
            }
            Err(e) => {
                self.audit(session, "Authenticate", "-", "-".into(), "DENY", e.code(), "session:credential");
                self.terminate(session, e.code());
                Err(e)
            }
        }
    }

    fn verify(&self, session: &mut Session, credential_text: &str) -> Result<Iri, AuthnError> {
        let credential = Credential::parse(credential_text)?;
        let anchor =
            self.anchors.get(&credential.issuer).ok_or_else(|| AuthnError::UnknownIssuer(credential.issuer.clone()))?;
        if credential.public_key_id != anchor.key_id() {
            return Err(AuthnError::KeyMismatch(credential.public_key_id.clone()));
        }
        if !anchor.verify(&credential) {
            return Err(AuthnError::BadSignature);
        }
        let fields = credential.subject_fields();
        let cn = fields.common_name().ok_or(AuthnError::MissingCommonName)?;
        let agent = self.agent_iri(cn).ok_or_else(|| AuthnError::BadCommonName(cn.to_string()))?;
        session.agent = Some(agent.clone());
        session.credential_subject = Some(credential.subject.clone());

        let now = self.clock.now();
        if now < credential.not_before {
            return Err(AuthnError::NotYetValid(format_rfc3339(&credential.not_before)));
        }
        if now > credential.not_after {
            return Err(AuthnError::Expired(format_rfc3339(&credential.not_after)));
        }
        let role = fields.role().ok_or(AuthnError::MissingRole)?;
        session.role_annotation = Some(role.to_string());
        Ok(agent)
    }

    /// Parses a Turtle registration payload and runs the registration
    /// pipeline. The payload may use the ontology prefixes and `agents:`
    /// without declaring them. Failure terminates the session.
    pub fn register(&mut self, session: &mut Session, payload: &str) -> Result<AuthorizationProfile, RegisterError> {
        let agent = match (&session.state, &session.agent) {
            (SessionState::Authenticated, Some(agent)) => agent.clone(),
            _ => {
                let err = session.state_error("register");
                self.audit(session, "Register", "-", "-".into(), "DENY", "ILLEGAL_STATE", "session:state-machine");
                return Err(err.into());
            }
        };
        let result = self
            .parse_claims(payload)
            .and_then(|claims| self.engine.register(&agent, session.role_annotation.as_deref(), &claims));
        match result {
            Ok(profile) => {
                session.advance(SessionState::Registered, "register")?;
                session.advance(SessionState::Operating, "register")?;
                let graph = profile.profile_graph.as_str().to_string();
                self.audit(session, "Register", &graph, "-".into(), "PERMIT", "OK", "session:registration");
                Ok(profile)
            }
            Err(e) => {
                self.audit(session, "Register", "-", "-".into(), "DENY", e.code(), "session:registration");
                self.terminate(session, e.code());
                Err(e.into())
            }
        }
    }

    fn parse_claims(&self, payload: &str) -> Result<BTreeSet<Triple>, RegistrationError> {
        Ok(turtle::parse_with(payload, self.prefixes())?.triples)
    }

    /// Prefixes every request and registration body may use undeclared.
    pub fn prefixes(&self) -> PrefixMap {
        let mut prefixes = self.engine.ontology().vocabulary.prefixes();
        prefixes.insert("agents", Iri::new(self.agent_namespace.clone()).expect("namespace is an IRI"));
        prefixes
    }

    /// Decides and applies one request on behalf of the session's agent.
    /// Sessions that are not operating get `NOT_AUTHENTICATED`. Under strict
    /// termination any denial ends the session.
    pub fn execute(
        &mut self,
        session: &mut Session,
        action: PermissionAction,
        graph: Option<Iri>,
        body: RequestBody,
    ) -> Result<Executed, RequestError> {
        let agent = session.agent.clone().unwrap_or_else(|| Iri::new("urn:kbauthz:anonymous").expect("constant"));
        let graph = graph.unwrap_or_else(|| self.engine.config().default_graph.clone());
        let request = Request::new(agent, action, graph, body)?;
        let execution = if session.state == SessionState::Operating {
            self.engine.execute(&request)
        } else {
            let decision = self.engine.refuse_unauthenticated(&request);
            Execution { decision, bindings: Vec::new(), changed: 0 }
        };
        self.audit_decision(session, &request, &execution.decision);
        let terminated =
            !execution.decision.is_permit() && self.engine.config().strict_termination && !session.is_terminated();
        if terminated {
            self.terminate(session, execution.decision.reason().as_str());
        }
        Ok(Executed { execution, terminated })
    }

    fn audit_decision(&mut self, session: &Session, request: &Request, decision: &Decision) {
        let pattern = extract_request_pattern(request).first().map(pattern_text).unwrap_or_default();
        self.audit(
            session,
            request.action().as_str(),
            request.target_graph().as_str(),
            pattern,
            decision.outcome().as_str(),
            decision.reason().as_str(),
            decision.fired_rule(),
        );
    }

    /// Ends the session and retracts everything about its agent. Idempotent;
    /// returns the number of triples removed.
    pub fn terminate(&mut self, session: &mut Session, reason: &str) -> usize {
        if session.is_terminated() {
            return 0;
        }
        session.state = SessionState::Terminated;
        let removed = session.agent.clone().map(|a| self.engine.retract_agent(&a)).unwrap_or(0);
        self.audit(session, "Terminate", "-", "-".into(), "TERMINATED", reason, "session:terminate");
        removed
    }
}
