#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use kbauthz_core::audit::MemoryAudit;
use kbauthz_core::clock::VirtualClock;
use kbauthz_core::engine::{load_exceptions, AuthorizationProfile, PermissionAction, RequestBody};
use kbauthz_core::ontology::Ontology;
use kbauthz_core::rdf::Binding;
use kbauthz_core::session::{CertificateAuthority, SessionController, TrustStore};
use kbauthz_core::wire::{loopback, shared, Client, LoopbackTransport, MessageType, SharedController, WireMessage};
use kbauthz_core::{Dataset, Engine, EngineConfig, Iri, Literal, Request, Term, Triple, TriplePattern};
use proptest::prelude::*;

pub const EX: &str = "http://example.org/kb#";
pub const AGENTS: &str = "http://example.org/agents/";
pub const PREFIXES: &str = "@prefix ex: <http://example.org/kb#> .\n@prefix agents: <http://example.org/agents/> .\n";

pub fn ex(local: &str) -> Iri {
    Iri::new(format!("{EX}{local}")).unwrap()
}

pub fn agent(cn: &str) -> Iri {
    Iri::new(format!("{AGENTS}{cn}")).unwrap()
}

pub struct Harness {
    pub ca: CertificateAuthority,
    pub controller: SharedController,
    pub audit: MemoryAudit,
}

impl Harness {
    pub fn new(strict: bool) -> Self {
        Self::with_facts(strict, &[])
    }

    pub fn with_facts(strict: bool, facts: &[Triple]) -> Self {
        let ontology = Ontology::default_ontology();
        let exceptions = load_exceptions(kbauthz_core::DEFAULT_EXCEPTIONS, &ontology.vocabulary).unwrap();
        let config = EngineConfig { strict_termination: strict, ..EngineConfig::default() };
        let mut engine = Engine::new(ontology, exceptions, config);
        for t in facts {
            engine.seed(&ex("kb"), t.clone());
        }
        let ca = CertificateAuthority::from_seed("test-ca", "integration");
        let audit = MemoryAudit::new();
        let controller = SessionController::new(
            engine,
            TrustStore::from(ca.anchor()),
            Arc::new(VirtualClock::seeded(0)),
            Box::new(audit.clone()),
        );
        Self { ca, controller: shared(controller), audit }
    }

    pub fn credential(&self, cn: &str, role: &str) -> String {
        let nb = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let na = Utc.with_ymd_and_hms(2030, 1, 1, 0, 0, 0).unwrap();
        self.ca.issue_agent(cn, role, nb, na).to_text()
    }

    pub fn client(&self) -> Client<LoopbackTransport> {
        loopback(&self.controller)
    }

    /// Authenticated and registered grounding agent.
    pub fn grounder(&self, cn: &str, resources: &[&str], predicates: &[&str]) -> Client<LoopbackTransport> {
        let mut c = self.client();
        assert!(c.hello(&self.credential(cn, "grounder")).unwrap().is_ok());
        let reply = c.register(&registration(cn, "UserPlaneGrounding", resources, predicates)).unwrap();
        assert!(reply.is_ok(), "{reply:?}");
        c
    }

    pub fn dataset(&self) -> Dataset {
        self.controller.lock().unwrap().engine().dataset().clone()
    }

    pub fn decisions(&self) -> u64 {
        self.controller.lock().unwrap().engine().decision_count()
    }
}

pub fn registration(cn: &str, function: &str, resources: &[&str], predicates: &[&str]) -> String {
    let mut s = format!(
        "{PREFIXES}agents:{cn} ex:hasIdentity <http://example.org/handlers/{cn}> ;\n    ex:hasFunction ex:{function}"
    );
    for r in resources {
        s.push_str(&format!(" ;\n    ex:accessTo ex:{r}"));
    }
    for p in predicates {
        s.push_str(&format!(" ;\n    ex:authorizedPredicates ex:{p}"));
    }
    s.push_str(" .\n");
    s
}

/// Triples that mention `agent` as subject, in any graph, plus every triple
/// in a graph named after the agent.
pub fn agent_footprint(dataset: &Dataset, agent: &Iri) -> usize {
    let prefix = format!("{}#", agent.as_str());
    dataset.quads().filter(|(g, t)| t.subject() == agent || g.as_str().starts_with(&prefix)).count()
}

/// `dataset` with the agent's footprint removed.
pub fn without_agent(mut dataset: Dataset, agent: &Iri) -> Dataset {
    let prefix = format!("{}#", agent.as_str());
    let doomed: Vec<(Iri, Triple)> = dataset
        .quads()
        .filter(|(g, t)| t.subject() == agent || g.as_str().starts_with(&prefix))
        .map(|(g, t)| (g.clone(), t.clone()))
        .collect();
    for (g, t) in doomed {
        dataset.remove(&g, &t);
    }
    dataset
}

/// Brute-force basic graph pattern matching: every assignment of the
/// pattern variables to terms present in the scoped graphs, kept when all
/// instantiated patterns are present.
pub fn oracle_match(dataset: &Dataset, scope: &[Iri], patterns: &[TriplePattern]) -> BTreeSet<Binding> {
    let triples: BTreeSet<&Triple> = dataset.quads().filter(|(g, _)| scope.contains(g)).map(|(_, t)| t).collect();
    let mut domain: BTreeSet<Term> = BTreeSet::new();
    for t in &triples {
        domain.insert(Term::Iri(t.subject().clone()));
        domain.insert(Term::Iri(t.predicate().clone()));
        domain.insert(t.object().clone());
    }
    let domain: Vec<Term> = domain.into_iter().collect();
    let mut vars: Vec<String> = Vec::new();
    for p in patterns {
        for term in p.terms() {
            if let Term::Variable(v) = term {
                if !vars.contains(v) {
                    vars.push(v.clone());
                }
            }
        }
    }
    let substitute = |term: &Term, b: &Binding| match term {
        Term::Variable(v) => b[v].clone(),
        other => other.clone(),
    };
    let mut out = BTreeSet::new();
    if domain.is_empty() && !vars.is_empty() {
        return out;
    }
    let total = domain.len().pow(vars.len() as u32);
    for mut index in 0..total {
        let mut b = Binding::new();
        for v in &vars {
            b.insert(v.clone(), domain[index % domain.len()].clone());
            index /= domain.len().max(1);
        }
        let all = patterns.iter().all(|p| {
            let [s, pr, o] = p.terms();
            match (substitute(s, &b), substitute(pr, &b), substitute(o, &b)) {
                (Term::Iri(s), Term::Iri(pr), o) => Triple::from_parts(s, pr, o).is_ok_and(|t| triples.contains(&t)),
                _ => false,
            }
        });
        if all {
            out.insert(b);
        }
    }
    out
}

/// Expected decision by enumeration: the request is permitted exactly when
/// every (action, graph, predicate, node) it touches is in the profile's
/// enumerated sets. Returns the first failing check's reason code.
pub fn oracle_authorize(
    profile: Option<&AuthorizationProfile>,
    request: &Request,
    wildcard: &Iri,
    vocabulary: &BTreeSet<Iri>,
) -> &'static str {
    let Some(profile) = profile.filter(|p| p.agent == *request.agent()) else { return "NO_PROFILE" };
    let patterns: Vec<[Term; 3]> = match request.body() {
        RequestBody::Patterns(ps) => ps.iter().map(|p| p.terms().map(Term::clone)).collect(),
        RequestBody::Triples(ts) => ts
            .iter()
            .map(|t| [Term::Iri(t.subject().clone()), Term::Iri(t.predicate().clone()), t.object().clone()])
            .collect(),
    };

    let permitted_actions: BTreeSet<(PermissionAction, &Iri)> =
        profile.allowed_permissions.iter().flat_map(|a| profile.confined_graphs.iter().map(move |g| (*a, g))).collect();
    if !profile.allowed_permissions.contains(&request.action()) {
        return "ACTION_NOT_ALLOWED";
    }
    if request.action() == PermissionAction::Assert && !profile.allowed_permission_values.is_empty() {
        let literal_ok = |o: &Term| match o {
            Term::Literal(l) => profile.allowed_permission_values.contains(l),
            _ => true,
        };
        if !patterns.iter().all(|[_, _, o]| literal_ok(o)) {
            return "ACTION_NOT_ALLOWED";
        }
    }
    if !permitted_actions.contains(&(request.action(), request.target_graph())) {
        return "GRAPH_NOT_CONFINED";
    }
    for [_, p, _] in &patterns {
        match p {
            Term::Iri(p) if profile.authorized_predicates.contains(p) => {}
            _ => return "PREDICATE_NOT_AUTHORIZED",
        }
    }
    let is_wild = |i: &Iri| i == wildcard || i.as_str().starts_with("urn:kbauthz:var:");
    for [s, _, o] in &patterns {
        for node in [s, o] {
            if let Term::Iri(i) = node {
                if is_wild(i) {
                    return "WILDCARD_REJECTED";
                }
            }
        }
    }
    for [s, _, o] in &patterns {
        for node in [s, o] {
            if let Term::Iri(i) = node {
                if !vocabulary.contains(i) && !profile.access_to.contains(i) {
                    return "RESOURCE_NOT_IN_SCOPE";
                }
            }
        }
    }
    "OK"
}

pub fn literal(s: &str) -> Term {
    Term::Literal(Literal::plain(s))
}

pub fn count_by<T: Ord + Clone>(items: impl IntoIterator<Item = T>) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i).or_default() += 1;
    }
    m
}

fn universe_iri() -> impl Strategy<Value = Iri> {
    prop_oneof![
        6 => (0..5u8).prop_map(|i| ex(&format!("r{i}"))),
        1 => Just(ex("ANY")),
        1 => Just(Iri::new("urn:kbauthz:var:x").unwrap()),
        1 => Just(ex("Grounding")),
    ]
}

pub fn random_profile() -> impl Strategy<Value = AuthorizationProfile> {
    (
        prop::collection::btree_set((0..3u8).prop_map(|g| ex(&format!("g{g}"))), 1..=3),
        prop::collection::btree_set((0..5u8).prop_map(|p| ex(&format!("p{p}"))), 1..=5),
        prop::collection::btree_set((0..5u8).prop_map(|r| ex(&format!("r{r}"))), 1..=5),
        prop::collection::btree_set(prop::sample::select(PermissionAction::ALL.to_vec()), 0..=3),
        prop::collection::btree_set((0..2u8).prop_map(|v| Literal::plain(format!("v{v}"))), 0..=1),
    )
        .prop_map(|(graphs, preds, access, perms, values)| AuthorizationProfile {
            profile_graph: Iri::new("http://example.org/agents/a#profile").unwrap(),
            agent: agent("a"),
            identity: Iri::new("http://example.org/handlers/a").unwrap(),
            member_of: ex("GroundingProfile"),
            role: ex("Grounding"),
            confined_graphs: graphs,
            authorized_predicates: preds,
            access_to: access,
            allowed_permissions: perms,
            allowed_permission_values: values,
            attributes: BTreeSet::new(),
        })
}

pub fn random_request() -> impl Strategy<Value = Request> {
    let node =
        prop_oneof![4 => universe_iri().prop_map(Term::Iri), 1 => (0..2u8).prop_map(|i| Term::var(format!("x{i}")))];
    let object = prop_oneof![
        3 => universe_iri().prop_map(Term::Iri),
        1 => (0..3u8).prop_map(|v| Term::Literal(Literal::plain(format!("v{v}")))),
    ];
    let predicate = (0..6u8).prop_map(|p| ex(&format!("p{p}")));
    (
        prop_oneof![3 => Just("a"), 1 => Just("b")],
        prop::sample::select(PermissionAction::ALL.to_vec()),
        (0..4u8).prop_map(|g| ex(&format!("g{g}"))),
        prop::collection::vec(
            (
                node,
                predicate,
                prop_oneof![object.clone().boxed(), (0..2u8).prop_map(|i| Term::var(format!("x{i}"))).boxed()],
            ),
            1..4,
        ),
        prop::collection::vec((universe_iri(), (0..6u8).prop_map(|p| ex(&format!("p{p}"))), object), 1..4),
    )
        .prop_map(|(who, action, graph, patterns, triples)| {
            let body = match action {
                PermissionAction::Query => RequestBody::Patterns(
                    patterns.into_iter().filter_map(|(s, p, o)| TriplePattern::new(s, Term::Iri(p), o).ok()).collect(),
                ),
                _ => RequestBody::Triples(
                    triples.into_iter().map(|(s, p, o)| Triple::from_parts(s, p, o).unwrap()).collect(),
                ),
            };
            (who, action, graph, body)
        })
        .prop_filter_map("non-empty body", |(who, action, graph, body)| {
            Request::new(agent(who), action, graph, body).ok()
        })
}

/// Byte strings that must each end the session with a connection-level
/// ERROR MALFORMED_FRAME.
pub fn malformed_frames() -> Vec<(&'static str, Vec<u8>)> {
    vec![
        ("unknown type", b"GRANT 5 0\n\n".to_vec()),
        ("lowercase type", b"assert 5 0\n\n".to_vec()),
        ("missing field", b"ASSERT 5\n\n".to_vec()),
        ("extra field", b"ASSERT 5 0 0\n\n".to_vec()),
        ("non-numeric id", b"ASSERT five 0\n\n".to_vec()),
        ("negative length", b"ASSERT 5 -1\n\n".to_vec()),
        ("leading zero", b"ASSERT 05 0\n\n".to_vec()),
        ("length too short", b"ASSERT 5 3\nex:a ex:p ex:b .\n".to_vec()),
        ("body too long", format!("ASSERT 5 {}\n", 16 * 1024 * 1024 + 1).into_bytes()),
        ("header too long", vec![b'A'; 100]),
        ("non-UTF-8 body", b"ASSERT 5 2\n\xff\xfe\n".to_vec()),
        ("non-UTF-8 header", b"ASS\xffRT 5 0\n\n".to_vec()),
    ]
}

pub fn any_iri() -> impl Strategy<Value = Iri> {
    prop_oneof![
        "[a-z][a-zA-Z0-9_]{0,5}".prop_map(|l| ex(&l)),
        "[a-z]{1,4}/[a-z0-9._~-]{0,6}".prop_map(|p| Iri::new(format!("http://other.example/{p}")).unwrap()),
        "[a-z0-9]{1,6}".prop_map(|p| Iri::new(format!("urn:x:{p}")).unwrap()),
    ]
}

pub fn any_literal() -> impl Strategy<Value = Literal> {
    let text = "[ -~\\t\\n\\r\"\\\\é€😀]{0,10}";
    prop_oneof![
        text.prop_map(Literal::plain),
        (text, "[a-z]{2}(-[A-Z]{2})?").prop_map(|(t, l)| Literal::lang(t, l).unwrap()),
        (text, any_iri()).prop_map(|(t, d)| Literal::typed(t, d)),
    ]
}

pub fn any_triple() -> impl Strategy<Value = Triple> {
    (any_iri(), any_iri(), prop_oneof![any_iri().prop_map(Term::Iri), any_literal().prop_map(Term::Literal)])
        .prop_map(|(s, p, o)| Triple::from_parts(s, p, o).unwrap())
}

pub fn any_message() -> impl Strategy<Value = WireMessage> {
    (prop::sample::select(MessageType::ALL.to_vec()), any::<u64>(), any::<String>())
        .prop_map(|(k, id, body)| WireMessage::new(k, id, body))
}

/// Picks from `preferred` with the given weight, otherwise from `fallback`.
fn biased<T: Clone + std::fmt::Debug + 'static>(
    preferred: &BTreeSet<T>,
    fallback: impl Strategy<Value = T> + 'static,
    weight: u32,
) -> BoxedStrategy<T> {
    if preferred.is_empty() {
        return fallback.boxed();
    }
    let items: Vec<T> = preferred.iter().cloned().collect();
    prop_oneof![weight => prop::sample::select(items), 10 - weight => fallback].boxed()
}

/// A profile and a request drawn mostly from that profile's own sets, so
/// that permits and each kind of denial are all common.
pub fn profiled_request() -> impl Strategy<Value = (AuthorizationProfile, Request)> {
    random_profile()
        .prop_flat_map(|p| {
            let actions: BTreeSet<PermissionAction> = p.allowed_permissions.clone();
            let node = biased(&p.access_to, universe_iri(), 8).prop_map(Term::Iri);
            let literal =
                biased(&p.allowed_permission_values, (0..3u8).prop_map(|v| Literal::plain(format!("v{v}"))), 8)
                    .prop_map(Term::Literal);
            let object = prop_oneof![3 => node.clone(), 1 => literal];
            let predicate = biased(&p.authorized_predicates, (0..6u8).prop_map(|i| ex(&format!("p{i}"))), 9);
            let var = (0..2u8).prop_map(|i| Term::var(format!("x{i}")));
            let pattern = (
                prop_oneof![6 => node.clone(), 1 => var.clone()],
                predicate.clone(),
                prop_oneof![4 => object.clone(), 1 => var],
            );
            let triple = (biased(&p.access_to, universe_iri(), 8), predicate, object);
            let graph = biased(&p.confined_graphs, (0..4u8).prop_map(|g| ex(&format!("g{g}"))), 9);
            (
                Just(p),
                biased(&actions, prop::sample::select(PermissionAction::ALL.to_vec()), 9),
                graph,
                prop::collection::vec(pattern, 1..3),
                prop::collection::vec(triple, 1..3),
            )
        })
        .prop_filter_map("valid request", |(p, action, graph, patterns, triples)| {
            let body = match action {
                PermissionAction::Query => RequestBody::Patterns(
                    patterns
                        .into_iter()
                        .filter_map(|(s, pr, o)| TriplePattern::new(s, Term::Iri(pr), o).ok())
                        .collect(),
                ),
                _ => RequestBody::Triples(
                    triples.into_iter().filter_map(|(s, pr, o)| Triple::from_parts(s, pr, o).ok()).collect(),
                ),
            };
            let request = Request::new(p.agent.clone(), action, graph, body).ok()?;
            Some((p, request))
        })
}
