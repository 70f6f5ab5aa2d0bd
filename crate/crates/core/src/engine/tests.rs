use std::collections::BTreeSet;

use super::*;
use crate::rdf::{Literal, TriplePattern};
use crate::turtle;

fn ex(local: &str) -> Iri {
    Iri::new(format!("{NS}{local}")).unwrap()
}

fn agent(name: &str) -> Iri {
    Iri::new(format!("http://example.org/agents/{name}")).unwrap()
}

fn grounder(name: &str, resources: &[&str]) -> RegistrationClaims {
    RegistrationClaims::new(agent(name))
        .identity(Iri::new(format!("http://example.org/handlers/{name}")).unwrap())
        .function(ex("UserPlaneGrounding"))
        .access(resources.iter().map(|r| ex(r)))
        .predicates([ex("latencyMs")])
}

fn register(engine: &mut Engine, claims: &RegistrationClaims) -> Result<AuthorizationProfile, RegistrationError> {
    let triples = claims.to_triples(&engine.ontology().vocabulary);
    engine.register(&claims.agent, Some("grounder"), &triples)
}

fn metric(resource: &str, value: &str) -> Triple {
    Triple::from_parts(ex(resource), ex("latencyMs"), Literal::plain(value)).unwrap()
}

fn assert_req(who: &Iri, t: Triple) -> Request {
    Request::assert(who.clone(), ex("kb"), vec![t]).unwrap()
}

fn latency_query(who: &Iri) -> Request {
    let p = TriplePattern::new(Term::var("n"), Term::Iri(ex("latencyMs")), Term::var("v")).unwrap();
    Request::query(who.clone(), ex("kb"), vec![p]).unwrap()
}

fn mentions(engine: &Engine, subject: &Iri) -> usize {
    engine.dataset().quads().filter(|(_, t)| t.subject() == subject).count()
}

#[test]
fn role_follows_function() {
    let mut engine = Engine::with_defaults();
    register(&mut engine, &grounder("g1", &["gnb1"])).unwrap();
    register(&mut engine, &grounder("g2", &["gnb2"])).unwrap();
    let p1 = engine.profile(&agent("g1")).unwrap();
    let p2 = engine.profile(&agent("g2")).unwrap();
    assert_eq!(p1.role, ex("Grounding"));
    assert_eq!(p2.role, ex("Grounding"));
    assert_ne!(p1.profile_graph, p2.profile_graph);
}

#[test]
fn missing_function_fails_registration() {
    let mut engine = Engine::with_defaults();
    let mut claims = grounder("g1", &["gnb1"]);
    claims.function = None;
    let err = register(&mut engine, &claims).unwrap_err();
    assert_eq!(err, RegistrationError::Role(RoleError::MissingFunction(agent("g1"))));
    assert!(engine.profile(&agent("g1")).is_none());
    assert_eq!(mentions(&engine, &agent("g1")), 0);
}

#[test]
fn grounding_defaults_are_query_and_assert() {
    let engine = Engine::with_defaults();
    let perms = engine.derive_permissions(&agent("g1"), &ex("Grounding"));
    assert_eq!(perms, BTreeSet::from([PermissionAction::Query, PermissionAction::Assert]));
}

const INTENT_EXCEPTION: &str = "@prefix ex: <http://example.org/kb#> .
ex:ReadOnlyOnIntentX a ex:ExceptionRule ;
    ex:appliesToRole ex:Grounding ;
    ex:scopedToIntent ex:IntentX ;
    ex:removePermission ex:Assert .";

#[test]
fn matching_exception_removes_permission() {
    let ontology = crate::ontology::Ontology::default_ontology();
    let exceptions = load_exceptions(INTENT_EXCEPTION, &ontology.vocabulary).unwrap();
    let mut engine = Engine::new(ontology, exceptions, EngineConfig::default());
    let claims = grounder("g1", &["gnb1"]).attribute(ex("scopedToIntent"), ex("IntentX"));
    let profile = register(&mut engine, &claims).unwrap();
    assert_eq!(profile.allowed_permissions, BTreeSet::from([PermissionAction::Query]));
}

#[test]
fn non_matching_exception_leaves_defaults() {
    let ontology = crate::ontology::Ontology::default_ontology();
    let exceptions = load_exceptions(INTENT_EXCEPTION, &ontology.vocabulary).unwrap();
    let mut engine = Engine::new(ontology, exceptions, EngineConfig::default());
    let claims = grounder("g1", &["gnb1"]).attribute(ex("scopedToIntent"), ex("IntentY"));
    let profile = register(&mut engine, &claims).unwrap();
    assert_eq!(profile.allowed_permissions, BTreeSet::from([PermissionAction::Query, PermissionAction::Assert]));
}

#[test]
fn least_privilege_check() {
    let engine = Engine::with_defaults();
    let policy = engine.policy();
    let access = |o: Iri| Triple::from_parts(agent("g1"), ex("accessTo"), o).unwrap();
    assert!(check_least_privilege(&[access(ex("cell1"))], &policy).is_ok());
    let v = check_least_privilege(&[access(ex("ANY"))], &policy).unwrap_err();
    assert_eq!(v.kind, ViolationKind::Wildcard);
    assert_eq!(v.triple.as_deref(), Some(&access(ex("ANY"))));
    let v = check_least_privilege(&[], &policy).unwrap_err();
    assert_eq!(v.kind, ViolationKind::EmptyScope);
}

#[test]
fn wildcard_registration_writes_no_profile() {
    let mut engine = Engine::with_defaults();
    let err = register(&mut engine, &grounder("g1", &["ANY"])).unwrap_err();
    assert_eq!(err.code(), "WILDCARD_REJECTED");
    assert!(engine.dataset().graph(&profile_graph_name(&agent("g1"))).is_none());
    assert_eq!(mentions(&engine, &agent("g1")), 0);
}

#[test]
fn profile_graph_has_expected_shape() {
    let mut engine = Engine::with_defaults();
    let profile = register(&mut engine, &grounder("g1", &["gnb1", "gnb2"])).unwrap();
    let graph = engine.dataset().graph(&profile.profile_graph).unwrap();
    let count = |p: &str| graph.triples().iter().filter(|t| *t.predicate() == ex(p)).count();
    assert_eq!(count("accessTo"), 2);
    assert_eq!(count("authorizedPredicates"), 1);

    let mut prefixes = turtle::PrefixMap::new();
    prefixes.insert("ex", Iri::new(NS).unwrap());
    let text = turtle::serialize(graph.triples(), &prefixes);
    assert_eq!(&turtle::parse(&text).unwrap().triples, graph.triples());
}

#[test]
fn second_registration_conflicts() {
    let mut engine = Engine::with_defaults();
    register(&mut engine, &grounder("g1", &["gnb1"])).unwrap();
    let err = register(&mut engine, &grounder("g1", &["gnb1"])).unwrap_err();
    assert_eq!(err.code(), "CONFLICT");
}

#[test]
fn request_patterns_are_lifted() {
    let g1 = agent("g1");
    let r = assert_req(&g1, metric("gnb1", "12"));
    assert_eq!(extract_request_pattern(&r), vec![metric("gnb1", "12").to_pattern()]);
    let q = latency_query(&g1);
    let RequestBody::Patterns(ps) = q.body() else { panic!() };
    assert_eq!(extract_request_pattern(&q), ps.clone());
    assert!(Request::assert(g1.clone(), ex("kb"), vec![]).is_err());
    assert!(Request::query(g1, ex("kb"), vec![]).is_err());
}

#[test]
fn authorize_examples() {
    let mut engine = Engine::with_defaults();
    register(&mut engine, &grounder("g1", &["gnb1"])).unwrap();
    register(&mut engine, &grounder("g2", &["gnb2"])).unwrap();
    let g1 = agent("g1");
    assert!(engine.authorize(&assert_req(&g1, metric("gnb1", "9"))).is_permit());
    assert_eq!(engine.authorize(&assert_req(&g1, metric("gnb2", "9"))).reason(), ReasonCode::ResourceNotInScope);
    assert_eq!(engine.authorize(&assert_req(&agent("nobody"), metric("gnb1", "9"))).reason(), ReasonCode::NoProfile);
    assert_eq!(
        engine.authorize(&assert_req(&agent("g2"), metric("gnb1", "9"))).reason(),
        ReasonCode::ResourceNotInScope
    );
}

#[test]
fn query_results_are_filtered_to_scope() {
    let mut engine = Engine::with_defaults();
    engine.seed(&ex("kb"), metric("gnb1", "10"));
    engine.seed(&ex("kb"), metric("gnb2", "20"));
    register(&mut engine, &grounder("g1", &["gnb1"])).unwrap();
    let exec = engine.execute(&latency_query(&agent("g1")));
    assert!(exec.decision.is_permit());
    assert_eq!(exec.bindings.len(), 1);
    assert_eq!(exec.bindings[0].get("n"), Some(&Term::Iri(ex("gnb1"))));
}

#[test]
fn denial_leaves_dataset_untouched() {
    let mut engine = Engine::with_defaults();
    register(&mut engine, &grounder("g1", &["gnb1"])).unwrap();
    let before = engine.dataset().clone();
    let exec = engine.execute(&assert_req(&agent("g1"), metric("gnb2", "1")));
    assert!(!exec.decision.is_permit());
    assert_eq!(exec.changed, 0);
    assert_eq!(engine.dataset(), &before);
}

#[test]
fn read_your_writes() {
    let mut engine = Engine::with_defaults();
    register(&mut engine, &grounder("g1", &["gnb1"])).unwrap();
    assert_eq!(engine.execute(&assert_req(&agent("g1"), metric("gnb1", "5"))).changed, 1);
    let exec = engine.execute(&latency_query(&agent("g1")));
    assert_eq!(exec.bindings.len(), 1);
    assert_eq!(exec.bindings[0].get("v"), Some(&Term::Literal(Literal::plain("5"))));
}

#[test]
fn role_rule_reproduces_derive_role() {
    let mut engine = Engine::with_defaults();
    let claims = grounder("g1", &["gnb1"]);
    for t in claims.to_triples(&engine.ontology().vocabulary) {
        engine.seed(&ex("kb"), t);
    }
    let rules = load_rules(crate::DEFAULT_RULES, &engine.ontology().vocabulary).unwrap();
    assert_eq!(engine.apply_rules(&rules).unwrap(), 1);
    let expected = Triple::from_parts(agent("g1"), ex("hasRole"), ex("Grounding")).unwrap();
    assert!(engine.dataset().contains(&engine.config().derivations_graph, &expected));
}

#[test]
fn vacuous_rules_derive_nothing() {
    let mut engine = Engine::with_defaults();
    assert_eq!(engine.apply_rules(&[]).unwrap(), 0);
    let rules = load_rules(crate::DEFAULT_RULES, &engine.ontology().vocabulary).unwrap();
    assert_eq!(engine.apply_rules(&rules).unwrap(), 0);
}

#[test]
fn retraction_removes_everything_about_the_agent() {
    let mut engine = Engine::with_defaults();
    register(&mut engine, &grounder("g1", &["gnb1"])).unwrap();
    assert!(engine.retract_agent(&agent("g1")) > 0);
    assert_eq!(engine.authorize(&assert_req(&agent("g1"), metric("gnb1", "9"))).reason(), ReasonCode::NoProfile);
    assert_eq!(mentions(&engine, &agent("g1")), 0);
    assert_eq!(
        engine.dataset().quads().filter(|(g, _)| g.as_str().starts_with("http://example.org/agents/g1")).count(),
        0
    );
    assert_eq!(engine.retract_agent(&agent("nobody")), 0);
}

#[test]
fn revoking_access_takes_effect_immediately() {
    let mut engine = Engine::with_defaults();
    register(&mut engine, &grounder("g1", &["gnb1", "gnb2"])).unwrap();
    let req = assert_req(&agent("g1"), metric("gnb2", "3"));
    assert!(engine.authorize(&req).is_permit());
    assert!(engine.revoke_access(&agent("g1"), &ex("gnb2")));
    assert_eq!(engine.authorize(&req).reason(), ReasonCode::ResourceNotInScope);
    assert!(!engine.revoke_access(&agent("g1"), &ex("gnb1")), "scope may not become empty");
    assert!(engine.grant_access(&agent("g1"), &ex("ANY")).is_err());
}

#[test]
fn every_authorize_is_counted() {
    let mut engine = Engine::with_defaults();
    register(&mut engine, &grounder("g1", &["gnb1"])).unwrap();
    let before = engine.decision_count();
    engine.authorize(&assert_req(&agent("g1"), metric("gnb1", "1")));
    engine.execute(&latency_query(&agent("g1")));
    assert_eq!(engine.decision_count(), before + 2);
}
