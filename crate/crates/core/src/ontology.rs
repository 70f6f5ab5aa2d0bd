//! Authorization vocabulary, role catalog and the agent-function to role map.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::engine::PermissionAction;
use crate::rdf::{Iri, Term, Triple};
use crate::turtle::{self, ParseDiagnostic, PrefixMap, RDF_TYPE};

/// Namespace shared by every vocabulary IRI.
pub const NS: &str = "http://example.org/kb#";
pub const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
/// IRIs in this namespace stand for unbound variables in Turtle documents.
pub const VAR_NS: &str = "urn:kbauthz:var:";

pub static DEFAULT_ONTOLOGY: &str = include_str!("../../../data/ontology.ttl");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("ontology does not parse: {0}")]
    Parse(#[from] ParseDiagnostic),
    #[error("function {function} maps to undeclared role {role}")]
    UndeclaredRole { function: Iri, role: Iri },
    #[error("function {function} maps to both {first} and {second}")]
    DuplicateFunction { function: Iri, first: Iri, second: Iri },
    #[error("role {role} lists {value:?} as a default permission")]
    BadPermission { role: Iri, value: String },
    #[error("function {0} maps to a literal instead of a role")]
    LiteralRole(Iri),
    #[error("unknown role {0}")]
    UnknownRole(Iri),
}

fn ns_iri(local: &str) -> Iri {
    Iri::new(format!("{NS}{local}")).expect("vocabulary IRIs are valid")
}

/// Well-known IRIs of the authorization vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub rdf_type: Iri,

    pub agent: Iri,
    pub role: Iri,
    pub authorization_profile: Iri,
    pub permission: Iri,
    pub resource: Iri,
    pub attribute: Iri,
    pub decision: Iri,

    pub has_role: Iri,
    pub has_authorization_profile: Iri,
    pub authorized_predicates: Iri,
    pub access_to: Iri,
    pub allowed_permission: Iri,
    pub allowed_permission_values: Iri,
    pub access_granted: Iri,
    pub has_function: Iri,
    pub member_of: Iri,
    pub has_identity: Iri,
    pub scoped_to_intent: Iri,
    pub confined_to_graph: Iri,

    // Catalog plumbing used inside ontology documents.
    pub maps_to_role: Iri,
    pub default_permission: Iri,
    pub certificate_role: Iri,
    pub description: Iri,

    pub query: Iri,
    pub assert: Iri,
    pub retract: Iri,

    extensions: BTreeSet<Iri>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self {
            rdf_type: Iri::new(RDF_TYPE).expect("constant"),
            agent: ns_iri("Agent"),
            role: ns_iri("Role"),
            authorization_profile: ns_iri("AuthorizationProfile"),
            permission: ns_iri("Permission"),
            resource: ns_iri("Resource"),
            attribute: ns_iri("Attribute"),
            decision: ns_iri("Decision"),
            has_role: ns_iri("hasRole"),
            has_authorization_profile: ns_iri("hasAuthorizationProfile"),
            authorized_predicates: ns_iri("authorizedPredicates"),
            access_to: ns_iri("accessTo"),
            allowed_permission: ns_iri("allowedPermission"),
            allowed_permission_values: ns_iri("allowedPermissionValues"),
            access_granted: ns_iri("accessGranted"),
            has_function: ns_iri("hasFunction"),
            member_of: ns_iri("memberOf"),
            has_identity: ns_iri("hasIdentity"),
            scoped_to_intent: ns_iri("scopedToIntent"),
            confined_to_graph: ns_iri("confinedToGraph"),
            maps_to_role: ns_iri("mapsToRole"),
            default_permission: ns_iri("defaultPermission"),
            certificate_role: ns_iri("certificateRole"),
            description: ns_iri("description"),
            query: ns_iri("Query"),
            assert: ns_iri("Assert"),
            retract: ns_iri("Retract"),
            extensions: BTreeSet::new(),
        }
    }

    pub fn classes(&self) -> [&Iri; 7] {
        [
            &self.agent,
            &self.role,
            &self.authorization_profile,
            &self.permission,
            &self.resource,
            &self.attribute,
            &self.decision,
        ]
    }

    pub fn predicates(&self) -> [&Iri; 12] {
        [
            &self.has_role,
            &self.has_authorization_profile,
            &self.authorized_predicates,
            &self.access_to,
            &self.allowed_permission,
            &self.allowed_permission_values,
            &self.access_granted,
            &self.has_function,
            &self.member_of,
            &self.has_identity,
            &self.scoped_to_intent,
            &self.confined_to_graph,
        ]
    }

    fn builtin(&self) -> impl Iterator<Item = &Iri> {
        self.classes().into_iter().chain(self.predicates()).chain([
            &self.maps_to_role,
            &self.default_permission,
            &self.certificate_role,
            &self.description,
            &self.query,
            &self.assert,
            &self.retract,
        ])
    }

    pub fn extensions(&self) -> &BTreeSet<Iri> {
        &self.extensions
    }

    pub fn add_extension(&mut self, iri: Iri) -> bool {
        if self.builtin().any(|b| *b == iri) {
            return false;
        }
        self.extensions.insert(iri)
    }

    pub fn contains(&self, iri: &Iri) -> bool {
        *iri == self.rdf_type || self.builtin().any(|b| b == iri) || self.extensions.contains(iri)
    }

    pub fn permission_iri(&self, action: PermissionAction) -> &Iri {
        match action {
            PermissionAction::Query => &self.query,
            PermissionAction::Assert => &self.assert,
            PermissionAction::Retract => &self.retract,
        }
    }

    pub fn permission_from_iri(&self, iri: &Iri) -> Option<PermissionAction> {
        PermissionAction::ALL.into_iter().find(|a| self.permission_iri(*a) == iri)
    }

    /// Prefix map covering the vocabulary and the RDF namespaces.
    pub fn prefixes(&self) -> PrefixMap {
        let mut p = PrefixMap::new();
        p.insert("ex", Iri::new(NS).expect("constant"));
        p.insert("rdf", Iri::new(RDF_NS).expect("constant"));
        p.insert("rdfs", Iri::new(RDFS_NS).expect("constant"));
        p.insert("xsd", Iri::new(XSD_NS).expect("constant"));
        p
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Role {
    pub name: Iri,
    pub default_permissions: BTreeSet<PermissionAction>,
    pub description: String,
    /// Value expected in the `role=` field of an agent credential.
    pub certificate_role: Option<String>,
}

impl Role {
    /// Parent profile that every profile of this role is a member of.
    pub fn parent_profile(&self) -> Iri {
        Iri::new(format!("{}Profile", self.name.as_str())).expect("role IRI plus suffix is valid")
    }
}

pub type RoleCatalog = BTreeMap<Iri, Role>;
pub type FunctionRoleMap = BTreeMap<Iri, Iri>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    pub vocabulary: Vocabulary,
    pub roles: RoleCatalog,
    pub functions: FunctionRoleMap,
    /// Source triples, loaded into the KB as static knowledge.
    pub triples: BTreeSet<Triple>,
}

impl Ontology {
    pub fn default_ontology() -> Self {
        load_ontology(DEFAULT_ONTOLOGY).expect("shipped ontology is valid")
    }

    pub fn is_vocabulary(&self, iri: &Iri) -> bool {
        self.vocabulary.contains(iri) || self.roles.contains_key(iri) || self.functions.contains_key(iri)
    }

    pub fn role_for_certificate(&self, annotation: &str) -> Option<&Role> {
        self.roles.values().find(|r| r.certificate_role.as_deref() == Some(annotation))
    }
}

pub fn load_ontology(document: &str) -> Result<Ontology, OntologyError> {
    let doc = turtle::parse(document)?;
    let mut vocabulary = Vocabulary::new();
    let rdf_property = Iri::new(format!("{RDF_NS}Property")).expect("constant");
    let rdfs_class = Iri::new(format!("{RDFS_NS}Class")).expect("constant");

    let mut roles = RoleCatalog::new();
    for t in &doc.triples {
        if *t.predicate() != vocabulary.rdf_type {
            continue;
        }
        match t.object() {
            Term::Iri(o) if *o == vocabulary.role => {
                roles.insert(
                    t.subject().clone(),
                    Role {
                        name: t.subject().clone(),
                        default_permissions: BTreeSet::new(),
                        description: String::new(),
                        certificate_role: None,
                    },
                );
            }
            Term::Iri(o) if *o == rdf_property || *o == rdfs_class => {
                vocabulary.add_extension(t.subject().clone());
            }
            _ => {}
        }
    }

    let mut functions = FunctionRoleMap::new();
    for t in &doc.triples {
        let p = t.predicate();
        if *p == vocabulary.default_permission {
            let Some(role) = roles.get_mut(t.subject()) else { continue };
            let action = t.object().as_iri().and_then(|i| vocabulary.permission_from_iri(i));
            match action {
                Some(a) => {
                    role.default_permissions.insert(a);
                }
                None => {
                    return Err(OntologyError::BadPermission {
                        role: t.subject().clone(),
                        value: crate::turtle::Canonical(t.object()).to_string(),
                    })
                }
            }
        } else if *p == vocabulary.description {
            if let (Some(role), Some(lit)) = (roles.get_mut(t.subject()), t.object().as_literal()) {
                role.description = lit.lexical().to_string();
            }
        } else if *p == vocabulary.certificate_role {
            if let (Some(role), Some(lit)) = (roles.get_mut(t.subject()), t.object().as_literal()) {
                role.certificate_role = Some(lit.lexical().to_string());
            }
        } else if *p == vocabulary.maps_to_role {
            let function = t.subject().clone();
            let Some(role) = t.object().as_iri().cloned() else {
                return Err(OntologyError::LiteralRole(function));
            };
            if !roles.contains_key(&role) {
                return Err(OntologyError::UndeclaredRole { function, role });
            }
            // Triples are sorted, so a second mapping for the same function shows up here.
            if let Some(first) = functions.get(&function) {
                return Err(OntologyError::DuplicateFunction { function, first: first.clone(), second: role });
            }
            functions.insert(function, role);
        }
    }

    Ok(Ontology { vocabulary, roles, functions, triples: doc.triples })
}

pub fn default_permissions(role: &Iri, catalog: &RoleCatalog) -> Result<BTreeSet<PermissionAction>, OntologyError> {
    catalog.get(role).map(|r| r.default_permissions.clone()).ok_or_else(|| OntologyError::UnknownRole(role.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(local: &str) -> Iri {
        ns_iri(local)
    }

    #[test]
    fn shipped_ontology_has_five_roles() {
        let o = Ontology::default_ontology();
        assert_eq!(o.roles.len(), 5);
        for r in ["Grounding", "Proposal", "Prediction", "Evaluation", "Actuation"] {
            assert!(o.roles.contains_key(&ex(r)), "{r}");
        }
        assert!(o.functions.len() >= 5);
        assert_eq!(o.functions[&ex("UserPlaneGrounding")], ex("Grounding"));
        assert_eq!(o.role_for_certificate("grounder").unwrap().name, ex("Grounding"));
    }

    #[test]
    fn every_role_defaults_to_query_and_assert() {
        let o = Ontology::default_ontology();
        let expected: BTreeSet<_> = [PermissionAction::Query, PermissionAction::Assert].into();
        for role in o.roles.keys() {
            assert_eq!(default_permissions(role, &o.roles).unwrap(), expected);
        }
    }

    #[test]
    fn unknown_role_fails_closed() {
        let o = Ontology::default_ontology();
        assert_eq!(default_permissions(&ex("Janitor"), &o.roles), Err(OntologyError::UnknownRole(ex("Janitor"))));
    }

    #[test]
    fn role_without_defaults_is_empty() {
        let o = load_ontology("@prefix ex: <http://example.org/kb#> . ex:Idle a ex:Role .").unwrap();
        assert!(default_permissions(&ex("Idle"), &o.roles).unwrap().is_empty());
    }

    #[test]
    fn function_with_two_roles_is_rejected() {
        let text = "@prefix ex: <http://example.org/kb#> .
            ex:A a ex:Role . ex:B a ex:Role .
            ex:f ex:mapsToRole ex:A, ex:B .";
        assert!(matches!(load_ontology(text), Err(OntologyError::DuplicateFunction { .. })));
    }

    #[test]
    fn function_to_undeclared_role_is_rejected() {
        let text = "@prefix ex: <http://example.org/kb#> . ex:f ex:mapsToRole ex:Ghost .";
        assert!(matches!(load_ontology(text), Err(OntologyError::UndeclaredRole { .. })));
    }

    #[test]
    fn empty_ontology_loads_empty_catalog() {
        let o = load_ontology("").unwrap();
        assert!(o.roles.is_empty());
        assert!(o.functions.is_empty());
    }

    #[test]
    fn extensions_are_registered() {
        let o = load_ontology(
            "@prefix ex: <http://example.org/kb#> . @prefix rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#> .
             ex:servesSlice a rdf:Property .",
        )
        .unwrap();
        assert!(o.vocabulary.contains(&ex("servesSlice")));
        assert!(o.vocabulary.extensions().contains(&ex("servesSlice")));
        // Built-ins are not duplicated as extensions.
        let shipped = Ontology::default_ontology();
        assert!(shipped.vocabulary.extensions().is_empty());
    }

    #[test]
    fn vocabulary_shares_one_namespace() {
        let v = Vocabulary::new();
        let all: Vec<&Iri> = v.builtin().collect();
        let unique: BTreeSet<&Iri> = all.iter().copied().collect();
        assert_eq!(all.len(), unique.len());
        assert!(all.iter().all(|i| i.as_str().starts_with(NS)));
    }
}
