//! Exception rules refining a role's default permissions for sub-functions.
//!
//! Document shape (one subject per rule):
//!
//! ```text
//! ex:UeGroundingReadOnly a ex:ExceptionRule ;
//!     ex:appliesToRole ex:Grounding ;
//!     ex:hasFunction ex:UeGrounding ;      # match attribute
//!     ex:removePermission ex:Assert .
//! ```
//!
//! Every predicate other than `rdf:type`, `appliesToRole`, `removePermission`
//! and `addPermission` is a match attribute that must hold of the agent.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::PermissionAction;
use crate::ontology::{Vocabulary, NS};
use crate::rdf::{Iri, Term};
use crate::turtle::{self, ParseDiagnostic};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExceptionRule {
    pub id: Iri,
    pub role: Iri,
    pub match_attributes: BTreeSet<(Iri, Term)>,
    pub remove_permissions: BTreeSet<PermissionAction>,
    pub add_permissions: BTreeSet<PermissionAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExceptionError {
    #[error("exception document does not parse: {0}")]
    Parse(#[from] ParseDiagnostic),
    #[error("exception {0} names no role")]
    NoRole(Iri),
    #[error("exception {0} names more than one role")]
    SeveralRoles(Iri),
    #[error("exception {0} both adds and removes {1}")]
    Overlap(Iri, PermissionAction),
    #[error("exception {0} lists {1} as a permission")]
    BadPermission(Iri, String),
}

pub fn load_exceptions(document: &str, vocab: &Vocabulary) -> Result<Vec<ExceptionRule>, ExceptionError> {
    let doc = turtle::parse(document)?;
    let ex = |l: &str| Iri::new(format!("{NS}{l}")).expect("constant");
    let (class, applies, remove, add) =
        (ex("ExceptionRule"), ex("appliesToRole"), ex("removePermission"), ex("addPermission"));

    let ids: BTreeSet<&Iri> = doc
        .triples
        .iter()
        .filter(|t| *t.predicate() == vocab.rdf_type && t.object().as_iri() == Some(&class))
        .map(|t| t.subject())
        .collect();

    let mut rules: BTreeMap<&Iri, (Vec<Iri>, ExceptionRule)> = BTreeMap::new();
    for id in &ids {
        let rule = ExceptionRule {
            id: (*id).clone(),
            role: (*id).clone(),
            match_attributes: BTreeSet::new(),
            remove_permissions: BTreeSet::new(),
            add_permissions: BTreeSet::new(),
        };
        rules.insert(id, (Vec::new(), rule));
    }
    for t in &doc.triples {
        let Some((roles, rule)) = rules.get_mut(t.subject()) else { continue };
        let p = t.predicate();
        let permission = || {
            t.object().as_iri().and_then(|i| vocab.permission_from_iri(i)).ok_or_else(|| {
                ExceptionError::BadPermission(rule.id.clone(), turtle::Canonical(t.object()).to_string())
            })
        };
        if *p == vocab.rdf_type && t.object().as_iri() == Some(&class) {
            continue;
        } else if *p == applies {
            if let Some(r) = t.object().as_iri() {
                roles.push(r.clone());
            }
        } else if *p == remove {
            let a = permission()?;
            rule.remove_permissions.insert(a);
        } else if *p == add {
            let a = permission()?;
            rule.add_permissions.insert(a);
        } else {
            rule.match_attributes.insert((p.clone(), t.object().clone()));
        }
    }

    let mut out = Vec::new();
    for (id, (roles, mut rule)) in rules {
        match roles.as_slice() {
            [] => return Err(ExceptionError::NoRole(id.clone())),
            [role] => rule.role = role.clone(),
            _ => return Err(ExceptionError::SeveralRoles(id.clone())),
        }
        if let Some(a) = rule.remove_permissions.intersection(&rule.add_permissions).next() {
            return Err(ExceptionError::Overlap(id.clone(), *a));
        }
        out.push(rule);
    }
    Ok(out)
}
