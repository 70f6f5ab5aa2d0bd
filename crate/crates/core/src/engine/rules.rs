//! Declarative inference rules and naive forward chaining.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::LeastPrivilegeViolation;
use crate::ontology::{Vocabulary, NS, VAR_NS};
use crate::rdf::{Dataset, Iri, RdfError, Term, Triple, TriplePattern};
use crate::turtle::{self, ParseDiagnostic};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDocument {
    pub id: Iri,
    pub condition: Vec<TriplePattern>,
    pub conclusion: Vec<TriplePattern>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule document does not parse: {0}")]
    Parse(#[from] ParseDiagnostic),
    #[error("rule {0} has no condition")]
    EmptyCondition(Iri),
    #[error("pattern {pattern} of rule {rule} lacks {position}")]
    IncompletePattern { rule: Iri, pattern: Iri, position: &'static str },
    #[error("pattern {pattern} of rule {rule}: {source}")]
    BadPattern { rule: Iri, pattern: Iri, source: RdfError },
    #[error("conclusion variable ?{var} of rule {rule} is not bound by the condition")]
    UnboundVariable { rule: Iri, var: String },
    #[error("derivations would leave profile {graph} violating least privilege: {violation}")]
    LeastPrivilege { graph: Iri, violation: LeastPrivilegeViolation },
}

impl RuleDocument {
    pub fn new(id: Iri, condition: Vec<TriplePattern>, conclusion: Vec<TriplePattern>) -> Result<Self, RuleError> {
        if condition.is_empty() {
            return Err(RuleError::EmptyCondition(id));
        }
        let bound: BTreeSet<&str> = condition.iter().flat_map(TriplePattern::variables).collect();
        if let Some(var) = conclusion.iter().flat_map(TriplePattern::variables).find(|v| !bound.contains(v)) {
            return Err(RuleError::UnboundVariable { rule: id, var: var.to_string() });
        }
        Ok(Self { id, condition, conclusion })
    }
}

fn decode_term(term: &Term) -> Term {
    match term {
        Term::Iri(iri) => match iri.as_str().strip_prefix(VAR_NS) {
            Some(name) => Term::Variable(name.to_string()),
            None => term.clone(),
        },
        other => other.clone(),
    }
}

/// Reads rules from their reified Turtle form: `ex:condition` / `ex:conclusion`
/// point at pattern nodes carrying `ex:patternSubject`, `ex:patternPredicate`
/// and `ex:patternObject`.
pub fn load_rules(document: &str, vocab: &Vocabulary) -> Result<Vec<RuleDocument>, RuleError> {
    let doc = turtle::parse(document)?;
    let ex = |l: &str| Iri::new(format!("{NS}{l}")).expect("constant");
    let (class, cond, concl) = (ex("Rule"), ex("condition"), ex("conclusion"));
    let (ps, pp, po) = (ex("patternSubject"), ex("patternPredicate"), ex("patternObject"));

    let mut positions: BTreeMap<&Iri, [Option<Term>; 3]> = BTreeMap::new();
    for t in &doc.triples {
        let slot = if *t.predicate() == ps {
            0
        } else if *t.predicate() == pp {
            1
        } else if *t.predicate() == po {
            2
        } else {
            continue;
        };
        positions.entry(t.subject()).or_default()[slot] = Some(decode_term(t.object()));
    }

    let pattern = |rule: &Iri, node: &Iri| -> Result<TriplePattern, RuleError> {
        let slots = positions.get(node).cloned().unwrap_or_default();
        let [s, p, o] = slots;
        let missing = |position| RuleError::IncompletePattern { rule: rule.clone(), pattern: node.clone(), position };
        TriplePattern::new(
            s.ok_or_else(|| missing("patternSubject"))?,
            p.ok_or_else(|| missing("patternPredicate"))?,
            o.ok_or_else(|| missing("patternObject"))?,
        )
        .map_err(|source| RuleError::BadPattern { rule: rule.clone(), pattern: node.clone(), source })
    };

    let mut rules = Vec::new();
    let ids: BTreeSet<&Iri> = doc
        .triples
        .iter()
        .filter(|t| *t.predicate() == vocab.rdf_type && t.object().as_iri() == Some(&class))
        .map(|t| t.subject())
        .collect();
    for id in ids {
        let mut condition = Vec::new();
        let mut conclusion = Vec::new();
        for t in doc.triples.iter().filter(|t| t.subject() == id) {
            let Some(node) = t.object().as_iri() else { continue };
            if *t.predicate() == cond {
                condition.push(pattern(id, node)?);
            } else if *t.predicate() == concl {
                conclusion.push(pattern(id, node)?);
            }
        }
        rules.push(RuleDocument::new(id.clone(), condition, conclusion)?);
    }
    Ok(rules)
}

/// Triples derivable from `dataset` by repeated rule application that are not
/// yet in `target`. The term universe is finite, so this terminates.
pub(super) fn forward_chain(dataset: &Dataset, rules: &[RuleDocument], target: &Iri) -> BTreeSet<Triple> {
    let mut working = dataset.clone();
    let mut derived = BTreeSet::new();
    loop {
        let scope: Vec<Iri> = working.graph_names().cloned().collect();
        let mut fresh = Vec::new();
        for rule in rules {
            let Ok(bindings) = working.match_patterns(&scope, &rule.condition) else { continue };
            for b in &bindings {
                for template in &rule.conclusion {
                    if let Some(t) = template.instantiate(b) {
                        if !working.contains(target, &t) {
                            fresh.push(t);
                        }
                    }
                }
            }
        }
        let mut grew = false;
        for t in fresh {
            if working.insert(target, t.clone()) {
                derived.insert(t);
                grew = true;
            }
        }
        if !grew {
            return derived;
        }
    }
}
