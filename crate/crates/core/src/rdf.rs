//! In-memory RDF dataset with named graphs and basic-graph-pattern matching.
//!
//! Blank nodes are not part of the model: every node is either an IRI or a
//! literal, so two graphs are equal exactly when their triple sets are equal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RdfError {
    #[error("malformed IRI {0:?}")]
    MalformedIri(String),
    #[error("malformed language tag {0:?}")]
    MalformedLanguage(String),
    #[error("variable ?{0} is not allowed in a triple")]
    VariableInTriple(String),
    #[error("{0} is not allowed in the {1} position")]
    BadPosition(&'static str, &'static str),
    #[error("pattern has no concrete position")]
    UnboundPattern,
    #[error("empty pattern list")]
    EmptyPatterns,
}

/// Absolute IRI. Non-empty, no whitespace, and carries a scheme.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Iri(String);

impl Iri {
    pub fn new(value: impl Into<String>) -> Result<Self, RdfError> {
        let value = value.into();
        if is_valid_iri(&value) {
            Ok(Self(value))
        } else {
            Err(RdfError::MalformedIri(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

fn is_valid_iri(value: &str) -> bool {
    let Some((scheme, rest)) = value.split_once(':') else {
        return false;
    };
    let mut scheme_chars = scheme.chars();
    let scheme_ok = scheme_chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && scheme_chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok
        && !rest.is_empty()
        && value.chars().all(|c| {
            !c.is_whitespace() && !c.is_control() && !matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\')
        })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    lexical: String,
    datatype: Option<Iri>,
    language: Option<String>,
}

impl Literal {
    pub fn plain(lexical: impl Into<String>) -> Self {
        Self { lexical: lexical.into(), datatype: None, language: None }
    }

    pub fn typed(lexical: impl Into<String>, datatype: Iri) -> Self {
        Self { lexical: lexical.into(), datatype: Some(datatype), language: None }
    }

    pub fn lang(lexical: impl Into<String>, language: impl Into<String>) -> Result<Self, RdfError> {
        let language = language.into();
        if !is_valid_language(&language) {
            return Err(RdfError::MalformedLanguage(language));
        }
        Ok(Self { lexical: lexical.into(), datatype: None, language: Some(language) })
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn datatype(&self) -> Option<&Iri> {
        self.datatype.as_ref()
    }

    pub fn language(&self) -> Option<&str> {
        self.language.as_deref()
    }
}

pub(crate) fn is_valid_language(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let first_ok = parts.next().is_some_and(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphabetic()));
    first_ok && parts.all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
    Variable(String),
}

impl Term {
    pub fn iri(value: &str) -> Result<Self, RdfError> {
        Iri::new(value).map(Term::Iri)
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Variable(name.into())
    }

    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(iri) => Some(iri),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(lit) => Some(lit),
            _ => None,
        }
    }

    pub fn is_variable(&self) -> bool {
        matches!(self, Term::Variable(_))
    }

    fn kind(&self) -> &'static str {
        match self {
            Term::Iri(_) => "IRI",
            Term::Literal(_) => "literal",
            Term::Variable(_) => "variable",
        }
    }
}

impl From<Iri> for Term {
    fn from(iri: Iri) -> Self {
        Term::Iri(iri)
    }
}

impl From<Literal> for Term {
    fn from(lit: Literal) -> Self {
        Term::Literal(lit)
    }
}

/// A ground statement. Subject and predicate are IRIs, the object an IRI or literal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    subject: Iri,
    predicate: Iri,
    object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, RdfError> {
        let subject = match subject {
            Term::Iri(iri) => iri,
            Term::Variable(v) => return Err(RdfError::VariableInTriple(v)),
            other => return Err(RdfError::BadPosition(other.kind(), "subject")),
        };
        let predicate = match predicate {
            Term::Iri(iri) => iri,
            Term::Variable(v) => return Err(RdfError::VariableInTriple(v)),
            other => return Err(RdfError::BadPosition(other.kind(), "predicate")),
        };
        if let Term::Variable(v) = object {
            return Err(RdfError::VariableInTriple(v));
        }
        Ok(Self { subject, predicate, object })
    }

    pub fn from_parts(subject: Iri, predicate: Iri, object: impl Into<Term>) -> Result<Self, RdfError> {
        Self::new(Term::Iri(subject), Term::Iri(predicate), object.into())
    }

    pub fn subject(&self) -> &Iri {
        &self.subject
    }

    pub fn predicate(&self) -> &Iri {
        &self.predicate
    }

    pub fn object(&self) -> &Term {
        &self.object
    }

    /// Lifts the triple to a variable-free pattern.
    pub fn to_pattern(&self) -> TriplePattern {
        TriplePattern {
            subject: Term::Iri(self.subject.clone()),
            predicate: Term::Iri(self.predicate.clone()),
            object: self.object.clone(),
            full_scan: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriplePattern {
    subject: Term,
    predicate: Term,
    object: Term,
    full_scan: bool,
}

impl TriplePattern {
    /// Builds a pattern with at least one concrete position.
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, RdfError> {
        if matches!(subject, Term::Literal(_)) {
            return Err(RdfError::BadPosition("literal", "subject"));
        }
        if matches!(predicate, Term::Literal(_)) {
            return Err(RdfError::BadPosition("literal", "predicate"));
        }
        if subject.is_variable() && predicate.is_variable() && object.is_variable() {
            return Err(RdfError::UnboundPattern);
        }
        Ok(Self { subject, predicate, object, full_scan: false })
    }

    /// An all-variable pattern. Reserved for internal scans; agent requests never carry one.
    pub fn full_scan(subject: &str, predicate: &str, object: &str) -> Self {
        Self {
            subject: Term::var(subject),
            predicate: Term::var(predicate),
            object: Term::var(object),
            full_scan: true,
        }
    }

    pub fn subject(&self) -> &Term {
        &self.subject
    }

    pub fn predicate(&self) -> &Term {
        &self.predicate
    }

    pub fn object(&self) -> &Term {
        &self.object
    }

    pub fn is_full_scan(&self) -> bool {
        self.full_scan
    }

    pub fn terms(&self) -> [&Term; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.terms().into_iter().filter_map(|t| match t {
            Term::Variable(v) => Some(v.as_str()),
            _ => None,
        })
    }

    /// Substitutes bound variables and returns the ground triple, if fully bound.
    pub fn instantiate(&self, binding: &Binding) -> Option<Triple> {
        let resolve = |t: &Term| match t {
            Term::Variable(v) => binding.get(v).cloned(),
            other => Some(other.clone()),
        };
        Triple::new(resolve(&self.subject)?, resolve(&self.predicate)?, resolve(&self.object)?).ok()
    }

    /// Extends `binding` so that this pattern matches `triple`, or returns None.
    fn unify(&self, triple: &Triple, binding: &Binding) -> Option<Binding> {
        let mut out = binding.clone();
        let pairs = [
            (&self.subject, Term::Iri(triple.subject.clone())),
            (&self.predicate, Term::Iri(triple.predicate.clone())),
            (&self.object, triple.object.clone()),
        ];
        for (pattern_term, value) in pairs {
            match pattern_term {
                Term::Variable(name) => match out.get(name) {
                    Some(bound) if *bound != value => return None,
                    Some(_) => {}
                    None => {
                        out.insert(name.clone(), value);
                    }
                },
                concrete => {
                    if *concrete != value {
                        return None;
                    }
                }
            }
        }
        Some(out)
    }
}

pub type Binding = BTreeMap<String, Term>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedGraph {
    name: Iri,
    triples: BTreeSet<Triple>,
}

impl NamedGraph {
    pub fn new(name: Iri) -> Self {
        Self { name, triples: BTreeSet::new() }
    }

    pub fn from_triples(name: Iri, triples: impl IntoIterator<Item = Triple>) -> Self {
        Self { name, triples: triples.into_iter().collect() }
    }

    pub fn name(&self) -> &Iri {
        &self.name
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn insert(&mut self, triple: Triple) -> bool {
        self.triples.insert(triple)
    }

    pub fn remove(&mut self, triple: &Triple) -> bool {
        self.triples.remove(triple)
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    /// Triples whose subject is `subject`, via a range scan on the sorted set.
    pub fn with_subject<'a>(&'a self, subject: &'a Iri) -> impl Iterator<Item = &'a Triple> + 'a {
        self.triples.iter().skip_while(move |t| t.subject < *subject).take_while(move |t| t.subject == *subject)
    }
}

/// Set equality of triples. Graph names are not compared.
pub fn graphs_equal(a: &NamedGraph, b: &NamedGraph) -> bool {
    a.triples == b.triples
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    graphs: BTreeMap<Iri, NamedGraph>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts into `graph`, creating it if needed. Returns false for a duplicate.
    pub fn insert(&mut self, graph: &Iri, triple: Triple) -> bool {
        self.graphs.entry(graph.clone()).or_insert_with(|| NamedGraph::new(graph.clone())).insert(triple)
    }

    pub fn remove(&mut self, graph: &Iri, triple: &Triple) -> bool {
        let Some(g) = self.graphs.get_mut(graph) else {
            return false;
        };
        let removed = g.remove(triple);
        if g.is_empty() {
            self.graphs.remove(graph);
        }
        removed
    }

    pub fn contains(&self, graph: &Iri, triple: &Triple) -> bool {
        self.graphs.get(graph).is_some_and(|g| g.contains(triple))
    }

    /// Drops the whole graph and returns how many triples it held.
    pub fn retract_graph(&mut self, graph: &Iri) -> usize {
        self.graphs.remove(graph).map_or(0, |g| g.len())
    }

    /// Removes every triple whose subject is `subject`, across all graphs.
    pub fn remove_subject(&mut self, subject: &Iri) -> usize {
        let mut removed = 0;
        for g in self.graphs.values_mut() {
            let doomed: Vec<Triple> = g.with_subject(subject).cloned().collect();
            removed += doomed.len();
            for t in &doomed {
                g.remove(t);
            }
        }
        self.graphs.retain(|_, g| !g.is_empty());
        removed
    }

    pub fn graph(&self, name: &Iri) -> Option<&NamedGraph> {
        self.graphs.get(name)
    }

    pub fn graph_names(&self) -> impl Iterator<Item = &Iri> {
        self.graphs.keys()
    }

    pub fn graphs(&self) -> impl Iterator<Item = &NamedGraph> {
        self.graphs.values()
    }

    pub fn len(&self) -> usize {
        self.graphs.values().map(NamedGraph::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Every triple in any graph, with its graph name.
    pub fn quads(&self) -> impl Iterator<Item = (&Iri, &Triple)> {
        self.graphs.values().flat_map(|g| g.triples.iter().map(move |t| (&g.name, t)))
    }

    /// Conjunctive match over the union of the scoped graphs.
    ///
    /// Bindings are deduplicated and returned in canonical order.
    pub fn match_patterns<'a>(
        &self,
        scope: impl IntoIterator<Item = &'a Iri>,
        patterns: &[TriplePattern],
    ) -> Result<Vec<Binding>, RdfError> {
        if patterns.is_empty() {
            return Err(RdfError::EmptyPatterns);
        }
        let union: BTreeSet<&Triple> =
            scope.into_iter().filter_map(|name| self.graphs.get(name)).flat_map(|g| g.triples.iter()).collect();

        let mut frontier = vec![Binding::new()];
        for pattern in patterns {
            let mut next = Vec::new();
            for binding in &frontier {
                // Bound subject narrows the scan to one subject block.
                let bound_subject = match &pattern.subject {
                    Term::Iri(iri) => Some(iri.clone()),
                    Term::Variable(v) => binding.get(v).and_then(Term::as_iri).cloned(),
                    Term::Literal(_) => continue,
                };
                match bound_subject {
                    Some(subject) => {
                        for t in union.iter().filter(|t| t.subject == subject) {
                            next.extend(pattern.unify(t, binding));
                        }
                    }
                    None => {
                        for t in &union {
                            next.extend(pattern.unify(t, binding));
                        }
                    }
                }
            }
            if next.is_empty() {
                return Ok(Vec::new());
            }
            frontier = next;
        }
        let unique: BTreeSet<Binding> = frontier.into_iter().collect();
        Ok(unique.into_iter().collect())
    }
}
