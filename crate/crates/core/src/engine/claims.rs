use std::collections::BTreeSet;

use crate::ontology::Vocabulary;
use crate::rdf::{Iri, Literal, Term, Triple};

/// Builder for the triples an agent submits when it registers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationClaims {
    pub agent: Iri,
    pub identity: Option<Iri>,
    pub function: Option<Iri>,
    pub access_to: Vec<Iri>,
    pub predicates: Vec<Iri>,
    pub graphs: Vec<Iri>,
    pub values: Vec<Literal>,
    pub attributes: Vec<(Iri, Term)>,
}

impl RegistrationClaims {
    pub fn new(agent: Iri) -> Self {
        Self {
            agent,
            identity: None,
            function: None,
            access_to: Vec::new(),
            predicates: Vec::new(),
            graphs: Vec::new(),
            values: Vec::new(),
            attributes: Vec::new(),
        }
    }

    pub fn identity(mut self, handler: Iri) -> Self {
        self.identity = Some(handler);
        self
    }

    pub fn function(mut self, function: Iri) -> Self {
        self.function = Some(function);
        self
    }

    pub fn access(mut self, resources: impl IntoIterator<Item = Iri>) -> Self {
        self.access_to.extend(resources);
        self
    }

    pub fn predicates(mut self, predicates: impl IntoIterator<Item = Iri>) -> Self {
        self.predicates.extend(predicates);
        self
    }

    pub fn graphs(mut self, graphs: impl IntoIterator<Item = Iri>) -> Self {
        self.graphs.extend(graphs);
        self
    }

    pub fn values(mut self, values: impl IntoIterator<Item = Literal>) -> Self {
        self.values.extend(values);
        self
    }

    pub fn attribute(mut self, predicate: Iri, value: impl Into<Term>) -> Self {
        self.attributes.push((predicate, value.into()));
        self
    }

    pub fn to_triples(&self, vocab: &Vocabulary) -> BTreeSet<Triple> {
        let t = |p: &Iri, o: Term| Triple::from_parts(self.agent.clone(), p.clone(), o).expect("object is ground");
        let mut out = BTreeSet::new();
        if let Some(i) = &self.identity {
            out.insert(t(&vocab.has_identity, i.clone().into()));
        }
        if let Some(f) = &self.function {
            out.insert(t(&vocab.has_function, f.clone().into()));
        }
        out.extend(self.access_to.iter().map(|r| t(&vocab.access_to, r.clone().into())));
        out.extend(self.predicates.iter().map(|p| t(&vocab.authorized_predicates, p.clone().into())));
        out.extend(self.graphs.iter().map(|g| t(&vocab.confined_to_graph, g.clone().into())));
        out.extend(self.values.iter().map(|v| t(&vocab.allowed_permission_values, v.clone().into())));
        out.extend(self.attributes.iter().map(|(p, o)| t(p, o.clone())));
        out
    }
}
