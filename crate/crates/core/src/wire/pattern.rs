//! Text bodies carried by frames: pattern text for queries, an optional
//! `GRAPH <iri>` header line, and query result bindings.

use thiserror::Error;

use crate::rdf::{Binding, Iri, RdfError, Term, TriplePattern};
use crate::turtle::{parse_terms, Canonical, ParseDiagnostic, PrefixMap};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BodyError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

fn syntax(line: usize, message: impl Into<String>) -> BodyError {
    BodyError::Syntax { line, message: message.into() }
}

fn from_diag(line: usize, d: ParseDiagnostic) -> BodyError {
    syntax(line, format!("column {}: {}", d.column, d.message))
}

fn from_rdf(line: usize, e: RdfError) -> BodyError {
    syntax(line, e.to_string())
}

/// Splits off a leading `GRAPH <iri>` line, if present.
pub fn split_graph_line(body: &str) -> Result<(Option<Iri>, &str), BodyError> {
    let (first, rest) = body.split_once('\n').unwrap_or((body, ""));
    let Some(graph) = first.trim_end().strip_prefix("GRAPH ") else {
        return Ok((None, body));
    };
    let iri = graph
        .trim()
        .strip_prefix('<')
        .and_then(|g| g.strip_suffix('>'))
        .ok_or_else(|| syntax(1, "GRAPH expects an absolute <iri>"))?;
    Ok((Some(Iri::new(iri).map_err(|e| from_rdf(1, e))?), rest))
}

/// One triple pattern per line, optionally preceded by `GRAPH <iri>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternText {
    pub graph: Option<Iri>,
    pub patterns: Vec<TriplePattern>,
}

impl PatternText {
    pub fn new(graph: Option<Iri>, patterns: Vec<TriplePattern>) -> Self {
        Self { graph, patterns }
    }

    pub fn parse(text: &str, prefixes: &PrefixMap) -> Result<Self, BodyError> {
        let (graph, rest) = split_graph_line(text)?;
        let offset = usize::from(graph.is_some());
        let mut patterns = Vec::new();
        for (i, raw) in rest.lines().enumerate() {
            let line = i + 1 + offset;
            let mut content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            if let Some(stripped) = content.strip_suffix(" .").or_else(|| content.strip_suffix("\t.")) {
                content = stripped.trim_end();
            }
            let terms = parse_terms(content, prefixes, true).map_err(|d| from_diag(line, d))?;
            let [s, p, o]: [Term; 3] = terms
                .try_into()
                .map_err(|t: Vec<Term>| syntax(line, format!("expected 3 terms, found {}", t.len())))?;
            patterns.push(TriplePattern::new(s, p, o).map_err(|e| from_rdf(line, e))?);
        }
        if patterns.is_empty() {
            return Err(syntax(1 + offset, "no patterns"));
        }
        Ok(Self { graph, patterns })
    }

    /// Canonical form with absolute IRIs.
    pub fn format(&self) -> String {
        let mut out = String::new();
        if let Some(g) = &self.graph {
            out.push_str(&format!("GRAPH <{}>\n", g.as_str()));
        }
        for p in &self.patterns {
            let [s, pr, o] = p.terms();
            out.push_str(&format!("{} {} {}\n", Canonical(s), Canonical(pr), Canonical(o)));
        }
        out
    }
}

/// One binding per line, `name=term` pairs separated by tabs.
pub fn format_bindings(bindings: &[Binding]) -> String {
    let mut out = String::new();
    for b in bindings {
        let fields: Vec<String> = b.iter().map(|(k, v)| format!("{k}={}", Canonical(v))).collect();
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

pub fn parse_bindings(text: &str) -> Result<Vec<Binding>, BodyError> {
    let empty = PrefixMap::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut b = Binding::new();
        for field in line.split('\t').filter(|f| !f.is_empty()) {
            let (name, value) = field.split_once('=').ok_or_else(|| syntax(i + 1, "expected name=term"))?;
            let terms = parse_terms(value, &empty, false).map_err(|d| from_diag(i + 1, d))?;
            let [term]: [Term; 1] = terms.try_into().map_err(|_| syntax(i + 1, "expected one term"))?;
            b.insert(name.to_string(), term);
        }
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::Literal;

    fn prefixes() -> PrefixMap {
        let mut p = PrefixMap::new();
        p.insert("ex", Iri::new("http://example.org/kb#").unwrap());
        p
    }

    #[test]
    fn parses_graph_line_and_patterns() {
        let text = "GRAPH <http://example.org/kb#kb>\nex:cell1 ex:latencyMs ?v .\n?a ex:proposedFor ex:intent1\n";
        let p = PatternText::parse(text, &prefixes()).unwrap();
        assert_eq!(p.graph.as_ref().unwrap().as_str(), "http://example.org/kb#kb");
        assert_eq!(p.patterns.len(), 2);
        assert_eq!(PatternText::parse(&p.format(), &PrefixMap::new()).unwrap(), p);
    }

    #[test]
    fn wrong_arity_is_positioned() {
        let err = PatternText::parse("ex:a ex:b\n", &prefixes()).unwrap_err();
        assert_eq!(err, BodyError::Syntax { line: 1, message: "expected 3 terms, found 2".into() });
    }

    #[test]
    fn literal_with_spaces_and_dot() {
        let p = PatternText::parse("ex:a ex:p \"x .\" .", &prefixes()).unwrap();
        assert_eq!(p.patterns[0].object(), &Term::Literal(Literal::plain("x .")));
    }

    #[test]
    fn bindings_round_trip() {
        let mut b = Binding::new();
        b.insert("a".into(), Term::iri("http://example.org/kb#action1").unwrap());
        b.insert("v".into(), Term::Literal(Literal::plain("tab\there")));
        let text = format_bindings(&[b.clone(), Binding::new()]);
        assert_eq!(parse_bindings(&text).unwrap(), vec![b, Binding::new()]);
    }
}
