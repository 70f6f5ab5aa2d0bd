//! Knowledge-base snapshots: one Turtle document with a `# GRAPH <iri>`
//! marker line in front of each named graph's triples.

use thiserror::Error;

use crate::rdf::{Dataset, Iri};
use crate::turtle::{self, ParseDiagnostic, PrefixMap};

const MARKER: &str = "# GRAPH <";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("graph {graph}: {source}")]
    Parse { graph: String, source: ParseDiagnostic },
    #[error("line {line}: bad graph marker")]
    Marker { line: usize },
}

pub fn write_snapshot(dataset: &Dataset, prefixes: &PrefixMap) -> String {
    let mut out = String::new();
    for (label, ns) in prefixes.iter() {
        out.push_str(&format!("@prefix {label}: <{}> .\n", ns.as_str()));
    }
    for graph in dataset.graphs() {
        if graph.is_empty() {
            continue;
        }
        out.push('\n');
        out.push_str(&format!("{MARKER}{}>\n", graph.name().as_str()));
        out.push_str(&turtle::serialize_statements(graph.triples(), prefixes));
    }
    out
}

pub fn read_snapshot(text: &str) -> Result<Dataset, SnapshotError> {
    let mut header = String::new();
    let mut sections: Vec<(Iri, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix(MARKER) {
            let name =
                rest.strip_suffix('>').and_then(|n| Iri::new(n).ok()).ok_or(SnapshotError::Marker { line: i + 1 })?;
            sections.push((name, String::new()));
            continue;
        }
        let target = match sections.last_mut() {
            Some((_, body)) => body,
            None => &mut header,
        };
        target.push_str(line);
        target.push('\n');
    }
    let prefixes =
        turtle::parse(&header).map_err(|source| SnapshotError::Parse { graph: "(header)".into(), source })?.prefixes;
    let mut dataset = Dataset::new();
    for (name, body) in sections {
        let doc = turtle::parse_with(&body, prefixes.clone())
            .map_err(|source| SnapshotError::Parse { graph: name.as_str().to_string(), source })?;
        for t in doc.triples {
            dataset.insert(&name, t);
        }
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::{Literal, Triple};

    #[test]
    fn round_trip() {
        let mut d = Dataset::new();
        let g1 = Iri::new("http://example.org/kb#kb").unwrap();
        let g2 = Iri::new("http://example.org/agents/a1#profile").unwrap();
        let s = Iri::new("http://example.org/kb#cell1").unwrap();
        let p = Iri::new("http://example.org/kb#latencyMs").unwrap();
        d.insert(&g1, Triple::from_parts(s.clone(), p.clone(), Literal::plain("42")).unwrap());
        d.insert(&g2, Triple::from_parts(s.clone(), p, s).unwrap());
        let mut prefixes = PrefixMap::new();
        prefixes.insert("ex", Iri::new("http://example.org/kb#").unwrap());
        let text = write_snapshot(&d, &prefixes);
        assert_eq!(read_snapshot(&text).unwrap(), d);
    }

    #[test]
    fn bad_marker() {
        assert!(matches!(read_snapshot("# GRAPH <nope\n"), Err(SnapshotError::Marker { line: 1 })));
    }
}
