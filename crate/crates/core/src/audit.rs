//! Append-only audit log: one tab-separated line per decision.
//!
//! Fields, in order: timestamp, agent, session id, action, target graph,
//! first pattern, outcome, reason code, fired rule. Tabs, newlines and
//! backslashes inside a field are backslash-escaped.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::rdf::TriplePattern;
use crate::turtle::Canonical;

pub const FIELD_COUNT: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub timestamp: String,
    pub agent: String,
    pub session: String,
    pub action: String,
    pub target_graph: String,
    pub pattern: String,
    pub outcome: String,
    pub reason: String,
    pub fired_rule: String,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Canonical single-line text of a pattern, absolute IRIs only.
pub fn pattern_text(pattern: &TriplePattern) -> String {
    let [s, p, o] = pattern.terms();
    format!("{} {} {}", Canonical(s), Canonical(p), Canonical(o))
}

fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(field: &str) -> Result<String, String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

impl AuditRecord {
    fn fields(&self) -> [&str; FIELD_COUNT] {
        [
            &self.timestamp,
            &self.agent,
            &self.session,
            &self.action,
            &self.target_graph,
            &self.pattern,
            &self.outcome,
            &self.reason,
            &self.fired_rule,
        ]
    }

    pub fn to_line(&self) -> String {
        self.fields().map(escape).join("\t")
    }

    pub fn parse_line(text: &str, line: usize) -> Result<Self, AuditError> {
        let raw: Vec<&str> = text.split('\t').collect();
        if raw.len() != FIELD_COUNT {
            return Err(AuditError::Malformed {
                line,
                message: format!("expected {FIELD_COUNT} fields, found {}", raw.len()),
            });
        }
        let mut f = Vec::with_capacity(FIELD_COUNT);
        for (i, r) in raw.iter().enumerate() {
            f.push(unescape(r).map_err(|m| AuditError::Malformed { line, message: format!("field {}: {m}", i + 1) })?);
        }
        let mut it = f.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(Self {
            timestamp: next(),
            agent: next(),
            session: next(),
            action: next(),
            target_graph: next(),
            pattern: next(),
            outcome: next(),
            reason: next(),
            fired_rule: next(),
        })
    }
}

pub trait AuditSink: Send {
    fn append(&mut self, record: &AuditRecord) -> io::Result<()>;

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Shared in-memory log, cloneable so tests can inspect what a server wrote.
#[derive(Debug, Clone, Default)]
pub struct MemoryAudit {
    records: Arc<Mutex<Vec<AuditRecord>>>,
}

impl MemoryAudit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().expect("audit lock").clone()
    }

    pub fn to_text(&self) -> String {
        self.records().iter().map(|r| r.to_line() + "\n").collect()
    }
}

impl AuditSink for MemoryAudit {
    fn append(&mut self, record: &AuditRecord) -> io::Result<()> {
        self.records.lock().expect("audit lock").push(record.clone());
        Ok(())
    }
}

pub struct FileAudit {
    out: BufWriter<File>,
}

impl FileAudit {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: BufWriter::new(file) })
    }
}

impl AuditSink for FileAudit {
    fn append(&mut self, record: &AuditRecord) -> io::Result<()> {
        writeln!(self.out, "{}", record.to_line())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

impl Drop for FileAudit {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

pub fn write_audit(out: &mut impl Write, record: &AuditRecord) -> io::Result<()> {
    writeln!(out, "{}", record.to_line())
}

pub fn parse_audit(text: &str) -> Result<Vec<AuditRecord>, AuditError> {
    text.lines().enumerate().filter(|(_, l)| !l.is_empty()).map(|(i, l)| AuditRecord::parse_line(l, i + 1)).collect()
}

pub fn read_audit(path: &Path) -> Result<Vec<AuditRecord>, AuditError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.is_empty() {
            out.push(AuditRecord::parse_line(&line, i + 1)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(reason: &str) -> AuditRecord {
        AuditRecord {
            timestamp: "2025-01-01T00:00:00Z".into(),
            agent: "http://example.org/agents/g1".into(),
            session: "s-1".into(),
            action: "Assert".into(),
            target_graph: "http://example.org/kb#kb".into(),
            pattern: "<http://example.org/kb#gnb2> <http://example.org/kb#latencyMs> \"9\"".into(),
            outcome: "DENY".into(),
            reason: reason.into(),
            fired_rule: "authz:resource-scope".into(),
        }
    }

    #[test]
    fn one_line_nine_fields() {
        let line = record("RESOURCE_NOT_IN_SCOPE").to_line();
        assert!(!line.contains('\n'));
        assert_eq!(line.split('\t').count(), FIELD_COUNT);
        assert!(line.contains("\tRESOURCE_NOT_IN_SCOPE\t"));
    }

    #[test]
    fn escapes_round_trip() {
        let mut r = record("OK");
        r.pattern = "tab\there\nnewline \\ back".into();
        assert_eq!(AuditRecord::parse_line(&r.to_line(), 1).unwrap(), r);
    }

    #[test]
    fn malformed_line_is_positioned() {
        let text = format!("{}\nonly\ttwo\n", record("OK").to_line());
        match parse_audit(&text) {
            Err(AuditError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_sink_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.audit.tsv");
        {
            let mut sink = FileAudit::open(&path).unwrap();
            sink.append(&record("OK")).unwrap();
            sink.append(&record("NO_PROFILE")).unwrap();
        }
        let back = read_audit(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].reason, "NO_PROFILE");
    }
}
