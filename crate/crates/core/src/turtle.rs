//! Parser and canonical serializer for the Turtle subset used throughout the crate.
//!
//! Supported: `@prefix`, `<absolute-iri>`, prefixed names, the `a` keyword,
//! plain, typed and language-tagged string literals, `;` and `,` lists, `.`
//! terminators and `#` comments. Blank nodes, collections, `@base`, numeric
//! and boolean shorthands and long strings are rejected with a diagnostic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::rdf::{is_valid_language, Iri, Literal, Term, Triple};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrefixMap {
    entries: BTreeMap<String, Iri>,
}

impl PrefixMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `label`, replacing any earlier namespace bound to it.
    pub fn insert(&mut self, label: impl Into<String>, namespace: Iri) {
        self.entries.insert(label.into(), namespace);
    }

    pub fn get(&self, label: &str) -> Option<&Iri> {
        self.entries.get(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Iri)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: &PrefixMap) {
        for (k, v) in other.iter() {
            self.insert(k, v.clone());
        }
    }

    /// Expands `label:local` to an absolute IRI.
    pub fn expand(&self, label: &str, local: &str) -> Option<Result<Iri, crate::rdf::RdfError>> {
        self.entries.get(label).map(|ns| Iri::new(format!("{}{}", ns.as_str(), local)))
    }

    /// Compact form for `iri`, using the longest matching namespace.
    fn compact(&self, iri: &Iri) -> Option<String> {
        let mut best: Option<(&str, &str)> = None;
        for (label, ns) in &self.entries {
            let Some(local) = iri.as_str().strip_prefix(ns.as_str()) else {
                continue;
            };
            if !is_safe_local(local) {
                continue;
            }
            if best.is_none_or(|(_, b)| local.len() < b.len()) {
                best = Some((label, local));
            }
        }
        best.map(|(label, local)| format!("{label}:{local}"))
    }
}

fn is_safe_local(local: &str) -> bool {
    let mut chars = local.chars();
    match chars.next() {
        None => true,
        Some(c) if c.is_ascii_alphanumeric() || c == '_' => {
            chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        }
        Some(_) => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    pub triples: BTreeSet<Triple>,
    pub prefixes: PrefixMap,
}

pub fn parse(text: &str) -> Result<Document, ParseDiagnostic> {
    parse_with(text, PrefixMap::new())
}

/// Parses with `prefixes` pre-declared. Declarations in the text take precedence.
pub fn parse_with(text: &str, prefixes: PrefixMap) -> Result<Document, ParseDiagnostic> {
    let tokens = Lexer::new(text, false).tokenize()?;
    let mut parser = Parser { tokens, pos: 0, prefixes, triples: BTreeSet::new() };
    parser.document()?;
    Ok(Document { triples: parser.triples, prefixes: parser.prefixes })
}

/// Byte-level entry point; invalid UTF-8 is a diagnostic rather than a panic.
pub fn parse_bytes(bytes: &[u8]) -> Result<Document, ParseDiagnostic> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(text),
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let line = 1 + prefix.iter().filter(|b| **b == b'\n').count();
            let column =
                1 + String::from_utf8_lossy(&prefix[prefix.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1)..])
                    .chars()
                    .count();
            Err(ParseDiagnostic { line, column, message: "invalid UTF-8".into() })
        }
    }
}

/// Parses a whitespace-separated run of terms, as used by pattern text.
/// Variables (`?name`) are accepted only when `allow_variables` is set.
pub fn parse_terms(text: &str, prefixes: &PrefixMap, allow_variables: bool) -> Result<Vec<Term>, ParseDiagnostic> {
    let tokens = Lexer::new(text, allow_variables).tokenize()?;
    let mut parser = Parser { tokens, pos: 0, prefixes: prefixes.clone(), triples: BTreeSet::new() };
    let mut out = Vec::new();
    while !parser.at_end() {
        out.push(parser.term(true)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    PName(String, String),
    A,
    PrefixKw,
    Str(String),
    Caret2,
    Lang(String),
    Dot,
    Semi,
    Comma,
    Var(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
    allow_variables: bool,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str, allow_variables: bool) -> Self {
        Self { chars: text.chars().peekable(), line: 1, column: 1, allow_variables }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn err(line: usize, column: usize, message: impl Into<String>) -> ParseDiagnostic {
        ParseDiagnostic { line, column, message: message.into() }
    }

    fn tokenize(mut self) -> Result<Vec<Spanned>, ParseDiagnostic> {
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            }
            let (line, column) = (self.line, self.column);
            let Some(c) = self.peek() else {
                return Ok(out);
            };
            let tok = match c {
                '#' => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                    continue;
                }
                '<' => self.iri(line, column)?,
                '"' => self.string(line, column)?,
                '\'' => return Err(Self::err(line, column, "single-quoted strings are not supported")),
                '.' => {
                    self.bump();
                    Tok::Dot
                }
                ';' => {
                    self.bump();
                    Tok::Semi
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '^' => {
                    self.bump();
                    if self.bump() != Some('^') {
                        return Err(Self::err(line, column, "expected '^^'"));
                    }
                    Tok::Caret2
                }
                '@' => self.at_keyword(line, column)?,
                '[' | ']' => return Err(Self::err(line, column, "blank node syntax '[ ]' is not supported")),
                '(' | ')' => return Err(Self::err(line, column, "collections '( )' are not supported")),
                '_' if self.starts_blank_label() => {
                    return Err(Self::err(line, column, "blank node labels '_:' are not supported"))
                }
                '?' | '$' if self.allow_variables => {
                    self.bump();
                    let name = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
                    if name.is_empty() {
                        return Err(Self::err(line, column, "empty variable name"));
                    }
                    Tok::Var(name)
                }
                '?' | '$' => return Err(Self::err(line, column, "variables are not allowed here")),
                c if c.is_ascii_alphanumeric() || c == '_' || c == ':' || c == '+' || c == '-' => {
                    self.word(line, column)?
                }
                other => return Err(Self::err(line, column, format!("unexpected character {other:?}"))),
            };
            out.push(Spanned { tok, line, column });
        }
    }

    fn starts_blank_label(&self) -> bool {
        let mut look = self.chars.clone();
        look.next() == Some('_') && look.next() == Some(':')
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn iri(&mut self, line: usize, column: usize) -> Result<Tok, ParseDiagnostic> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('>') => break,
                Some(c) if c == '\n' || c == '<' => return Err(Self::err(line, column, "unterminated IRI")),
                Some(c) => s.push(c),
                None => return Err(Self::err(line, column, "unterminated IRI")),
            }
        }
        if Iri::new(s.as_str()).is_err() {
            return Err(Self::err(line, column, format!("relative or malformed IRI <{s}>")));
        }
        Ok(Tok::Iri(s))
    }

    fn string(&mut self, line: usize, column: usize) -> Result<Tok, ParseDiagnostic> {
        self.bump();
        let mut look = self.chars.clone();
        if look.next() == Some('"') && look.next() == Some('"') {
            return Err(Self::err(line, column, "long (triple-quoted) strings are not supported"));
        }
        let mut s = String::new();
        loop {
            let (el, ec) = (self.line, self.column);
            match self.bump() {
                Some('"') => return Ok(Tok::Str(s)),
                Some('\\') => {
                    let c = match self.bump() {
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        Some('b') => '\u{8}',
                        Some('f') => '\u{c}',
                        Some('u') => self.unicode_escape(4, el, ec)?,
                        Some('U') => self.unicode_escape(8, el, ec)?,
                        _ => return Err(Self::err(el, ec, "invalid escape sequence")),
                    };
                    s.push(c);
                }
                Some('\n') | Some('\r') | None => return Err(Self::err(line, column, "unterminated string literal")),
                Some(c) => s.push(c),
            }
        }
    }

    fn unicode_escape(&mut self, digits: usize, line: usize, column: usize) -> Result<char, ParseDiagnostic> {
        let mut hex = String::new();
        for _ in 0..digits {
            match self.bump() {
                Some(c) if c.is_ascii_hexdigit() => hex.push(c),
                _ => return Err(Self::err(line, column, "invalid unicode escape")),
            }
        }
        u32::from_str_radix(&hex, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| Self::err(line, column, "invalid unicode escape"))
    }

    fn at_keyword(&mut self, line: usize, column: usize) -> Result<Tok, ParseDiagnostic> {
        self.bump();
        let word = self.take_while(|c| c.is_ascii_alphanumeric() || c == '-');
        match word.as_str() {
            "prefix" => Ok(Tok::PrefixKw),
            "base" => Err(Self::err(line, column, "@base is not supported")),
            "" => Err(Self::err(line, column, "empty language tag")),
            tag if is_valid_language(tag) => Ok(Tok::Lang(word)),
            _ => Err(Self::err(line, column, format!("malformed language tag @{word}"))),
        }
    }

    fn word(&mut self, line: usize, column: usize) -> Result<Tok, ParseDiagnostic> {
        let prefix = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '+' || c == '.');
        if self.peek() != Some(':') {
            return match prefix.as_str() {
                "a" => Ok(Tok::A),
                "true" | "false" => Err(Self::err(line, column, "boolean literals are not supported; quote the value")),
                p if p.starts_with(|c: char| c.is_ascii_digit() || c == '+' || c == '-' || c == '.') => {
                    Err(Self::err(line, column, "numeric literals are not supported; quote the value"))
                }
                "PREFIX" | "BASE" => Err(Self::err(line, column, "SPARQL-style directives are not supported")),
                _ => Err(Self::err(line, column, format!("unexpected token {prefix:?}"))),
            };
        }
        let label_ok = prefix.is_empty()
            || (prefix.starts_with(|c: char| c.is_ascii_alphabetic())
                && prefix.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'));
        if !label_ok {
            return Err(Self::err(line, column, format!("malformed prefix label {prefix:?}")));
        }
        self.bump();
        let mut local = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                local.push(c);
                self.bump();
            } else if c == '.' {
                // A dot belongs to the name only when followed by another name character.
                let mut look = self.chars.clone();
                look.next();
                if look.next().is_some_and(|n| n.is_ascii_alphanumeric() || n == '_' || n == '-') {
                    local.push(c);
                    self.bump();
                } else {
                    break;
                }
            } else {
                break;
            }
        }
        if local.starts_with(['-', '.']) {
            return Err(Self::err(line, column, format!("malformed local name {local:?}")));
        }
        Ok(Tok::PName(prefix, local))
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    prefixes: PrefixMap,
    triples: BTreeSet<Triple>,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        match self.tokens.get(self.pos).or(self.tokens.last()) {
            Some(s) => (s.line, s.column),
            None => (1, 1),
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseDiagnostic {
        let (line, column) = self.here();
        ParseDiagnostic { line, column, message: message.into() }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseDiagnostic> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else if self.at_end() {
            Err(self.err(format!("unexpected end of input, expected {what}")))
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn document(&mut self) -> Result<(), ParseDiagnostic> {
        while !self.at_end() {
            if self.peek() == Some(&Tok::PrefixKw) {
                self.prefix_decl()?;
            } else {
                self.statement()?;
            }
        }
        Ok(())
    }

    fn prefix_decl(&mut self) -> Result<(), ParseDiagnostic> {
        self.pos += 1;
        let label = match self.next() {
            Some(Tok::PName(label, local)) if local.is_empty() => label,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected prefix label ending in ':'"));
            }
        };
        let ns = match self.next() {
            Some(Tok::Iri(iri)) => iri,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected namespace IRI"));
            }
        };
        self.expect(Tok::Dot, "'.' after @prefix")?;
        // Lexer already validated the IRI.
        self.prefixes.insert(label, Iri::new(ns).expect("validated by lexer"));
        Ok(())
    }

    fn statement(&mut self) -> Result<(), ParseDiagnostic> {
        let subject_at = self.here();
        let subject = self.term(false)?;
        let Term::Iri(subject) = subject else {
            return Err(ParseDiagnostic {
                line: subject_at.0,
                column: subject_at.1,
                message: "subject must be an IRI".into(),
            });
        };
        loop {
            let predicate = self.verb()?;
            loop {
                let object = self.term(false)?;
                let triple = Triple::from_parts(subject.clone(), predicate.clone(), object)
                    .map_err(|e| self.err(e.to_string()))?;
                self.triples.insert(triple);
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            if self.peek() == Some(&Tok::Semi) {
                while self.peek() == Some(&Tok::Semi) {
                    self.pos += 1;
                }
                if self.peek() == Some(&Tok::Dot) {
                    break;
                }
            } else {
                break;
            }
        }
        self.expect(Tok::Dot, "'.' to end the statement")
    }

    fn verb(&mut self) -> Result<Iri, ParseDiagnostic> {
        if self.peek() == Some(&Tok::A) {
            self.pos += 1;
            return Ok(Iri::new(RDF_TYPE).expect("constant IRI"));
        }
        match self.term(false)? {
            Term::Iri(iri) => Ok(iri),
            _ => {
                self.pos -= 1;
                Err(self.err("predicate must be an IRI"))
            }
        }
    }

    fn resolve(&self, label: &str, local: &str) -> Result<Iri, ParseDiagnostic> {
        match self.prefixes.expand(label, local) {
            Some(Ok(iri)) => Ok(iri),
            Some(Err(e)) => Err(self.err(e.to_string())),
            None => Err(self.err(format!("unknown prefix '{label}:'"))),
        }
    }

    fn term(&mut self, allow_a: bool) -> Result<Term, ParseDiagnostic> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.err("unexpected end of input, expected a term"));
        };
        let term = match tok {
            Tok::Iri(s) => Term::Iri(Iri::new(s).expect("validated by lexer")),
            Tok::PName(label, local) => Term::Iri(self.resolve(&label, &local)?),
            Tok::A if allow_a => Term::Iri(Iri::new(RDF_TYPE).expect("constant IRI")),
            Tok::Var(name) => Term::Variable(name),
            Tok::Str(lexical) => {
                self.pos += 1;
                return match self.peek().cloned() {
                    Some(Tok::Lang(tag)) => {
                        self.pos += 1;
                        Literal::lang(lexical, tag).map(Term::Literal).map_err(|e| self.err(e.to_string()))
                    }
                    Some(Tok::Caret2) => {
                        self.pos += 1;
                        let datatype = match self.next() {
                            Some(Tok::Iri(s)) => Iri::new(s).expect("validated by lexer"),
                            Some(Tok::PName(label, local)) => {
                                self.pos -= 1;
                                let iri = self.resolve(&label, &local)?;
                                self.pos += 1;
                                iri
                            }
                            _ => {
                                self.pos -= 1;
                                return Err(self.err("expected datatype IRI after '^^'"));
                            }
                        };
                        Ok(Term::Literal(Literal::typed(lexical, datatype)))
                    }
                    _ => Ok(Term::Literal(Literal::plain(lexical))),
                };
            }
            Tok::PrefixKw => return Err(self.err("@prefix is only allowed between statements")),
            Tok::Dot | Tok::Semi | Tok::Comma => return Err(self.err("expected a term")),
            Tok::A => return Err(self.err("'a' is only allowed as a predicate")),
            Tok::Caret2 | Tok::Lang(_) => return Err(self.err("datatype or language tag without a literal")),
        };
        self.pos += 1;
        Ok(term)
    }
}

/// Canonical Turtle: prefixes sorted by label, then subjects, predicates and
/// objects in sorted order, with `;` and `,` lists.
pub fn serialize<'a>(triples: impl IntoIterator<Item = &'a Triple>, prefixes: &PrefixMap) -> String {
    let body = serialize_statements(triples, prefixes);
    let mut out = String::new();
    for (label, ns) in prefixes.iter() {
        let _ = writeln!(out, "@prefix {label}: <{}> .", ns.as_str());
    }
    if !prefixes.is_empty() && !body.is_empty() {
        out.push('\n');
    }
    out.push_str(&body);
    out
}

/// The statement part of [`serialize`], without `@prefix` lines.
pub fn serialize_statements<'a>(triples: impl IntoIterator<Item = &'a Triple>, prefixes: &PrefixMap) -> String {
    let mut grouped: BTreeMap<&Iri, BTreeMap<&Iri, BTreeSet<&Term>>> = BTreeMap::new();
    for t in triples {
        grouped.entry(t.subject()).or_default().entry(t.predicate()).or_default().insert(t.object());
    }
    let mut out = String::new();
    for (subject, predicates) in grouped {
        out.push_str(&write_iri(subject, prefixes));
        let mut first = true;
        for (predicate, objects) in predicates {
            if first {
                out.push(' ');
                first = false;
            } else {
                out.push_str(" ;\n    ");
            }
            out.push_str(&write_iri(predicate, prefixes));
            out.push(' ');
            let rendered: Vec<String> = objects.into_iter().map(|o| write_term(o, prefixes)).collect();
            out.push_str(&rendered.join(", "));
        }
        out.push_str(" .\n");
    }
    out
}

pub fn write_iri(iri: &Iri, prefixes: &PrefixMap) -> String {
    prefixes.compact(iri).unwrap_or_else(|| format!("<{}>", iri.as_str()))
}

pub fn write_term(term: &Term, prefixes: &PrefixMap) -> String {
    match term {
        Term::Iri(iri) => write_iri(iri, prefixes),
        Term::Variable(name) => format!("?{name}"),
        Term::Literal(lit) => {
            let mut s = String::with_capacity(lit.lexical().len() + 2);
            s.push('"');
            escape_into(&mut s, lit.lexical());
            s.push('"');
            if let Some(lang) = lit.language() {
                s.push('@');
                s.push_str(lang);
            } else if let Some(dt) = lit.datatype() {
                s.push_str("^^");
                s.push_str(&write_iri(dt, prefixes));
            }
            s
        }
    }
}

fn escape_into(out: &mut String, lexical: &str) {
    for c in lexical.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

/// Display adaptor printing a term with absolute IRIs only.
pub struct Canonical<'a>(pub &'a Term);

impl fmt::Display for Canonical<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&write_term(self.0, &PrefixMap::new()))
    }
}
