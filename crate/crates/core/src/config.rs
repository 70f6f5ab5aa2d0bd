//! Server configuration, written in the same Turtle subset as everything else.
//!
//! ```text
//! @prefix cfg: <http://example.org/kbauthz/config#> .
//! cfg:server cfg:ontology "ontology.ttl" ;
//!     cfg:trustAnchor "ca/anchor.txt" ;
//!     cfg:listen "127.0.0.1:7878" ;
//!     cfg:mode "hybrid" .
//! ```
//!
//! Relative paths resolve against the config file's directory. Unknown keys
//! are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{load_exceptions, load_rules, AuthorizationMode, Engine, EngineConfig, ExceptionError, RuleError};
use crate::ontology::{load_ontology, Ontology, OntologyError};
use crate::rdf::{Iri, Term};
use crate::session::{CredentialError, TrustAnchor, TrustStore};
use crate::turtle::{self, Canonical, ParseDiagnostic};

pub const CONFIG_NS: &str = "http://example.org/kbauthz/config#";
pub const ENV_CONFIG: &str = "KBAUTHZ_CONFIG";
pub const ENV_LISTEN: &str = "KBAUTHZ_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:7878";

const KEYS: [&str; 9] =
    ["ontology", "exceptions", "rules", "trustAnchor", "audit", "wildcard", "listen", "strictTermination", "mode"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseDiagnostic },
    #[error("unknown configuration key {0}")]
    UnknownKey(String),
    #[error("configuration key {0} is given more than once")]
    Duplicate(String),
    #[error("configuration describes more than one subject")]
    SeveralSubjects,
    #[error("bad value for {key}: {value}")]
    BadValue { key: &'static str, value: String },
    #[error("{key} file {path} does not exist")]
    MissingFile { key: &'static str, path: PathBuf },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("ontology: {0}")]
    Ontology(#[from] OntologyError),
    #[error("exceptions: {0}")]
    Exceptions(#[from] ExceptionError),
    #[error("rules: {0}")]
    Rules(#[from] RuleError),
    #[error("trust anchor: {0}")]
    Anchor(#[from] CredentialError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    /// `None` uses the built-in ontology.
    pub ontology: Option<PathBuf>,
    pub exceptions: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub trust_anchor: Option<PathBuf>,
    pub audit: Option<PathBuf>,
    pub wildcard: Iri,
    pub listen: String,
    pub strict_termination: bool,
    pub mode: AuthorizationMode,
}

impl Default for Config {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            ontology: None,
            exceptions: None,
            rules: None,
            trust_anchor: None,
            audit: None,
            wildcard: engine.wildcard,
            listen: DEFAULT_LISTEN.to_string(),
            strict_termination: engine.strict_termination,
            mode: engine.mode,
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

fn literal<'a>(key: &'static str, term: &'a Term) -> Result<&'a str, ConfigError> {
    term.as_literal()
        .map(|l| l.lexical())
        .ok_or_else(|| ConfigError::BadValue { key, value: Canonical(term).to_string() })
}

fn parse_bool(key: &'static str, s: &str) -> Result<bool, ConfigError> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::BadValue { key, value: other.to_string() }),
    }
}

impl Config {
    pub fn parse(text: &str, base: &Path, source: &str) -> Result<Self, ConfigError> {
        let doc = turtle::parse(text).map_err(|e| ConfigError::Parse { path: source.to_string(), source: e })?;
        let mut subjects = doc.triples.iter().map(|t| t.subject()).collect::<Vec<_>>();
        subjects.dedup();
        if subjects.len() > 1 {
            return Err(ConfigError::SeveralSubjects);
        }
        let mut cfg = Config::default();
        let mut seen = Vec::new();
        for t in &doc.triples {
            let key = t
                .predicate()
                .as_str()
                .strip_prefix(CONFIG_NS)
                .and_then(|k| KEYS.iter().find(|known| **known == k))
                .ok_or_else(|| ConfigError::UnknownKey(t.predicate().as_str().to_string()))?;
            if seen.contains(key) {
                return Err(ConfigError::Duplicate((*key).to_string()));
            }
            seen.push(key);
            let o = t.object();
            let path = |k: &'static str| literal(k, o).map(|p| Some(base.join(p)));
            match *key {
                "ontology" => cfg.ontology = path("ontology")?,
                "exceptions" => cfg.exceptions = path("exceptions")?,
                "rules" => cfg.rules = path("rules")?,
                "trustAnchor" => cfg.trust_anchor = path("trustAnchor")?,
                "audit" => cfg.audit = path("audit")?,
                "wildcard" => {
                    cfg.wildcard = o
                        .as_iri()
                        .cloned()
                        .ok_or_else(|| ConfigError::BadValue { key: "wildcard", value: Canonical(o).to_string() })?
                }
                "listen" => cfg.listen = literal("listen", o)?.to_string(),
                "strictTermination" => {
                    cfg.strict_termination = parse_bool("strictTermination", literal("strictTermination", o)?)?
                }
                "mode" => {
                    let m = literal("mode", o)?;
                    cfg.mode = AuthorizationMode::parse(m)
                        .ok_or_else(|| ConfigError::BadValue { key: "mode", value: m.into() })?
                }
                _ => unreachable!("key list is exhaustive"),
            }
        }
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    /// Applies environment overrides; `lookup` is usually `std::env::var`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(listen) = lookup(ENV_LISTEN) {
            self.listen = listen;
        }
    }

    fn check_paths(&self) -> Result<(), ConfigError> {
        let files = [
            ("ontology", &self.ontology),
            ("exceptions", &self.exceptions),
            ("rules", &self.rules),
            ("trustAnchor", &self.trust_anchor),
        ];
        for (key, path) in files {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(ConfigError::MissingFile { key, path: p.clone() });
                }
            }
        }
        if let Some(audit) = &self.audit {
            let dir = audit.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(ConfigError::MissingFile { key: "audit", path: dir.to_path_buf() });
            }
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            wildcard: self.wildcard.clone(),
            strict_termination: self.strict_termination,
            mode: self.mode,
            ..EngineConfig::default()
        }
    }

    /// Loads ontology, exceptions and rules, and applies the rules once.
    pub fn build_engine(&self) -> Result<Engine, ConfigError> {
        let ontology = match &self.ontology {
            Some(p) => load_ontology(&read(p)?)?,
            None => Ontology::default_ontology(),
        };
        let exceptions_text = match &self.exceptions {
            Some(p) => read(p)?,
            None => crate::DEFAULT_EXCEPTIONS.to_string(),
        };
        let exceptions = load_exceptions(&exceptions_text, &ontology.vocabulary)?;
        let rules = match &self.rules {
            Some(p) => load_rules(&read(p)?, &ontology.vocabulary)?,
            None => Vec::new(),
        };
        let mut engine = Engine::new(ontology, exceptions, self.engine_config());
        engine.apply_rules(&rules)?;
        Ok(engine)
    }

    pub fn trust_store(&self) -> Result<TrustStore, ConfigError> {
        let mut store = TrustStore::new();
        if let Some(p) = &self.trust_anchor {
            store.add(TrustAnchor::parse(&read(p)?)?)?;
        }
        Ok(store)
    }
}
