use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use chrono::Utc;
use kbauthz_core::audit::{read_audit, AuditSink, FileAudit, MemoryAudit};
use kbauthz_core::clock::SystemClock;
use kbauthz_core::config::Config;
use kbauthz_core::engine::profile_graph_name;
use kbauthz_core::ontology::Ontology;
use kbauthz_core::session::{CertificateAuthority, SessionController, DEFAULT_AGENT_NAMESPACE};
use kbauthz_core::sim::{read_snapshot, run_scenario, RunOptions, ScenarioConfig};
use kbauthz_core::turtle;
use kbauthz_core::wire::{serve as serve_tcp, shared, Client, MessageType, Reply, TcpTransport};
use kbauthz_core::{AuthorizationMode, Dataset, Engine, Iri};
use rand::RngCore;

pub const KEY_FILE: &str = "ca.key";
pub const ANCHOR_FILE: &str = "anchor.txt";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Config(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(runtime)
}

fn valid_common_name(cn: &str) -> bool {
    !cn.is_empty() && cn.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

pub fn ca_init(dir: &Path, issuer: &str, seed: Option<String>, force: bool) -> Result<()> {
    let key_path = dir.join(KEY_FILE);
    if key_path.exists() && !force {
        return Err(CliError::Runtime(format!("{} already exists (use --force to replace it)", key_path.display())));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let seed = seed.unwrap_or_else(|| {
        let mut bytes = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut bytes);
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    });
    let ca = CertificateAuthority::from_seed(issuer, &seed);
    write(&key_path, &ca.key_text())?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let _ = fs::set_permissions(&key_path, fs::Permissions::from_mode(0o600));
    }
    let anchor = ca.anchor();
    let anchor_path = dir.join(ANCHOR_FILE);
    write(&anchor_path, &anchor.to_text())?;
    emit(&format!(
        "issuer: {}\nkeyId: {}\nkey: {}\nanchor: {}\n",
        anchor.issuer,
        anchor.key_id(),
        key_path.display(),
        anchor_path.display()
    ))
}

pub fn ca_issue(cn: &str, role: &str, ca_dir: &Path, days: u32, out: Option<&Path>) -> Result<()> {
    if !valid_common_name(cn) {
        return Err(CliError::Usage(format!("common name {cn:?} must match [A-Za-z0-9_.-]+")));
    }
    if role.is_empty() || role.contains([',', '=', '\n']) {
        return Err(CliError::Usage(format!("role {role:?} is not a plain annotation")));
    }
    let key_path = ca_dir.join(KEY_FILE);
    let ca = CertificateAuthority::parse_key(&read(&key_path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", key_path.display())))?;
    let now = Utc::now();
    let credential = ca.issue_agent(cn, role, now, now + chrono::Duration::days(i64::from(days)));
    match out {
        Some(path) => write(path, &credential.to_text()),
        None => emit(&credential.to_text()),
    }
}

pub fn serve(config: Option<&Path>, listen: Option<String>) -> Result<()> {
    let path = config.ok_or_else(|| CliError::Usage("no configuration: pass --config or set KBAUTHZ_CONFIG".into()))?;
    let mut cfg = Config::load(path).map_err(config_err)?;
    cfg.apply_env(|k| std::env::var(k).ok());
    if let Some(l) = listen {
        cfg.listen = l;
    }
    let engine = cfg.build_engine().map_err(config_err)?;
    let anchors = cfg.trust_store().map_err(config_err)?;
    let audit: Box<dyn AuditSink> = match &cfg.audit {
        Some(p) => Box::new(FileAudit::open(p).map_err(|e| CliError::Config(format!("audit {}: {e}", p.display())))?),
        None => {
            eprintln!("kbauthz: no audit file configured; decisions are not persisted");
            Box::new(MemoryAudit::new())
        }
    };
    let controller = SessionController::new(engine, anchors, Arc::new(SystemClock), audit).with_seed(rand::random());
    let handle = serve_tcp(cfg.listen.as_str(), shared(controller))
        .map_err(|e| CliError::Runtime(format!("cannot listen on {}: {e}", cfg.listen)))?;

    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(runtime)?;
    emit(&format!("listening on {}\n", handle.local_addr()))?;
    let _ = rx.recv();
    eprintln!("kbauthz: shutting down");
    handle.shutdown();
    Ok(())
}

pub enum Op {
    Query(String),
    Assert(String),
    Retract(String),
}

pub struct CallOptions {
    pub connect: String,
    pub credential: PathBuf,
    pub registration: PathBuf,
    pub graph: Option<String>,
    pub op: Op,
    pub timeout_ms: u64,
}

fn describe(reply: &Reply) -> String {
    match reply {
        Reply::Ok(body) => body.clone(),
        Reply::Deny { code, detail } => format!("DENY {code} {detail}"),
        Reply::Error { code, detail } => format!("ERROR {code} {detail}"),
        Reply::Bye(reason) => format!("BYE {reason}"),
    }
}

pub fn call(options: CallOptions) -> Result<()> {
    let credential = read(&options.credential)?;
    let registration = read(&options.registration)?;
    let transport = TcpTransport::connect(options.connect.as_str())
        .map_err(|e| CliError::Runtime(format!("cannot connect to {}: {e}", options.connect)))?;
    let mut client = Client::new(transport).with_timeout(Duration::from_millis(options.timeout_ms));

    let hello = client.hello(&credential).map_err(runtime)?;
    if !hello.is_ok() {
        return Err(CliError::Runtime(format!("authentication failed: {}", describe(&hello))));
    }
    let reg = client.register(&registration).map_err(runtime)?;
    if !reg.is_ok() {
        return Err(CliError::Runtime(format!("registration failed: {}", describe(&reg))));
    }

    let (kind, text) = match &options.op {
        Op::Query(t) => (MessageType::Query, t),
        Op::Assert(t) => (MessageType::Assert, t),
        Op::Retract(t) => (MessageType::Retract, t),
    };
    let body = match &options.graph {
        Some(g) => format!("GRAPH <{g}>\n{text}"),
        None => text.clone(),
    };
    let reply = client.call(kind, &body).map_err(runtime)?;
    let mut out = describe(&reply);
    if !out.is_empty() && !out.ends_with('\n') {
        out.push('\n');
    }
    emit(&out)?;
    if client.terminated().is_none() {
        let _ = client.bye();
    }
    Ok(())
}

pub fn scenario_run(
    file: &Path,
    mode: Option<AuthorizationMode>,
    seed: Option<u64>,
    out: Option<&Path>,
    concurrent: bool,
) -> Result<()> {
    let mut config = ScenarioConfig::load(file).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    if let Some(m) = mode {
        config.mode = m;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let report = run_scenario(&config, RunOptions { concurrent }, out).map_err(runtime)?;
    emit(&report.to_string())
}

pub fn profile_show(agent: &str, snapshot: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let agent = Iri::new(agent).map_err(|e| CliError::Usage(format!("bad agent IRI {agent:?}: {e}")))?;
    let (dataset, ontology): (Dataset, Ontology) = match (snapshot, config) {
        (Some(path), _) => {
            let dataset =
                read_snapshot(&read(path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            (dataset, Ontology::default_ontology())
        }
        (None, Some(path)) => {
            let engine = Config::load(path).and_then(|c| c.build_engine()).map_err(config_err)?;
            (engine.dataset().clone(), engine.ontology().clone())
        }
        (None, None) => {
            let engine = Engine::with_defaults();
            (engine.dataset().clone(), engine.ontology().clone())
        }
    };
    let graph = dataset
        .graph(&profile_graph_name(&agent))
        .ok_or_else(|| CliError::Runtime(format!("no profile for {agent}")))?;
    let mut prefixes = ontology.vocabulary.prefixes();
    prefixes.insert("agents", Iri::new(DEFAULT_AGENT_NAMESPACE).expect("constant"));
    emit(&turtle::serialize(graph.triples(), &prefixes))
}

pub fn audit_grep(reason: &str, file: &Path) -> Result<()> {
    let records = read_audit(file).map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
    let mut out = String::new();
    for r in records.iter().filter(|r| r.reason == reason) {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    emit(&out)
}
