mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kbauthz_core::config::{ENV_CONFIG, ENV_LISTEN};
use kbauthz_core::AuthorizationMode;

#[derive(Debug, Parser)]
#[command(name = "kbauthz", version, about = "Per-request authorization for knowledge-base agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test certificate authority.
    #[command(subcommand)]
    Ca(CaCommand),
    /// Run the enforcement point on a TCP listener until interrupted.
    Serve(ServeArgs),
    /// Connect to a server, authenticate, register and send one request.
    Call(CallArgs),
    /// Simulated multi-agent runs.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Inspect authorization profiles.
    #[command(subcommand)]
    Profile(ProfileCommand),
    /// Search audit logs.
    #[command(subcommand)]
    Audit(AuditCommand),
}

#[derive(Debug, Subcommand)]
enum CaCommand {
    /// Create a signing key and its trust anchor in DIR.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "kbauthz-ca")]
        issuer: String,
        /// Derive the key from this text instead of fresh randomness.
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        force: bool,
    },
    /// Issue an agent credential signed by the CA in --ca.
    Issue {
        #[arg(long)]
        cn: String,
        #[arg(long)]
        role: String,
        #[arg(long, default_value = ".")]
        ca: PathBuf,
        #[arg(long, default_value_t = 365)]
        days: u32,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = ENV_CONFIG)]
    config: Option<PathBuf>,
    /// Overrides the configuration file and KBAUTHZ_LISTEN.
    #[arg(long)]
    listen: Option<String>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("op").required(true).args(["query", "assert", "retract"])))]
struct CallArgs {
    #[arg(long, env = ENV_LISTEN)]
    connect: String,
    #[arg(long)]
    credential: PathBuf,
    /// Registration payload (Turtle).
    #[arg(long)]
    register: PathBuf,
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    assert: Option<String>,
    #[arg(long)]
    retract: Option<String>,
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Hybrid,
    RbacOnly,
}

impl From<Mode> for AuthorizationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Hybrid => AuthorizationMode::Hybrid,
            Mode::RbacOnly => AuthorizationMode::RbacOnly,
        }
    }
}

#[derive(Debug, Subcommand)]
enum ScenarioCommand {
    /// Run a scenario file and print its report.
    Run {
        file: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the audit log and snapshot.
        #[arg(long)]
        out: Option<PathBuf>,
        /// One thread per agent; audit order is then not reproducible.
        #[arg(long)]
        concurrent: bool,
    },
}

#[derive(Debug, Subcommand)]
enum ProfileCommand {
    /// Print an agent's profile graph as canonical Turtle.
    Show {
        agent: String,
        /// Knowledge-base snapshot to read from.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long, env = ENV_CONFIG)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum AuditCommand {
    /// Print the records whose reason code is CODE.
    Grep {
        #[arg(long)]
        reason: String,
        file: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Ca(CaCommand::Init { out, issuer, seed, force }) => commands::ca_init(&out, &issuer, seed, force),
        Command::Ca(CaCommand::Issue { cn, role, ca, days, out }) => {
            commands::ca_issue(&cn, &role, &ca, days, out.as_deref())
        }
        Command::Serve(args) => commands::serve(args.config.as_deref(), args.listen),
        Command::Call(args) => commands::call(commands::CallOptions {
            connect: args.connect,
            credential: args.credential,
            registration: args.register,
            graph: args.graph,
            op: match (args.query, args.assert, args.retract) {
                (Some(q), _, _) => commands::Op::Query(q),
                (_, Some(a), _) => commands::Op::Assert(a),
                (_, _, Some(r)) => commands::Op::Retract(r),
                _ => unreachable!("clap enforces one operation"),
            },
            timeout_ms: args.timeout_ms,
        }),
        Command::Scenario(ScenarioCommand::Run { file, mode, seed, out, concurrent }) => {
            commands::scenario_run(&file, mode.map(Into::into), seed, out.as_deref(), concurrent)
        }
        Command::Profile(ProfileCommand::Show { agent, snapshot, config }) => {
            commands::profile_show(&agent, snapshot.as_deref(), config.as_deref())
        }
        Command::Audit(AuditCommand::Grep { reason, file }) => commands::audit_grep(&reason, &file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kbauthz: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
