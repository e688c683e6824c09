use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pacing_cli::analyze::analyze;
use pacing_cli::simulate::{parse_script, replay_realtime, simulate};
use pacing_cli::CliError;
use pacing_core::memory::write_transcript;
use pacing_core::scheduler::PacingMode;
use pacing_core::session::{BackendKind, SessionConfig};
use pacing_gateway::{AppState, GatewayError, RemoteConfig, ServerConfig};

#[derive(Parser)]
#[command(name = "pacing", version, about = "Context-aware conversational pacing engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    ContextAware,
    Static,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/NDJSON gateway.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, value_enum, default_value = "context-aware")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "mock")]
        backend: Backend,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60_000)]
        idle_timeout_ms: u64,
    },
    /// Replay a scripted conversation under a virtual clock.
    Simulate {
        #[arg(long)]
        script: PathBuf,
        /// NDJSON event stream output.
        #[arg(long)]
        out: PathBuf,
        /// Transcript output; defaults to `<out stem>.transcript.ndjson`.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also print the stream to stdout at wall-clock pace.
        #[arg(long)]
        realtime: bool,
    },
    /// Strategy distribution, transitions and disclosure metrics.
    Analyze {
        /// Transcript NDJSON, label-sequence or count-table file (repeatable).
        #[arg(long, required = true)]
        log: Vec<PathBuf>,
        /// NRC-format lexicon; required for transcripts.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Optional CSV of the transition probabilities.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn transcript_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.transcript.ndjson"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve { port, host, mode, backend, seed, idle_timeout_ms } => {
            let defaults = SessionConfig {
                mode: match mode {
                    Mode::ContextAware => PacingMode::ContextAware,
                    Mode::Static => PacingMode::Static,
                },
                backend: match backend {
                    Backend::Mock => BackendKind::Mock,
                    Backend::Remote => BackendKind::Remote,
                },
                seed,
                idle_timeout_ms,
                ..Default::default()
            };
            defaults.validate().map_err(|e| CliError::Input(e.to_string()))?;
            let remote = RemoteConfig::from_env();
            let token_set = std::env::var(&remote.auth_token_env_var_name).is_ok_and(|v| !v.is_empty());
            if matches!(backend, Backend::Remote) && !token_set {
                return Err(CliError::Remote(format!(
                    "environment variable {} is not set",
                    remote.auth_token_env_var_name
                )));
            }
            let config = ServerConfig { defaults, remote: token_set.then_some(remote), ..Default::default() };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Serve(e.to_string()))?;
            rt.block_on(pacing_gateway::serve(SocketAddr::new(host, port), AppState::wall_clock(config)))
                .map_err(|e: GatewayError| CliError::Serve(e.to_string()))
        }
        Command::Simulate { script, out, transcript, seed, realtime } => {
            let text = std::fs::read_to_string(&script)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", script.display())))?;
            let result = simulate(&parse_script(&text)?, seed)?;
            write_file(&out, result.ndjson().as_bytes())?;
            let mut buf = Vec::new();
            write_transcript(&mut buf, &result.transcript).expect("in-memory write");
            write_file(&transcript.unwrap_or_else(|| transcript_path(&out)), &buf)?;
            if realtime {
                replay_realtime(&result, &mut std::io::stdout().lock()).map_err(|e| CliError::Output(e.to_string()))?;
            }
            Ok(())
        }
        Command::Analyze { log, lexicon, report, csv } => {
            let r = analyze(&log, lexicon.as_deref(), &report, csv.as_deref())?;
            print!("{}", r.summary_table());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
