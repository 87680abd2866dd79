//! Operator commands. Exit codes: 0 success, 1 protocol rejection or
//! transport failure, 2 usage or configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chebauth_core::fuzzy::BitVector;
use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::adversary::{run_named, ScenarioConfig, ScenarioName};
use crate::config::Config;
use crate::eval::{apply_block_noise, run_eval};
use crate::netio::{authenticate_remote, enroll_remote, serve, NetError, ServeOptions, ServerEvent};
use crate::store::{load_credential, save_credential, FileStore};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECTED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "chebauth", version, about = "Biometric remote authentication with Chebyshev key agreement")]
pub struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Disable the duplicate-M1 replay cache.
    #[arg(long, global = true)]
    pub faithful_paper: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the authentication server.
    Serve {
        #[arg(long)]
        store: Option<PathBuf>,
        /// Listen address; overrides `bind` from the config.
        #[arg(long)]
        bind: Option<String>,
        /// Accept enrollment requests on this listener.
        #[arg(long)]
        trusted_channel: bool,
    },
    /// Enroll a biometric and password; writes the credential file.
    Enroll {
        #[command(flatten)]
        client: ClientArgs,
        /// Acknowledge that the link to the server is trusted.
        #[arg(long)]
        trusted_channel: bool,
    },
    /// Authenticate and print the session-key fingerprint.
    Auth {
        #[command(flatten)]
        client: ClientArgs,
    },
    /// Write a random biometric file, or a noisy copy of an existing one.
    Genbio {
        #[arg(long)]
        out: PathBuf,
        /// Start from this biometric instead of a random one.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Bit flips per code block.
        #[arg(long, default_value_t = 0)]
        noise: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Synthetic FAR/FRR evaluation.
    Eval {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Genuine bit flips per code block.
        #[arg(long, default_value_t = 2)]
        noise: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run an attack scenario against an in-process client and server.
    Attack {
        /// replay-stale | replay-in-window | tamper-sweep | anonymity-scan | template-scan
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct ClientArgs {
    #[arg(long)]
    pub bio: PathBuf,
    #[arg(long, env = "CBA_PASSWORD", hide_env_values = true)]
    pub password: String,
    #[arg(long)]
    pub cred: Option<PathBuf>,
    /// Server address; defaults to `bind` from the config.
    #[arg(long)]
    pub addr: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Rejected(_) | CliError::Transport(_) => EXIT_REJECTED,
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Io(_) | NetError::Frame(_) => CliError::Transport(e.to_string()),
            other => CliError::Rejected(other.to_string()),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).map_err(usage)?,
        None => Config::default(),
    };
    if cli.faithful_paper {
        cfg.faithful_paper = true;
    }
    Ok(cfg)
}

/// Reads an `N`-bit biometric: hex text (whitespace ignored) or raw bytes.
pub fn read_biometric(path: &Path, n_bits: usize) -> Result<BitVector, CliError> {
    let raw = std::fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let n_bytes = n_bits.div_ceil(8);
    let text: String = String::from_utf8_lossy(&raw).split_whitespace().collect();
    let bytes = match hex::decode(&text) {
        Ok(b) if b.len() == n_bytes => b,
        _ if raw.len() == n_bytes => raw,
        _ => {
            return Err(usage(format!(
                "{}: expected {n_bits} bits as {} hex digits or {n_bytes} raw bytes",
                path.display(),
                2 * n_bytes
            )))
        }
    };
    BitVector::from_bytes(&bytes, n_bits).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn write_biometric(path: &Path, v: &BitVector) -> Result<(), CliError> {
    std::fs::write(path, format!("{}\n", hex::encode(v.as_bytes())))
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Runs a parsed command, writing its report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Serve { store, bind, trusted_channel } => cmd_serve(&cfg, store.as_deref(), bind.as_deref(), *trusted_channel, out),
        Command::Enroll { client, trusted_channel } => cmd_enroll(&cfg, client, *trusted_channel, out),
        Command::Auth { client } => cmd_auth(&cfg, client, out),
        Command::Genbio { out: path, from, noise, seed } => cmd_genbio(&cfg, path, from.as_deref(), *noise, *seed, out),
        Command::Eval { trials, noise, seed } => cmd_eval(&cfg, *trials, *noise, *seed, out),
        Command::Attack { scenario, seed } => cmd_attack(&cfg, scenario, *seed, out),
    }
}

fn report(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::Transport(e.to_string()))
}

pub fn cmd_serve(
    cfg: &Config,
    store_path: Option<&Path>,
    bind: Option<&str>,
    trusted_channel: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let path = store_path.unwrap_or(&cfg.store);
    let store = FileStore::open_or_create(path, cfg.code, &cfg.p).map_err(usage)?;
    for fault in store.faults() {
        log::warn!("store {}: {fault}", path.display());
    }
    let mut opts = ServeOptions::new(cfg.policy());
    opts.trusted_channel = trusted_channel;
    opts.on_event = Some(Arc::new(|ev: &ServerEvent| {
        let line = match ev {
            ServerEvent::Enrolled => "enrolled".to_string(),
            ServerEvent::Established { fingerprint } => format!("session established fingerprint={fingerprint}"),
            // reason codes stay in the log; the console line is uniform
            ServerEvent::Rejected { .. } | ServerEvent::Refused { .. } => "session rejected".to_string(),
        };
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{line}");
        let _ = stdout.flush();
    }));
    let addr = bind.unwrap_or(&cfg.bind);
    let handle = serve(addr, cfg.p.clone(), cfg.code, store, opts)
        .map_err(|e| CliError::Transport(format!("bind {addr}: {e}")))?;
    report(out, &format!("listening on {}\n", handle.local_addr()))?;
    handle.wait();
    Ok(())
}

pub fn cmd_enroll(cfg: &Config, args: &ClientArgs, trusted_channel: bool, out: &mut dyn Write) -> Result<(), CliError> {
    if !trusted_channel {
        return Err(usage("enrollment needs --trusted-channel (the enrollment link must be protected)"));
    }
    if args.password.is_empty() {
        return Err(usage("password must not be empty"));
    }
    let bio = read_biometric(&args.bio, cfg.code.n())?;
    let addr = args.addr.as_deref().unwrap_or(&cfg.bind);
    let cred = enroll_remote(addr, &bio, args.password.as_bytes(), &cfg.code, &cfg.p)?;
    let path = args.cred.as_deref().unwrap_or(&cfg.cred);
    save_credential(path, &cred).map_err(|e| CliError::Transport(format!("{}: {e}", path.display())))?;
    report(out, &format!("enrolled; credential written to {}\n", path.display()))
}

pub fn cmd_auth(cfg: &Config, args: &ClientArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let path = args.cred.as_deref().unwrap_or(&cfg.cred);
    let cred = load_credential(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let bio = read_biometric(&args.bio, cred.code().n())?;
    let addr = args.addr.as_deref().unwrap_or(&cfg.bind);
    let key = authenticate_remote(addr, &cred, &bio, args.password.as_bytes(), cfg.window_ms)?;
    report(out, &format!("authenticated fingerprint={}\n", key.fingerprint()))
}

pub fn cmd_genbio(
    cfg: &Config,
    path: &Path,
    from: Option<&Path>,
    noise: usize,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let code = cfg.code;
    if noise > usize::from(code.r()) {
        return Err(usage(format!("noise {noise} exceeds block length {}", code.r())));
    }
    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_rng(OsRng).map_err(|e| CliError::Transport(e.to_string()))?,
    };
    let base = match from {
        Some(src) => read_biometric(src, code.n())?,
        None => BitVector::random(code.n(), &mut rng),
    };
    let v = apply_block_noise(&base, &code, noise, &mut rng);
    write_biometric(path, &v)?;
    report(out, &format!("wrote {} bits to {}\n", code.n(), path.display()))
}

pub fn cmd_eval(cfg: &Config, trials: usize, noise: usize, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if noise > usize::from(cfg.code.r()) {
        return Err(usage(format!("noise {noise} exceeds block length {}", cfg.code.r())));
    }
    let rep = run_eval(&cfg.p, cfg.code, cfg.policy(), trials, noise, seed);
    report(out, &rep.render())
}

pub fn cmd_attack(cfg: &Config, scenario: &str, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let name = ScenarioName::parse(scenario).ok_or_else(|| {
        let known: Vec<_> = ScenarioName::ALL.iter().map(|n| n.as_str()).collect();
        usage(format!("unknown scenario {scenario}; expected one of {}", known.join(", ")))
    })?;
    let sc = ScenarioConfig { p: cfg.p.clone(), code: cfg.code, policy: cfg.policy(), seed };
    let rep = run_named(name, &sc);
    report(out, &format!("mode: {}\n", if cfg.faithful_paper { "faithful-paper" } else { "hardened" }))?;
    report(out, &rep.render())?;
    if rep.passed {
        Ok(())
    } else {
        Err(CliError::Rejected(format!("{} did not hold", rep.name)))
    }
}
