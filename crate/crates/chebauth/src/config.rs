//! Flat `key = value` configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! p = 7fffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffed
//! k = 128
//! r = 5
//! window_ms = 30000
//! bind = 127.0.0.1:7457
//! store = chebauth.store
//! cred = chebauth.cred
//! faithful_paper = false
//! ```

use std::path::{Path, PathBuf};

use chebauth_core::chebmath::Modulus;
use chebauth_core::fuzzy::CodeParams;
use chebauth_core::protocol::{ServerPolicy, DEFAULT_WINDOW_MS};
use num_bigint::BigUint;

pub const DEFAULT_PORT: u16 = 7457;
pub const MIN_MODULUS_BITS: u64 = 128;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid value for {key}: {msg}")]
    Value { key: &'static str, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub p: Modulus,
    pub code: CodeParams,
    pub window_ms: u64,
    pub bind: String,
    pub store: PathBuf,
    pub cred: PathBuf,
    /// Disables the duplicate-`M1` cache.
    pub faithful_paper: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            p: Modulus::default_prime(),
            code: CodeParams::default(),
            window_ms: DEFAULT_WINDOW_MS,
            bind: format!("127.0.0.1:{DEFAULT_PORT}"),
            store: PathBuf::from("chebauth.store"),
            cred: PathBuf::from("chebauth.cred"),
            faithful_paper: false,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut k = cfg.code.k();
        let mut r = cfg.code.r();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            let value = value.trim();
            match key.trim() {
                "p" => cfg.p = parse_modulus(value)?,
                "k" => k = parse_num("k", value)?,
                "r" => r = parse_num("r", value)?,
                "window_ms" => cfg.window_ms = parse_num("window_ms", value)?,
                "bind" => cfg.bind = value.to_string(),
                "store" => cfg.store = PathBuf::from(value),
                "cred" => cfg.cred = PathBuf::from(value),
                "faithful_paper" => {
                    cfg.faithful_paper = match value {
                        "true" | "1" | "yes" => true,
                        "false" | "0" | "no" => false,
                        other => {
                            return Err(ConfigError::Value {
                                key: "faithful_paper",
                                msg: format!("not a boolean: {other}"),
                            })
                        }
                    }
                }
                other => {
                    return Err(ConfigError::Syntax { line: i + 1, msg: format!("unknown key {other}") })
                }
            }
        }
        cfg.code = CodeParams::new(k, r)
            .map_err(|e| ConfigError::Value { key: "k/r", msg: e.to_string() })?;
        Ok(cfg)
    }

    pub fn policy(&self) -> ServerPolicy {
        ServerPolicy { window_ms: self.window_ms, reject_replayed_m1: !self.faithful_paper }
    }
}

fn parse_num<T: std::str::FromStr>(key: &'static str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value { key, msg: e.to_string() })
}

/// Lowercase (or any case) big-endian hex, optional `0x` prefix.
pub fn parse_modulus(value: &str) -> Result<Modulus, ConfigError> {
    let digits = value.strip_prefix("0x").unwrap_or(value);
    let n = BigUint::parse_bytes(digits.as_bytes(), 16)
        .ok_or_else(|| ConfigError::Value { key: "p", msg: "not a hex number".into() })?;
    if n.bits() < MIN_MODULUS_BITS {
        return Err(ConfigError::Value {
            key: "p",
            msg: format!("{} bits, need at least {MIN_MODULUS_BITS}", n.bits()),
        });
    }
    Modulus::new(n).map_err(|e| ConfigError::Value { key: "p", msg: e.to_string() })
}

pub fn modulus_hex(p: &Modulus) -> String {
    p.value().to_str_radix(16)
}
