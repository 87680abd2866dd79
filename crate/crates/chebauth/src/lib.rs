//! Runtime pieces around `chebauth-core`: the binary wire format, the
//! enrollment store and credential files, a TCP server and client, an
//! in-process adversarial channel, the FAR/FRR harness and the CLI.

pub mod adversary;
pub mod cli;
pub mod config;
pub mod eval;
pub mod netio;
pub mod store;
pub mod wire;
