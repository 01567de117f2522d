//! JSON reports. Every report carries a `meta` block with the effective
//! configuration, seeds and artifact hashes needed to rerun it. Nothing
//! time- or host-dependent goes in, so identical runs give identical bytes.

use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::io::{sha256_hex, write_atomic, FORMAT_VERSION};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub format_version: u32,
    pub command: String,
    pub config: RunConfig,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_hash: Option<String>,
}

impl Meta {
    pub fn new(command: &str, config: &RunConfig, seeds: Vec<u64>) -> Self {
        let canonical = serde_json::to_vec(config).expect("config serializes");
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            config: config.clone(),
            config_hash: sha256_hex(&canonical),
            seeds,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report<T> {
    pub meta: Meta,
    pub result: T,
}

pub fn write_report<T: Serialize>(path: &Path, meta: Meta, result: T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(&Report { meta, result })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}
