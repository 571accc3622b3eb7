//! Run manifests.
//!
//! Every subcommand writes a `manifest.json` holding the fully resolved
//! configuration and the seed override it ran with. Feeding a manifest back
//! as `--config` reruns the command with identical inputs, which reproduces
//! every output byte-for-byte (timing.json excepted).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::{ForgeError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed_override: Option<u64>,
    pub config: Config,
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    seed_override: Option<u64>,
    config: &Config,
) -> Result<()> {
    let manifest = Manifest {
        schema_version: crate::files::SCHEMA_VERSION,
        command: command.into(),
        seed_override,
        config: config.clone(),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(ForgeError::io(&path))
}
