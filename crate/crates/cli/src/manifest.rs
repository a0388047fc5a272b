use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn digest_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

/// Provenance record written next to every set of results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    /// True when the seed was drawn from system entropy.
    pub seed_from_entropy: bool,
    pub version: String,
    pub input_path: Option<String>,
    /// FNV-1a of the input file bytes.
    pub input_digest: Option<String>,
    pub threads: usize,
    pub started_at: String,
    pub finished_at: Option<String>,
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value, seed: u64, seed_from_entropy: bool) -> Self {
        Self {
            command: command.to_string(),
            arguments: std::env::args().collect(),
            config,
            seed,
            seed_from_entropy,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_path: None,
            input_digest: None,
            threads: rayon::current_num_threads(),
            started_at: timestamp(Utc::now()),
            finished_at: None,
        }
    }

    pub fn with_input(mut self, path: &Path, bytes: &[u8]) -> Self {
        self.input_path = Some(path.display().to_string());
        self.input_digest = Some(digest_hex(bytes));
        self
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(timestamp(Utc::now()));
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Writes through a temporary file and a rename so readers never see a
/// half-written document.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
