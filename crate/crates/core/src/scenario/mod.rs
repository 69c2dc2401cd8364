//! Scenario configs, the runner behind `pinball run`, run manifests and
//! golden-file verification.

mod config;
mod golden;
mod run;

pub use config::{
    load_config, parse_config, serialize_config, CalibrationConfig, ConfigError, ConfigIssue,
    GeometryConfig, HeightSpec, ParticlesConfig, ScenarioConfig, ScenarioKind, Tolerances,
};
pub use golden::{verify_golden, CellDiff, GoldenError, GoldenReport, GoldenTolerances};
pub use run::{calibrate_from_config, run_scenario, RunError, RunOptions};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Name of the manifest inside an output directory; written last.
pub const MANIFEST: &str = "manifest.json";

/// Exit codes of the `pinball` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const ASSERTION: i32 = 3;
    pub const ABORT: i32 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Passed,
    /// Completed, but at least one assertion failed.
    Failed,
    /// Stopped by an error; outputs are partial.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub status: RunStatus,
    /// SHA-256 of the normalized config text.
    pub config_hash: String,
    pub version: String,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
    pub metrics: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Passed => exit::OK,
            RunStatus::Failed => exit::ASSERTION,
            RunStatus::Aborted => exit::ABORT,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn failed_assertions(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the config as the runner sees it, defaults filled in.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    sha256_hex(serialize_config(cfg).as_bytes())
}
