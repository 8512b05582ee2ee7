use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use warpreg::{DatasetConfig, RegistrationConfig};

use crate::args::RefSpec;

/// A fully resolved unit of work: everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Simulate {
        config: DatasetConfig,
    },
    Register {
        curves: PathBuf,
        reference: RefSpec,
        config: RegistrationConfig,
    },
    SelectRef {
        curves: PathBuf,
        reference: RefSpec,
        config: RegistrationConfig,
    },
    Evaluate {
        run: PathBuf,
        truth: Option<PathBuf>,
        sweep: bool,
    },
}

impl Job {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Simulate { config } => Some(config.seed),
            Job::Register { config, .. } | Job::SelectRef { config, .. } => {
                config.solver.multistart.as_ref().map(|m| m.seed)
            }
            Job::Evaluate { .. } => None,
        }
    }
}

/// Written as `manifest.json` next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub job: Job,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub version: String,
    pub duration_secs: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("invalid manifest {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
