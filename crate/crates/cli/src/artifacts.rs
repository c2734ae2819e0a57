//! Artifact directories: file names, config loading and JSON/CSV writers.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use linflow::pipeline::ExperimentConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::status::ConfigError;

/// Root for artifact directories when `--out` is not given.
pub const ROOT_ENV: &str = "LINFLOW_ARTIFACTS";
const DEFAULT_ROOT: &str = "artifacts";

pub const CONFIG: &str = "config.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const TRAINING: &str = "training.json";
pub const LOSS_CSV: &str = "loss.csv";
pub const ENDPOINTS_CSV: &str = "endpoints.csv";
pub const REFERENCE_CSV: &str = "reference.csv";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const ERROR_REPORT: &str = "error_report.json";
pub const REGULARITY: &str = "regularity.json";
pub const SANDWICH_CSV: &str = "sandwich.csv";
pub const CHECKS: &str = "checks.json";
pub const VERIFY: &str = "verify.json";
pub const APPROX: &str = "approx.json";
pub const NETWORK_STATS_CSV: &str = "network_stats.csv";
pub const SUMMARY: &str = "summary.txt";
pub const SCATTER_SVG: &str = "scatter.svg";
pub const LOSS_SVG: &str = "loss.svg";
pub const LIPSCHITZ_T_SVG: &str = "lipschitz_t.svg";

pub fn artifact_root() -> PathBuf {
    std::env::var_os(ROOT_ENV).map_or_else(|| PathBuf::from(DEFAULT_ROOT), PathBuf::from)
}

/// `--out` if given, else `$LINFLOW_ARTIFACTS/<config stem>`.
pub fn resolve_dir(out: Option<&Path>, config: Option<&Path>, fallback: &str) -> PathBuf {
    if let Some(out) = out {
        return out.to_path_buf();
    }
    let stem = config
        .and_then(|c| c.file_stem())
        .map_or_else(|| fallback.to_string(), |s| s.to_string_lossy().into_owned());
    artifact_root().join(stem)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    match ExperimentConfig::from_json_file(path) {
        Ok(cfg) => Ok(cfg),
        Err(e @ linflow::Error::BudgetExceeded { .. }) => Err(anyhow::Error::from(e).context(path.display().to_string())),
        Err(e) => Err(ConfigError(format!("{}: {e}", path.display())).into()),
    }
}

pub struct ArtifactDir {
    path: PathBuf,
}

impl ArtifactDir {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { path })
    }

    /// An existing directory, opened for reading.
    pub fn open(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.file(name).is_file()
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.file(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("writing {}", p.display()))?))
    }

    /// Pretty JSON with a trailing newline; output depends only on `value`.
    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        let p = self.file(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let p = self.file(name);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.file(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }
}
