//! Frozen-constant regression store.
//!
//! Many closeness statements in this library are asymptotic in nature and
//! cannot be *proved* at desk scale; instead, each measured instance is
//! recorded once into a versioned JSON fixture file and asserted
//! bit-stable (within a small tolerance) on every later run.  Record mode
//! never overwrites an existing entry silently.
//!
//! Selection of mode: tests and the CLI call [`FixtureStore::check`]; the
//! environment variable `COSIM_FIXTURES=record` switches to record mode
//! (useful for the very first run on a new machine or after an intended
//! behavioral change, combined with `COSIM_FIXTURES_OVERWRITE=1`).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Default assert tolerance for frozen values.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const STORE_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrozenValue {
    pub value: f64,
    pub tolerance: f64,
    pub recorded_at: String,
    pub git_ref: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixtureStore {
    pub version: u32,
    pub entries: BTreeMap<String, FrozenValue>,
    #[serde(skip)]
    path: PathBuf,
}

/// Operating mode, from the `COSIM_FIXTURES` environment variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Assert,
    Record,
}

pub fn mode_from_env() -> Mode {
    match std::env::var("COSIM_FIXTURES").as_deref() {
        Ok("record") => Mode::Record,
        _ => Mode::Assert,
    }
}

/// Workspace-level fixture file (committed to the repository).
pub fn default_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/frozen.json")
}

impl FixtureStore {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self {
                version: STORE_VERSION,
                entries: BTreeMap::new(),
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path)?;
        let mut store: FixtureStore = serde_json::from_str(&text)?;
        store.path = path.to_path_buf();
        Ok(store)
    }

    pub fn load_default() -> Result<Self> {
        Self::load(&default_path())
    }

    pub fn get(&self, key: &str) -> Option<&FrozenValue> {
        self.entries.get(key)
    }

    fn save(&self) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&self.path, text + "\n")?;
        Ok(())
    }

    /// Record a value. Refuses to overwrite a differing entry unless
    /// `overwrite` is set.
    pub fn record(&mut self, key: &str, value: f64, tolerance: f64, overwrite: bool) -> Result<()> {
        if let Some(existing) = self.entries.get(key) {
            if (existing.value - value).abs() <= existing.tolerance {
                return Ok(()); // Re-recording the same value is a no-op.
            }
            if !overwrite {
                return Err(Error::Fixture(format!(
                    "refusing to overwrite fixture `{key}`: stored {} vs measured {value} \
                     (set COSIM_FIXTURES_OVERWRITE=1 to replace)",
                    existing.value
                )));
            }
        }
        self.entries.insert(
            key.to_string(),
            FrozenValue {
                value,
                tolerance,
                recorded_at: chrono_free_timestamp(),
                git_ref: git_ref(),
            },
        );
        self.save()
    }

    /// Assert a measured value against the stored one.
    pub fn assert_value(&self, key: &str, measured: f64) -> Result<()> {
        let entry = self.entries.get(key).ok_or_else(|| {
            Error::Fixture(format!(
                "missing fixture `{key}` (run once with COSIM_FIXTURES=record)"
            ))
        })?;
        if (measured - entry.value).abs() > entry.tolerance {
            return Err(Error::Fixture(format!(
                "fixture `{key}` drifted: stored {} ± {}, measured {measured}",
                entry.value, entry.tolerance
            )));
        }
        Ok(())
    }

    /// Record or assert depending on the environment mode; returns the
    /// measured value for reporting.
    pub fn check(&mut self, key: &str, measured: f64) -> Result<f64> {
        self.check_with_tolerance(key, measured, DEFAULT_TOLERANCE)
    }

    pub fn check_with_tolerance(&mut self, key: &str, measured: f64, tol: f64) -> Result<f64> {
        match mode_from_env() {
            Mode::Record => {
                let overwrite = std::env::var("COSIM_FIXTURES_OVERWRITE").as_deref() == Ok("1");
                self.record(key, measured, tol, overwrite)?;
            }
            Mode::Assert => self.assert_value(key, measured)?,
        }
        Ok(measured)
    }
}

fn chrono_free_timestamp() -> String {
    // Seconds since the epoch; avoids a date-time dependency for a log field.
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

fn git_ref() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}
