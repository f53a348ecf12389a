use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub trips: PathBuf,
    pub locations: PathBuf,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
    #[serde(default = "default_min")]
    pub min_trips: usize,
    #[serde(default = "default_min")]
    pub min_users: usize,
    /// Shift applied to timestamps before bucketing into timeslots.
    #[serde(default)]
    pub utc_offset_secs: i64,
}

fn default_ratio() -> f64 {
    0.7
}

fn default_min() -> usize {
    10
}

/// A training/evaluation run as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.model.validate()?;
        if !(cfg.data.train_ratio > 0.0 && cfg.data.train_ratio <= 1.0) {
            return Err(Error::Config(format!("train_ratio {} outside (0, 1]", cfg.data.train_ratio)));
        }
        Ok(cfg)
    }

    /// Reads the file, resolves data paths against its directory and checks
    /// that they exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.trips, &mut cfg.data.locations] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "data file not found"),
                ));
            }
        }
        Ok(cfg)
    }

    /// SHA-256 over the canonical JSON form of everything except file
    /// locations, so moving the data does not change the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.data.trips = c.data.trips.file_name().map(PathBuf::from).unwrap_or_default();
        c.data.locations = c.data.locations.file_name().map(PathBuf::from).unwrap_or_default();
        hash_json(&c)
    }
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}
