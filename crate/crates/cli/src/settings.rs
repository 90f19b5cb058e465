use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use gaitrec::data::{parse_key_values, FormatConfig};

use crate::Shared;

/// Shared flags merged with the optional key=value config file.
pub struct Settings {
    pub seed: u64,
    pub out: PathBuf,
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(shared: &Shared) -> Result<Self> {
        let values = match &shared.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_key_values(&text, p)?
            }
            None => BTreeMap::new(),
        };
        let mut s = Settings {
            seed: 0,
            out: shared.out.clone(),
            values,
        };
        s.seed = s.pick(shared.seed, "seed", 0)?;
        Ok(s)
    }

    /// The flag if given, else the config entry, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| anyhow::anyhow!("config entry `{key}` has bad value `{v}`")),
            None => Ok(default),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn format(&self) -> Result<FormatConfig> {
        let mut f = FormatConfig::default();
        f.apply(&self.values)?;
        Ok(f)
    }

    pub fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}
