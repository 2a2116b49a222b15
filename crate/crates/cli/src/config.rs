//! Run configuration: one TOML file layered over a named preset, with
//! `--set key=value` overrides and the `DEBIAS_CONTRAST_SEED` variable
//! applied last.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use debias_contrast::backends::BackendSelection;
use debias_contrast::{AugmentConfig, GenParams, TrainConfig};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "DEBIAS_CONTRAST_SEED";

/// File name of the resolved config written next to every output.
pub const ECHO_NAME: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base preset the file is layered over: desk, gpt2, phi2 or llama2-7b.
    pub preset: String,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub backends: BackendSelection,
    /// Decoding for `eval` and `ablate-alpha`.
    pub generation: GenParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset("desk").expect("desk preset exists")
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> anyhow::Result<Self> {
        let train = TrainConfig::preset(name)?;
        // Greedy decoding without a cache is quadratic in length; the toy
        // model gets a short budget.
        let max_new_tokens = if name == "desk" { 48 } else { 128 };
        Ok(Self {
            preset: name.to_owned(),
            augment: AugmentConfig::default(),
            generation: GenParams {
                max_new_tokens,
                max_input_length: train.model.max_length,
                ..GenParams::default()
            },
            train,
            backends: BackendSelection::default(),
        })
    }

    /// Resolves preset, file, overrides and the seed variable, in that order.
    pub fn load(path: Option<&Path>, overrides: &[String], env_seed: Option<&str>) -> anyhow::Result<Self> {
        let mut file = match path {
            Some(p) => {
                let raw = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str::<toml::Table>(&raw).with_context(|| format!("malformed config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut file, o)?;
        }
        let preset = match file.get("preset") {
            Some(toml::Value::String(s)) => s.clone(),
            Some(other) => bail!("preset must be a string, got {other}"),
            None => "desk".to_owned(),
        };
        let mut merged = toml::Table::try_from(Self::preset(&preset)?)?;
        merge(&mut merged, file);
        let mut cfg: RunConfig = toml::Value::Table(merged).try_into().context("invalid config")?;
        if let Some(raw) = env_seed {
            let seed: u64 = raw.trim().parse().with_context(|| format!("{SEED_ENV}={raw:?} is not an unsigned integer"))?;
            cfg.set_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.augment.seed = seed;
        self.train.seed = seed;
        self.train.model.seed = seed;
        self.generation.seed = seed;
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.augment.validate()?;
        self.train.validate()?;
        self.generation.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Writes the resolved config to `path`.
    pub fn echo(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, self.to_toml()?).with_context(|| format!("cannot write {}", path.display()))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a
/// bare string.
fn apply_override(table: &mut toml::Table, item: &str) -> anyhow::Result<()> {
    let (key, raw) = item.split_once('=').ok_or_else(|| anyhow!("override {item:?} is not key=value"))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} is malformed");
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| anyhow!("override {key:?}: `{p}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_owned(), value);
    Ok(())
}
