//! Run configuration: built-in defaults, then a `key = value` file, then
//! command-line flags, later layers overriding earlier ones.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sfdialog::{ModelDims, Task};

/// Every recognised key with its default. `auto` dimensions follow the
/// task defaults.
const DEFAULTS: &[(&str, &str)] = &[
    ("task", "visdial"),
    ("variant", "qih"),
    ("mlp_depth", "2"),
    ("shared_embeddings", "on"),
    ("seed", "0"),
    ("learning_rate", "0.001"),
    ("batch_size", "32"),
    ("max_epochs", "5"),
    ("patience", "1"),
    ("clip_norm", "off"),
    ("max_steps", "off"),
    ("min_count", "1"),
    ("t", "auto"),
    ("n_q", "auto"),
    ("n_a", "auto"),
    ("n_c", "auto"),
    ("embed", "auto"),
    ("e_q", "auto"),
    ("e_o", "auto"),
    ("e_c", "auto"),
    ("e_qh", "auto"),
    ("e_ah", "auto"),
    ("l_q", "auto"),
    ("l_o", "auto"),
    ("l_c", "auto"),
    ("l_qh", "auto"),
    ("l_ah", "auto"),
    ("l_h", "auto"),
    ("l_i", "auto"),
    ("vocab_size", "50"),
    ("options", "5"),
    ("batch", "3"),
    ("n_neighbor_images", "10"),
    ("pool_size", "100"),
    ("top_m", "10"),
    ("rounds", "10"),
    ("history_rounds", "1"),
    ("transcripts", "20"),
    ("family", "memorize"),
    ("dialogs", "20"),
    ("feature_dim", "16"),
    ("glove_dim", "5"),
    ("first_image_id", "1"),
    ("dataset", ""),
    ("val_dataset", ""),
    ("glove", ""),
    ("features", ""),
    ("vocab", ""),
    ("checkpoint", ""),
    ("q_checkpoint", ""),
    ("a_checkpoint", ""),
    ("rank_log", ""),
    ("out", ""),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match self.values.get_mut(&key) {
            Some(v) => {
                *v = value.into().trim().to_owned();
                Ok(())
            }
            None => bail!("unknown configuration key {key:?}"),
        }
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), i + 1))?;
            self.set(k, v).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn get<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| anyhow!("invalid value {raw:?} for {key}: {e}"))
    }

    /// `None` for `off`.
    pub fn optional<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if self.raw(key) == "off" {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            "on" | "true" | "1" => Ok(true),
            "off" | "false" | "0" => Ok(false),
            other => bail!("invalid value {other:?} for {key}: expected on or off"),
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key).ok_or_else(|| anyhow!("missing required --{}", key.replace('_', "-")))
    }

    pub fn task(&self) -> Result<Task> {
        self.get("task")
    }

    /// Dimensions starting from `base`, with every non-`auto` key applied.
    pub fn dims_from(&self, mut base: ModelDims) -> Result<ModelDims> {
        if self.raw("embed") != "auto" {
            base = base.with_embedding_dim(self.get("embed")?);
        }
        let fields: [(&str, &mut usize); 16] = [
            ("t", &mut base.t),
            ("n_q", &mut base.n_q),
            ("n_a", &mut base.n_a),
            ("n_c", &mut base.n_c),
            ("e_q", &mut base.e_q),
            ("e_o", &mut base.e_o),
            ("e_c", &mut base.e_c),
            ("e_qh", &mut base.e_qh),
            ("e_ah", &mut base.e_ah),
            ("l_q", &mut base.l_q),
            ("l_o", &mut base.l_o),
            ("l_c", &mut base.l_c),
            ("l_qh", &mut base.l_qh),
            ("l_ah", &mut base.l_ah),
            ("l_h", &mut base.l_h),
            ("l_i", &mut base.l_i),
        ];
        for (key, slot) in fields {
            if self.raw(key) != "auto" {
                *slot = self.get(key)?;
            }
        }
        Ok(base)
    }

    pub fn dims(&self) -> Result<ModelDims> {
        self.dims_from(ModelDims::for_task(self.task()?))
    }

    /// `key = value` lines in key order.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
