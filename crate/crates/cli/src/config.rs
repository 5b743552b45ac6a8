//! The settings file. Every field can also be set by a flag, and flags win.
//! The API key is never part of it: only the name of the environment
//! variable holding the key is.

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::{Deserialize, Serialize};

use guidedec::pda::{CacheCapacity, PdaOptions};
use guidedec::{Backend, BuildOptions};
use guidedec_eval::{EvalConfig, GenOptions};

use crate::UsageError;

pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub log_level: String,
    /// Worker threads; 0 means one per logical core.
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub constraint: ConstraintConfig,
    pub pda: PdaConfig,
    pub decode: DecodeSection,
    pub eval: EvalSection,
    pub gen: GenOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            log_level: "warn".into(),
            jobs: 0,
            out: None,
            constraint: ConstraintConfig::default(),
            pda: PdaConfig::default(),
            decode: DecodeSection::default(),
            eval: EvalSection::default(),
            gen: GenOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    pub backend: Option<Backend>,
    pub regex: Option<String>,
    pub grammar: Option<PathBuf>,
    pub json_schema: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// A compiled regex index to decode with instead of compiling.
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdaConfig {
    /// A number (0 disables caching) or `unbounded`.
    pub cache: String,
    pub max_configs: usize,
    pub inline_max_refs: usize,
    pub cache_stack_depth: usize,
    pub enforcer_memo: Option<usize>,
}

impl Default for PdaConfig {
    fn default() -> Self {
        let d = PdaOptions::default();
        Self {
            cache: d.cache.to_string(),
            max_configs: d.max_configs,
            inline_max_refs: d.inline_max_refs,
            cache_stack_depth: d.cache_stack_depth,
            enforcer_memo: None,
        }
    }
}

impl PdaConfig {
    pub fn build_options(&self) -> Result<BuildOptions, UsageError> {
        let cache: CacheCapacity = self.cache.parse().map_err(UsageError)?;
        Ok(BuildOptions {
            pda: PdaOptions {
                cache,
                max_configs: self.max_configs,
                inline_max_refs: self.inline_max_refs,
                cache_stack_depth: self.cache_stack_depth,
            },
            enforcer_memo: self.enforcer_memo,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    /// `mock:random:<seed>`, `mock:adversarial:<seed>` or `remote:<url>`.
    pub source: String,
    pub max_tokens: usize,
    pub temperature: f32,
    pub greedy: bool,
    pub seed: u64,
}

impl Default for DecodeSection {
    fn default() -> Self {
        let d = guidedec::decoder::DecodeConfig::default();
        Self {
            source: "mock:random:0".into(),
            max_tokens: d.max_tokens,
            temperature: d.temperature,
            greedy: d.greedy,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub dataset: Option<PathBuf>,
    /// File holding the system prompt; replaces `settings.templates.system_prompt`.
    pub system_prompt_file: Option<PathBuf>,
    pub settings: EvalConfig,
}

fn secret_hint(text: &str) -> Option<&'static str> {
    let lowered = text.to_ascii_lowercase();
    ["api_key =", "api_key=", "apikey", "password", "bearer "]
        .into_iter()
        .find(|k| lowered.contains(k))
}

pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    if let Some(k) = secret_hint(&text) {
        return Err(UsageError(format!(
            "{} looks like it contains a credential ({k:?}); credentials are read only from the environment variable named by eval.settings.client.api_key_env",
            path.display()
        ))
        .into());
    }
    toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

/// Writes the fully resolved settings as `dest`.
pub fn write_resolved(cfg: &RunConfig, dest: &Path) -> anyhow::Result<()> {
    if let Some(dir) = dest.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let text = toml::to_string(cfg).context("serializing resolved config")?;
    std::fs::write(dest, text).with_context(|| format!("writing {}", dest.display()))
}
