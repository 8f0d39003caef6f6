//! The run manifest: one TOML file describing dataset paths, the gateway,
//! and the run settings. The raw manifest is copied verbatim into the
//! output directory before any model call, and a resolved metadata file
//! records template hashes and effective settings next to it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use migrec_core::gateway::{
    Gateway, HttpProvider, MockProvider, ProviderRegistry, RetryPolicy, SamplingConfig,
};
use migrec_core::prompt::PromptSet;
use migrec_core::recommend::{AblationMode, PromptStrategy};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub records: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    /// `"mock"` or the name of an entry in `[[providers]]`.
    pub provider: String,
    pub model_id: String,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_parallel")]
    pub parallel: usize,
    /// 0 means unlimited.
    #[serde(default)]
    pub requests_per_minute: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_retry_max_ms")]
    pub retry_max_ms: u64,
    #[serde(default)]
    pub sampling: SamplingSection,
}

fn default_parallel() -> usize {
    4
}
fn default_max_retries() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    250
}
fn default_retry_max_ms() -> u64 {
    8_000
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let defaults = SamplingConfig::default();
        SamplingSection {
            temperature: defaults.temperature,
            top_p: defaults.top_p,
            max_output_tokens: defaults.max_output_tokens,
        }
    }
}

impl From<SamplingSection> for SamplingConfig {
    fn from(section: SamplingSection) -> Self {
        SamplingConfig {
            temperature: section.temperature,
            top_p: section.top_p,
            max_output_tokens: section.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub name: String,
    pub endpoint: String,
    pub credential_env: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Demonstrations retrieved per query.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_strategy")]
    pub strategy: PromptStrategy,
    #[serde(default = "default_ablation")]
    pub ablation: AblationMode,
    pub out_dir: PathBuf,
    /// Extra cache-bypassing attempts after an unparseable response.
    #[serde(default)]
    pub reask_on_parse_error: u32,
    /// Recorded for forward compatibility; local tie-breaks are rule-based.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
}

fn default_k() -> usize {
    3
}
fn default_strategy() -> PromptStrategy {
    PromptStrategy::Default
}
fn default_ablation() -> AblationMode {
    AblationMode::Full
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default)]
    pub dataset: DatasetPaths,
    pub gateway: GatewaySection,
    #[serde(default)]
    pub providers: Vec<ProviderSection>,
    pub run: RunSection,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<(RunManifest, String)> {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        let manifest: RunManifest =
            toml::from_str(&raw).with_context(|| format!("invalid manifest {}", path.display()))?;
        Ok((manifest, raw))
    }

    /// Templates for this run: built-ins overlaid with `run.prompts_dir`.
    pub fn prompt_set(&self) -> Result<PromptSet> {
        match &self.run.prompts_dir {
            Some(dir) => PromptSet::load_dir(dir)
                .with_context(|| format!("cannot load prompts from {}", dir.display())),
            None => Ok(PromptSet::builtin()),
        }
    }

    /// Build the gateway described by `[gateway]` / `[[providers]]`.
    pub fn build_gateway(&self) -> Result<Gateway> {
        let section = &self.gateway;
        let provider: Arc<dyn migrec_core::gateway::ChatProvider> = if section.provider == "mock" {
            Arc::new(MockProvider::rule_based())
        } else {
            let mut registry = ProviderRegistry::new();
            for entry in &self.providers {
                registry
                    .register(&entry.name, &entry.endpoint, &entry.credential_env)
                    .with_context(|| format!("provider {:?}", entry.name))?;
            }
            let config = registry.get(&section.provider).with_context(|| {
                format!(
                    "gateway.provider {:?} has no matching [[providers]] entry",
                    section.provider
                )
            })?;
            Arc::new(HttpProvider::new(config)?)
        };

        let mut gateway = Gateway::new(provider)
            .with_model(section.model_id.clone())
            .with_sampling(section.sampling.into())
            .with_retry(RetryPolicy {
                max_retries: section.max_retries,
                base_delay_ms: section.retry_base_ms,
                max_delay_ms: section.retry_max_ms,
            })
            .with_max_concurrency(section.parallel);
        if let Some(dir) = &section.cache_dir {
            gateway = gateway.with_cache_dir(dir);
        }
        if section.requests_per_minute > 0.0 {
            gateway = gateway.with_rate_limit(section.requests_per_minute);
        }
        Ok(gateway)
    }

    /// Check that every path the current command will read exists.
    pub fn require_paths(&self, paths: &[(&str, Option<&PathBuf>)]) -> Result<()> {
        for (what, path) in paths {
            match path {
                None => bail!("manifest is missing dataset.{what}"),
                Some(p) if !p.exists() => {
                    bail!("dataset.{what} path {} does not exist", p.display())
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Effective run settings written next to the verbatim manifest copy.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub schema: String,
    pub model_id: String,
    pub provider: String,
    pub sampling: SamplingSection,
    pub k: usize,
    pub strategy: PromptStrategy,
    pub ablation: AblationMode,
    pub seed: u64,
    pub template_hashes: BTreeMap<String, String>,
}

/// Copy the manifest verbatim and write resolved metadata, both before any
/// model call.
pub fn stage_run_dir(
    out_dir: &Path,
    raw_manifest: &str,
    manifest: &RunManifest,
    templates: &PromptSet,
    ablation: AblationMode,
) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create run dir {}", out_dir.display()))?;
    fs::write(out_dir.join("manifest.toml"), raw_manifest)?;
    let metadata = RunMetadata {
        schema: migrec_core::jsonl::SCHEMA_VERSION.to_string(),
        model_id: manifest.gateway.model_id.clone(),
        provider: manifest.gateway.provider.clone(),
        sampling: manifest.gateway.sampling,
        k: manifest.run.k,
        strategy: manifest.run.strategy,
        ablation,
        seed: manifest.run.seed,
        template_hashes: templates.content_hashes(),
    };
    let json = serde_json::to_string_pretty(&metadata)?;
    fs::write(out_dir.join("run_meta.json"), json + "\n")?;
    Ok(())
}
