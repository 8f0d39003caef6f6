//! Prompt templates as editable text assets.
//!
//! Every template ships as an embedded default and can be overridden by a
//! file of the same name in an operator-supplied directory. A template file
//! may start with a block of `#` comment lines, which are stripped; the body
//! uses `{{placeholder}}` substitution. The SHA-256 of the raw asset is kept
//! so runs can record exactly which template text they used.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template {0:?}")]
    Unknown(String),
    #[error("template {name:?} has no value for placeholder {placeholder:?}")]
    UnresolvedPlaceholder { name: String, placeholder: String },
    #[error("cannot read template dir {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Names of all built-in templates.
pub const TEMPLATE_NAMES: [&str; 8] = [
    "intent_generation",
    "intent_classification",
    "analogous_screening",
    "recommend_system",
    "recommend_format",
    "recommend_demo",
    "recommend_cot",
    "oneshot_exemplar",
];

const BUILTINS: [(&str, &str); 8] = [
    (
        "intent_generation",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../prompts/intent_generation.txt"
        )),
    ),
    (
        "intent_classification",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../prompts/intent_classification.txt"
        )),
    ),
    (
        "analogous_screening",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../prompts/analogous_screening.txt"
        )),
    ),
    (
        "recommend_system",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../prompts/recommend_system.txt"
        )),
    ),
    (
        "recommend_format",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../prompts/recommend_format.txt"
        )),
    ),
    (
        "recommend_demo",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../prompts/recommend_demo.txt"
        )),
    ),
    (
        "recommend_cot",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../prompts/recommend_cot.txt"
        )),
    ),
    (
        "oneshot_exemplar",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../prompts/oneshot_exemplar.txt"
        )),
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: String,
    /// Comment-stripped body used for rendering.
    pub body: String,
    /// SHA-256 hex digest of the raw asset bytes.
    pub sha256: String,
}

impl PromptTemplate {
    pub fn from_raw(name: &str, raw: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(raw.as_bytes());
        PromptTemplate {
            name: name.to_string(),
            body: strip_leading_comments(raw),
            sha256: format!("{:x}", hasher.finalize()),
        }
    }

    /// Substitute `{{key}}` placeholders. Every placeholder in the body must
    /// be covered by `vars`; unused vars are fine.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = self.body.clone();
        for (key, value) in vars {
            out = out.replace(&format!("{{{{{key}}}}}"), value);
        }
        if let Some(start) = out.find("{{") {
            let tail = &out[start + 2..];
            let placeholder = tail.split("}}").next().unwrap_or("").to_string();
            return Err(TemplateError::UnresolvedPlaceholder {
                name: self.name.clone(),
                placeholder,
            });
        }
        Ok(out)
    }
}

/// Strip the leading block of `#` comment lines plus any blank lines that
/// immediately follow it.
fn strip_leading_comments(raw: &str) -> String {
    let mut lines = raw.lines().peekable();
    while let Some(line) = lines.peek() {
        if line.trim_start().starts_with('#') || line.trim().is_empty() {
            lines.next();
        } else {
            break;
        }
    }
    let body: Vec<&str> = lines.collect();
    body.join("\n")
}

/// The full set of templates for a run.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl PromptSet {
    /// All embedded defaults.
    pub fn builtin() -> Self {
        let templates = BUILTINS
            .iter()
            .map(|(name, raw)| (name.to_string(), PromptTemplate::from_raw(name, raw)))
            .collect();
        PromptSet { templates }
    }

    /// Built-in defaults with per-file overrides from `dir` (`<name>.txt`).
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let raw = fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                set.templates
                    .insert(name.to_string(), PromptTemplate::from_raw(name, &raw));
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(name)
            .ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    /// `name -> sha256` for run metadata.
    pub fn content_hashes(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(name, t)| (name.clone(), t.sha256.clone()))
            .collect()
    }
}
