//! Recommendation prompt assembly, the ranked-list parser, and the
//! retrieve -> prompt -> complete -> parse pipeline for one query.
//!
//! Prompts are built from marked sections so tests can assert exactly which
//! sections an ablation mode rendered. The ablation mode decides *which*
//! sections exist; the strategy decides *what* fills the demonstration slot
//! and whether a reasoning instruction is appended.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depfile::normalize_library_name;
use crate::gateway::{Gateway, GatewayError};
use crate::prompt::{PromptSet, TemplateError};
use crate::retrieval::{Bm25Index, Query, RetrievedDemo};

/// Marker opening the demonstrations section.
pub const SECTION_DEMOS: &str = "## Migration demonstrations";
/// Marker opening the source-library section.
pub const SECTION_SOURCE: &str = "## Source library";
/// Marker opening the migration-intent section.
pub const SECTION_INTENT: &str = "## Migration intent";
/// Marker opening the intent-types section.
pub const SECTION_TYPES: &str = "## Intent types";
/// Marker opening the output-format section.
pub const SECTION_FORMAT: &str = "## Output format";

/// How many candidates the model is asked for.
pub const RANKED_LIST_LEN: usize = 10;

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("query {query_id}: {source}")]
    Gateway {
        query_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("query {query_id}: no ranked list found in response")]
    ParseFailed { query_id: String, raw: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStrategy {
    /// Retrieved demonstrations as worked examples.
    Default,
    /// One fixed curated exemplar in the demonstration slot; retrieval is
    /// skipped entirely.
    OneShot,
    /// Default demonstrations plus a step-by-step reasoning instruction;
    /// the final numbered list must come last.
    ChainOfThought,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    Full,
    Vanilla,
    WithoutRetrieval,
    WithoutIntent,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::Full,
        AblationMode::Vanilla,
        AblationMode::WithoutRetrieval,
        AblationMode::WithoutIntent,
    ];

    pub fn retrieval_enabled(&self) -> bool {
        matches!(self, AblationMode::Full | AblationMode::WithoutIntent)
    }

    pub fn intent_enabled(&self) -> bool {
        matches!(self, AblationMode::Full | AblationMode::WithoutRetrieval)
    }

    pub fn name(&self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::Vanilla => "vanilla",
            AblationMode::WithoutRetrieval => "without-retrieval",
            AblationMode::WithoutIntent => "without-intent",
        }
    }
}

/// One recommendation with its audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub query_id: String,
    /// Ranked, normalized, deduplicated names; at most 10. Empty only for
    /// failed queries, which carry `error`.
    pub candidates: Vec<String>,
    pub raw_response: String,
    pub prompt_chars: usize,
    /// Provenance ids of the retrieved demonstrations shown to the model.
    pub demos_used: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Render the system and user texts for one query.
///
/// Preconditions (enforced here, arranged by the runner): demos must be
/// empty when retrieval is disabled or the strategy is one-shot, and
/// non-empty otherwise.
pub fn build_prompt(
    query: &Query,
    demos: &[RetrievedDemo],
    strategy: PromptStrategy,
    ablation: AblationMode,
    templates: &PromptSet,
) -> Result<(String, String), RecommendError> {
    let wants_retrieved_demos = ablation.retrieval_enabled() && strategy != PromptStrategy::OneShot;
    if !wants_retrieved_demos && !demos.is_empty() {
        return Err(RecommendError::Precondition(format!(
            "{} demos supplied, but {} with the {:?} strategy takes none",
            demos.len(),
            ablation.name(),
            strategy
        )));
    }
    if wants_retrieved_demos && demos.is_empty() {
        return Err(RecommendError::Precondition(format!(
            "no demos supplied, but {} with the {:?} strategy requires them",
            ablation.name(),
            strategy
        )));
    }

    let system_text = templates.get("recommend_system")?.render(&[])?;
    let mut sections: Vec<String> = Vec::new();

    if ablation.retrieval_enabled() {
        let mut blocks: Vec<String> = Vec::new();
        if strategy == PromptStrategy::OneShot {
            blocks.push(templates.get("oneshot_exemplar")?.render(&[])?);
        } else {
            let demo_template = templates.get("recommend_demo")?;
            for demo in demos {
                let intent = if demo.entity.intents.trim().is_empty() {
                    "(none)".to_string()
                } else {
                    demo.entity.intents.clone()
                };
                let types = if demo.entity.intent_types.is_empty() {
                    "(none)".to_string()
                } else {
                    demo.entity.intent_types.join(", ")
                };
                blocks.push(demo_template.render(&[
                    ("source", demo.entity.source.as_str()),
                    ("intent", intent.as_str()),
                    ("intent_types", types.as_str()),
                    ("target", demo.entity.target.as_str()),
                ])?);
            }
        }
        sections.push(format!("{SECTION_DEMOS}\n\n{}", blocks.join("\n\n")));
    }

    sections.push(format!("{SECTION_SOURCE}\n{}", query.source));

    if ablation.intent_enabled() {
        let intent = if query.intents.trim().is_empty() {
            "(none)"
        } else {
            query.intents.as_str()
        };
        sections.push(format!("{SECTION_INTENT}\n{intent}"));
        let types = if query.intent_types.is_empty() {
            "(none)".to_string()
        } else {
            query.intent_types.join(", ")
        };
        sections.push(format!("{SECTION_TYPES}\n{types}"));
    }

    let n = RANKED_LIST_LEN.to_string();
    let mut format_text = templates
        .get("recommend_format")?
        .render(&[("n", n.as_str())])?;
    if strategy == PromptStrategy::ChainOfThought {
        format_text.push_str("\n\n");
        format_text.push_str(&templates.get("recommend_cot")?.render(&[])?);
    }
    sections.push(format!("{SECTION_FORMAT}\n{format_text}"));

    Ok((system_text, sections.join("\n\n")))
}

/// Extract the ranked names from a model response.
///
/// Takes the *last* block of consecutive `1.`/`1)` numbered lines (so
/// reasoning text above the final answer is ignored), strips markdown
/// wrapping and parenthetical glosses from each line, normalizes the names,
/// and deduplicates preserving first occurrence, truncated to 10.
pub fn parse_ranked_list(raw: &str) -> Result<Vec<String>, String> {
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for line in raw.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match numbered_payload(trimmed) {
            Some(payload) => current.push(payload),
            None => {
                if !current.is_empty() {
                    groups.push(std::mem::take(&mut current));
                }
            }
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }

    let Some(last_group) = groups.last() else {
        return Err("no numbered lines in response".to_string());
    };
    let mut names: Vec<String> = Vec::new();
    for payload in last_group {
        let Some(name) = clean_candidate(payload) else {
            continue;
        };
        if !names.contains(&name) {
            names.push(name);
        }
        if names.len() == RANKED_LIST_LEN {
            break;
        }
    }
    if names.is_empty() {
        return Err("numbered lines contained no library names".to_string());
    }
    Ok(names)
}

fn numbered_payload(line: &str) -> Option<String> {
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 || digits > 3 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    Some(rest.trim().to_string())
}

/// Reduce one numbered-line payload to a normalized library name.
fn clean_candidate(payload: &str) -> Option<String> {
    let stripped: String = payload
        .chars()
        .filter(|c| !matches!(c, '`' | '*' | '"' | '\''))
        .collect();
    let mut name_part = stripped.trim();
    // Cut parenthetical or dashed glosses: "cryptography (maintained)".
    for separator in [" (", " -", " \u{2014}", " \u{2013}", ": "] {
        if let Some(pos) = name_part.find(separator) {
            name_part = &name_part[..pos];
        }
    }
    let token = name_part.split_whitespace().next()?;
    let token = token.trim_end_matches([',', '.', ';', ':']);
    normalize_library_name(token).ok()
}

/// Full per-query pipeline: retrieve (when the mode and strategy call for
/// it), build the prompt, call the gateway, parse the ranked list.
#[allow(clippy::too_many_arguments)]
pub fn recommend(
    query: &Query,
    query_id: &str,
    index: Option<&Bm25Index>,
    gateway: &Gateway,
    templates: &PromptSet,
    strategy: PromptStrategy,
    ablation: AblationMode,
    k: usize,
    exclude_record: Option<&str>,
) -> Result<Recommendation, RecommendError> {
    recommend_with_reask(
        query,
        query_id,
        index,
        gateway,
        templates,
        strategy,
        ablation,
        k,
        exclude_record,
        0,
    )
}

/// [`recommend`] with up to `reask_on_parse_error` extra attempts after an
/// unparseable response. Re-asks bypass the response cache (a sampled
/// provider may answer differently); there is no re-ask on gateway errors.
#[allow(clippy::too_many_arguments)]
pub fn recommend_with_reask(
    query: &Query,
    query_id: &str,
    index: Option<&Bm25Index>,
    gateway: &Gateway,
    templates: &PromptSet,
    strategy: PromptStrategy,
    ablation: AblationMode,
    k: usize,
    exclude_record: Option<&str>,
    reask_on_parse_error: u32,
) -> Result<Recommendation, RecommendError> {
    let demos: Vec<RetrievedDemo> =
        if ablation.retrieval_enabled() && strategy != PromptStrategy::OneShot {
            let index = index.ok_or_else(|| {
                RecommendError::Precondition(format!(
                    "ablation {} needs a retrieval index",
                    ablation.name()
                ))
            })?;
            index.retrieve_filtered(query, k, exclude_record)
        } else {
            Vec::new()
        };

    let (system_text, user_text) = build_prompt(query, &demos, strategy, ablation, templates)?;
    let mut last_raw = String::new();
    for attempt in 0..=reask_on_parse_error {
        let result = if attempt == 0 {
            gateway.chat(&system_text, &user_text)
        } else {
            gateway.chat_uncached(&system_text, &user_text)
        };
        let response = result.map_err(|source| RecommendError::Gateway {
            query_id: query_id.to_string(),
            source,
        })?;
        match parse_ranked_list(&response.text) {
            Ok(candidates) => {
                return Ok(Recommendation {
                    query_id: query_id.to_string(),
                    candidates,
                    raw_response: response.text,
                    prompt_chars: system_text.chars().count() + user_text.chars().count(),
                    demos_used: demos.iter().map(|d| d.entity.provenance.clone()).collect(),
                    error: None,
                })
            }
            Err(_) => last_raw = response.text,
        }
    }
    Err(RecommendError::ParseFailed {
        query_id: query_id.to_string(),
        raw: last_raw,
    })
}

/// Which section markers a prompt rendered; the ablation algebra check.
pub fn section_markers(user_text: &str) -> Vec<&'static str> {
    [
        SECTION_DEMOS,
        SECTION_SOURCE,
        SECTION_INTENT,
        SECTION_TYPES,
        SECTION_FORMAT,
    ]
    .into_iter()
    .filter(|marker| user_text.contains(marker))
    .collect()
}
