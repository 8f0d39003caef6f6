//! The mined migration record, the unit every pipeline stage consumes and
//! produces.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// One observed `source -> target` library replacement with provenance.
///
/// `intent`, `intent_types` and `masked_intent` are filled by the enrichment
/// stage; a freshly mined record carries only the diff and commit facts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationRecord {
    pub repo_id: String,
    pub commit_hash: String,
    pub date: DateTime<Utc>,
    /// Normalized name of the removed library.
    pub source: String,
    /// Normalized name of the added library.
    pub target: String,
    pub commit_message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    /// Intent-type labels as `Category/Subcategory` strings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_types: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masked_intent: Option<String>,
}

impl MigrationRecord {
    /// Stable identifier, unique after mining-time deduplication.
    pub fn id(&self) -> String {
        let short = &self.commit_hash[..self.commit_hash.len().min(12)];
        format!(
            "{}:{}:{}->{}",
            self.repo_id, short, self.source, self.target
        )
    }

    /// The intent text a downstream query should use: the masked variant
    /// when present, otherwise the raw intent, otherwise empty.
    pub fn query_intent(&self) -> &str {
        self.masked_intent
            .as_deref()
            .or(self.intent.as_deref())
            .unwrap_or("")
    }

    pub fn intent_type_labels(&self) -> &[String] {
        self.intent_types.as_deref().unwrap_or(&[])
    }
}
