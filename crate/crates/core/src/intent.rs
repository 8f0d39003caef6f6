//! Intent enrichment of mined records: intent generation from commit
//! messages, classification into the closed intent-type taxonomy,
//! analogous-pair screening, target-name masking, and the repo-grouped
//! date-ordered train/test split.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depfile::normalize_library_name;
use crate::gateway::{Gateway, GatewayError};
use crate::parallel::parallel_map_ordered;
use crate::prompt::{PromptSet, PromptTemplate, TemplateError};
use crate::record::MigrationRecord;

#[derive(Debug, Error)]
pub enum IntentError {
    #[error("gateway error{}", record.as_deref().map(|r| format!(" for {r}")).unwrap_or_default())]
    Gateway {
        record: Option<String>,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("analogous verdict is neither YES nor NO: {raw:?}")]
    AmbiguousVerdict { raw: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("need at least 2 repositories to split without leakage, found {0}")]
    TooFewRepos(usize),
}

fn gateway_err(source: GatewayError) -> IntentError {
    IntentError::Gateway {
        record: None,
        source,
    }
}

// ---------------------------------------------------------------------------
// Taxonomy

/// The three intent categories plus the catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntentCategory {
    SourceLibraryIssues,
    TargetLibraryAdvantages,
    ProjectSpecific,
    Other,
}

impl IntentCategory {
    pub fn display_name(&self) -> &'static str {
        match self {
            IntentCategory::SourceLibraryIssues => "Source Library Issues",
            IntentCategory::TargetLibraryAdvantages => "Target Library Advantages",
            IntentCategory::ProjectSpecific => "Project Specific",
            IntentCategory::Other => "Other",
        }
    }
}

/// The 14 subcategories plus the catch-all. Each belongs to exactly one
/// category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntentSubcategory {
    NotMaintainedOutdated,
    SecurityVulnerability,
    BugDefectIssues,
    Usability,
    EnhancedFeatures,
    Performance,
    SizeComplexity,
    Popularity,
    StabilityMaturity,
    Activity,
    Integration,
    Simplification,
    License,
    OrganizationInfluence,
    Other,
}

impl IntentSubcategory {
    pub const ALL: [IntentSubcategory; 15] = [
        IntentSubcategory::NotMaintainedOutdated,
        IntentSubcategory::SecurityVulnerability,
        IntentSubcategory::BugDefectIssues,
        IntentSubcategory::Usability,
        IntentSubcategory::EnhancedFeatures,
        IntentSubcategory::Performance,
        IntentSubcategory::SizeComplexity,
        IntentSubcategory::Popularity,
        IntentSubcategory::StabilityMaturity,
        IntentSubcategory::Activity,
        IntentSubcategory::Integration,
        IntentSubcategory::Simplification,
        IntentSubcategory::License,
        IntentSubcategory::OrganizationInfluence,
        IntentSubcategory::Other,
    ];

    pub fn display_name(&self) -> &'static str {
        match self {
            IntentSubcategory::NotMaintainedOutdated => "Not Maintained/Outdated",
            IntentSubcategory::SecurityVulnerability => "Security Vulnerability",
            IntentSubcategory::BugDefectIssues => "Bug/Defect Issues",
            IntentSubcategory::Usability => "Usability",
            IntentSubcategory::EnhancedFeatures => "Enhanced Features",
            IntentSubcategory::Performance => "Performance",
            IntentSubcategory::SizeComplexity => "Size/Complexity",
            IntentSubcategory::Popularity => "Popularity",
            IntentSubcategory::StabilityMaturity => "Stability/Maturity",
            IntentSubcategory::Activity => "Activity",
            IntentSubcategory::Integration => "Integration",
            IntentSubcategory::Simplification => "Simplification",
            IntentSubcategory::License => "License",
            IntentSubcategory::OrganizationInfluence => "Organization Influence",
            IntentSubcategory::Other => "Other",
        }
    }

    pub fn category(&self) -> IntentCategory {
        match self {
            IntentSubcategory::NotMaintainedOutdated
            | IntentSubcategory::SecurityVulnerability
            | IntentSubcategory::BugDefectIssues => IntentCategory::SourceLibraryIssues,
            IntentSubcategory::Usability
            | IntentSubcategory::EnhancedFeatures
            | IntentSubcategory::Performance
            | IntentSubcategory::SizeComplexity
            | IntentSubcategory::Popularity
            | IntentSubcategory::StabilityMaturity
            | IntentSubcategory::Activity => IntentCategory::TargetLibraryAdvantages,
            IntentSubcategory::Integration
            | IntentSubcategory::Simplification
            | IntentSubcategory::License
            | IntentSubcategory::OrganizationInfluence => IntentCategory::ProjectSpecific,
            IntentSubcategory::Other => IntentCategory::Other,
        }
    }
}

/// A validated (category, subcategory) pair. Construction goes through the
/// subcategory, so an inconsistent pair cannot exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntentTaxonomy {
    category: IntentCategory,
    subcategory: IntentSubcategory,
}

impl IntentTaxonomy {
    pub fn new(subcategory: IntentSubcategory) -> Self {
        IntentTaxonomy {
            category: subcategory.category(),
            subcategory,
        }
    }

    pub fn other() -> Self {
        Self::new(IntentSubcategory::Other)
    }

    pub fn category(&self) -> IntentCategory {
        self.category
    }

    pub fn subcategory(&self) -> IntentSubcategory {
        self.subcategory
    }

    /// Canonical `Category/Subcategory` string.
    pub fn label(&self) -> String {
        format!(
            "{}/{}",
            self.category.display_name(),
            self.subcategory.display_name()
        )
    }

    /// Tolerant parse of a model-emitted label. Accepts the canonical form,
    /// a bare subcategory name, case and punctuation variants, and the
    /// `Project Specific Reasons` / `Target Advantages` aliases. Returns
    /// `None` for anything outside the closed enumeration, including a
    /// category/subcategory pair that does not belong together.
    pub fn parse_label(raw: &str) -> Option<IntentTaxonomy> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return None;
        }
        if let Some((category_part, sub_part)) = trimmed.split_once('/') {
            let sub = subcategory_from_folded(&fold(sub_part))?;
            let taxonomy = IntentTaxonomy::new(sub);
            match category_from_folded(&fold(category_part)) {
                Some(category) if category == taxonomy.category => Some(taxonomy),
                Some(_) => None,
                // Unrecognized category text with a valid subcategory is
                // accepted; the subcategory determines the pair.
                None => Some(taxonomy),
            }
        } else {
            let folded = fold(trimmed);
            if let Some(sub) = subcategory_from_folded(&folded) {
                return Some(IntentTaxonomy::new(sub));
            }
            // A bare "Other" is the complete catch-all label.
            if category_from_folded(&folded) == Some(IntentCategory::Other) {
                return Some(IntentTaxonomy::other());
            }
            None
        }
    }
}

fn fold(text: &str) -> String {
    text.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

fn subcategory_from_folded(folded: &str) -> Option<IntentSubcategory> {
    IntentSubcategory::ALL
        .into_iter()
        .find(|sub| fold(sub.display_name()) == folded)
}

fn category_from_folded(folded: &str) -> Option<IntentCategory> {
    match folded {
        "sourcelibraryissues" => Some(IntentCategory::SourceLibraryIssues),
        "targetlibraryadvantages" | "targetadvantages" => {
            Some(IntentCategory::TargetLibraryAdvantages)
        }
        "projectspecific" | "projectspecificreasons" => Some(IntentCategory::ProjectSpecific),
        "other" => Some(IntentCategory::Other),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// LLM-backed operations

/// Generate a migration intent from a commit message. An empty message
/// short-circuits to `None` without a model call; a response of `NULL`
/// (case-insensitive, trimmed) also means no intent.
pub fn generate_intent(
    commit_message: &str,
    gateway: &Gateway,
    template: &PromptTemplate,
) -> Result<Option<String>, IntentError> {
    let message = commit_message.trim();
    if message.is_empty() {
        return Ok(None);
    }
    let user_text = template.render(&[("commit_message", message)])?;
    let response = gateway.chat("", &user_text).map_err(gateway_err)?;
    let intent = response.text.trim();
    if intent.is_empty() || intent.eq_ignore_ascii_case("null") {
        Ok(None)
    } else {
        Ok(Some(intent.to_string()))
    }
}

/// Labels extracted from one classification response.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedIntents {
    pub labels: Vec<IntentTaxonomy>,
    /// How many emitted labels fell outside the closed enumeration and were
    /// folded into `Other/Other`.
    pub unknown_labels: usize,
}

/// Classify an intent into one or more taxonomy labels. Unknown labels map
/// to `Other/Other` and are counted, so the output never leaves the closed
/// enumeration.
pub fn classify_intent(
    intent: &str,
    gateway: &Gateway,
    template: &PromptTemplate,
) -> Result<ClassifiedIntents, IntentError> {
    if intent.trim().is_empty() {
        return Err(IntentError::InvalidInput("intent is empty".to_string()));
    }
    let user_text = template.render(&[("intent", intent.trim())])?;
    let response = gateway.chat("", &user_text).map_err(gateway_err)?;

    let mut labels: Vec<IntentTaxonomy> = Vec::new();
    let mut unknown = 0usize;
    for line in response.text.lines() {
        let line = strip_list_prefix(line.trim());
        if line.is_empty() || line.eq_ignore_ascii_case("labels:") {
            continue;
        }
        for chunk in line.split([',', ';']) {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            match IntentTaxonomy::parse_label(chunk) {
                Some(taxonomy) => {
                    if !labels.contains(&taxonomy) {
                        labels.push(taxonomy);
                    }
                }
                None => {
                    unknown += 1;
                    if !labels.contains(&IntentTaxonomy::other()) {
                        labels.push(IntentTaxonomy::other());
                    }
                }
            }
        }
    }
    if labels.is_empty() {
        unknown += 1;
        labels.push(IntentTaxonomy::other());
    }
    Ok(ClassifiedIntents {
        labels,
        unknown_labels: unknown,
    })
}

fn strip_list_prefix(line: &str) -> &str {
    let line = line.trim_start_matches(['-', '*']).trim_start();
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(stripped) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return stripped.trim_start();
        }
    }
    line
}

/// Ask the model whether `source -> target` is an analogous pair. The first
/// YES/NO token in the first line of the response decides; a response with
/// neither is an error, so the caller can exclude the pair conservatively.
pub fn screen_analogous(
    source: &str,
    target: &str,
    gateway: &Gateway,
    template: &PromptTemplate,
) -> Result<bool, IntentError> {
    if source == target {
        return Err(IntentError::InvalidInput(
            "source and target are identical".to_string(),
        ));
    }
    let user_text = template.render(&[("source", source), ("target", target)])?;
    let response = gateway.chat("", &user_text).map_err(gateway_err)?;
    let first_line = response.text.lines().next().unwrap_or("");
    for token in first_line.split(|c: char| !c.is_ascii_alphabetic()) {
        if token.eq_ignore_ascii_case("yes") {
            return Ok(true);
        }
        if token.eq_ignore_ascii_case("no") {
            return Ok(false);
        }
    }
    Err(IntentError::AmbiguousVerdict { raw: response.text })
}

// ---------------------------------------------------------------------------
// Masking

/// One replacement made while masking, kept for the human-review audit
/// trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEvent {
    /// Byte offset of the replaced span in the original intent.
    pub offset: usize,
    /// The span as it appeared.
    pub original: String,
}

/// Replace target-library mentions in an intent with `[MASK]`.
///
/// Masked forms: the target as written, its normalized form, every `/`
/// alias segment, and each segment's separator variants (`-`, `_`, `.`, and
/// the separator-stripped form). Matching is case-insensitive and
/// word-bounded, so the target inside an unrelated longer word survives.
pub fn mask_intent(intent: &str, target: &str) -> String {
    mask_intent_with_audit(intent, target).0
}

pub fn mask_intent_with_audit(intent: &str, target: &str) -> (String, Vec<MaskEvent>) {
    let variants = mask_variants(target);
    let mut out = String::with_capacity(intent.len());
    let mut events = Vec::new();
    let mut i = 0usize;
    'outer: while i < intent.len() {
        if intent.is_char_boundary(i) {
            for variant in &variants {
                let end = i + variant.len();
                if let Some(window) = intent.get(i..end) {
                    if window.eq_ignore_ascii_case(variant)
                        && boundary_before(intent, i)
                        && boundary_after(intent, end)
                    {
                        events.push(MaskEvent {
                            offset: i,
                            original: window.to_string(),
                        });
                        out.push_str("[MASK]");
                        i = end;
                        continue 'outer;
                    }
                }
            }
        }
        let ch = intent[i..].chars().next().expect("in-bounds char");
        out.push(ch);
        i += ch.len_utf8();
    }
    (out, events)
}

/// All spellings of the target that must not survive masking, longest first
/// so greedy scanning prefers the widest match.
fn mask_variants(target: &str) -> Vec<String> {
    let mut variants: BTreeSet<String> = BTreeSet::new();
    let trimmed = target.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    variants.insert(trimmed.to_lowercase());
    if let Ok(normalized) = normalize_library_name(trimmed) {
        variants.insert(normalized.clone());
        for segment in normalized.split('/').chain(trimmed.split('/')) {
            let segment = segment.trim().to_lowercase();
            if segment.is_empty() {
                continue;
            }
            variants.insert(segment.clone());
            let canonical = match normalize_library_name(&segment) {
                Ok(c) => c,
                Err(_) => continue,
            };
            variants.insert(canonical.replace('-', "_"));
            variants.insert(canonical.replace('-', "."));
            variants.insert(canonical.replace('-', ""));
            variants.insert(canonical);
        }
    }
    let mut ordered: Vec<String> = variants.into_iter().filter(|v| !v.is_empty()).collect();
    ordered.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    ordered
}

fn boundary_before(text: &str, pos: usize) -> bool {
    pos == 0
        || !text[..pos]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric())
}

fn boundary_after(text: &str, pos: usize) -> bool {
    pos >= text.len()
        || !text[pos..]
            .chars()
            .next()
            .is_some_and(|c| c.is_alphanumeric())
}

// ---------------------------------------------------------------------------
// Train/test split

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitOrder {
    /// Repos with the most recent migrations go to the training set.
    NewestFirst,
    /// Documented deviation flag: oldest repos go to the training set.
    OldestFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<MigrationRecord>,
    pub test: Vec<MigrationRecord>,
    /// Train:test ratio the split targets.
    pub ratio: (u8, u8),
}

/// Repo-grouped 8:2 split. Repos are ordered by their most recent migration
/// date (per `order`) and assigned whole to the training set while they fit
/// the 80% budget; everything else is test. No repo ever appears in both
/// sets. Within each set records stay in chronological order.
pub fn split_dataset(
    records: Vec<MigrationRecord>,
    order: SplitOrder,
) -> Result<DatasetSplit, SplitError> {
    let total = records.len();
    let mut repos: Vec<(String, Vec<MigrationRecord>)> = Vec::new();
    for record in records {
        match repos.iter_mut().find(|(id, _)| *id == record.repo_id) {
            Some((_, group)) => group.push(record),
            None => repos.push((record.repo_id.clone(), vec![record])),
        }
    }
    if repos.len() < 2 {
        return Err(SplitError::TooFewRepos(repos.len()));
    }

    fn most_recent(group: &[MigrationRecord]) -> chrono::DateTime<chrono::Utc> {
        group.iter().map(|r| r.date).max().expect("non-empty group")
    }
    repos.sort_by(|a, b| match order {
        SplitOrder::NewestFirst => most_recent(&b.1)
            .cmp(&most_recent(&a.1))
            .then(a.0.cmp(&b.0)),
        SplitOrder::OldestFirst => most_recent(&a.1)
            .cmp(&most_recent(&b.1))
            .then(a.0.cmp(&b.0)),
    });

    let budget = (0.8 * total as f64).round() as usize;
    let mut train_repos: Vec<(String, Vec<MigrationRecord>)> = Vec::new();
    let mut test_repos: Vec<(String, Vec<MigrationRecord>)> = Vec::new();
    let mut train_len = 0usize;
    for (id, group) in repos {
        if train_len + group.len() <= budget {
            train_len += group.len();
            train_repos.push((id, group));
        } else {
            test_repos.push((id, group));
        }
    }
    // Leakage-free splits need both sides non-empty; move one whole repo
    // across if the budget arithmetic left a side bare.
    if test_repos.is_empty() {
        let moved = train_repos.pop().expect("at least 2 repos");
        test_repos.push(moved);
    } else if train_repos.is_empty() {
        let moved = test_repos.remove(0);
        train_repos.push(moved);
    }

    fn flatten(groups: Vec<(String, Vec<MigrationRecord>)>) -> Vec<MigrationRecord> {
        let mut records: Vec<MigrationRecord> = groups.into_iter().flat_map(|(_, g)| g).collect();
        records.sort_by(|a, b| {
            a.date
                .cmp(&b.date)
                .then_with(|| a.repo_id.cmp(&b.repo_id))
                .then_with(|| a.commit_hash.cmp(&b.commit_hash))
                .then_with(|| a.source.cmp(&b.source))
                .then_with(|| a.target.cmp(&b.target))
        });
        records
    }
    Ok(DatasetSplit {
        train: flatten(train_repos),
        test: flatten(test_repos),
        ratio: (8, 2),
    })
}

// ---------------------------------------------------------------------------
// Record-level enrichment driver

#[derive(Debug, Clone)]
pub struct EnrichOptions {
    /// Max records enriched concurrently.
    pub parallel: usize,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        EnrichOptions { parallel: 4 }
    }
}

/// A record dropped during enrichment, with the reason kept for the reject
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    #[serde(flatten)]
    pub record: MigrationRecord,
    pub reject_reason: String,
}

/// One masking replacement attributed to a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskAuditEntry {
    pub record_id: String,
    pub offset: usize,
    pub original: String,
}

#[derive(Debug, Default)]
pub struct EnrichOutcome {
    pub enriched: Vec<MigrationRecord>,
    pub rejected_null_intent: Vec<RejectedRecord>,
    pub rejected_non_analogous: Vec<RejectedRecord>,
    pub masking_audit: Vec<MaskAuditEntry>,
    pub unknown_label_count: usize,
}

enum RecordOutcome {
    Enriched(Box<MigrationRecord>, Vec<MaskEvent>, usize),
    NullIntent(Box<MigrationRecord>),
    NonAnalogous(Box<MigrationRecord>, String),
}

/// Enrich every record: generate intent, screen the pair, classify, mask.
/// NULL-intent and non-analogous records land in reject lists instead of
/// the main output. Gateway errors abort with the record id attached.
pub fn enrich_records(
    records: Vec<MigrationRecord>,
    gateway: &Gateway,
    templates: &PromptSet,
    options: &EnrichOptions,
) -> Result<EnrichOutcome, IntentError> {
    let generation = templates.get("intent_generation")?;
    let classification = templates.get("intent_classification")?;
    let screening = templates.get("analogous_screening")?;

    let results = parallel_map_ordered(&records, options.parallel, |record| {
        enrich_one(record, gateway, generation, classification, screening).map_err(|e| match e {
            IntentError::Gateway { source, .. } => IntentError::Gateway {
                record: Some(record.id()),
                source,
            },
            other => other,
        })
    });

    let mut outcome = EnrichOutcome::default();
    for result in results {
        match result? {
            RecordOutcome::Enriched(record, events, unknown) => {
                let record_id = record.id();
                outcome
                    .masking_audit
                    .extend(events.into_iter().map(|e| MaskAuditEntry {
                        record_id: record_id.clone(),
                        offset: e.offset,
                        original: e.original,
                    }));
                outcome.unknown_label_count += unknown;
                outcome.enriched.push(*record);
            }
            RecordOutcome::NullIntent(record) => {
                outcome.rejected_null_intent.push(RejectedRecord {
                    record: *record,
                    reject_reason: "no migration intent in commit message".to_string(),
                })
            }
            RecordOutcome::NonAnalogous(record, reason) => {
                outcome.rejected_non_analogous.push(RejectedRecord {
                    record: *record,
                    reject_reason: reason,
                })
            }
        }
    }
    Ok(outcome)
}

fn enrich_one(
    record: &MigrationRecord,
    gateway: &Gateway,
    generation: &PromptTemplate,
    classification: &PromptTemplate,
    screening: &PromptTemplate,
) -> Result<RecordOutcome, IntentError> {
    let intent = match generate_intent(&record.commit_message, gateway, generation)? {
        Some(intent) => intent,
        None => return Ok(RecordOutcome::NullIntent(Box::new(record.clone()))),
    };
    match screen_analogous(&record.source, &record.target, gateway, screening) {
        Ok(true) => {}
        Ok(false) => {
            return Ok(RecordOutcome::NonAnalogous(
                Box::new(record.clone()),
                "screened as non-analogous".to_string(),
            ))
        }
        Err(IntentError::AmbiguousVerdict { raw }) => {
            let mut reason = String::from("ambiguous screening verdict: ");
            reason.extend(raw.chars().take(120));
            return Ok(RecordOutcome::NonAnalogous(
                Box::new(record.clone()),
                reason,
            ));
        }
        Err(other) => return Err(other),
    }
    let classified = classify_intent(&intent, gateway, classification)?;
    let (masked, events) = mask_intent_with_audit(&intent, &record.target);

    let mut enriched = record.clone();
    enriched.intent = Some(intent);
    enriched.intent_types = Some(classified.labels.iter().map(|t| t.label()).collect());
    enriched.masked_intent = Some(masked);
    Ok(RecordOutcome::Enriched(
        Box::new(enriched),
        events,
        classified.unknown_labels,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockProvider, MockStep};
    use chrono::{TimeZone, Utc};
    use std::sync::Arc;

    fn scripted_gateway(steps: Vec<MockStep>) -> Gateway {
        Gateway::new(Arc::new(MockProvider::scripted(steps)))
    }

    fn templates() -> PromptSet {
        PromptSet::builtin()
    }

    #[test]
    fn taxonomy_labels_roundtrip() {
        for sub in IntentSubcategory::ALL {
            let taxonomy = IntentTaxonomy::new(sub);
            let label = taxonomy.label();
            assert_eq!(
                IntentTaxonomy::parse_label(&label),
                Some(taxonomy),
                "{label}"
            );
        }
    }

    #[test]
    fn parse_label_tolerates_spacing_and_aliases() {
        let parsed = IntentTaxonomy::parse_label("Source Library Issues / Not Maintained/Outdated");
        assert_eq!(
            parsed,
            Some(IntentTaxonomy::new(
                IntentSubcategory::NotMaintainedOutdated
            ))
        );
        assert_eq!(
            IntentTaxonomy::parse_label("project specific reasons/integration"),
            Some(IntentTaxonomy::new(IntentSubcategory::Integration))
        );
        assert_eq!(
            IntentTaxonomy::parse_label("Security Vulnerability"),
            Some(IntentTaxonomy::new(
                IntentSubcategory::SecurityVulnerability
            ))
        );
        assert_eq!(
            IntentTaxonomy::parse_label("Other"),
            Some(IntentTaxonomy::other())
        );
    }

    #[test]
    fn parse_label_rejects_unknown_and_mismatched() {
        assert_eq!(IntentTaxonomy::parse_label("Banana"), None);
        assert_eq!(IntentTaxonomy::parse_label(""), None);
        // Valid category paired with a subcategory of a different category.
        assert_eq!(
            IntentTaxonomy::parse_label("Project Specific/Performance"),
            None
        );
    }

    #[test]
    fn generate_intent_extracts_text() {
        let gateway = scripted_gateway(vec![MockStep::Text(
            "Make it easier to support older distros.".into(),
        )]);
        let intent = generate_intent(
            "This will make it easier to support older distros. For example, Ubuntu 16.04 and Debian stable (9).",
            &gateway,
            templates().get("intent_generation").unwrap(),
        )
        .unwrap();
        assert!(intent.unwrap().contains("older distro"));
    }

    #[test]
    fn generate_intent_honors_null_sentinel() {
        let gateway = scripted_gateway(vec![MockStep::Text("NULL".into())]);
        let template = templates();
        let template = template.get("intent_generation").unwrap();
        assert_eq!(
            generate_intent("some msg", &gateway, template).unwrap(),
            None
        );

        let gateway = scripted_gateway(vec![MockStep::Text("  null \n".into())]);
        assert_eq!(
            generate_intent("some msg", &gateway, template).unwrap(),
            None
        );
    }

    #[test]
    fn generate_intent_short_circuits_empty_message() {
        let provider = Arc::new(MockProvider::scripted(vec![]));
        let gateway = Gateway::new(provider.clone());
        let template = templates();
        let result = generate_intent(
            "   \n",
            &gateway,
            template.get("intent_generation").unwrap(),
        );
        assert_eq!(result.unwrap(), None);
        assert_eq!(
            provider.calls(),
            0,
            "empty message must not reach the model"
        );
    }

    #[test]
    fn classify_parses_single_label() {
        let gateway = scripted_gateway(vec![MockStep::Text(
            "Source Library Issues / Not Maintained/Outdated".into(),
        )]);
        let template = templates();
        let out = classify_intent(
            "replace unmaintained lib",
            &gateway,
            template.get("intent_classification").unwrap(),
        )
        .unwrap();
        assert_eq!(
            out.labels,
            vec![IntentTaxonomy::new(
                IntentSubcategory::NotMaintainedOutdated
            )]
        );
        assert_eq!(out.unknown_labels, 0);
    }

    #[test]
    fn classify_maps_unknown_to_other_with_counter() {
        let gateway = scripted_gateway(vec![MockStep::Text("Banana".into())]);
        let template = templates();
        let out = classify_intent(
            "x",
            &gateway,
            template.get("intent_classification").unwrap(),
        )
        .unwrap();
        assert_eq!(out.labels, vec![IntentTaxonomy::other()]);
        assert_eq!(out.unknown_labels, 1);
    }

    #[test]
    fn classify_accepts_multiple_labels() {
        let gateway = scripted_gateway(vec![MockStep::Text(
            "Target Library Advantages/Performance\nProject Specific/Integration".into(),
        )]);
        let template = templates();
        let out = classify_intent(
            "faster and integrates",
            &gateway,
            template.get("intent_classification").unwrap(),
        )
        .unwrap();
        assert_eq!(out.labels.len(), 2);
        assert_eq!(out.labels[0].subcategory(), IntentSubcategory::Performance);
        assert_eq!(out.labels[1].subcategory(), IntentSubcategory::Integration);
    }

    #[test]
    fn classification_output_stays_inside_the_closed_enumeration() {
        use proptest::prelude::*;
        let mut runner = proptest::test_runner::TestRunner::default();
        runner
            .run(
                &proptest::string::string_regex("[ -~\\n]{0,80}").unwrap(),
                |response| {
                    let gateway = scripted_gateway(vec![MockStep::Text(response)]);
                    let template = templates();
                    let out = classify_intent(
                        "some intent",
                        &gateway,
                        template.get("intent_classification").unwrap(),
                    )
                    .unwrap();
                    prop_assert!(!out.labels.is_empty());
                    for taxonomy in &out.labels {
                        // Reconstructing from the subcategory must give the same
                        // pair: the category always belongs to the subcategory.
                        prop_assert_eq!(&IntentTaxonomy::new(taxonomy.subcategory()), taxonomy);
                    }
                    Ok(())
                },
            )
            .unwrap();
    }

    #[test]
    fn screening_verdicts() {
        let template = templates();
        let template = template.get("analogous_screening").unwrap();
        let yes = scripted_gateway(vec![MockStep::Text("YES".into())]);
        assert!(screen_analogous("pycrypto", "cryptography", &yes, template).unwrap());

        let no = scripted_gateway(vec![MockStep::Text("no, unrelated".into())]);
        assert!(!screen_analogous("flask", "numpy", &no, template).unwrap());

        let maybe = scripted_gateway(vec![MockStep::Text("maybe".into())]);
        assert!(matches!(
            screen_analogous("a", "b", &maybe, template),
            Err(IntentError::AmbiguousVerdict { .. })
        ));

        let unused = scripted_gateway(vec![]);
        assert!(matches!(
            screen_analogous("same", "same", &unused, template),
            Err(IntentError::InvalidInput(_))
        ));
    }

    #[test]
    fn masking_replaces_target_but_not_source() {
        assert_eq!(
            mask_intent("replace cryptography with pycryptodomex", "pycryptodomex"),
            "replace cryptography with [MASK]"
        );
    }

    #[test]
    fn masking_leaves_untouched_text_alone() {
        assert_eq!(
            mask_intent("speed up parsing", "cryptography"),
            "speed up parsing"
        );
    }

    #[test]
    fn masking_is_case_insensitive() {
        assert_eq!(
            mask_intent("use PyCryptodomex now", "pycryptodomex"),
            "use [MASK] now"
        );
    }

    #[test]
    fn masking_covers_separator_variants_and_alias_segments() {
        assert_eq!(
            mask_intent(
                "try flask_restful or flask.restful or flaskrestful",
                "Flask-RESTful"
            ),
            "try [MASK] or [MASK] or [MASK]"
        );
        assert_eq!(
            mask_intent("moving from Crypto to something", "pycryptodome/Crypto"),
            "moving from [MASK] to something"
        );
    }

    #[test]
    fn masking_respects_word_boundaries() {
        // "crypto" inside "cryptography" is not a whole word.
        assert_eq!(
            mask_intent("cryptography is not crypto", "crypto"),
            "cryptography is not [MASK]"
        );
        // A separator next to the match is still a boundary.
        assert_eq!(
            mask_intent("use requests-cache", "requests"),
            "use [MASK]-cache"
        );
    }

    #[test]
    fn masking_audit_reports_offsets_and_spans() {
        let (masked, events) = mask_intent_with_audit("Use PyCrypto; pycrypto is old", "pycrypto");
        assert_eq!(masked, "Use [MASK]; [MASK] is old");
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].offset, 4);
        assert_eq!(events[0].original, "PyCrypto");
        assert_eq!(events[1].offset, 14);
        assert_eq!(events[1].original, "pycrypto");
    }

    fn record(repo: &str, day: u32, source: &str, target: &str) -> MigrationRecord {
        MigrationRecord {
            repo_id: repo.to_string(),
            commit_hash: format!("{:0>40}", day),
            date: Utc.with_ymd_and_hms(2023, 1, day, 0, 0, 0).unwrap(),
            source: source.to_string(),
            target: target.to_string(),
            commit_message: format!("switch {source} to {target}"),
            intent: None,
            intent_types: None,
            masked_intent: None,
        }
    }

    #[test]
    fn split_assigns_most_recent_repos_to_train() {
        // 5 repos x 2 records, distinct dates; repo5 is most recent.
        let mut records = Vec::new();
        for (i, repo) in ["r1", "r2", "r3", "r4", "r5"].iter().enumerate() {
            records.push(record(repo, (i * 2 + 1) as u32, "a", "b"));
            records.push(record(repo, (i * 2 + 2) as u32, "c", "d"));
        }
        let split = split_dataset(records, SplitOrder::NewestFirst).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.test.len(), 2);
        assert!(
            split.test.iter().all(|r| r.repo_id == "r1"),
            "oldest repo is test"
        );
        assert_eq!(split.ratio, (8, 2));
        // Chronological order within each set.
        for window in split.train.windows(2) {
            assert!(window[0].date <= window[1].date);
        }
    }

    #[test]
    fn split_rejects_single_repo() {
        let records = vec![record("only", 1, "a", "b"), record("only", 2, "c", "d")];
        assert!(matches!(
            split_dataset(records, SplitOrder::NewestFirst),
            Err(SplitError::TooFewRepos(1))
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let mut records = Vec::new();
        for (i, repo) in ["r1", "r2", "r3"].iter().enumerate() {
            records.push(record(repo, (i + 1) as u32, "a", "b"));
        }
        let a = split_dataset(records.clone(), SplitOrder::NewestFirst).unwrap();
        let b = split_dataset(records, SplitOrder::NewestFirst).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_oldest_first_flips_assignment() {
        let records = vec![
            record("old", 1, "a", "b"),
            record("old", 2, "a", "b"),
            record("new", 9, "c", "d"),
        ];
        let newest = split_dataset(records.clone(), SplitOrder::NewestFirst).unwrap();
        assert!(newest.train.iter().all(|r| r.repo_id == "new"));
        let oldest = split_dataset(records, SplitOrder::OldestFirst).unwrap();
        assert!(oldest.train.iter().all(|r| r.repo_id == "old"));
    }

    #[test]
    fn enrich_driver_fills_fields_and_audits_masking() {
        let gateway = Gateway::new(Arc::new(MockProvider::rule_based()));
        let mut r = record("repo", 1, "pycrypto", "cryptography");
        // The rule-based mock echoes the first sentence, which mentions the
        // target, so masking has something to do.
        r.commit_message = "Switch pycrypto to cryptography for security fixes. Done.".into();
        let outcome =
            enrich_records(vec![r], &gateway, &templates(), &EnrichOptions::default()).unwrap();
        assert_eq!(outcome.enriched.len(), 1);
        let enriched = &outcome.enriched[0];
        assert!(enriched.intent.as_deref().unwrap().contains("cryptography"));
        assert_eq!(
            enriched.masked_intent.as_deref().unwrap(),
            "Switch pycrypto to [MASK] for security fixes."
        );
        assert_eq!(
            enriched.intent_types.as_deref().unwrap(),
            ["Source Library Issues/Security Vulnerability"]
        );
        assert_eq!(outcome.masking_audit.len(), 1);
        assert_eq!(outcome.masking_audit[0].original, "cryptography");
    }

    #[test]
    fn enrich_driver_rejects_null_intents() {
        let gateway = Gateway::new(Arc::new(MockProvider::rule_based()));
        let mut r = record("repo", 1, "a", "b");
        r.commit_message = "Bump version to 2.0".into();
        let outcome =
            enrich_records(vec![r], &gateway, &templates(), &EnrichOptions::default()).unwrap();
        assert!(outcome.enriched.is_empty());
        assert_eq!(outcome.rejected_null_intent.len(), 1);
    }

    #[test]
    fn enrich_driver_attaches_provenance_to_gateway_errors() {
        let gateway = scripted_gateway(vec![MockStep::AuthFail]);
        let r = record("repo", 1, "a", "b");
        let err = enrich_records(
            vec![r],
            &gateway,
            &templates(),
            &EnrichOptions { parallel: 1 },
        )
        .unwrap_err();
        match err {
            IntentError::Gateway { record, .. } => {
                assert!(record.unwrap().starts_with("repo:"));
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
