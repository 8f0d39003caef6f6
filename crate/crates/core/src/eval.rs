//! Ranked-recommendation scoring: Precision@k, MRR, per-intent-type
//! breakdowns, failure listings, and cross-run failure-rate comparison.
//!
//! A query that produced no parseable candidates still counts in the
//! denominator with score 0; N never shrinks because a model misbehaved.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depfile::normalize_library_name;

/// The k values reported for Precision@k.
pub const EVAL_KS: [usize; 4] = [1, 3, 5, 10];

/// Failures are misses at this cutoff.
pub const FAILURE_K: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate an empty result set")]
    EmptyResults,
    #[error("reports cover different query sets ({left} vs {right} queries, {common} shared)")]
    QuerySetMismatch {
        left: usize,
        right: usize,
        common: usize,
    },
}

/// Everything the evaluator needs to know about one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub target: String,
    /// Ranked candidate names, already normalized; empty when the query
    /// failed.
    pub candidates: Vec<String>,
    /// `Category/Subcategory` labels of the query record.
    #[serde(default)]
    pub intent_types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub n: usize,
    pub precision_at: BTreeMap<usize, f64>,
    pub mrr: f64,
}

/// Unweighted mean over the member subcategory reports of a category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub subcategories: usize,
    pub precision_at: BTreeMap<usize, f64>,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub query_id: String,
    pub target: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_queries: usize,
    pub precision_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub per_label: BTreeMap<String, LabelReport>,
    pub per_category: BTreeMap<String, CategoryReport>,
    pub failures: Vec<Failure>,
    /// Full per-query outcomes, kept so the report is self-contained for
    /// audits and cross-run comparison.
    pub outcomes: Vec<QueryOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureDelta {
    pub label: String,
    pub rate_a: f64,
    pub rate_b: f64,
    pub delta: f64,
}

/// Name matching for hit detection: normalized equality, extended so a
/// `dist/import` alias matches either of its segments. Symmetric and
/// reflexive.
pub fn names_match(a: &str, b: &str) -> bool {
    let (na, nb) = match (normalize_library_name(a), normalize_library_name(b)) {
        (Ok(na), Ok(nb)) => (na, nb),
        _ => return a == b,
    };
    if na == nb {
        return true;
    }
    let seg_a: Vec<&str> = na.split('/').collect();
    let seg_b: Vec<&str> = nb.split('/').collect();
    seg_a.iter().any(|sa| seg_b.contains(sa))
}

/// Rank (1-based) of the first candidate matching the target.
pub fn first_match_rank(candidates: &[String], target: &str) -> Option<usize> {
    candidates
        .iter()
        .position(|c| names_match(c, target))
        .map(|p| p + 1)
}

/// 1 iff any of the first `min(k, len)` candidates matches the target.
pub fn has_target_at_k(candidates: &[String], target: &str, k: usize) -> u32 {
    match first_match_rank(candidates, target) {
        Some(rank) if rank <= k => 1,
        _ => 0,
    }
}

/// Mean of [`has_target_at_k`] over all outcomes.
pub fn precision_at_k(outcomes: &[QueryOutcome], k: usize) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let hits: u32 = outcomes
        .iter()
        .map(|o| has_target_at_k(&o.candidates, &o.target, k))
        .sum();
    Ok(f64::from(hits) / outcomes.len() as f64)
}

/// Mean reciprocal rank of the first match, 0 when absent.
pub fn mrr(outcomes: &[QueryOutcome]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let sum: f64 = outcomes
        .iter()
        .map(|o| match first_match_rank(&o.candidates, &o.target) {
            Some(rank) => 1.0 / rank as f64,
            None => 0.0,
        })
        .sum();
    Ok(sum / outcomes.len() as f64)
}

/// Per-label sub-reports. An outcome with multiple labels is counted once
/// per label; an outcome with no labels is counted under `Other/Other`.
pub fn breakdown_by_label(
    outcomes: &[QueryOutcome],
) -> (
    BTreeMap<String, LabelReport>,
    BTreeMap<String, CategoryReport>,
) {
    let mut buckets: BTreeMap<String, Vec<QueryOutcome>> = BTreeMap::new();
    for outcome in outcomes {
        let labels: Vec<String> = if outcome.intent_types.is_empty() {
            vec!["Other/Other".to_string()]
        } else {
            outcome.intent_types.clone()
        };
        for label in labels {
            buckets.entry(label).or_default().push(outcome.clone());
        }
    }
    let mut per_label = BTreeMap::new();
    for (label, group) in buckets {
        let mut precision_at = BTreeMap::new();
        for k in EVAL_KS {
            precision_at.insert(k, precision_at_k(&group, k).expect("non-empty bucket"));
        }
        per_label.insert(
            label,
            LabelReport {
                n: group.len(),
                precision_at,
                mrr: mrr(&group).expect("non-empty bucket"),
            },
        );
    }
    let per_category = average_categories(&per_label);
    (per_label, per_category)
}

/// Category report = arithmetic mean over its subcategory reports.
pub fn average_categories(
    per_label: &BTreeMap<String, LabelReport>,
) -> BTreeMap<String, CategoryReport> {
    let mut groups: BTreeMap<String, Vec<&LabelReport>> = BTreeMap::new();
    for (label, report) in per_label {
        let category = label.split_once('/').map(|(c, _)| c).unwrap_or(label);
        groups.entry(category.to_string()).or_default().push(report);
    }
    let mut out = BTreeMap::new();
    for (category, reports) in groups {
        let n = reports.len() as f64;
        let mut precision_at = BTreeMap::new();
        for k in EVAL_KS {
            let mean = reports.iter().map(|r| r.precision_at[&k]).sum::<f64>() / n;
            precision_at.insert(k, mean);
        }
        let mean_mrr = reports.iter().map(|r| r.mrr).sum::<f64>() / n;
        out.insert(
            category,
            CategoryReport {
                subcategories: reports.len(),
                precision_at,
                mrr: mean_mrr,
            },
        );
    }
    out
}

/// Full report over a run's outcomes.
pub fn evaluate(outcomes: Vec<QueryOutcome>) -> Result<EvalReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut precision_at = BTreeMap::new();
    for k in EVAL_KS {
        precision_at.insert(k, precision_at_k(&outcomes, k)?);
    }
    let overall_mrr = mrr(&outcomes)?;
    let (per_label, per_category) = breakdown_by_label(&outcomes);
    let failures = outcomes
        .iter()
        .filter(|o| has_target_at_k(&o.candidates, &o.target, FAILURE_K) == 0)
        .map(|o| Failure {
            query_id: o.query_id.clone(),
            target: o.target.clone(),
            candidates: o.candidates.clone(),
        })
        .collect();
    Ok(EvalReport {
        n_queries: outcomes.len(),
        precision_at,
        mrr: overall_mrr,
        per_label,
        per_category,
        failures,
        outcomes,
    })
}

/// Per-label failure rates (1 - P@10 within the label) of two runs over the
/// same query set, sorted by |delta| descending, truncated to `top_n`.
pub fn failure_rate_comparison(
    report_a: &EvalReport,
    report_b: &EvalReport,
    top_n: usize,
) -> Result<Vec<FailureDelta>, EvalError> {
    let ids_a: std::collections::BTreeSet<&str> = report_a
        .outcomes
        .iter()
        .map(|o| o.query_id.as_str())
        .collect();
    let ids_b: std::collections::BTreeSet<&str> = report_b
        .outcomes
        .iter()
        .map(|o| o.query_id.as_str())
        .collect();
    if ids_a != ids_b {
        return Err(EvalError::QuerySetMismatch {
            left: ids_a.len(),
            right: ids_b.len(),
            common: ids_a.intersection(&ids_b).count(),
        });
    }

    let mut labels: std::collections::BTreeSet<&String> = report_a.per_label.keys().collect();
    labels.extend(report_b.per_label.keys());

    let rate = |report: &EvalReport, label: &str| -> Option<f64> {
        report
            .per_label
            .get(label)
            .map(|r| 1.0 - r.precision_at[&FAILURE_K])
    };

    let mut deltas: Vec<FailureDelta> = labels
        .into_iter()
        .filter_map(|label| {
            let ra = rate(report_a, label)?;
            let rb = rate(report_b, label)?;
            Some(FailureDelta {
                label: label.clone(),
                rate_a: ra,
                rate_b: rb,
                delta: (ra - rb).abs(),
            })
        })
        .collect();
    deltas.sort_by(|a, b| {
        b.delta
            .partial_cmp(&a.delta)
            .expect("rates are finite")
            .then(a.label.cmp(&b.label))
    });
    deltas.truncate(top_n);
    Ok(deltas)
}
