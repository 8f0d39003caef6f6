//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use migrec_core::eval::{self, EvalReport, QueryOutcome};
use migrec_core::gateway::{GatewayError, GatewayStats};
use migrec_core::intent::{enrich_records, split_dataset, EnrichOptions, SplitOrder};
use migrec_core::jsonl::{read_jsonl, write_jsonl};
use migrec_core::miner::{mine_repositories, read_repo_list, MinerConfig};
use migrec_core::parallel::parallel_map_ordered;
use migrec_core::recommend::{
    recommend_with_reask, AblationMode, PromptStrategy, RecommendError, Recommendation,
};
use migrec_core::record::MigrationRecord;
use migrec_core::retrieval::{Bm25Index, Bm25Params, MigrationEntity, Query};

use crate::manifest::{stage_run_dir, RunManifest};
use crate::report;

/// An operator mistake rather than a runtime failure; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn load_records(path: &Path) -> Result<Vec<MigrationRecord>> {
    read_jsonl(path).with_context(|| format!("cannot read records from {}", path.display()))
}

// ---------------------------------------------------------------------------
// mine

pub fn cmd_mine(
    repos: &Path,
    out: &Path,
    median_m: Option<u64>,
    patterns: Vec<String>,
    workers: usize,
) -> Result<u8> {
    let entries = read_repo_list(repos)?;
    let mut config = MinerConfig {
        median_override: median_m,
        workers,
        ..Default::default()
    };
    if !patterns.is_empty() {
        config.depfile_patterns = patterns;
    }

    let outcome = mine_repositories(&entries, &config)?;
    fs::create_dir_all(out)?;
    let records_path = out.join("records.jsonl");
    write_jsonl(&records_path, &outcome.records)?;
    let stats_json = serde_json::to_string_pretty(&outcome.stats)?;
    fs::write(out.join("stats.json"), stats_json + "\n")?;

    println!(
        "mined {} records from {} repos ({} commits walked, median m = {})",
        outcome.records.len(),
        entries.len(),
        outcome.stats.commits_walked,
        outcome.stats.median_m
    );
    if !outcome.failed_repos.is_empty() {
        for (repo_id, message) in &outcome.failed_repos {
            eprintln!("failed repo {repo_id}: {message}");
        }
        return Ok(2);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// enrich

pub fn cmd_enrich(
    records_path: &Path,
    manifest_path: &Path,
    out: &Path,
    parallel: Option<usize>,
) -> Result<u8> {
    let (mut manifest, raw) = RunManifest::load(manifest_path)?;
    if let Some(n) = parallel {
        manifest.gateway.parallel = n.max(1);
    }
    let templates = manifest.prompt_set()?;
    let records = load_records(records_path)?;
    let gateway = manifest.build_gateway()?;
    stage_run_dir(out, &raw, &manifest, &templates, manifest.run.ablation)?;

    let options = EnrichOptions {
        parallel: manifest.gateway.parallel,
    };
    let outcome = enrich_records(records, &gateway, &templates, &options)?;

    write_jsonl(&out.join("enriched.jsonl"), &outcome.enriched)?;
    write_jsonl(
        &out.join("rejected_null_intent.jsonl"),
        &outcome.rejected_null_intent,
    )?;
    write_jsonl(
        &out.join("rejected_non_analogous.jsonl"),
        &outcome.rejected_non_analogous,
    )?;
    write_jsonl(&out.join("masking_audit.jsonl"), &outcome.masking_audit)?;
    write_gateway_stats(out, gateway.stats(), 0)?;

    println!(
        "enriched {} records ({} null-intent, {} non-analogous, {} masked spans, {} unknown labels)",
        outcome.enriched.len(),
        outcome.rejected_null_intent.len(),
        outcome.rejected_non_analogous.len(),
        outcome.masking_audit.len(),
        outcome.unknown_label_count
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// split

pub fn cmd_split(
    records_path: &Path,
    out_train: &Path,
    out_test: &Path,
    order: SplitOrder,
) -> Result<u8> {
    let records = load_records(records_path)?;
    let split = split_dataset(records, order)?;
    write_jsonl(out_train, &split.train)?;
    write_jsonl(out_test, &split.test)?;
    println!(
        "split {} records into {} train / {} test",
        split.train.len() + split.test.len(),
        split.train.len(),
        split.test.len()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// index

pub fn cmd_index(train_path: &Path, out: &Path, k1: f64, b: f64) -> Result<u8> {
    let records = load_records(train_path)?;
    let entities: Vec<MigrationEntity> = records.iter().map(MigrationEntity::from_record).collect();
    let index = Bm25Index::build(entities, Bm25Params { k1, b })?;
    index.save(out)?;
    println!(
        "indexed {} entities (avg doc len {:.2}) -> {}",
        index.len(),
        index.avg_doc_len(),
        out.display()
    );
    Ok(0)
}

/// Ad-hoc retrieval against a saved index; a diagnostic surface for the
/// demonstration database.
pub fn cmd_index_query(
    index_path: &Path,
    source: &str,
    intents: &str,
    intent_types: Vec<String>,
    k: usize,
    exclude: Option<&str>,
) -> Result<u8> {
    if k == 0 {
        bail!(UsageError("k must be at least 1".to_string()));
    }
    let index = Bm25Index::load(index_path)?;
    let query = Query {
        source: source.to_string(),
        intents: intents.to_string(),
        intent_types,
    };
    let demos = index.retrieve_filtered(&query, k, exclude);
    for demo in &demos {
        println!(
            "{:>2}. {:>9.4}  {} -> {}  ({})",
            demo.rank, demo.score, demo.entity.source, demo.entity.target, demo.entity.provenance
        );
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// recommend

pub fn cmd_recommend(
    manifest_path: &Path,
    parallel: Option<usize>,
    reask: Option<u32>,
) -> Result<u8> {
    let (mut manifest, raw) = RunManifest::load(manifest_path)?;
    if let Some(n) = parallel {
        manifest.gateway.parallel = n.max(1);
    }
    if let Some(n) = reask {
        manifest.run.reask_on_parse_error = n;
    }
    let out_dir = manifest.run.out_dir.clone();
    let (recommendations, report) = run_mode(&manifest, &raw, manifest.run.ablation, &out_dir)?;
    let failed = recommendations.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} queries ({failed} failed); P@1 {:.3}, MRR {:.3}",
        report.n_queries, report.precision_at[&1], report.mrr
    );
    Ok(0)
}

/// Run one ablation mode end to end: recommendations, evaluation, report
/// files. Returns the rows and the report.
fn run_mode(
    manifest: &RunManifest,
    raw_manifest: &str,
    ablation: AblationMode,
    out_dir: &Path,
) -> Result<(Vec<Recommendation>, EvalReport)> {
    if manifest.run.k == 0 {
        bail!(UsageError("run.k must be at least 1".to_string()));
    }
    let templates = manifest.prompt_set()?;
    manifest.require_paths(&[("test", manifest.dataset.test.as_ref())])?;
    let test_path = manifest.dataset.test.as_ref().expect("checked above");
    let test_records = load_records(test_path)?;
    if test_records.is_empty() {
        bail!(UsageError(format!(
            "test set {} is empty",
            test_path.display()
        )));
    }

    let needs_index =
        ablation.retrieval_enabled() && manifest.run.strategy != PromptStrategy::OneShot;
    let index: Option<Bm25Index> = if needs_index {
        manifest.require_paths(&[("index", manifest.dataset.index.as_ref())])?;
        let path = manifest.dataset.index.as_ref().expect("checked above");
        Some(Bm25Index::load(path)?)
    } else {
        None
    };

    let gateway = manifest.build_gateway()?;
    stage_run_dir(out_dir, raw_manifest, manifest, &templates, ablation)?;

    let results = parallel_map_ordered(&test_records, manifest.gateway.parallel, |record| {
        let query = Query::from_record(record);
        let query_id = record.id();
        recommend_with_reask(
            &query,
            &query_id,
            index.as_ref(),
            &gateway,
            &templates,
            manifest.run.strategy,
            ablation,
            manifest.run.k,
            None,
            manifest.run.reask_on_parse_error,
        )
    });

    let mut recommendations = Vec::with_capacity(results.len());
    for (record, result) in test_records.iter().zip(results) {
        match result {
            Ok(rec) => recommendations.push(rec),
            // Auth problems poison the whole run; anything else is a
            // zero-hit row so N stays fixed.
            Err(RecommendError::Gateway {
                source: source @ GatewayError::Auth { .. },
                ..
            }) => return Err(source.into()),
            Err(err) => {
                let raw_response = match &err {
                    RecommendError::ParseFailed { raw, .. } => raw.clone(),
                    _ => String::new(),
                };
                recommendations.push(Recommendation {
                    query_id: record.id(),
                    candidates: Vec::new(),
                    raw_response,
                    prompt_chars: 0,
                    demos_used: Vec::new(),
                    error: Some(err.to_string()),
                });
            }
        }
    }

    write_jsonl(&out_dir.join("recommendations.jsonl"), &recommendations)?;
    let failed_queries = recommendations.iter().filter(|r| r.error.is_some()).count();
    write_gateway_stats(out_dir, gateway.stats(), failed_queries)?;

    let report = evaluate_against(&recommendations, &test_records)?;
    write_report_files(&report, &out_dir.join("report.json"), None)?;
    Ok((recommendations, report))
}

fn write_gateway_stats(out_dir: &Path, stats: GatewayStats, failed_queries: usize) -> Result<()> {
    let mut value = serde_json::to_value(stats)?;
    value["failed_queries"] = serde_json::Value::from(failed_queries);
    fs::write(
        out_dir.join("run_stats.json"),
        serde_json::to_string_pretty(&value)? + "\n",
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

/// Join recommendations with test records by query id; the two sets must
/// match exactly.
fn evaluate_against(
    recommendations: &[Recommendation],
    test_records: &[MigrationRecord],
) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &Recommendation> = recommendations
        .iter()
        .map(|r| (r.query_id.as_str(), r))
        .collect();
    if by_id.len() != recommendations.len() {
        bail!("recommendations contain duplicate query ids");
    }
    let mut outcomes = Vec::with_capacity(test_records.len());
    let mut missing: Vec<String> = Vec::new();
    for record in test_records {
        let id = record.id();
        match by_id.get(id.as_str()) {
            Some(rec) => outcomes.push(QueryOutcome {
                query_id: id,
                target: record.target.clone(),
                candidates: rec.candidates.clone(),
                intent_types: record.intent_type_labels().to_vec(),
            }),
            None => missing.push(id),
        }
    }
    if !missing.is_empty() {
        bail!(
            "{} test records have no recommendation (first: {})",
            missing.len(),
            missing[0]
        );
    }
    if recommendations.len() != test_records.len() {
        bail!(
            "{} recommendations do not match any test record",
            recommendations.len() - test_records.len()
        );
    }
    Ok(eval::evaluate(outcomes)?)
}

fn write_report_files(report: &EvalReport, out_report: &Path, csv: Option<&Path>) -> Result<()> {
    if let Some(parent) = out_report.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(out_report, serde_json::to_string_pretty(report)? + "\n")?;
    if let Some(csv_path) = csv {
        fs::write(csv_path, report::per_label_csv(report))?;
    }
    Ok(())
}

pub fn cmd_evaluate(
    recommendations_path: &Path,
    test_path: &Path,
    out_report: &Path,
    csv: Option<&Path>,
) -> Result<u8> {
    let recommendations: Vec<Recommendation> = read_jsonl(recommendations_path)
        .with_context(|| format!("cannot read {}", recommendations_path.display()))?;
    let test_records = load_records(test_path)?;
    let report = evaluate_against(&recommendations, &test_records)?;
    write_report_files(&report, out_report, csv)?;
    print!("{}", report::metrics_table(&[("run".to_string(), &report)]));
    Ok(0)
}

// ---------------------------------------------------------------------------
// ablate

pub fn cmd_ablate(manifest_path: &Path, parallel: Option<usize>, reask: Option<u32>) -> Result<u8> {
    let (mut manifest, raw) = RunManifest::load(manifest_path)?;
    if let Some(n) = parallel {
        manifest.gateway.parallel = n.max(1);
    }
    if let Some(n) = reask {
        manifest.run.reask_on_parse_error = n;
    }

    // The full and without-intent runs need the index; fail before any
    // model call rather than half way through the sweep.
    if manifest.run.strategy != PromptStrategy::OneShot {
        manifest.require_paths(&[("index", manifest.dataset.index.as_ref())])?;
    }

    let base_dir = manifest.run.out_dir.clone();
    let mut rows: Vec<(String, EvalReport)> = Vec::new();
    for mode in AblationMode::ALL {
        let out_dir = base_dir.join(mode.name());
        let (_, report) = run_mode(&manifest, &raw, mode, &out_dir)?;
        rows.push((mode.name().to_string(), report));
    }

    let table_rows: Vec<(String, &EvalReport)> = rows
        .iter()
        .map(|(name, report)| (name.clone(), report))
        .collect();
    let table = report::metrics_table(&table_rows);
    fs::write(base_dir.join("comparison.txt"), &table)?;
    let summary: BTreeMap<String, serde_json::Value> = rows
        .iter()
        .map(|(name, report)| {
            (
                name.clone(),
                serde_json::json!({
                    "n_queries": report.n_queries,
                    "precision_at": report.precision_at,
                    "mrr": report.mrr,
                }),
            )
        })
        .collect();
    fs::write(
        base_dir.join("comparison.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    print!("{table}");
    Ok(0)
}

// ---------------------------------------------------------------------------
// compare

pub fn cmd_compare(
    report_a_path: &Path,
    report_b_path: &Path,
    top: usize,
    out: Option<&PathBuf>,
) -> Result<u8> {
    let report_a: EvalReport = read_report(report_a_path)?;
    let report_b: EvalReport = read_report(report_b_path)?;
    let deltas = eval::failure_rate_comparison(&report_a, &report_b, top)?;
    let table = report::comparison_table(
        &run_name(report_a_path, "a"),
        &run_name(report_b_path, "b"),
        &deltas,
    );
    if let Some(out_path) = out {
        fs::write(out_path, serde_json::to_string_pretty(&deltas)? + "\n")?;
    }
    print!("{table}");
    Ok(0)
}

/// A readable run name for a report path: the run directory for the usual
/// `<run>/report.json` layout, the file stem otherwise.
fn run_name(path: &Path, fallback: &str) -> String {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(fallback);
    if stem == "report" {
        if let Some(dir) = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
        {
            return dir.to_string();
        }
    }
    stem.to_string()
}

fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read report {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid report {}", path.display()))
}
