//! Subcommand-level behavior: exit codes, reject files, cache resumption,
//! and the mock ablation sweep.

mod common;

use common::{build_corpus, migrec, run_ok, run_pipeline_to_split, write_manifest};

#[test]
fn mine_missing_repo_list_exits_1() {
    let status = migrec()
        .arg("mine")
        .arg("--repos")
        .arg("/nonexistent/repos.tsv")
        .arg("--out")
        .arg("/tmp/unused-out")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn mine_empty_list_writes_empty_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("repos.tsv");
    std::fs::write(&list, "").unwrap();
    let out = dir.path().join("out");
    run_ok(
        migrec()
            .arg("mine")
            .arg("--repos")
            .arg(&list)
            .arg("--out")
            .arg(&out),
    );
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert!(records.is_empty());
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["median_m"], 0);
}

#[test]
fn mine_partial_failure_exits_2_but_writes_good_repos() {
    let dir = tempfile::tempdir().unwrap();
    let list_path = build_corpus(dir.path());
    let mut list = std::fs::read_to_string(&list_path).unwrap();
    list.push_str("e2e/broken\t/nonexistent/repo\n");
    std::fs::write(&list_path, list).unwrap();
    let out = dir.path().join("out");
    let output = migrec()
        .arg("mine")
        .arg("--repos")
        .arg(&list_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 20);
}

#[test]
fn split_single_repo_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.jsonl");
    std::fs::write(
        &records,
        "{\"repo_id\":\"only\",\"commit_hash\":\"0000000000000000000000000000000000000000\",\"date\":\"2021-01-01T00:00:00Z\",\"source\":\"a\",\"target\":\"b\",\"commit_message\":\"m\"}\n",
    )
    .unwrap();
    let status = migrec()
        .arg("split")
        .arg("--records")
        .arg(&records)
        .arg("--out-train")
        .arg(dir.path().join("train.jsonl"))
        .arg("--out-test")
        .arg(dir.path().join("test.jsonl"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn split_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline_to_split(dir.path());
    let train_a = std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
    let test_a = std::fs::read_to_string(dir.path().join("test.jsonl")).unwrap();
    run_ok(
        migrec()
            .arg("split")
            .arg("--records")
            .arg(dir.path().join("enrich/enriched.jsonl"))
            .arg("--out-train")
            .arg(dir.path().join("train.jsonl"))
            .arg("--out-test")
            .arg(dir.path().join("test.jsonl")),
    );
    assert_eq!(
        train_a,
        std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap()
    );
    assert_eq!(
        test_a,
        std::fs::read_to_string(dir.path().join("test.jsonl")).unwrap()
    );
    // 20 records, 8:2 by whole repos.
    assert_eq!(train_a.lines().count(), 16);
    assert_eq!(test_a.lines().count(), 4);
}

#[test]
fn enrich_all_null_fills_reject_file_only() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.jsonl");
    let mut lines = String::new();
    for i in 0..3 {
        lines.push_str(&format!(
            "{{\"repo_id\":\"r{i}\",\"commit_hash\":\"{i:0>40}\",\"date\":\"2021-01-01T00:00:00Z\",\"source\":\"a\",\"target\":\"b\",\"commit_message\":\"Bump version to {i}.0\"}}\n"
        ));
    }
    std::fs::write(&records, lines).unwrap();
    let manifest = write_manifest(dir.path(), &dir.path().join("run"), "default", "full");
    let out = dir.path().join("enrich");
    run_ok(
        migrec()
            .arg("enrich")
            .arg("--records")
            .arg(&records)
            .arg("--manifest")
            .arg(&manifest)
            .arg("--out")
            .arg(&out),
    );
    assert!(std::fs::read_to_string(out.join("enriched.jsonl"))
        .unwrap()
        .is_empty());
    let rejected = std::fs::read_to_string(out.join("rejected_null_intent.jsonl")).unwrap();
    assert_eq!(rejected.lines().count(), 3);
}

#[test]
fn enrich_auth_failure_exits_1_before_writing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records.jsonl");
    std::fs::write(
        &records,
        "{\"repo_id\":\"r\",\"commit_hash\":\"0000000000000000000000000000000000000000\",\"date\":\"2021-01-01T00:00:00Z\",\"source\":\"a\",\"target\":\"b\",\"commit_message\":\"switch a to b\"}\n",
    )
    .unwrap();
    // Credential env var is deliberately unset, so the provider fails auth
    // before any network activity.
    let manifest_path = dir.path().join("manifest.toml");
    std::fs::write(
        &manifest_path,
        format!(
            r#"[gateway]
provider = "live"
model_id = "m"

[[providers]]
name = "live"
endpoint = "https://localhost:1/v1/chat/completions"
credential_env = "MIGREC_TEST_UNSET_CREDENTIAL"

[run]
out_dir = "{}"
"#,
            dir.path().join("run").display()
        ),
    )
    .unwrap();
    let out = dir.path().join("enrich");
    let output = migrec()
        .arg("enrich")
        .arg("--records")
        .arg(&records)
        .arg("--manifest")
        .arg(&manifest_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("authentication"), "stderr: {stderr}");
    assert!(!out.join("enriched.jsonl").exists());
}

#[test]
fn recommend_k_zero_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline_to_split(dir.path());
    let manifest = write_manifest(dir.path(), &dir.path().join("run"), "default", "full");
    let patched = std::fs::read_to_string(&manifest)
        .unwrap()
        .replace("k = 3", "k = 0");
    std::fs::write(&manifest, patched).unwrap();
    let output = migrec()
        .arg("recommend")
        .arg("--manifest")
        .arg(&manifest)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn evaluate_mismatched_ids_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline_to_split(dir.path());
    let manifest = write_manifest(dir.path(), &dir.path().join("run"), "default", "full");
    run_ok(migrec().arg("recommend").arg("--manifest").arg(&manifest));
    // Evaluate the test-set recommendations against the train set.
    let status = migrec()
        .arg("evaluate")
        .arg("--recommendations")
        .arg(dir.path().join("run/recommendations.jsonl"))
        .arg("--test")
        .arg(dir.path().join("train.jsonl"))
        .arg("--out-report")
        .arg(dir.path().join("bad-report.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn ablate_without_index_exits_1_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline_to_split(dir.path());
    std::fs::remove_file(dir.path().join("index.json")).unwrap();
    let manifest = write_manifest(dir.path(), &dir.path().join("run"), "default", "full");
    let status = migrec()
        .arg("ablate")
        .arg("--manifest")
        .arg(&manifest)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(
        !dir.path().join("run/vanilla").exists(),
        "no sub-run may start"
    );
}

#[test]
fn ablate_full_beats_vanilla_on_rigged_fixture_and_cache_resumes() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline_to_split(dir.path());
    let manifest = write_manifest(dir.path(), &dir.path().join("run"), "default", "full");
    run_ok(migrec().arg("ablate").arg("--manifest").arg(&manifest));

    let p10 = |mode: &str| -> f64 {
        let report: migrec_core::eval::EvalReport = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("run").join(mode).join("report.json"))
                .unwrap(),
        )
        .unwrap();
        report.precision_at[&10]
    };
    let full = p10("full");
    for other in ["vanilla", "without-retrieval", "without-intent"] {
        assert!(
            full >= p10(other),
            "full P@10 {full} < {other} P@10 {}",
            p10(other)
        );
    }
    assert!(
        full > p10("vanilla"),
        "the fixture is rigged so demos carry signal"
    );

    // Rerun with the same cache: every response must come from disk.
    run_ok(migrec().arg("ablate").arg("--manifest").arg(&manifest));
    for mode in ["full", "vanilla", "without-retrieval", "without-intent"] {
        let stats: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("run").join(mode).join("run_stats.json"))
                .unwrap(),
        )
        .unwrap();
        assert_eq!(
            stats["provider_calls"], 0,
            "mode {mode} reached the provider on a cached rerun"
        );
        assert_eq!(stats["cache_hits"], 4);
    }
}

#[test]
fn run_dir_contains_manifest_and_metadata_before_responses() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline_to_split(dir.path());
    let manifest = write_manifest(dir.path(), &dir.path().join("run"), "one-shot", "full");
    run_ok(migrec().arg("recommend").arg("--manifest").arg(&manifest));
    let run_dir = dir.path().join("run");
    let copied = std::fs::read_to_string(run_dir.join("manifest.toml")).unwrap();
    assert_eq!(
        copied,
        std::fs::read_to_string(&manifest).unwrap(),
        "manifest copied verbatim"
    );
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["strategy"], "one-shot");
    assert_eq!(
        meta["template_hashes"]["recommend_format"]
            .as_str()
            .unwrap()
            .len(),
        64
    );
    // One-shot skips retrieval: demos_used stays empty.
    let recs = std::fs::read_to_string(run_dir.join("recommendations.jsonl")).unwrap();
    for line in recs.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["demos_used"].as_array().unwrap().len(), 0);
    }
}

#[test]
fn compare_runs_on_two_reports() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline_to_split(dir.path());
    let manifest = write_manifest(dir.path(), &dir.path().join("run"), "default", "full");
    run_ok(migrec().arg("ablate").arg("--manifest").arg(&manifest));
    let output = run_ok(
        migrec()
            .arg("compare")
            .arg("--report-a")
            .arg(dir.path().join("run/full/report.json"))
            .arg("--report-b")
            .arg(dir.path().join("run/vanilla/report.json"))
            .arg("--out")
            .arg(dir.path().join("deltas.json")),
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("|delta|"));
    let deltas: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("deltas.json")).unwrap())
            .unwrap();
    assert!(!deltas.as_array().unwrap().is_empty());
}
