//! Shared fixtures for the CLI test suites: deterministic git repositories
//! and a pipeline driver that shells out to the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use git2::{Oid, Repository, Signature, Time};

/// The four rigged migrations. Every repo performs all four, so test-set
/// sources always have same-source demonstrations in the training set, and
/// none of the targets appears in the mock provider's filler list.
pub const PAIRS: [(&str, &str, &str); 4] = [
    (
        "pycrypto",
        "cryptography",
        "Switch pycrypto to cryptography to fix security vulnerabilities. More details inside.",
    ),
    (
        "pil",
        "pillow",
        "Replace pil with pillow because pil is unmaintained. See changelog.",
    ),
    (
        "bs3",
        "beautifulsoup4",
        "Move bs3 to beautifulsoup4 for faster parsing. Benchmarks attached.",
    ),
    (
        "xml-lib",
        "lxml",
        "Use lxml instead of xml-lib to integrate with our build tooling. Done.",
    ),
];

pub fn commit_files(
    repo: &Repository,
    parents: &[Oid],
    files: &[(&str, String)],
    message: &str,
    when_secs: i64,
) -> Oid {
    let mut builder = repo.treebuilder(None).unwrap();
    for (path, content) in files {
        let blob = repo.blob(content.as_bytes()).unwrap();
        builder.insert(*path, blob, 0o100644).unwrap();
    }
    let tree = repo.find_tree(builder.write().unwrap()).unwrap();
    let sig = Signature::new("alice", "dev@example.com", &Time::new(when_secs, 0)).unwrap();
    let parent_commits: Vec<git2::Commit> = parents
        .iter()
        .map(|oid| repo.find_commit(*oid).unwrap())
        .collect();
    let parent_refs: Vec<&git2::Commit> = parent_commits.iter().collect();
    repo.commit(Some("HEAD"), &sig, &sig, message, &tree, &parent_refs)
        .unwrap()
}

fn requirements(lines: &[&str]) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// One fixture repo that performs all four rigged migrations in sequence.
pub fn build_migration_repo(dir: &Path, base_secs: i64) {
    let repo = Repository::init(dir).unwrap();
    let mut state: Vec<String> = PAIRS
        .iter()
        .map(|(source, _, _)| format!("{source}==1.0"))
        .chain(["gunicorn==18".to_string()])
        .collect();
    let lines: Vec<&str> = state.iter().map(|s| s.as_str()).collect();
    let mut head = commit_files(
        &repo,
        &[],
        &[("requirements.txt", requirements(&lines))],
        "initial dependencies",
        base_secs,
    );
    for (i, (source, target, message)) in PAIRS.iter().enumerate() {
        let needle = format!("{source}==1.0");
        let position = state.iter().position(|l| *l == needle).unwrap();
        state[position] = format!("{target}==1.0");
        let lines: Vec<&str> = state.iter().map(|s| s.as_str()).collect();
        head = commit_files(
            &repo,
            &[head],
            &[("requirements.txt", requirements(&lines))],
            message,
            base_secs + 1_000 * (i as i64 + 1),
        );
    }
}

/// Five repos, 20 migration records. `r1` carries the oldest dates, so the
/// newest-first 8:2 split sends exactly `r1` to the test set.
pub fn build_corpus(root: &Path) -> PathBuf {
    let repos_dir = root.join("repos");
    std::fs::create_dir_all(&repos_dir).unwrap();
    let mut list = String::new();
    for (i, name) in ["r1", "r2", "r3", "r4", "r5"].iter().enumerate() {
        let dir = repos_dir.join(name);
        std::fs::create_dir_all(&dir).unwrap();
        // A month apart; r1 oldest.
        build_migration_repo(&dir, 1_577_836_800 + i as i64 * 2_592_000);
        list.push_str(&format!("e2e/{name}\t{}\n", dir.display()));
    }
    let list_path = root.join("repos.tsv");
    std::fs::write(&list_path, list).unwrap();
    list_path
}

pub fn migrec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_migrec"))
}

pub fn run_ok(command: &mut Command) -> Output {
    let output = command.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        command,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

pub fn write_manifest(root: &Path, out_dir: &Path, strategy: &str, ablation: &str) -> PathBuf {
    let manifest = format!(
        r#"[dataset]
test = "{test}"
index = "{index}"

[gateway]
provider = "mock"
model_id = "mock-model"
cache_dir = "{cache}"
parallel = 2

[run]
k = 3
strategy = "{strategy}"
ablation = "{ablation}"
out_dir = "{out}"
"#,
        test = root.join("test.jsonl").display(),
        index = root.join("index.json").display(),
        cache = root.join("cache").display(),
        out = out_dir.display(),
    );
    let path = root.join("manifest.toml");
    std::fs::write(&path, manifest).unwrap();
    path
}

/// Drive mine -> enrich -> split -> index through the binary; artifacts land
/// under `root`. Returns the path of the test split.
pub fn run_pipeline_to_split(root: &Path) {
    let list_path = build_corpus(root);
    run_ok(
        migrec()
            .arg("mine")
            .arg("--repos")
            .arg(&list_path)
            .arg("--out")
            .arg(root.join("mine")),
    );
    let manifest = write_manifest(root, &root.join("run"), "default", "full");
    run_ok(
        migrec()
            .arg("enrich")
            .arg("--records")
            .arg(root.join("mine/records.jsonl"))
            .arg("--manifest")
            .arg(&manifest)
            .arg("--out")
            .arg(root.join("enrich")),
    );
    run_ok(
        migrec()
            .arg("split")
            .arg("--records")
            .arg(root.join("enrich/enriched.jsonl"))
            .arg("--out-train")
            .arg(root.join("train.jsonl"))
            .arg("--out-test")
            .arg(root.join("test.jsonl")),
    );
    run_ok(
        migrec()
            .arg("index")
            .arg("build")
            .arg("--train")
            .arg(root.join("train.jsonl"))
            .arg("--out")
            .arg(root.join("index.json")),
    );
}
