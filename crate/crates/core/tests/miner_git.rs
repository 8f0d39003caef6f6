//! Miner integration tests against real git repositories built in tempdirs.

use git2::{Oid, Repository, Signature, Time};
use migrec_core::miner::{self, mine_repositories, scan_repository, MinerConfig, RepoEntry};

const BEFORE: &str = "\
gunicorn==18
oslo.config>=1.6.0 # Apache-2.0
oslo.db>=1.4.1 # Apache-2.0
oslo.log
pecan>=0.8.2
pyOpenSSL>=0.14
pycrypto>=2.6
requests>=2.2.0,!=2.4.0
requests-cache>=0.4.9
jsonschema>=2.0.0,<3.0.0
";

const AFTER: &str = "\
cryptography>=1.0,!=1.3.0
gunicorn==18
oslo.config>=1.6.0 # Apache-2.0
oslo.db>=1.4.1 # Apache-2.0
oslo.log
pecan>=0.8.2
pyOpenSSL>=0.14
requests>=2.2.0,!=2.4.0
requests-cache>=0.4.9
jsonschema>=2.0.0,<3.0.0
";

/// Create a commit whose tree holds exactly `files` (path -> content),
/// using fixed timestamps so fixture hashes are reproducible.
fn commit_files(
    repo: &Repository,
    parents: &[Oid],
    files: &[(&str, &str)],
    message: &str,
    author: &str,
    when_secs: i64,
) -> Oid {
    commit_files_ref(
        repo,
        Some("HEAD"),
        parents,
        files,
        message,
        author,
        when_secs,
    )
}

fn commit_files_ref(
    repo: &Repository,
    update_ref: Option<&str>,
    parents: &[Oid],
    files: &[(&str, &str)],
    message: &str,
    author: &str,
    when_secs: i64,
) -> Oid {
    let tree_oid = build_tree(repo, files);
    let tree = repo.find_tree(tree_oid).unwrap();
    let sig = Signature::new(author, "dev@example.com", &Time::new(when_secs, 0)).unwrap();
    let parent_commits: Vec<git2::Commit> = parents
        .iter()
        .map(|oid| repo.find_commit(*oid).unwrap())
        .collect();
    let parent_refs: Vec<&git2::Commit> = parent_commits.iter().collect();
    repo.commit(update_ref, &sig, &sig, message, &tree, &parent_refs)
        .unwrap()
}

fn build_tree(repo: &Repository, files: &[(&str, &str)]) -> Oid {
    let mut root = repo.treebuilder(None).unwrap();
    // One level of nesting is all the fixtures need.
    let mut subdirs: std::collections::BTreeMap<String, Vec<(String, &str)>> = Default::default();
    for (path, content) in files {
        match path.split_once('/') {
            None => {
                let blob = repo.blob(content.as_bytes()).unwrap();
                root.insert(*path, blob, 0o100644).unwrap();
            }
            Some((dir, rest)) => {
                subdirs
                    .entry(dir.to_string())
                    .or_default()
                    .push((rest.to_string(), content));
            }
        }
    }
    for (dir, entries) in subdirs {
        let mut sub = repo.treebuilder(None).unwrap();
        for (name, content) in entries {
            let blob = repo.blob(content.as_bytes()).unwrap();
            sub.insert(name.as_str(), blob, 0o100644).unwrap();
        }
        let sub_oid = sub.write().unwrap();
        root.insert(dir.as_str(), sub_oid, 0o040000).unwrap();
    }
    root.write().unwrap()
}

fn listing_fixture(dir: &std::path::Path, bare: bool) -> Repository {
    let repo = if bare {
        Repository::init_bare(dir).unwrap()
    } else {
        Repository::init(dir).unwrap()
    };
    {
        let c1 = commit_files(
            &repo,
            &[],
            &[("requirements.txt", BEFORE)],
            "initial requirements",
            "alice",
            1_600_000_000,
        );
        commit_files(
            &repo,
            &[c1],
            &[("requirements.txt", AFTER)],
            "Switch from pycrypto to cryptography. Makes crypto maintenance easier.",
            "alice",
            1_600_100_000,
        );
    }
    repo
}

#[test]
fn listing_fixture_yields_exactly_one_record() {
    let dir = tempfile::tempdir().unwrap();
    listing_fixture(dir.path(), false);
    let entries = [RepoEntry {
        repo_id: "fixture/listing".to_string(),
        path: dir.path().to_path_buf(),
        metadata: None,
    }];
    let outcome = mine_repositories(&entries, &MinerConfig::default()).unwrap();
    assert_eq!(outcome.records.len(), 1);
    let record = &outcome.records[0];
    assert_eq!(record.source, "pycrypto");
    assert_eq!(record.target, "cryptography");
    assert_eq!(record.repo_id, "fixture/listing");
    assert_eq!(record.commit_hash.len(), 40);
    assert!(record.commit_message.starts_with("Switch from pycrypto"));
    assert!(outcome.stats.conserves());
    assert_eq!(outcome.stats.median_m, 2);
    // The root commit has additions only.
    assert_eq!(outcome.stats.no_dual_change, 1);
}

#[test]
fn repo_without_dependency_files_yields_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let repo = Repository::init(dir.path()).unwrap();
    let c1 = commit_files(
        &repo,
        &[],
        &[("README.md", "hello")],
        "init",
        "alice",
        1_600_000_000,
    );
    commit_files(
        &repo,
        &[c1],
        &[("README.md", "hello world")],
        "edit",
        "alice",
        1_600_001_000,
    );

    let (items, counters) =
        scan_repository("fixture/empty", dir.path(), &MinerConfig::default()).unwrap();
    assert!(items.is_empty());
    assert_eq!(counters.commits_walked, 2);
    assert_eq!(counters.no_depfile_change, 2);
}

#[test]
fn bare_repository_is_scannable() {
    let dir = tempfile::tempdir().unwrap();
    listing_fixture(dir.path(), true);
    let (items, counters) =
        scan_repository("fixture/bare", dir.path(), &MinerConfig::default()).unwrap();
    assert_eq!(counters.commits_walked, 2);
    assert_eq!(items.len(), 2, "both commits touch requirements.txt");
    let dual: Vec<_> = items
        .iter()
        .filter(|(_, d)| d.iter().any(|x| x.is_dual_change()))
        .collect();
    assert_eq!(dual.len(), 1);
}

#[test]
fn nested_dependency_files_match_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let repo = Repository::init(dir.path()).unwrap();
    let c1 = commit_files(
        &repo,
        &[],
        &[("deps/requirements.txt", "pycrypto>=2.6\n")],
        "init",
        "alice",
        1_600_000_000,
    );
    commit_files(
        &repo,
        &[c1],
        &[("deps/requirements.txt", "cryptography>=1.0\n")],
        "swap",
        "alice",
        1_600_001_000,
    );
    let entries = [RepoEntry {
        repo_id: "fixture/nested".to_string(),
        path: dir.path().to_path_buf(),
        metadata: None,
    }];
    let outcome = mine_repositories(&entries, &MinerConfig::default()).unwrap();
    assert_eq!(outcome.records.len(), 1);
    assert_eq!(outcome.records[0].source, "pycrypto");
}

#[test]
fn merge_commits_are_walked_but_excluded_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let repo = Repository::init(dir.path()).unwrap();
    let c1 = commit_files(
        &repo,
        &[],
        &[("requirements.txt", "a==1\n")],
        "init",
        "alice",
        1_600_000_000,
    );
    let c2 = commit_files(
        &repo,
        &[c1],
        &[("requirements.txt", "b==1\n")],
        "swap on main",
        "alice",
        1_600_001_000,
    );
    // A second line of history merged in; the merge itself changes the file
    // against its first parent.
    let c3 = commit_files_ref(
        &repo,
        None,
        &[c1],
        &[("requirements.txt", "c==1\n")],
        "swap on branch",
        "bea",
        1_600_002_000,
    );
    commit_files(
        &repo,
        &[c2, c3],
        &[("requirements.txt", "c==1\n")],
        "merge",
        "alice",
        1_600_003_000,
    );

    let entries = [RepoEntry {
        repo_id: "fixture/merge".to_string(),
        path: dir.path().to_path_buf(),
        metadata: None,
    }];
    let outcome = mine_repositories(&entries, &MinerConfig::default()).unwrap();
    assert!(outcome.stats.merge_excluded >= 1);
    assert!(outcome.stats.conserves());
    // The two real swaps survive.
    assert_eq!(outcome.records.len(), 2);
}

#[test]
fn mining_is_deterministic_across_runs_and_worker_counts() {
    let dir_a = tempfile::tempdir().unwrap();
    listing_fixture(dir_a.path(), false);
    let dir_b = tempfile::tempdir().unwrap();
    let repo_b = Repository::init(dir_b.path()).unwrap();
    let c1 = commit_files(
        &repo_b,
        &[],
        &[("requirements.txt", "flask==1.0\n")],
        "init",
        "bea",
        1_600_000_000,
    );
    commit_files(
        &repo_b,
        &[c1],
        &[("requirements.txt", "fastapi==0.1\n")],
        "swap",
        "bea",
        1_600_005_000,
    );

    let entries = [
        RepoEntry {
            repo_id: "fixture/a".to_string(),
            path: dir_a.path().to_path_buf(),
            metadata: None,
        },
        RepoEntry {
            repo_id: "fixture/b".to_string(),
            path: dir_b.path().to_path_buf(),
            metadata: None,
        },
    ];
    let one = mine_repositories(
        &entries,
        &MinerConfig {
            workers: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let four = mine_repositories(
        &entries,
        &MinerConfig {
            workers: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(one.records, four.records);
    assert_eq!(one.stats, four.stats);
    let again = mine_repositories(
        &entries,
        &MinerConfig {
            workers: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(four.records, again.records);
}

#[test]
fn unreadable_repository_is_an_error_naming_the_path() {
    let missing = std::path::Path::new("/nonexistent/repo/path");
    let err = scan_repository("x", missing, &MinerConfig::default()).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("/nonexistent/repo/path"), "{message}");
}

#[test]
fn partial_failures_are_collected_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    listing_fixture(dir.path(), false);
    let entries = [
        RepoEntry {
            repo_id: "fixture/good".to_string(),
            path: dir.path().to_path_buf(),
            metadata: None,
        },
        RepoEntry {
            repo_id: "fixture/bad".to_string(),
            path: "/nonexistent/repo".into(),
            metadata: None,
        },
    ];
    let outcome = mine_repositories(&entries, &MinerConfig::default()).unwrap();
    assert_eq!(outcome.records.len(), 1);
    assert_eq!(outcome.failed_repos.len(), 1);
    assert_eq!(outcome.failed_repos[0].0, "fixture/bad");
    assert_eq!(outcome.stats.repos_failed, 1);
}

#[test]
fn version_only_commits_are_not_migrations() {
    let dir = tempfile::tempdir().unwrap();
    let repo = Repository::init(dir.path()).unwrap();
    let c1 = commit_files(
        &repo,
        &[],
        &[("requirements.txt", "foo==1.0\nbar==1.0\n")],
        "init",
        "alice",
        1_600_000_000,
    );
    commit_files(
        &repo,
        &[c1],
        &[("requirements.txt", "foo==2.0\nbar==1.0\n")],
        "bump foo",
        "alice",
        1_600_001_000,
    );

    let (items, counters) =
        scan_repository("fixture/bump", dir.path(), &MinerConfig::default()).unwrap();
    // The version bump produces no name-level change at all.
    assert_eq!(items.len(), 1, "only the root commit changes names");
    assert_eq!(counters.no_depfile_change, 1);
    let outcome = miner::extract_candidates(items, None);
    assert_eq!(outcome.0.len(), 0);
}
