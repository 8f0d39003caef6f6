//! Git mining: walk locally cloned repositories, diff dependency files
//! against the first parent, apply the candidate-commit heuristics, and
//! reduce candidates to single-pair migration records via the corpus-level
//! median filter.
//!
//! The three commit heuristics: merges are excluded, the author name must
//! not contain "bot", and at least one dependency file must have both
//! additions and removals. Candidates then pass `| |added| - |removed| | <= 1`,
//! the `L_a + L_r <= m` median cap (m computed over the whole mining run,
//! overridable), and finally only single-pair commits become records.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depfile::{self, DependencyDiff, DEFAULT_DEPFILE_PATTERNS};
use crate::parallel::parallel_map_ordered;
use crate::record::MigrationRecord;

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("cannot open repository {path}")]
    RepoUnreadable {
        path: String,
        #[source]
        source: git2::Error,
    },
    #[error(transparent)]
    Git(#[from] git2::Error),
    #[error("candidate from {commit} is not single-pair (|added|={added}, |removed|={removed})")]
    MultiPairCandidate {
        commit: String,
        added: usize,
        removed: usize,
    },
    #[error("{path}:{line}: expected `repo_id<TAB>local_path`")]
    BadRepoList { path: String, line: usize },
    #[error("duplicate repo id {0:?} in repo list")]
    DuplicateRepoId(String),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct MinerConfig {
    /// Filename patterns treated as dependency files.
    pub depfile_patterns: Vec<String>,
    /// Pin the median m instead of computing it over the mining run.
    pub median_override: Option<u64>,
    /// Repository-level worker pool size.
    pub workers: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            depfile_patterns: DEFAULT_DEPFILE_PATTERNS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            median_override: None,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitMeta {
    pub repo_id: String,
    pub commit_hash: String,
    pub author_name: String,
    pub author_date: DateTime<Utc>,
    pub message: String,
    pub parent_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMigration {
    pub commit: CommitMeta,
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
}

impl CandidateMigration {
    pub fn libraries_added(&self) -> usize {
        self.added.len()
    }

    pub fn libraries_removed(&self) -> usize {
        self.removed.len()
    }

    pub fn change_size(&self) -> usize {
        self.added.len() + self.removed.len()
    }
}

/// Counters for one mining run. Every scanned commit lands in exactly one
/// bucket, so `commits_scanned` equals `retained` plus all exclusion
/// counters; `conserves` checks that.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MinerStats {
    /// Commits walked in the repositories, including ones without
    /// dependency-file changes.
    pub commits_walked: u64,
    /// Walked commits skipped before candidate filtering: no dependency
    /// file touched.
    pub no_depfile_change: u64,
    /// Walked commits skipped because an object could not be read.
    pub scan_warnings: u64,
    /// Commits that entered candidate filtering.
    pub commits_scanned: u64,
    pub merge_excluded: u64,
    pub bot_excluded: u64,
    pub no_dual_change: u64,
    /// Excluded by `| |added| - |removed| | <= 1`.
    pub unbalanced_excluded: u64,
    /// The median m used by the size cap (0 when no candidates existed).
    pub median_m: u64,
    pub dropped_by_median: u64,
    pub dropped_multi_pair: u64,
    /// Candidates that survived every filter.
    pub retained: u64,
    /// Duplicate (repo, commit, source, target) records removed.
    pub duplicates_removed: u64,
    pub repos_failed: u64,
}

impl MinerStats {
    pub fn conserves(&self) -> bool {
        self.commits_scanned
            == self.merge_excluded
                + self.bot_excluded
                + self.no_dual_change
                + self.unbalanced_excluded
                + self.dropped_by_median
                + self.dropped_multi_pair
                + self.retained
    }
}

/// The three candidate-commit heuristics: not a merge, not authored by a
/// bot, and at least one dependency file with both additions and removals.
pub fn is_candidate_commit(commit: &CommitMeta, touched_depfiles: &[DependencyDiff]) -> bool {
    !is_merge(commit) && !is_bot_author(commit) && has_dual_change(touched_depfiles)
}

fn is_merge(commit: &CommitMeta) -> bool {
    commit.parent_count >= 2
}

fn is_bot_author(commit: &CommitMeta) -> bool {
    commit.author_name.to_lowercase().contains("bot")
}

fn has_dual_change(diffs: &[DependencyDiff]) -> bool {
    diffs.iter().any(|d| d.is_dual_change())
}

/// Union the per-file diffs of one commit. A name appearing added in one
/// file and removed in another cancels out (a move, not a migration).
fn union_changes(diffs: &[DependencyDiff]) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut added: BTreeSet<String> = BTreeSet::new();
    let mut removed: BTreeSet<String> = BTreeSet::new();
    for diff in diffs {
        added.extend(diff.added.iter().cloned());
        removed.extend(diff.removed.iter().cloned());
    }
    let both: BTreeSet<String> = added.intersection(&removed).cloned().collect();
    (
        added.difference(&both).cloned().collect(),
        removed.difference(&both).cloned().collect(),
    )
}

/// Two-pass candidate extraction.
///
/// Pass 1 keeps commits passing [`is_candidate_commit`] with a balanced
/// change set and computes the median m of `L_a + L_r` (lower median on
/// ties). Pass 2 drops candidates larger than m, then keeps only
/// single-pair commits.
pub fn extract_candidates(
    corpus: impl IntoIterator<Item = (CommitMeta, Vec<DependencyDiff>)>,
    median_override: Option<u64>,
) -> (Vec<CandidateMigration>, MinerStats) {
    let mut stats = MinerStats::default();
    let mut candidates: Vec<CandidateMigration> = Vec::new();

    for (commit, diffs) in corpus {
        stats.commits_scanned += 1;
        if is_merge(&commit) {
            stats.merge_excluded += 1;
            continue;
        }
        if is_bot_author(&commit) {
            stats.bot_excluded += 1;
            continue;
        }
        if !has_dual_change(&diffs) {
            stats.no_dual_change += 1;
            continue;
        }
        let (added, removed) = union_changes(&diffs);
        if added.is_empty() || removed.is_empty() {
            // Cross-file cancellation emptied one side.
            stats.no_dual_change += 1;
            continue;
        }
        if added.len().abs_diff(removed.len()) > 1 {
            stats.unbalanced_excluded += 1;
            continue;
        }
        candidates.push(CandidateMigration {
            commit,
            added,
            removed,
        });
    }

    let median = median_override.unwrap_or_else(|| {
        let mut sizes: Vec<u64> = candidates.iter().map(|c| c.change_size() as u64).collect();
        sizes.sort_unstable();
        if sizes.is_empty() {
            0
        } else {
            sizes[(sizes.len() - 1) / 2]
        }
    });
    stats.median_m = median;

    let mut retained = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        if candidate.change_size() as u64 > median {
            stats.dropped_by_median += 1;
        } else if candidate.libraries_added() == 1 && candidate.libraries_removed() == 1 {
            stats.retained += 1;
            retained.push(candidate);
        } else {
            stats.dropped_multi_pair += 1;
        }
    }
    (retained, stats)
}

/// Reduce single-pair candidates to records, deduplicating on
/// (repo, commit, source, target). A multi-pair candidate here is an
/// upstream bug, not data.
pub fn candidates_to_records(
    candidates: &[CandidateMigration],
) -> Result<(Vec<MigrationRecord>, u64), MinerError> {
    let mut seen: BTreeSet<(String, String, String, String)> = BTreeSet::new();
    let mut records = Vec::with_capacity(candidates.len());
    let mut duplicates = 0u64;
    for candidate in candidates {
        if candidate.libraries_added() != 1 || candidate.libraries_removed() != 1 {
            return Err(MinerError::MultiPairCandidate {
                commit: candidate.commit.commit_hash.clone(),
                added: candidate.libraries_added(),
                removed: candidate.libraries_removed(),
            });
        }
        let source = candidate
            .removed
            .iter()
            .next()
            .expect("one removed")
            .clone();
        let target = candidate.added.iter().next().expect("one added").clone();
        let key = (
            candidate.commit.repo_id.clone(),
            candidate.commit.commit_hash.clone(),
            source.clone(),
            target.clone(),
        );
        if !seen.insert(key) {
            duplicates += 1;
            continue;
        }
        records.push(MigrationRecord {
            repo_id: candidate.commit.repo_id.clone(),
            commit_hash: candidate.commit.commit_hash.clone(),
            date: candidate.commit.author_date,
            source,
            target,
            commit_message: candidate.commit.message.clone(),
            intent: None,
            intent_types: None,
            masked_intent: None,
        });
    }
    Ok((records, duplicates))
}

/// One scanned commit: metadata plus the diffs of its touched dependency
/// files.
pub type ScannedCommit = (CommitMeta, Vec<DependencyDiff>);

/// Per-repository scan counters, folded into [`MinerStats`] by the driver.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScanCounters {
    pub commits_walked: u64,
    pub no_depfile_change: u64,
    pub warnings: u64,
}

/// Walk one repository and return, per commit, the metadata and the diffs of
/// every touched dependency file against the first parent (the empty tree
/// for root commits). Commits touching no dependency file are counted, not
/// yielded. Works on bare repositories; only tree objects are read.
pub fn scan_repository(
    repo_id: &str,
    path: &Path,
    config: &MinerConfig,
) -> Result<(Vec<ScannedCommit>, ScanCounters), MinerError> {
    let repo = git2::Repository::open(path).map_err(|source| MinerError::RepoUnreadable {
        path: path.display().to_string(),
        source,
    })?;
    let mut counters = ScanCounters::default();
    let mut items: Vec<ScannedCommit> = Vec::new();

    let mut walk = repo.revwalk()?;
    walk.set_sorting(git2::Sort::TOPOLOGICAL | git2::Sort::TIME)?;
    let mut have_start = false;
    if walk.push_head().is_ok() {
        have_start = true;
    }
    if walk.push_glob("refs/heads/*").is_ok() {
        have_start = true;
    }
    if !have_start {
        // Empty repository: nothing to scan.
        return Ok((items, counters));
    }

    for oid in walk {
        let oid = match oid {
            Ok(oid) => oid,
            Err(_) => {
                counters.warnings += 1;
                continue;
            }
        };
        counters.commits_walked += 1;
        match scan_commit(&repo, repo_id, oid, config) {
            Ok(Some(item)) => items.push(item),
            Ok(None) => counters.no_depfile_change += 1,
            Err(_) => counters.warnings += 1,
        }
    }

    // Stable output order regardless of walk internals.
    items.sort_by(|a, b| {
        a.0.author_date
            .cmp(&b.0.author_date)
            .then_with(|| a.0.commit_hash.cmp(&b.0.commit_hash))
    });
    Ok((items, counters))
}

fn scan_commit(
    repo: &git2::Repository,
    repo_id: &str,
    oid: git2::Oid,
    config: &MinerConfig,
) -> Result<Option<ScannedCommit>, git2::Error> {
    let commit = repo.find_commit(oid)?;
    let tree = commit.tree()?;
    let parent_tree = match commit.parent_count() {
        0 => None,
        _ => Some(commit.parent(0)?.tree()?),
    };

    let diff = repo.diff_tree_to_tree(parent_tree.as_ref(), Some(&tree), None)?;
    let mut touched: Vec<DependencyDiff> = Vec::new();
    for delta in diff.deltas() {
        let old_path = delta.old_file().path().map(path_string);
        let new_path = delta.new_file().path().map(path_string);
        let display_path = new_path
            .clone()
            .or_else(|| old_path.clone())
            .unwrap_or_default();
        let relevant = [&old_path, &new_path]
            .into_iter()
            .flatten()
            .any(|p| depfile::filename_matches(p, &config.depfile_patterns));
        if !relevant {
            continue;
        }
        let old_content = read_blob(repo, parent_tree.as_ref(), old_path.as_deref())?;
        let new_content = read_blob(repo, Some(&tree), new_path.as_deref())?;
        let old_lines: Vec<&str> = old_content.lines().collect();
        let new_lines: Vec<&str> = new_content.lines().collect();
        let file_diff =
            depfile::diff_dependency_file(&old_lines, &new_lines).with_file_path(display_path);
        if !file_diff.added.is_empty() || !file_diff.removed.is_empty() {
            touched.push(file_diff);
        }
    }
    if touched.is_empty() {
        return Ok(None);
    }

    let author = commit.author();
    let meta = CommitMeta {
        repo_id: repo_id.to_string(),
        commit_hash: oid.to_string(),
        author_name: String::from_utf8_lossy(author.name_bytes()).into_owned(),
        author_date: Utc
            .timestamp_opt(author.when().seconds(), 0)
            .single()
            .unwrap_or_else(|| Utc.timestamp_opt(0, 0).single().expect("epoch")),
        message: String::from_utf8_lossy(commit.message_bytes()).into_owned(),
        parent_count: commit.parent_count(),
    };
    Ok(Some((meta, touched)))
}

fn path_string(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

fn read_blob(
    repo: &git2::Repository,
    tree: Option<&git2::Tree>,
    path: Option<&str>,
) -> Result<String, git2::Error> {
    let (Some(tree), Some(path)) = (tree, path) else {
        return Ok(String::new());
    };
    let entry = match tree.get_path(Path::new(path)) {
        Ok(entry) => entry,
        // Absent on this side of the diff (added or deleted file).
        Err(_) => return Ok(String::new()),
    };
    let object = entry.to_object(repo)?;
    match object.into_blob() {
        Ok(blob) => Ok(String::from_utf8_lossy(blob.content()).into_owned()),
        Err(_) => Ok(String::new()),
    }
}

/// One line of the repo-list input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoEntry {
    pub repo_id: String,
    pub path: PathBuf,
    /// Extra tab-separated columns, kept verbatim (selection metadata like
    /// stars or contributor counts; the miner does not enforce them).
    pub metadata: Option<String>,
}

/// Parse a newline-delimited `repo_id<TAB>local_path` list. Blank lines and
/// `#` comments are skipped; columns after the path (operator metadata such
/// as stars or contributor counts) are carried along untouched.
pub fn read_repo_list(path: &Path) -> Result<Vec<RepoEntry>, MinerError> {
    let text = std::fs::read_to_string(path).map_err(|source| MinerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut entries = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let Some((repo_id, rest)) = line.split_once('\t') else {
            return Err(MinerError::BadRepoList {
                path: path.display().to_string(),
                line: idx + 1,
            });
        };
        let (local_path, metadata) = match rest.split_once('\t') {
            Some((p, meta)) => (p, Some(meta.to_string())),
            None => (rest, None),
        };
        if !seen.insert(repo_id.to_string()) {
            return Err(MinerError::DuplicateRepoId(repo_id.to_string()));
        }
        entries.push(RepoEntry {
            repo_id: repo_id.to_string(),
            path: PathBuf::from(local_path),
            metadata,
        });
    }
    Ok(entries)
}

#[derive(Debug)]
pub struct MineOutcome {
    pub records: Vec<MigrationRecord>,
    pub stats: MinerStats,
    /// Repositories that could not be mined, with the error message.
    pub failed_repos: Vec<(String, String)>,
}

/// Mine a set of repositories. Repositories are scanned by a worker pool
/// (one repository is never split across workers); the median filter is a
/// serial barrier over the merged corpus, so the record list is identical
/// for any worker count.
pub fn mine_repositories(
    repos: &[RepoEntry],
    config: &MinerConfig,
) -> Result<MineOutcome, MinerError> {
    let mut ordered: Vec<&RepoEntry> = repos.iter().collect();
    ordered.sort_by(|a, b| a.repo_id.cmp(&b.repo_id));

    let scans = parallel_map_ordered(&ordered, config.workers, |entry| {
        scan_repository(&entry.repo_id, &entry.path, config)
            .map_err(|e| (entry.repo_id.clone(), e.to_string()))
    });

    let mut corpus: Vec<ScannedCommit> = Vec::new();
    let mut scan_counters = ScanCounters::default();
    let mut failed_repos = Vec::new();
    for scan in scans {
        match scan {
            Ok((items, counters)) => {
                corpus.extend(items);
                scan_counters.commits_walked += counters.commits_walked;
                scan_counters.no_depfile_change += counters.no_depfile_change;
                scan_counters.warnings += counters.warnings;
            }
            Err((repo_id, message)) => failed_repos.push((repo_id, message)),
        }
    }

    let (candidates, mut stats) = extract_candidates(corpus, config.median_override);
    let (mut records, duplicates) = candidates_to_records(&candidates)?;
    records.sort_by(|a, b| {
        a.repo_id
            .cmp(&b.repo_id)
            .then_with(|| a.date.cmp(&b.date))
            .then_with(|| a.commit_hash.cmp(&b.commit_hash))
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| a.target.cmp(&b.target))
    });

    stats.commits_walked = scan_counters.commits_walked;
    stats.no_depfile_change = scan_counters.no_depfile_change;
    stats.scan_warnings = scan_counters.warnings;
    stats.duplicates_removed = duplicates;
    stats.repos_failed = failed_repos.len() as u64;
    Ok(MineOutcome {
        records,
        stats,
        failed_repos,
    })
}
