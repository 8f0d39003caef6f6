//! Parsing of requirements-style dependency files and version-agnostic
//! diffing of two file snapshots.
//!
//! Only the library *names* matter downstream: version constraints are
//! parsed so lines can be recognized, then discarded. A name change is a
//! migration signal; a version change is not.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default filename patterns treated as dependency files (`*` wildcard only).
pub const DEFAULT_DEPFILE_PATTERNS: &[&str] = &["requirements*.txt"];

#[derive(Debug, Error)]
pub enum NameError {
    #[error("library name is empty or all separators: {raw:?}")]
    Empty { raw: String },
}

/// One parsed requirement line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementEntry {
    /// Normalized name, see [`normalize_library_name`].
    pub name: String,
    /// Name as written in the file (extras included).
    pub raw_name: String,
    /// Version-constraint string, possibly empty (`">=1.6.0"`).
    pub specifier: String,
    /// The original physical line.
    pub raw_line: String,
}

impl RequirementEntry {
    /// Serialize back to a minimal requirement line (`raw_name` + specifier).
    /// Comments and environment markers are not reproduced.
    pub fn to_requirement_line(&self) -> String {
        format!("{}{}", self.raw_name, self.specifier)
    }
}

/// Added/removed library names between two snapshots of one dependency file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyDiff {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub file_path: String,
}

impl DependencyDiff {
    pub fn with_file_path(mut self, path: impl Into<String>) -> Self {
        self.file_path = path.into();
        self
    }

    /// True when the diff has both additions and removals, the shape a
    /// library replacement must have.
    pub fn is_dual_change(&self) -> bool {
        !self.added.is_empty() && !self.removed.is_empty()
    }
}

/// Result of parsing a whole file: recognized entries plus a count of
/// non-blank, non-comment lines that were skipped (options, URLs, editable
/// installs, unparseable garbage).
#[derive(Debug, Clone, Default)]
pub struct ParsedRequirements {
    pub entries: Vec<RequirementEntry>,
    pub skipped: usize,
}

/// Normalize a library name for comparison.
///
/// Lowercases, strips an extras segment (`requests[security]` ->
/// `requests`), and folds runs of non-alphanumeric characters (`.`, `_`,
/// `-`, or stray punctuation) to a single `-`, so that `oslo.config`,
/// `oslo_config` and `oslo-config` compare equal. A `/` marks a
/// distribution/import alias pair (`pycryptodome/Crypto`); each segment is
/// normalized independently and the segments are re-joined with `/`.
pub fn normalize_library_name(raw: &str) -> Result<String, NameError> {
    let segments: Vec<String> = raw
        .split('/')
        .map(normalize_segment)
        .filter(|s| !s.is_empty())
        .collect();
    if segments.is_empty() {
        return Err(NameError::Empty {
            raw: raw.to_string(),
        });
    }
    Ok(segments.join("/"))
}

fn normalize_segment(segment: &str) -> String {
    let without_extras = strip_extras(segment);
    let mut out = String::with_capacity(without_extras.len());
    let mut in_separator = false;
    for ch in without_extras.trim().chars() {
        if ch.is_alphanumeric() {
            if in_separator && !out.is_empty() {
                out.push('-');
            }
            in_separator = false;
            for lower in ch.to_lowercase() {
                out.push(lower);
            }
        } else {
            in_separator = true;
        }
    }
    out
}

fn strip_extras(name: &str) -> String {
    match name.find('[') {
        None => name.to_string(),
        Some(open) => {
            let rest = match name[open..].find(']') {
                Some(close) => &name[open + close + 1..],
                None => "",
            };
            format!("{}{}", &name[..open], rest)
        }
    }
}

/// Parse one physical line of a requirements-style file.
///
/// Returns `None` for blank lines, full-line comments, option lines
/// (leading `-`, which covers `-r`, `-e`, `--hash`, ...), URL/path/editable
/// requirements, and lines that do not fit the `name [extras] specifiers`
/// grammar. Environment markers (after `;`) and trailing comments are
/// stripped before parsing.
pub fn parse_requirement_line(line: &str) -> Option<RequirementEntry> {
    let raw_line = line.to_string();
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return None;
    }
    // Option lines and editable installs.
    if trimmed.starts_with('-') {
        return None;
    }
    // URL, VCS and path requirements carry no usable distribution name.
    if trimmed.contains("://")
        || trimmed.starts_with("git+")
        || trimmed.starts_with("./")
        || trimmed.starts_with('/')
        || trimmed.starts_with('~')
        || trimmed.contains('@')
    {
        return None;
    }

    let no_comment = strip_comment(trimmed);
    let no_marker = match no_comment.split_once(';') {
        Some((head, _)) => head,
        None => no_comment,
    };
    let body = no_marker.trim();
    if body.is_empty() {
        return None;
    }

    let name_end = body
        .find(|c: char| !(c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')))
        .unwrap_or(body.len());
    if name_end == 0 {
        return None;
    }
    let mut raw_name = body[..name_end].to_string();
    let mut rest = &body[name_end..];

    // Extras: name[security],  name [extra1,extra2]
    let after_name = rest.trim_start();
    if after_name.starts_with('[') {
        let close = after_name.find(']')?;
        raw_name.push_str(&after_name[..=close]);
        rest = &after_name[close + 1..];
    }

    let specifier = rest.trim().replace(' ', "");
    if !specifier.is_empty() && !specifier.starts_with(['=', '<', '>', '!', '~']) {
        return None;
    }

    let name = normalize_library_name(&raw_name).ok()?;
    Some(RequirementEntry {
        name,
        raw_name,
        specifier,
        raw_line,
    })
}

/// Strip a trailing comment. A `#` starts a comment when it is the first
/// character or is preceded by whitespace.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

/// Join backslash continuations, then parse every line.
pub fn parse_requirements(lines: &[&str]) -> ParsedRequirements {
    let joined = join_continuations(lines);
    let mut parsed = ParsedRequirements::default();
    for line in &joined {
        match parse_requirement_line(line) {
            Some(entry) => parsed.entries.push(entry),
            None => {
                let t = line.trim();
                if !t.is_empty() && !t.starts_with('#') {
                    parsed.skipped += 1;
                }
            }
        }
    }
    parsed
}

fn join_continuations(lines: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    let mut pending: Option<String> = None;
    for line in lines {
        let mut current = pending.take().unwrap_or_default();
        match line.strip_suffix('\\') {
            Some(head) => {
                current.push_str(head);
                pending = Some(current);
            }
            None => {
                current.push_str(line);
                out.push(current);
            }
        }
    }
    if let Some(p) = pending {
        out.push(p);
    }
    out
}

/// Version-agnostic diff of two full file snapshots. Names present on both
/// sides (with any version constraint) are excluded from both sets.
pub fn diff_dependency_file(old_lines: &[&str], new_lines: &[&str]) -> DependencyDiff {
    let old_names: BTreeSet<String> = parse_requirements(old_lines)
        .entries
        .into_iter()
        .map(|e| e.name)
        .collect();
    let new_names: BTreeSet<String> = parse_requirements(new_lines)
        .entries
        .into_iter()
        .map(|e| e.name)
        .collect();
    DependencyDiff {
        added: new_names.difference(&old_names).cloned().collect(),
        removed: old_names.difference(&new_names).cloned().collect(),
        file_path: String::new(),
    }
}

/// Match a file name against a `*`-wildcard pattern list. Matching is on the
/// final path component, case-sensitively.
pub fn filename_matches(path: &str, patterns: &[String]) -> bool {
    let name = path.rsplit('/').next().unwrap_or(path);
    patterns.iter().any(|p| wildcard_match(p, name))
}

fn wildcard_match(pattern: &str, text: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == text;
    }
    let mut pos = 0usize;
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            continue;
        }
        if i == 0 {
            if !text.starts_with(part) {
                return false;
            }
            pos = part.len();
        } else if i == parts.len() - 1 {
            return text.len() >= pos + part.len() && text.ends_with(part);
        } else {
            match text[pos..].find(part) {
                Some(found) => pos += found + part.len(),
                None => return false,
            }
        }
    }
    true
}
