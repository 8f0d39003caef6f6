//! Mining and recommendation toolkit for Python library migrations.
//!
//! The pipeline has three stages:
//!
//! 1. **Mining** — walk locally cloned git repositories, diff dependency
//!    files commit by commit, and extract `source -> target` migration
//!    records ([`miner`], [`depfile`]).
//! 2. **Enrichment** — use a chat-completion model to generate a migration
//!    intent from each commit message, classify it into a closed intent-type
//!    taxonomy, screen out non-analogous library pairs, and mask target-name
//!    leaks ([`intent`], [`gateway`], [`prompt`]).
//! 3. **Recommendation and evaluation** — index the training records as a
//!    BM25-searchable demonstration database, prompt a model for a ranked
//!    top-10 list of replacement libraries, and score the output with
//!    Precision@k and MRR ([`retrieval`], [`recommend`], [`eval`]).
//!
//! Everything is deterministic given the same inputs and a deterministic
//! provider; the only nondeterminism in a live run is model sampling.

pub mod depfile;
pub mod eval;
pub mod gateway;
pub mod intent;
pub mod jsonl;
pub mod miner;
pub mod parallel;
pub mod prompt;
pub mod recommend;
pub mod record;
pub mod retrieval;

pub use depfile::normalize_library_name;
pub use record::MigrationRecord;
