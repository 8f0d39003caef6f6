//! BM25 demonstration database.
//!
//! Training records become 4-tuple entities `(source, target, intents,
//! intent_types)`; an Okapi BM25 index over the entity text serves top-k
//! retrieval for query triples `(source, intents, intent_types)`. The target
//! name is deliberately left out of the indexed text so similarity comes
//! from the migration context, not from the answer; the retrieved
//! demonstration still carries the target for prompting.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::MigrationRecord;

/// On-disk index format tag.
pub const INDEX_FORMAT: &str = "bm25-index/1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index over an empty entity list")]
    Empty,
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid index file")]
    Format {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported index format {found:?} (expected {expected:?})")]
    Version {
        path: String,
        found: String,
        expected: String,
    },
}

/// One demonstration stored in the retrieval database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationEntity {
    pub source: String,
    pub target: String,
    /// Masked intent text; empty when the source record had none.
    pub intents: String,
    /// `Category/Subcategory` labels.
    pub intent_types: Vec<String>,
    /// Id of the record this entity came from.
    pub provenance: String,
}

impl MigrationEntity {
    pub fn from_record(record: &MigrationRecord) -> Self {
        MigrationEntity {
            source: record.source.clone(),
            target: record.target.clone(),
            intents: record.query_intent().to_string(),
            intent_types: record.intent_type_labels().to_vec(),
            provenance: record.id(),
        }
    }
}

/// A retrieval query: source library plus optional migration context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub source: String,
    pub intents: String,
    pub intent_types: Vec<String>,
}

impl Query {
    pub fn from_record(record: &MigrationRecord) -> Self {
        Query {
            source: record.source.clone(),
            intents: record.query_intent().to_string(),
            intent_types: record.intent_type_labels().to_vec(),
        }
    }
}

/// One retrieval hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDemo {
    pub entity: MigrationEntity,
    pub score: f64,
    /// 1-based position in the result list.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexedDoc {
    entity: MigrationEntity,
    term_counts: BTreeMap<String, u32>,
    len: u32,
}

/// Immutable Okapi BM25 index. Documents keep their build-time order; the
/// document id is the position in that order and is the ranking tie-break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    format: String,
    params: Bm25Params,
    avg_doc_len: f64,
    doc_freq: BTreeMap<String, u32>,
    docs: Vec<IndexedDoc>,
}

/// Compose the text a document or query is indexed under: source, intent
/// text, then the intent-type labels, single-space joined. Lowercased, with
/// `/` treated as a space so alias pairs and label paths split into words.
pub fn entity_text(entity: &MigrationEntity) -> String {
    compose_text(
        &entity.source,
        &entity.intents,
        entity.intent_types.iter().map(|s| s.as_str()),
    )
}

/// Same composition rule as [`entity_text`], applied to a query.
pub fn query_text(query: &Query) -> String {
    compose_text(
        &query.source,
        &query.intents,
        query.intent_types.iter().map(|s| s.as_str()),
    )
}

fn compose_text<'a>(source: &str, intents: &str, labels: impl Iterator<Item = &'a str>) -> String {
    let mut parts: Vec<&str> = Vec::new();
    if !source.trim().is_empty() {
        parts.push(source);
    }
    if !intents.trim().is_empty() {
        parts.push(intents);
    }
    let label_vec: Vec<&str> = labels.filter(|l| !l.trim().is_empty()).collect();
    parts.extend(&label_vec);

    let joined = parts.join(" ");
    let lowered = joined.to_lowercase().replace('/', " ");
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercase, split on any non-alphanumeric character, keep duplicates.
/// No stemming, no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

impl Bm25Index {
    /// Build an index over the entity text of each entity. Duplicates are
    /// indexed as distinct documents.
    pub fn build(entities: Vec<MigrationEntity>, params: Bm25Params) -> Result<Self, IndexError> {
        if entities.is_empty() {
            return Err(IndexError::Empty);
        }
        let mut docs = Vec::with_capacity(entities.len());
        let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
        let mut total_len = 0u64;
        for entity in entities {
            let tokens = tokenize(&entity_text(&entity));
            let mut term_counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *term_counts.entry(t.clone()).or_insert(0) += 1;
            }
            for term in term_counts.keys() {
                *doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
            total_len += tokens.len() as u64;
            docs.push(IndexedDoc {
                entity,
                term_counts,
                len: tokens.len() as u32,
            });
        }
        let avg_doc_len = total_len as f64 / docs.len() as f64;
        Ok(Bm25Index {
            format: INDEX_FORMAT.to_string(),
            params,
            avg_doc_len,
            doc_freq,
            docs,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn document_frequency(&self, term: &str) -> u32 {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn entity(&self, doc_id: usize) -> &MigrationEntity {
        &self.docs[doc_id].entity
    }

    /// Okapi BM25 score of one document against the query token multiset.
    /// Each query token contributes a term, so repeated tokens count twice:
    ///
    /// `sum over t of IDF(t) * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))`
    ///
    /// with `IDF(t) = ln((N - df + 0.5) / (df + 0.5) + 1)`, which is
    /// non-negative for every df <= N.
    pub fn score(&self, query_tokens: &[String], doc_id: usize) -> f64 {
        let doc = &self.docs[doc_id];
        let n = self.docs.len() as f64;
        let k1 = self.params.k1;
        let b = self.params.b;
        let dl = doc.len as f64;
        let norm = k1 * (1.0 - b + b * dl / self.avg_doc_len);

        let mut total = 0.0;
        for term in query_tokens {
            let tf = doc.term_counts.get(term).copied().unwrap_or(0) as f64;
            if tf == 0.0 {
                continue;
            }
            let df = self.document_frequency(term) as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            total += idf * (tf * (k1 + 1.0)) / (tf + norm);
        }
        total
    }

    /// Top-k retrieval. Scores every document against the query text and
    /// returns the best k in (score desc, doc id asc) order; fewer than k
    /// documents means all of them.
    pub fn retrieve(&self, query: &Query, k: usize) -> Vec<RetrievedDemo> {
        self.retrieve_filtered(query, k, None)
    }

    /// [`Bm25Index::retrieve`] with self-exclusion: a document whose
    /// provenance equals `exclude_record` is skipped, so a training record
    /// never retrieves itself in leave-one-out diagnostics.
    pub fn retrieve_filtered(
        &self,
        query: &Query,
        k: usize,
        exclude_record: Option<&str>,
    ) -> Vec<RetrievedDemo> {
        let tokens = tokenize(&query_text(query));
        let mut scored: Vec<(usize, f64)> = self
            .docs
            .iter()
            .enumerate()
            .filter(|(_, doc)| Some(doc.entity.provenance.as_str()) != exclude_record)
            .map(|(id, _)| (id, self.score(&tokens, id)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("BM25 scores are finite")
                .then(a.0.cmp(&b.0))
        });
        scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (id, score))| RetrievedDemo {
                entity: self.docs[id].entity.clone(),
                score,
                rank: i + 1,
            })
            .collect()
    }

    /// Persist as versioned JSON. The serialization is deterministic:
    /// building the same entity list always produces identical bytes.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let json = serde_json::to_string(self).expect("index serializes");
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| IndexError::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
            }
        }
        fs::write(path, json).map_err(|e| IndexError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let text = fs::read_to_string(path).map_err(|e| IndexError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let index: Bm25Index = serde_json::from_str(&text).map_err(|e| IndexError::Format {
            path: path.display().to_string(),
            source: e,
        })?;
        if index.format != INDEX_FORMAT {
            return Err(IndexError::Version {
                path: path.display().to_string(),
                found: index.format,
                expected: INDEX_FORMAT.to_string(),
            });
        }
        Ok(index)
    }
}
