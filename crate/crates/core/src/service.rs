//! Query handling shared by the HTTP API and the CLI.
//!
//! Every snippet leaving this module has been redacted exactly once, and no
//! response ever carries more than a snippet of any document.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bm25::{Bm25Index, Bm25Params};
use crate::corpus::{ResultId, Snippet};
use crate::exact::SuffixArrayIndex;
use crate::langdetect::{Detection, LangDetectModel};
use crate::pii::{self, PiiRuleSet};
use crate::store::{IndexSet, StoreError};
use crate::tags;

pub const DEFAULT_MAX_RESULTS: usize = 10;
pub const DEFAULT_MAX_RESULTS_CAP: usize = 100;
pub const DEFAULT_CONTEXT_WORDS: usize = 50;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Words of context on each side of an exact hit.
    pub context_words: usize,
    pub params: Bm25Params,
    pub max_results_cap: usize,
    /// Where flags are appended. Defaults to `flags.jsonl` in the index directory.
    pub flag_log: Option<PathBuf>,
    pub pii_rules: PiiRuleSet,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            context_words: DEFAULT_CONTEXT_WORDS,
            params: Bm25Params::default(),
            max_results_cap: DEFAULT_MAX_RESULTS_CAP,
            flag_log: None,
            pii_rules: PiiRuleSet::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Validation(String),
    #[error("flag log: {0}")]
    FlagLog(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn invalid(msg: impl Into<String>) -> ServiceError {
    ServiceError::Validation(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fuzzy,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LanguageSelector {
    Tag(String),
    All,
    Detect,
}

/// Raw request parameters, as they arrive on the query string or the CLI.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub q: Option<String>,
    pub lang: Option<String>,
    pub k: Option<String>,
    pub page: Option<String>,
    /// Comma-separated dataset names.
    pub exclude: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQuery {
    pub mode: Mode,
    pub text: String,
    pub language: LanguageSelector,
    pub max_results: usize,
    pub page: usize,
    pub excluded_datasets: BTreeSet<String>,
}

/// Splits mode from text and validates the request controls.
pub fn parse_query(req: &SearchRequest, max_results_cap: usize) -> Result<ParsedQuery, ServiceError> {
    let raw = req.q.as_deref().unwrap_or("").trim();
    if raw.is_empty() {
        return Err(invalid("query is empty"));
    }
    let (mode, text) = match raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
        Some(inner) if raw.len() >= 2 => (Mode::Exact, inner),
        _ => (Mode::Fuzzy, raw),
    };
    if text.trim().is_empty() {
        return Err(invalid("quoted query is empty"));
    }

    let language = match req.lang.as_deref().map(str::trim) {
        None | Some("") | Some("all") => LanguageSelector::All,
        Some("detect") | Some("auto") => LanguageSelector::Detect,
        Some(tag) => match tags::index_tag_for(tag) {
            Some(t) => LanguageSelector::Tag(t.to_string()),
            None => {
                return Err(invalid(format!(
                    "unknown language {tag:?}; expected all, detect or one of {}",
                    tags::INDEX_TAGS.join(", ")
                )))
            }
        },
    };

    let max_results = match req.k.as_deref().map(str::trim) {
        None | Some("") => DEFAULT_MAX_RESULTS.min(max_results_cap),
        Some(k) => {
            let k: usize = k
                .parse()
                .map_err(|_| invalid(format!("k={k:?} is not a positive integer")))?;
            if k == 0 || k > max_results_cap {
                return Err(invalid(format!("k={k} outside [1, {max_results_cap}]")));
            }
            k
        }
    };

    let page = match req.page.as_deref().map(str::trim) {
        None | Some("") => 0,
        Some(p) => p
            .parse()
            .map_err(|_| invalid(format!("page={p:?} is not a non-negative integer")))?,
    };

    let excluded_datasets = req
        .exclude
        .as_deref()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();

    Ok(ParsedQuery {
        mode,
        text: text.to_string(),
        language,
        max_results,
        page,
        excluded_datasets,
    })
}

/// One returned snippet, redacted, with its score (fuzzy) or per-document
/// occurrence rank (exact).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultItem {
    #[serde(flatten)]
    pub snippet: Snippet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub index_build_id: String,
    pub mode: Mode,
    pub query: String,
    pub results: Vec<ResultItem>,
    /// Per-language groups in registry order (fuzzy search over all languages).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results_by_language: Option<IndexMap<String, Vec<ResultItem>>>,
    /// Exact mode: every occurrence in the corpus, before dataset exclusion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_matches: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected_language: Option<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<usize>,
    /// Present when a further exact-mode page exists; pass back as `page`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_token: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlagCategory {
    Privacy,
    IpRights,
    Harmful,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagRequest {
    pub result_id: String,
    pub reason: String,
    pub category: FlagCategory,
    #[serde(default)]
    pub reporter: Option<String>,
}

/// One line of the flag log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagRecord {
    pub receipt: String,
    pub result_id: ResultId,
    pub reason: String,
    pub category: FlagCategory,
    pub timestamp: chrono::DateTime<chrono::Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reporter: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagReceipt {
    pub receipt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub index_build_id: String,
    pub languages: Vec<String>,
}

/// Append-only JSON-lines log; each record is synced before acknowledgement.
struct FlagLog {
    path: PathBuf,
    file: Mutex<Option<File>>,
}

impl FlagLog {
    fn append(&self, record: &FlagRecord) -> std::io::Result<()> {
        let mut guard = self.file.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(OpenOptions::new().create(true).append(true).open(&self.path)?);
        }
        let file = guard.as_mut().expect("opened above");
        let mut line = serde_json::to_vec(record).expect("flag record serializes");
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()
    }
}

pub struct SearchService {
    build_id: String,
    bm25: IndexMap<String, Bm25Index>,
    exact: SuffixArrayIndex,
    detector: LangDetectModel,
    config: ServiceConfig,
    flags: FlagLog,
}

impl SearchService {
    /// Opens a built index directory.
    pub fn open(index_dir: &Path, config: ServiceConfig) -> Result<Self, ServiceError> {
        let set = IndexSet::open(index_dir)?;
        let flag_path = config.flag_log.clone().unwrap_or_else(|| index_dir.join("flags.jsonl"));
        Ok(Self::from_parts(set, config, flag_path))
    }

    pub fn from_parts(set: IndexSet, config: ServiceConfig, flag_log: PathBuf) -> Self {
        let IndexSet {
            build_id,
            bm25,
            exact,
            detector,
        } = set;
        SearchService {
            build_id,
            bm25,
            exact,
            detector,
            config,
            flags: FlagLog {
                path: flag_log,
                file: Mutex::new(None),
            },
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn build_id(&self) -> &str {
        &self.build_id
    }

    pub fn languages(&self) -> Vec<String> {
        self.bm25.keys().cloned().collect()
    }

    pub fn exact_index(&self) -> &SuffixArrayIndex {
        &self.exact
    }

    pub fn bm25_index(&self, tag: &str) -> Option<&Bm25Index> {
        self.bm25.get(tag)
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            index_build_id: self.build_id.clone(),
            languages: self.languages(),
        }
    }

    pub fn search(&self, req: &SearchRequest) -> Result<SearchResponse, ServiceError> {
        let q = parse_query(req, self.config.max_results_cap)?;
        self.execute(&q)
    }

    pub fn execute(&self, q: &ParsedQuery) -> Result<SearchResponse, ServiceError> {
        match q.mode {
            Mode::Fuzzy => self.handle_fuzzy(q),
            Mode::Exact => Ok(self.handle_exact(q)),
        }
    }

    fn redacted(&self, mut snippet: Snippet) -> Snippet {
        let out = pii::redact(&snippet.text, &self.config.pii_rules);
        snippet.text = out.text;
        snippet.redactions = out.spans;
        snippet
    }

    fn search_one(&self, index: &Bm25Index, q: &ParsedQuery) -> Vec<ResultItem> {
        let keep = |s: &crate::bm25::StoredSnippet| !q.excluded_datasets.contains(&s.result_id.dataset_name);
        index
            .search_filtered(&self.config.params, &q.text, q.max_results, keep)
            .into_iter()
            .map(|(s, score)| ResultItem {
                snippet: self.redacted(Snippet {
                    result_id: s.result_id.clone(),
                    text: s.text.clone(),
                    language_tag: index.language_tag().to_string(),
                    source_url: s.source_url.clone(),
                    redactions: Vec::new(),
                }),
                score: Some(score),
                rank: None,
            })
            .collect()
    }

    pub fn handle_fuzzy(&self, q: &ParsedQuery) -> Result<SearchResponse, ServiceError> {
        let mut response = SearchResponse {
            index_build_id: self.build_id.clone(),
            mode: Mode::Fuzzy,
            query: q.text.clone(),
            results: Vec::new(),
            results_by_language: None,
            total_matches: None,
            detected_language: None,
            page: None,
            page_token: None,
        };
        match &q.language {
            LanguageSelector::Tag(tag) => {
                let index = self
                    .bm25
                    .get(tag)
                    .ok_or_else(|| invalid(format!("language {tag:?} is not indexed")))?;
                response.results = self.search_one(index, q);
            }
            LanguageSelector::Detect => {
                let detection = self.detector.detect(&q.text);
                if let Some(index) = self.bm25.get(&detection.tag) {
                    response.results = self.search_one(index, q);
                }
                response.detected_language = Some(detection);
            }
            LanguageSelector::All => {
                let groups: IndexMap<String, Vec<ResultItem>> = self
                    .bm25
                    .iter()
                    .map(|(tag, index)| (tag.clone(), self.search_one(index, q)))
                    .filter(|(_, hits)| !hits.is_empty())
                    .collect();
                response.results_by_language = Some(groups);
            }
        }
        Ok(response)
    }

    pub fn handle_exact(&self, q: &ParsedQuery) -> SearchResponse {
        let total = self.exact.count_occurrences(&q.text).unwrap_or(0);
        let mut positions = self.exact.match_positions(&q.text).unwrap_or_default();
        positions.shuffle(&mut shuffle_rng(&q.text));
        let docs = self.exact.documents();
        positions.retain(|p| !q.excluded_datasets.contains(&docs[p.doc].dataset_name));

        let start = q.page.saturating_mul(q.max_results);
        let end = start.saturating_add(q.max_results).min(positions.len());
        let results = positions
            .get(start..end)
            .unwrap_or(&[])
            .iter()
            .map(|p| ResultItem {
                snippet: self.redacted(self.exact.snippet_for(p, q.text.len(), self.config.context_words)),
                score: None,
                rank: Some(p.rank),
            })
            .collect();
        SearchResponse {
            index_build_id: self.build_id.clone(),
            mode: Mode::Exact,
            query: q.text.clone(),
            results,
            results_by_language: None,
            total_matches: Some(total),
            detected_language: None,
            page: Some(q.page),
            page_token: (end < positions.len()).then(|| (q.page + 1).to_string()),
        }
    }

    pub fn submit_flag(&self, req: FlagRequest) -> Result<FlagReceipt, ServiceError> {
        let result_id = ResultId::parse(req.result_id.trim()).map_err(|e| invalid(format!("result_id: {e}")))?;
        if req.reason.trim().is_empty() {
            return Err(invalid("reason is empty"));
        }
        let record = FlagRecord {
            receipt: uuid::Uuid::new_v4().to_string(),
            result_id,
            reason: req.reason,
            category: req.category,
            timestamp: chrono::Utc::now(),
            reporter: req.reporter.filter(|r| !r.is_empty()),
        };
        self.flags.append(&record)?;
        Ok(FlagReceipt {
            receipt: record.receipt,
        })
    }

    pub fn flag_log_path(&self) -> &Path {
        &self.flags.path
    }
}

/// Shuffle order depends only on the query text, so pages of one query
/// line up across requests.
fn shuffle_rng(query: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(query.as_bytes());
    ChaCha8Rng::from_seed(digest.into())
}
