//! Per-language BM25 index over snippets.
//!
//! Scoring:
//!
//! ```text
//! score(q, s) = Σ_{t ∈ unique(q)} idf(t) · tf / (tf + k1 · (1 − b + b · dl / avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! Snippets are stored in ascending rendered-ResultId order and identified
//! internally by their position (ordinal), so postings sorted by ordinal are
//! sorted by ResultId and ordinal order is the tie-break order.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalyzerKind, Analyzers};
use crate::corpus::{ResultId, Snippet};
use crate::persist::{self, Decoder, Encoder, PersistError};

pub const FORMAT_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const TERMS_FILE: &str = "terms.bin";
const POSTINGS_FILE: &str = "postings.bin";
const SNIPPETS_FILE: &str = "snippets.bin";

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

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, Bm25Error> {
        if !(k1.is_finite() && k1 >= 0.0) || !(0.0..=1.0).contains(&b) {
            return Err(Bm25Error::InvalidParams { k1, b });
        }
        Ok(Bm25Params { k1, b })
    }
}

#[derive(Debug, Error)]
pub enum Bm25Error {
    #[error("invalid BM25 parameters k1={k1}, b={b} (need k1 >= 0, 0 <= b <= 1)")]
    InvalidParams { k1: f64, b: f64 },
    #[error("duplicate snippet {0}")]
    DuplicateSnippet(String),
    #[error("snippet {id} has language {found}, index is {expected}")]
    LanguageMismatch {
        id: String,
        found: String,
        expected: String,
    },
    #[error("unknown snippet {0}")]
    UnknownSnippet(String),
    #[error("cannot write index metadata {path}: {reason}")]
    Meta { path: String, reason: String },
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Posting {
    ordinal: u32,
    tf: u32,
}

/// A snippet as stored in the index: its ID, token count and display text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredSnippet {
    pub result_id: ResultId,
    pub length: u32,
    pub text: String,
    pub source_url: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    language_tag: String,
    analyzer: AnalyzerKind,
    analyzers: Analyzers,
    snippets: Vec<StoredSnippet>,
    terms: HashMap<String, usize>,
    postings: Vec<Vec<Posting>>,
    ordinals: HashMap<ResultId, u32>,
    total_tokens: u64,
    skipped_empty: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    language_tag: String,
    analyzer: AnalyzerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stopwords: Option<Vec<String>>,
    snippet_count: u64,
    avgdl: f64,
    total_tokens: u64,
    term_count: u64,
    skipped_empty: u64,
    params: Bm25Params,
}

impl Bm25Index {
    /// Builds an index with the bundled analyzers.
    pub fn build<I>(language_tag: &str, snippets: I) -> Result<Self, Bm25Error>
    where
        I: IntoIterator<Item = Snippet>,
    {
        let kind = crate::analysis::analyzer_for(language_tag)?;
        Self::build_with(language_tag, kind, &Analyzers::builtin(), snippets)
    }

    pub fn build_with<I>(
        language_tag: &str,
        analyzer: AnalyzerKind,
        analyzers: &Analyzers,
        snippets: I,
    ) -> Result<Self, Bm25Error>
    where
        I: IntoIterator<Item = Snippet>,
    {
        let mut seen = HashSet::new();
        let mut input = Vec::new();
        for s in snippets {
            if s.language_tag != language_tag {
                return Err(Bm25Error::LanguageMismatch {
                    id: s.result_id.render(),
                    found: s.language_tag,
                    expected: language_tag.to_string(),
                });
            }
            if !seen.insert(s.result_id.clone()) {
                return Err(Bm25Error::DuplicateSnippet(s.result_id.render()));
            }
            input.push((s.result_id.render(), s));
        }
        drop(seen);
        input.sort_by(|a, b| a.0.cmp(&b.0));

        let analyzers = analyzers.restricted_to(&analyzer);
        let tokenized: Vec<Vec<String>> = input
            .par_iter()
            .map(|(_, s)| analyzers.analyze(&analyzer, &s.text))
            .collect();

        let mut index = Bm25Index {
            language_tag: language_tag.to_string(),
            analyzer,
            analyzers,
            snippets: Vec::new(),
            terms: HashMap::new(),
            postings: Vec::new(),
            ordinals: HashMap::new(),
            total_tokens: 0,
            skipped_empty: 0,
        };
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for ((_, snippet), tokens) in input.into_iter().zip(&tokenized) {
            if tokens.is_empty() {
                index.skipped_empty += 1;
                continue;
            }
            let ordinal = index.snippets.len() as u32;
            counts.clear();
            for t in tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
            for (term, &tf) in &counts {
                let slot = match index.terms.get(*term) {
                    Some(&slot) => slot,
                    None => {
                        index.terms.insert(term.to_string(), index.postings.len());
                        index.postings.push(Vec::new());
                        index.postings.len() - 1
                    }
                };
                index.postings[slot].push(Posting { ordinal, tf });
            }
            index.total_tokens += tokens.len() as u64;
            index.ordinals.insert(snippet.result_id.clone(), ordinal);
            index.snippets.push(StoredSnippet {
                result_id: snippet.result_id,
                length: tokens.len() as u32,
                text: snippet.text,
                source_url: snippet.source_url,
            });
        }
        Ok(index)
    }

    pub fn language_tag(&self) -> &str {
        &self.language_tag
    }

    pub fn analyzer(&self) -> &AnalyzerKind {
        &self.analyzer
    }

    /// Number of indexed snippets (N).
    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        if self.snippets.is_empty() {
            0.0
        } else {
            self.total_tokens as f64 / self.snippets.len() as f64
        }
    }

    /// Snippets excluded at build time because they produced no tokens.
    pub fn skipped_empty(&self) -> usize {
        self.skipped_empty
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.terms.get(term).map_or(0, |&s| self.postings[s].len())
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Postings of `term` as `(snippet, tf)` in ascending ResultId order.
    pub fn postings(&self, term: &str) -> Vec<(&ResultId, u32)> {
        self.terms.get(term).map_or_else(Vec::new, |&slot| {
            self.postings[slot]
                .iter()
                .map(|p| (&self.snippets[p.ordinal as usize].result_id, p.tf))
                .collect()
        })
    }

    pub fn snippet_length(&self, id: &ResultId) -> Option<u32> {
        self.ordinals.get(id).map(|&o| self.snippets[o as usize].length)
    }

    pub fn stored(&self, id: &ResultId) -> Option<&StoredSnippet> {
        self.ordinals.get(id).map(|&o| &self.snippets[o as usize])
    }

    pub fn snippets(&self) -> &[StoredSnippet] {
        &self.snippets
    }

    /// Tokenizes with this index's own pipeline.
    pub fn analyze(&self, text: &str) -> Vec<String> {
        self.analyzers.analyze(&self.analyzer, text)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.snippets.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, params: &Bm25Params, idf: f64, tf: u32, dl: u32) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - params.b + params.b * dl as f64 / self.avgdl();
        idf * tf / (tf + params.k1 * norm)
    }

    /// BM25 score of one snippet for already-analyzed query tokens.
    pub fn score(&self, params: &Bm25Params, query_tokens: &[String], id: &ResultId) -> Result<f64, Bm25Error> {
        let ordinal = *self
            .ordinals
            .get(id)
            .ok_or_else(|| Bm25Error::UnknownSnippet(id.render()))?;
        let dl = self.snippets[ordinal as usize].length;
        let mut score = 0.0;
        for term in unique(query_tokens) {
            let Some(&slot) = self.terms.get(term) else { continue };
            let list = &self.postings[slot];
            if let Ok(i) = list.binary_search_by_key(&ordinal, |p| p.ordinal) {
                score += self.term_weight(params, self.idf(list.len()), list[i].tf, dl);
            }
        }
        Ok(score)
    }

    /// Top-`k` snippets by descending score, ties by ascending ResultId.
    pub fn search(&self, params: &Bm25Params, query: &str, k: usize) -> Vec<(ResultId, f64)> {
        self.search_filtered(params, query, k, |_| true)
            .into_iter()
            .map(|(s, score)| (s.result_id.clone(), score))
            .collect()
    }

    /// Like [`search`](Self::search), considering only snippets accepted by `keep`.
    pub fn search_filtered<F>(&self, params: &Bm25Params, query: &str, k: usize, keep: F) -> Vec<(&StoredSnippet, f64)>
    where
        F: Fn(&StoredSnippet) -> bool,
    {
        if k == 0 || self.snippets.is_empty() {
            return Vec::new();
        }
        let tokens = self.analyze(query);
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in unique(&tokens) {
            let Some(&slot) = self.terms.get(term) else { continue };
            let list = &self.postings[slot];
            let idf = self.idf(list.len());
            for p in list {
                let dl = self.snippets[p.ordinal as usize].length;
                *acc.entry(p.ordinal).or_default() += self.term_weight(params, idf, p.tf, dl);
            }
        }
        let mut hits: Vec<(u32, f64)> = acc
            .into_iter()
            .filter(|&(o, s)| s > 0.0 && keep(&self.snippets[o as usize]))
            .collect();
        let order = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, order);
            hits.truncate(k);
        }
        hits.sort_by(order);
        hits.into_iter().map(|(o, s)| (&self.snippets[o as usize], s)).collect()
    }

    /// Writes the index file set into `dir` (created if needed). Returns
    /// `(file name, sha256 of payload)` for every binary file written.
    pub fn save(&self, dir: &Path, params: &Bm25Params) -> Result<Vec<(String, String)>, Bm25Error> {
        std::fs::create_dir_all(dir).map_err(|e| PersistError::io(dir, e))?;

        let mut sorted_terms: Vec<(&String, &usize)> = self.terms.iter().collect();
        sorted_terms.sort();
        let mut terms = Encoder::new();
        let mut postings = Encoder::new();
        terms.u64(sorted_terms.len() as u64);
        let total: usize = self.postings.iter().map(Vec::len).sum();
        postings.u64(total as u64);
        let mut offset = 0u64;
        for (term, &slot) in sorted_terms {
            let list = &self.postings[slot];
            terms.str(term).u32(list.len() as u32).u64(offset);
            offset += list.len() as u64;
            for p in list {
                postings.u32(p.ordinal).u32(p.tf);
            }
        }
        let mut snippets = Encoder::new();
        snippets.u64(self.snippets.len() as u64);
        for s in &self.snippets {
            snippets
                .str(&s.result_id.render())
                .u32(s.length)
                .str(&s.text)
                .opt_str(s.source_url.as_deref());
        }

        let mut files = Vec::new();
        for (name, kind, payload) in [
            (TERMS_FILE, b"TERM", terms.finish()),
            (POSTINGS_FILE, b"POST", postings.finish()),
            (SNIPPETS_FILE, b"SNIP", snippets.finish()),
        ] {
            let digest = persist::write_section(&dir.join(name), kind, FORMAT_VERSION, &payload)?;
            files.push((name.to_string(), digest));
        }

        let stopwords = match &self.analyzer {
            AnalyzerKind::Folding { stopwords } => {
                let mut list: Vec<String> = self
                    .analyzers
                    .stopwords(stopwords)
                    .map(|s| s.iter().cloned().collect())
                    .unwrap_or_default();
                list.sort();
                Some(list)
            }
            _ => None,
        };
        let meta = Meta {
            format_version: FORMAT_VERSION,
            language_tag: self.language_tag.clone(),
            analyzer: self.analyzer.clone(),
            stopwords,
            snippet_count: self.snippets.len() as u64,
            avgdl: self.avgdl(),
            total_tokens: self.total_tokens,
            term_count: self.terms.len() as u64,
            skipped_empty: self.skipped_empty as u64,
            params: *params,
        };
        let meta_path = dir.join(META_FILE);
        let body = serde_json::to_string_pretty(&meta).expect("meta serializes");
        std::fs::write(&meta_path, body).map_err(|e| PersistError::io(&meta_path, e))?;
        Ok(files)
    }

    pub fn load(dir: &Path) -> Result<Self, Bm25Error> {
        let meta_path = dir.join(META_FILE);
        let body = std::fs::read_to_string(&meta_path).map_err(|e| PersistError::io(&meta_path, e))?;
        let version: serde_json::Value = serde_json::from_str(&body).map_err(|e| PersistError::Corrupt {
            path: meta_path.clone(),
            reason: e.to_string(),
        })?;
        let found = version.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != FORMAT_VERSION {
            return Err(PersistError::Version {
                path: meta_path,
                found,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        let meta: Meta = serde_json::from_value(version).map_err(|e| PersistError::Corrupt {
            path: meta_path.clone(),
            reason: e.to_string(),
        })?;

        let mut analyzers = Analyzers::default();
        if let (AnalyzerKind::Folding { stopwords: id }, Some(list)) = (&meta.analyzer, &meta.stopwords) {
            analyzers.set_stopwords(id, list);
        }

        let snip_path = dir.join(SNIPPETS_FILE);
        let payload = persist::read_section(&snip_path, b"SNIP", FORMAT_VERSION)?;
        let mut d = Decoder::new(&payload, &snip_path);
        let n = d.u64()? as usize;
        let mut snippets = Vec::with_capacity(n.min(1 << 24));
        let mut ordinals = HashMap::with_capacity(n.min(1 << 24));
        let mut total_tokens = 0u64;
        let mut prev: Option<String> = None;
        for i in 0..n {
            let rendered = d.str()?;
            let result_id = ResultId::parse(&rendered).map_err(|e| d.error(&e.to_string()))?;
            if prev.as_deref().is_some_and(|p| p >= rendered.as_str()) {
                return Err(d.error("snippets not in ResultId order").into());
            }
            let length = d.u32()?;
            if length == 0 {
                return Err(d.error("zero-length snippet").into());
            }
            total_tokens += length as u64;
            let text = d.str()?;
            let source_url = d.opt_str()?;
            ordinals.insert(result_id.clone(), i as u32);
            snippets.push(StoredSnippet {
                result_id,
                length,
                text,
                source_url,
            });
            prev = Some(rendered);
        }
        d.finish()?;

        let post_path = dir.join(POSTINGS_FILE);
        let payload = persist::read_section(&post_path, b"POST", FORMAT_VERSION)?;
        let mut d = Decoder::new(&payload, &post_path);
        let total = d.u64()? as usize;
        let mut flat = Vec::with_capacity(total.min(1 << 26));
        for _ in 0..total {
            let ordinal = d.u32()?;
            let tf = d.u32()?;
            if ordinal as usize >= n || tf == 0 {
                return Err(d.error("posting out of range").into());
            }
            flat.push(Posting { ordinal, tf });
        }
        d.finish()?;

        let term_path = dir.join(TERMS_FILE);
        let payload = persist::read_section(&term_path, b"TERM", FORMAT_VERSION)?;
        let mut d = Decoder::new(&payload, &term_path);
        let term_count = d.u64()? as usize;
        let mut terms = HashMap::with_capacity(term_count.min(1 << 24));
        let mut postings = Vec::with_capacity(term_count.min(1 << 24));
        for _ in 0..term_count {
            let term = d.str()?;
            let df = d.u32()? as usize;
            let offset = d.u64()? as usize;
            let Some(list) = flat.get(offset..offset + df) else {
                return Err(d.error("postings range out of bounds").into());
            };
            if df == 0 || list.windows(2).any(|w| w[0].ordinal >= w[1].ordinal) {
                return Err(d.error("unsorted or empty postings").into());
            }
            terms.insert(term, postings.len());
            postings.push(list.to_vec());
        }
        d.finish()?;

        if meta.snippet_count as usize != n
            || meta.total_tokens != total_tokens
            || meta.term_count as usize != term_count
        {
            return Err(PersistError::Corrupt {
                path: meta_path,
                reason: "metadata disagrees with index files".into(),
            }
            .into());
        }

        Ok(Bm25Index {
            language_tag: meta.language_tag,
            analyzer: meta.analyzer,
            analyzers,
            snippets,
            terms,
            postings,
            ordinals,
            total_tokens,
            skipped_empty: meta.skipped_empty as usize,
        })
    }
}

fn unique(tokens: &[String]) -> impl Iterator<Item = &str> {
    let mut seen = HashSet::new();
    tokens.iter().map(String::as_str).filter(move |t| seen.insert(*t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snip(id: &str, text: &str) -> Snippet {
        Snippet {
            result_id: ResultId::fuzzy("d", id, "w128", 0),
            text: text.into(),
            language_tag: "code".into(),
            source_url: None,
            redactions: vec![],
        }
    }

    #[test]
    fn counts_document_frequencies() {
        let idx = Bm25Index::build("code", [snip("1", "a"), snip("2", "b"), snip("3", "a")]).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.doc_freq("a"), 2);
        assert_eq!(idx.doc_freq("b"), 1);
        assert_eq!(idx.avgdl(), 1.0);
    }

    #[test]
    fn hand_checked_score() {
        let idx = Bm25Index::build("code", [snip("1", "cat"), snip("2", "dog")]).unwrap();
        let p = Bm25Params::default();
        let s = idx
            .score(&p, &["cat".to_string()], &ResultId::fuzzy("d", "1", "w128", 0))
            .unwrap();
        assert!((s - 2f64.ln() / 2.2).abs() < 1e-12);
        assert!((s - 0.31507).abs() < 1e-5);
        let zero = idx
            .score(&p, &["cat".to_string()], &ResultId::fuzzy("d", "2", "w128", 0))
            .unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn repeated_query_terms_count_once() {
        let idx = Bm25Index::build("code", [snip("1", "cat"), snip("2", "dog")]).unwrap();
        let p = Bm25Params::default();
        let id = ResultId::fuzzy("d", "1", "w128", 0);
        let once = idx.score(&p, &["cat".into()], &id).unwrap();
        let twice = idx.score(&p, &["cat".into(), "cat".into()], &id).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn unknown_snippet_is_an_error() {
        let idx = Bm25Index::build("code", [snip("1", "cat")]).unwrap();
        assert!(matches!(
            idx.score(&Bm25Params::default(), &[], &ResultId::exact("d", "1", 0)),
            Err(Bm25Error::UnknownSnippet(_))
        ));
    }

    #[test]
    fn empty_index_and_empty_query() {
        let idx = Bm25Index::build("code", Vec::new()).unwrap();
        assert!(idx.is_empty());
        assert!(idx.search(&Bm25Params::default(), "anything", 10).is_empty());
        let idx = Bm25Index::build("code", [snip("1", "cat")]).unwrap();
        assert!(idx.search(&Bm25Params::default(), "   ", 10).is_empty());
    }

    #[test]
    fn tokenless_snippets_are_skipped() {
        let idx = Bm25Index::build(
            "en",
            [
                Snippet {
                    language_tag: "en".into(),
                    ..snip("1", "the of")
                },
                Snippet {
                    language_tag: "en".into(),
                    ..snip("2", "cats")
                },
            ],
        )
        .unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.skipped_empty(), 1);
    }

    #[test]
    fn duplicate_and_mismatch_are_fatal() {
        assert!(matches!(
            Bm25Index::build("code", [snip("1", "a"), snip("1", "b")]),
            Err(Bm25Error::DuplicateSnippet(_))
        ));
        let mut other = snip("2", "b");
        other.language_tag = "en".into();
        assert!(matches!(
            Bm25Index::build("code", [snip("1", "a"), other]),
            Err(Bm25Error::LanguageMismatch { .. })
        ));
    }

    #[test]
    fn search_orders_and_truncates() {
        let idx = Bm25Index::build(
            "code",
            [snip("1", "x y"), snip("2", "x"), snip("3", "z"), snip("4", "x")],
        )
        .unwrap();
        let p = Bm25Params::default();
        let all = idx.search(&p, "x", 10);
        assert_eq!(all.len(), 3);
        // equal-length ties fall back to ResultId order
        let ids: Vec<String> = all.iter().map(|(r, _)| r.doc_id.clone()).collect();
        assert_eq!(ids, ["2", "4", "1"]);
        assert_eq!(idx.search(&p, "x", 2), all[..2].to_vec());
        assert_eq!(idx.search(&p, "z", 10).len(), 1);
    }

    #[test]
    fn params_validation() {
        assert!(Bm25Params::new(-1.0, 0.5).is_err());
        assert!(Bm25Params::new(1.0, 1.5).is_err());
        assert!(Bm25Params::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn save_load_round_trip_and_errors() {
        let idx = Bm25Index::build(
            "en",
            (0..40).map(|i| Snippet {
                language_tag: "en".into(),
                source_url: (i % 3 == 0).then(|| format!("https://e.org/{i}")),
                ..snip(&i.to_string(), &format!("the cat {} dog {}", i % 5, i % 7))
            }),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = Bm25Params::default();
        idx.save(dir.path(), &p).unwrap();
        let back = Bm25Index::load(dir.path()).unwrap();
        for q in ["cat", "dog 3", "1 2 3 4", "the", "cat 6"] {
            assert_eq!(idx.search(&p, q, 7), back.search(&p, q, 7));
        }
        assert_eq!(back.snippets(), idx.snippets());
        assert_eq!(back.analyze("The cats"), vec!["cats"]);

        let post = dir.path().join(POSTINGS_FILE);
        let bytes = std::fs::read(&post).unwrap();
        std::fs::write(&post, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            Bm25Index::load(dir.path()),
            Err(Bm25Error::Persist(PersistError::Checksum { .. }))
        ));
        std::fs::write(&post, &bytes).unwrap();

        let meta = dir.path().join(META_FILE);
        let body = std::fs::read_to_string(&meta).unwrap();
        std::fs::write(&meta, body.replace("\"format_version\": 1", "\"format_version\": 99")).unwrap();
        assert!(matches!(
            Bm25Index::load(dir.path()),
            Err(Bm25Error::Persist(PersistError::Version { found: 99, .. }))
        ));
    }
}
