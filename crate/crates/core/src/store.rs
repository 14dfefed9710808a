//! Building, publishing and opening an index directory.
//!
//! Layout:
//!
//! ```text
//! manifest.json
//! bm25/<tag>/{meta.json,terms.bin,postings.bin,snippets.bin}
//! exact/{corpus.bin,sa.bin,docmap.bin}
//! langdetect.json
//! ```
//!
//! A build is written into a staging directory next to the target and
//! renamed into place, so readers see either nothing or a complete set.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{analyzer_for, AnalysisError, AnalyzerKind, Analyzers};
use crate::bm25::{Bm25Error, Bm25Index, Bm25Params};
use crate::corpus::{ingest_corpus, Document, IngestError, Snippet};
use crate::exact::{BuildLimits, ExactError, SuffixArrayIndex};
use crate::langdetect::{LangDetectError, LangDetectModel};
use crate::persist::{sha256_hex, PersistError};
use crate::segment::{segment, segment_result_id, SegmentationConfig};
use crate::tags;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const LANGDETECT_FILE: &str = "langdetect.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Invalid(String),
    #[error("another build holds the lock {0}")]
    Locked(PathBuf),
    #[error(transparent)]
    Bm25(#[from] Bm25Error),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    LangDetect(#[from] LangDetectError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("component {name} does not match the manifest")]
    ComponentMismatch { name: String },
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Validation,
    Io,
    Resource,
}

impl StoreError {
    pub fn class(&self) -> FailureClass {
        match self {
            StoreError::Exact(ExactError::Budget { .. }) => FailureClass::Resource,
            StoreError::Ingest(IngestError::Unreadable { .. })
            | StoreError::Persist(_)
            | StoreError::Locked(_)
            | StoreError::ComponentMismatch { .. } => FailureClass::Io,
            StoreError::Bm25(Bm25Error::Persist(_))
            | StoreError::Exact(ExactError::Persist(_))
            | StoreError::LangDetect(LangDetectError::Persist(_))
            | StoreError::Analysis(AnalysisError::StopwordFile { .. }) => FailureClass::Io,
            _ => FailureClass::Validation,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    PersistError::io(path, e).into()
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Restrict the build to these tags; `None` indexes every tag present.
    pub languages: Option<Vec<String>>,
    pub limits: BuildLimits,
    pub segmentation: SegmentationConfig,
    pub params: Bm25Params,
    pub analyzers: Analyzers,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            languages: None,
            limits: BuildLimits::default(),
            segmentation: SegmentationConfig::default(),
            params: Bm25Params::default(),
            analyzers: Analyzers::builtin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub tag: String,
    pub analyzer: AnalyzerKind,
    pub documents: u64,
    pub data_bytes: u64,
    pub snippets: u64,
    pub index_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub build_id: String,
    pub created_at: chrono::DateTime<chrono::Utc>,
    pub tool_version: String,
    pub segmentation: SegmentationInfo,
    pub bm25_params: Bm25Params,
    /// Indexed tags in registry order.
    pub languages: Vec<String>,
    pub documents: u64,
    pub skipped_lines: u64,
    pub exact_index_bytes: u64,
    pub stats: Vec<TagStats>,
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationInfo {
    pub max_words: usize,
    pub strategy: String,
}

impl Manifest {
    pub fn load(index_dir: &Path) -> Result<Self, StoreError> {
        let path = index_dir.join(MANIFEST_FILE);
        let body = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let corrupt = |reason: String| PersistError::Corrupt {
            path: path.clone(),
            reason,
        };
        let value: serde_json::Value = serde_json::from_slice(&body).map_err(|e| corrupt(e.to_string()))?;
        let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != MANIFEST_VERSION {
            return Err(PersistError::Version {
                path,
                found,
                expected: MANIFEST_VERSION,
            }
            .into());
        }
        Ok(serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?)
    }

    /// Renders the per-language summary table.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>10} {:>14} {:>10} {:>14}  {}\n",
            "language", "documents", "data bytes", "snippets", "index bytes", "analyzer"
        );
        let mut total = (0u64, 0u64, 0u64, 0u64);
        for s in &self.stats {
            let analyzer = match &s.analyzer {
                AnalyzerKind::Whitespace => "whitespace".to_string(),
                AnalyzerKind::Folding { stopwords } => format!("folding({stopwords})"),
                AnalyzerKind::CjkBigram => "cjk-bigram".to_string(),
            };
            out.push_str(&format!(
                "{:<12} {:>10} {:>14} {:>10} {:>14}  {}\n",
                s.tag, s.documents, s.data_bytes, s.snippets, s.index_bytes, analyzer
            ));
            total.0 += s.documents;
            total.1 += s.data_bytes;
            total.2 += s.snippets;
            total.3 += s.index_bytes;
        }
        out.push_str(&format!(
            "{:<12} {:>10} {:>14} {:>10} {:>14}\n",
            "total", total.0, total.1, total.2, total.3
        ));
        out.push_str(&format!("exact index bytes: {}\n", self.exact_index_bytes));
        out.push_str(&format!("build id: {}\n", self.build_id));
        out
    }
}

fn dir_size(dir: &Path) -> u64 {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter_map(|e| e.metadata().ok())
        .filter(|m| m.is_file())
        .map(|m| m.len())
        .sum()
}

fn file_digest(path: &Path) -> Result<String, StoreError> {
    let body = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(sha256_hex(&body))
}

/// Builds every component from `documents` into `out_dir`, which must exist
/// and be empty.
pub fn build_index(
    documents: Vec<Document>,
    skipped_lines: u64,
    out_dir: &Path,
    opts: &BuildOptions,
) -> Result<Manifest, StoreError> {
    let selected: Vec<&'static str> = match &opts.languages {
        Some(list) => {
            let mut out = Vec::new();
            for t in list {
                let canon =
                    tags::index_tag_for(t).ok_or_else(|| StoreError::Invalid(format!("unknown language tag {t:?}")))?;
                if !out.contains(&canon) {
                    out.push(canon);
                }
            }
            out
        }
        None => tags::INDEX_TAGS.to_vec(),
    };
    if documents.is_empty() {
        return Err(StoreError::Invalid("the corpus holds no documents".into()));
    }

    // fuzzy indices cover the selected tags; the suffix array covers everything
    let mut per_tag: BTreeMap<usize, (Vec<Snippet>, u64, u64)> = BTreeMap::new();
    for doc in documents.iter().filter(|d| selected.contains(&d.language_tag.as_str())) {
        let pos = tags::registry_position(&doc.language_tag).expect("canonical tag");
        let entry = per_tag.entry(pos).or_default();
        entry.1 += 1;
        entry.2 += doc.text.len() as u64;
        let segs = segment(doc, &opts.segmentation).map_err(|e| StoreError::Invalid(e.to_string()))?;
        entry.0.extend(segs.into_iter().map(|s| Snippet {
            result_id: segment_result_id(doc, &opts.segmentation, s.seg_id),
            text: s.text,
            language_tag: doc.language_tag.clone(),
            source_url: doc.source_url.clone(),
            redactions: Vec::new(),
        }));
    }
    if let Some(list) = &opts.languages {
        for t in list {
            let canon = tags::index_tag_for(t).expect("validated above");
            if !per_tag.contains_key(&tags::registry_position(canon).expect("canonical tag")) {
                return Err(StoreError::Invalid(format!(
                    "no documents for requested language {canon:?}"
                )));
            }
        }
    }
    let languages: Vec<String> = per_tag.keys().map(|&p| tags::INDEX_TAGS[p].to_string()).collect();

    let mut components = Vec::new();
    let mut stats = Vec::new();

    let lang_refs: Vec<&str> = languages.iter().map(String::as_str).collect();
    let detector = LangDetectModel::train_for(
        &lang_refs,
        per_tag
            .iter()
            .flat_map(|(&p, (snips, _, _))| snips.iter().map(move |s| (tags::INDEX_TAGS[p], s.text.as_str()))),
    )?;
    let ld_path = out_dir.join(LANGDETECT_FILE);
    detector.save(&ld_path)?;
    components.push(Component {
        name: LANGDETECT_FILE.into(),
        sha256: file_digest(&ld_path)?,
    });

    for (&pos, (snippets, docs, bytes)) in per_tag.iter_mut() {
        let tag = tags::INDEX_TAGS[pos];
        let kind = analyzer_for(tag)?;
        let snippet_count = snippets.len() as u64;
        let index = Bm25Index::build_with(tag, kind.clone(), &opts.analyzers, std::mem::take(snippets))?;
        let dir = out_dir.join("bm25").join(tag);
        for (name, sha256) in index.save(&dir, &opts.params)? {
            components.push(Component {
                name: format!("bm25/{tag}/{name}"),
                sha256,
            });
        }
        components.push(Component {
            name: format!("bm25/{tag}/meta.json"),
            sha256: file_digest(&dir.join("meta.json"))?,
        });
        stats.push(TagStats {
            tag: tag.to_string(),
            analyzer: kind,
            documents: *docs,
            data_bytes: *bytes,
            snippets: snippet_count,
            index_bytes: dir_size(&dir),
        });
        log::info!("indexed {tag}: {docs} documents, {snippet_count} snippets");
    }

    let document_count = documents.len() as u64;
    let exact = SuffixArrayIndex::build(documents, opts.limits)?;
    let exact_dir = out_dir.join("exact");
    for (name, sha256) in exact.save(&exact_dir)? {
        components.push(Component {
            name: format!("exact/{name}"),
            sha256,
        });
    }
    log::info!("suffix array over {} bytes", exact.corpus_len());

    let mut id_input = String::new();
    for c in &components {
        id_input.push_str(&c.name);
        id_input.push('=');
        id_input.push_str(&c.sha256);
        id_input.push('\n');
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        build_id: sha256_hex(id_input.as_bytes())[..16].to_string(),
        created_at: chrono::Utc::now(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        segmentation: SegmentationInfo {
            max_words: opts.segmentation.max_words(),
            strategy: opts.segmentation.strategy_label().to_string(),
        },
        bm25_params: opts.params,
        languages,
        documents: document_count,
        skipped_lines,
        exact_index_bytes: dir_size(&exact_dir),
        stats,
        components,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let body = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

/// Removes the lock file and any leftover staging directory on drop.
struct BuildGuard {
    lock: PathBuf,
    staging: PathBuf,
    published: bool,
}

impl Drop for BuildGuard {
    fn drop(&mut self) {
        if !self.published {
            let _ = fs::remove_dir_all(&self.staging);
        }
        let _ = fs::remove_file(&self.lock);
    }
}

/// Ingests `corpus_dir` and publishes a complete index at `index_dir`.
///
/// Fails without touching `index_dir` if it already holds anything, if
/// another build holds the lock, or if any stage fails.
pub fn build_atomic(corpus_dir: &Path, index_dir: &Path, opts: &BuildOptions) -> Result<Manifest, StoreError> {
    let name = index_dir
        .file_name()
        .ok_or_else(|| StoreError::Invalid(format!("{} has no final path component", index_dir.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = match index_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if index_dir.exists() {
        let empty_dir = index_dir.is_dir()
            && fs::read_dir(index_dir)
                .map_err(|e| io_err(index_dir, e))?
                .next()
                .is_none();
        if !empty_dir {
            return Err(StoreError::Invalid(format!(
                "{} already exists and is not empty",
                index_dir.display()
            )));
        }
    }
    fs::create_dir_all(&parent).map_err(|e| io_err(&parent, e))?;

    let lock = parent.join(format!(".{name}.lock"));
    match OpenOptions::new().write(true).create_new(true).open(&lock) {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(StoreError::Locked(lock)),
        Err(e) => return Err(io_err(&lock, e)),
    }
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    let mut guard = BuildGuard {
        lock,
        staging: staging.clone(),
        published: false,
    };
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| io_err(&staging, e))?;

    let ingested = ingest_corpus(corpus_dir)?;
    let manifest = build_index(ingested.documents, ingested.skipped.len() as u64, &staging, opts)?;

    if index_dir.exists() {
        fs::remove_dir(index_dir).map_err(|e| io_err(index_dir, e))?;
    }
    fs::rename(&staging, index_dir).map_err(|e| io_err(index_dir, e))?;
    guard.published = true;
    Ok(manifest)
}

/// Every loaded component of one build.
pub struct IndexSet {
    pub build_id: String,
    /// Keyed by tag, in registry order.
    pub bm25: IndexMap<String, Bm25Index>,
    pub exact: SuffixArrayIndex,
    pub detector: LangDetectModel,
}

impl IndexSet {
    pub fn open(index_dir: &Path) -> Result<Self, StoreError> {
        let manifest = Manifest::load(index_dir)?;
        let expected: BTreeMap<&str, &str> = manifest
            .components
            .iter()
            .map(|c| (c.name.as_str(), c.sha256.as_str()))
            .collect();
        let check_json = |name: &str| -> Result<(), StoreError> {
            let digest = file_digest(&index_dir.join(name))?;
            if expected.get(name) != Some(&digest.as_str()) {
                return Err(StoreError::ComponentMismatch { name: name.into() });
            }
            Ok(())
        };

        check_json(LANGDETECT_FILE)?;
        let detector = LangDetectModel::load(&index_dir.join(LANGDETECT_FILE))?;

        let mut bm25 = IndexMap::new();
        for tag in tags::INDEX_TAGS
            .iter()
            .filter(|t| manifest.languages.iter().any(|l| l == *t))
        {
            check_json(&format!("bm25/{tag}/meta.json"))?;
            let index = Bm25Index::load(&index_dir.join("bm25").join(tag))?;
            bm25.insert(tag.to_string(), index);
        }
        let exact = SuffixArrayIndex::load(&index_dir.join("exact"))?;
        Ok(IndexSet {
            build_id: manifest.build_id,
            bm25,
            exact,
            detector,
        })
    }
}
