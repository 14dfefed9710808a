//! Documents, snippets, result IDs and corpus ingestion.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pii::RedactionSpan;
use crate::tags;

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub dataset_name: String,
    pub doc_id: String,
    pub text: String,
    pub source_url: Option<String>,
    /// Always a canonical index tag (see [`tags::index_tag_for`]).
    pub language_tag: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("invalid dataset name {0:?}: allowed characters are [A-Za-z0-9._/-]")]
    DatasetName(String),
    #[error("invalid doc_id {0:?}: allowed characters are [A-Za-z0-9._-]")]
    DocId(String),
    #[error("document text is empty")]
    EmptyText,
    #[error("unknown language tag {tag:?}; known tags: {known}")]
    LanguageTag { tag: String, known: String },
}

impl Document {
    /// Validates the fields and canonicalises the language tag.
    pub fn new(
        dataset_name: impl Into<String>,
        doc_id: impl Into<String>,
        text: impl Into<String>,
        language_tag: &str,
        source_url: Option<String>,
    ) -> Result<Self, DocumentError> {
        let dataset_name = dataset_name.into();
        let doc_id = doc_id.into();
        let text = text.into();
        if !valid_dataset_name(&dataset_name) {
            return Err(DocumentError::DatasetName(dataset_name));
        }
        if !valid_doc_id(&doc_id) {
            return Err(DocumentError::DocId(doc_id));
        }
        if text.trim().is_empty() {
            return Err(DocumentError::EmptyText);
        }
        let language_tag = tags::index_tag_for(language_tag)
            .ok_or_else(|| DocumentError::LanguageTag {
                tag: language_tag.to_string(),
                known: tags::INDEX_TAGS.join(", "),
            })?
            .to_string();
        Ok(Document {
            dataset_name,
            doc_id,
            text,
            source_url: source_url.filter(|u| !u.is_empty()),
            language_tag,
        })
    }
}

fn valid_doc_id(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

fn valid_dataset_name(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('/')
        && !s.ends_with('/')
        && !s.contains("//")
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-' | b'/'))
}

fn valid_seg_label(s: &str) -> bool {
    valid_doc_id(s)
}

/// Search-strategy specific part of a [`ResultId`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResultParams {
    /// A pre-segmented snippet: segmentation strategy and snippet rank.
    Fuzzy { seg: String, seg_id: u64 },
    /// An exact hit: rank of the occurrence inside its document.
    Exact { id: u64 },
}

/// Traceable identifier of a returned snippet.
///
/// Renders as `dataset/doc?seg=<seg>&seg_id=<n>` or `dataset/doc?id=<n>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResultId {
    pub dataset_name: String,
    pub doc_id: String,
    pub params: ResultParams,
}

impl ResultId {
    pub fn fuzzy(dataset: &str, doc_id: &str, seg: &str, seg_id: u64) -> Self {
        ResultId {
            dataset_name: dataset.to_string(),
            doc_id: doc_id.to_string(),
            params: ResultParams::Fuzzy {
                seg: seg.to_string(),
                seg_id,
            },
        }
    }

    pub fn exact(dataset: &str, doc_id: &str, id: u64) -> Self {
        ResultId {
            dataset_name: dataset.to_string(),
            doc_id: doc_id.to_string(),
            params: ResultParams::Exact { id },
        }
    }

    pub fn render(&self) -> String {
        self.to_string()
    }

    pub fn parse(s: &str) -> Result<Self, ResultIdError> {
        s.parse()
    }
}

impl fmt::Display for ResultId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}?", self.dataset_name, self.doc_id)?;
        match &self.params {
            ResultParams::Fuzzy { seg, seg_id } => write!(f, "seg={seg}&seg_id={seg_id}"),
            ResultParams::Exact { id } => write!(f, "id={id}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResultIdError {
    #[error("missing '?' in result id {0:?}")]
    MissingQuery(String),
    #[error("missing '/' between dataset and document in {0:?}")]
    MissingSlash(String),
    #[error("invalid dataset name {0:?}")]
    Dataset(String),
    #[error("invalid document id {0:?}")]
    DocId(String),
    #[error("malformed parameter {0:?}, expected key=value")]
    Malformed(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("duplicate parameter {0:?}")]
    DuplicateParam(String),
    #[error("negative rank {0:?}")]
    NegativeRank(String),
    #[error("invalid rank {0:?}")]
    InvalidRank(String),
    #[error("invalid segmentation label {0:?}")]
    InvalidSeg(String),
    #[error("missing parameter {0}")]
    Missing(&'static str),
    #[error("parameter {0:?} cannot be combined with fuzzy parameters")]
    Mixed(String),
}

fn parse_rank(key: &str, value: &str) -> Result<u64, ResultIdError> {
    let token = format!("{key}={value}");
    if value.starts_with('-') {
        return Err(ResultIdError::NegativeRank(token));
    }
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ResultIdError::InvalidRank(token));
    }
    value.parse().map_err(|_| ResultIdError::InvalidRank(token))
}

impl FromStr for ResultId {
    type Err = ResultIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (path, query) = s
            .split_once('?')
            .ok_or_else(|| ResultIdError::MissingQuery(s.to_string()))?;
        let (dataset, doc_id) = path
            .rsplit_once('/')
            .ok_or_else(|| ResultIdError::MissingSlash(path.to_string()))?;
        if !valid_dataset_name(dataset) {
            return Err(ResultIdError::Dataset(dataset.to_string()));
        }
        if !valid_doc_id(doc_id) {
            return Err(ResultIdError::DocId(doc_id.to_string()));
        }

        let mut seg: Option<String> = None;
        let mut seg_id: Option<u64> = None;
        let mut id: Option<u64> = None;
        for pair in query.split('&') {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| ResultIdError::Malformed(pair.to_string()))?;
            match key {
                "seg" => {
                    if seg.is_some() {
                        return Err(ResultIdError::DuplicateParam(pair.to_string()));
                    }
                    if !valid_seg_label(value) {
                        return Err(ResultIdError::InvalidSeg(pair.to_string()));
                    }
                    seg = Some(value.to_string());
                }
                "seg_id" => {
                    if seg_id.is_some() {
                        return Err(ResultIdError::DuplicateParam(pair.to_string()));
                    }
                    seg_id = Some(parse_rank(key, value)?);
                }
                "id" => {
                    if id.is_some() {
                        return Err(ResultIdError::DuplicateParam(pair.to_string()));
                    }
                    id = Some(parse_rank(key, value)?);
                }
                _ => return Err(ResultIdError::UnknownParam(pair.to_string())),
            }
        }

        let params = match (seg, seg_id, id) {
            (None, None, Some(id)) => ResultParams::Exact { id },
            (Some(_), _, Some(id)) | (_, Some(_), Some(id)) => return Err(ResultIdError::Mixed(format!("id={id}"))),
            (Some(seg), Some(seg_id), None) => ResultParams::Fuzzy { seg, seg_id },
            (None, Some(_), None) => return Err(ResultIdError::Missing("seg")),
            (Some(_), None, None) => return Err(ResultIdError::Missing("seg_id")),
            (None, None, None) => return Err(ResultIdError::Missing("seg/seg_id or id")),
        };
        Ok(ResultId {
            dataset_name: dataset.to_string(),
            doc_id: doc_id.to_string(),
            params,
        })
    }
}

impl Serialize for ResultId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ResultId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A unit of display: an indexed segment or an ad-hoc window around an exact hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub result_id: ResultId,
    pub text: String,
    pub language_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    #[serde(default)]
    pub redactions: Vec<RedactionSpan>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read corpus path {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate document ({dataset}, {doc_id}) at {file}:{line}")]
    Duplicate {
        dataset: String,
        doc_id: String,
        file: PathBuf,
        line: usize,
    },
}

/// A skipped input line and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub file: PathBuf,
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for SkippedLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file.display(), self.line, self.reason)
    }
}

#[derive(Deserialize)]
struct Record {
    text: String,
    dataset_name: String,
    doc_id: String,
    language_tag: String,
    #[serde(default)]
    source_url: Option<String>,
}

/// Streaming reader over a directory of line-delimited record files.
///
/// Files are visited in sorted path order; hidden files are ignored. A fatal
/// error ends the stream.
pub struct CorpusReader {
    files: std::vec::IntoIter<PathBuf>,
    current: Option<(PathBuf, std::io::Split<BufReader<File>>, usize)>,
    seen: HashSet<(String, String)>,
    skipped: Vec<SkippedLine>,
    failed: bool,
}

impl CorpusReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let unreadable = |source| IngestError::Unreadable {
            path: path.to_path_buf(),
            source,
        };
        let meta = std::fs::metadata(path).map_err(unreadable)?;
        let files = if meta.is_file() {
            vec![path.to_path_buf()]
        } else {
            let mut files = Vec::new();
            for entry in walkdir::WalkDir::new(path)
                .sort_by_file_name()
                .into_iter()
                .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'))
            {
                let entry = entry.map_err(|e| IngestError::Unreadable {
                    path: e.path().unwrap_or(path).to_path_buf(),
                    source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk error")),
                })?;
                if entry.file_type().is_file() {
                    files.push(entry.into_path());
                }
            }
            files
        };
        Ok(CorpusReader {
            files: files.into_iter(),
            current: None,
            seen: HashSet::new(),
            skipped: Vec::new(),
            failed: false,
        })
    }

    /// Lines skipped so far.
    pub fn skipped(&self) -> &[SkippedLine] {
        &self.skipped
    }

    pub fn into_skipped(self) -> Vec<SkippedLine> {
        self.skipped
    }

    fn parse_line(&mut self, file: &Path, line_no: usize, bytes: &[u8]) -> Option<Result<Document, IngestError>> {
        let skip = |reason: String| SkippedLine {
            file: file.to_path_buf(),
            line: line_no,
            reason,
        };
        let line = match std::str::from_utf8(bytes) {
            Ok(l) => l,
            Err(e) => {
                self.skipped.push(skip(format!("invalid UTF-8: {e}")));
                return None;
            }
        };
        if line.trim().is_empty() {
            return None;
        }
        let record: Record = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                self.skipped.push(skip(format!("malformed record: {e}")));
                return None;
            }
        };
        let doc = match Document::new(
            record.dataset_name,
            record.doc_id,
            record.text,
            &record.language_tag,
            record.source_url,
        ) {
            Ok(d) => d,
            Err(e) => {
                self.skipped.push(skip(e.to_string()));
                return None;
            }
        };
        if !self.seen.insert((doc.dataset_name.clone(), doc.doc_id.clone())) {
            return Some(Err(IngestError::Duplicate {
                dataset: doc.dataset_name,
                doc_id: doc.doc_id,
                file: file.to_path_buf(),
                line: line_no,
            }));
        }
        Some(Ok(doc))
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            if self.current.is_none() {
                let path = self.files.next()?;
                match File::open(&path) {
                    Ok(f) => self.current = Some((path, BufReader::new(f).split(b'\n'), 0)),
                    Err(source) => {
                        self.failed = true;
                        return Some(Err(IngestError::Unreadable { path, source }));
                    }
                }
            }
            let (path, lines, line_no) = self.current.as_mut().expect("current file");
            match lines.next() {
                None => {
                    self.current = None;
                }
                Some(Err(source)) => {
                    let path = path.clone();
                    self.failed = true;
                    return Some(Err(IngestError::Unreadable { path, source }));
                }
                Some(Ok(mut bytes)) => {
                    *line_no += 1;
                    let (path, n) = (path.clone(), *line_no);
                    if bytes.last() == Some(&b'\r') {
                        bytes.pop();
                    }
                    match self.parse_line(&path, n, &bytes) {
                        None => continue,
                        Some(Err(e)) => {
                            self.failed = true;
                            return Some(Err(e));
                        }
                        Some(ok) => return Some(ok),
                    }
                }
            }
        }
    }
}

/// Result of reading a whole corpus into memory.
#[derive(Debug)]
pub struct Ingested {
    pub documents: Vec<Document>,
    pub skipped: Vec<SkippedLine>,
}

/// Reads every record under `path`, skipping malformed lines.
pub fn ingest_corpus(path: impl AsRef<Path>) -> Result<Ingested, IngestError> {
    let mut reader = CorpusReader::open(path)?;
    let mut documents = Vec::new();
    for doc in reader.by_ref() {
        documents.push(doc?);
    }
    for s in reader.skipped() {
        log::warn!("skipped {s}");
    }
    Ok(Ingested {
        documents,
        skipped: reader.into_skipped(),
    })
}
