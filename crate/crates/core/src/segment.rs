//! Splitting documents into fixed-size word snippets for fuzzy search.

use thiserror::Error;

use crate::corpus::{Document, ResultId};

pub const DEFAULT_MAX_WORDS: usize = 128;
pub const DEFAULT_STRATEGY: &str = "w128";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationConfig {
    max_words: usize,
    strategy_label: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("max_words must be at least 1")]
    ZeroMaxWords,
    #[error("document {0} has no words")]
    EmptyDocument(String),
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            max_words: DEFAULT_MAX_WORDS,
            strategy_label: DEFAULT_STRATEGY.to_string(),
        }
    }
}

impl SegmentationConfig {
    pub fn new(max_words: usize, strategy_label: impl Into<String>) -> Result<Self, SegmentError> {
        if max_words == 0 {
            return Err(SegmentError::ZeroMaxWords);
        }
        Ok(SegmentationConfig {
            max_words,
            strategy_label: strategy_label.into(),
        })
    }

    pub fn max_words(&self) -> usize {
        self.max_words
    }

    pub fn strategy_label(&self) -> &str {
        &self.strategy_label
    }
}

/// One fuzzy-search segment of a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub seg_id: u64,
    /// Words joined by single spaces.
    pub text: String,
}

/// Greedy fixed-size chunking over whitespace-delimited words.
pub fn segment_text(text: &str, cfg: &SegmentationConfig) -> Vec<Segment> {
    let words: Vec<&str> = text.split_whitespace().collect();
    words
        .chunks(cfg.max_words)
        .enumerate()
        .map(|(i, chunk)| Segment {
            seg_id: i as u64,
            text: chunk.join(" "),
        })
        .collect()
}

pub fn segment(doc: &Document, cfg: &SegmentationConfig) -> Result<Vec<Segment>, SegmentError> {
    let segs = segment_text(&doc.text, cfg);
    if segs.is_empty() {
        return Err(SegmentError::EmptyDocument(format!(
            "{}/{}",
            doc.dataset_name, doc.doc_id
        )));
    }
    Ok(segs)
}

/// The result ID a segment is indexed under.
pub fn segment_result_id(doc: &Document, cfg: &SegmentationConfig, seg_id: u64) -> ResultId {
    ResultId::fuzzy(&doc.dataset_name, &doc.doc_id, cfg.strategy_label(), seg_id)
}
