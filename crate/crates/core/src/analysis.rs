//! Tokenization pipelines shared by indexing and querying.
//!
//! Three pipelines cover all index tags:
//!
//! * `Whitespace`: lowercase, split on whitespace.
//! * `Folding`: NFKD, strip combining marks, lowercase, split on
//!   non-alphanumerics, drop stopwords.
//! * `CjkBigram`: overlapping bigrams over runs of CJK characters, folded
//!   tokens for anything alphanumeric in between.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::tags;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyzerKind {
    Whitespace,
    Folding { stopwords: String },
    CjkBigram,
}

impl AnalyzerKind {
    pub fn folding(list: &str) -> Self {
        AnalyzerKind::Folding {
            stopwords: list.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unknown language tag {tag:?}; known tags: {known}")]
    UnknownTag { tag: String, known: String },
    #[error("cannot read stopword file {path}: {source}")]
    StopwordFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Registry mapping a language tag to its pipeline.
pub fn analyzer_for(tag: &str) -> Result<AnalyzerKind, AnalysisError> {
    let kind = match tag {
        "zh" | "zhs" | "zht" => AnalyzerKind::CjkBigram,
        "en" | "es" | "fr" | "pt" | "ar" | "id" => AnalyzerKind::folding(tag),
        "ca" => AnalyzerKind::folding("es"),
        "indic" | "vi" | "code" | "eu" | "nigercongo" => AnalyzerKind::Whitespace,
        _ => {
            return Err(AnalysisError::UnknownTag {
                tag: tag.to_string(),
                known: tags::INDEX_TAGS.join(", "),
            })
        }
    };
    Ok(kind)
}

const BUILTIN_STOPWORDS: [(&str, &str); 6] = [
    ("en", include_str!("../stopwords/en.txt")),
    ("es", include_str!("../stopwords/es.txt")),
    ("fr", include_str!("../stopwords/fr.txt")),
    ("pt", include_str!("../stopwords/pt.txt")),
    ("ar", include_str!("../stopwords/ar.txt")),
    ("id", include_str!("../stopwords/id.txt")),
];

/// Stopword lists keyed by list id. A missing list behaves as an empty one.
#[derive(Debug, Clone, Default)]
pub struct Analyzers {
    stopwords: HashMap<String, HashSet<String>>,
}

static BUILTIN: LazyLock<Analyzers> = LazyLock::new(Analyzers::builtin);

impl Analyzers {
    /// Registry with the bundled stopword lists.
    pub fn builtin() -> Self {
        let mut a = Analyzers::default();
        for (id, body) in BUILTIN_STOPWORDS {
            a.set_stopwords(id, parse_stopwords(body));
        }
        a
    }

    /// Replaces a stopword list. Entries are folded the same way tokens are.
    pub fn set_stopwords<I, S>(&mut self, id: &str, words: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set = words.into_iter().flat_map(|w| fold_tokens(w.as_ref())).collect();
        self.stopwords.insert(id.to_string(), set);
    }

    /// Loads a stopword file: one token per line, `#` starts a comment.
    pub fn load_stopwords(&mut self, id: &str, path: impl AsRef<Path>) -> Result<(), AnalysisError> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|source| AnalysisError::StopwordFile {
            path: path.display().to_string(),
            source,
        })?;
        self.set_stopwords(id, parse_stopwords(&body));
        Ok(())
    }

    pub fn stopwords(&self, id: &str) -> Option<&HashSet<String>> {
        self.stopwords.get(id)
    }

    /// A registry holding only the list `kind` needs.
    pub fn restricted_to(&self, kind: &AnalyzerKind) -> Analyzers {
        let mut out = Analyzers::default();
        if let AnalyzerKind::Folding { stopwords } = kind {
            if let Some(list) = self.stopwords.get(stopwords) {
                out.stopwords.insert(stopwords.clone(), list.clone());
            }
        }
        out
    }

    pub fn analyze(&self, kind: &AnalyzerKind, text: &str) -> Vec<String> {
        match kind {
            AnalyzerKind::Whitespace => text.split_whitespace().map(str::to_lowercase).collect(),
            AnalyzerKind::Folding { stopwords } => {
                let mut tokens = fold_tokens(text);
                if let Some(stop) = self.stopwords.get(stopwords) {
                    tokens.retain(|t| !stop.contains(t));
                }
                tokens
            }
            AnalyzerKind::CjkBigram => cjk_tokens(text),
        }
    }
}

/// Analyzes with the bundled stopword lists.
pub fn analyze(kind: &AnalyzerKind, text: &str) -> Vec<String> {
    BUILTIN.analyze(kind, text)
}

fn parse_stopwords(body: &str) -> Vec<&str> {
    body.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .collect()
}

fn fold_chars(text: &str) -> impl Iterator<Item = char> + '_ {
    text.nfkd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
}

fn fold_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in fold_chars(text) {
        if c.is_alphanumeric() {
            cur.push(c);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x1100..=0x11FF
        | 0x2E80..=0x2FDF
        | 0x3040..=0x309F
        | 0x30A0..=0x30FF
        | 0x3100..=0x312F
        | 0x3130..=0x318F
        | 0x31F0..=0x31FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F)
}

fn flush_cjk(run: &mut Vec<char>, out: &mut Vec<String>) {
    match run.len() {
        0 => {}
        1 => out.push(run[0].to_string()),
        _ => out.extend(run.windows(2).map(|w| w.iter().collect())),
    }
    run.clear();
}

fn cjk_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run: Vec<char> = Vec::new();
    let mut word = String::new();
    for c in fold_chars(text) {
        if is_cjk(c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            run.push(c);
        } else {
            flush_cjk(&mut run, &mut out);
            if c.is_alphanumeric() {
                word.push(c);
            } else if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
        }
    }
    flush_cjk(&mut run, &mut out);
    if !word.is_empty() {
        out.push(word);
    }
    out
}
