//! Visible PII redaction of outgoing snippet text.
//!
//! Each rule match is replaced by a bracketed category token such as
//! `[EMAIL]`. Rules run in the fixed order EMAIL, IP_ADDRESS, PHONE,
//! ID_NUMBER and an earlier rule wins any overlap.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PiiCategory {
    Email,
    IpAddress,
    Phone,
    IdNumber,
}

impl PiiCategory {
    pub const ALL: [PiiCategory; 4] = [
        PiiCategory::Email,
        PiiCategory::IpAddress,
        PiiCategory::Phone,
        PiiCategory::IdNumber,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PiiCategory::Email => "EMAIL",
            PiiCategory::IpAddress => "IP_ADDRESS",
            PiiCategory::Phone => "PHONE",
            PiiCategory::IdNumber => "ID_NUMBER",
        }
    }

    /// The visible replacement, e.g. `[EMAIL]`.
    pub fn token(self) -> &'static str {
        match self {
            PiiCategory::Email => "[EMAIL]",
            PiiCategory::IpAddress => "[IP_ADDRESS]",
            PiiCategory::Phone => "[PHONE]",
            PiiCategory::IdNumber => "[ID_NUMBER]",
        }
    }
}

impl fmt::Display for PiiCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PiiCategory {
    type Err = PiiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PiiCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| PiiError::UnknownCategory(s.to_string()))
    }
}

/// Location of one replacement token in the redacted text, in chars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionSpan {
    pub start: usize,
    pub end: usize,
    pub category: PiiCategory,
}

#[derive(Debug, Error)]
pub enum PiiError {
    #[error("unknown PII category {0:?}")]
    UnknownCategory(String),
    #[error("line {line}: invalid pattern: {source}")]
    Pattern {
        line: usize,
        #[source]
        source: regex::Error,
    },
    #[error("line {0}: expected `CATEGORY pattern`")]
    Syntax(usize),
    #[error("cannot read rule file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct PiiRule {
    pub category: PiiCategory,
    pub pattern: Regex,
}

/// Ordered rule list. Construction sorts rules into category order.
#[derive(Debug, Clone)]
pub struct PiiRuleSet {
    rules: Vec<PiiRule>,
}

const EMAIL: &str = r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9](?:[A-Za-z0-9\-]*[A-Za-z0-9])?(?:\.[A-Za-z0-9](?:[A-Za-z0-9\-]*[A-Za-z0-9])?)*\.[A-Za-z]{2,}\b";
const IP_ADDRESS: &str =
    r"\b(?:(?:25[0-5]|2[0-4][0-9]|1[0-9]{2}|[1-9]?[0-9])\.){3}(?:25[0-5]|2[0-4][0-9]|1[0-9]{2}|[1-9]?[0-9])\b";
const PHONE: &str = r"(?:\+\s?)?(?:\(\d{1,4}\)[\s.\-]?)?\d(?:[\s.\-]?(?:\(\d{1,4}\)|\d)[\s.\-]?)*\d";
const ID_NUMBER: &str = r"\b\d{9,}\b";

static ISO_DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d{4}-\d{2}-\d{2}$").expect("valid pattern"));

static DEFAULT_RULES: LazyLock<PiiRuleSet> = LazyLock::new(|| {
    PiiRuleSet::new(vec![
        (PiiCategory::Email, EMAIL),
        (PiiCategory::IpAddress, IP_ADDRESS),
        (PiiCategory::Phone, PHONE),
        (PiiCategory::IdNumber, ID_NUMBER),
    ])
    .expect("built-in patterns compile")
});

impl Default for PiiRuleSet {
    fn default() -> Self {
        DEFAULT_RULES.clone()
    }
}

impl PiiRuleSet {
    pub fn new<S: AsRef<str>>(rules: Vec<(PiiCategory, S)>) -> Result<Self, PiiError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for (i, (category, pattern)) in rules.into_iter().enumerate() {
            let pattern = Regex::new(pattern.as_ref()).map_err(|source| PiiError::Pattern { line: i + 1, source })?;
            compiled.push(PiiRule { category, pattern });
        }
        compiled.sort_by_key(|r| r.category);
        Ok(PiiRuleSet { rules: compiled })
    }

    /// Parses `CATEGORY<whitespace>pattern` lines; `#` lines are comments.
    pub fn parse(body: &str) -> Result<Self, PiiError> {
        let mut rules = Vec::new();
        for (i, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (cat, pattern) = line.split_once(char::is_whitespace).ok_or(PiiError::Syntax(i + 1))?;
            let category: PiiCategory = cat.parse()?;
            let pattern = Regex::new(pattern.trim()).map_err(|source| PiiError::Pattern { line: i + 1, source })?;
            rules.push(PiiRule { category, pattern });
        }
        rules.sort_by_key(|r| r.category);
        Ok(PiiRuleSet { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PiiError> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|source| PiiError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&body)
    }

    pub fn rules(&self) -> &[PiiRule] {
        &self.rules
    }
}

/// Phone candidates must carry 7 to 15 digits and stand apart from
/// neighbouring letters and digits. Bare digit runs longer than 8 are left
/// to ID_NUMBER, and ISO dates are not phones.
fn accept(category: PiiCategory, text: &str, start: usize, end: usize) -> bool {
    match category {
        PiiCategory::Phone => {
            let cand = &text[start..end];
            let digits = cand.bytes().filter(u8::is_ascii_digit).count();
            let bare = digits == cand.len();
            let before = text[..start].chars().next_back();
            let after = text[end..].chars().next();
            let detached = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric() && c != '@');
            (7..=15).contains(&digits)
                && !(bare && digits > 8)
                && !ISO_DATE.is_match(cand)
                && detached(before)
                && detached(after)
        }
        _ => true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Redacted {
    pub text: String,
    pub spans: Vec<RedactionSpan>,
}

/// Replaces every accepted match with its category token.
pub fn redact(text: &str, rules: &PiiRuleSet) -> Redacted {
    let mut found: Vec<(usize, usize, PiiCategory)> = Vec::new();
    for rule in &rules.rules {
        for m in rule.pattern.find_iter(text) {
            let (s, e) = (m.start(), m.end());
            if s == e || !accept(rule.category, text, s, e) {
                continue;
            }
            if found.iter().all(|&(fs, fe, _)| e <= fs || fe <= s) {
                found.push((s, e, rule.category));
            }
        }
    }
    found.sort_unstable();

    let mut out = String::with_capacity(text.len());
    let mut spans = Vec::with_capacity(found.len());
    let mut chars = 0usize;
    let mut last = 0usize;
    for (s, e, category) in found {
        let keep = &text[last..s];
        out.push_str(keep);
        chars += keep.chars().count();
        let token = category.token();
        out.push_str(token);
        spans.push(RedactionSpan {
            start: chars,
            end: chars + token.len(),
            category,
        });
        chars += token.len();
        last = e;
    }
    out.push_str(&text[last..]);
    Redacted { text: out, spans }
}

/// Redacts with the built-in rule set.
pub fn redact_default(text: &str) -> Redacted {
    redact(text, &DEFAULT_RULES)
}
