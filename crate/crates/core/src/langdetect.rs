//! Query language detection with a character n-gram (n = 1..3) multinomial
//! model and add-one smoothing.
//!
//! For each order the table of tag `t` assigns
//! `P(g | t) = (count(g, t) + 1) / (total(t) + V + 1)` where `V` is the
//! number of distinct n-grams of that order seen in training; the extra slot
//! covers every unseen n-gram, so each table sums to one.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persist::PersistError;
use crate::tags;

pub const FORMAT_VERSION: u32 = 1;
const ORDERS: [usize; 3] = [1, 2, 3];
/// Queries shorter than this many characters are not classified.
pub const MIN_QUERY_CHARS: usize = 3;

#[derive(Debug, Error)]
pub enum LangDetectError {
    #[error("no training samples for tags: {}", .0.join(", "))]
    MissingTags(Vec<String>),
    #[error("training sample has unsupported tag {0:?}")]
    UnsupportedTag(String),
    #[error("a model needs at least one tag")]
    NoTags,
    #[error(transparent)]
    Persist(#[from] PersistError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OrderCounts {
    /// Distinct n-grams of this order across all tags.
    vocab: u64,
    /// Per tag, in `tags` order.
    totals: Vec<u64>,
    counts: Vec<BTreeMap<String, u64>>,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    format_version: u32,
    tags: Vec<String>,
    samples: Vec<u64>,
    orders: Vec<OrderCounts>,
}

#[derive(Debug, Clone)]
struct Table {
    logp: Vec<HashMap<String, f64>>,
    unseen: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LangDetectModel {
    tags: Vec<String>,
    samples: Vec<u64>,
    log_prior: Vec<f64>,
    orders: Vec<OrderCounts>,
    tables: Vec<Table>,
}

/// A detection result. `confidence` is the posterior of `tag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub tag: String,
    pub confidence: f64,
}

fn normalise(text: &str) -> Vec<char> {
    let mut out = vec![' '];
    for word in text.split_whitespace() {
        out.extend(word.chars().flat_map(char::to_lowercase));
        out.push(' ');
    }
    out
}

fn ngrams(chars: &[char], n: usize) -> impl Iterator<Item = String> + '_ {
    chars.windows(n).map(|w| w.iter().collect())
}

impl LangDetectModel {
    /// Trains over all thirteen index tags.
    pub fn train<'a, I>(samples: I) -> Result<Self, LangDetectError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self::train_for(&tags::INDEX_TAGS, samples)
    }

    /// Trains over `supported` tags; every one needs at least one sample.
    pub fn train_for<'a, I>(supported: &[&str], samples: I) -> Result<Self, LangDetectError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut tag_list: Vec<String> = Vec::new();
        for t in supported {
            let canon = tags::index_tag_for(t).ok_or_else(|| LangDetectError::UnsupportedTag(t.to_string()))?;
            if !tag_list.iter().any(|x| x == canon) {
                tag_list.push(canon.to_string());
            }
        }
        if tag_list.is_empty() {
            return Err(LangDetectError::NoTags);
        }
        tag_list.sort_by_key(|t| tags::registry_position(t));

        let k = tag_list.len();
        let mut sample_counts = vec![0u64; k];
        let mut counts: Vec<Vec<BTreeMap<String, u64>>> = vec![vec![BTreeMap::new(); k]; ORDERS.len()];
        let mut totals = vec![vec![0u64; k]; ORDERS.len()];
        for (tag, text) in samples {
            let canon = tags::index_tag_for(tag).unwrap_or(tag);
            let t = tag_list
                .iter()
                .position(|x| x == canon)
                .ok_or_else(|| LangDetectError::UnsupportedTag(tag.to_string()))?;
            sample_counts[t] += 1;
            let chars = normalise(text);
            for (o, &n) in ORDERS.iter().enumerate() {
                for g in ngrams(&chars, n) {
                    *counts[o][t].entry(g).or_default() += 1;
                    totals[o][t] += 1;
                }
            }
        }
        let missing: Vec<String> = tag_list
            .iter()
            .zip(&sample_counts)
            .filter(|(_, &c)| c == 0)
            .map(|(t, _)| t.clone())
            .collect();
        if !missing.is_empty() {
            return Err(LangDetectError::MissingTags(missing));
        }

        let orders = counts
            .into_iter()
            .zip(totals)
            .map(|(counts, totals)| {
                let mut vocab: Vec<&String> = counts.iter().flat_map(|m| m.keys()).collect();
                vocab.sort();
                vocab.dedup();
                OrderCounts {
                    vocab: vocab.len() as u64,
                    totals,
                    counts,
                }
            })
            .collect();
        Ok(Self::from_counts(tag_list, sample_counts, orders))
    }

    fn from_counts(tags: Vec<String>, samples: Vec<u64>, orders: Vec<OrderCounts>) -> Self {
        let all: u64 = samples.iter().sum();
        let log_prior = samples.iter().map(|&c| (c as f64 / all as f64).ln()).collect();
        let tables = orders
            .iter()
            .map(|o| {
                let denom: Vec<f64> = o.totals.iter().map(|&t| (t + o.vocab + 1) as f64).collect();
                Table {
                    logp: o
                        .counts
                        .iter()
                        .zip(&denom)
                        .map(|(m, d)| m.iter().map(|(g, &c)| (g.clone(), ((c + 1) as f64 / d).ln())).collect())
                        .collect(),
                    unseen: denom.iter().map(|d| (1.0 / d).ln()).collect(),
                }
            })
            .collect();
        LangDetectModel {
            tags,
            samples,
            log_prior,
            orders,
            tables,
        }
    }

    pub fn supported_tags(&self) -> &[String] {
        &self.tags
    }

    fn prior_tag(&self) -> &str {
        let best = self
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        &self.tags[best]
    }

    /// Log-likelihood plus log-prior for every tag.
    fn log_scores(&self, chars: &[char]) -> Vec<f64> {
        let mut scores = self.log_prior.clone();
        for (o, &n) in ORDERS.iter().enumerate() {
            let table = &self.tables[o];
            for g in ngrams(chars, n) {
                for (t, s) in scores.iter_mut().enumerate() {
                    *s += table.logp[t].get(&g).copied().unwrap_or(table.unseen[t]);
                }
            }
        }
        scores
    }

    pub fn detect(&self, query: &str) -> Detection {
        if query.trim().chars().count() < MIN_QUERY_CHARS {
            return Detection {
                tag: self.prior_tag().to_string(),
                confidence: 0.0,
            };
        }
        let scores = self.log_scores(&normalise(query));
        let (best, max) =
            scores.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, s)| if s > acc.1 { (i, s) } else { acc },
            );
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        Detection {
            tag: self.tags[best].clone(),
            confidence: (1.0 / z).clamp(0.0, 1.0),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), LangDetectError> {
        let stored = Stored {
            format_version: FORMAT_VERSION,
            tags: self.tags.clone(),
            samples: self.samples.clone(),
            orders: self.orders.clone(),
        };
        let body = serde_json::to_vec(&stored).expect("model serializes");
        std::fs::write(path, body).map_err(|e| PersistError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LangDetectError> {
        let body = std::fs::read(path).map_err(|e| PersistError::io(path, e))?;
        let corrupt = |reason: String| PersistError::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let value: serde_json::Value = serde_json::from_slice(&body).map_err(|e| corrupt(e.to_string()))?;
        let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != FORMAT_VERSION {
            return Err(PersistError::Version {
                path: path.to_path_buf(),
                found,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        let stored: Stored = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        let k = stored.tags.len();
        let consistent = k > 0
            && stored.samples.len() == k
            && stored.orders.len() == ORDERS.len()
            && stored.orders.iter().all(|o| o.totals.len() == k && o.counts.len() == k);
        if !consistent {
            return Err(corrupt("table shapes disagree with tag list".into()).into());
        }
        Ok(Self::from_counts(stored.tags, stored.samples, stored.orders))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_each() -> Vec<(&'static str, &'static str)> {
        vec![
            ("zh", "我们今天去北京看看"),
            ("indic", "भारत एक विशाल देश है"),
            ("en", "the weather is lovely today"),
            ("es", "el perro come la comida"),
            ("fr", "le chat mange du poisson"),
            ("vi", "tôi không biết điều đó"),
            ("pt", "não sei o que fazer agora"),
            ("code", "fn main() { println!(\"hi\"); }"),
            ("ar", "ذهبت إلى المدرسة اليوم"),
            ("id", "saya pergi ke pasar kemarin"),
            ("ca", "els nens juguen al parc amb la pilota"),
            ("eu", "gaur goizean etxera joan naiz"),
            ("nigercongo", "habari za asubuhi rafiki yangu"),
        ]
    }

    #[test]
    fn missing_tag_is_named() {
        let mut s = one_each();
        s.retain(|(t, _)| *t != "eu");
        match LangDetectModel::train(s) {
            Err(LangDetectError::MissingTags(t)) => assert_eq!(t, vec!["eu".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn memorises_single_samples() {
        let s = one_each();
        let m = LangDetectModel::train(s.clone()).unwrap();
        for (tag, text) in s {
            let d = m.detect(text);
            assert_eq!(d.tag, tag, "{text}");
            assert!((0.0..=1.0).contains(&d.confidence));
        }
    }

    #[test]
    fn short_queries_fall_back_to_prior() {
        let mut s = one_each();
        s.push(("fr", "bonjour"));
        let m = LangDetectModel::train(s).unwrap();
        assert_eq!(
            m.detect(""),
            Detection {
                tag: "fr".into(),
                confidence: 0.0
            }
        );
        assert_eq!(m.detect("ab").confidence, 0.0);
    }

    #[test]
    fn sample_order_does_not_matter() {
        let s = one_each();
        let mut r = s.clone();
        r.reverse();
        let a = LangDetectModel::train(s).unwrap();
        let b = LangDetectModel::train(r).unwrap();
        for q in ["hello world", "quelque chose", "12345 abc"] {
            assert_eq!(a.detect(q), b.detect(q));
        }
    }

    #[test]
    fn unsupported_sample_tag() {
        let mut s = one_each();
        s.push(("xx", "???"));
        assert!(matches!(
            LangDetectModel::train(s),
            Err(LangDetectError::UnsupportedTag(_))
        ));
    }

    #[test]
    fn subset_training() {
        let m = LangDetectModel::train_for(&["en", "fr"], [("fr", "le chat noir"), ("en", "the black cat")]).unwrap();
        assert_eq!(m.supported_tags(), ["en", "fr"]);
        assert_eq!(m.detect("le chat").tag, "fr");
    }

    #[test]
    fn save_load() {
        let m = LangDetectModel::train(one_each()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let back = LangDetectModel::load(&p).unwrap();
        for q in ["hello there", "bom dia amigo", "func x() {}"] {
            assert_eq!(m.detect(q), back.detect(q));
        }
        let body = std::fs::read_to_string(&p)
            .unwrap()
            .replace("\"format_version\":1", "\"format_version\":5");
        std::fs::write(&p, body).unwrap();
        assert!(matches!(
            LangDetectModel::load(&p),
            Err(LangDetectError::Persist(PersistError::Version { found: 5, .. }))
        ));
    }
}
