//! Brute-force references: slow, obvious, and written without looking at
//! the indexed implementations.

use std::collections::HashSet;

/// Suffix array by sorting every suffix with slice comparison.
pub fn naive_suffix_array(bytes: &[u8]) -> Vec<u64> {
    let mut sa: Vec<u64> = (0..bytes.len() as u64).collect();
    sa.sort_unstable_by(|&a, &b| bytes[a as usize..].cmp(&bytes[b as usize..]));
    sa
}

/// Every (document index, byte offset) where `query` occurs, overlapping
/// occurrences included, scanning each document on its own.
pub fn naive_occurrences<S: AsRef<str>>(docs: &[S], query: &str) -> Vec<(usize, u64)> {
    let mut out = Vec::new();
    if query.is_empty() {
        return out;
    }
    for (d, text) in docs.iter().enumerate() {
        let text = text.as_ref();
        let mut from = 0;
        while let Some(i) = text[from..].find(query) {
            let at = from + i;
            out.push((d, at as u64));
            from = at + text[at..].chars().next().map_or(1, char::len_utf8);
        }
    }
    out
}

/// Exhaustive BM25 over pre-tokenized documents.
///
/// idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), and each unique query
/// term adds idf * tf / (tf + k1 * (1 - b + b * dl / avgdl)).
pub struct BruteBm25 {
    docs: Vec<(String, Vec<String>)>,
    k1: f64,
    b: f64,
}

impl BruteBm25 {
    /// `docs` pairs an identifier with its token list; empty lists are dropped.
    pub fn new(docs: Vec<(String, Vec<String>)>, k1: f64, b: f64) -> Self {
        let docs = docs.into_iter().filter(|(_, t)| !t.is_empty()).collect();
        BruteBm25 { docs, k1, b }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    fn avgdl(&self) -> f64 {
        let total: usize = self.docs.iter().map(|(_, t)| t.len()).sum();
        total as f64 / self.docs.len() as f64
    }

    fn df(&self, term: &str) -> usize {
        self.docs.iter().filter(|(_, t)| t.iter().any(|x| x == term)).count()
    }

    fn unique(query: &[String]) -> Vec<&String> {
        let mut seen = HashSet::new();
        query.iter().filter(|t| seen.insert(t.as_str())).collect()
    }

    /// Score of document `i`.
    pub fn score(&self, query: &[String], i: usize) -> f64 {
        let terms = Self::unique(query);
        let dfs: Vec<usize> = terms.iter().map(|t| self.df(t)).collect();
        self.score_with(&terms, &dfs, self.avgdl(), i)
    }

    fn score_with(&self, terms: &[&String], dfs: &[usize], avgdl: f64, i: usize) -> f64 {
        let n = self.docs.len() as f64;
        let tokens = &self.docs[i].1;
        let dl = tokens.len() as f64;
        let mut score = 0.0;
        for (term, &df) in terms.iter().zip(dfs) {
            let tf = tokens.iter().filter(|x| x == term).count();
            if tf == 0 {
                continue;
            }
            let df = df as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let tf = tf as f64;
            score += idf * tf / (tf + self.k1 * (1.0 - self.b + self.b * dl / avgdl));
        }
        score
    }

    /// All positive-scoring documents, best first, ties by identifier; then
    /// the first `k`.
    pub fn top_k(&self, query: &[String], k: usize) -> Vec<(String, f64)> {
        if self.docs.is_empty() {
            return Vec::new();
        }
        let terms = Self::unique(query);
        let dfs: Vec<usize> = terms.iter().map(|t| self.df(t)).collect();
        let avgdl = self.avgdl();
        let mut all: Vec<(String, f64)> = (0..self.docs.len())
            .map(|i| (self.docs[i].0.clone(), self.score_with(&terms, &dfs, avgdl, i)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn hand_checked_score() {
        let o = BruteBm25::new(vec![("a".into(), toks("cat")), ("b".into(), toks("dog"))], 1.2, 0.75);
        let s = o.score(&toks("cat"), 0);
        assert!((s - 2f64.ln() / 2.2).abs() < 1e-15);
        assert_eq!(o.score(&toks("cat"), 1), 0.0);
        assert_eq!(o.top_k(&toks("cat cat"), 5).len(), 1);
    }

    #[test]
    fn suffix_array_and_scan() {
        assert_eq!(naive_suffix_array(b"banana"), vec![5, 3, 1, 0, 4, 2]);
        assert_eq!(
            naive_occurrences(&["banana", "ana"], "ana"),
            vec![(0, 1), (0, 3), (1, 0)]
        );
        assert_eq!(naive_occurrences(&["ééé"], "éé"), vec![(0, 0), (0, 2)]);
    }
}
