//! Byte-level exact search over the whole corpus.
//!
//! All documents are concatenated, each followed by a `0xFF` separator.
//! `0xFF` never occurs in UTF-8, so a match of a UTF-8 query can never cross
//! a document boundary. Matching is case- and punctuation-sensitive and may
//! start or end inside a word.

use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::corpus::{Document, ResultId, Snippet};
use crate::persist::{self, Decoder, Encoder, PersistError};
use crate::sais;

pub const FORMAT_VERSION: u32 = 1;
pub const SEPARATOR: u8 = 0xFF;
const CORPUS_FILE: &str = "corpus.bin";
const SA_FILE: &str = "sa.bin";
const DOCMAP_FILE: &str = "docmap.bin";

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("nothing to index: the document stream is empty")]
    NoDocuments,
    #[error("corpus exceeds the build budget of {limit} bytes")]
    Budget { limit: u64 },
    #[error("query is empty")]
    EmptyQuery,
    #[error("offset {offset} is {reason}")]
    Offset { offset: u64, reason: &'static str },
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// Resource limits for suffix-array construction.
#[derive(Debug, Clone, Copy)]
pub struct BuildLimits {
    /// Upper bound on concatenated corpus size, separators included.
    pub max_corpus_bytes: u64,
}

impl Default for BuildLimits {
    fn default() -> Self {
        BuildLimits {
            max_corpus_bytes: 1 << 40,
        }
    }
}

/// One document's interval in the concatenated corpus: `[start, end)`,
/// with the separator at `end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocEntry {
    pub start: u64,
    pub end: u64,
    pub dataset_name: String,
    pub doc_id: String,
    pub language_tag: String,
    pub source_url: Option<String>,
}

/// Where one occurrence sits, before any snippet is cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchPosition {
    /// Index into [`SuffixArrayIndex::documents`].
    pub doc: usize,
    /// Byte offset of the match inside its document.
    pub offset: u64,
    /// Rank of this occurrence within its document, by offset.
    pub rank: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMatch {
    pub result_id: ResultId,
    pub byte_offset: u64,
    pub snippet: Snippet,
}

pub struct SuffixArrayIndex {
    corpus: Vec<u8>,
    sa: Vec<u64>,
    docs: Vec<DocEntry>,
}

impl std::fmt::Debug for SuffixArrayIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SuffixArrayIndex")
            .field("corpus_bytes", &self.corpus.len())
            .field("documents", &self.docs.len())
            .finish()
    }
}

impl SuffixArrayIndex {
    pub fn build<I>(docs: I, limits: BuildLimits) -> Result<Self, ExactError>
    where
        I: IntoIterator<Item = Document>,
    {
        let mut corpus = Vec::new();
        let mut entries = Vec::new();
        for doc in docs {
            let needed = corpus.len() as u64 + doc.text.len() as u64 + 1;
            if needed > limits.max_corpus_bytes {
                return Err(ExactError::Budget {
                    limit: limits.max_corpus_bytes,
                });
            }
            let start = corpus.len() as u64;
            corpus.extend_from_slice(doc.text.as_bytes());
            let end = corpus.len() as u64;
            corpus.push(SEPARATOR);
            entries.push(DocEntry {
                start,
                end,
                dataset_name: doc.dataset_name,
                doc_id: doc.doc_id,
                language_tag: doc.language_tag,
                source_url: doc.source_url,
            });
        }
        if entries.is_empty() {
            return Err(ExactError::NoDocuments);
        }
        let sa = sais::suffix_array(&corpus).into_iter().map(|i| i as u64).collect();
        Ok(SuffixArrayIndex {
            corpus,
            sa,
            docs: entries,
        })
    }

    pub fn corpus_len(&self) -> u64 {
        self.corpus.len() as u64
    }

    pub fn documents(&self) -> &[DocEntry] {
        &self.docs
    }

    pub fn suffix_array(&self) -> &[u64] {
        &self.sa
    }

    /// The concatenated corpus bytes, separators included.
    pub fn corpus_bytes(&self) -> &[u8] {
        &self.corpus
    }

    pub(crate) fn document_text(&self, doc: usize) -> &str {
        let e = &self.docs[doc];
        std::str::from_utf8(&self.corpus[e.start as usize..e.end as usize]).expect("validated at build/load")
    }

    fn sa_range(&self, pattern: &[u8]) -> Range<usize> {
        let m = pattern.len();
        let lo = self.sa.partition_point(|&i| &self.corpus[i as usize..] < pattern);
        let hi = lo
            + self.sa[lo..].partition_point(|&i| {
                let s = &self.corpus[i as usize..];
                &s[..m.min(s.len())] <= pattern
            });
        lo..hi
    }

    pub fn count_occurrences(&self, query: &str) -> Result<u64, ExactError> {
        if query.is_empty() {
            return Err(ExactError::EmptyQuery);
        }
        Ok(self.sa_range(query.as_bytes()).len() as u64)
    }

    /// Every occurrence in canonical order (document order, then offset).
    pub fn match_positions(&self, query: &str) -> Result<Vec<MatchPosition>, ExactError> {
        if query.is_empty() {
            return Err(ExactError::EmptyQuery);
        }
        let mut offsets: Vec<u64> = self.sa[self.sa_range(query.as_bytes())].to_vec();
        offsets.sort_unstable();
        let mut out = Vec::with_capacity(offsets.len());
        let mut doc = 0usize;
        let mut rank = 0u64;
        for off in offsets {
            if self.docs[doc].end <= off {
                doc += self.docs[doc..].partition_point(|e| e.end <= off);
                rank = 0;
            }
            let e = &self.docs[doc];
            debug_assert!(e.start <= off && off < e.end);
            out.push(MatchPosition {
                doc,
                offset: off - e.start,
                rank,
            });
            rank += 1;
        }
        Ok(out)
    }

    /// Cuts the ad-hoc snippet for one occurrence: up to `context_words`
    /// words on each side, clamped at the document edges.
    pub fn snippet_for(&self, pos: &MatchPosition, query_len: usize, context_words: usize) -> Snippet {
        let text = self.document_text(pos.doc);
        let start = pos.offset as usize;
        let end = start + query_len;
        let solid = |c: Option<char>| c.is_some_and(|c| !c.is_whitespace());
        let matched = &text[start..end];
        let cut_before = solid(text[..start].chars().next_back()) && solid(matched.chars().next());
        let cut_after = solid(matched.chars().next_back()) && solid(text[end..].chars().next());
        let from = context_start(&text[..start], context_words, cut_before);
        let to = end + context_end(&text[end..], context_words, cut_after);
        let window: Vec<&str> = text[from..to].split_whitespace().collect();
        let e = &self.docs[pos.doc];
        Snippet {
            result_id: ResultId::exact(&e.dataset_name, &e.doc_id, pos.rank),
            text: window.join(" "),
            language_tag: e.language_tag.clone(),
            source_url: e.source_url.clone(),
            redactions: Vec::new(),
        }
    }

    /// The slice `[offset, offset + limit)` of the canonical match list.
    pub fn enumerate_matches(
        &self,
        query: &str,
        limit: usize,
        offset: usize,
        context_words: usize,
    ) -> Result<Vec<ExactMatch>, ExactError> {
        let all = self.match_positions(query)?;
        Ok(all
            .iter()
            .skip(offset)
            .take(limit)
            .map(|p| {
                let snippet = self.snippet_for(p, query.len(), context_words);
                ExactMatch {
                    result_id: snippet.result_id.clone(),
                    byte_offset: p.offset,
                    snippet,
                }
            })
            .collect())
    }

    /// The document containing corpus byte `offset`.
    pub fn locate_document(&self, offset: u64) -> Result<&DocEntry, ExactError> {
        if offset >= self.corpus.len() as u64 {
            return Err(ExactError::Offset {
                offset,
                reason: "past the end of the corpus",
            });
        }
        let i = self.docs.partition_point(|e| e.end < offset);
        match self.docs.get(i) {
            Some(e) if e.start <= offset && offset < e.end => Ok(e),
            _ => Err(ExactError::Offset {
                offset,
                reason: "a document separator",
            }),
        }
    }

    /// Writes `corpus.bin`, `sa.bin` and `docmap.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<(String, String)>, ExactError> {
        std::fs::create_dir_all(dir).map_err(|e| PersistError::io(dir, e))?;
        let mut files = Vec::new();
        let digest = persist::write_section(&dir.join(CORPUS_FILE), b"CORP", FORMAT_VERSION, &self.corpus)?;
        files.push((CORPUS_FILE.to_string(), digest));

        let mut sa = Vec::with_capacity(8 + self.sa.len() * 8);
        sa.extend_from_slice(&(self.sa.len() as u64).to_le_bytes());
        for &v in &self.sa {
            sa.extend_from_slice(&v.to_le_bytes());
        }
        let digest = persist::write_section(&dir.join(SA_FILE), b"SUFA", FORMAT_VERSION, &sa)?;
        files.push((SA_FILE.to_string(), digest));

        let mut map = Encoder::new();
        map.u64(self.docs.len() as u64);
        for e in &self.docs {
            map.u64(e.start)
                .u64(e.end)
                .str(&e.dataset_name)
                .str(&e.doc_id)
                .str(&e.language_tag)
                .opt_str(e.source_url.as_deref());
        }
        let digest = persist::write_section(&dir.join(DOCMAP_FILE), b"DOCS", FORMAT_VERSION, &map.finish())?;
        files.push((DOCMAP_FILE.to_string(), digest));
        Ok(files)
    }

    pub fn load(dir: &Path) -> Result<Self, ExactError> {
        let corpus_path = dir.join(CORPUS_FILE);
        let corpus = persist::read_section(&corpus_path, b"CORP", FORMAT_VERSION)?;

        let sa_path = dir.join(SA_FILE);
        let raw = persist::read_section(&sa_path, b"SUFA", FORMAT_VERSION)?;
        let mut d = Decoder::new(&raw, &sa_path);
        let n = d.u64()? as usize;
        if n != corpus.len() || raw.len() != 8 + n * 8 {
            return Err(d.error("suffix array length disagrees with corpus").into());
        }
        let sa: Vec<u64> = raw[8..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if sa.iter().any(|&v| v as usize >= n) {
            return Err(d.error("suffix array entry out of range").into());
        }

        let map_path = dir.join(DOCMAP_FILE);
        let raw = persist::read_section(&map_path, b"DOCS", FORMAT_VERSION)?;
        let mut d = Decoder::new(&raw, &map_path);
        let count = d.u64()? as usize;
        let mut docs = Vec::with_capacity(count.min(1 << 24));
        let mut expected_start = 0u64;
        for _ in 0..count {
            let start = d.u64()?;
            let end = d.u64()?;
            let entry = DocEntry {
                start,
                end,
                dataset_name: d.str()?,
                doc_id: d.str()?,
                language_tag: d.str()?,
                source_url: d.opt_str()?,
            };
            let body = corpus.get(start as usize..end as usize);
            let valid = start == expected_start
                && start < end
                && corpus.get(end as usize) == Some(&SEPARATOR)
                && body.is_some_and(|b| std::str::from_utf8(b).is_ok());
            if !valid {
                return Err(d.error("doc_map does not tile the corpus").into());
            }
            expected_start = end + 1;
            docs.push(entry);
        }
        d.finish()?;
        if expected_start as usize != corpus.len() || docs.is_empty() {
            return Err(PersistError::Corrupt {
                path: map_path,
                reason: "doc_map does not cover the corpus".into(),
            }
            .into());
        }
        Ok(SuffixArrayIndex { corpus, sa, docs })
    }
}

/// Byte index where the last `words` whole words of `before` begin. With
/// `cut`, the trailing partial word belongs to the match and is not counted.
fn context_start(before: &str, words: usize, cut: bool) -> usize {
    let mut seen = 0;
    let mut in_word = cut;
    let mut start = before.len();
    for (i, c) in before.char_indices().rev() {
        if c.is_whitespace() {
            in_word = false;
        } else {
            if !in_word {
                if seen == words {
                    return start;
                }
                seen += 1;
                in_word = true;
            }
            start = i;
        }
    }
    start
}

/// Byte length of the next `words` words of `after`, plus the rest of the
/// word the match ends inside when `cut`.
fn context_end(after: &str, words: usize, cut: bool) -> usize {
    let mut seen = 0;
    let mut in_word = cut;
    let mut end = 0;
    for (i, c) in after.char_indices() {
        if c.is_whitespace() {
            in_word = false;
        } else {
            if !in_word {
                if seen == words {
                    return end;
                }
                seen += 1;
                in_word = true;
            }
            end = i + c.len_utf8();
        }
    }
    end
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document::new("ds", id, text, "en", None).unwrap()
    }

    fn index(texts: &[&str]) -> SuffixArrayIndex {
        let docs = texts.iter().enumerate().map(|(i, t)| doc(&i.to_string(), t));
        SuffixArrayIndex::build(docs, BuildLimits::default()).unwrap()
    }

    #[test]
    fn banana() {
        let idx = index(&["banana"]);
        // separator 0xFF sorts after every text byte, so "a\xff" follows "ana\xff"
        assert_eq!(idx.suffix_array(), &[1, 3, 5, 0, 2, 4, 6]);
        let mut naive: Vec<u64> = (0..7).collect();
        naive.sort_by_key(|&i| &idx.corpus_bytes()[i as usize..]);
        assert_eq!(idx.suffix_array(), naive.as_slice());
        assert_eq!(idx.count_occurrences("ana").unwrap(), 2);
        assert_eq!(idx.count_occurrences("Ana").unwrap(), 0);
        let m = idx.enumerate_matches("ana", 10, 0, 50).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!((m[0].byte_offset, m[1].byte_offset), (1, 3));
        assert_eq!(m[0].result_id, ResultId::exact("ds", "0", 0));
        assert_eq!(m[1].result_id, ResultId::exact("ds", "0", 1));
        assert_eq!(m[0].snippet.text, "banana");
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(
            SuffixArrayIndex::build(Vec::new(), BuildLimits::default()),
            Err(ExactError::NoDocuments)
        ));
        let idx = index(&["x"]);
        assert!(matches!(idx.count_occurrences(""), Err(ExactError::EmptyQuery)));
        assert!(matches!(
            idx.enumerate_matches("", 1, 0, 1),
            Err(ExactError::EmptyQuery)
        ));
    }

    #[test]
    fn budget_is_enforced() {
        let r = SuffixArrayIndex::build([doc("1", "0123456789")], BuildLimits { max_corpus_bytes: 10 });
        assert!(matches!(r, Err(ExactError::Budget { limit: 10 })));
        let r = SuffixArrayIndex::build([doc("1", "0123456789")], BuildLimits { max_corpus_bytes: 11 });
        assert!(r.is_ok());
    }

    #[test]
    fn no_cross_document_matches() {
        let idx = index(&["abc", "def"]);
        assert_eq!(idx.count_occurrences("cd").unwrap(), 0);
        assert_eq!(idx.count_occurrences("c").unwrap(), 1);
    }

    #[test]
    fn context_windows_clamp() {
        let idx = index(&["one two three four five six seven"]);
        let m = idx.enumerate_matches("one", 10, 0, 2).unwrap();
        assert_eq!(m[0].snippet.text, "one two three");
        let m = idx.enumerate_matches("four", 10, 0, 2).unwrap();
        assert_eq!(m[0].snippet.text, "two three four five six");
        let m = idx.enumerate_matches("seven", 10, 0, 2).unwrap();
        assert_eq!(m[0].snippet.text, "five six seven");
        let m = idx.enumerate_matches("our", 10, 0, 0).unwrap();
        assert_eq!(m[0].snippet.text, "four");
        let m = idx.enumerate_matches("three", 10, 0, 0).unwrap();
        assert_eq!(m[0].snippet.text, "three");
        let m = idx.enumerate_matches(" four", 10, 0, 1).unwrap();
        assert_eq!(m[0].snippet.text, "three four five");
        let m = idx.enumerate_matches("ee fo", 10, 0, 1).unwrap();
        assert_eq!(m[0].snippet.text, "two three four five");
    }

    #[test]
    fn ranks_restart_per_document() {
        let idx = index(&["a a", "b", "a a a"]);
        let pos = idx.match_positions("a").unwrap();
        let got: Vec<(usize, u64, u64)> = pos.iter().map(|p| (p.doc, p.offset, p.rank)).collect();
        assert_eq!(got, vec![(0, 0, 0), (0, 2, 1), (2, 0, 0), (2, 2, 1), (2, 4, 2)]);
        let page = idx.enumerate_matches("a", 2, 2, 5).unwrap();
        assert_eq!(page[0].result_id, ResultId::exact("ds", "2", 0));
        assert_eq!(page.len(), 2);
    }

    #[test]
    fn locate() {
        let idx = index(&["ab", "cde", "f"]);
        assert_eq!(idx.locate_document(0).unwrap().doc_id, "0");
        assert_eq!(idx.locate_document(4).unwrap().doc_id, "1");
        assert_eq!(idx.locate_document(7).unwrap().doc_id, "2");
        assert!(idx.locate_document(2).is_err());
        assert!(idx.locate_document(6).is_err());
        assert!(idx.locate_document(9).is_err());
    }

    #[test]
    fn save_load_round_trip_and_corruption() {
        let idx = index(&["to be or not to be", "To be, or not", "ünïcödé to be"]);
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        let back = SuffixArrayIndex::load(dir.path()).unwrap();
        for q in ["to be", "To be", "be", "ü", "not", "zzz"] {
            assert_eq!(idx.count_occurrences(q).unwrap(), back.count_occurrences(q).unwrap());
        }
        assert_eq!(back.documents(), idx.documents());

        let map = dir.path().join(DOCMAP_FILE);
        let mut bytes = std::fs::read(&map).unwrap();
        let last = bytes.len() - 2;
        bytes[last] ^= 0x55;
        std::fs::write(&map, &bytes).unwrap();
        assert!(matches!(
            SuffixArrayIndex::load(dir.path()),
            Err(ExactError::Persist(PersistError::Checksum { .. }))
        ));

        idx.save(dir.path()).unwrap();
        let sa = dir.path().join(SA_FILE);
        let mut bytes = std::fs::read(&sa).unwrap();
        bytes[12] = 7;
        std::fs::write(&sa, &bytes).unwrap();
        assert!(matches!(
            SuffixArrayIndex::load(dir.path()),
            Err(ExactError::Persist(PersistError::Version { found: 7, .. }))
        ));
    }
}
