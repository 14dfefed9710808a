use std::collections::BTreeSet;

use corpus_search::exact::{BuildLimits, ExactError, SuffixArrayIndex};
use corpus_search::persist::PersistError;
use corpus_search::Document;
use corpus_search_fixtures::oracle::{naive_occurrences, naive_suffix_array};
use corpus_search_fixtures::{corpus_of_size, rng};
use proptest::prelude::*;
use rand::Rng;

fn documents(texts: &[String]) -> Vec<Document> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("ds{}", i % 2), format!("d{i}"), t.clone(), "en", None).unwrap())
        .collect()
}

fn random_query<R: Rng>(r: &mut R, texts: &[String]) -> String {
    let t = &texts[r.gen_range(0..texts.len())];
    let bounds: Vec<usize> = t.char_indices().map(|(i, _)| i).chain([t.len()]).collect();
    let a = r.gen_range(0..bounds.len() - 1);
    let b = (a + r.gen_range(1..12)).min(bounds.len() - 1);
    t[bounds[a]..bounds[b]].to_string()
}

#[test]
fn mixed_corpus_matches_naive_oracles() {
    let fixture = corpus_of_size(3, 300_000);
    let texts: Vec<String> = fixture.iter().map(|d| d.text.clone()).collect();
    let index = SuffixArrayIndex::build(documents(&texts), BuildLimits::default()).unwrap();
    assert_eq!(
        index.suffix_array(),
        naive_suffix_array(index.corpus_bytes()).as_slice()
    );

    let mut r = rng(4);
    for _ in 0..300 {
        let q = random_query(&mut r, &texts);
        let want: BTreeSet<(usize, u64)> = naive_occurrences(&texts, &q).into_iter().collect();
        let got: BTreeSet<(usize, u64)> = index
            .match_positions(&q)
            .unwrap()
            .into_iter()
            .map(|p| (p.doc, p.offset))
            .collect();
        assert_eq!(got, want, "{q:?}");
        assert_eq!(index.count_occurrences(&q).unwrap(), want.len() as u64);
    }
}

#[test]
fn doc_map_tiles_the_corpus_after_reload() {
    let texts: Vec<String> = ["alpha beta", "gamma", "delta epsilon zeta"].map(String::from).to_vec();
    let index = SuffixArrayIndex::build(documents(&texts), BuildLimits::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    index.save(dir.path()).unwrap();
    let loaded = SuffixArrayIndex::load(dir.path()).unwrap();
    let mut expected_start = 0;
    for (e, t) in loaded.documents().iter().zip(&texts) {
        assert_eq!(e.start, expected_start);
        assert_eq!(e.end - e.start, t.len() as u64);
        assert_eq!(loaded.corpus_bytes()[e.end as usize], 0xFF);
        expected_start = e.end + 1;
    }
    assert_eq!(expected_start, loaded.corpus_len());
    assert_eq!(loaded.suffix_array(), index.suffix_array());

    let sa = dir.path().join("sa.bin");
    let mut bytes = std::fs::read(&sa).unwrap();
    bytes[12] = 99;
    std::fs::write(&sa, bytes).unwrap();
    assert!(matches!(
        SuffixArrayIndex::load(dir.path()),
        Err(ExactError::Persist(PersistError::Version { found: 99, .. }))
    ));
}

fn texts_strategy() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(
        proptest::collection::vec(
            prop_oneof![Just("ab"), Just("ba"), Just("é"), Just(" "), Just("a")],
            1..40,
        )
        .prop_map(|parts| parts.concat())
        .prop_filter("non-blank", |s| !s.trim().is_empty()),
        1..6,
    )
}

proptest! {
    #[test]
    fn matches_agree_with_scan(texts in texts_strategy(), q in prop_oneof![Just("a"), Just("ab"), Just("ba b"), Just("é a"), Just("aba")]) {
        let index = SuffixArrayIndex::build(documents(&texts), BuildLimits::default()).unwrap();
        let want: Vec<(usize, u64)> = naive_occurrences(&texts, q);
        let got: Vec<(usize, u64)> = index.match_positions(q).unwrap().into_iter().map(|p| (p.doc, p.offset)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn snippets_respect_the_word_bound(texts in texts_strategy(), w in 0usize..4, q in prop_oneof![Just("a"), Just(" b"), Just("a b"), Just("é")]) {
        let index = SuffixArrayIndex::build(documents(&texts), BuildLimits::default()).unwrap();
        let q_words = q.split_whitespace().count();
        for p in index.match_positions(q).unwrap() {
            let s = index.snippet_for(&p, q.len(), w);
            prop_assert!(s.text.split_whitespace().count() <= 2 * w + q_words.max(1), "{:?}", s.text);
            let words: Vec<&str> = texts[p.doc].split_whitespace().collect();
            let snip: Vec<&str> = s.text.split_whitespace().collect();
            prop_assert!(words.windows(snip.len()).any(|win| win == snip.as_slice()));
        }
    }
}
