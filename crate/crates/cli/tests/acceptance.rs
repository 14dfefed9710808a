//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use corpus_search::analysis::{analyze, analyzer_for};
use corpus_search::bm25::{Bm25Index, Bm25Params};
use corpus_search::exact::{BuildLimits, SuffixArrayIndex};
use corpus_search::langdetect::LangDetectModel;
use corpus_search::pii::redact_default;
use corpus_search::segment::{segment, SegmentationConfig};
use corpus_search::service::{SearchRequest, SearchResponse, SearchService, ServiceConfig};
use corpus_search::store::{build_index, BuildOptions};
use corpus_search::{Document, ResultId, Snippet};
use corpus_search_fixtures::oracle::{naive_occurrences, naive_suffix_array, BruteBm25};
use corpus_search_fixtures::pii::{clean_controls, planted};
use corpus_search_fixtures::{
    corpus_of_size, generate_corpus, langdetect_split, random_text, rng, write_corpus, CorpusConfig, FixtureDoc, TAGS,
};
use proptest::arbitrary::any;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_corpus-search");
const FUZZY_WORD_BOUND: usize = 128;
const CONTEXT_WORDS: usize = 50;

type Outcome = Result<String, String>;
type Check<F> = (&'static str, F);
type ServedCheck = fn(&Served) -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn to_document(d: &FixtureDoc) -> Document {
    Document::new(
        &d.dataset_name,
        &d.doc_id,
        d.text.clone(),
        &d.language_tag,
        d.source_url.clone(),
    )
    .unwrap()
}

fn snippet(tag: &str, i: usize, text: String) -> Snippet {
    Snippet {
        result_id: ResultId::fuzzy(
            &format!("{tag}_set{}", i % 4),
            &format!("s{i:05}"),
            "w128",
            (i % 3) as u64,
        ),
        text,
        language_tag: tag.to_string(),
        source_url: None,
        redactions: Vec::new(),
    }
}

fn bm25_oracle() -> Outcome {
    let started = Instant::now();
    let params = Bm25Params::default();
    let mut compared = 0;
    for tag in TAGS {
        let mut r = rng(100);
        let snips: Vec<Snippet> = (0..1000)
            .map(|i| {
                let n = r.gen_range(1..=128);
                snippet(tag, i, random_text(&mut r, tag, n))
            })
            .collect();
        let kind = analyzer_for(tag).unwrap();
        let oracle = BruteBm25::new(
            snips
                .iter()
                .map(|s| (s.result_id.render(), analyze(&kind, &s.text)))
                .collect(),
            params.k1,
            params.b,
        );
        let index = Bm25Index::build(tag, snips).unwrap();
        for _ in 0..50 {
            let n = r.gen_range(1..=5);
            let query = random_text(&mut r, tag, n);
            let tokens = analyze(&kind, &query);
            let got = index.search(&params, &query, 10);
            let want = oracle.top_k(&tokens, 10);
            ensure!(
                got.len() == want.len(),
                "{tag} {query:?}: {} results, oracle {}",
                got.len(),
                want.len()
            );
            for ((id, s), (wid, ws)) in got.iter().zip(&want) {
                ensure!(&id.render() == wid, "{tag} {query:?}: {id} where oracle has {wid}");
                ensure!((s - ws).abs() <= 1e-9, "{tag} {query:?} {id}: {s} vs {ws}");
            }
            compared += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{compared} queries over {} tags in {elapsed:.1?}", TAGS.len()))
}

fn hand_check_score() -> Outcome {
    let snips = ["cat", "dog"]
        .iter()
        .enumerate()
        .map(|(i, t)| snippet("en", i, t.to_string()));
    let index = Bm25Index::build("en", snips.collect::<Vec<_>>()).unwrap();
    let id = &index.snippets()[0].result_id;
    let got = index.score(&Bm25Params::default(), &["cat".to_string()], id).unwrap();
    let want = 2f64.ln() / 2.2;
    ensure!((got - want).abs() <= 1e-6, "{got} vs {want}");
    ensure!((got - 0.31507).abs() <= 1e-5, "{got}");
    Ok(format!("{got:.6}"))
}

fn char_slice<R: Rng>(r: &mut R, text: &str, max_chars: usize) -> String {
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    let a = r.gen_range(0..bounds.len() - 1);
    let b = (a + r.gen_range(1..=max_chars)).min(bounds.len() - 1);
    text[bounds[a]..bounds[b]].to_string()
}

fn suffix_array_correctness() -> Outcome {
    let fixture = corpus_of_size(2024, 10_000_000);
    let texts: Vec<String> = fixture.iter().map(|d| d.text.clone()).collect();
    let started = Instant::now();
    let index = SuffixArrayIndex::build(fixture.iter().map(to_document), BuildLimits::default()).unwrap();
    let build = started.elapsed();
    ensure!(build < Duration::from_secs(120), "build took {build:?}");
    ensure!(
        index.corpus_len() >= 10_000_000,
        "corpus is {} bytes",
        index.corpus_len()
    );

    let naive = naive_suffix_array(index.corpus_bytes());
    ensure!(
        index.suffix_array() == naive.as_slice(),
        "suffix array differs from the sorted oracle"
    );

    let mut r = rng(77);
    let mut queries: Vec<String> = (0..1000)
        .map(|_| {
            let t = &texts[r.gen_range(0..texts.len())];
            char_slice(&mut r, t, 24)
        })
        .collect();
    let boundary: Vec<String> = (0..50)
        .map(|_| {
            let i = r.gen_range(0..texts.len() - 1);
            let tail: String = texts[i]
                .chars()
                .rev()
                .take(r.gen_range(1..6))
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            let head: String = texts[i + 1].chars().take(r.gen_range(1..6)).collect();
            format!("{tail}{head}")
        })
        .collect();
    queries.extend(boundary);

    let docs = index.documents();
    let mut total = 0u64;
    for q in &queries {
        let want = naive_occurrences(&texts, q);
        let got: Vec<(usize, u64)> = index
            .match_positions(q)
            .unwrap()
            .iter()
            .map(|p| (p.doc, p.offset))
            .collect();
        ensure!(got == want, "{q:?}: {} positions, scan finds {}", got.len(), want.len());
        ensure!(
            index.count_occurrences(q).unwrap() == want.len() as u64,
            "{q:?}: count differs"
        );
        for &(d, off) in &got {
            let e = &docs[d];
            ensure!(
                off + q.len() as u64 <= e.end - e.start,
                "{q:?} crosses the end of document {d}"
            );
        }
        total += got.len() as u64;
    }
    Ok(format!(
        "{} bytes, {} documents, built in {build:.1?}; {} queries, {total} matches",
        index.corpus_len(),
        docs.len(),
        queries.len()
    ))
}

fn exactness_semantics() -> Outcome {
    let texts = [
        "To be, or not to be, that is the question.",
        "It has to be done, and it has to be done well, to be sure.",
        "To be continued. To be fair, we were going to be late.",
    ];
    let docs: Vec<Document> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new("plays", format!("d{i}"), *t, "en", None).unwrap())
        .collect();
    let index = SuffixArrayIndex::build(docs.clone(), BuildLimits::default()).unwrap();
    let upper = index.count_occurrences("To be").unwrap();
    let lower = index.count_occurrences("to be").unwrap();
    ensure!(upper == 3 && lower == 5, "counts {upper} and {lower}");

    let dir = tempfile::tempdir().unwrap();
    build_index(docs, 0, dir.path(), &BuildOptions::default()).unwrap();
    let svc = SearchService::open(dir.path(), ServiceConfig::default()).unwrap();
    for (q, n) in [("\"To be\"", 3), ("\"to be\"", 5)] {
        let r = svc.search(&req(q)).unwrap();
        ensure!(r.total_matches == Some(n), "{q}: total_matches {:?}", r.total_matches);
    }
    Ok(format!("\"To be\" {upper}, \"to be\" {lower}"))
}

fn segmentation_property() -> Outcome {
    let separators = [" ", "  ", "\n", "\t", " \n ", "\u{3000}"];
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let cfg = SegmentationConfig::default();
    let result = runner.run(&(any::<u64>(), 1usize..700), |(seed, n)| {
        let mut r = rng(seed);
        let words: Vec<String> = (0..n)
            .map(|_| {
                let tag = TAGS[r.gen_range(0..TAGS.len())];
                random_text(&mut r, tag, 1)
                    .split_whitespace()
                    .next()
                    .unwrap_or("x")
                    .to_string()
            })
            .collect();
        let mut text = String::new();
        for w in &words {
            text.push_str(w);
            text.push_str(separators[r.gen_range(0..separators.len())]);
        }
        let doc =
            Document::new("seg", "d", text.clone(), "en", None).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let segs = segment(&doc, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut joined: Vec<&str> = Vec::new();
        for (i, s) in segs.iter().enumerate() {
            let count = s.text.split_whitespace().count();
            if count == 0 || count > FUZZY_WORD_BOUND {
                return Err(TestCaseError::fail(format!("snippet {i} has {count} words")));
            }
            if s.seg_id != i as u64 {
                return Err(TestCaseError::fail(format!("seg_id {} at position {i}", s.seg_id)));
            }
            joined.extend(s.text.split_whitespace());
        }
        let original: Vec<&str> = text.split_whitespace().collect();
        if joined != original {
            return Err(TestCaseError::fail("word sequence changed"));
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok("10000 documents".into())
}

fn random_name<R: Rng>(r: &mut R, len: std::ops::RangeInclusive<usize>) -> String {
    const CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-";
    let n = r.gen_range(len);
    (0..n).map(|_| CHARS[r.gen_range(0..CHARS.len())] as char).collect()
}

fn random_result_id<R: Rng>(r: &mut R) -> ResultId {
    let parts = r.gen_range(1..=3);
    let dataset: Vec<String> = (0..parts).map(|_| random_name(r, 1..=10)).collect();
    let dataset = dataset.join("/");
    let doc = random_name(r, 1..=16);
    let rank = if r.gen_bool(0.1) {
        u64::MAX - r.gen_range(0..3)
    } else {
        r.gen_range(0..100_000)
    };
    if r.gen_bool(0.5) {
        ResultId::fuzzy(&dataset, &doc, &random_name(r, 1..=8), rank)
    } else {
        ResultId::exact(&dataset, &doc, rank)
    }
}

fn malformed<R: Rng>(r: &mut R, kind: usize) -> String {
    let ds = random_name(r, 1..=6);
    let doc = random_name(r, 1..=6);
    let n: u32 = r.gen_range(0..1000);
    match kind {
        0 => format!("{ds}/{doc}"),
        1 => format!("{ds}{doc}?id={n}").replace('/', ""),
        2 => format!("{ds}/{doc}?id=-{n}"),
        3 => format!("{ds}/{doc}?id=x{n}"),
        4 => format!("{ds}/{doc}?id={n}&color=red"),
        5 => format!("{ds}/{doc}?id={n}&id={n}"),
        6 => format!("{ds}/{doc}?seg=w128&seg_id={n}&id={n}"),
        7 => format!("{ds}/{doc}?seg=w128"),
        8 => format!("{ds}/{doc} {n}?id=1"),
        9 => format!("/{doc}?id={n}"),
        10 => format!("{ds}/{doc}?id"),
        11 => format!("{ds}/{doc}?id={n}99999999999999999999"),
        12 => format!("{ds}/{doc}?seg_id={n}"),
        13 => format!("{ds}/{doc}?seg=a b&seg_id={n}"),
        14 => format!("{ds}//{doc}?id={n}"),
        15 => format!("{ds}/?id={n}"),
        16 => format!("{ds}/{doc}?"),
        _ => format!("{ds}/{doc}?id={n}&"),
    }
}

fn result_id_round_trip() -> Outcome {
    let mut r = rng(606);
    let mut forms = [0usize; 2];
    for _ in 0..10_000 {
        let id = random_result_id(&mut r);
        forms[matches!(id.params, corpus_search::corpus::ResultParams::Exact { .. }) as usize] += 1;
        let parsed = ResultId::parse(&id.render()).map_err(|e| format!("{}: {e}", id.render()))?;
        ensure!(parsed == id, "{} came back as {parsed:?}", id.render());
    }
    ensure!(forms[0] > 0 && forms[1] > 0, "only one form generated");

    let mut bad: BTreeSet<String> = BTreeSet::new();
    let mut kind = 0;
    while bad.len() < 100 {
        bad.insert(malformed(&mut r, kind % 18));
        kind += 1;
    }
    for s in &bad {
        match ResultId::parse(s) {
            Ok(id) => return Err(format!("{s:?} accepted as {id:?}")),
            Err(e) => ensure!(!e.to_string().is_empty(), "{s:?}: empty diagnostic"),
        }
    }
    Ok(format!(
        "{} fuzzy + {} exact ids, {} malformed rejected",
        forms[0],
        forms[1],
        bad.len()
    ))
}

fn pii_redaction() -> Outcome {
    let strings = planted(31, 50);
    let controls = clean_controls(32, 50);
    ensure!(
        strings.len() == 200 && controls.len() == 50,
        "fixture sizes {} and {}",
        strings.len(),
        controls.len()
    );
    let mut items = 0;
    for p in &strings {
        let out = redact_default(&p.text);
        for item in &p.items {
            ensure!(
                !out.text.contains(&item.value),
                "{} survived in {:?}",
                item.value,
                out.text
            );
            items += 1;
        }
    }
    for c in &controls {
        let out = redact_default(c);
        ensure!(out.spans.is_empty(), "{c:?} redacted to {:?}", out.text);
    }
    for text in strings
        .iter()
        .map(|p| p.text.as_str())
        .chain(controls.iter().map(String::as_str))
    {
        let once = redact_default(text);
        let twice = redact_default(&once.text);
        ensure!(
            twice.text == once.text && twice.spans.is_empty(),
            "not idempotent on {text:?}"
        );
    }
    Ok(format!("{items} planted values removed, 50 controls untouched"))
}

fn req(q: &str) -> SearchRequest {
    SearchRequest {
        q: Some(q.into()),
        ..Default::default()
    }
}

fn small_service() -> (tempfile::TempDir, SearchService) {
    let doc = |ds: &str, id: &str, tag: &str, text: &str| Document::new(ds, id, text, tag, None).unwrap();
    let docs = vec![
        doc("web", "1", "en", "a needle eye and another needle eye here"),
        doc("web", "2", "en", "the needle eye of the storm"),
        doc("blocked", "3", "en", "needle eye twice: needle eye"),
        doc(
            "wiki",
            "4",
            "en",
            "one needle eye more, and a Needle Eye that does not count",
        ),
        doc("wiki", "5", "en", "needle eye"),
        doc("wiki", "6", "fr", "le chat noir dort sur le tapis rouge"),
        doc("web", "7", "es", "el perro come en la casa grande"),
    ];
    let dir = tempfile::tempdir().unwrap();
    build_index(docs, 0, dir.path(), &BuildOptions::default()).unwrap();
    let svc = SearchService::open(dir.path(), ServiceConfig::default()).unwrap();
    (dir, svc)
}

fn ids(r: &SearchResponse) -> Vec<String> {
    r.results.iter().map(|i| i.snippet.result_id.render()).collect()
}

fn exact_pagination() -> Outcome {
    let (_dir, svc) = small_service();
    let page = |p: usize, exclude: Option<&str>| {
        svc.search(&SearchRequest {
            k: Some("3".into()),
            page: Some(p.to_string()),
            exclude: exclude.map(String::from),
            ..req("\"needle eye\"")
        })
        .unwrap()
    };
    let pages: Vec<SearchResponse> = (0..3).map(|p| page(p, None)).collect();
    let sizes: Vec<usize> = pages.iter().map(|r| r.results.len()).collect();
    ensure!(sizes == [3, 3, 1], "page sizes {sizes:?}");
    ensure!(page(3, None).results.is_empty(), "a fourth page has results");
    let all: Vec<String> = pages.iter().flat_map(ids).collect();
    let set: BTreeSet<&String> = all.iter().collect();
    ensure!(set.len() == 7, "pages overlap: {all:?}");
    let canonical: BTreeSet<String> = svc
        .exact_index()
        .enumerate_matches("needle eye", 100, 0, 0)
        .unwrap()
        .into_iter()
        .map(|m| m.result_id.render())
        .collect();
    ensure!(
        set.into_iter().cloned().collect::<BTreeSet<_>>() == canonical,
        "union is not the match set"
    );
    for (p, first) in pages.iter().enumerate() {
        ensure!(&page(p, None) == first, "page {p} changed on re-query");
    }
    ensure!(
        pages.iter().all(|r| r.total_matches == Some(7)),
        "total_matches differs from 7"
    );

    let filtered: Vec<SearchResponse> = (0..3).map(|p| page(p, Some("blocked"))).collect();
    let kept: usize = filtered.iter().map(|r| r.results.len()).sum();
    ensure!(
        filtered.iter().all(|r| r.total_matches == Some(7)),
        "exclusion changed total_matches"
    );
    ensure!(kept == 5, "{kept} results after excluding a dataset");
    Ok("pages 3/3/1, total 7 with and without exclusion".into())
}

fn fuzzy_all_grouping() -> Outcome {
    let (_dir, svc) = small_service();
    let r = svc.search(&req("needle chat")).unwrap();
    let groups = r.results_by_language.ok_or("no grouped results")?;
    let tags: Vec<&String> = groups.keys().collect();
    ensure!(tags == ["en", "fr"], "groups {tags:?}");
    ensure!(groups.values().all(|g| !g.is_empty()), "an empty group was returned");
    Ok("groups en, fr".into())
}

fn language_detection() -> Outcome {
    let (train, dev) = langdetect_split(4242, 200, 100);
    ensure!(dev.len() == 1300, "dev set has {} samples", dev.len());
    let model = LangDetectModel::train(train.iter().map(|(t, s)| (*t, s.as_str()))).unwrap();
    let correct = dev.iter().filter(|(t, s)| model.detect(s).tag == *t).count();
    let accuracy = correct as f64 / dev.len() as f64;
    ensure!(accuracy >= 0.90, "accuracy {accuracy:.4}");
    Ok(format!("accuracy {accuracy:.4} ({correct}/1300)"))
}

/// A built index and a `serve` process over it, shared by the API checks.
struct Served {
    _root: tempfile::TempDir,
    index: PathBuf,
    base: String,
    child: Child,
    docs: Vec<FixtureDoc>,
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn sweep_corpus() -> Vec<FixtureDoc> {
    let mut docs = generate_corpus(&CorpusConfig {
        seed: 90,
        docs_per_tag: 24,
        ..Default::default()
    });
    let mut r = rng(91);
    for (i, p) in planted(92, 10).into_iter().enumerate() {
        let tag = TAGS[i % TAGS.len()];
        let n = r.gen_range(30..200);
        let text = format!(
            "{} {} {}",
            random_text(&mut r, tag, n),
            p.text,
            random_text(&mut r, tag, n)
        );
        docs.push(FixtureDoc::new("contacts", &format!("c{i:03}"), tag, text));
    }
    docs
}

fn serve() -> Served {
    let root = tempfile::tempdir().unwrap();
    let corpus = root.path().join("corpus");
    let index = root.path().join("index");
    let docs = sweep_corpus();
    write_corpus(&corpus, &docs).unwrap();
    let status = Command::new(BIN)
        .arg("build")
        .arg(&corpus)
        .arg(&index)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "build exited with {status}");
    let mut child = Command::new(BIN)
        .args(["serve", "--port", "0", "-i"])
        .arg(&index)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let base = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected serve output {line:?}"))
        .to_string();
    Served {
        _root: root,
        index,
        base,
        child,
        docs,
    }
}

#[derive(Debug, Clone)]
struct Params {
    q: String,
    lang: Option<String>,
    k: Option<String>,
    page: Option<String>,
    exclude: Option<String>,
}

impl Params {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("q", self.q.clone())];
        for (key, v) in [
            ("lang", &self.lang),
            ("k", &self.k),
            ("page", &self.page),
            ("exclude", &self.exclude),
        ] {
            if let Some(v) = v {
                out.push((key, v.clone()));
            }
        }
        out
    }
}

fn random_params<R: Rng>(r: &mut R, docs: &[FixtureDoc]) -> Params {
    let doc = docs.choose(r).unwrap();
    let exact = r.gen_bool(0.5);
    let q = if exact {
        let words: Vec<&str> = doc.text.split_whitespace().collect();
        let a = r.gen_range(0..words.len());
        let b = (a + r.gen_range(1..4)).min(words.len());
        let mut phrase = words[a..b].join(" ");
        if r.gen_bool(0.3) {
            phrase = char_slice(r, &phrase, 8);
        }
        if phrase.trim().is_empty() {
            phrase = words[a].to_string();
        }
        format!("\"{phrase}\"")
    } else {
        let n = r.gen_range(1..5);
        random_text(r, &doc.language_tag, n)
    };
    let lang = match r.gen_range(0..5) {
        0 => None,
        1 => Some("all".to_string()),
        2 => Some(if r.gen_bool(0.5) { "detect" } else { "auto" }.to_string()),
        _ => Some(doc.language_tag.clone()),
    };
    let k = r.gen_bool(0.7).then(|| r.gen_range(1..=100).to_string());
    let page = (exact && r.gen_bool(0.5)).then(|| r.gen_range(0..3).to_string());
    let exclude = r.gen_bool(0.3).then(|| {
        let others: Vec<&str> = docs
            .iter()
            .map(|d| d.dataset_name.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n = r.gen_range(1..=3);
        others.choose_multiple(r, n).copied().collect::<Vec<_>>().join(",")
    });
    Params {
        q,
        lang,
        k,
        page,
        exclude,
    }
}

fn http_search(client: &reqwest::blocking::Client, base: &str, p: &Params) -> Result<(u16, Value), String> {
    let resp = client
        .get(format!("{base}/v1/search"))
        .query(&p.pairs())
        .send()
        .map_err(|e| format!("request failed: {e}"))?;
    let status = resp.status().as_u16();
    let body: Value = resp.json().map_err(|e| format!("bad body: {e}"))?;
    Ok((status, body))
}

const RESPONSE_KEYS: [&str; 9] = [
    "index_build_id",
    "mode",
    "query",
    "results",
    "results_by_language",
    "total_matches",
    "detected_language",
    "page",
    "page_token",
];
const ITEM_KEYS: [&str; 7] = [
    "result_id",
    "text",
    "language_tag",
    "source_url",
    "redactions",
    "score",
    "rank",
];

fn check_item(item: &Value, bound: usize) -> Result<(), String> {
    let obj = item.as_object().ok_or("result is not an object")?;
    for key in obj.keys() {
        ensure!(ITEM_KEYS.contains(&key.as_str()), "unexpected result field {key:?}");
    }
    let text = obj.get("text").and_then(Value::as_str).ok_or("result without text")?;
    let words = text.split_whitespace().count();
    ensure!(words <= bound, "{words} words > {bound}: {text:?}");
    let again = redact_default(text);
    ensure!(again.spans.is_empty(), "unredacted text {text:?}");
    Ok(())
}

fn controlled_access(served: &Served) -> Outcome {
    let client = reqwest::blocking::Client::new();
    let mut r = rng(1000);
    let mut checked = 0;
    let mut snippets = 0;
    let mut redacted = 0;
    while checked < 1000 {
        let p = random_params(&mut r, &served.docs);
        let (status, body) = http_search(&client, &served.base, &p)?;
        ensure!(status == 200, "{p:?}: status {status} {body}");
        let obj = body.as_object().ok_or("response is not an object")?;
        for key in obj.keys() {
            ensure!(
                RESPONSE_KEYS.contains(&key.as_str()),
                "unexpected response field {key:?}"
            );
        }
        let bound = match obj["mode"].as_str() {
            Some("exact") => {
                let inner = &p.q[1..p.q.len() - 1];
                2 * CONTEXT_WORDS + inner.split_whitespace().count().max(1)
            }
            _ => FUZZY_WORD_BOUND,
        };
        let mut items: Vec<&Value> = obj["results"].as_array().ok_or("results missing")?.iter().collect();
        if let Some(groups) = obj.get("results_by_language").and_then(Value::as_object) {
            items.extend(groups.values().filter_map(Value::as_array).flatten());
        }
        for item in items {
            check_item(item, bound).map_err(|e| format!("{p:?}: {e}"))?;
            snippets += 1;
            if item["redactions"].as_array().is_some_and(|a| !a.is_empty()) {
                redacted += 1;
            }
        }
        checked += 1;
    }
    ensure!(redacted > 0, "the sweep never met a redacted snippet");
    Ok(format!(
        "{checked} responses, {snippets} snippets, {redacted} carrying redactions"
    ))
}

fn cli_search(index: &Path, p: &Params) -> Result<(i32, Option<Value>), String> {
    let mut cmd = Command::new(BIN);
    cmd.args(["search", "--json", "-i"]).arg(index);
    if let Some(v) = &p.lang {
        cmd.args(["--lang", v]);
    }
    if let Some(v) = &p.k {
        cmd.args(["--k", v]);
    }
    if let Some(v) = &p.page {
        cmd.args(["--page", v]);
    }
    if let Some(v) = &p.exclude {
        cmd.args(["--exclude", v]);
    }
    cmd.arg("--").arg(&p.q);
    let out = cmd.output().map_err(|e| e.to_string())?;
    let code = out.status.code().unwrap_or(-1);
    if code != 0 {
        return Ok((code, None));
    }
    let body = serde_json::from_slice(&out.stdout).map_err(|e| format!("cli output is not JSON: {e}"))?;
    Ok((code, Some(body)))
}

fn cli_http_parity(served: &Served) -> Outcome {
    let client = reqwest::blocking::Client::new();
    let mut r = rng(2000);
    let mut nonempty = 0;
    for i in 0..100 {
        let mut p = random_params(&mut r, &served.docs);
        if i % 10 == 9 {
            // invalid sets must fail the same way on both surfaces
            p.k = Some("0".into());
        }
        let (status, body) = http_search(&client, &served.base, &p)?;
        let (code, cli) = cli_search(&served.index, &p)?;
        match cli {
            Some(cli) => {
                ensure!(status == 200, "{p:?}: CLI succeeded, HTTP status {status}");
                ensure!(cli == body, "{p:?}: responses differ\ncli:  {cli}\nhttp: {body}");
                if cli["results"].as_array().is_some_and(|a| !a.is_empty()) || cli.get("results_by_language").is_some()
                {
                    nonempty += 1;
                }
            }
            None => ensure!(
                code == 1 && status == 400,
                "{p:?}: CLI exit {code}, HTTP status {status}"
            ),
        }
    }
    Ok(format!("100 parameter sets, {nonempty} with results"))
}

fn run(name: &str, failed: &mut usize, f: impl FnOnce() -> Outcome) {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
        Err(detail) => {
            *failed += 1;
            println!("FAIL  {name} ({secs:.1}s): {detail}");
        }
    }
}

fn main() -> ExitCode {
    let standalone: [Check<fn() -> Outcome>; 10] = [
        ("bm25 oracle equivalence", bm25_oracle),
        ("bm25 hand-check score", hand_check_score),
        ("suffix array correctness", suffix_array_correctness),
        ("exact match case and punctuation", exactness_semantics),
        ("segmentation property", segmentation_property),
        ("result id round trip", result_id_round_trip),
        ("pii redaction", pii_redaction),
        ("exact pagination", exact_pagination),
        ("fuzzy all-language grouping", fuzzy_all_grouping),
        ("language detection accuracy", language_detection),
    ];
    let mut failed = 0;
    for (name, f) in standalone {
        run(name, &mut failed, f);
    }

    let served = catch_unwind(serve).map_err(|e| {
        e.downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default()
    });
    let over_http: [Check<ServedCheck>; 2] = [
        ("controlled access sweep", controlled_access),
        ("cli/http parity", cli_http_parity),
    ];
    for (name, f) in over_http {
        match &served {
            Ok(s) => run(name, &mut failed, || f(s)),
            Err(msg) => run(name, &mut failed, || Err(format!("server did not start: {msg}"))),
        }
    }

    println!("{} of 12 criteria passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
