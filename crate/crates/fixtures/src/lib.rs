//! Seeded synthetic corpora and brute-force reference implementations used
//! by the test suites.
//!
//! Nothing here depends on the search crate; the oracles work on plain
//! strings and token lists so they stay independent of the code under test.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod oracle;
pub mod pii;

/// Index tags in registry order.
pub const TAGS: [&str; 13] = [
    "zh",
    "indic",
    "en",
    "es",
    "fr",
    "vi",
    "pt",
    "code",
    "ar",
    "id",
    "ca",
    "eu",
    "nigercongo",
];

const VOCAB_FILES: [(&str, &str); 13] = [
    ("zh", include_str!("../vocab/zh.txt")),
    ("indic", include_str!("../vocab/indic.txt")),
    ("en", include_str!("../vocab/en.txt")),
    ("es", include_str!("../vocab/es.txt")),
    ("fr", include_str!("../vocab/fr.txt")),
    ("vi", include_str!("../vocab/vi.txt")),
    ("pt", include_str!("../vocab/pt.txt")),
    ("code", include_str!("../vocab/code.txt")),
    ("ar", include_str!("../vocab/ar.txt")),
    ("id", include_str!("../vocab/id.txt")),
    ("ca", include_str!("../vocab/ca.txt")),
    ("eu", include_str!("../vocab/eu.txt")),
    ("nigercongo", include_str!("../vocab/nigercongo.txt")),
];

static VOCAB: LazyLock<HashMap<&'static str, Vec<&'static str>>> = LazyLock::new(|| {
    VOCAB_FILES
        .iter()
        .map(|&(tag, body)| (tag, body.lines().map(str::trim).filter(|l| !l.is_empty()).collect()))
        .collect()
});

/// Word list for an index tag. Panics on an unknown tag.
pub fn vocab(tag: &str) -> &'static [&'static str] {
    VOCAB.get(tag).unwrap_or_else(|| panic!("no vocabulary for {tag}"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `words` vocabulary words of `tag`, space separated. Frequent words are
/// drawn more often (roughly Zipfian) so term statistics look like text.
pub fn random_text<R: Rng>(rng: &mut R, tag: &str, words: usize) -> String {
    let v = vocab(tag);
    let mut out = String::new();
    for i in 0..words {
        if i > 0 {
            out.push(' ');
        }
        // square of a uniform draw skews toward the head of the list
        let u: f64 = rng.gen();
        let idx = ((u * u) * v.len() as f64) as usize;
        out.push_str(v[idx.min(v.len() - 1)]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureDoc {
    pub dataset_name: String,
    pub doc_id: String,
    pub language_tag: String,
    pub text: String,
    pub source_url: Option<String>,
}

impl FixtureDoc {
    pub fn new(dataset: &str, doc_id: &str, tag: &str, text: impl Into<String>) -> Self {
        FixtureDoc {
            dataset_name: dataset.to_string(),
            doc_id: doc_id.to_string(),
            language_tag: tag.to_string(),
            text: text.into(),
            source_url: None,
        }
    }

    pub fn json_line(&self) -> String {
        let mut v = serde_json::json!({
            "text": self.text,
            "dataset_name": self.dataset_name,
            "doc_id": self.doc_id,
            "language_tag": self.language_tag,
        });
        if let Some(url) = &self.source_url {
            v["source_url"] = serde_json::Value::String(url.clone());
        }
        v.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub seed: u64,
    pub tags: Vec<&'static str>,
    pub docs_per_tag: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Dataset names are `<tag>_<name>` for each entry.
    pub datasets: Vec<&'static str>,
    /// Share of documents carrying a source URL.
    pub source_url_ratio: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 7,
            tags: TAGS.to_vec(),
            docs_per_tag: 20,
            min_words: 5,
            max_words: 300,
            datasets: vec!["web", "wiki", "books"],
            source_url_ratio: 0.5,
        }
    }
}

pub fn generate_corpus(cfg: &CorpusConfig) -> Vec<FixtureDoc> {
    let mut rng = rng(cfg.seed);
    let mut docs = Vec::new();
    for tag in &cfg.tags {
        for i in 0..cfg.docs_per_tag {
            let dataset = format!("{tag}_{}", cfg.datasets[i % cfg.datasets.len()]);
            let words = rng.gen_range(cfg.min_words..=cfg.max_words);
            let mut doc = FixtureDoc::new(&dataset, &format!("doc{i:05}"), tag, random_text(&mut rng, tag, words));
            if rng.gen_bool(cfg.source_url_ratio) {
                doc.source_url = Some(format!("https://example.org/{dataset}/{i}"));
            }
            docs.push(doc);
        }
    }
    docs
}

/// Mixed-language documents until the text reaches `target_bytes`.
pub fn corpus_of_size(seed: u64, target_bytes: usize) -> Vec<FixtureDoc> {
    let mut rng = rng(seed);
    let mut docs = Vec::new();
    let mut total = 0;
    while total < target_bytes {
        let tag = TAGS[rng.gen_range(0..TAGS.len())];
        let words = rng.gen_range(20..400);
        let doc = FixtureDoc::new(
            &format!("{tag}_mix"),
            &format!("d{}", docs.len()),
            tag,
            random_text(&mut rng, tag, words),
        );
        total += doc.text.len() + 1;
        docs.push(doc);
    }
    docs
}

/// Writes one line-delimited file per dataset under `dir`.
pub fn write_corpus(dir: &Path, docs: &[FixtureDoc]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut files: HashMap<String, std::io::BufWriter<std::fs::File>> = HashMap::new();
    for d in docs {
        let name = format!("{}.jsonl", d.dataset_name.replace('/', "__"));
        let f = match files.entry(name) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let file = std::fs::File::create(dir.join(e.key()))?;
                e.insert(std::io::BufWriter::new(file))
            }
        };
        writeln!(f, "{}", d.json_line())?;
    }
    for f in files.values_mut() {
        f.flush()?;
    }
    Ok(())
}

/// `(tag, text)` pairs.
pub type Samples = Vec<(&'static str, String)>;

/// Training and held-out samples for language identification, drawn from
/// disjoint seeds. Dev samples are 4 to 24 words long.
pub fn langdetect_split(seed: u64, train_per_tag: usize, dev_per_tag: usize) -> (Samples, Samples) {
    let mut train_rng = rng(seed);
    let mut dev_rng = rng(seed ^ 0x005e_ed0f_de75);
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for tag in TAGS {
        for _ in 0..train_per_tag {
            let n = train_rng.gen_range(20..=128);
            train.push((tag, random_text(&mut train_rng, tag, n)));
        }
        for _ in 0..dev_per_tag {
            let n = dev_rng.gen_range(4..=24);
            dev.push((tag, random_text(&mut dev_rng, tag, n)));
        }
    }
    (train, dev)
}

/// Picks `n` distinct items.
pub fn sample<'a, T, R: Rng>(rng: &mut R, items: &'a [T], n: usize) -> Vec<&'a T> {
    items.choose_multiple(rng, n).collect()
}
