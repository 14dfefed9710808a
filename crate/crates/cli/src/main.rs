use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use corpus_search::analysis::Analyzers;
use corpus_search::bm25::Bm25Params;
use corpus_search::exact::BuildLimits;
use corpus_search::pii::PiiRuleSet;
use corpus_search::segment::SegmentationConfig;
use corpus_search::service::{
    Mode, ResultItem, SearchRequest, SearchResponse, SearchService, ServiceConfig, ServiceError,
};
use corpus_search::store::{self, BuildOptions, FailureClass, Manifest, StoreError};

/// Build, query and serve snippet-search indices over text corpora.
#[derive(Parser, Debug)]
#[command(name = "corpus-search", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Index a directory of line-delimited JSON records.
    Build(BuildArgs),
    /// Run one query against a built index.
    Search(SearchArgs),
    /// Serve the /v1 HTTP API.
    Serve(ServeArgs),
    /// Print the per-language summary of a built index.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct BuildArgs {
    corpus_dir: PathBuf,
    index_dir: PathBuf,
    /// Only build fuzzy indices for these tags (comma separated).
    #[arg(long, value_delimiter = ',')]
    languages: Option<Vec<String>>,
    #[arg(long, default_value_t = 128)]
    max_words: usize,
    #[arg(long, default_value = "w128")]
    seg_label: String,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    /// Refuse to build a suffix array over more bytes than this.
    #[arg(long)]
    max_corpus_bytes: Option<u64>,
    /// Replace a stopword list, as LIST=PATH (repeatable).
    #[arg(long = "stopwords", value_name = "LIST=PATH")]
    stopwords: Vec<String>,
}

#[derive(Args, Debug, Clone)]
struct QueryOptions {
    /// Words of context on each side of an exact match.
    #[arg(long, default_value_t = corpus_search::service::DEFAULT_CONTEXT_WORDS)]
    context_words: usize,
    /// Largest accepted k.
    #[arg(long, default_value_t = corpus_search::service::DEFAULT_MAX_RESULTS_CAP)]
    max_k: usize,
    /// Rule file replacing the built-in PII patterns.
    #[arg(long)]
    pii_rules: Option<PathBuf>,
    /// BM25 k1 at query time (defaults to the value the index was built with).
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long, short = 'i', env = "CORPUS_SEARCH_INDEX")]
    index: PathBuf,
    /// Query text; wrap it in double quotes for exact mode.
    query: String,
    /// A language tag, `all` or `detect`.
    #[arg(long)]
    lang: Option<String>,
    #[arg(short = 'k', long = "k")]
    k: Option<String>,
    #[arg(long)]
    page: Option<String>,
    /// Datasets to leave out (comma separated).
    #[arg(long)]
    exclude: Option<String>,
    /// Print the response exactly as the HTTP API returns it.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    opts: QueryOptions,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, short = 'i', env = "CORPUS_SEARCH_INDEX")]
    index: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Append-only flag log (defaults to flags.jsonl in the index directory).
    #[arg(long)]
    flag_log: Option<PathBuf>,
    #[command(flatten)]
    opts: QueryOptions,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, short = 'i', env = "CORPUS_SEARCH_INDEX")]
    index: PathBuf,
    #[arg(long)]
    json: bool,
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(class: FailureClass, message: impl ToString) -> Self {
        let code = match class {
            FailureClass::Validation => 1,
            FailureClass::Io => 2,
            FailureClass::Resource => 3,
        };
        Failure {
            code,
            message: message.to_string(),
        }
    }

    fn validation(message: impl ToString) -> Self {
        Self::new(FailureClass::Validation, message)
    }

    fn io(message: impl ToString) -> Self {
        Self::new(FailureClass::Io, message)
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::new(e.class(), e)
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Validation(_) => Failure::validation(e),
            ServiceError::FlagLog(_) => Failure::io(e),
            ServiceError::Store(s) => s.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let default_level = match cli.command {
        Command::Search(_) | Command::Stats(_) => "warn",
        _ => "info",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();

    let result = match cli.command {
        Command::Build(a) => build(a),
        Command::Search(a) => search(a),
        Command::Serve(a) => serve(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn build(a: BuildArgs) -> Result<(), Failure> {
    if !a.corpus_dir.exists() {
        return Err(Failure::io(format!(
            "corpus path {} does not exist",
            a.corpus_dir.display()
        )));
    }
    let segmentation = SegmentationConfig::new(a.max_words, a.seg_label).map_err(Failure::validation)?;
    let params = Bm25Params::new(a.k1, a.b).map_err(Failure::validation)?;
    let mut analyzers = Analyzers::builtin();
    for spec in &a.stopwords {
        let (id, path) = spec
            .split_once('=')
            .ok_or_else(|| Failure::validation(format!("--stopwords expects LIST=PATH, got {spec:?}")))?;
        analyzers.load_stopwords(id, path).map_err(Failure::io)?;
    }
    let mut limits = BuildLimits::default();
    if let Some(max) = a.max_corpus_bytes {
        limits.max_corpus_bytes = max;
    }
    let opts = BuildOptions {
        languages: a.languages,
        limits,
        segmentation,
        params,
        analyzers,
    };
    let manifest = store::build_atomic(&a.corpus_dir, &a.index_dir, &opts)?;
    if manifest.skipped_lines > 0 {
        eprintln!("warning: skipped {} malformed lines", manifest.skipped_lines);
    }
    print!("{}", manifest.render_table());
    Ok(())
}

fn require_index(dir: &Path) -> Result<(), Failure> {
    if !dir.join(store::MANIFEST_FILE).is_file() {
        return Err(Failure::io(format!("no index at {}", dir.display())));
    }
    Ok(())
}

fn service_config(index: &Path, opts: &QueryOptions, flag_log: Option<PathBuf>) -> Result<ServiceConfig, Failure> {
    let manifest = Manifest::load(index)?;
    let base = manifest.bm25_params;
    let params = Bm25Params::new(opts.k1.unwrap_or(base.k1), opts.b.unwrap_or(base.b)).map_err(Failure::validation)?;
    let pii_rules = match &opts.pii_rules {
        Some(p) => PiiRuleSet::load(p).map_err(Failure::validation)?,
        None => PiiRuleSet::default(),
    };
    if opts.max_k == 0 {
        return Err(Failure::validation("--max-k must be at least 1"));
    }
    Ok(ServiceConfig {
        context_words: opts.context_words,
        params,
        max_results_cap: opts.max_k,
        flag_log,
        pii_rules,
    })
}

fn search(a: SearchArgs) -> Result<(), Failure> {
    require_index(&a.index)?;
    let config = service_config(&a.index, &a.opts, None)?;
    let service = SearchService::open(&a.index, config)?;
    let req = SearchRequest {
        q: Some(a.query),
        lang: a.lang,
        k: a.k,
        page: a.page,
        exclude: a.exclude,
    };
    let resp = service.search(&req)?;
    if a.json {
        println!("{}", serde_json::to_string(&resp).expect("response serializes"));
    } else {
        print_response(&resp);
    }
    Ok(())
}

fn print_item(item: &ResultItem) {
    let s = &item.snippet;
    match (item.score, item.rank) {
        (Some(score), _) => println!("{score:.4}  {}", s.result_id),
        (_, Some(_)) => println!("{}", s.result_id),
        _ => println!("{}", s.result_id),
    }
    if let Some(url) = &s.source_url {
        println!("  source: {url}");
    }
    println!("  {}", s.text);
}

fn print_response(resp: &SearchResponse) {
    if resp.mode == Mode::Exact {
        println!(
            "{} total matches, page {}",
            resp.total_matches.unwrap_or(0),
            resp.page.unwrap_or(0)
        );
    }
    if let Some(d) = &resp.detected_language {
        println!("detected language: {} (confidence {:.2})", d.tag, d.confidence);
    }
    match &resp.results_by_language {
        Some(groups) => {
            if groups.is_empty() {
                println!("no results");
            }
            for (tag, items) in groups {
                println!("== {tag} ==");
                items.iter().for_each(print_item);
            }
        }
        None => {
            if resp.results.is_empty() {
                println!("no results");
            }
            resp.results.iter().for_each(print_item);
        }
    }
    if let Some(next) = &resp.page_token {
        println!("more results: --page {next}");
    }
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    require_index(&a.index)?;
    let config = service_config(&a.index, &a.opts, a.flag_log)?;
    let service = Arc::new(SearchService::open(&a.index, config)?);
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Failure::validation(format!("bad listen address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::io)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::io(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(Failure::io)?;
        println!("listening on http://{local}");
        log::info!("serving build {} on {local}", service.build_id());
        corpus_search::http::serve(listener, service, corpus_search::http::shutdown_signal())
            .await
            .map_err(Failure::io)
    })
}

fn stats(a: StatsArgs) -> Result<(), Failure> {
    require_index(&a.index)?;
    let manifest = Manifest::load(&a.index)?;
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&manifest.stats).expect("stats serialize")
        );
    } else {
        print!("{}", manifest.render_table());
    }
    Ok(())
}
