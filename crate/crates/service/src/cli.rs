//! Command-line entry points. Each subcommand is a thin wrapper over
//! [`Service`] or the core library.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use searchgym_core::bench::{
    cost_sweep, generate_synthetic, read_queries, run_bench, slot_filter, SyntheticSpec,
    DEFAULT_KS,
};
use searchgym_core::config::{hash, validate_node, AppConfig, ConfigNode};
use searchgym_core::embed::{ChunkingStrategy, EmbedderConfig, Metric, VectorSetConfig};
use searchgym_core::fusion::FusionConfig;
use searchgym_core::inverted::Filter;
use searchgym_core::router::{PlanKind, RouterConfig, SearchMode, SearchRequest};
use searchgym_core::state::{CheckpointStore, DEFAULT_STORE, STORE_ENV};
use searchgym_core::vindex::VectorIndexConfig;
use searchgym_core::Violation;
use serde::Serialize;

use crate::api::{self, BIND_ENV, DEFAULT_BIND};
use crate::ops::{parse_config, Service};

const SWEEP_SELECTIVITIES: [f64; 7] = [0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0];

#[derive(Parser)]
#[command(name = "searchgym", version, about = "Declarative hybrid search: configs, checkpoints, search and benchmarks")]
struct Cli {
    /// Checkpoint store root.
    #[arg(long, global = true, env = STORE_ENV, default_value = DEFAULT_STORE)]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a JSONL corpus as the checkpoint of a dataset config.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Hash, validate or store config files.
    #[command(subcommand)]
    Config(ConfigCommand),
    /// Activate an app, building or reusing its checkpoints.
    Activate(AppArg),
    /// Run one query; hits are printed as JSONL, the plan and counters go to stderr.
    Search(SearchArgs),
    /// Switch an app's active vector set.
    Swap {
        #[command(flatten)]
        app: AppArg,
        #[arg(long)]
        vectorset: String,
    },
    /// Top-k retrieval rates over a query file.
    Bench {
        #[command(flatten)]
        app: AppArg,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
        ks: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Mode::Semantic)]
        mode: Mode,
        /// Report file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus, planted queries and matching configs.
    Generate(GenerateArgs),
    /// PreFilter vs PostFilter cost across filter selectivities.
    Sweep {
        #[command(flatten)]
        app: AppArg,
        /// Query file; only the query texts are used.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_SELECTIVITIES)]
        selectivities: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Delete checkpoints not reachable from the given app hashes.
    Gc {
        #[arg(long = "keep")]
        keep: Vec<String>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = BIND_ENV, default_value = DEFAULT_BIND)]
        bind: String,
    },
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Print the content hash of a config file.
    Hash { path: PathBuf },
    /// Print violations; exit 1 if there are any.
    Validate { path: PathBuf },
    /// Validate and store a config, printing its hash.
    Put { path: PathBuf },
    /// Print a stored config.
    Show { hash: String },
    /// List stored configs.
    List,
}

#[derive(Args)]
struct AppArg {
    /// App config hash.
    #[arg(long = "app")]
    app: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Semantic,
    Keyword,
    Auto,
    Hybrid,
}

impl From<Mode> for SearchMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Semantic => SearchMode::Semantic,
            Mode::Keyword => SearchMode::Keyword,
            Mode::Auto => SearchMode::Auto,
            Mode::Hybrid => SearchMode::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Plan {
    Unfiltered,
    Pre,
    Post,
    Lexical,
}

impl From<Plan> for PlanKind {
    fn from(p: Plan) -> Self {
        match p {
            Plan::Unfiltered => PlanKind::Unfiltered,
            Plan::Pre => PlanKind::PreFilter,
            Plan::Post => PlanKind::PostFilter,
            Plan::Lexical => PlanKind::Lexical,
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    app: AppArg,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Filter as JSON, or @path to a file holding it.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    mode: Mode,
    /// Force a plan instead of letting the router choose.
    #[arg(long, value_enum)]
    plan: Option<Plan>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    docs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Planted `tag` selectivities, e.g. 0.01,0.1.
    #[arg(long, value_delimiter = ',')]
    tags: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
    /// Use an IVF index in the generated app config.
    #[arg(long)]
    ivf: bool,
}

/// Marks a failure as bad input (exit 1) rather than a runtime error.
#[derive(Debug)]
struct Invalid;

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("validation failed")
    }
}

impl std::error::Error for Invalid {}

fn exit_code(e: &anyhow::Error) -> i32 {
    let invalid = e.chain().any(|c| {
        c.is::<Invalid>() || c.downcast_ref::<searchgym_core::Error>().is_some_and(searchgym_core::Error::is_validation)
    });
    if invalid {
        1
    } else {
        2
    }
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 ok, 1 validation failure, 2 runtime or usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            if let Some(searchgym_core::Error::Violations(v)) = e.downcast_ref::<searchgym_core::Error>() {
                print_violations(v);
            }
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn print_violations(v: &[Violation]) {
    for v in v {
        eprintln!("violation {}: {v}", v.code());
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Reads a config file. `name@latest` refs are resolved against the store,
/// which is only opened when the file uses them.
fn read_config(path: &Path, store: &Path) -> anyhow::Result<ConfigNode> {
    let bytes = read(path)?;
    let needs_store = String::from_utf8_lossy(&bytes).contains("@latest");
    let store = if needs_store { Some(CheckpointStore::open(store)?) } else { None };
    Ok(parse_config(&bytes, store.as_ref())?)
}

fn load_queries(path: &Path) -> anyhow::Result<Vec<searchgym_core::bench::BenchQuery>> {
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let (queries, skipped) = read_queries(BufReader::new(file))?;
    for s in &skipped {
        eprintln!("skipped query line {}: {}", s.line, s.error);
    }
    Ok(queries)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let store_root = cli.store;
    let service = || -> anyhow::Result<Service> { Ok(Service::new(CheckpointStore::open(&store_root)?)) };
    match cli.command {
        Command::Config(ConfigCommand::Hash { path }) => {
            println!("{}", hash(&read_config(&path, &store_root)?)?);
        }
        Command::Config(ConfigCommand::Validate { path }) => {
            let node = read_config(&path, &store_root)?;
            let store = CheckpointStore::open(&store_root)?;
            let violations = validate_node(&node, &store);
            if !violations.is_empty() {
                print_violations(&violations);
                return Err(Invalid.into());
            }
            println!("ok {} {}", node.kind().as_str(), hash(&node)?);
        }
        Command::Config(ConfigCommand::Put { path }) => {
            let node = read_config(&path, &store_root)?;
            println!("{}", CheckpointStore::open(&store_root)?.put_config(&node)?);
        }
        Command::Config(ConfigCommand::Show { hash }) => print_json(&service()?.get_config(&hash)?)?,
        Command::Config(ConfigCommand::List) => {
            for e in CheckpointStore::open(&store_root)?.list_configs()? {
                println!("{} {} {}", e.hash, e.kind.as_str(), e.name);
            }
        }
        Command::Ingest { config, input } => {
            let ConfigNode::Dataset(cfg) = read_config(&config, &store_root)? else {
                bail!(Invalid);
            };
            let store = CheckpointStore::open(&store_root)?;
            let (hash, snapshot, report) = store.ingest(&cfg, &input)?;
            for r in &snapshot.rejects {
                eprintln!("rejected line {}: {}", r.line, serde_json::to_string(&r.violations)?);
            }
            print_json(&serde_json::json!({
                "hash": hash,
                "outcome": report.outcome,
                "count": snapshot.count(),
                "rejected": snapshot.rejects.len(),
            }))?;
        }
        Command::Activate(AppArg { app }) => print_json(&service()?.activate(&app)?)?,
        Command::Swap { app, vectorset } => print_json(&service()?.swap(&app.app, &vectorset)?)?,
        Command::Search(args) => search(&service()?, args)?,
        Command::Bench { app, queries, ks, mode, out } => {
            let svc = service()?;
            let queries = load_queries(&queries)?;
            let report = run_bench(&*svc.app(&app.app)?, &queries, &ks, mode.into());
            for (k, r) in &report.rates {
                eprintln!("rate@{k} = {r:.4}");
            }
            match out {
                Some(path) => write_json(&path, &report)?,
                None => print_json(&report)?,
            }
        }
        Command::Generate(args) => generate(&args)?,
        Command::Sweep { app, queries, selectivities, k, repetitions, csv, out } => {
            let svc = service()?;
            let app = svc.app(&app.app)?;
            if !app.structured().validate(&slot_filter(1, 1.0)).is_empty() {
                bail!("sweep needs an integer `slot` field holding a permutation of 0..n, as in generated corpora");
            }
            let texts: Vec<String> = load_queries(&queries)?.into_iter().map(|q| q.text).collect();
            let n = app.docs().len();
            let table = cost_sweep(&app, &texts, &selectivities, k, repetitions, &|s| slot_filter(n, s))?;
            match table.crossover {
                Some(s) => eprintln!("crossover at s = {s}"),
                None => eprintln!("no crossover within the sweep"),
            }
            if let Some(path) = csv {
                std::fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            match out {
                Some(path) => write_json(&path, &table.to_json())?,
                None => print_json(&table.to_json())?,
            }
        }
        Command::Gc { keep } => {
            let store = CheckpointStore::open(&store_root)?;
            let keep = keep
                .iter()
                .map(|h| searchgym_core::config::ConfigHash::parse(h))
                .collect::<Result<_, _>>()?;
            for h in store.gc(&keep)? {
                println!("{h}");
            }
        }
        Command::Serve { bind } => {
            let svc = Arc::new(service()?);
            tokio::runtime::Runtime::new()?.block_on(api::serve(svc, &bind))?;
        }
    }
    Ok(())
}

fn search(svc: &Service, args: SearchArgs) -> anyhow::Result<()> {
    let filter: Option<Filter> = match &args.filter {
        None => None,
        Some(text) => {
            let raw = match text.strip_prefix('@') {
                Some(path) => read(Path::new(path))?,
                None => text.clone().into_bytes(),
            };
            Some(
                serde_json::from_slice(&raw)
                    .map_err(|e| searchgym_core::Error::Violations(vec![Violation::Malformed(e.to_string())]))?,
            )
        }
    };
    let req = SearchRequest {
        query_text: args.query,
        filter,
        k: args.k,
        mode: args.mode.into(),
    };
    let resp = svc.search(&args.app.app, &req, args.plan.map(Into::into))?;
    let mut out = std::io::stdout().lock();
    for hit in &resp.hits {
        serde_json::to_writer(&mut out, hit)?;
        writeln!(out)?;
    }
    eprintln!(
        "{}",
        serde_json::json!({ "vectorset": resp.vectorset, "plan": resp.plan, "counters": resp.counters })
    );
    Ok(())
}

fn generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        n_docs: args.docs,
        n_tags: 8,
        tag_selectivities: args.tags.clone(),
        seed: args.seed,
        n_queries: args.queries,
        dim: args.dim,
        embed_seed: args.embed_seed,
    };
    let corpus = generate_synthetic(&spec)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    let dataset = corpus.dataset.clone();
    let dataset_ref = format!("{}@latest", dataset.name);
    let vectorset = serde_json::json!({
        "kind": "vectorset",
        "body": VectorSetConfig {
            name: "body".into(),
            dataset: hash(&ConfigNode::Dataset(dataset.clone()))?,
            channel: "body".into(),
            chunking: ChunkingStrategy::WholeDocument,
            embedder: EmbedderConfig::Hashing { dim: args.dim, seed: args.embed_seed },
            metric: Metric::Cosine,
        },
    });
    let mut vectorset_file = vectorset.clone();
    vectorset_file["body"]["dataset"] = dataset_ref.clone().into();
    let vs_node: ConfigNode = serde_json::from_value(vectorset)?;
    let app = AppConfig {
        name: "synthetic".into(),
        dataset: hash(&ConfigNode::Dataset(dataset.clone()))?,
        vectorsets: vec![hash(&vs_node)?],
        active_vectorset: "body".into(),
        vector_index: if args.ivf { VectorIndexConfig::ivf() } else { VectorIndexConfig::default() },
        lexical_channel: Some("body".into()),
        router: RouterConfig::default(),
        fusion: FusionConfig::default(),
    };
    let mut app_file = serde_json::to_value(ConfigNode::App(app))?;
    app_file["body"]["dataset"] = dataset_ref.into();
    app_file["body"]["vectorsets"] = serde_json::json!(["body@latest"]);

    write_json(&dir.join("dataset.json"), &ConfigNode::Dataset(dataset))?;
    write_json(&dir.join("vectorset.json"), &vectorset_file)?;
    write_json(&dir.join("app.json"), &app_file)?;
    std::fs::write(dir.join("corpus.jsonl"), corpus.corpus_jsonl())?;
    std::fs::write(dir.join("queries.jsonl"), corpus.queries_jsonl())?;
    eprintln!(
        "wrote {} documents and {} queries to {}",
        corpus.documents.len(),
        corpus.queries.len(),
        dir.display()
    );
    Ok(())
}
