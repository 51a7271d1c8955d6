use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use clausewise_core::annotator::AnnotatorBackend;
use clausewise_core::evalkit::{
    compare_distributions, evaluate_corpus, load_corpus, run_ablations, EvalContext, F1Row, F1Table, LevelCounts,
    UnconstrainedAnnotator, Variant,
};
use clausewise_core::ingestion::{discover_policy_url, CuratedPolicyMap, Fetcher};
use clausewise_core::{PolicyDocument, RiskLevel};
use clausewise_service::config::{BackendKind, Config, CONFIG_ENV};
use clausewise_service::pipeline::{content_type_for, AnalyzeInput, Analyzer, Backends, LOCAL_DOMAIN};
use clausewise_service::{api, AnalysisRecord};

#[derive(Parser)]
#[command(name = "clausewise", version, about = "Privacy policy analysis")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch a policy and print its extracted text.
    Fetch {
        url: String,
        /// Treat the URL as a homepage and look for its policy link first.
        #[arg(long)]
        discover: bool,
        /// Host to policy URL map consulted before link discovery.
        #[arg(long, requires = "discover")]
        curated: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Analyze a policy URL or a local file.
    Analyze {
        target: String,
        #[arg(long)]
        backend: Option<BackendKind>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Domain to file a local document under.
        #[arg(long, default_value = LOCAL_DOMAIN)]
        domain: String,
        /// Print the full record as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Clause-level F1 and risk agreement on annotated corpora.
    Eval {
        #[arg(required = true)]
        corpora: Vec<PathBuf>,
        /// Repeat to compare backends.
        #[arg(long)]
        backend: Vec<BackendKind>,
        #[arg(long)]
        json: bool,
    },
    /// Run the pipeline variants on one corpus.
    Ablate {
        corpus: PathBuf,
        #[arg(long)]
        backend: Option<BackendKind>,
        /// Comma-separated subset; all variants by default.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        #[arg(long)]
        json: bool,
    },
    /// Start the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Compare two risk-level distributions.
    CompareDist {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn fetch(config: &Config, url: &str, discover: bool, curated: Option<&Path>, json: bool) -> Result<()> {
    let fetcher = Fetcher::new(config.fetch.clone())?;
    let rt = runtime()?;
    let fetched = rt.block_on(async {
        let mut target = url::Url::parse(url).with_context(|| format!("invalid URL {url}"))?;
        if discover {
            let curated = match curated {
                Some(p) => CuratedPolicyMap::load(p)?,
                None => CuratedPolicyMap::default(),
            };
            let host = target.host_str().unwrap_or_default().to_string();
            target = match curated.lookup(&host) {
                Some(u) => u.clone(),
                None => {
                    let home = fetcher.fetch(url).await?;
                    let html = String::from_utf8_lossy(&home.body);
                    let base = home.source.url.as_deref().unwrap_or(url);
                    discover_policy_url(&html, base)?.with_context(|| format!("no privacy policy link on {url}"))?
                }
            };
            eprintln!("policy: {target}");
        }
        anyhow::Ok(fetcher.fetch(target.as_str()).await?)
    })?;
    let content_type = fetched.source.content_type.clone();
    let doc = PolicyDocument::from_body(fetched.source, &fetched.body, &content_type)?;
    if json {
        return print_json(&doc);
    }
    println!("url: {}", doc.source.url.as_deref().unwrap_or("-"));
    println!("domain: {}", doc.source.domain);
    println!("content hash: {}", doc.content_hash);
    println!();
    println!("{}", doc.text);
    Ok(())
}

fn print_record(record: &AnalysisRecord, cached: bool) {
    println!(
        "analysis: {}{}",
        record.analysis_id,
        if cached { " (cached)" } else { "" }
    );
    println!("domain: {}", record.domain);
    println!("segments: {}", record.segments.len());
    println!("risk: {} ({}/100)", record.risk.level, record.risk.score);
    for (c, e) in record.risk.contributions.iter().zip(&record.explanations) {
        println!("  {:+4}  {}", c.weight, c.feature);
        println!("        {}", e.text);
    }
}

fn analyze(mut config: Config, target: &str, backend: Option<BackendKind>, domain: &str, json: bool) -> Result<()> {
    let input = if target.starts_with("http://") || target.starts_with("https://") {
        AnalyzeInput::Url(target.to_string())
    } else {
        let path = Path::new(target);
        let body = std::fs::read(path).with_context(|| format!("reading {target}"))?;
        AnalyzeInput::Bytes {
            body,
            content_type: content_type_for(path).to_string(),
            domain: domain.to_string(),
        }
    };
    if config.backend.parallelism == 0 {
        config.backend.parallelism = 1;
    }
    let analyzer = Analyzer::new(config)?;
    let analysis = runtime()?.block_on(analyzer.analyze(input, backend))?;
    if json {
        print_json(analysis.record.as_ref())
    } else {
        print_record(&analysis.record, analysis.cached);
        Ok(())
    }
}

fn eval(config: Config, corpora: &[PathBuf], backends: &[BackendKind], json: bool) -> Result<()> {
    let default = [config.backend.default];
    let backends = if backends.is_empty() { &default[..] } else { backends };
    let engine = Backends::load(config)?;
    let r = engine.resources();
    let loaded = corpora
        .iter()
        .map(|p| load_corpus(p, &r.vocab).with_context(|| p.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    for c in &loaded {
        for w in &c.warnings {
            eprintln!("{}: {w}", c.name);
        }
    }
    let mut evals = Vec::new();
    let mut rows = Vec::new();
    for &kind in backends {
        let backend = engine.backend(kind).map_err(anyhow::Error::msg)?;
        let ctx = EvalContext {
            vocab: &r.vocab,
            weights: &r.weights,
            backend: backend.as_ref(),
            unconstrained: None,
            summarizer: None,
            parallelism: engine.config().backend.parallelism,
        };
        let mut f1 = Vec::new();
        for corpus in &loaded {
            let e = evaluate_corpus(corpus, &ctx)?;
            f1.push(e.mean_f1);
            evals.push(e);
        }
        rows.push(F1Row::new(kind.as_str(), f1));
    }
    if json {
        return print_json(&evals);
    }
    let table = F1Table {
        corpora: loaded.iter().map(|c| c.name.clone()).collect(),
        rows,
    };
    print!("{}", table.render());
    println!();
    for e in &evals {
        if let Some(r) = &e.risk {
            println!(
                "{} / {}: risk agreement {:.2} ({}/{})",
                e.backend, e.corpus, r.agreement, r.matches, r.total
            );
        }
    }
    Ok(())
}

fn ablate(config: Config, corpus: &Path, backend: Option<BackendKind>, variants: &[Variant], json: bool) -> Result<()> {
    let kind = backend.unwrap_or(config.backend.default);
    let engine = Backends::load(config)?;
    let r = engine.resources();
    let corpus = load_corpus(corpus, &r.vocab)?;
    let annotator = engine.backend(kind).map_err(anyhow::Error::msg)?;
    let llm = match kind {
        BackendKind::Llm => Some(engine.llm_backend().map_err(anyhow::Error::msg)?),
        BackendKind::Lexicon => None,
    };
    let summarizer = match kind {
        BackendKind::Llm => Some(engine.summary_backend().map_err(anyhow::Error::msg)?),
        BackendKind::Lexicon => None,
    };
    let unconstrained: &dyn UnconstrainedAnnotator = match &llm {
        Some(b) => b,
        None => engine.lexicon_backend().as_ref(),
    };
    let ctx = EvalContext {
        vocab: &r.vocab,
        weights: &r.weights,
        backend: annotator.as_ref(),
        unconstrained: Some(unconstrained),
        summarizer: summarizer.as_ref().map(|s| s as &dyn AnnotatorBackend),
        parallelism: engine.config().backend.parallelism,
    };
    let variants = if variants.is_empty() {
        &Variant::ALL[..]
    } else {
        variants
    };
    let table = run_ablations(&corpus, variants, &ctx)?;
    if json {
        return print_json(&table);
    }
    print!("{}", table.render());
    Ok(())
}

fn serve(mut config: Config, port: Option<u16>, bind: Option<String>) -> Result<()> {
    if let Some(p) = port {
        config.server.port = p;
    }
    if let Some(b) = bind {
        config.server.bind = b;
    }
    let addr = format!("{}:{}", config.server.bind, config.server.port);
    let analyzer = Arc::new(Analyzer::new(config)?);
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        api::serve(analyzer, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        anyhow::Ok(())
    })
}

/// A distribution file holds either `{"Low": n, "Medium": n, "High": n}` or a
/// list of levels.
fn read_distribution(path: &Path) -> Result<LevelCounts> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    if let Ok(counts) = serde_json::from_str::<LevelCounts>(&text) {
        return Ok(counts);
    }
    match serde_json::from_str::<Vec<RiskLevel>>(&text) {
        Ok(levels) => Ok(LevelCounts::tally(levels)),
        Err(_) => bail!("{}: expected level counts or a list of levels", path.display()),
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut config = Config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Fetch {
            url,
            discover,
            curated,
            json,
        } => fetch(&config, &url, discover, curated.as_deref(), json),
        Command::Analyze {
            target,
            backend,
            weights,
            vocab,
            domain,
            json,
        } => {
            config.paths.weights = weights.or(config.paths.weights);
            config.paths.vocabulary = vocab.or(config.paths.vocabulary);
            analyze(config, &target, backend, &domain, json)
        }
        Command::Eval { corpora, backend, json } => eval(config, &corpora, &backend, json),
        Command::Ablate {
            corpus,
            backend,
            variants,
            json,
        } => ablate(config, &corpus, backend, &variants, json),
        Command::Serve { port, bind } => serve(config, port, bind),
        Command::CompareDist { a, b, json } => {
            let cmp = compare_distributions(read_distribution(&a)?, read_distribution(&b)?);
            if json {
                print_json(&cmp)
            } else {
                print!("{}", cmp.render());
                Ok(())
            }
        }
    }
}
