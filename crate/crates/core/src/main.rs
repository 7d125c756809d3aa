use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use weatlab::align::{self, BilingualDictionary, Normalization};
use weatlab::config::{self, parse_alignment_job, parse_embedding_spec, parse_lexicon_source};
use weatlab::embedding::{CaseStrategy, EmbeddingSpace, LoadOptions, LookupPolicy};
use weatlab::lexicon::{self, Resolution, TestId};
use weatlab::report::OutputFormat;
use weatlab::runner::{self, AlignmentJob, EmbeddingSpec, LexiconSource, RunConfig};
use weatlab::weat::Metric;
use weatlab::Result;

#[derive(Parser)]
#[command(name = "weatlab", version, about = "Association bias tests over word embeddings")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run bias tests and write a report.
    Run(RunArgs),
    /// Fit an orthogonal map from a dictionary and write the projected space.
    Align(AlignArgs),
    /// Show how many stimuli of each test a space covers.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedding space as LANG:PATH (repeatable).
    #[arg(long = "emb", value_name = "LANG:PATH")]
    embeddings: Vec<String>,
    /// Lexicon file, or `builtin` (repeatable; replaces the config's list).
    #[arg(long = "lexicon")]
    lexicons: Vec<String>,
    /// Comma-separated test ids.
    #[arg(long, value_delimiter = ',')]
    tests: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    metric: Vec<String>,
    #[arg(long)]
    coverage_threshold: Option<f64>,
    #[arg(long)]
    permutations: Option<u64>,
    #[arg(long)]
    exact_threshold: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long)]
    case: Option<CaseStrategy>,
    /// Alignment job SRC:TGT:DICTIONARY (repeatable).
    #[arg(long = "align", value_name = "SRC:TGT:DICT")]
    alignments: Vec<String>,
    /// Dictionary for a single alignment between --src-emb and --tgt-emb.
    #[arg(long, requires_all = ["src_emb", "tgt_emb"])]
    dict: Option<PathBuf>,
    #[arg(long, value_name = "LANG:PATH")]
    src_emb: Option<String>,
    #[arg(long, value_name = "LANG:PATH")]
    tgt_emb: Option<String>,
    #[arg(long)]
    normalize_before_fit: Option<Normalization>,
    /// Also score monolingual tests when aligning.
    #[arg(long)]
    monolingual: Option<bool>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long, value_name = "LANG:PATH")]
    src_emb: String,
    #[arg(long, value_name = "LANG:PATH")]
    tgt_emb: String,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, default_value = "none")]
    normalize_before_fit: Normalization,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long, default_value = "exact-then-lowercase")]
    case: CaseStrategy,
    /// Where to write the projected source space.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long = "emb", value_name = "LANG:PATH")]
    embedding: String,
    #[arg(long = "lexicon")]
    lexicons: Vec<String>,
    #[arg(long)]
    coverage_threshold: Option<f64>,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long, default_value = "exact-then-lowercase")]
    case: CaseStrategy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Align(a) => cmd_align(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn build_config(a: RunArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => config::load_config(p)?,
        None => RunConfig::default(),
    };
    let here = Path::new(".");
    for s in &a.embeddings {
        c.embeddings.push(parse_embedding_spec(s, here)?);
    }
    if !a.lexicons.is_empty() {
        c.lexicons = a.lexicons.iter().map(|s| parse_lexicon_source(s, here)).collect();
    }
    if !a.tests.is_empty() {
        c.tests = Some(config::parse_list::<TestId>(&a.tests)?);
    }
    if !a.metric.is_empty() {
        c.metrics = config::parse_list::<Metric>(&a.metric)?;
    }
    if let Some(v) = a.coverage_threshold {
        c.coverage_threshold = v;
    }
    if let Some(v) = a.permutations {
        c.plan.num_samples = v;
    }
    if let Some(v) = a.exact_threshold {
        c.plan.exact_threshold = v;
    }
    if let Some(v) = a.seed {
        c.plan.seed = v;
    }
    if let Some(v) = a.alpha {
        c.plan.alpha = v;
    }
    if a.max_vocab.is_some() {
        c.max_vocab = a.max_vocab;
    }
    if let Some(v) = a.case {
        c.policy.case_strategy = v;
    }
    for s in &a.alignments {
        c.alignments.push(parse_alignment_job(s, here)?);
    }
    if let Some(dict) = a.dict {
        let (src, tgt) = (a.src_emb.unwrap_or_default(), a.tgt_emb.unwrap_or_default());
        let (src, tgt) = (parse_embedding_spec(&src, here)?, parse_embedding_spec(&tgt, here)?);
        c.alignments.push(AlignmentJob {
            source: src.language.clone(),
            target: tgt.language.clone(),
            dictionary: dict,
        });
        for spec in [src, tgt] {
            if !c.embeddings.iter().any(|e: &EmbeddingSpec| e.language == spec.language) {
                c.embeddings.push(spec);
            }
        }
    }
    if let Some(v) = a.normalize_before_fit {
        c.normalization = v;
    }
    if a.monolingual.is_some() {
        c.monolingual = a.monolingual;
    }
    if let Some(v) = a.workers {
        c.workers = v;
    }
    if let Some(v) = a.format {
        c.format = v;
    }
    if a.out.is_some() {
        c.out = a.out;
    }
    Ok(c)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let c = build_config(a)?;
    let report = runner::run_report(&c)?;
    match &c.out {
        Some(p) => report.write(p, c.format),
        None => {
            print!("{}", report.render(c.format));
            Ok(())
        }
    }
}

fn cmd_align(a: AlignArgs) -> Result<()> {
    let here = Path::new(".");
    let src = parse_embedding_spec(&a.src_emb, here)?;
    let tgt = parse_embedding_spec(&a.tgt_emb, here)?;
    let policy = LookupPolicy {
        case_strategy: a.case,
        ..Default::default()
    };
    let opts = LoadOptions {
        limit: a.max_vocab,
        ..Default::default()
    };
    let dict = BilingualDictionary::load(&a.dict, src.language.clone(), tgt.language.clone())?;
    let s = EmbeddingSpace::load_with(&src.path, src.language, &opts)?;
    let t = EmbeddingSpace::load_with(&tgt.path, tgt.language, &opts)?;
    let aligned = align::extract_aligned(&dict, &s, &t, &policy)?;
    let w = align::fit_procrustes_with(&aligned, a.normalize_before_fit)?;
    eprintln!(
        "pairs kept {}, dropped {}, residual {:.6}, orthogonality error {:.3e}",
        aligned.kept_pairs.len(),
        aligned.dropped_pairs,
        w.residual(&aligned)?,
        w.orthogonality_error()
    );
    align::project(&s, &w)?.save(&a.out)
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let spec = parse_embedding_spec(&a.embedding, Path::new("."))?;
    let sources: Vec<LexiconSource> = if a.lexicons.is_empty() {
        vec![LexiconSource::Builtin]
    } else {
        a.lexicons.iter().map(|s| parse_lexicon_source(s, Path::new("."))).collect()
    };
    let mut tests = Vec::new();
    for src in sources {
        match src {
            LexiconSource::Builtin => tests.extend(lexicon::builtin_english()),
            LexiconSource::File(p) => tests.extend(lexicon::load_lexicon(p)?),
        }
    }
    let opts = LoadOptions {
        limit: a.max_vocab,
        ..Default::default()
    };
    let space = EmbeddingSpace::load_with(&spec.path, spec.language.clone(), &opts)?;
    println!("{}: {} words, dimension {}", space.language(), space.len(), space.dim());
    let policy = LookupPolicy {
        case_strategy: a.case,
        ..Default::default()
    };
    let threshold = a.coverage_threshold.unwrap_or(lexicon::DEFAULT_COVERAGE_THRESHOLD);
    for t in tests.iter().filter(|t| t.target_language == spec.language) {
        let (coverage, status) = match lexicon::resolve(t, &space, &space, &policy, threshold)? {
            Resolution::Resolved(r) => (r.coverage, "ok".to_string()),
            Resolution::Discarded(d) => (d.coverage.clone(), format!("discarded: {}", d.reason())),
        };
        let counts: Vec<String> = coverage
            .iter()
            .map(|c| format!("{}={}/{}", c.role, c.found, c.total))
            .collect();
        println!("{}\t{}\t{}", t.id, counts.join(" "), status);
    }
    Ok(())
}
