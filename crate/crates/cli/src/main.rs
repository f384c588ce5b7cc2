mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use clarinet_core::evaluation::{
    corpus_from_index, generate_queries, perturb_queries, run_benchmark, BenchOptions, EvalReport, QuerySet,
};
use clarinet_core::melody::{stability, DEFAULT_SHORT_NOTE_THRESHOLD};
use clarinet_core::midi::{self, parse_smf, write_smf};
use clarinet_core::retrieval::{build_index, read_midi};
use clarinet_core::synth::write_corpus;
use clarinet_core::{BuildConfig, Criteria, Extractor, Index, Method, MsWeights, Query, RsaParams, TempoSource};
use walkdir::WalkDir;

use config::RunConfig;

/// Melody-based retrieval over MIDI files.
#[derive(Parser)]
#[command(name = "clarinet", version)]
struct Cli {
    /// JSON file with default option values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the melody of a MIDI file.
    Extract(ExtractArgs),
    /// Build an index from a directory of MIDI files.
    Index(IndexArgs),
    /// Rank indexed documents against a query MIDI file.
    Query(QueryArgs),
    /// Run the retrieval benchmark.
    Eval(EvalArgs),
    /// Generate a seeded query set from an index.
    Genqueries(GenArgs),
    /// Write a seeded synthetic piano corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ExtractArgs {
    input: PathBuf,
    /// Where to write the monophonic melody.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    extractor: Option<Extractor>,
    /// pitch, velocity or weighted:<pitch>,<velocity>
    #[arg(long)]
    criteria: Option<Criteria>,
    /// Print the stability report as JSON.
    #[arg(long)]
    stability: bool,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    extractor: Option<Extractor>,
    #[arg(long)]
    criteria: Option<Criteria>,
    /// Normalize tempo and transpose to the C reference.
    #[arg(long)]
    process: bool,
    /// file, estimate or fixed:<bpm>
    #[arg(long)]
    tempo_source: Option<TempoSource>,
    #[arg(long)]
    clip_seconds: Option<f64>,
}

#[derive(Args)]
struct IndexArgs {
    corpus: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    build: BuildArgs,
}

#[derive(Args)]
struct MethodArgs {
    /// Window length in seconds (rsa-time).
    #[arg(long)]
    window_time: Option<f64>,
    /// Window step in seconds (rsa-time).
    #[arg(long)]
    stride_time: Option<f64>,
    /// Window step in notes (rsa-note, mongeau-sankoff).
    #[arg(long)]
    stride_notes: Option<usize>,
    /// JSON file of Mongeau-Sankoff weights.
    #[arg(long)]
    ms_weights: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    index: PathBuf,
    query: PathBuf,
    /// boolean, rsa-time, rsa-note or mongeau-sankoff
    #[arg(long)]
    method: Option<String>,
    #[command(flatten)]
    params: MethodArgs,
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Clip the query file from this time (seconds).
    #[arg(long)]
    start: Option<f64>,
    /// Clip the query file to this length (seconds).
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    index: PathBuf,
    /// Query set JSON written by `genqueries`.
    #[arg(long, conflicts_with = "generate")]
    queries: Option<PathBuf>,
    /// Generate N queries of LEN seconds with SEED.
    #[arg(long, num_args = 3, value_names = ["N", "LEN", "SEED"])]
    generate: Option<Vec<String>>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated extractors; the index is rebuilt for each.
    #[arg(long, value_delimiter = ',')]
    extractors: Option<Vec<Extractor>>,
    #[command(flatten)]
    params: MethodArgs,
    /// Probability of moving each query note by a semitone.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Scoring threads per query; 1 unless given here.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for report.csv and report.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Leave timing columns empty so repeated runs are byte-identical.
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Args)]
struct GenArgs {
    index: PathBuf,
    #[arg(long, default_value_t = 40)]
    count: usize,
    #[arg(long, default_value_t = 5.0)]
    length: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    dir: PathBuf,
    #[arg(long, default_value_t = 40)]
    count: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Minimum piece length in seconds.
    #[arg(long, default_value_t = 24.0)]
    duration: f64,
}

/// An invalid option value; exits with status 2 like a clap usage error.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLARINET_LOG", "warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Extract(a) => cmd_extract(a, &cfg),
        Command::Index(a) => cmd_index(a, &cfg),
        Command::Query(a) => cmd_query(a, &cfg),
        Command::Eval(a) => cmd_eval(a, &cfg),
        Command::Genqueries(a) => cmd_genqueries(a, &cfg),
        Command::Synth(a) => {
            let paths = write_corpus(&a.dir, a.count, a.seed, a.duration)?;
            println!("wrote {} files to {}", paths.len(), a.dir.display());
            Ok(())
        }
    }
}

fn cmd_extract(a: ExtractArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let extractor = a.extractor.or(cfg.extractor).unwrap_or_default();
    let criteria = a.criteria.or(cfg.criteria).unwrap_or_default();
    if a.output.is_none() && !a.stability {
        return Err(usage("nothing to do: give --output and/or --stability"));
    }
    let bytes = std::fs::read(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let (notes, tempo) = parse_smf(&bytes).with_context(|| format!("cannot parse {}", a.input.display()))?;
    let melody = extractor.extract(&notes, &criteria);
    if let Some(out) = &a.output {
        std::fs::write(out, write_smf(&melody, &tempo)).with_context(|| format!("cannot write {}", out.display()))?;
        log::info!("{} melody notes written to {}", melody.len(), out.display());
    }
    if a.stability {
        let report = stability(&melody, DEFAULT_SHORT_NOTE_THRESHOLD);
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(())
}

fn build_config(b: &BuildArgs, cfg: &RunConfig) -> anyhow::Result<BuildConfig> {
    let d = BuildConfig::default();
    let config = BuildConfig {
        extractor: b.extractor.or(cfg.extractor).unwrap_or(d.extractor),
        criteria: b.criteria.or(cfg.criteria).unwrap_or(d.criteria),
        process: b.process || cfg.process.unwrap_or(d.process),
        tempo_source: b.tempo_source.or(cfg.tempo_source).unwrap_or(d.tempo_source),
        clip_seconds: b.clip_seconds.or(cfg.clip_seconds).unwrap_or(d.clip_seconds),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn midi_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut paths = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry?;
        let is_midi = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"));
        if entry.file_type().is_file() && is_midi {
            paths.push(entry.into_path());
        }
    }
    Ok(paths)
}

fn cmd_index(a: IndexArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let config = build_config(&a.build, cfg)?;
    let paths = midi_files(&a.corpus)?;
    if paths.is_empty() {
        bail!("no MIDI files under {}", a.corpus.display());
    }
    let (index, skipped) = build_index(&paths, &config)?;
    for s in &skipped {
        log::warn!("skipped {}: {}", s.path, s.reason);
    }
    index.save(&a.output)?;
    println!(
        "indexed {} documents ({} skipped) into {}",
        index.documents.len(),
        skipped.len(),
        a.output.display()
    );
    Ok(())
}

fn rsa_params(p: &MethodArgs, cfg: &RunConfig) -> RsaParams {
    let d = RsaParams::default();
    RsaParams {
        window_time: p.window_time.or(cfg.window_time).unwrap_or(d.window_time),
        stride_time: p.stride_time.or(cfg.stride_time).unwrap_or(d.stride_time),
        stride_notes: p.stride_notes.or(cfg.stride_notes).unwrap_or(d.stride_notes),
    }
}

fn ms_weights(p: &MethodArgs, cfg: &RunConfig) -> anyhow::Result<MsWeights> {
    match p.ms_weights.as_ref().or(cfg.ms_weights.as_ref()) {
        None => Ok(MsWeights::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid weights {}: {e}", path.display())))
        }
    }
}

fn methods(names: &[String], p: &MethodArgs, cfg: &RunConfig) -> anyhow::Result<Vec<Method>> {
    let params = rsa_params(p, cfg);
    let needs_weights = names.iter().any(|n| n == "mongeau-sankoff");
    let weights = if needs_weights { ms_weights(p, cfg)? } else { MsWeights::default() };
    names
        .iter()
        .map(|n| {
            let m = Method::from_name(n, params, weights.clone()).map_err(usage)?;
            m.validate().map_err(|e| usage(e.to_string()))?;
            Ok(m)
        })
        .collect()
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn positive_jobs(jobs: Option<usize>) -> anyhow::Result<usize> {
    match jobs {
        Some(0) => Err(usage("--jobs must be at least 1")),
        Some(j) => Ok(j),
        None => Ok(1),
    }
}

fn cmd_query(a: QueryArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let name = a.method.clone().or(cfg.method.clone()).unwrap_or_else(|| "rsa-note".into());
    let top = a.top.or(cfg.top).unwrap_or(10);
    let jobs = positive_jobs(a.jobs.or(cfg.jobs))?;
    if a.start.is_some_and(|s| s.is_nan() || s < 0.0) || a.duration.is_some_and(|d| !positive(d)) {
        return Err(usage("--start must be non-negative and --duration positive"));
    }
    let method = methods(&[name], &a.params, cfg)?.remove(0);

    let index = Index::load(&a.index)?;
    let (notes, bpm) = read_midi(&a.query)?;
    let notes = match (a.start, a.duration) {
        (None, None) => notes,
        (s, d) => {
            let s = s.unwrap_or(0.0);
            let e = d.map_or(f64::INFINITY, |d| s + d);
            midi::clip(&notes, s, e)?
        }
    };
    let id = a
        .query
        .file_stem()
        .map_or_else(|| "query".into(), |s| s.to_string_lossy().into_owned());
    let query = Query {
        id,
        notes,
        file_bpm: Some(bpm),
    };
    let result = index.query(&query, &method, jobs)?;
    println!("{:>4}  {:<32} {:>7} {:>9}  offset", "rank", "document", "score", "distance");
    for (i, e) in result.entries.iter().take(top).enumerate() {
        println!(
            "{:>4}  {:<32} {:>7.3} {:>9.3}  {}",
            i + 1,
            e.doc_id,
            e.score.value,
            e.score.raw_distance,
            e.score.best_window_offset
        );
    }
    log::info!("{} in {:.4}s", result.method, result.elapsed_s);
    Ok(())
}

fn noise_args(noise: Option<f64>, seed: Option<u64>, cfg: &RunConfig) -> anyhow::Result<Option<(f64, u64)>> {
    match noise.or(cfg.noise) {
        None => Ok(None),
        Some(p) if (0.0..=1.0).contains(&p) => Ok(Some((p, seed.or(cfg.noise_seed).unwrap_or(0)))),
        Some(p) => Err(usage(format!("--noise must be a probability, got {p}"))),
    }
}

fn cmd_genqueries(a: GenArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let noise = noise_args(a.noise, a.noise_seed, cfg)?;
    if !positive(a.length) {
        return Err(usage("--length must be positive"));
    }
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let index = Index::load(&a.index)?;
    let corpus = corpus_from_index(&index)?;
    let mut set = generate_queries(&corpus, a.count, a.length, seed)?;
    if let Some((p, s)) = noise {
        set = perturb_queries(&set, p, s);
    }
    std::fs::write(&a.output, set.to_json() + "\n")?;
    println!("wrote {} queries to {}", set.queries.len(), a.output.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let names = a
        .methods
        .clone()
        .or(cfg.methods.clone())
        .unwrap_or_else(|| vec!["rsa-time".into(), "rsa-note".into()]);
    if names.is_empty() {
        return Err(usage("method grid is empty"));
    }
    let grid = methods(&names, &a.params, cfg)?;
    let jobs = positive_jobs(a.jobs)?;
    let noise = noise_args(a.noise, a.noise_seed, cfg)?;
    let generate = match &a.generate {
        None => None,
        Some(v) => {
            let n: usize = v[0].parse().map_err(|_| usage(format!("bad query count `{}`", v[0])))?;
            let len: f64 = v[1].parse().map_err(|_| usage(format!("bad query length `{}`", v[1])))?;
            let seed: u64 = v[2].parse().map_err(|_| usage(format!("bad seed `{}`", v[2])))?;
            if !positive(len) {
                return Err(usage("query length must be positive"));
            }
            Some((n, len, seed))
        }
    };
    if generate.is_none() && a.queries.is_none() {
        return Err(usage("give --queries or --generate N LEN SEED"));
    }

    let base = Index::load(&a.index)?;
    let mut queries = match (generate, &a.queries) {
        (Some((n, len, seed)), _) => generate_queries(&corpus_from_index(&base)?, n, len, seed)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            QuerySet::from_json(&text).with_context(|| format!("invalid query set {}", path.display()))?
        }
        (None, None) => unreachable!(),
    };
    if let Some((p, s)) = noise {
        queries = perturb_queries(&queries, p, s);
    }

    let extractors = a
        .extractors
        .clone()
        .or(cfg.extractors.clone())
        .unwrap_or_else(|| vec![base.build_config.extractor]);
    let mut report = EvalReport::default();
    for extractor in extractors {
        let rebuilt;
        let index = if extractor == base.build_config.extractor {
            &base
        } else {
            let paths: Vec<PathBuf> = base.documents.iter().map(|d| PathBuf::from(&d.source_path)).collect();
            let config = BuildConfig {
                extractor,
                ..base.build_config.clone()
            };
            rebuilt = build_index(&paths, &config)?.0;
            &rebuilt
        };
        report.extend(run_benchmark(index, &queries, &grid, BenchOptions { jobs })?);
    }
    if a.omit_timing {
        report = report.without_timing();
    }
    report.write(&a.out, "report")?;
    print_report(&report);
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!(
        "{:<28} {:<9} {:<5} {:>6} {:>6} {:>6} {:>6} {:>6} {:>8} {:>10}",
        "method", "extractor", "proc", "R@1", "R@3", "R@5", "R@10", "MRR", "MD%", "s/query"
    );
    for r in &report.rows {
        println!(
            "{:<28} {:<9} {:<5} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>8.2} {:>10}",
            r.method,
            r.extractor,
            r.processed,
            r.recall[0],
            r.recall[1],
            r.recall[2],
            r.recall[3],
            r.mrr,
            r.md_mean,
            r.time_per_query_s.map_or_else(|| "-".into(), |t| format!("{t:.5}"))
        );
        if r.failures > 0 {
            println!("  {} of {} queries failed", r.failures, r.queries);
        }
    }
}
