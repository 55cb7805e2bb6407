//! The `igap` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation failure,
//! 3 scalar IGap requested but no checkpoint falls in the training-error
//! window.

pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{corrupt_labels_joint, gen_random_labels, ParallelCorpus};
use crate::data::{
    read_embeddings, read_jsonl, read_pool, validate_pool, write_labels, write_pool, CheckpointPool, Direction,
    EmbeddingPairSet, EmbeddingRecord, EvalSet, ExampleLabel, Role,
};
use crate::error::Error;
use crate::metrics::{
    decompose_pool, descending_grid, final_target_accuracy, igap_curve_from_reports, igap_from_reports,
    mean, to_f64, transfer_gaps, DecompositionReport, IGapResult,
};
use crate::ranking::{
    gold_ranking, igap_table as igap_score_table, rank_by_scores, similarity_table, tdr_concordance, Ranking,
    ScoreTable, SimilarityMetric,
};
use crate::simulator::{simulate_pool, SimConfig};
use report::{
    decompose_plot, decompose_table, emit, fmt_sig, gap_plot, gap_table, igap_plot, igap_table, Artifact, GapRow,
    IGapRows, Scale, Table,
};

pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_E_PRIME: f64 = 0.0;
pub const DEFAULT_CURVE_EPSILON: f64 = 0.025;
pub const DEFAULT_GRID: &str = "0.2:0:0.025";

#[derive(Debug, Parser)]
#[command(name = "igap", version, about = "Cross-lingual transferability metrics from checkpoint logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a pool manifest and list every issue found.
    Validate(ValidateArgs),
    /// Per-checkpoint error decomposition.
    Decompose(DirectionArgs),
    /// Per-checkpoint transfer gap (source minus target validation accuracy).
    Gap(DirectionArgs),
    /// IGap at one training-error level.
    Igap(IgapArgs),
    /// IGap over a descending grid of training-error levels.
    IgapCurve(CurveArgs),
    /// Transfer-direction ranking scores and accuracy.
    Tdr(TdrArgs),
    /// Representation-similarity scores between languages.
    Baseline(BaselineArgs),
    /// Random labels over a parallel corpus.
    GenLabels(GenLabelsArgs),
    /// Replace a seeded fraction of labels with uniform draws.
    Corrupt(CorruptArgs),
    /// Write a planted-truth pool from a simulator config.
    Simulate(SimulateArgs),
    /// Decomposition, transfer gap and IGap curves in one run.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    PlotJson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// e' = 0.03, epsilon = 0.025, for large-scale fine-tuning pools.
    LargeScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    L2,
    Dot,
    Cos,
    Igap,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Print values as percentages.
    #[arg(long)]
    percent: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Args)]
struct DirectionArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Source language; defaults to the pool's only source language.
    #[arg(long)]
    source: Option<String>,
    /// Target language (repeatable); defaults to every linked target.
    #[arg(long = "target")]
    targets: Vec<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct IgapArgs {
    #[command(flatten)]
    direction: DirectionArgs,
    #[arg(long)]
    eprime: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Compute IGap within each seed instead of pooling all seeds.
    #[arg(long)]
    per_seed: bool,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[command(flatten)]
    direction: DirectionArgs,
    /// `start:stop:step`, swept from start down to stop.
    #[arg(long, default_value = DEFAULT_GRID)]
    grid: String,
    #[arg(long, default_value_t = DEFAULT_CURVE_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    per_seed: bool,
}

#[derive(Debug, Args)]
struct TdrArgs {
    /// Pools used for IGap scores; one per source language (repeatable).
    #[arg(long = "manifest")]
    manifests: Vec<PathBuf>,
    /// End-task pools providing gold target accuracies (repeatable).
    #[arg(long = "gold")]
    gold: Vec<PathBuf>,
    /// Embedding files for similarity metrics (repeatable).
    #[arg(long = "embeddings")]
    embeddings: Vec<PathBuf>,
    #[arg(long = "source")]
    sources: Vec<String>,
    #[arg(long = "target")]
    targets: Vec<String>,
    #[arg(long, value_enum, default_value = "igap")]
    metric: MetricArg,
    #[arg(long, default_value_t = DEFAULT_E_PRIME)]
    eprime: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long = "embeddings", required = true)]
    embeddings: Vec<PathBuf>,
    #[arg(long)]
    source: String,
    #[arg(long = "target")]
    targets: Vec<String>,
    #[arg(long, value_enum, default_value = "cos")]
    metric: MetricArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct GenLabelsArgs {
    /// TSV of `example_id<TAB>text_a<TAB>text_b`.
    #[arg(long, conflicts_with_all = ["ids", "text_a", "text_b"])]
    corpus: Option<PathBuf>,
    /// Id file for line-aligned text files.
    #[arg(long, requires_all = ["text_a", "text_b"])]
    ids: Option<PathBuf>,
    #[arg(long)]
    text_a: Option<PathBuf>,
    #[arg(long)]
    text_b: Option<PathBuf>,
    /// Language of the first text column.
    #[arg(long)]
    source: String,
    /// Language of the second text column.
    #[arg(long)]
    target: String,
    #[arg(long)]
    seed: i64,
    #[arg(long, default_value_t = 2)]
    num_labels: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CorruptArgs {
    /// Integer label files; several files are corrupted jointly.
    #[arg(long = "labels", required = true)]
    labels: Vec<PathBuf>,
    #[arg(long)]
    ratio: f64,
    #[arg(long)]
    seed: i64,
    #[arg(long)]
    num_labels: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    source: Option<String>,
    #[arg(long = "target")]
    targets: Vec<String>,
    #[arg(long, default_value = DEFAULT_GRID)]
    grid: String,
    #[arg(long, default_value_t = DEFAULT_CURVE_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    percent: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
    EmptyWindow(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Runs the CLI on `argv` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Decompose(a) => decompose(a),
        Command::Gap(a) => gap(a),
        Command::Igap(a) => igap(a),
        Command::IgapCurve(a) => igap_curve(a),
        Command::Tdr(a) => tdr(a),
        Command::Baseline(a) => baseline(a),
        Command::GenLabels(a) => gen_labels(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Simulate(a) => simulate(a),
        Command::Report(a) => report_all(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(Failure::EmptyWindow(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    }
}

/// Writes artifacts to `--out`, or prints them when no directory is given.
fn deliver(artifacts: &[Artifact], out: Option<&Path>) -> CmdResult {
    match out {
        Some(dir) => emit(artifacts, dir)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            for a in artifacts {
                if artifacts.len() > 1 {
                    let _ = writeln!(stdout, "# {}", a.file_name);
                }
                let _ = stdout.write_all(&a.bytes);
            }
        }
    }
    Ok(())
}

/// Summary lines go to stdout when results are written to files and to
/// stderr when results themselves go to stdout.
fn summary(out: Option<&Path>, line: &str) {
    if out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn load(manifest: &Path) -> Result<CheckpointPool, Failure> {
    Ok(crate::data::load_pool(manifest)?)
}

fn directions(pool: &CheckpointPool, source: Option<&str>, targets: &[String]) -> Result<Vec<Direction>, Failure> {
    let source = match source {
        Some(s) => s.to_string(),
        None => match pool.source_languages().as_slice() {
            [one] => one.clone(),
            [] => return Err(Failure::Data(Error::MissingEvalSet { role: Role::SourceTrain.to_string(), language: "*".into() })),
            many => return Err(Failure::Usage(format!("pool has several source languages {many:?}; pass --source"))),
        },
    };
    let targets = if targets.is_empty() {
        pool.target_languages(&source)
    } else {
        targets.to_vec()
    };
    if targets.is_empty() {
        return Err(Failure::Data(Error::MissingEvalSet {
            role: Role::TranslatedTrain.to_string(),
            language: "*".into(),
        }));
    }
    Ok(targets.into_iter().map(|t| Direction::new(source.clone(), t)).collect())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some([start, stop, step]) => {
            let g = descending_grid(*start, *stop, *step).map_err(|e| Failure::Usage(e.to_string()))?;
            if g.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Failure::Usage(format!("grid '{spec}' leaves [0, 1]")));
            }
            Ok(g)
        }
        _ => Err(Failure::Usage(format!("grid '{spec}' is not start:stop:step"))),
    }
}

fn check_epsilon(epsilon: f64) -> CmdResult {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--epsilon must be positive, got {epsilon}")))
    }
}

fn validate(a: ValidateArgs) -> CmdResult {
    let pool = read_pool(&a.manifest)?;
    let report = validate_pool(&pool);
    for issue in &report.issues {
        println!("{issue}");
    }
    let n = report.issues.len();
    println!("{n} issue{}", if n == 1 { "" } else { "s" });
    if report.errors().next().is_some() {
        return Err(Failure::Data(Error::schema(a.manifest.display().to_string(), format!("{n} validation issues"))));
    }
    Ok(())
}

fn decompose_all(pool: &CheckpointPool, dirs: &[Direction]) -> Result<Vec<Vec<DecompositionReport>>, Failure> {
    dirs.iter().map(|d| Ok(decompose_pool(pool, d)?)).collect()
}

fn decompose_summary(d: &Direction, reports: &[DecompositionReport]) -> String {
    let g: Vec<f64> = reports.iter().map(|r| to_f64(r.g_inter)).collect();
    let e_train_min = reports.iter().map(|r| to_f64(r.e_train)).fold(f64::INFINITY, f64::min);
    format!(
        "{d}: {} checkpoints, min e_train {}, mean g_inter {}",
        reports.len(),
        fmt_sig(e_train_min),
        fmt_sig(mean(&g).unwrap_or(f64::NAN))
    )
}

fn decompose(a: DirectionArgs) -> CmdResult {
    let pool = load(&a.manifest)?;
    let dirs = directions(&pool, a.source.as_deref(), &a.targets)?;
    let per_dir = decompose_all(&pool, &dirs)?;
    let scale = Scale::new(a.output.percent);
    let all: Vec<DecompositionReport> = per_dir.iter().flatten().cloned().collect();
    let artifact = match a.output.format {
        Format::Csv => Artifact::csv("decompose", &decompose_table(&all, scale)),
        Format::PlotJson => Artifact::plot("decompose", &decompose_plot(&pool.model_name, &all, scale)),
    };
    deliver(&[artifact], a.output.out.as_deref())?;
    for (d, rs) in dirs.iter().zip(&per_dir) {
        summary(a.output.out.as_deref(), &decompose_summary(d, rs));
    }
    Ok(())
}

fn gap_rows(pool: &CheckpointPool, dirs: &[Direction]) -> Result<Vec<GapRow>, Failure> {
    let mut rows = Vec::new();
    for d in dirs {
        for (checkpoint_id, seed, step, gap) in transfer_gaps(pool, d)? {
            rows.push(GapRow {
                checkpoint_id,
                seed,
                step,
                source: d.source.clone(),
                target: d.target.clone(),
                gap: to_f64(gap),
            });
        }
    }
    Ok(rows)
}

fn gap(a: DirectionArgs) -> CmdResult {
    let pool = load(&a.manifest)?;
    let dirs = directions(&pool, a.source.as_deref(), &a.targets)?;
    let rows = gap_rows(&pool, &dirs)?;
    let scale = Scale::new(a.output.percent);
    let artifact = match a.output.format {
        Format::Csv => Artifact::csv("gap", &gap_table(&rows, scale)),
        Format::PlotJson => Artifact::plot("gap", &gap_plot(&pool.model_name, &rows, scale)),
    };
    deliver(&[artifact], a.output.out.as_deref())?;
    for d in &dirs {
        let g: Vec<f64> = rows.iter().filter(|r| r.target == d.target).map(|r| r.gap).collect();
        summary(
            a.output.out.as_deref(),
            &format!("{d}: {} checkpoints, mean transfer gap {}", g.len(), fmt_sig(mean(&g).unwrap_or(f64::NAN))),
        );
    }
    Ok(())
}

fn igap_groups(
    dirs: &[Direction],
    per_dir: &[Vec<DecompositionReport>],
    per_seed: bool,
    compute: impl Fn(&[DecompositionReport]) -> crate::Result<Vec<IGapResult>>,
) -> Result<Vec<IGapRows>, Failure> {
    let mut groups = Vec::new();
    for (d, reports) in dirs.iter().zip(per_dir) {
        if per_seed {
            let seeds: BTreeSet<i64> = reports.iter().map(|r| r.seed).collect();
            for seed in seeds {
                let rs: Vec<DecompositionReport> = reports.iter().filter(|r| r.seed == seed).cloned().collect();
                groups.push(IGapRows {
                    source: d.source.clone(),
                    target: d.target.clone(),
                    seed: Some(seed),
                    results: compute(&rs)?,
                });
            }
        } else {
            groups.push(IGapRows {
                source: d.source.clone(),
                target: d.target.clone(),
                seed: None,
                results: compute(reports)?,
            });
        }
    }
    Ok(groups)
}

fn window(e_prime: f64, epsilon: f64) -> String {
    format!("[{}, {})", fmt_sig(e_prime), fmt_sig(e_prime + epsilon))
}

fn igap(a: IgapArgs) -> CmdResult {
    let (profile_e, profile_eps) = match a.profile {
        Some(Profile::LargeScale) => (0.03, 0.025),
        None => (DEFAULT_E_PRIME, DEFAULT_EPSILON),
    };
    let e_prime = a.eprime.unwrap_or(profile_e);
    let epsilon = a.epsilon.unwrap_or(profile_eps);
    check_epsilon(epsilon)?;
    if !(0.0..=1.0).contains(&e_prime) {
        return Err(Failure::Usage(format!("--eprime {e_prime} outside [0, 1]")));
    }
    let d = &a.direction;
    let pool = load(&d.manifest)?;
    let dirs = directions(&pool, d.source.as_deref(), &d.targets)?;
    let per_dir = decompose_all(&pool, &dirs)?;
    let groups = igap_groups(&dirs, &per_dir, a.per_seed, |rs| Ok(vec![igap_from_reports(rs, e_prime, epsilon)?]))?;

    let empty: Vec<String> = groups
        .iter()
        .filter(|g| g.results[0].value.is_none())
        .map(|g| match g.seed {
            Some(s) => format!("{}-{} (seed {s})", g.source, g.target),
            None => format!("{}-{}", g.source, g.target),
        })
        .collect();
    if !empty.is_empty() {
        return Err(Failure::EmptyWindow(format!(
            "no checkpoint with e_train in {} for {}",
            window(e_prime, epsilon),
            empty.join(", ")
        )));
    }

    let scale = Scale::new(d.output.percent);
    let artifact = match d.output.format {
        Format::Csv => Artifact::csv("igap", &igap_table(&groups, scale)),
        Format::PlotJson => Artifact::plot("igap", &igap_plot(&pool.model_name, &groups, scale)),
    };
    deliver(&[artifact], d.output.out.as_deref())?;
    let out = d.output.out.as_deref();
    let mut values = Vec::new();
    for g in &groups {
        let r = &g.results[0];
        let v = r.value_f64().expect("checked above");
        values.push(v);
        let seed = g.seed.map(|s| format!(" seed {s}")).unwrap_or_default();
        summary(
            out,
            &format!(
                "{}-{}{seed}: IGap({}) = {} (witness {}, {} qualifying)",
                g.source,
                g.target,
                fmt_sig(e_prime),
                scale.cell(v),
                r.witness.as_deref().unwrap_or(""),
                r.qualifying_count
            ),
        );
    }
    if groups.len() > 1 {
        summary(out, &format!("mean over {} rows: {}", groups.len(), scale.cell(mean(&values).expect("non-empty"))));
    }
    Ok(())
}

fn curve_groups(
    dirs: &[Direction],
    per_dir: &[Vec<DecompositionReport>],
    grid: &[f64],
    epsilon: f64,
    per_seed: bool,
) -> Result<Vec<IGapRows>, Failure> {
    igap_groups(dirs, per_dir, per_seed, |rs| {
        Ok(igap_curve_from_reports(rs, grid, epsilon)?.points.into_iter().map(|(_, r)| r).collect())
    })
}

fn curve_summary(g: &IGapRows) -> String {
    let present = g.results.iter().filter(|r| r.value.is_some()).count();
    format!("{}-{}: {}/{} curve points present", g.source, g.target, present, g.results.len())
}

fn igap_curve(a: CurveArgs) -> CmdResult {
    check_epsilon(a.epsilon)?;
    let grid = parse_grid(&a.grid)?;
    let d = &a.direction;
    let pool = load(&d.manifest)?;
    let dirs = directions(&pool, d.source.as_deref(), &d.targets)?;
    let per_dir = decompose_all(&pool, &dirs)?;
    let groups = curve_groups(&dirs, &per_dir, &grid, a.epsilon, a.per_seed)?;
    let scale = Scale::new(d.output.percent);
    let artifact = match d.output.format {
        Format::Csv => Artifact::csv("igap_curve", &igap_table(&groups, scale)),
        Format::PlotJson => Artifact::plot("igap_curve", &igap_plot(&pool.model_name, &groups, scale)),
    };
    deliver(&[artifact], d.output.out.as_deref())?;
    for g in &groups {
        summary(d.output.out.as_deref(), &curve_summary(g));
    }
    Ok(())
}

fn similarity_metric(m: MetricArg) -> Result<SimilarityMetric, Failure> {
    match m {
        MetricArg::L2 => Ok(SimilarityMetric::L2),
        MetricArg::Dot => Ok(SimilarityMetric::Dot),
        MetricArg::Cos => Ok(SimilarityMetric::Cos),
        MetricArg::Igap => Err(Failure::Usage("igap is not a similarity metric".into())),
    }
}

fn load_embeddings(paths: &[PathBuf]) -> Result<Vec<EmbeddingRecord>, Failure> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_embeddings(p)?);
    }
    Ok(all)
}

fn embedding_languages(records: &[EmbeddingRecord]) -> BTreeSet<String> {
    records.iter().map(|r| r.language.clone()).collect()
}

fn similarity_scores(
    records: &[EmbeddingRecord],
    source: &str,
    targets: &[String],
    metric: SimilarityMetric,
) -> Result<ScoreTable, Failure> {
    let targets: Vec<String> = if targets.is_empty() {
        embedding_languages(records).into_iter().filter(|l| l != source).collect()
    } else {
        targets.to_vec()
    };
    let per_target = targets
        .iter()
        .map(|t| Ok((t.clone(), EmbeddingPairSet::assemble(source, t, records)?)))
        .collect::<crate::Result<BTreeMap<_, _>>>()?;
    Ok(similarity_table(source, &per_target, metric)?)
}

fn baseline(a: BaselineArgs) -> CmdResult {
    let metric = similarity_metric(a.metric)?;
    if a.output.format == Format::PlotJson {
        return Err(Failure::Usage("baseline emits csv only".into()));
    }
    let records = load_embeddings(&a.embeddings)?;
    let table = similarity_scores(&records, &a.source, &a.targets, metric)?;
    let ranking = rank_by_scores(&table)?;
    let scale = Scale::new(a.output.percent && metric == SimilarityMetric::Cos);
    let mut t = Table::new(&["source", "target", "metric", "score"]);
    for (target, score) in &table.scores {
        t.push(vec![a.source.clone(), target.clone(), metric.to_string(), scale.cell(*score)]);
    }
    deliver(&[Artifact::csv("baseline", &t)], a.output.out.as_deref())?;
    summary(
        a.output.out.as_deref(),
        &format!("{}: {metric} ranking {:?} ({} ties)", a.source, ranking.ordered_targets, table.tie_count()),
    );
    Ok(())
}

/// Per-source predicted score tables for `tdr`.
fn tdr_scores(a: &TdrArgs) -> Result<Vec<ScoreTable>, Failure> {
    let source_filter: BTreeSet<&str> = a.sources.iter().map(String::as_str).collect();
    let keep = |s: &str| source_filter.is_empty() || source_filter.contains(s);
    match a.metric {
        MetricArg::Igap => {
            check_epsilon(a.epsilon)?;
            if a.manifests.is_empty() {
                return Err(Failure::Usage("--metric igap needs at least one --manifest".into()));
            }
            let mut tables = Vec::new();
            for m in &a.manifests {
                let pool = load(m)?;
                for source in pool.source_languages().into_iter().filter(|s| keep(s)) {
                    let dirs = directions(&pool, Some(&source), &a.targets)?;
                    let mut values = BTreeMap::new();
                    for d in &dirs {
                        let r = igap_from_reports(&decompose_pool(&pool, d)?, a.eprime, a.epsilon)?;
                        values.insert(d.target.clone(), r.value_f64());
                    }
                    tables.push(igap_score_table(&source, &values)?);
                }
            }
            Ok(tables)
        }
        m => {
            let metric = similarity_metric(m)?;
            if a.embeddings.is_empty() {
                return Err(Failure::Usage(format!("--metric {metric} needs --embeddings")));
            }
            let records = load_embeddings(&a.embeddings)?;
            let sources: Vec<String> = if a.sources.is_empty() {
                embedding_languages(&records).into_iter().collect()
            } else {
                a.sources.clone()
            };
            sources
                .iter()
                .map(|s| {
                    let targets: Vec<String> = a.targets.iter().filter(|t| *t != s).cloned().collect();
                    similarity_scores(&records, s, &targets, metric)
                })
                .collect()
        }
    }
}

/// Gold accuracies per source from end-task pools.
fn tdr_gold(paths: &[PathBuf], tables: &[ScoreTable]) -> Result<BTreeMap<String, Ranking>, Failure> {
    let pools = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let mut out = BTreeMap::new();
    for table in tables {
        let source = &table.source_language;
        let Some(pool) = pools.iter().find(|p| p.source_languages().contains(source)) else {
            return Err(Failure::Data(Error::MissingEvalSet {
                role: "gold source_train".into(),
                language: source.clone(),
            }));
        };
        let accuracies = table
            .scores
            .keys()
            .map(|t| Ok((t.clone(), final_target_accuracy(pool, &Direction::new(source.clone(), t.clone()))?)))
            .collect::<crate::Result<BTreeMap<_, _>>>()?;
        let gold_table = ScoreTable::new(source.clone(), accuracies.clone(), crate::ranking::ScoreDirection::HigherIsBetter)?;
        if gold_table.tie_count() > 0 {
            eprintln!("warning: {source}: {} tied gold accuracies broken by language code", gold_table.tie_count());
        }
        out.insert(source.clone(), gold_ranking(source, &accuracies)?);
    }
    Ok(out)
}

fn tdr(a: TdrArgs) -> CmdResult {
    if a.output.format == Format::PlotJson {
        return Err(Failure::Usage("tdr emits csv only".into()));
    }
    let tables = tdr_scores(&a)?;
    let metric_name = format!("{:?}", a.metric).to_lowercase();
    let scale = Scale::new(a.output.percent);

    // n x n matrix over every language seen; the diagonal stays blank.
    let mut langs: BTreeSet<String> = BTreeSet::new();
    for t in &tables {
        langs.insert(t.source_language.clone());
        langs.extend(t.scores.keys().cloned());
    }
    let by_source: BTreeMap<&str, &ScoreTable> = tables.iter().map(|t| (t.source_language.as_str(), t)).collect();
    let mut header = vec!["source".to_string()];
    header.extend(langs.iter().cloned());
    let mut matrix = Table { header, rows: Vec::new() };
    for s in &langs {
        let mut row = vec![s.clone()];
        for t in &langs {
            let cell = if s == t {
                String::new()
            } else {
                by_source
                    .get(s.as_str())
                    .and_then(|tab| tab.scores.get(t))
                    .map(|v| scale.cell(*v))
                    .unwrap_or_default()
            };
            row.push(cell);
        }
        matrix.push(row);
    }

    let predicted: BTreeMap<String, Ranking> = tables
        .iter()
        .map(|t| Ok((t.source_language.clone(), rank_by_scores(t)?)))
        .collect::<crate::Result<_>>()?;
    let mut artifacts = vec![Artifact::csv("tdr_scores", &matrix)];
    let mut rankings_json = serde_json::Map::new();
    let gold = if a.gold.is_empty() { None } else { Some(tdr_gold(&a.gold, &tables)?) };
    let mut acc_table = Table::new(&["source", "metric", "n_targets", "accuracy", "predicted_ties"]);
    let mut accuracies = Vec::new();
    for table in &tables {
        let s = &table.source_language;
        let p = &predicted[s];
        let mut entry = serde_json::Map::new();
        entry.insert("predicted".into(), serde_json::json!(p.ordered_targets));
        if let Some(gold) = &gold {
            let g = &gold[s];
            let c = tdr_concordance(g, p)?;
            accuracies.push(c.accuracy());
            entry.insert("gold".into(), serde_json::json!(g.ordered_targets));
            acc_table.push(vec![
                s.clone(),
                metric_name.clone(),
                p.len().to_string(),
                scale.cell(c.accuracy()),
                table.tie_count().to_string(),
            ]);
        }
        rankings_json.insert(s.clone(), serde_json::Value::Object(entry));
    }
    let mut rankings_text = serde_json::to_string_pretty(&rankings_json).expect("rankings serialize");
    rankings_text.push('\n');
    artifacts.push(Artifact {
        file_name: "rankings.json".into(),
        bytes: rankings_text.into_bytes(),
    });
    if gold.is_some() {
        artifacts.push(Artifact::csv("tdr_accuracy", &acc_table));
    }
    deliver(&artifacts, a.output.out.as_deref())?;
    for (s, p) in &predicted {
        summary(a.output.out.as_deref(), &format!("{s}: {metric_name} ranking {:?}", p.ordered_targets));
    }
    if let Some(m) = mean(&accuracies) {
        summary(a.output.out.as_deref(), &format!("mean TDR accuracy over {} sources: {}", accuracies.len(), scale.cell(m)));
    }
    Ok(())
}

fn gen_labels(a: GenLabelsArgs) -> CmdResult {
    let corpus = match (&a.corpus, &a.ids, &a.text_a, &a.text_b) {
        (Some(tsv), None, None, None) => ParallelCorpus::read_tsv(tsv, &a.source, &a.target)?,
        (None, Some(ids), Some(ta), Some(tb)) => {
            ParallelCorpus::read_paired_files(ids, ta, tb, &a.source, &a.target)?
        }
        _ => return Err(Failure::Usage("pass --corpus, or --ids with --text-a and --text-b".into())),
    };
    if a.num_labels == 0 {
        return Err(Failure::Usage("--num-labels must be positive".into()));
    }
    let labeled = gen_random_labels(&corpus, a.seed, a.num_labels)?;
    let written = labeled.write(&a.out)?;
    println!(
        "{}-{}: {} pairs labeled over {} classes (seed {}); wrote {} files to {}",
        a.source,
        a.target,
        labeled.labels.len(),
        a.num_labels,
        a.seed,
        written.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct IntLabelLine {
    example_id: String,
    label: u32,
}

fn corrupt(a: CorruptArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&a.ratio) {
        return Err(Failure::Usage(format!("--ratio {} outside [0, 1]", a.ratio)));
    }
    if a.num_labels == 0 {
        return Err(Failure::Usage("--num-labels must be positive".into()));
    }
    let mut sets = Vec::new();
    let mut names = BTreeSet::new();
    for (i, path) in a.labels.iter().enumerate() {
        let name = path
            .file_name()
            .ok_or_else(|| Failure::Usage(format!("{} is not a file", path.display())))?
            .to_owned();
        if !names.insert(name.clone()) {
            return Err(Failure::Usage(format!("two label files named {name:?}")));
        }
        let lines: Vec<IntLabelLine> = read_jsonl(path)?;
        let mut set = EvalSet {
            eval_set_id: name.to_string_lossy().into_owned(),
            language: String::new(),
            role: if i == 0 { Role::SourceTrain } else { Role::TranslatedTrain },
            num_labels: a.num_labels,
            labels: lines
                .into_iter()
                .map(|l| ExampleLabel { example_id: l.example_id, label: l.label })
                .collect(),
            translation_of: None,
        };
        if let Some(bad) = set.labels.iter().find(|l| l.label >= a.num_labels) {
            return Err(Failure::Data(Error::schema(
                path.display().to_string(),
                format!("label {} of \"{}\" >= --num-labels {}", bad.label, bad.example_id, a.num_labels),
            )));
        }
        set.canonicalize();
        sets.push((name, set));
    }
    let corrupted = corrupt_labels_joint(&sets.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>(), a.ratio, a.seed)?;
    for ((name, original), out) in sets.iter().zip(&corrupted) {
        let changed = original.labels.iter().zip(&out.labels).filter(|(x, y)| x.label != y.label).count();
        write_labels(&a.out.join(name), &out.labels)?;
        println!(
            "{}: {} of {} labels resampled, {} changed",
            name.to_string_lossy(),
            crate::corpus::corruption_count(a.ratio, original.len()),
            original.len(),
            changed
        );
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.config).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile { path: a.config.clone() },
        _ => Error::Io { context: format!("reading {}", a.config.display()), source: e },
    })?;
    let config = SimConfig::from_json(&text)?;
    let pool = simulate_pool(&config)?;
    let manifest = write_pool(&pool, &a.out)?;
    println!(
        "wrote {} checkpoints over {} eval sets to {}",
        pool.checkpoints.len(),
        pool.eval_sets.len(),
        manifest.display()
    );
    Ok(())
}

fn report_all(a: ReportArgs) -> CmdResult {
    check_epsilon(a.epsilon)?;
    let grid = parse_grid(&a.grid)?;
    let pool = load(&a.manifest)?;
    let dirs = directions(&pool, a.source.as_deref(), &a.targets)?;
    let per_dir = decompose_all(&pool, &dirs)?;
    let scale = Scale::new(a.percent);
    let all: Vec<DecompositionReport> = per_dir.iter().flatten().cloned().collect();
    let model = &pool.model_name;

    let mut artifacts = vec![
        Artifact::csv("decompose", &decompose_table(&all, scale)),
        Artifact::plot("decompose", &decompose_plot(model, &all, scale)),
    ];
    let has_gap = dirs.iter().all(|d| pool.validation_pair(d).is_ok());
    if has_gap {
        let rows = gap_rows(&pool, &dirs)?;
        artifacts.push(Artifact::csv("gap", &gap_table(&rows, scale)));
        artifacts.push(Artifact::plot("gap", &gap_plot(model, &rows, scale)));
    }
    let groups = curve_groups(&dirs, &per_dir, &grid, a.epsilon, false)?;
    artifacts.push(Artifact::csv("igap_curve", &igap_table(&groups, scale)));
    artifacts.push(Artifact::plot("igap_curve", &igap_plot(model, &groups, scale)));
    emit(&artifacts, &a.out)?;
    for ((d, rs), g) in dirs.iter().zip(&per_dir).zip(&groups) {
        println!("{}; {}", decompose_summary(d, rs), curve_summary(g));
    }
    Ok(())
}
