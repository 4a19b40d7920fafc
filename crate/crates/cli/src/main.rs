//! `cmrt`: generate community modulated recursive trees, summarise and
//! estimate from tree files, run verification specs and the continuous-time
//! engine.
//!
//! Exit codes: 0 success, 1 runtime error or failed verification,
//! 2 not identifiable, 3 infeasible moments, 64 usage or schema error.

mod model_args;
mod treeio;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cmrt::embed::{self, Pdbp, Sampling};
use cmrt::estimate::{estimate_pq, EstimationStatus};
use cmrt::gen::Model;
use cmrt::mc::{ExperimentSpec, McError};
use cmrt::rng::SeededRng;
use cmrt::stats::{degree_histogram, summarize, DegreeConvention, DegreeHistogram};
use serde::Serialize;
use thiserror::Error;

use model_args::ModelArgs;
use treeio::{Format, Provenance};

const EXIT_FAILED: u8 = 1;
const EXIT_NOT_IDENTIFIABLE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_USAGE: u8 = 64;

const BUNDLED_SPECS: [(&str, &str); 2] = [
    ("urt-baseline", include_str!("../specs/urt-baseline.toml")),
    ("cmrt-degree", include_str!("../specs/cmrt-degree.toml")),
];

/// Bad flags, parameters, spec files or input files.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "cmrt", version, about = "Community modulated recursive trees")]
struct Cli {
    /// Master seed; replicate i uses stream i of this seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for replicate loops.
    #[arg(long, global = true, env = "CMRT_THREADS")]
    threads: Option<usize>,
    /// Output path; standard output when absent.
    #[arg(long, short = 'o', global = true)]
    output: Option<PathBuf>,
    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Convention {
    Out,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplingArg {
    Dyadic,
    EveryEvent,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grow trees and write them as TSV edge lists (or dot, graphml, json).
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of vertices, roots included.
        #[arg(long)]
        n: usize,
        /// Number of trees; with more than one, files are named
        /// `<stem>-<i>.<ext>` next to --output.
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
    /// Summary statistics and degree histogram of a tree file, as JSON.
    Stats {
        input: PathBuf,
        /// Degree convention for the maximal degree.
        #[arg(long, value_enum, default_value = "out")]
        degree: Convention,
    },
    /// Moment estimates of (p, q) from a tree file or a histogram JSON.
    Estimate { input: PathBuf },
    /// Run an experiment spec (a TOML path or a bundled name:
    /// urt-baseline, cmrt-degree).
    Verify { spec: String },
    /// Run the continuous-time process; writes the event log (tsv) or a
    /// JSON bundle with stopping times and martingale diagnostics.
    Embed {
        #[command(flatten)]
        model: ModelArgs,
        /// Stop when the population reaches this size.
        #[arg(long, required_unless_present = "until_time", conflicts_with = "until_time")]
        n: Option<usize>,
        /// Stop at this time instead.
        #[arg(long)]
        until_time: Option<f64>,
        /// Where two-type martingale samples are taken.
        #[arg(long, value_enum, default_value = "dyadic")]
        sampling: SamplingArg,
        /// Also write the diagnostics JSON here.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Also write the genealogy here as a TSV tree.
        #[arg(long)]
        tree: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("cmrt: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("configuring thread pool")?;
    }
    let out = Output { path: cli.output.clone() };
    match &cli.command {
        Command::Generate { model, n, replicates } => generate(&cli, &out, model, *n, *replicates),
        Command::Stats { input, degree } => stats(&cli, &out, input, *degree),
        Command::Estimate { input } => estimate(&cli, &out, input),
        Command::Verify { spec } => verify(&cli, &out, spec),
        Command::Embed { model, n, until_time, sampling, diagnostics, tree } => {
            embed_cmd(&cli, &out, model, *n, *until_time, *sampling, diagnostics.as_deref(), tree.as_deref())
        }
    }
}

/// Writes to a path through a temporary file in the same directory, so the
/// target is either absent, the old file, or the complete new file.
struct Output {
    path: Option<PathBuf>,
}

impl Output {
    fn write(&self, bytes: &[u8]) -> Result<()> {
        match &self.path {
            Some(path) => write_atomic(path, bytes),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(bytes)?;
                stdout.flush()?;
                Ok(())
            }
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn pick_format(cli: &Cli, default: Format, allowed: &[Format], command: &str) -> Result<Format> {
    let format = cli.format.unwrap_or(default);
    if allowed.contains(&format) {
        Ok(format)
    } else {
        let name = format.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        Err(usage(format!("{command} does not support --format {name}")))
    }
}

fn json_line<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn generate(cli: &Cli, out: &Output, args: &ModelArgs, n: usize, replicates: usize) -> Result<u8> {
    let format = pick_format(cli, Format::Tsv, &[Format::Tsv, Format::Dot, Format::Graphml, Format::Json], "generate")?;
    let model = args.build()?;
    if n < model.min_size() {
        return Err(usage(format!("--model {} needs --n >= {}", model.name(), model.min_size())));
    }
    if replicates == 0 {
        return Err(usage("--replicates must be at least 1"));
    }
    if replicates > 1 && out.path.is_none() {
        return Err(usage("--replicates above 1 needs --output"));
    }
    for idx in 0..replicates {
        let mut rng = SeededRng::replicate(cli.seed, 0, idx as u32).rng();
        let tree = model.generate(n, &mut rng)?;
        let prov = Provenance { model: Some(model.clone()), seed: Some(cli.seed) };
        let mut text = treeio::write_tree(&tree, &prov, format);
        if format == Format::Tsv && replicates > 1 {
            text = text.replacen("# n:", &format!("# replicate: {}\n# n:", idx + 1), 1);
        }
        match (&out.path, replicates) {
            (Some(path), r) if r > 1 => write_atomic(&numbered(path, idx + 1), text.as_bytes())?,
            _ => out.write(text.as_bytes())?,
        }
    }
    Ok(0)
}

/// `trees.tsv` -> `trees-3.tsv`.
fn numbered(path: &Path, idx: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-{idx}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{idx}"),
    };
    path.with_file_name(name)
}

fn read_tree_file(path: &Path) -> Result<cmrt::tree::RecursiveTree> {
    let text = read_input(path)?;
    treeio::read_tree(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct StatsDoc {
    summary: cmrt::stats::TreeSummary,
    histogram: DegreeHistogram,
}

fn stats(cli: &Cli, out: &Output, input: &Path, degree: Convention) -> Result<u8> {
    pick_format(cli, Format::Json, &[Format::Json], "stats")?;
    let tree = read_tree_file(input)?;
    let convention = match degree {
        Convention::Out => DegreeConvention::Out,
        Convention::Total => DegreeConvention::Total,
    };
    let doc = StatsDoc { summary: summarize(&tree, convention), histogram: degree_histogram(&tree) };
    out.write(&json_line(&doc)?)?;
    Ok(0)
}

/// Degree counts from a JSON document: top-level `N_k`, or the one inside
/// `histogram` or `summary` as written by `stats`.
fn histogram_from_json(text: &str) -> Result<DegreeHistogram, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("json: {e}"))?;
    let counts = [&value, &value["histogram"], &value["summary"]]
        .into_iter()
        .find_map(|v| v.get("N_k"))
        .ok_or("json has no N_k array")?;
    let counts: Vec<u64> = serde_json::from_value(counts.clone()).map_err(|e| format!("N_k: {e}"))?;
    if counts.iter().sum::<u64>() == 0 {
        return Err("N_k is empty".into());
    }
    Ok(DegreeHistogram::from_counts(counts))
}

fn estimate(cli: &Cli, out: &Output, input: &Path) -> Result<u8> {
    pick_format(cli, Format::Json, &[Format::Json], "estimate")?;
    let text = read_input(input)?;
    let is_tree_json = text.contains("\"parent\"");
    let hist = if text.trim_start().starts_with('{') && !is_tree_json {
        histogram_from_json(&text).map_err(|e| usage(format!("{}: {e}", input.display())))?
    } else {
        degree_histogram(&treeio::read_tree(&text).map_err(|e| usage(format!("{}: {e}", input.display())))?)
    };
    let result = estimate_pq(&hist);
    out.write(&json_line(&result)?)?;
    Ok(match result.status {
        EstimationStatus::Ok => 0,
        EstimationStatus::NotIdentifiable => EXIT_NOT_IDENTIFIABLE,
        EstimationStatus::InfeasibleMoments => EXIT_INFEASIBLE,
    })
}

fn verify(cli: &Cli, out: &Output, spec: &str) -> Result<u8> {
    let format = pick_format(cli, Format::Tsv, &[Format::Tsv, Format::Json], "verify")?;
    let path = Path::new(spec);
    let text = if path.exists() {
        read_input(path)?
    } else if let Some((_, text)) = BUNDLED_SPECS.iter().find(|(name, _)| *name == spec) {
        text.to_string()
    } else {
        let names: Vec<&str> = BUNDLED_SPECS.iter().map(|(n, _)| *n).collect();
        return Err(usage(format!("no spec file {spec:?} and no bundled spec of that name ({})", names.join(", "))));
    };
    let spec = ExperimentSpec::from_toml(&text).map_err(|e| usage(e.to_string()))?;
    let report = spec.run().map_err(|e| match e {
        McError::Spec(msg) => usage(msg),
        other => anyhow!(other),
    })?;
    let bytes = match format {
        Format::Json => json_line(&report)?,
        _ => report.to_text().into_bytes(),
    };
    out.write(&bytes)?;
    Ok(if report.pass { 0 } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct EmbedDoc {
    model: Model,
    seed: u64,
    time: f64,
    population: usize,
    counts: Vec<usize>,
    /// `T_m` for sizes `m = 2^j` reached during the run, plus the final size.
    hitting_times: Vec<(usize, f64)>,
    w_type0: Option<f64>,
    w_total: Option<f64>,
    martingale: Option<Vec<embed::MartingaleSample>>,
}

#[allow(clippy::too_many_arguments)]
fn embed_cmd(
    cli: &Cli,
    out: &Output,
    args: &ModelArgs,
    n: Option<usize>,
    until_time: Option<f64>,
    sampling: SamplingArg,
    diagnostics: Option<&Path>,
    tree_path: Option<&Path>,
) -> Result<u8> {
    let format = pick_format(cli, Format::Tsv, &[Format::Tsv, Format::Json], "embed")?;
    let model = args.build()?;
    let mut rng = SeededRng::replicate(cli.seed, 0, 0).rng();
    let mut process = Pdbp::new(&model, true, &mut rng)?;
    let first = process.state().population();
    let mut hitting_times = Vec::new();
    let (mut w_type0, mut w_total) = (None, None);
    match (n, until_time) {
        (Some(n), _) => {
            if n < first {
                return Err(usage(format!("--n must be at least the initial population {first}")));
            }
            let record = process.run_until(n, &mut rng)?;
            for m in first..=n {
                if m.is_power_of_two() || m == n {
                    hitting_times.push((m, record.hitting_time(m).expect("hitting time")));
                }
            }
            w_type0 = Some(record.w_type0);
            w_total = Some(record.w_total);
        }
        (None, Some(t)) => {
            if !(t.is_finite() && t >= 0.0) {
                return Err(usage("--until-time must be a finite non-negative number"));
            }
            process.run_until_time(t, &mut rng)?;
        }
        (None, None) => return Err(usage("embed needs --n or --until-time")),
    }
    let state = process.into_state();
    let events = state.events().unwrap_or(&[]).to_vec();
    let martingale = match &model {
        Model::Cmrt2 { params, .. } => {
            let tree = state.genealogy();
            let initial = (0..first).fold((0u64, 0u64), |(a, b), v| if tree.vtype(v) == 0 { (a + 1, b) } else { (a, b + 1) });
            let sampling = match sampling {
                SamplingArg::Dyadic => Sampling::Dyadic,
                SamplingArg::EveryEvent => Sampling::EveryEvent,
            };
            Some(embed::martingale_diagnostics(initial, &events, params, sampling))
        }
        _ => None,
    };
    let doc = EmbedDoc {
        model: model.clone(),
        seed: cli.seed,
        time: state.time(),
        population: state.population(),
        counts: state.counts(),
        hitting_times,
        w_type0,
        w_total,
        martingale,
    };
    if let Some(path) = diagnostics {
        write_atomic(path, &json_line(&doc)?)?;
    }
    if let Some(path) = tree_path {
        let prov = Provenance { model: Some(model.clone()), seed: Some(cli.seed) };
        write_atomic(path, treeio::write_tree(state.genealogy(), &prov, Format::Tsv).as_bytes())?;
    }
    match format {
        Format::Json => out.write(&json_line(&doc)?)?,
        _ => {
            let mut buf = Vec::new();
            embed::write_event_log(&events, &mut buf)?;
            out.write(&buf)?;
        }
    }
    Ok(0)
}
