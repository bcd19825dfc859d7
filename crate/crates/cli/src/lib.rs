//! The `ivaclean` command line.
//!
//! [`run`] parses an argument list, validates every flag against the
//! corresponding config type before touching the filesystem, runs one
//! subcommand and returns the process exit code: 0 on success, 1 when a
//! stage fails at runtime, 2 on a usage error.

mod plot;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use ivaclean_core::filtering::{apply_zero_phase, design_bandpass};
use ivaclean_core::metrics::{compare_methods, render_table, RowStatus};
use ivaclean_core::pipeline::remove_artifacts;
use ivaclean_core::recording::{load_recording, save_recording};
use ivaclean_core::semisim::{gen_dataset_batch, gen_ground_truth};
use ivaclean_core::{BandpassSpec, EvalRow, IdentifyConfig, Method, PipelineConfig, Recording, SimConfig, TableFormat};
use thiserror::Error;

pub use plot::{plot_svg, render_svg, select_channels};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Core(#[from] ivaclean_core::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: ivaclean_core::Error,
    },

    #[error("unknown channel {name:?}; valid labels: {}", .valid.join(", "))]
    UnknownChannel { name: String, valid: Vec<String> },

    #[error("overlay shape {overlay:?} does not match {base:?}")]
    OverlayMismatch {
        base: (usize, usize),
        overlay: (usize, usize),
    },

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn at(stage: &'static str) -> impl FnOnce(ivaclean_core::Error) -> CliError {
    move |source| CliError::Stage { stage, source }
}

fn usage(e: ivaclean_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ivaclean", version, about = "Muscle-artifact removal for multichannel EEG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded clean / artifact / contaminated recording triple.
    Simulate(SimulateArgs),
    /// Band-pass filter a recording (zero phase).
    Filter(FilterArgs),
    /// Remove muscle artifacts and write the cleaned recording and a report.
    Remove(RemoveArgs),
    /// Score one cleaned recording against its clean reference.
    Evaluate(EvaluateArgs),
    /// Run several methods over a seeded batch and print the RMSE/SNR table.
    Compare(CompareArgs),
    /// Draw selected channels as an SVG, optionally with an overlay.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Iva,
    #[value(alias = "fastica")]
    Ica,
    Cca,
    Sobi,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Iva => Method::Iva,
            MethodArg::Ica => Method::Ica,
            MethodArg::Cca => Method::Cca,
            MethodArg::Sobi => Method::Sobi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    #[value(alias = "md")]
    Markdown,
}

impl From<FormatArg> for TableFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Markdown => TableFormat::Markdown,
        }
    }
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = SimConfig::default().n_channels)]
    n_channels: usize,
    #[arg(long, allow_negative_numbers = true, default_value_t = SimConfig::default().fs_hz)]
    fs_hz: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = SimConfig::default().duration_s)]
    duration_s: f64,
    /// RMS(artifact) / RMS(clean) where the artifact is active.
    #[arg(long, allow_negative_numbers = true, default_value_t = SimConfig::default().contamination_ratio)]
    contamination_ratio: f64,
    #[arg(long, default_value_t = SimConfig::default().n_bursts)]
    n_bursts: usize,
    #[arg(long, default_value_t = SimConfig::default().burst_channels)]
    burst_channels: usize,
}

impl SimArgs {
    fn config(&self, seed: u64) -> Result<SimConfig, CliError> {
        let cfg = SimConfig {
            seed,
            n_channels: self.n_channels,
            fs_hz: self.fs_hz,
            duration_s: self.duration_s,
            contamination_ratio: self.contamination_ratio,
            n_bursts: self.n_bursts,
            burst_channels: self.burst_channels,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct BandArgs {
    #[arg(long, allow_negative_numbers = true, default_value_t = BandpassSpec::DEFAULT_LOW_HZ)]
    low_cut_hz: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = BandpassSpec::DEFAULT_HIGH_HZ)]
    high_cut_hz: f64,
    #[arg(long, alias = "order", default_value_t = BandpassSpec::DEFAULT_ORDER)]
    filter_order: usize,
}

impl BandArgs {
    /// Checks the band against `fs_hz`, or when the rate is not known yet
    /// against any rate high enough to hold the band.
    fn check(&self, fs_hz: Option<f64>) -> Result<(), CliError> {
        let fs = fs_hz.unwrap_or(4.0 * self.high_cut_hz.abs().max(1.0));
        BandpassSpec::new(self.low_cut_hz, self.high_cut_hz, self.filter_order, fs)
            .map(|_| ())
            .map_err(usage)
    }
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    band: BandArgs,
    #[arg(long, allow_negative_numbers = true, default_value_t = IdentifyConfig::default().autocorr_threshold)]
    autocorr_threshold: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = IdentifyConfig::default().band_ratio_threshold)]
    band_ratio_threshold: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = IdentifyConfig::default().max_reject_fraction)]
    max_reject_fraction: f64,
    /// Consecutive segments IVA treats as separate data sets.
    #[arg(long, default_value_t = PipelineConfig::default().iva_segments)]
    iva_segments: usize,
    /// Seed for the randomised engines.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn config(&self, method: Method, fs_hz: Option<f64>) -> Result<PipelineConfig, CliError> {
        self.band.check(fs_hz)?;
        let cfg = PipelineConfig {
            method,
            low_cut_hz: self.band.low_cut_hz,
            high_cut_hz: self.band.high_cut_hz,
            filter_order: self.band.filter_order,
            identify: IdentifyConfig {
                autocorr_threshold: self.autocorr_threshold,
                band_ratio_threshold: self.band_ratio_threshold,
                max_reject_fraction: self.max_reject_fraction,
            },
            seed: self.seed,
            iva_segments: self.iva_segments,
            ..PipelineConfig::default()
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem; writes `<out>_clean`, `<out>_artifact`, `<out>_contaminated`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    band: BandArgs,
}

#[derive(Debug, Args)]
struct RemoveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "iva")]
    method: MethodArg,
    /// Report path; defaults to `<out>_report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Keep wall-clock stage timings in the report (makes it non-reproducible).
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Method label for the row.
    #[arg(long, value_enum, default_value = "iva")]
    method: MethodArg,
    #[arg(long, default_value_t = 1)]
    dataset_id: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Inclusive seed range such as `1..5`.
    #[arg(long, value_parser = parse_seed_range, conflicts_with_all = ["count", "base_seed"])]
    seeds: Option<(u64, u64)>,
    /// Number of datasets, seeded from `--base-seed` upwards.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "iva,ica,cca")]
    methods: Vec<MethodArg>,
    /// Table path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    /// Second recording drawn over the first in a dashed stroke.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Comma-separated channel labels; all channels when absent.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_seed_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| format!("expected a range like 1..5, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("bad seed {v:?}: {e}"));
    let (lo, hi) = (parse(a)?, parse(b)?);
    if lo > hi {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok((lo, hi))
}

fn load(path: &Path) -> Result<Recording, CliError> {
    load_recording(path).map_err(at("load"))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = args.sim.config(args.seed)?;
    let gt = gen_ground_truth(&cfg).map_err(at("simulate"))?;
    gt.save(&args.out).map_err(at("save"))?;
    eprintln!(
        "wrote {}_{{clean,artifact,contaminated}} ({} channels, {} samples)",
        args.out.display(),
        cfg.n_channels,
        cfg.n_samples()
    );
    Ok(())
}

fn filter(args: &FilterArgs) -> Result<(), CliError> {
    args.band.check(None)?;
    let rec = load(&args.input)?;
    let spec = BandpassSpec::new(args.band.low_cut_hz, args.band.high_cut_hz, args.band.filter_order, rec.fs_hz)
        .map_err(at("filter"))?;
    let out = design_bandpass(&spec)
        .and_then(|f| apply_zero_phase(&f, &rec))
        .map_err(at("filter"))?;
    save_recording(&out, &args.out).map_err(at("save"))
}

/// Report JSON with the wall-clock fields removed unless asked for, so that
/// repeated runs write identical files.
fn report_json(report: &ivaclean_core::PipelineReport, timings: bool) -> String {
    let mut value = serde_json::to_value(report).expect("report serializes");
    if !timings {
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timings_ms");
            obj.remove("total_ms");
        }
    }
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    text
}

fn remove(args: &RemoveArgs) -> Result<(), CliError> {
    let cfg = args.pipeline.config(args.method.into(), None)?;
    let rec = load(&args.input)?;
    let (cleaned, report) = remove_artifacts(&rec, &cfg)?;
    save_recording(&cleaned, &args.out).map_err(at("save"))?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, "_report.json"));
    write_file(&report_path, &report_json(&report, args.timings))?;

    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let stages: Vec<String> = report
        .timings_ms
        .iter()
        .map(|t| format!("{} {:.1} ms", t.stage, t.ms))
        .collect();
    eprintln!(
        "{}: rejected {:?}; {} (total {:.1} ms)",
        report.engine,
        report.rejected,
        stages.join(", "),
        report.total_ms
    );
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let clean = load(&args.clean)?;
    let output = load(&args.output)?;
    let row = EvalRow::score(args.dataset_id, args.method.into(), &clean, &output).map_err(at("evaluate"))?;
    print!("{}", render_table(&[row], args.format.into()));
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let (base, count) = match (args.seeds, args.count) {
        (Some((lo, hi)), _) => (lo, (hi - lo + 1) as usize),
        (None, Some(0)) => return Err(CliError::Usage("--count must be at least 1".into())),
        (None, Some(n)) => (args.base_seed.unwrap_or(1), n),
        (None, None) => (args.base_seed.unwrap_or(1), 5),
    };
    let sim = args.sim.config(base)?;
    let mut methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    methods.sort();
    methods.dedup();
    let Some(&first) = methods.first() else {
        return Err(CliError::Usage("--methods must name at least one method".into()));
    };
    let cfg = args.pipeline.config(first, Some(sim.fs_hz))?;
    if methods.contains(&Method::Iva) {
        args.pipeline.config(Method::Iva, Some(sim.fs_hz))?;
    }

    let batch = gen_dataset_batch(base, count, &sim).map_err(at("simulate"))?;
    let rows = compare_methods(&batch, &methods, &cfg).map_err(at("compare"))?;
    for row in &rows {
        if let RowStatus::Failed(msg) = &row.status {
            eprintln!("warning: dataset {} {} failed: {msg}", row.dataset_id, row.method);
        }
    }
    let table = render_table(&rows, args.format.into());
    match &args.out {
        Some(path) => write_file(path, &table),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(table.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn plot(args: &PlotArgs) -> Result<(), CliError> {
    let base = load(&args.input)?;
    let overlay = args.overlay.as_deref().map(load).transpose()?;
    let mut recs = vec![&base];
    recs.extend(overlay.as_ref());
    plot_svg(&recs, &args.channels, &args.out)
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Filter(_) => "filter",
            Command::Remove(_) => "remove",
            Command::Evaluate(_) => "evaluate",
            Command::Compare(_) => "compare",
            Command::Plot(_) => "plot",
        }
    }

    fn execute(&self) -> Result<(), CliError> {
        match self {
            Command::Simulate(a) => simulate(a),
            Command::Filter(a) => filter(a),
            Command::Remove(a) => remove(a),
            Command::Evaluate(a) => evaluate(a),
            Command::Compare(a) => compare(a),
            Command::Plot(a) => plot(a),
        }
    }
}

/// Runs the command line given in `argv` (program name first) and returns
/// the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match cli.command.execute() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.command.name());
            if let CliError::Usage(_) = e {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("1..5"), Ok((1, 5)));
        assert_eq!(parse_seed_range("3..=3"), Ok((3, 3)));
        assert!(parse_seed_range("5..1").is_err());
        assert!(parse_seed_range("7").is_err());
    }

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }
}
