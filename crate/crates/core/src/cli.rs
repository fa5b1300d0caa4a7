//! `pitrack` command line: dataset generation, tracking, self-checks and
//! factorial effect analysis.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::SimConfig;
use crate::dataset::{generate_dataset, SplitReader, MANIFEST_FILE};
use crate::doe::{
    self, estimate_all, rank_effects, render_ranking, write_effects_csv, CensorPolicy, FactorConfig, PlantedModel,
    ResponseTable, Term, DEC_AVG, DEC_METRICS, ENC_AVG, ENC_METRICS, FACTORS,
};
use crate::error::{Error, Result};
use crate::manifest::{OutputLock, ResolvedConfig, RunManifest};
use crate::rng::Split;
use crate::selfcheck::{run_selfcheck, Fault, SelfCheckOptions};
use crate::tracker::{
    evaluate_stream, read_metric_rows, write_metric_rows, write_metrics_csv, write_predictions_csv, Metric,
    MetricTable, TrackerOptions,
};

#[derive(Debug, Parser)]
#[command(name = "pitrack", version, about = "Physics-informed ball tracking toolkit")]
pub struct Cli {
    /// Root under which commands place their default output directories.
    #[arg(long, global = true, env = "PITRACK_OUT", default_value = "pitrack-out")]
    pub out_root: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val/test splits for each noise level.
    Gen(GenArgs),
    /// Run the matched-filter tracker on a split and score it.
    Track(TrackArgs),
    /// Check gradients, parabola exactness and unit conversion.
    Selfcheck(SelfcheckArgs),
    /// Estimate factorial effects from results CSVs.
    Effects(EffectsArgs),
    /// Write a results CSV for a reference design.
    Fixture(FixtureArgs),
}

/// Simulation flags. Each one overrides the config file.
#[derive(Debug, Args, Default)]
pub struct SimFlags {
    /// JSON config: either `{"sim": {...}, ...}` or a previous run manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Gravitational acceleration in m/s².
    #[arg(long)]
    pub gravity: Option<f64>,
    #[arg(long)]
    pub restitution: Option<f64>,
    /// Seconds per frame.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Meters per pixel.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Ball radius in pixels.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Maximum initial speed per axis in m/s.
    #[arg(long)]
    pub vmax: Option<f64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub image_size: Option<u32>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub sim: SimFlags,
    /// Noise level; repeat for several. Each gets its own `sigma_<σ>` directory.
    #[arg(long = "sigma", default_values_t = [0.0])]
    pub sigmas: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Dataset directory holding `manifest.json`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Subtract the window's 3-frame mean before matching.
    #[arg(long)]
    pub temporal_mean: bool,
    /// Design cell recorded in the metrics CSV, as a label or row index.
    /// Defaults to the all-low cell with F set by the dataset's noise level.
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub replicate: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FaultArg {
    BrokenKernel,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Probes per gradient suite and windows in the parabola suite.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub probe_seed: u64,
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<FaultArg>,
    #[command(flatten)]
    pub sim: SimFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EffectsArgs {
    /// Results CSV (`config,replicate,metric,value`); repeat to concatenate.
    #[arg(long = "results", required = true)]
    pub results: Vec<PathBuf>,
    /// Replicates per cell; inferred from the data when omitted.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Leave terms containing these factors out of the ranking, e.g. `F`.
    #[arg(long = "exclude-factor")]
    pub exclude: Vec<char>,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureKind {
    /// y = 3 + 2·x_A − x_BC on every position metric.
    Planted,
    /// Reference per-configuration mean errors.
    ReferenceMeans,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CensorArg {
    Midpoint,
    LowerBound,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, value_enum)]
    pub kind: FixtureKind,
    #[arg(long, default_value_t = doe::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, value_enum, default_value = "midpoint")]
    pub censor: CensorArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Returns `Ok(false)` when the command ran but reported failed checks.
pub fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, &out_dir(&a.out, &cli.out_root, "data")).map(|_| true),
        Command::Track(a) => cmd_track(a, &out_dir(&a.out, &cli.out_root, "track")).map(|_| true),
        Command::Selfcheck(a) => cmd_selfcheck(a, &out_dir(&a.out, &cli.out_root, "selfcheck")),
        Command::Effects(a) => cmd_effects(a, &out_dir(&a.out, &cli.out_root, "effects")).map(|_| true),
        Command::Fixture(a) => cmd_fixture(a, &out_dir(&a.out, &cli.out_root, "fixture")).map(|_| true),
    }
}

fn out_dir(explicit: &Option<PathBuf>, root: &Path, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| root.join(name))
}

/// Loads the config file (if any) and applies flag overrides.
pub fn resolve_config(flags: &SimFlags) -> Result<ResolvedConfig> {
    let mut cfg = match &flags.config {
        None => ResolvedConfig::default(),
        Some(path) => {
            let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
            let inner = match (value.get("command"), value.get("config")) {
                (Some(_), Some(c)) => c.clone(),
                _ => value,
            };
            serde_json::from_value(inner)?
        }
    };
    let s = &mut cfg.sim;
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = flags.$flag { s.$field = v; })*
        };
    }
    apply!(
        gravity => gravity, restitution => restitution, dt => dt, scale => scale, radius => radius_px,
        vmax => v_max, frames => frames_per_video, seed => seed, image_size => image_size,
        n_train => n_train, n_val => n_val, n_test => n_test
    );
    s.validate()?;
    Ok(cfg)
}

pub fn sigma_dir(out: &Path, sigma: f64) -> PathBuf {
    out.join(format!("sigma_{sigma}"))
}

pub fn cmd_gen(args: &GenArgs, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let cfg = resolve_config(&args.sim)?;
    if args.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidConfig(format!("noise levels must be non-negative, got {:?}", args.sigmas)));
    }
    let _lock = OutputLock::acquire(out)?;
    let mut manifest = RunManifest::new("gen", cfg.clone(), json!({ "sigmas": args.sigmas }));
    for &sigma in &args.sigmas {
        let dir = sigma_dir(out, sigma);
        let sim = SimConfig { noise_sigma: sigma, ..cfg.sim.clone() };
        generate_dataset(&dir, &sim)?;
        println!("wrote {} (sigma {sigma})", dir.display());
        manifest.outputs.push(dir);
    }
    let manifest = manifest.finish(start.elapsed());
    manifest.write(out)?;
    Ok(manifest)
}

pub fn cmd_track(args: &TrackArgs, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let split = Split::from(args.split);
    if !args.data.join(MANIFEST_FILE).is_file() {
        return Err(Error::MissingDataset(args.data.clone()));
    }
    let (ds, reader) = SplitReader::open(&args.data, split)?;
    let design = match &args.design {
        Some(s) => s.parse::<FactorConfig>()?,
        None => FactorConfig::from_levels([false, false, false, false, false, ds.config.noise_sigma > 0.0]),
    };
    let opts = TrackerOptions { temporal_mean: args.temporal_mean };
    let _lock = OutputLock::acquire(out)?;
    let (table, tracks) = evaluate_stream(reader, &ds.config, &opts)?;

    let metrics_path = out.join("metrics.csv");
    write_metrics_csv(BufWriter::new(File::create(&metrics_path)?), &design.to_string(), args.replicate, &table)?;
    let predictions_path = out.join("predictions.csv");
    write_predictions_csv(BufWriter::new(File::create(&predictions_path)?), &tracks)?;
    print!("{}", render_metric_summary(&table));

    let config = ResolvedConfig { sim: ds.config.clone(), tracker: opts, ..Default::default() };
    let mut manifest = RunManifest::new(
        "track",
        config,
        json!({ "split": split.name(), "design": design.to_string(), "replicate": args.replicate }),
    );
    manifest.inputs.push(args.data.clone());
    manifest.outputs.extend([metrics_path, predictions_path]);
    let manifest = manifest.finish(start.elapsed());
    manifest.write(out)?;
    Ok(manifest)
}

pub fn render_metric_summary(table: &MetricTable) -> String {
    let mut s = format!("{:<10}{:>12}{:>12}\n", "metric", "mean", "median");
    for m in Metric::ALL {
        s += &format!("{:<10}{:>12.4}{:>12.4}\n", m.name(), table.get(m), table.median(m));
    }
    s
}

pub fn cmd_selfcheck(args: &SelfcheckArgs, out: &Path) -> Result<bool> {
    let start = Instant::now();
    let cfg = resolve_config(&args.sim)?;
    let opts = SelfCheckOptions {
        trials: args.trials,
        seed: args.probe_seed,
        fault: match args.inject_fault {
            Some(FaultArg::BrokenKernel) => Fault::BrokenKernel,
            None => Fault::None,
        },
    };
    let _lock = OutputLock::acquire(out)?;
    let report = run_selfcheck(&cfg.sim, &opts);
    let mut text = String::new();
    for r in &report {
        text += &format!("{r}\n");
    }
    let passed = report.iter().all(|r| r.passed);
    text += if passed { "selfcheck: all checks passed\n" } else { "selfcheck: FAILED\n" };
    print!("{text}");
    let report_path = out.join("selfcheck.txt");
    fs::write(&report_path, &text)?;
    let mut manifest = RunManifest::new(
        "selfcheck",
        cfg,
        json!({ "trials": args.trials, "probe_seed": args.probe_seed, "passed": passed }),
    );
    manifest.outputs.push(report_path);
    manifest.finish(start.elapsed()).write(out)?;
    Ok(passed)
}

/// Metric columns in a stable order: the tracker's metrics, the aggregates, then anything else by name.
fn ordered_metrics(table: &ResponseTable) -> Vec<String> {
    let present: Vec<&str> = table.metrics().collect();
    let mut order: Vec<String> = Metric::ALL
        .iter()
        .map(|m| m.name())
        .chain([ENC_AVG, DEC_AVG])
        .filter(|m| present.contains(m))
        .map(str::to_string)
        .collect();
    let mut rest: Vec<String> = present.iter().filter(|m| !order.iter().any(|o| o == *m)).map(|m| m.to_string()).collect();
    rest.sort();
    order.extend(rest);
    order
}

pub fn cmd_effects(args: &EffectsArgs, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut exclude_mask = 0u8;
    for c in &args.exclude {
        let k = FACTORS
            .iter()
            .position(|f| *f == c.to_ascii_uppercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown factor {c:?}")))?;
        exclude_mask |= 1 << k;
    }
    let mut rows = Vec::new();
    for path in &args.results {
        rows.extend(read_metric_rows(BufReader::new(File::open(path)?))?);
    }
    let mut table = ResponseTable::from_rows(&rows, args.replicates)?;
    let has_positions = ENC_METRICS.iter().chain(DEC_METRICS.iter()).all(|m| table.has_metric(m));
    if has_positions {
        table = table.with_aggregates()?;
    }
    let metrics = ordered_metrics(&table);
    let names: Vec<&str> = metrics.iter().map(String::as_str).collect();
    let effects = estimate_all(&table, &names)?;

    let _lock = OutputLock::acquire(out)?;
    let csv_path = out.join("effects.csv");
    write_effects_csv(BufWriter::new(File::create(&csv_path)?), &effects)?;

    let keep = |t: Term| t.mask() & exclude_mask == 0;
    let n = table.replicates();
    let mut report = String::new();
    let groups: [(&str, &[&str]); 2] = [("Encoder", &ENC_METRICS), ("Decoder", &DEC_METRICS)];
    for (title, group) in groups {
        if group.iter().all(|m| table.has_metric(m)) {
            let ranked = rank_effects(&effects, group, keep)?;
            let heading = format!("{title} factorial effects (n={n}). Negative = reduces error.");
            report += &render_ranking(&heading, group, &ranked, args.top);
            report.push('\n');
        }
    }
    if report.is_empty() {
        for m in &names {
            let ranked = rank_effects(&effects, &[m], keep)?;
            report += &render_ranking(&format!("Factorial effects on {m} (n={n})."), &[m], &ranked, args.top);
            report.push('\n');
        }
    }
    print!("{report}");
    let report_path = out.join("effects_report.txt");
    fs::write(&report_path, &report)?;

    let mut manifest = RunManifest::new(
        "effects",
        ResolvedConfig::default(),
        json!({ "replicates": n, "exclude": args.exclude, "top": args.top }),
    );
    manifest.inputs.extend(args.results.iter().cloned());
    manifest.outputs.extend([csv_path, report_path]);
    let manifest = manifest.finish(start.elapsed());
    manifest.write(out)?;
    Ok(manifest)
}

pub fn cmd_fixture(args: &FixtureArgs, out: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let (rows, name) = match args.kind {
        FixtureKind::Planted => (PlantedModel::reference().rows(args.replicates), "planted_results.csv"),
        FixtureKind::ReferenceMeans => {
            let policy = match args.censor {
                CensorArg::Midpoint => CensorPolicy::Midpoint,
                CensorArg::LowerBound => CensorPolicy::LowerBound,
            };
            (doe::reference_means_rows(policy)?, "reference_means_results.csv")
        }
    };
    let _lock = OutputLock::acquire(out)?;
    let path = out.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    write_metric_rows(&mut w, &rows)?;
    w.flush()?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    let kind = match args.kind {
        FixtureKind::Planted => "planted",
        FixtureKind::ReferenceMeans => "reference-means",
    };
    let mut manifest = RunManifest::new(
        "fixture",
        ResolvedConfig::default(),
        json!({ "kind": kind, "replicates": args.replicates, "censor": format!("{:?}", args.censor) }),
    );
    manifest.outputs.push(path.clone());
    manifest.finish(start.elapsed()).write(out)?;
    Ok(path)
}
