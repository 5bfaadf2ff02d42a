//! `ivtest`: invariance testing over signal traces and model repositories.
//!
//! Exit codes: 0 success, 1 variant verdict under `assess --strict`,
//! 2 input or validation error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ivtest_core::assessors::{
    correlation_table, cross_validate, robust_accuracy, train, Algorithm, Assessor, CvOptions,
};
use ivtest_core::features::{assemble_vector, write_feature_csv, FeatureConfig, FEATURE_NAMES};
use ivtest_core::render::render_matrix;
use ivtest_core::synth::{generate_repository, RepoOptions};
use ivtest_core::trace::{read_trace, DifKind, PlaneKey, SignalTrace};
use ivtest_core::varmat::{compute_variance_matrix, proportion_sweep};
use ivtest_core::workflow::{labelled_examples, load_models, measurements};
use ivtest_core::Error as CoreError;

const REPORT_FORMAT_VERSION: u64 = 1;
const STABILITY_PLANES: &str = "Max@CONF,Max@CONV-1,Mean@CONV-1";
const STABILITY_MEASURES: [&str; 4] = ["mean", "dctny", "asymm", "g_overall"];

#[derive(Parser)]
#[command(
    name = "ivtest",
    version,
    about = "Invariance testing from internal model signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Variance matrices and heatmaps for each plane of a trace.
    Matrices(MatricesArgs),
    /// The 80-entry feature vector of a trace as CSV.
    Features(FeaturesArgs),
    /// Cross-validate an assessor on a repository, then fit it on all models.
    Train(TrainArgs),
    /// Verdict of a trained assessor on one trace.
    Assess(AssessArgs),
    /// Generate a labelled synthetic repository.
    Synth(SynthArgs),
    /// Measurement stability over growing proportions of the test objects.
    Ablate(AblateArgs),
    /// Pearson correlation between measurements and accuracy scores.
    Correlate(CorrelateArgs),
}

#[derive(Args)]
struct FeatureFlags {
    /// Significance threshold.
    #[arg(long, default_value_t = 0.15)]
    tau: f64,
    /// Sensitivity subsample percent.
    #[arg(long, default_value_t = 90.0)]
    r: f64,
    /// Seed of the sensitivity subsample.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FeatureFlags {
    fn config(&self) -> FeatureConfig {
        FeatureConfig {
            tau: self.tau,
            r: self.r,
            sensitivity_seed: self.seed,
        }
    }
}

#[derive(Args)]
struct MatricesArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated positions (default: all in the trace).
    #[arg(long, value_delimiter = ',')]
    positions: Option<Vec<String>>,
    /// Comma-separated modalities, `max` and/or `mean` (default: all present).
    #[arg(long, value_delimiter = ',')]
    modalities: Option<Vec<DifKind>>,
    /// Colour scale maximum (default: each matrix's own maximum).
    #[arg(long)]
    scale_max: Option<f64>,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureFlags,
}

#[derive(Args)]
struct TrainArgs {
    /// Repository manifest (`repo.json`).
    #[arg(long)]
    repo: PathBuf,
    #[arg(long)]
    algo: Algorithm,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Seed for folds, bootstraps and feature sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Assessor JSON.
    #[arg(long)]
    out: PathBuf,
    /// Cross-validation report JSON (default: next to the assessor, `.cv.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0.15)]
    tau: f64,
    #[arg(long, default_value_t = 90.0)]
    r: f64,
}

#[derive(Args)]
struct AssessArgs {
    #[arg(long)]
    assessor: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Exit with status 1 when the verdict is variant.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 150)]
    count: usize,
    /// Fraction of variant models.
    #[arg(long, default_value_t = 0.5)]
    balance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test objects per model.
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated percents.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10,20,30,40,50,60,70,80,90,100"
    )]
    proportions: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated planes.
    #[arg(long, value_delimiter = ',', default_value = STABILITY_PLANES)]
    planes: Vec<PlaneKey>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long)]
    repo: PathBuf,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write JSON instead of CSV.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    features: FeatureFlags,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            report_error(&e);
            ExitCode::from(2)
        }
    }
}

fn report_error(e: &anyhow::Error) {
    if let Some(CoreError::Validation(violations)) = e.downcast_ref::<CoreError>() {
        eprintln!("error: invalid trace");
        for v in violations {
            eprintln!("  {}: {}", v.field, v.message);
        }
    } else {
        eprintln!("error: {e:#}");
    }
}

/// Caps the worker pool at `IVTEST_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("IVTEST_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("IVTEST_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Matrices(a) => cmd_matrices(&a),
        Command::Features(a) => cmd_features(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Assess(a) => return cmd_assess(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Correlate(a) => cmd_correlate(&a),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn load_trace(dir: &Path) -> Result<SignalTrace> {
    Ok(read_trace(dir)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_file(p, bytes),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

#[derive(Serialize)]
struct MatrixIndexEntry {
    plane: String,
    dir: String,
    size: usize,
    max: f64,
}

#[derive(Serialize)]
struct MatrixIndex {
    format_version: u64,
    model_id: String,
    m: usize,
    matrices: Vec<MatrixIndexEntry>,
}

fn cmd_matrices(a: &MatricesArgs) -> Result<()> {
    let trace = load_trace(&a.trace)?;
    let positions = trace.positions();
    if let Some(wanted) = &a.positions {
        if let Some(bad) = wanted.iter().find(|p| !positions.contains(p)) {
            bail!(
                "unknown position {bad} (trace has {})",
                positions.join(", ")
            );
        }
    }
    let keys: Vec<PlaneKey> = trace
        .planes
        .iter()
        .map(|p| p.key.clone())
        .filter(|k| a.positions.as_ref().is_none_or(|w| w.contains(&k.position)))
        .filter(|k| a.modalities.as_ref().is_none_or(|w| w.contains(&k.dif)))
        .collect();
    if keys.is_empty() {
        bail!("no planes match the requested positions and modalities");
    }
    let mut index = MatrixIndex {
        format_version: REPORT_FORMAT_VERSION,
        model_id: trace.model_id.clone(),
        m: trace.m,
        matrices: Vec::new(),
    };
    for key in keys {
        let m = compute_variance_matrix(&trace, &key, None)?;
        let name = key.to_string();
        let dir = a.out.join(&name);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut csv = Vec::new();
        m.write_csv(&mut csv)?;
        write_file(&dir.join("matrix.csv"), &csv)?;
        write_file(&dir.join("matrix.f64"), &m.to_le_bytes())?;
        render_matrix(&m, a.scale_max)?.write_ppm(&dir.join("matrix.ppm"))?;
        index.matrices.push(MatrixIndexEntry {
            plane: name.clone(),
            dir: name,
            size: m.size(),
            max: m.max(),
        });
    }
    write_json(&a.out.join("index.json"), &index)
}

fn cmd_features(a: &FeaturesArgs) -> Result<()> {
    let trace = load_trace(&a.trace)?;
    let cfg = a.features.config();
    let vector = assemble_vector(&trace, &cfg)?;
    let mut out = format!(
        "# seed={} tau={} r={}\n",
        cfg.sensitivity_seed, cfg.tau, cfg.r
    )
    .into_bytes();
    write_feature_csv(std::slice::from_ref(&vector), &mut out)?;
    write_file(&a.out, &out)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (_, models) = load_models(&a.repo)?;
    let classes: std::collections::BTreeSet<u8> = models.iter().map(|m| m.label).collect();
    if classes.len() < 2 {
        bail!("repository has a single class; training needs both labels");
    }
    let cfg = FeatureConfig {
        tau: a.tau,
        r: a.r,
        sensitivity_seed: a.seed,
    };
    let examples = labelled_examples(&models, a.algo, &cfg)?;
    let report = cross_validate(
        &examples,
        a.algo,
        CvOptions {
            repeats: a.repeats,
            seed: a.seed,
        },
    )?;
    let mut assessor = train(a.algo, &examples, a.seed)?;
    if a.algo != Algorithm::Baseline {
        assessor.feature_config = Some(cfg);
    }
    assessor.save(&a.out)?;
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| a.out.with_extension("cv.json"));
    write_json(&report_path, &report)?;
    println!(
        "{} mean={:.2}% std={:.2}% folds={} seed={}",
        a.algo,
        report.mean,
        report.std,
        report.folds.len(),
        a.seed
    );
    Ok(())
}

fn cmd_assess(a: &AssessArgs) -> Result<ExitCode> {
    let assessor = Assessor::load(&a.assessor)?;
    let trace = load_trace(&a.trace)?;
    let inputs = match assessor.algorithm() {
        Algorithm::Baseline => vec![robust_accuracy(&trace)?],
        _ => {
            let cfg = assessor.feature_config.unwrap_or_default();
            assemble_vector(&trace, &cfg)?.values()
        }
    };
    let p = assessor.predict(&inputs)?;
    println!("{} {} {}", trace.model_id, p.label, p.score);
    Ok(if a.strict && p.label == 1 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let opts = RepoOptions {
        count: a.count,
        balance: a.balance,
        seed: a.seed,
        m: a.m,
    };
    let manifest = generate_repository(&opts, &a.out)?;
    let variant = manifest.models.iter().filter(|e| e.label == 1).count();
    println!(
        "{} models ({} variant, {} invariant) seed={} -> {}",
        manifest.models.len(),
        variant,
        manifest.models.len() - variant,
        a.seed,
        a.out.join("repo.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    proportion: f64,
    /// `plane -> measurement -> value`, in the column order of the CSV.
    values: Vec<(String, String, f64)>,
}

#[derive(Serialize)]
struct AblationReport {
    format_version: u64,
    model_id: String,
    seed: u64,
    planes: Vec<String>,
    measurements: Vec<&'static str>,
    rows: Vec<AblationRow>,
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let trace = load_trace(&a.trace)?;
    let cfg = FeatureConfig {
        sensitivity_seed: a.seed,
        ..FeatureConfig::default()
    };
    let index = |name: &str| {
        FEATURE_NAMES
            .iter()
            .position(|f| *f == name)
            .expect("known feature")
    };
    let mut rows: Vec<AblationRow> = a
        .proportions
        .iter()
        .map(|&p| AblationRow {
            proportion: p,
            values: Vec::new(),
        })
        .collect();
    for key in &a.planes {
        let sweep = proportion_sweep(&trace, key, &a.proportions, a.seed, &cfg)?;
        for (row, point) in rows.iter_mut().zip(sweep) {
            for name in STABILITY_MEASURES {
                row.values.push((
                    key.to_string(),
                    name.to_string(),
                    point.features.0[index(name)],
                ));
            }
        }
    }
    let report = AblationReport {
        format_version: REPORT_FORMAT_VERSION,
        model_id: trace.model_id.clone(),
        seed: a.seed,
        planes: a.planes.iter().map(ToString::to_string).collect(),
        measurements: STABILITY_MEASURES.to_vec(),
        rows,
    };
    let bytes = if a.json {
        let mut s = serde_json::to_string_pretty(&report)?;
        s.push('\n');
        s.into_bytes()
    } else {
        let mut s = format!("# seed={} model_id={}\nproportion", a.seed, report.model_id);
        for plane in &report.planes {
            for name in STABILITY_MEASURES {
                s.push_str(&format!(",{plane}:{name}"));
            }
        }
        s.push('\n');
        for row in &report.rows {
            s.push_str(&row.proportion.to_string());
            for (_, _, v) in &row.values {
                s.push_str(&format!(",{v:.16e}"));
            }
            s.push('\n');
        }
        s.into_bytes()
    };
    emit(a.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct CorrelationReport<'a> {
    format_version: u64,
    seed: u64,
    #[serde(flatten)]
    table: &'a ivtest_core::assessors::CorrelationTable,
}

fn cmd_correlate(a: &CorrelateArgs) -> Result<()> {
    let (_, models) = load_models(&a.repo)?;
    let table = correlation_table(&measurements(&models, &a.features.config())?)?;
    let bytes = if a.json {
        let report = CorrelationReport {
            format_version: REPORT_FORMAT_VERSION,
            seed: a.features.seed,
            table: &table,
        };
        let mut s = serde_json::to_string_pretty(&report)?;
        s.push('\n');
        s.into_bytes()
    } else {
        format!(
            "# seed={} models={}\n{}",
            a.features.seed,
            table.models,
            table.to_csv()
        )
        .into_bytes()
    };
    emit(a.out.as_deref(), &bytes)
}
