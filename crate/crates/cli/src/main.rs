//! Command-line front end: gen -> extract -> evaluate -> predict, with all
//! state passed through files so each stage can be rerun and cached.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use polishsense::datagen::{self, DatasetManifest, ScenarioConfig};
use polishsense::eval::{self, EvalReport};
use polishsense::features::{self, FeatureMode, FeatureVector};
use polishsense::models::{self, ModelDocument, ModelKind, ModelSpec};
use polishsense::signal;
use polishsense::spectral::{self, BandEnergies, BandSet, StftConfig};
use polishsense::surface::{self, Micrograph};

const THREADS_ENV: &str = "POLISHSENSE_THREADS";

#[derive(Parser)]
#[command(
    name = "polishsense",
    about = "Predict polishing-run roughness change from vibration signals",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic polishing campaign.
    Gen(GenArgs),
    /// Extract per-run feature vectors from a generated dataset.
    Extract(ExtractArgs),
    /// Run leave-one-out cross-validation and emit the results table.
    Evaluate(EvaluateArgs),
    /// Predict the roughness delta for one run or feature row.
    Predict(PredictArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Scenario seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full scenario configuration file (JSON); flags below override it.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Band set file (JSON) the planted signal is placed against.
    #[arg(long)]
    bands: Option<PathBuf>,
    #[arg(long)]
    n_short: Option<usize>,
    #[arg(long)]
    n_long: Option<usize>,
}

#[derive(Args)]
struct StftArgs {
    /// Band set file (JSON); defaults to the dataset's own band set.
    #[arg(long)]
    bands: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    window_seconds: f64,
    #[arg(long, default_value_t = 16384)]
    fft_points: usize,
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,
}

#[derive(Args)]
struct ExtractArgs {
    /// Dataset directory produced by `gen`.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for feature CSVs.
    #[arg(long)]
    out: PathBuf,
    /// Feature mode(s) to write.
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory holding features_together.csv / features_separate.csv.
    #[arg(long)]
    features: PathBuf,
    /// Output directory for reports and tables.
    #[arg(long)]
    out: PathBuf,
    /// Models to evaluate (comma separated), or "all".
    #[arg(long, value_delimiter = ',', default_value = "all")]
    models: Vec<String>,
    /// Feature mode(s) to evaluate.
    #[arg(long, alias = "mode", value_enum, default_value_t = ModeArg::Both)]
    modes: ModeArg,
    /// Z-score features per fold (fitted on training rows only).
    #[arg(long)]
    standardize: bool,
    /// Seed for the randomized models.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also fit each model on the full table and persist it under
    /// <out>/models/.
    #[arg(long)]
    save_models: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Persisted model document (written by `evaluate --save-models`).
    #[arg(long)]
    model: PathBuf,
    /// Run directory to extract features from.
    #[arg(long, conflicts_with = "features")]
    run: Option<PathBuf>,
    /// Feature table whose rows are predicted instead of a run directory.
    #[arg(long)]
    features: Option<PathBuf>,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Together,
    Separate,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<FeatureMode> {
        match self {
            ModeArg::Together => vec![FeatureMode::Together],
            ModeArg::Separate => vec![FeatureMode::Separate],
            ModeArg::Both => vec![FeatureMode::Together, FeatureMode::Separate],
        }
    }
}

/// Failure carrying its exit code: 2 for configuration problems, 1 for
/// runtime ones.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Failure {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Failure {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var(THREADS_ENV) {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Predict(args) => cmd_predict(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn load_bands(path: &Path) -> Result<BandSet, Failure> {
    BandSet::load(path).map_err(|e| Failure::usage(format!("band file {}: {e}", path.display())))
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let mut cfg = match &args.scenario {
        Some(path) => ScenarioConfig::load(path)
            .map_err(|e| Failure::usage(format!("scenario file {}: {e}", path.display())))?,
        None => ScenarioConfig::default(),
    };
    cfg.seed = args.seed;
    if let Some(path) = &args.bands {
        cfg.band_set = load_bands(path)?;
    }
    if let Some(n) = args.n_short {
        cfg.n_short = n;
    }
    if let Some(n) = args.n_long {
        cfg.n_long = n;
    }
    cfg.validate().map_err(Failure::usage)?;
    let manifest = datagen::gen_dataset(&cfg, &args.out).map_err(Failure::runtime)?;
    println!(
        "wrote {} runs ({} short, {} long) under {}",
        manifest.runs.len(),
        cfg.n_short,
        cfg.n_long,
        args.out.display()
    );
    Ok(())
}

struct ExtractionContext {
    band_set: BandSet,
    stft_cfg: StftConfig,
}

impl ExtractionContext {
    fn from_args(stft: &StftArgs, fallback_bands: Option<BandSet>) -> Result<Self, Failure> {
        let band_set = match &stft.bands {
            Some(path) => load_bands(path)?,
            None => fallback_bands.unwrap_or_else(BandSet::default_bands),
        };
        let stft_cfg = StftConfig {
            window_seconds: stft.window_seconds,
            overlap_fraction: stft.overlap,
            fft_points: stft.fft_points,
            ..StftConfig::default()
        };
        Ok(ExtractionContext { band_set, stft_cfg })
    }

    /// load -> truncate -> stft -> band energies for one run directory.
    fn band_energies(&self, run_dir: &Path) -> polishsense::Result<BandEnergies> {
        let run = signal::load_run(run_dir)?;
        let run = signal::truncate_run(run)?;
        let spec = spectral::stft(&run, &self.stft_cfg)?;
        spectral::band_energy_series(&spec, &self.band_set)
    }
}

fn run_target(run_dir: &Path, run_id: &str) -> polishsense::Result<f64> {
    let before = Micrograph::read_csv(&run_dir.join(datagen::MICROGRAPH_BEFORE_FILE))?;
    let after = Micrograph::read_csv(&run_dir.join(datagen::MICROGRAPH_AFTER_FILE))?;
    Ok(surface::roughness_delta(&before, &after, run_id).delta)
}

fn features_file(dir: &Path, mode: FeatureMode) -> PathBuf {
    dir.join(format!("features_{mode}.csv"))
}

fn cmd_extract(args: ExtractArgs) -> Result<(), Failure> {
    let manifest_path = args.data.join(datagen::DATASET_MANIFEST_FILE);
    let manifest = DatasetManifest::load(&manifest_path)
        .map_err(|e| Failure::usage(format!("dataset manifest: {e}")))?;
    let ctx = ExtractionContext::from_args(&args.stft, Some(manifest.band_set.clone()))?;
    let modes = args.mode.modes();

    let results: Vec<Result<Vec<(FeatureMode, FeatureVector)>, String>> = manifest
        .runs
        .par_iter()
        .map(|entry| {
            let run_dir = args.data.join(&entry.path);
            let work = || -> polishsense::Result<Vec<(FeatureMode, FeatureVector)>> {
                let energies = ctx.band_energies(&run_dir)?;
                let target = run_target(&run_dir, &entry.run_id)?;
                Ok(modes
                    .iter()
                    .map(|mode| {
                        let fv = match mode {
                            FeatureMode::Together => {
                                features::extract_together(&energies, &entry.run_id, target)
                            }
                            FeatureMode::Separate => {
                                features::extract_separate(&energies, &entry.run_id, target)
                            }
                        };
                        (*mode, fv)
                    })
                    .collect())
            };
            work().map_err(|e| format!("run {}: {e}", entry.run_id))
        })
        .collect();

    let mut failures = Vec::new();
    let mut by_mode: Vec<(FeatureMode, Vec<FeatureVector>)> =
        modes.iter().map(|m| (*m, Vec::new())).collect();
    for result in results {
        match result {
            Ok(per_mode) => {
                for (mode, fv) in per_mode {
                    by_mode
                        .iter_mut()
                        .find(|(m, _)| *m == mode)
                        .expect("mode list is fixed")
                        .1
                        .push(fv);
                }
            }
            Err(message) => failures.push(message),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("error: {f}");
        }
        return Err(Failure::Runtime(format!(
            "{} of {} runs failed extraction",
            failures.len(),
            manifest.runs.len()
        )));
    }

    for (mode, rows) in &by_mode {
        let path = features_file(&args.out, *mode);
        features::write_feature_table(&path, rows).map_err(Failure::runtime)?;
        println!(
            "wrote {} ({} runs x {} features)",
            path.display(),
            rows.len(),
            rows[0].values.len()
        );
    }
    Ok(())
}

fn parse_model_list(raw: &[String]) -> Result<Vec<ModelKind>, Failure> {
    let mut kinds = Vec::new();
    for token in raw {
        if token == "all" {
            for kind in ModelKind::TABLE_ORDER {
                if !kinds.contains(&kind) {
                    kinds.push(kind);
                }
            }
            continue;
        }
        let kind = ModelKind::parse(token).map_err(Failure::usage)?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    Ok(kinds)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let kinds = parse_model_list(&args.models)?;
    let modes = args.modes.modes();

    let mut tables: Vec<(FeatureMode, Vec<FeatureVector>)> = Vec::new();
    for mode in &modes {
        let path = features_file(&args.features, *mode);
        if !path.exists() {
            return Err(Failure::Usage(format!(
                "feature table {} not found (run `extract` first)",
                path.display()
            )));
        }
        let rows = features::read_feature_table(&path).map_err(Failure::usage)?;
        tables.push((*mode, rows));
    }

    let mut reports: Vec<EvalReport> = Vec::new();
    for kind in &kinds {
        for (mode, rows) in &tables {
            let spec = ModelSpec::new(*kind).with_seed(args.seed);
            let report = eval::loocv(rows, &spec, args.standardize).map_err(Failure::runtime)?;
            let path = args.out.join(format!("report_{}_{mode}.json", kind.key()));
            report.save(&path).map_err(Failure::runtime)?;
            reports.push(report);

            if args.save_models {
                save_full_model(&args.out, &spec, *mode, rows, args.standardize)?;
            }
        }
    }

    let table = eval::results_table(&reports).map_err(Failure::runtime)?;
    table
        .save_csv(&args.out.join("results.csv"))
        .map_err(Failure::runtime)?;
    table
        .save_text(&args.out.join("results.txt"))
        .map_err(Failure::runtime)?;
    print!("{}", table.to_text());
    Ok(())
}

fn save_full_model(
    out: &Path,
    spec: &ModelSpec,
    mode: FeatureMode,
    rows: &[FeatureVector],
    standardize: bool,
) -> Result<(), Failure> {
    let document = models::fit_table(spec, rows, standardize).map_err(Failure::runtime)?;
    let path = out
        .join("models")
        .join(format!("{}_{mode}.json", spec.kind.key()));
    document.save(&path).map_err(Failure::runtime)?;
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), Failure> {
    let document = ModelDocument::load(&args.model).map_err(Failure::usage)?;
    let names = &document.model.feature_names;
    let mode = if names.len() == 4 {
        FeatureMode::Together
    } else {
        FeatureMode::Separate
    };

    let rows: Vec<(String, Vec<f64>)> = if let Some(run_dir) = &args.run {
        let ctx = ExtractionContext::from_args(&args.stft, None)?;
        let energies = ctx.band_energies(run_dir).map_err(Failure::runtime)?;
        let fv = match mode {
            FeatureMode::Together => features::extract_together(&energies, "run", 0.0),
            FeatureMode::Separate => features::extract_separate(&energies, "run", 0.0),
        };
        if &fv.names != names {
            return Err(Failure::Usage(format!(
                "extracted {} features but the model expects {} ({mode} mode)",
                fv.names.len(),
                names.len()
            )));
        }
        let label = run_dir.file_name().map_or_else(
            || "run".to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        vec![(label, fv.values)]
    } else if let Some(table) = &args.features {
        let rows = features::read_feature_table(table).map_err(Failure::usage)?;
        rows.into_iter()
            .map(|fv| {
                if &fv.names == names {
                    Ok((fv.run_id, fv.values))
                } else {
                    Err(Failure::Usage(format!(
                        "feature row {} has {} features, model expects {}",
                        fv.run_id,
                        fv.values.len(),
                        names.len()
                    )))
                }
            })
            .collect::<Result<_, _>>()?
    } else {
        return Err(Failure::Usage(
            "predict needs either --run <dir> or --features <csv>".to_string(),
        ));
    };

    for (label, values) in &rows {
        let prediction = document.predict(values).map_err(Failure::runtime)?;
        println!("{label}: {prediction:.16e} nm");
    }

    if document.model.spec.kind.has_importance() {
        let importance = document
            .model
            .feature_importance()
            .map_err(Failure::runtime)?;
        let mut ranked: Vec<(usize, f64)> = importance
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w > 0.0)
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let top: Vec<String> = ranked
            .iter()
            .take(3)
            .map(|(j, w)| format!("{} ({:.3})", names[*j], w))
            .collect();
        if !top.is_empty() {
            println!("top features: {}", top.join(", "));
        }
    }
    Ok(())
}
