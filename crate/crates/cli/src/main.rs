//! Command-line front end for the congestion-prediction pipeline: one
//! subcommand per stage, JSON config with flag overrides, deterministic
//! outputs, and a manifest (config echo + output hashes) for every run.

mod config;

use clap::{Parser, Subcommand};
use config::{defaults, RunConfig};
use crossflow::analysis::{busy_table, export_plot_data, PlotData};
use crossflow::cluster::{cluster_purity, kmeans};
use crossflow::core_data::Dataset;
use crossflow::eval::{
    grid_search, random_search, regression_metrics, train_test_split, EvalReport, MetricTriple,
    ParamDim, ParamSet, ParamValue, SelectBy,
};
use crossflow::features::{
    build_feature_matrix, default_feature_spec, default_geo, parse_geo_csv, parse_weather_csv,
    target_vector, CityGeo, FeatureMatrix, TargetMetric, WeatherRow, WeatherTable,
};
use crossflow::impute::{
    evaluate_imputation, fit_low_rank, impute_missing, ImputeColumnKind, Loss, MaskedMatrix,
    Regularizer,
};
use crossflow::ingest::{generate_synthetic, parse_csv, write_csv, SynthConfig, TimeUnit};
use crossflow::models::{
    fit_huber, fit_ols, gbt_feature_importance, gbt_fit, knn_fit, Metric, RegressorArtifact,
    Weighting,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug)]
enum CliError {
    /// Bad flags, bad config, unsupported combinations. Exit 1.
    Usage(String),
    /// Unreadable, malformed, or invariant-violating data. Exit 2.
    Data(String),
    /// Numerical failure: singular systems, non-convergence. Exit 3.
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

fn model_err(e: crossflow::models::ModelError) -> CliError {
    use crossflow::models::ModelError as M;
    match e {
        M::BadParam(_) | M::KOutOfRange { .. } => CliError::Usage(e.to_string()),
        M::Singular { .. } | M::NonConvergence { .. } => CliError::Numerical(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn eval_err(e: crossflow::eval::EvalError) -> CliError {
    use crossflow::eval::EvalError as E;
    match e {
        E::BadParam(_) => CliError::Usage(e.to_string()),
        E::Fold { .. } => CliError::Numerical(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "crossflow",
    version,
    about = "Intersection congestion prediction pipeline",
    disable_help_subcommand = true
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs (created if missing).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Cap on internal parallelism; outputs are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Deterministic seed for everything downstream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Input dataset CSV.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Interpret time columns as seconds instead of minutes.
    #[arg(long, global = true)]
    time_unit: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset CSV.
    Synth {
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Check a dataset CSV against the schema invariants.
    Validate,
    /// Build and export the design matrix with the fitted transforms.
    Features {
        #[arg(long)]
        with_weather: Option<bool>,
        #[arg(long)]
        weather: Option<PathBuf>,
        #[arg(long)]
        geo: Option<PathBuf>,
    },
    /// Fill missing street names with a low-rank factorization model.
    Impute {
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Row cap for the factorization (deterministic subsample).
        #[arg(long)]
        max_rows: Option<usize>,
    },
    /// K-means on intersection coordinates; exports the cluster map.
    Cluster {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Busy-intersection counts per city and hour.
    Busy {
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train one model on a train split and save the artifact.
    Train {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        with_weather: Option<bool>,
        #[arg(long)]
        weather: Option<PathBuf>,
        #[arg(long)]
        geo: Option<PathBuf>,
        #[arg(long)]
        knn_k: Option<usize>,
        #[arg(long)]
        huber_delta: Option<f64>,
        #[arg(long)]
        l2_penalty: Option<f64>,
        #[arg(long)]
        n_estimators: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        min_leaf: Option<usize>,
    },
    /// Score a saved model on a dataset.
    Evaluate {
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Hyperparameter search (grid for knn, random for gbt).
    Search {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        cv_folds: Option<usize>,
        #[arg(long)]
        search_iters: Option<usize>,
        #[arg(long)]
        select_by: Option<String>,
        #[arg(long)]
        max_rows: Option<usize>,
    },
    /// Feature-importance table of a saved boosted-trees model.
    Importance {
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Predictions of a saved model for every row of a dataset.
    Predict {
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Train and compare all model families on one held-out split.
    Report {
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        with_weather: Option<bool>,
        #[arg(long)]
        weather: Option<PathBuf>,
        #[arg(long)]
        geo: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are successful exits; everything else is usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}

/// Merged view of flags, config file, and defaults (flags win).
struct Settings {
    file: RunConfig,
    out_dir: PathBuf,
    seed: u64,
    data: Option<PathBuf>,
    time_unit: TimeUnit,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    let threads = cli.threads.or(file.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(defaults::OUT_DIR));
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let time_unit = match cli
        .time_unit
        .clone()
        .or_else(|| file.time_unit.clone())
        .unwrap_or_else(|| defaults::TIME_UNIT.to_string())
        .as_str()
    {
        "minutes" => TimeUnit::Minutes,
        "seconds" => TimeUnit::Seconds,
        other => {
            return Err(CliError::Usage(format!(
                "time_unit must be `minutes` or `seconds`, got `{other}`"
            )))
        }
    };
    let settings = Settings {
        out_dir,
        seed: cli.seed.or(file.seed).unwrap_or(defaults::SEED),
        data: cli.data.clone().or_else(|| file.data.clone()),
        time_unit,
        file,
    };
    dispatch(cli.command, &settings)
}

fn load_dataset(settings: &Settings) -> Result<Dataset, CliError> {
    let path = settings
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("no dataset: pass --data or set `data` in the config".to_string()))?;
    let file = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let parsed = parse_csv(file, settings.time_unit).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(parsed.dataset)
}

fn load_weather(
    with_weather: bool,
    path: Option<&PathBuf>,
) -> Result<WeatherTable, CliError> {
    if !with_weather {
        return Ok(WeatherTable::default());
    }
    match path {
        Some(p) => {
            let file = fs::File::open(p)
                .map_err(|e| CliError::Data(format!("cannot open {}: {e}", p.display())))?;
            parse_weather_csv(file).map_err(|e| CliError::Data(e.to_string()))
        }
        None => Ok(synthetic_weather()),
    }
}

/// Deterministic stand-in weather table for datasets without a sidecar.
fn synthetic_weather() -> WeatherTable {
    let mut rows = Vec::new();
    for city in 0u8..4 {
        for month in 1u8..=12 {
            let seasonal = (f64::from(month) - 7.0).abs() / 6.0; // 0 midsummer, 1 midwinter
            rows.push(WeatherRow {
                city,
                month,
                rain_pct: 20.0 + 30.0 * (1.0 - seasonal) + f64::from(city) * 5.0,
                snow_pct: 40.0 * seasonal * if city == 1 { 1.5 } else { 1.0 },
            });
        }
    }
    WeatherTable { rows }
}

fn load_geo(path: Option<&PathBuf>) -> Result<Vec<CityGeo>, CliError> {
    match path {
        Some(p) => {
            let file = fs::File::open(p)
                .map_err(|e| CliError::Data(format!("cannot open {}: {e}", p.display())))?;
            parse_geo_csv(file).map_err(|e| CliError::Data(e.to_string()))
        }
        None => Ok(default_geo()),
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    seed: u64,
    config: RunConfig,
    /// Relative file name -> SHA-256 of the written bytes.
    outputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn write_manifest(
    settings: &Settings,
    command: &str,
    outputs: &[PathBuf],
) -> Result<(), CliError> {
    let mut hashes = BTreeMap::new();
    for path in outputs {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        hashes.insert(name, sha256_file(path)?);
    }
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: settings.seed,
        config: settings.file.clone(),
        outputs: hashes,
    };
    let path = settings.out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| CliError::Data(e.to_string()))
}

fn write_output(settings: &Settings, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = settings.out_dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Feature plumbing shared by train/evaluate/search/report
// ---------------------------------------------------------------------------

/// Everything needed to turn raw records into model rows, bundled with the
/// trained model so `evaluate`/`predict` can replay the transform.
#[derive(Serialize, Deserialize)]
struct ModelBundle {
    pipeline: FeatureMatrix,
    with_weather: bool,
    target: String,
    model: RegressorArtifact,
}

fn matrix_rows(fm: &FeatureMatrix) -> Vec<Vec<f64>> {
    (0..fm.n_rows).map(|i| fm.row(i).to_vec()).collect()
}

fn family_artifact(
    family: &str,
    x: &[Vec<f64>],
    y: &[f64],
    settings: &Settings,
    hp: &Hyperparams,
) -> Result<RegressorArtifact, CliError> {
    match family {
        "linear" => fit_ols(x, y, hp.l2_penalty)
            .map(RegressorArtifact::Linear)
            .map_err(model_err),
        "huber" => fit_huber(x, y, hp.huber_delta, hp.l2_penalty, 100, 1e-8)
            .map(RegressorArtifact::Linear)
            .map_err(model_err),
        "knn" => Ok(RegressorArtifact::Knn {
            model: knn_fit(x, y, Metric::Euclidean, Weighting::Uniform).map_err(model_err)?,
            k: hp.knn_k,
        }),
        "gbt" => gbt_fit(
            x,
            y,
            hp.n_estimators,
            hp.max_depth,
            hp.learning_rate,
            hp.min_leaf,
            settings.seed,
        )
        .map(RegressorArtifact::Gbt)
        .map_err(model_err),
        other => Err(CliError::Usage(format!(
            "unknown model `{other}` (expected linear, huber, knn, or gbt)"
        ))),
    }
}

struct Hyperparams {
    knn_k: usize,
    huber_delta: f64,
    l2_penalty: f64,
    n_estimators: usize,
    max_depth: usize,
    learning_rate: f64,
    min_leaf: usize,
}

impl Hyperparams {
    #[allow(clippy::too_many_arguments)]
    fn resolve(
        file: &RunConfig,
        knn_k: Option<usize>,
        huber_delta: Option<f64>,
        l2_penalty: Option<f64>,
        n_estimators: Option<usize>,
        max_depth: Option<usize>,
        learning_rate: Option<f64>,
        min_leaf: Option<usize>,
    ) -> Hyperparams {
        Hyperparams {
            knn_k: knn_k.or(file.knn_k).unwrap_or(defaults::KNN_K),
            huber_delta: huber_delta.or(file.huber_delta).unwrap_or(defaults::HUBER_DELTA),
            l2_penalty: l2_penalty.or(file.l2_penalty).unwrap_or(defaults::L2_PENALTY),
            n_estimators: n_estimators
                .or(file.n_estimators)
                .unwrap_or(defaults::N_ESTIMATORS),
            max_depth: max_depth.or(file.max_depth).unwrap_or(defaults::MAX_DEPTH),
            learning_rate: learning_rate
                .or(file.learning_rate)
                .unwrap_or(defaults::LEARNING_RATE),
            min_leaf: min_leaf.or(file.min_leaf).unwrap_or(defaults::MIN_LEAF),
        }
    }
}

fn predict_all(model: &RegressorArtifact, rows: &[Vec<f64>]) -> Result<Vec<f64>, CliError> {
    rows.par_iter()
        .map(|row| model.predict(row))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(model_err)
}

fn metrics_json(m: &MetricTriple) -> serde_json::Value {
    serde_json::json!({"mse": m.mse, "mae": m.mae, "max_error": m.max_error})
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn dispatch(command: Command, settings: &Settings) -> Result<(), CliError> {
    match command {
        Command::Synth { rows } => cmd_synth(settings, rows),
        Command::Validate => cmd_validate(settings),
        Command::Features {
            with_weather,
            weather,
            geo,
        } => cmd_features(settings, with_weather, weather, geo),
        Command::Impute {
            rank,
            max_iters,
            max_rows,
        } => cmd_impute(settings, rank, max_iters, max_rows),
        Command::Cluster { k } => cmd_cluster(settings, k),
        Command::Busy { threshold } => cmd_busy(settings, threshold),
        Command::Train {
            model,
            train_fraction,
            with_weather,
            weather,
            geo,
            knn_k,
            huber_delta,
            l2_penalty,
            n_estimators,
            max_depth,
            learning_rate,
            min_leaf,
        } => {
            let hp = Hyperparams::resolve(
                &settings.file,
                knn_k,
                huber_delta,
                l2_penalty,
                n_estimators,
                max_depth,
                learning_rate,
                min_leaf,
            );
            cmd_train(settings, model, train_fraction, with_weather, weather, geo, &hp)
        }
        Command::Evaluate { model_file } => cmd_evaluate(settings, &model_file),
        Command::Search {
            model,
            cv_folds,
            search_iters,
            select_by,
            max_rows,
        } => cmd_search(settings, model, cv_folds, search_iters, select_by, max_rows),
        Command::Importance { model_file } => cmd_importance(settings, &model_file),
        Command::Predict { model_file } => cmd_predict(settings, &model_file),
        Command::Report {
            train_fraction,
            with_weather,
            weather,
            geo,
        } => cmd_report(settings, train_fraction, with_weather, weather, geo),
    }
}

fn cmd_synth(settings: &Settings, rows: Option<usize>) -> Result<(), CliError> {
    let config = SynthConfig {
        rows: rows.or(settings.file.rows).unwrap_or(defaults::ROWS),
        seed: settings.seed,
        ..SynthConfig::default()
    };
    let dataset = generate_synthetic(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut buffer = Vec::new();
    write_csv(&dataset, &mut buffer).map_err(|e| CliError::Data(e.to_string()))?;
    let text = String::from_utf8(buffer).expect("CSV output is UTF-8");
    let out = write_output(settings, "data.csv", &text)?;
    write_manifest(settings, "synth", &[out])
}

fn cmd_validate(settings: &Settings) -> Result<(), CliError> {
    let path = settings
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("no dataset: pass --data or set `data` in the config".to_string()))?;
    let file = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let parsed = parse_csv(file, settings.time_unit).map_err(|e| CliError::Data(e.to_string()))?;
    let violations = parsed.dataset.validate();
    write_manifest(settings, "validate", &[])?;
    if violations.is_empty() && parsed.warnings.is_empty() {
        println!("ok: {} records", parsed.dataset.len());
        Ok(())
    } else {
        let mut message = format!(
            "{} invariant violations:",
            violations.len() + parsed.warnings.len()
        );
        for (row, v) in parsed.warnings.iter().take(20) {
            message.push_str(&format!("\n  row {row}: {v}"));
        }
        for v in violations.iter().take(20) {
            message.push_str(&format!("\n  {v:?}"));
        }
        Err(CliError::Data(message))
    }
}

fn cmd_features(
    settings: &Settings,
    with_weather: Option<bool>,
    weather: Option<PathBuf>,
    geo: Option<PathBuf>,
) -> Result<(), CliError> {
    let dataset = load_dataset(settings)?;
    let with_weather = with_weather
        .or(settings.file.with_weather)
        .unwrap_or(defaults::WITH_WEATHER);
    let weather_table = load_weather(
        with_weather,
        weather.as_ref().or(settings.file.weather.as_ref()),
    )?;
    let geo_table = load_geo(geo.as_ref().or(settings.file.geo.as_ref()))?;
    let spec = default_feature_spec(with_weather);
    let fm = build_feature_matrix(&dataset, &spec, &weather_table, &geo_table)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let target = target_vector(&dataset, TargetMetric::TotalTimeStoppedP50);

    let mut csv = fm.column_names().join(",");
    csv.push_str(",target_p50\n");
    for i in 0..fm.n_rows {
        let row: Vec<String> = fm.row(i).iter().map(|v| v.to_string()).collect();
        csv.push_str(&row.join(","));
        csv.push_str(&format!(",{}\n", target[i]));
    }
    let features_path = write_output(settings, "features.csv", &csv)?;

    let mut slim = fm.clone();
    slim.values.clear();
    slim.n_rows = 0;
    let pipeline_json =
        serde_json::to_string_pretty(&slim).map_err(|e| CliError::Data(e.to_string()))?;
    let pipeline_path = write_output(settings, "feature_pipeline.json", &(pipeline_json + "\n"))?;
    write_manifest(settings, "features", &[features_path, pipeline_path])
}

fn cmd_impute(
    settings: &Settings,
    rank: Option<usize>,
    max_iters: Option<usize>,
    max_rows: Option<usize>,
) -> Result<(), CliError> {
    let mut dataset = load_dataset(settings)?;
    let rank = rank.or(settings.file.impute_rank).unwrap_or(defaults::IMPUTE_RANK);
    let max_iters = max_iters
        .or(settings.file.impute_max_iters)
        .unwrap_or(defaults::IMPUTE_MAX_ITERS);
    let max_rows = max_rows
        .or(settings.file.impute_max_rows)
        .unwrap_or(defaults::IMPUTE_MAX_ROWS);

    // Street vocabulary: code 0.. over sorted distinct names.
    let mut names: Vec<&str> = dataset
        .records
        .iter()
        .flat_map(|r| [r.entry_street.as_deref(), r.exit_street.as_deref()])
        .flatten()
        .collect();
    names.sort_unstable();
    names.dedup();
    if names.is_empty() {
        return Err(CliError::Data(
            "no street names present; nothing to learn from".to_string(),
        ));
    }
    let code_of: BTreeMap<&str, f64> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (*n, i as f64))
        .collect();
    let names_owned: Vec<String> = names.iter().map(|n| n.to_string()).collect();

    let n_rows = dataset.len().min(max_rows);
    // Columns: entry street, exit street, entry heading, exit heading —
    // all categorical.
    let mut cells: Vec<Option<f64>> = Vec::with_capacity(n_rows * 4);
    for r in dataset.records.iter().take(n_rows) {
        cells.push(r.entry_street.as_deref().map(|s| code_of[s]));
        cells.push(r.exit_street.as_deref().map(|s| code_of[s]));
        cells.push(Some(f64::from(r.entry_heading.code())));
        cells.push(Some(f64::from(r.exit_heading.code())));
    }
    // Hide every 10th observed cell so the fit can be scored on entries
    // with known answers.
    let mut holdout: Vec<(usize, usize, f64)> = Vec::new();
    let mut training_cells = cells.clone();
    let mut observed_seen = 0usize;
    for (idx, cell) in cells.iter().enumerate() {
        if let Some(v) = cell {
            if observed_seen % 10 == 9 {
                training_cells[idx] = None;
                holdout.push((idx / 4, idx % 4, *v));
            }
            observed_seen += 1;
        }
    }
    let observed = MaskedMatrix::from_options(n_rows, 4, &training_cells);
    let kinds = [ImputeColumnKind::Nominal; 4];
    let model = fit_low_rank(
        &observed,
        rank,
        Loss::OneVsAll,
        Regularizer::L2 { lambda: 0.1 },
        max_iters,
        1e-6,
        settings.seed,
    )
    .map_err(|e| CliError::Numerical(e.to_string()))?;
    let filled =
        impute_missing(&model, &observed, &kinds).map_err(|e| CliError::Numerical(e.to_string()))?;
    let holdout_report = evaluate_imputation(&model, &holdout, &kinds, 0.5)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    let mut filled_count = 0usize;
    for (i, r) in dataset.records.iter_mut().take(n_rows).enumerate() {
        if r.entry_street.is_none() {
            r.entry_street = Some(names_owned[filled[i * 4] as usize].clone());
            filled_count += 1;
        }
        if r.exit_street.is_none() {
            r.exit_street = Some(names_owned[filled[i * 4 + 1] as usize].clone());
            filled_count += 1;
        }
    }

    let mut buffer = Vec::new();
    write_csv(&dataset, &mut buffer).map_err(|e| CliError::Data(e.to_string()))?;
    let imputed_path = write_output(
        settings,
        "imputed.csv",
        &String::from_utf8(buffer).expect("CSV output is UTF-8"),
    )?;
    let report = serde_json::json!({
        "rank": rank,
        "rows_used": n_rows,
        "streets": names_owned.len(),
        "cells_filled": filled_count,
        "final_objective": model.objective_trace.last(),
        "holdout_cells": holdout.len(),
        "holdout_error_rate": holdout_report.categorical_error_rate,
        "holdout_pass": holdout_report.pass,
    });
    let report_path = write_output(
        settings,
        "impute_report.json",
        &(serde_json::to_string_pretty(&report).unwrap() + "\n"),
    )?;
    write_manifest(settings, "impute", &[imputed_path, report_path])
}

fn cmd_cluster(settings: &Settings, k: Option<usize>) -> Result<(), CliError> {
    let dataset = load_dataset(settings)?;
    let k = k.or(settings.file.k_clusters).unwrap_or(defaults::K_CLUSTERS);
    let intersections = dataset.intersections();
    let points: Vec<(f64, f64)> = intersections.iter().map(|&(_, _, lat, lon)| (lat, lon)).collect();
    let labels: Vec<u8> = intersections.iter().map(|&(_, city, _, _)| city).collect();
    let result = kmeans(&points, k, 200, 1e-10, settings.seed)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let purity = cluster_purity(&result.assignments, &labels)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let csv = export_plot_data(&PlotData::Clusters {
        intersections: &intersections,
        clusters: &result,
    })
    .map_err(|e| CliError::Data(e.to_string()))?;
    let clusters_path = write_output(settings, "clusters.csv", &csv)?;
    let summary = serde_json::json!({
        "k": k,
        "inertia": result.inertia,
        "iterations": result.iterations,
        "purity_vs_city": purity,
        "centroids": result.centroids,
    });
    let summary_path = write_output(
        settings,
        "cluster_summary.json",
        &(serde_json::to_string_pretty(&summary).unwrap() + "\n"),
    )?;
    write_manifest(settings, "cluster", &[clusters_path, summary_path])
}

fn cmd_busy(settings: &Settings, threshold: Option<f64>) -> Result<(), CliError> {
    let dataset = load_dataset(settings)?;
    let threshold = threshold
        .or(settings.file.threshold_minutes)
        .unwrap_or(defaults::THRESHOLD_MINUTES);
    let table = busy_table(&dataset, threshold).map_err(|e| CliError::Data(e.to_string()))?;
    let mut outputs = Vec::new();
    let curve = export_plot_data(&PlotData::BusyCurve { table: &table })
        .map_err(|e| CliError::Data(e.to_string()))?;
    outputs.push(write_output(settings, "busy_curve.csv", &curve)?);
    for city in dataset.cities() {
        let map = export_plot_data(&PlotData::CityMap {
            dataset: &dataset,
            table: &table,
            city,
        })
        .map_err(|e| CliError::Data(e.to_string()))?;
        outputs.push(write_output(settings, &format!("city_map_{city}.csv"), &map)?);
    }
    write_manifest(settings, "busy", &outputs)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    settings: &Settings,
    model: Option<String>,
    train_fraction: Option<f64>,
    with_weather: Option<bool>,
    weather: Option<PathBuf>,
    geo: Option<PathBuf>,
    hp: &Hyperparams,
) -> Result<(), CliError> {
    let dataset = load_dataset(settings)?;
    let family = model
        .or_else(|| settings.file.model.clone())
        .unwrap_or_else(|| defaults::MODEL.to_string());
    let fraction = train_fraction
        .or(settings.file.train_fraction)
        .unwrap_or(defaults::TRAIN_FRACTION);
    let with_weather = with_weather
        .or(settings.file.with_weather)
        .unwrap_or(defaults::WITH_WEATHER);
    let weather_table = load_weather(
        with_weather,
        weather.as_ref().or(settings.file.weather.as_ref()),
    )?;
    let geo_table = load_geo(geo.as_ref().or(settings.file.geo.as_ref()))?;

    let spec = default_feature_spec(with_weather);
    let fm = build_feature_matrix(&dataset, &spec, &weather_table, &geo_table)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let x = matrix_rows(&fm);
    let y = target_vector(&dataset, TargetMetric::TotalTimeStoppedP50);
    let (train_idx, test_idx) =
        train_test_split(y.len(), fraction, settings.seed).map_err(eval_err)?;
    let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| x[i].clone()).collect();
    let train_y: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
    let test_x: Vec<Vec<f64>> = test_idx.iter().map(|&i| x[i].clone()).collect();
    let test_y: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();

    let artifact = family_artifact(&family, &train_x, &train_y, settings, hp)?;
    let preds = predict_all(&artifact, &test_x)?;
    let metrics = regression_metrics(&test_y, &preds).map_err(eval_err)?;

    let mut pipeline = fm.clone();
    pipeline.values.clear();
    pipeline.n_rows = 0;
    let bundle = ModelBundle {
        pipeline,
        with_weather,
        target: "total_time_stopped_p50".to_string(),
        model: artifact,
    };
    let model_path = write_output(
        settings,
        "model.json",
        &(serde_json::to_string_pretty(&bundle).map_err(|e| CliError::Data(e.to_string()))? + "\n"),
    )?;
    let hp_echo = serde_json::json!({
        "model": family,
        "train_fraction": fraction,
        "train_rows": train_y.len(),
        "test_rows": test_y.len(),
        "knn_k": hp.knn_k,
        "huber_delta": hp.huber_delta,
        "l2_penalty": hp.l2_penalty,
        "n_estimators": hp.n_estimators,
        "max_depth": hp.max_depth,
        "learning_rate": hp.learning_rate,
        "min_leaf": hp.min_leaf,
        "holdout_metrics": metrics_json(&metrics),
    });
    let metrics_path = write_output(
        settings,
        "train_metrics.json",
        &(serde_json::to_string_pretty(&hp_echo).unwrap() + "\n"),
    )?;
    write_manifest(settings, "train", &[model_path, metrics_path])
}

fn load_bundle(path: &Path) -> Result<ModelBundle, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("bad model file {}: {e}", path.display())))
}

fn bundle_features(
    bundle: &ModelBundle,
    dataset: &Dataset,
    settings: &Settings,
) -> Result<Vec<Vec<f64>>, CliError> {
    let weather = load_weather(bundle.with_weather, settings.file.weather.as_ref())?;
    let geo = load_geo(settings.file.geo.as_ref())?;
    let fm = bundle
        .pipeline
        .apply(dataset, &weather, &geo)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(matrix_rows(&fm))
}

fn cmd_evaluate(settings: &Settings, model_file: &Path) -> Result<(), CliError> {
    let dataset = load_dataset(settings)?;
    let bundle = load_bundle(model_file)?;
    let x = bundle_features(&bundle, &dataset, settings)?;
    let y = target_vector(&dataset, TargetMetric::TotalTimeStoppedP50);
    let preds = predict_all(&bundle.model, &x)?;
    let metrics = regression_metrics(&y, &preds).map_err(eval_err)?;
    let report = EvalReport {
        title: "saved model on provided dataset".to_string(),
        mode: "holdout".to_string(),
        rows: vec![("model".to_string(), metrics)],
    };
    let csv_path = write_output(settings, "metrics.csv", &report.to_csv())?;
    let json_path = write_output(
        settings,
        "metrics.json",
        &(serde_json::to_string_pretty(&report).unwrap() + "\n"),
    )?;
    write_manifest(settings, "evaluate", &[csv_path, json_path])
}

fn cmd_search(
    settings: &Settings,
    model: Option<String>,
    cv_folds: Option<usize>,
    search_iters: Option<usize>,
    select_by: Option<String>,
    max_rows: Option<usize>,
) -> Result<(), CliError> {
    let dataset = load_dataset(settings)?;
    let family = model
        .or_else(|| settings.file.model.clone())
        .unwrap_or_else(|| defaults::MODEL.to_string());
    let folds = cv_folds.or(settings.file.cv_folds).unwrap_or(defaults::CV_FOLDS);
    let iters = search_iters
        .or(settings.file.search_iters)
        .unwrap_or(defaults::SEARCH_ITERS);
    let select_by = match select_by
        .or_else(|| settings.file.select_by.clone())
        .unwrap_or_else(|| defaults::SELECT_BY.to_string())
        .as_str()
    {
        "mse" => SelectBy::Mse,
        "mae" => SelectBy::Mae,
        other => {
            return Err(CliError::Usage(format!(
                "select_by must be `mse` or `mae`, got `{other}`"
            )))
        }
    };
    let cap = max_rows.unwrap_or(5_000);

    let weather_table = load_weather(
        settings.file.with_weather.unwrap_or(defaults::WITH_WEATHER),
        settings.file.weather.as_ref(),
    )?;
    let geo_table = load_geo(settings.file.geo.as_ref())?;
    let spec = default_feature_spec(settings.file.with_weather.unwrap_or(defaults::WITH_WEATHER));
    let fm = build_feature_matrix(&dataset, &spec, &weather_table, &geo_table)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut x = matrix_rows(&fm);
    let mut y = target_vector(&dataset, TargetMetric::TotalTimeStoppedP50);
    if y.len() > cap {
        // Deterministic subsample: the first `cap` rows of a seeded shuffle.
        let (keep, _) = train_test_split(y.len(), cap as f64 / y.len() as f64, settings.seed)
            .map_err(eval_err)?;
        x = keep.iter().map(|&i| x[i].clone()).collect();
        y = keep.iter().map(|&i| y[i]).collect();
    }

    let seed = settings.seed;
    let result = match family.as_str() {
        "knn" => {
            let ks: Vec<ParamValue> = (1..=15).map(ParamValue::Int).collect();
            grid_search(
                &[("k".to_string(), ks)],
                |params: &ParamSet, tx: &[Vec<f64>], ty: &[f64]| {
                    let k = match params["k"] {
                        ParamValue::Int(v) => v as usize,
                        _ => unreachable!(),
                    };
                    Ok(RegressorArtifact::Knn {
                        model: knn_fit(tx, ty, Metric::Euclidean, Weighting::Uniform)?,
                        k,
                    })
                },
                &x,
                &y,
                folds,
                seed,
                select_by,
            )
            .map_err(eval_err)?
        }
        "gbt" => {
            let space = vec![
                (
                    "n_estimators".to_string(),
                    ParamDim::IntRange { lo: 20, hi: 120 },
                ),
                ("max_depth".to_string(), ParamDim::IntRange { lo: 2, hi: 4 }),
                (
                    "learning_rate".to_string(),
                    ParamDim::Range {
                        lo: 0.02,
                        hi: 0.3,
                        log: true,
                    },
                ),
            ];
            random_search(
                &space,
                iters,
                |params: &ParamSet, tx: &[Vec<f64>], ty: &[f64]| {
                    let get_int = |name: &str| match params[name] {
                        ParamValue::Int(v) => v as usize,
                        _ => unreachable!(),
                    };
                    let lr = match params["learning_rate"] {
                        ParamValue::Float(v) => v,
                        _ => unreachable!(),
                    };
                    gbt_fit(tx, ty, get_int("n_estimators"), get_int("max_depth"), lr, 1, seed)
                        .map(RegressorArtifact::Gbt)
                },
                &x,
                &y,
                folds,
                seed,
                select_by,
            )
            .map_err(eval_err)?
        }
        "linear" | "huber" => {
            let lambdas: Vec<ParamValue> = [0.0, 0.01, 0.1, 1.0, 10.0]
                .iter()
                .map(|&v| ParamValue::Float(v))
                .collect();
            let is_huber = family == "huber";
            grid_search(
                &[("l2_penalty".to_string(), lambdas)],
                move |params: &ParamSet, tx: &[Vec<f64>], ty: &[f64]| {
                    let lambda = match params["l2_penalty"] {
                        ParamValue::Float(v) => v,
                        _ => unreachable!(),
                    };
                    if is_huber {
                        fit_huber(tx, ty, 1.0, lambda, 100, 1e-8).map(RegressorArtifact::Linear)
                    } else {
                        fit_ols(tx, ty, lambda).map(RegressorArtifact::Linear)
                    }
                },
                &x,
                &y,
                folds,
                seed,
                select_by,
            )
            .map_err(eval_err)?
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown model `{other}` (expected linear, huber, knn, or gbt)"
            )))
        }
    };

    let json = serde_json::json!({
        "model": family,
        "cv_folds": folds,
        "rows_used": y.len(),
        "best_params": result.best_params,
        "best_score": result.best_score,
        "trials": result.trials,
    });
    let path = write_output(
        settings,
        "search.json",
        &(serde_json::to_string_pretty(&json).unwrap() + "\n"),
    )?;
    write_manifest(settings, "search", &[path])
}

fn cmd_importance(settings: &Settings, model_file: &Path) -> Result<(), CliError> {
    let bundle = load_bundle(model_file)?;
    let ensemble = match &bundle.model {
        RegressorArtifact::Gbt(e) => e,
        _ => {
            return Err(CliError::Usage(
                "feature importance requires a boosted-trees model".to_string(),
            ))
        }
    };
    let names = bundle.pipeline.column_names();
    let weights = gbt_feature_importance(ensemble, names.len());
    let mut rows: Vec<(&str, f64)> = names.iter().copied().zip(weights).collect();
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
    let mut csv = String::from("feature,importance\n");
    for (name, weight) in rows {
        csv.push_str(&format!("{name},{weight}\n"));
    }
    let path = write_output(settings, "importance.csv", &csv)?;
    write_manifest(settings, "importance", &[path])
}

fn cmd_predict(settings: &Settings, model_file: &Path) -> Result<(), CliError> {
    let dataset = load_dataset(settings)?;
    let bundle = load_bundle(model_file)?;
    let x = bundle_features(&bundle, &dataset, settings)?;
    let preds = predict_all(&bundle.model, &x)?;
    let mut csv = String::from("row_id,prediction\n");
    for (r, p) in dataset.records.iter().zip(&preds) {
        csv.push_str(&format!("{},{}\n", r.row_id, p));
    }
    let path = write_output(settings, "predictions.csv", &csv)?;
    write_manifest(settings, "predict", &[path])
}

fn cmd_report(
    settings: &Settings,
    train_fraction: Option<f64>,
    with_weather: Option<bool>,
    weather: Option<PathBuf>,
    geo: Option<PathBuf>,
) -> Result<(), CliError> {
    let dataset = load_dataset(settings)?;
    let fraction = train_fraction
        .or(settings.file.train_fraction)
        .unwrap_or(defaults::TRAIN_FRACTION);
    let with_weather = with_weather
        .or(settings.file.with_weather)
        .unwrap_or(defaults::WITH_WEATHER);
    let weather_table = load_weather(
        with_weather,
        weather.as_ref().or(settings.file.weather.as_ref()),
    )?;
    let geo_table = load_geo(geo.as_ref().or(settings.file.geo.as_ref()))?;
    let spec = default_feature_spec(with_weather);
    let fm = build_feature_matrix(&dataset, &spec, &weather_table, &geo_table)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let x = matrix_rows(&fm);
    let y = target_vector(&dataset, TargetMetric::TotalTimeStoppedP50);
    let (train_idx, test_idx) =
        train_test_split(y.len(), fraction, settings.seed).map_err(eval_err)?;
    let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| x[i].clone()).collect();
    let train_y: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
    let test_x: Vec<Vec<f64>> = test_idx.iter().map(|&i| x[i].clone()).collect();
    let test_y: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();

    // Boosted trees train on a deterministic subsample to keep the
    // comparison fast at full data scale.
    let gbt_cap = 5_000.min(train_y.len());
    let gbt_x = &train_x[..gbt_cap];
    let gbt_y = &train_y[..gbt_cap];

    let hp = Hyperparams::resolve(&settings.file, None, None, None, None, None, None, None);
    let configurations: Vec<(String, RegressorArtifact)> = vec![
        (
            "linear_l2".to_string(),
            family_artifact("linear", &train_x, &train_y, settings, &hp)?,
        ),
        (
            "linear_huber".to_string(),
            family_artifact("huber", &train_x, &train_y, settings, &hp)?,
        ),
        (
            format!("knn_k{}", hp.knn_k),
            family_artifact("knn", &train_x, &train_y, settings, &hp)?,
        ),
        (
            "gbt_default".to_string(),
            family_artifact("gbt", gbt_x, gbt_y, settings, &hp)?,
        ),
    ];
    let mut rows = Vec::new();
    for (name, artifact) in &configurations {
        let preds = predict_all(artifact, &test_x)?;
        rows.push((name.clone(), regression_metrics(&test_y, &preds).map_err(eval_err)?));
    }
    let report = EvalReport {
        title: "model family comparison on one held-out split".to_string(),
        mode: "holdout".to_string(),
        rows,
    };
    let csv_path = write_output(settings, "report.csv", &report.to_csv())?;
    let json_path = write_output(
        settings,
        "report.json",
        &(serde_json::to_string_pretty(&report).unwrap() + "\n"),
    )?;
    write_manifest(settings, "report", &[csv_path, json_path])
}
