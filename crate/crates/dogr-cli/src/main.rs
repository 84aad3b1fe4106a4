//! Command-line front end: synth, vif, fit, predict, select-k, evaluate and
//! report subcommands over CSV inputs and JSON/CSV outputs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or numeric error. Output
//! files are written to a temporary file and renamed, so a failing run never
//! leaves a partial file behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use dogr::eval::{nested_cv_detailed, CvConfig, EvalReport, PredictionRow};
use dogr::inference::{coefficient_report, predict_rows, radar_export, CoefficientReport};
use dogr::model::{fit, FitConfig, InitStrategy, Model};
use dogr::numerics::wls_fit;
use dogr::preprocess::{
    csv_bytes, generate_synthetic, load_csv, load_feature_matrix, vif_prune, SyntheticSpec,
};
use dogr::selection::{sweep, BicSweepResult};
use dogr::serialize::{format_float, model_to_json_with_precision, to_json_with_precision};
use dogr::PredictionMode;

#[derive(Parser)]
#[command(
    name = "dogr",
    version,
    about = "Soft disaggregation with per-component regression for heterogeneous tabular data"
)]
struct Cli {
    /// Cap worker threads for evaluate/select-k (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Significant digits for floating-point output.
    #[arg(long, global = true, default_value_t = 17)]
    precision: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Kmeans,
}

impl From<InitArg> for InitStrategy {
    fn from(value: InitArg) -> Self {
        match value {
            InitArg::Random => InitStrategy::RandomResponsibilities,
            InitArg::Kmeans => InitStrategy::KmeansOnXy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Global,
    Posterior,
}

impl From<ModeArg> for PredictionMode {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::Global => PredictionMode::GlobalWeights,
            ModeArg::Posterior => PredictionMode::PosteriorWeights,
        }
    }
}

/// Fit flags shared by every subcommand that trains models.
#[derive(clap::Args)]
struct FitFlags {
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Maximum EM iterations.
    #[arg(long = "max-iters", default_value_t = 500)]
    max_iters: usize,

    /// Relative log-likelihood tolerance for convergence.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,

    /// Covariance ridge, relative to trace(Σ)/p.
    #[arg(long, default_value_t = 1e-6)]
    ridge: f64,

    /// Number of EM restarts (seeds seed, seed+1, ...).
    #[arg(long, default_value_t = 1)]
    restarts: usize,

    /// Responsibility initialization.
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    init: InitArg,
}

impl FitFlags {
    fn config(&self, n_components: usize) -> FitConfig {
        FitConfig {
            n_components,
            max_iterations: self.max_iters,
            rel_tolerance: self.tol,
            seed: self.seed,
            init_strategy: self.init.into(),
            covariance_ridge: self.ridge,
            n_restarts: self.restarts,
            ..FitConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mixture-of-lines dataset as CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Component sizes, comma-separated (e.g. 3000,2000).
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Per-component x means, ';' between components, ',' between
        /// coordinates (e.g. 500;500 or 1,2;3,4).
        #[arg(long = "x-means")]
        x_means: Option<String>,
        /// Per-component x variances, comma-separated.
        #[arg(long = "x-variances", value_delimiter = ',')]
        x_variances: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        intercepts: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        slopes: Option<Vec<f64>>,
        #[arg(long = "residual-variance")]
        residual_variance: Option<f64>,
    },

    /// Prune multicollinear features by iterative VIF removal.
    Vif {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        outcome: String,
        /// VIF threshold above which a feature is removed.
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
        /// Reduced CSV output.
        #[arg(long)]
        out: PathBuf,
        /// VIF report JSON (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
    },

    /// Fit a mixture model and write it as JSON.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        outcome: String,
        /// Number of components.
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        fit_flags: FitFlags,
        /// Model JSON output.
        #[arg(long)]
        out: PathBuf,
    },

    /// Predict outcomes for a feature CSV using a fitted model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Prediction weighting.
        #[arg(long, value_enum, default_value_t = ModeArg::Posterior)]
        mode: ModeArg,
        /// Outcome column to ignore if present in the input.
        #[arg(long)]
        outcome: Option<String>,
        /// Predictions CSV output.
        #[arg(long)]
        out: PathBuf,
    },

    /// Sweep the number of components by BIC and report the best K.
    SelectK {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        outcome: String,
        #[arg(long = "k-min", default_value_t = 1)]
        k_min: usize,
        #[arg(long = "k-max", default_value_t = 6)]
        k_max: usize,
        #[command(flatten)]
        fit_flags: FitFlags,
        /// Sweep table output (.json for JSON, CSV otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Nested cross-validation against the pooled-regression baseline.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        outcome: String,
        #[arg(long = "k-min", default_value_t = 1)]
        k_min: usize,
        #[arg(long = "k-max", default_value_t = 6)]
        k_max: usize,
        #[arg(long = "outer-folds", default_value_t = 5)]
        outer_folds: usize,
        #[arg(long = "inner-folds", default_value_t = 5)]
        inner_folds: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Posterior)]
        mode: ModeArg,
        #[command(flatten)]
        fit_flags: FitFlags,
        /// Report JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-fold predictions CSV output.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },

    /// Coefficient report and radar export for a fitted model.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Outcome column in the input (defaults to the model's).
        #[arg(long)]
        outcome: Option<String>,
        /// Coefficient report CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Radar export JSON (stdout when omitted).
        #[arg(long)]
        radar: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    App(dogr::Error),
}

impl From<dogr::Error> for CliError {
    fn from(e: dogr::Error) -> Self {
        CliError::App(e)
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be >= 1");
            std::process::exit(1);
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            std::process::exit(1);
        }
        Err(CliError::App(e)) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let precision = cli.precision;
    if precision == 0 {
        return Err(CliError::Usage("--precision must be >= 1".to_string()));
    }
    match cli.command {
        Command::Synth {
            out,
            seed,
            sizes,
            x_means,
            x_variances,
            intercepts,
            slopes,
            residual_variance,
        } => {
            let mut spec = SyntheticSpec {
                seed,
                ..SyntheticSpec::default()
            };
            if let Some(sizes) = sizes {
                spec.component_sizes = sizes;
            }
            if let Some(text) = x_means {
                spec.x_means = parse_mean_groups(&text)?;
            }
            if let Some(v) = x_variances {
                spec.x_variances = v;
            }
            if let Some(v) = intercepts {
                spec.intercepts = v;
            }
            if let Some(v) = slopes {
                spec.slopes = v;
            }
            if let Some(v) = residual_variance {
                spec.residual_variance = v;
            }
            reconcile_default_spec(&mut spec);
            let data = generate_synthetic(&spec)?;
            write_atomic(&out, &csv_bytes(&data, precision)?)?;
            println!(
                "wrote {} rows x {} features to {}",
                data.n_rows(),
                data.n_features(),
                out.display()
            );
            Ok(())
        }

        Command::Vif {
            input,
            outcome,
            threshold,
            out,
            report,
        } => {
            let data = load_csv(&input, &outcome)?;
            let (pruned, vif_report) = vif_prune(&data, threshold)?;
            write_atomic(&out, &csv_bytes(&pruned, precision)?)?;
            let json = to_json_with_precision(&vif_report, precision)?;
            match report {
                Some(path) => write_atomic(&path, json.as_bytes())?,
                None => println!("{json}"),
            }
            println!(
                "kept {} of {} features -> {}",
                pruned.n_features(),
                data.n_features(),
                out.display()
            );
            for (name, vif) in &vif_report.removed {
                println!("removed {name} (VIF {})", format_float(*vif, 6));
            }
            Ok(())
        }

        Command::Fit {
            input,
            outcome,
            k,
            fit_flags,
            out,
        } => {
            let data = load_csv(&input, &outcome)?;
            let cfg = fit_flags.config(k);
            let model = fit(&data, &cfg)?;
            write_atomic(
                &out,
                model_to_json_with_precision(&model, precision)?.as_bytes(),
            )?;
            print!("{}", fit_summary(&model, &data));
            Ok(())
        }

        Command::Predict {
            model,
            input,
            mode,
            outcome,
            out,
        } => {
            let model = dogr::serialize::load_model(&model)?;
            let features = load_feature_matrix(&input, &model.feature_names, outcome.as_deref())?;
            let predictions = predict_rows(&model, &features, mode.into())?;
            write_atomic(&out, &predictions_csv(&predictions, precision))?;
            println!(
                "wrote {} predictions to {}",
                predictions.len(),
                out.display()
            );
            Ok(())
        }

        Command::SelectK {
            input,
            outcome,
            k_min,
            k_max,
            fit_flags,
            out,
        } => {
            let k_range = k_range(k_min, k_max)?;
            let data = load_csv(&input, &outcome)?;
            let cfg = fit_flags.config(k_min);
            let result = sweep(&data, &k_range, &cfg)?;
            if let Some(path) = out {
                let bytes = if path.extension().is_some_and(|e| e == "json") {
                    to_json_with_precision(&result, precision)?.into_bytes()
                } else {
                    sweep_csv(&result, precision)
                };
                write_atomic(&path, &bytes)?;
            }
            print!("{}", sweep_table(&result));
            Ok(())
        }

        Command::Evaluate {
            input,
            outcome,
            k_min,
            k_max,
            outer_folds,
            inner_folds,
            repeats,
            mode,
            fit_flags,
            out,
            predictions,
        } => {
            let k_grid = k_range(k_min, k_max)?;
            let data = load_csv(&input, &outcome)?;
            let cv_cfg = CvConfig {
                outer_folds,
                inner_folds,
                repeats,
                k_grid,
                seed: fit_flags.seed,
                prediction_mode: mode.into(),
            };
            let fit_cfg = fit_flags.config(1);
            let (report, rows) = nested_cv_detailed(&data, &cv_cfg, &fit_cfg)?;
            if let Some(path) = out {
                write_atomic(
                    &path,
                    to_json_with_precision(&report, precision)?.as_bytes(),
                )?;
            }
            if let Some(path) = predictions {
                write_atomic(&path, &predictions_dump_csv(&rows, precision))?;
            }
            print!("{}", eval_table(&report));
            Ok(())
        }

        Command::Report {
            model,
            input,
            outcome,
            out,
            radar,
        } => {
            let model = dogr::serialize::load_model(&model)?;
            let outcome = outcome.unwrap_or_else(|| model.outcome_name.clone());
            let data = load_csv(&input, &outcome)?;
            if data.feature_names() != model.feature_names.as_slice() {
                return Err(CliError::App(dogr::Error::FeatureMismatch(format!(
                    "model has {:?}, input has {:?}",
                    model.feature_names,
                    data.feature_names()
                ))));
            }
            let unit = DVector::from_element(data.n_rows(), 1.0);
            let pooled = wls_fit(data.features(), data.outcome(), &unit)?;
            let reports = coefficient_report(&model, &pooled)?;
            write_atomic(&out, &coefficient_csv(&reports, precision))?;

            let radar_json = to_json_with_precision(&radar_export(&model), precision)?;
            match radar {
                Some(path) => write_atomic(&path, radar_json.as_bytes())?,
                None => println!("{radar_json}"),
            }
            println!("wrote coefficient report to {}", out.display());
            Ok(())
        }
    }
}

/// Component groups split on ';', coordinates on ','.
fn parse_mean_groups(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.split(';')
        .map(|group| {
            group
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Usage(format!("bad --x-means value '{v}'")))
                })
                .collect()
        })
        .collect()
}

/// Shrink the untouched default lists when an override changes the number of
/// components, so e.g. `--sizes 100` alone describes a one-component dataset.
fn reconcile_default_spec(spec: &mut SyntheticSpec) {
    let c = spec.component_sizes.len();
    let default = SyntheticSpec::default();
    if spec.x_means.len() != c && spec.x_means == default.x_means {
        spec.x_means = vec![spec.x_means[0].clone(); c];
    }
    if spec.x_variances.len() != c && spec.x_variances == default.x_variances {
        spec.x_variances = vec![spec.x_variances[0]; c];
    }
    if spec.intercepts.len() != c && spec.intercepts == default.intercepts {
        spec.intercepts = vec![spec.intercepts[0]; c];
    }
    if spec.slopes.len() != c && spec.slopes == default.slopes {
        spec.slopes = vec![spec.slopes[0]; c];
    }
}

fn k_range(k_min: usize, k_max: usize) -> Result<Vec<usize>, CliError> {
    if k_min == 0 || k_min > k_max {
        return Err(CliError::Usage(format!("invalid K range {k_min}..{k_max}")));
    }
    Ok((k_min..=k_max).collect())
}

/// Write through a temp file in the destination directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(dogr::Error::Io)?;
    tmp.write_all(bytes).map_err(dogr::Error::Io)?;
    tmp.persist(path).map_err(|e| dogr::Error::Io(e.error))?;
    Ok(())
}

fn fit_summary(model: &Model, data: &dogr::Dataset) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "fit: K={} on {} rows x {} features ({} iterations, converged={})",
        model.n_components(),
        data.n_rows(),
        data.n_features(),
        model.iterations,
        model.converged
    );
    if let Some(ll) = model.final_log_likelihood() {
        let _ = writeln!(s, "log-likelihood: {}", format_float(ll, 17));
    }
    for (k, c) in model.components.iter().enumerate() {
        let slopes: Vec<String> = (1..c.coefficients.len())
            .map(|j| format_float(c.coefficients[j], 6))
            .collect();
        let _ = writeln!(
            s,
            "  component {k}: weight={} intercept={} slopes=[{}] residual_variance={}",
            format_float(c.weight, 6),
            format_float(c.coefficients[0], 6),
            slopes.join(", "),
            format_float(c.residual_variance, 6),
        );
    }
    for event in &model.reseed_events {
        let _ = writeln!(
            s,
            "  note: component {} re-seeded at iteration {}",
            event.component, event.iteration
        );
    }
    s
}

fn predictions_csv(predictions: &DVector<f64>, precision: usize) -> Vec<u8> {
    let mut out = String::from("prediction\n");
    for v in predictions.iter() {
        out.push_str(&format_float(*v, precision));
        out.push('\n');
    }
    out.into_bytes()
}

fn sweep_csv(result: &BicSweepResult, precision: usize) -> Vec<u8> {
    let mut out = String::from("k,loglik,params,bic,selected\n");
    for row in &result.rows {
        let ll = row
            .log_likelihood
            .map_or_else(|| "nan".to_string(), |v| format_float(v, precision));
        let bic = row
            .bic
            .map_or_else(|| "nan".to_string(), |v| format_float(v, precision));
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.k, ll, row.parameter_count, bic, row.selected
        );
    }
    out.into_bytes()
}

fn sweep_table(result: &BicSweepResult) -> String {
    let mut s = String::from("   K     log-likelihood  params            BIC  selected\n");
    for row in &result.rows {
        match (row.log_likelihood, row.bic) {
            (Some(ll), Some(bic)) => {
                let _ = writeln!(
                    s,
                    "{:>4}  {:>17.6}  {:>6}  {:>13.6}  {}",
                    row.k,
                    ll,
                    row.parameter_count,
                    bic,
                    if row.selected { "*" } else { "" }
                );
            }
            _ => {
                let _ = writeln!(
                    s,
                    "{:>4}  {:>17}  {:>6}  {:>13}  failed: {}",
                    row.k,
                    "-",
                    row.parameter_count,
                    "-",
                    row.error.as_deref().unwrap_or("unknown")
                );
            }
        }
    }
    let _ = writeln!(s, "best K: {}", result.best_k);
    s
}

fn eval_table(report: &EvalReport) -> String {
    let mut s = String::from("fold  chosen_k        rmse         mae\n");
    for f in &report.dogr.per_fold {
        let _ = writeln!(
            s,
            "{:>4}  {:>8}  {:>10.4}  {:>10.4}",
            f.fold, f.chosen_k, f.rmse, f.mae
        );
    }
    let _ = writeln!(
        s,
        "model    rmse {:.4} (+/- {:.4})  mae {:.4} (+/- {:.4})",
        report.dogr.mean_rmse, report.dogr.std_rmse, report.dogr.mean_mae, report.dogr.std_mae
    );
    let _ = writeln!(
        s,
        "baseline rmse {:.4} (+/- {:.4})  mae {:.4} (+/- {:.4})",
        report.baseline.mean_rmse,
        report.baseline.std_rmse,
        report.baseline.mean_mae,
        report.baseline.std_mae
    );
    for failure in &report.failed_folds {
        let _ = writeln!(s, "fold {} failed: {}", failure.fold, failure.reason);
    }
    s
}

fn coefficient_csv(reports: &[CoefficientReport], precision: usize) -> Vec<u8> {
    let mut out = String::from("feature,component,beta,se,z,p,reversal\n");
    for report in reports {
        let _ = writeln!(
            out,
            "{},pooled,{},{},,,",
            report.feature,
            format_float(report.pooled_beta, precision),
            format_float(report.pooled_se, precision),
        );
        for c in &report.per_component {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                report.feature,
                c.component,
                format_float(c.beta, precision),
                format_float(c.se, precision),
                format_float(c.z_score, precision),
                format_float(c.p_value, precision),
                c.reversal_flag
            );
        }
    }
    out.into_bytes()
}

fn predictions_dump_csv(rows: &[PredictionRow], precision: usize) -> Vec<u8> {
    let mut out = String::from("row_index,y_true,y_pred_dogr,y_pred_mlr,fold\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.row_index,
            format_float(r.y_true, precision),
            format_float(r.y_pred_dogr, precision),
            format_float(r.y_pred_mlr, precision),
            r.fold
        );
    }
    out.into_bytes()
}
