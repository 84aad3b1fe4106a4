//! Nested cross-validation harness with a pooled-regression baseline.
//!
//! The outer loop measures out-of-sample error; for each outer fold an inner
//! cross-validation picks the number of components from a grid by mean RMSE.
//! The pooled multivariate linear regression baseline is evaluated on exactly
//! the same splits.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::inference::{predict_rows, PredictionMode};
use crate::model::{fit, FitConfig};
use crate::numerics::wls_fit;
use crate::rng::{derive_seed, SeededRng};

/// Root mean squared error.
pub fn rmse(y_true: &DVector<f64>, y_pred: &DVector<f64>) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let n = y_true.len() as f64;
    let sse: f64 = y_true
        .iter()
        .zip(y_pred.iter())
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok((sse / n).sqrt())
}

/// Mean absolute error.
pub fn mae(y_true: &DVector<f64>, y_pred: &DVector<f64>) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let n = y_true.len() as f64;
    let sae: f64 = y_true
        .iter()
        .zip(y_pred.iter())
        .map(|(t, p)| (t - p).abs())
        .sum();
    Ok(sae / n)
}

fn check_lengths(a: &DVector<f64>, b: &DVector<f64>) -> Result<()> {
    if a.is_empty() {
        return Err(Error::EmptyInput("metric over empty vectors"));
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "metric: y_true vs y_pred",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// Nested cross-validation configuration.
#[derive(Debug, Clone, Serialize)]
pub struct CvConfig {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub repeats: usize,
    pub k_grid: Vec<usize>,
    pub seed: u64,
    pub prediction_mode: PredictionMode,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            outer_folds: 5,
            inner_folds: 5,
            repeats: 1,
            k_grid: (1..=6).collect(),
            seed: 0,
            prediction_mode: PredictionMode::default(),
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(Error::InvalidConfig("folds must be >= 2".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        if self.k_grid.is_empty() {
            return Err(Error::InvalidConfig("k_grid must be non-empty".into()));
        }
        Ok(())
    }
}

/// Out-of-sample scores of one outer fold.
#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub chosen_k: usize,
    pub rmse: f64,
    pub mae: f64,
}

/// Per-fold scores plus their mean and sample standard deviation.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub per_fold: Vec<FoldOutcome>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub mean_mae: f64,
    pub std_mae: f64,
}

impl MethodSummary {
    fn from_folds(per_fold: Vec<FoldOutcome>) -> Self {
        let rmses: Vec<f64> = per_fold.iter().map(|f| f.rmse).collect();
        let maes: Vec<f64> = per_fold.iter().map(|f| f.mae).collect();
        let (mean_rmse, std_rmse) = mean_std(&rmses);
        let (mean_mae, std_mae) = mean_std(&maes);
        Self {
            per_fold,
            mean_rmse,
            std_rmse,
            mean_mae,
            std_mae,
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// A fold that could not be evaluated, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub reason: String,
}

/// Full evaluation report: the mixture model's scores at the top level, the
/// pooled-regression baseline under `baseline`.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub dogr: MethodSummary,
    pub baseline: MethodSummary,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed_folds: Vec<FoldFailure>,
}

/// One held-out prediction, for the optional per-fold dump.
#[derive(Debug, Clone, Serialize)]
pub struct PredictionRow {
    pub row_index: usize,
    pub y_true: f64,
    pub y_pred_dogr: f64,
    pub y_pred_mlr: f64,
    pub fold: usize,
}

/// Run nested cross-validation and return the report.
pub fn nested_cv(d: &Dataset, cfg: &CvConfig, fit_cfg: &FitConfig) -> Result<EvalReport> {
    nested_cv_detailed(d, cfg, fit_cfg).map(|(report, _)| report)
}

/// As [`nested_cv`], also returning every held-out prediction.
pub fn nested_cv_detailed(
    d: &Dataset,
    cfg: &CvConfig,
    fit_cfg: &FitConfig,
) -> Result<(EvalReport, Vec<PredictionRow>)> {
    cfg.validate()?;
    let n = d.n_rows();
    if n < cfg.outer_folds {
        return Err(Error::EvalFailed(format!(
            "{n} rows cannot be split into {} outer folds",
            cfg.outer_folds
        )));
    }

    // Fold layout is fixed up front so the parallel loop is pure.
    let mut tasks = Vec::with_capacity(cfg.repeats * cfg.outer_folds);
    for repeat in 0..cfg.repeats {
        let mut order: Vec<usize> = (0..n).collect();
        SeededRng::new(derive_seed(cfg.seed, &[0xF0, repeat as u64])).shuffle(&mut order);
        let chunks = chunk_evenly(&order, cfg.outer_folds);
        for (outer, test_rows) in chunks.iter().enumerate() {
            let train_rows: Vec<usize> = chunks
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != outer)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            tasks.push(FoldTask {
                fold: repeat * cfg.outer_folds + outer,
                repeat,
                outer,
                train_rows,
                test_rows: test_rows.clone(),
            });
        }
    }

    let outcomes: Vec<std::result::Result<FoldSuccess, FoldFailure>> = tasks
        .par_iter()
        .map(|task| run_fold(d, cfg, fit_cfg, task))
        .collect();

    let mut dogr_folds = Vec::new();
    let mut baseline_folds = Vec::new();
    let mut failed = Vec::new();
    let mut predictions = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(success) => {
                dogr_folds.push(success.dogr);
                baseline_folds.push(success.baseline);
                predictions.extend(success.predictions);
            }
            Err(failure) => failed.push(failure),
        }
    }
    if dogr_folds.is_empty() {
        return Err(Error::EvalFailed(format!(
            "every fold failed; first: {}",
            failed.first().map(|f| f.reason.clone()).unwrap_or_default()
        )));
    }

    let report = EvalReport {
        dogr: MethodSummary::from_folds(dogr_folds),
        baseline: MethodSummary::from_folds(baseline_folds),
        failed_folds: failed,
    };
    Ok((report, predictions))
}

struct FoldTask {
    fold: usize,
    repeat: usize,
    outer: usize,
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
}

struct FoldSuccess {
    dogr: FoldOutcome,
    baseline: FoldOutcome,
    predictions: Vec<PredictionRow>,
}

fn run_fold(
    d: &Dataset,
    cfg: &CvConfig,
    fit_cfg: &FitConfig,
    task: &FoldTask,
) -> std::result::Result<FoldSuccess, FoldFailure> {
    let fail = |reason: String| FoldFailure {
        fold: task.fold,
        reason,
    };
    let train = d
        .subset(&task.train_rows)
        .map_err(|e| fail(e.to_string()))?;
    let test = d.subset(&task.test_rows).map_err(|e| fail(e.to_string()))?;

    let chosen_k = select_k(&train, cfg, fit_cfg, task).ok_or_else(|| {
        fail(format!(
            "no K in {:?} could be fitted in the inner loop",
            cfg.k_grid
        ))
    })?;

    let refit_cfg = FitConfig {
        n_components: chosen_k,
        seed: derive_seed(cfg.seed, &[0xAB, task.repeat as u64, task.outer as u64]),
        ..fit_cfg.clone()
    };
    let model = fit(&train, &refit_cfg).map_err(|e| fail(e.to_string()))?;
    let dogr_pred = predict_rows(&model, test.features(), cfg.prediction_mode)
        .map_err(|e| fail(e.to_string()))?;

    let unit = DVector::from_element(train.n_rows(), 1.0);
    let pooled =
        wls_fit(train.features(), train.outcome(), &unit).map_err(|e| fail(e.to_string()))?;
    let mlr_pred = DVector::from_fn(test.n_rows(), |i, _| pooled.value_at(&test.feature_row(i)));

    let build = |pred: &DVector<f64>, k: usize| -> std::result::Result<FoldOutcome, FoldFailure> {
        Ok(FoldOutcome {
            fold: task.fold,
            chosen_k: k,
            rmse: rmse(test.outcome(), pred).map_err(|e| fail(e.to_string()))?,
            mae: mae(test.outcome(), pred).map_err(|e| fail(e.to_string()))?,
        })
    };
    let dogr = build(&dogr_pred, chosen_k)?;
    // The pooled baseline is the single-component model.
    let baseline = build(&mlr_pred, 1)?;

    let predictions = task
        .test_rows
        .iter()
        .enumerate()
        .map(|(i, &row_index)| PredictionRow {
            row_index,
            y_true: test.outcome()[i],
            y_pred_dogr: dogr_pred[i],
            y_pred_mlr: mlr_pred[i],
            fold: task.fold,
        })
        .collect();

    Ok(FoldSuccess {
        dogr,
        baseline,
        predictions,
    })
}

/// Inner cross-validation: mean RMSE per K over the inner folds; any fit
/// failure disqualifies that K for this outer fold. Ties pick the smaller K.
fn select_k(
    train: &Dataset,
    cfg: &CvConfig,
    fit_cfg: &FitConfig,
    task: &FoldTask,
) -> Option<usize> {
    let n = train.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(derive_seed(
        cfg.seed,
        &[0xC1, task.repeat as u64, task.outer as u64],
    ))
    .shuffle(&mut order);
    let chunks = chunk_evenly(&order, cfg.inner_folds);

    let grid: Vec<(usize, usize)> = cfg
        .k_grid
        .iter()
        .flat_map(|&k| (0..chunks.len()).map(move |inner| (k, inner)))
        .collect();

    let scores: Vec<((usize, usize), Option<f64>)> = grid
        .par_iter()
        .map(|&(k, inner)| {
            let score = inner_score(train, cfg, fit_cfg, task, &chunks, k, inner);
            ((k, inner), score)
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for &k in &cfg.k_grid {
        let per_fold: Vec<Option<f64>> = scores
            .iter()
            .filter(|((kk, _), _)| *kk == k)
            .map(|(_, s)| *s)
            .collect();
        if per_fold.iter().any(Option::is_none) {
            continue;
        }
        let mean: f64 = per_fold.iter().map(|s| s.unwrap()).sum::<f64>() / per_fold.len() as f64;
        let improves = match best {
            None => true,
            Some((bk, bv)) => mean < bv || (mean == bv && k < bk),
        };
        if improves {
            best = Some((k, mean));
        }
    }
    best.map(|(k, _)| k)
}

fn inner_score(
    train: &Dataset,
    cfg: &CvConfig,
    fit_cfg: &FitConfig,
    task: &FoldTask,
    chunks: &[Vec<usize>],
    k: usize,
    inner: usize,
) -> Option<f64> {
    let val_rows = &chunks[inner];
    let fit_rows: Vec<usize> = chunks
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != inner)
        .flat_map(|(_, rows)| rows.iter().copied())
        .collect();
    let inner_train = train.subset(&fit_rows).ok()?;
    let inner_val = train.subset(val_rows).ok()?;
    let inner_cfg = FitConfig {
        n_components: k,
        seed: derive_seed(
            cfg.seed,
            &[
                0xD2,
                task.repeat as u64,
                task.outer as u64,
                inner as u64,
                k as u64,
            ],
        ),
        ..fit_cfg.clone()
    };
    let model = fit(&inner_train, &inner_cfg).ok()?;
    let pred = predict_rows(&model, inner_val.features(), cfg.prediction_mode).ok()?;
    rmse(inner_val.outcome(), &pred).ok()
}

/// Split `order` into `folds` contiguous chunks with sizes differing by at
/// most one (the first `n % folds` chunks get the extra row).
fn chunk_evenly(order: &[usize], folds: usize) -> Vec<Vec<usize>> {
    let n = order.len();
    let base = n / folds;
    let extra = n % folds;
    let mut chunks = Vec::with_capacity(folds);
    let mut start = 0;
    for c in 0..folds {
        let size = base + usize::from(c < extra);
        chunks.push(order[start..start + size].to_vec());
        start += size;
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use nalgebra::DMatrix;

    #[test]
    fn metric_examples() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);

        let t = DVector::from_vec(vec![0.0, 0.0]);
        let p = DVector::from_vec(vec![3.0, -3.0]);
        assert!((rmse(&t, &p).unwrap() - 3.0).abs() < 1e-14);
        assert!((mae(&t, &p).unwrap() - 3.0).abs() < 1e-14);

        let t = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let p = DVector::from_vec(vec![2.0, 2.0, 5.0]);
        assert!((rmse(&t, &p).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((mae(&t, &p).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn metric_error_paths() {
        let a = DVector::from_vec(vec![1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert!(rmse(&a, &b).is_err());
        let empty = DVector::from_vec(Vec::<f64>::new());
        assert!(mae(&empty, &empty).is_err());
    }

    #[test]
    fn chunks_partition_evenly() {
        let order: Vec<usize> = (0..13).collect();
        let chunks = chunk_evenly(&order, 5);
        let sizes: Vec<usize> = chunks.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 2, 2]);
        let mut all: Vec<usize> = chunks.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, order);
    }

    fn line_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = SeededRng::new(seed);
        let x = DMatrix::from_fn(n, 1, |_, _| 2.0 * rng.normal());
        let y = DVector::from_fn(n, |i, _| 1.0 + 3.0 * x[(i, 0)] + 0.5 * rng.normal());
        Dataset::new(x, y, vec!["x1".to_string()], "y").unwrap()
    }

    #[test]
    fn toy_two_fold_report_shape() {
        // Inner folds stay at the default 5 so the 5-row outer-training split
        // leaves 4 rows per inner fit, enough for K=1 over one feature.
        let d = line_dataset(10, 3);
        let cfg = CvConfig {
            outer_folds: 2,
            k_grid: vec![1],
            ..CvConfig::default()
        };
        let report = nested_cv(&d, &cfg, &FitConfig::new(1)).unwrap();
        assert_eq!(report.dogr.per_fold.len(), 2);
        assert_eq!(report.baseline.per_fold.len(), 2);
        assert!(report.failed_folds.is_empty());
    }

    #[test]
    fn single_line_data_prefers_k1_and_matches_baseline() {
        let d = line_dataset(250, 11);
        let cfg = CvConfig {
            k_grid: vec![1, 2],
            seed: 5,
            ..CvConfig::default()
        };
        let report = nested_cv(&d, &cfg, &FitConfig::new(1)).unwrap();
        let k1_folds = report
            .dogr
            .per_fold
            .iter()
            .filter(|f| f.chosen_k == 1)
            .count();
        assert!(k1_folds >= 4, "chose K=1 in only {k1_folds}/5 folds");
        let ratio = report.dogr.mean_rmse / report.baseline.mean_rmse;
        assert!((ratio - 1.0).abs() < 0.02, "rmse ratio {ratio}");
    }

    #[test]
    fn rmse_dominates_mae_in_reports() {
        let d = line_dataset(120, 8);
        let cfg = CvConfig {
            k_grid: vec![1, 2],
            ..CvConfig::default()
        };
        let report = nested_cv(&d, &cfg, &FitConfig::new(1)).unwrap();
        for f in report.dogr.per_fold.iter().chain(&report.baseline.per_fold) {
            assert!(f.rmse >= f.mae && f.mae >= 0.0);
        }
    }

    #[test]
    fn folds_are_disjoint_and_shared_with_baseline() {
        let d = line_dataset(53, 4);
        let cfg = CvConfig {
            k_grid: vec![1],
            ..CvConfig::default()
        };
        let (_, predictions) = nested_cv_detailed(&d, &cfg, &FitConfig::new(1)).unwrap();
        let mut seen = vec![false; d.n_rows()];
        for p in &predictions {
            assert!(!seen[p.row_index], "row {} in two folds", p.row_index);
            seen[p.row_index] = true;
        }
        assert!(
            seen.iter().all(|&s| s),
            "union of folds must cover all rows"
        );
    }

    #[test]
    fn repeats_multiply_fold_count() {
        let d = line_dataset(40, 6);
        let cfg = CvConfig {
            outer_folds: 2,
            inner_folds: 2,
            repeats: 3,
            k_grid: vec![1],
            ..CvConfig::default()
        };
        let report = nested_cv(&d, &cfg, &FitConfig::new(1)).unwrap();
        assert_eq!(report.dogr.per_fold.len(), 6);
    }

    #[test]
    fn report_is_deterministic_across_thread_counts() {
        let d = line_dataset(80, 9);
        let cfg = CvConfig {
            k_grid: vec![1, 2],
            seed: 2,
            ..CvConfig::default()
        };
        let fit_cfg = FitConfig::new(1);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| nested_cv(&d, &cfg, &fit_cfg))
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| nested_cv(&d, &cfg, &fit_cfg))
            .unwrap();
        let a = crate::serialize::to_json(&single).unwrap();
        let b = crate::serialize::to_json(&many).unwrap();
        assert_eq!(a, b);
    }
}
