//! Cross-module flows: generate data, prune, fit, serialize, reload, predict.

use nalgebra::{DMatrix, DVector};

use dogr::eval::{nested_cv, CvConfig};
use dogr::inference::{coefficient_report, predict, radar_export};
use dogr::model::{fit, FitConfig, InitStrategy};
use dogr::numerics::wls_fit;
use dogr::preprocess::{generate_synthetic, load_csv, vif_prune, write_csv, SyntheticSpec};
use dogr::serialize::{model_from_json, model_to_json};
use dogr::{Dataset, PredictionMode};

fn small_benchmark(seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        component_sizes: vec![300, 200],
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

#[test]
fn pipeline_csv_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("data.csv");
    let data = small_benchmark(3);
    write_csv(&data, &csv_path, 17).unwrap();
    let loaded = load_csv(&csv_path, "y").unwrap();
    assert_eq!(loaded.n_rows(), 500);

    let model = fit(&loaded, &FitConfig::new(2).with_seed(5)).unwrap();
    assert!(model.converged);

    let unit = DVector::from_element(loaded.n_rows(), 1.0);
    let pooled = wls_fit(loaded.features(), loaded.outcome(), &unit).unwrap();
    let report = coefficient_report(&model, &pooled).unwrap();
    assert_eq!(report.len(), 1);
    assert_eq!(report[0].per_component.len(), 2);

    let radar = radar_export(&model);
    assert_eq!(radar.components.len(), 2);
    let max_mu = radar
        .components
        .iter()
        .map(|c| c.normalized_mu[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(max_mu, 1.0);
}

#[test]
fn serialized_model_predicts_bit_identically() {
    let data = small_benchmark(9);
    let model = fit(&data, &FitConfig::new(2).with_seed(1)).unwrap();
    let reloaded = model_from_json(&model_to_json(&model).unwrap()).unwrap();

    let mut state = 0x243F6A8885A308D3u64;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        400.0 + 200.0 * ((state >> 11) as f64) / (1u64 << 53) as f64
    };
    for _ in 0..1000 {
        let x = DVector::from_vec(vec![next()]);
        for mode in [
            PredictionMode::PosteriorWeights,
            PredictionMode::GlobalWeights,
        ] {
            let a = predict(&model, &x, mode).unwrap();
            let b = predict(&reloaded, &x, mode).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn vif_then_fit_runs_end_to_end() {
    // Third feature is the sum of the first two; VIF pruning must drop one
    // column and the remaining design must fit cleanly.
    let base = small_benchmark(12);
    let n = base.n_rows();
    let mut features = DMatrix::zeros(n, 3);
    for i in 0..n {
        let x = base.features()[(i, 0)];
        features[(i, 0)] = x;
        features[(i, 1)] = (i as f64).sin() * 10.0;
        features[(i, 2)] = x + features[(i, 1)];
    }
    let d = Dataset::new(
        features,
        base.outcome().clone(),
        vec!["x1".to_string(), "x2".to_string(), "x3".to_string()],
        "y",
    )
    .unwrap();
    let (pruned, report) = vif_prune(&d, 5.0).unwrap();
    assert_eq!(report.removed.len(), 1);
    let model = fit(&pruned, &FitConfig::new(2).with_seed(2)).unwrap();
    assert_eq!(model.n_features(), 2);
}

#[test]
fn kmeans_and_random_inits_agree_on_easy_data() {
    let data = small_benchmark(21);
    let random = fit(&data, &FitConfig::new(2).with_seed(4)).unwrap();
    let kmeans = fit(
        &data,
        &FitConfig {
            init_strategy: InitStrategy::KmeansOnXy,
            ..FitConfig::new(2).with_seed(4)
        },
    )
    .unwrap();
    let mut a: Vec<f64> = random
        .components
        .iter()
        .map(|c| c.coefficients[0])
        .collect();
    let mut b: Vec<f64> = kmeans
        .components
        .iter()
        .map(|c| c.coefficients[0])
        .collect();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 5.0, "intercepts diverge: {a:?} vs {b:?}");
    }
}

#[test]
fn nested_cv_beats_baseline_on_mixture_data() {
    let data = small_benchmark(30);
    let cfg = CvConfig {
        k_grid: vec![1, 2],
        seed: 3,
        ..CvConfig::default()
    };
    let report = nested_cv(&data, &cfg, &FitConfig::new(1)).unwrap();
    assert!(report.failed_folds.is_empty());
    assert!(
        report.dogr.mean_rmse < report.baseline.mean_rmse * 0.95,
        "mixture {} vs baseline {}",
        report.dogr.mean_rmse,
        report.baseline.mean_rmse
    );
}
