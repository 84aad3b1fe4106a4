//! Choosing the number of components by BIC over a range of K.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{fit, FitConfig, Model};

/// Parameters of a K-component model over p features: K·(p² + 2p + 3),
/// counting the full covariance, mean, regression coefficients, residual
/// variance and mixture weight of each component.
pub fn parameter_count(k: usize, p: usize) -> usize {
    k * (p * p + 2 * p + 3)
}

/// Bayesian information criterion: −2ℒ + K·(p² + 2p + 3)·ln(n). Lower wins.
pub fn bic(log_likelihood: f64, k: usize, p: usize, n: f64) -> f64 {
    -2.0 * log_likelihood + parameter_count(k, p) as f64 * n.ln()
}

/// One row of a BIC sweep. Failed fits keep their K and parameter count but
/// carry the failure message instead of scores.
#[derive(Debug, Clone, Serialize)]
pub struct BicRow {
    pub k: usize,
    pub log_likelihood: Option<f64>,
    pub parameter_count: usize,
    pub bic: Option<f64>,
    pub selected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BicSweepResult {
    pub rows: Vec<BicRow>,
    pub best_k: usize,
}

/// Fit every K in `k_range` (independent seeds `cfg.seed + K`, fits run in
/// parallel) and pick the K with the smallest BIC; ties go to the smaller K.
pub fn sweep(d: &Dataset, k_range: &[usize], cfg: &FitConfig) -> Result<BicSweepResult> {
    if k_range.is_empty() {
        return Err(Error::EmptyInput("sweep: k_range"));
    }
    let p = d.n_features();
    let n = d.n_rows() as f64;

    let fits: Vec<(usize, std::result::Result<Model, String>)> = k_range
        .par_iter()
        .map(|&k| {
            let k_cfg = FitConfig {
                n_components: k,
                seed: cfg.seed.wrapping_add(k as u64),
                ..cfg.clone()
            };
            (k, fit(d, &k_cfg).map_err(|e| e.to_string()))
        })
        .collect();

    let mut rows = Vec::with_capacity(fits.len());
    for (k, outcome) in fits {
        match outcome {
            Ok(model) => {
                let ll = model.final_log_likelihood().ok_or_else(|| {
                    Error::SelectionFailed(format!("K={k} fit produced no trace"))
                })?;
                rows.push(BicRow {
                    k,
                    log_likelihood: Some(ll),
                    parameter_count: parameter_count(k, p),
                    bic: Some(bic(ll, k, p, n)),
                    selected: false,
                    error: None,
                });
            }
            Err(message) => rows.push(BicRow {
                k,
                log_likelihood: None,
                parameter_count: parameter_count(k, p),
                bic: None,
                selected: false,
                error: Some(message),
            }),
        }
    }
    rows.sort_by_key(|r| r.k);

    let best_k = rows
        .iter()
        .filter_map(|r| r.bic.map(|b| (r.k, b)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::SelectionFailed("every K in the sweep failed".to_string()))?;
    for row in &mut rows {
        row.selected = row.k == best_k;
    }

    Ok(BicSweepResult { rows, best_k })
}
