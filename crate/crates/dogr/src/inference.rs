//! Prediction and interpretation of a fitted model: point predictions in two
//! weighting modes, soft membership of new points, coefficient significance
//! against a pooled regression, and radar-chart data export.

use nalgebra::DVector;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{density_caches, Model};
use crate::numerics::{log_sum_exp, regression_value, WlsSolution};

/// How per-component predictions are combined.
///
/// `GlobalWeights` averages with the fitted mixture weights ω_k.
/// `PosteriorWeights` (the default) weighs by the responsibilities of the
/// feature vector under each component's marginal, so the blend adapts to
/// where the test point lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    GlobalWeights,
    #[default]
    PosteriorWeights,
}

impl std::str::FromStr for PredictionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "global" => Ok(Self::GlobalWeights),
            "posterior" => Ok(Self::PosteriorWeights),
            other => Err(format!("unknown prediction mode '{other}'")),
        }
    }
}

fn check_x(m: &Model, x: &DVector<f64>) -> Result<()> {
    if x.len() != m.n_features() {
        return Err(Error::DimensionMismatch {
            context: "predict: x vs model features",
            expected: m.n_features(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// Predicted outcome at `x`.
pub fn predict(m: &Model, x: &DVector<f64>, mode: PredictionMode) -> Result<f64> {
    check_x(m, x)?;
    let weights = match mode {
        PredictionMode::GlobalWeights => m.components.iter().map(|c| c.weight).collect(),
        PredictionMode::PosteriorWeights => marginal_responsibilities(m, x)?,
    };
    let mut total = 0.0;
    for (c, w) in m.components.iter().zip(&weights) {
        total += w * regression_value(&c.coefficients, x);
    }
    Ok(total)
}

/// Predictions for every row of a feature matrix.
pub fn predict_rows(
    m: &Model,
    features: &nalgebra::DMatrix<f64>,
    mode: PredictionMode,
) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(features.nrows());
    for i in 0..features.nrows() {
        let x = DVector::from_fn(features.ncols(), |j, _| features[(i, j)]);
        out[i] = predict(m, &x, mode)?;
    }
    Ok(out)
}

fn marginal_responsibilities(m: &Model, x: &DVector<f64>) -> Result<Vec<f64>> {
    let caches = density_caches(m)?;
    let logs: Vec<f64> = caches
        .iter()
        .map(|c| c.log_weight + c.log_marginal(x))
        .collect();
    let lse = log_sum_exp(&logs)?;
    Ok(logs.iter().map(|l| (l - lse).exp()).collect())
}

/// Soft membership of a point. With an outcome value the joint density is
/// used (matching the E-step); without it only the feature marginal.
pub fn membership(m: &Model, x: &DVector<f64>, y: Option<f64>) -> Result<Vec<f64>> {
    check_x(m, x)?;
    match y {
        None => marginal_responsibilities(m, x),
        Some(y) => {
            let caches = density_caches(m)?;
            let logs: Vec<f64> = caches
                .iter()
                .map(|c| c.log_weight + c.log_joint(x, y))
                .collect();
            let lse = log_sum_exp(&logs)?;
            Ok(logs.iter().map(|l| (l - lse).exp()).collect())
        }
    }
}

/// Significance of one component coefficient against the pooled value.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentCoefficient {
    pub component: usize,
    pub beta: f64,
    pub se: f64,
    pub z_score: f64,
    pub p_value: f64,
    pub reversal_flag: bool,
    /// Set when both standard errors are zero and the z-score is undefined;
    /// such entries are reported as non-significant.
    pub z_undefined: bool,
}

/// Per-feature comparison of component coefficients with a pooled regression.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientReport {
    pub feature: String,
    pub pooled_beta: f64,
    pub pooled_se: f64,
    pub per_component: Vec<ComponentCoefficient>,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Compare each component's coefficients against a pooled fit over the same
/// features: z = (β_k − β_pooled) / √(se_k² + se_pooled²), two-sided p-value
/// from the standard normal, and a reversal flag for significant sign flips.
pub fn coefficient_report(m: &Model, pooled: &WlsSolution) -> Result<Vec<CoefficientReport>> {
    let p = m.n_features();
    if pooled.coefficients.len() != p + 1 {
        return Err(Error::DimensionMismatch {
            context: "coefficient_report: pooled fit vs model features",
            expected: p + 1,
            actual: pooled.coefficients.len(),
        });
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut reports = Vec::with_capacity(p);
    for j in 0..p {
        let pooled_beta = pooled.coefficients[j + 1];
        let pooled_se = pooled.standard_errors[j + 1];
        let mut per_component = Vec::with_capacity(m.n_components());
        for (k, c) in m.components.iter().enumerate() {
            let beta = c.coefficients[j + 1];
            let se = c.coefficient_standard_errors[j + 1];
            let denom = (se * se + pooled_se * pooled_se).sqrt();
            let (z_score, p_value, z_undefined) = if denom == 0.0 {
                (f64::NAN, 1.0, true)
            } else {
                let z = (beta - pooled_beta) / denom;
                (z, 2.0 * (1.0 - normal.cdf(z.abs())), false)
            };
            let reversal_flag = sign(beta) != sign(pooled_beta) && p_value <= 0.05;
            per_component.push(ComponentCoefficient {
                component: k,
                beta,
                se,
                z_score,
                p_value,
                reversal_flag,
                z_undefined,
            });
        }
        reports.push(CoefficientReport {
            feature: m.feature_names[j].clone(),
            pooled_beta,
            pooled_se,
            per_component,
        });
    }
    Ok(reports)
}

/// One component row of the radar export.
#[derive(Debug, Clone)]
pub struct RadarComponent {
    pub index: usize,
    pub weight: f64,
    /// Expected outcome of the component, the regression value at its mean.
    pub outcome_mean: f64,
    /// (feature, μ value normalized by the per-feature maximum over components).
    pub normalized_mu: Vec<(String, f64)>,
}

impl Serialize for RadarComponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(4))?;
        map.serialize_entry("index", &self.index)?;
        map.serialize_entry("weight", &self.weight)?;
        map.serialize_entry("outcome_mean", &self.outcome_mean)?;
        map.serialize_entry("normalized_mu", &PairsAsMap(&self.normalized_mu))?;
        map.end()
    }
}

struct PairsAsMap<'a>(&'a [(String, f64)]);

impl Serialize for PairsAsMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (name, value) in self.0 {
            map.serialize_entry(name, value)?;
        }
        map.end()
    }
}

/// Radar-chart data: per-component mean vectors normalized per coordinate.
#[derive(Debug, Clone, Serialize)]
pub struct RadarExport {
    pub components: Vec<RadarComponent>,
    /// Features whose per-component maximum mean was not positive; these are
    /// normalized by the maximum absolute value instead.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Normalize each coordinate of every component mean by the largest value of
/// that coordinate across components, so the per-coordinate maximum is 1.
pub fn radar_export(m: &Model) -> RadarExport {
    let p = m.n_features();
    let mut warnings = Vec::new();
    let denominators: Vec<f64> = (0..p)
        .map(|j| {
            let max = m
                .components
                .iter()
                .map(|c| c.mean[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max > 0.0 {
                max
            } else {
                let max_abs = m
                    .components
                    .iter()
                    .map(|c| c.mean[j].abs())
                    .fold(0.0, f64::max);
                warnings.push(m.feature_names[j].clone());
                if max_abs > 0.0 {
                    max_abs
                } else {
                    1.0
                }
            }
        })
        .collect();
    let components = m
        .components
        .iter()
        .enumerate()
        .map(|(k, c)| RadarComponent {
            index: k,
            weight: c.weight,
            outcome_mean: regression_value(&c.coefficients, &c.mean),
            normalized_mu: (0..p)
                .map(|j| (m.feature_names[j].clone(), c.mean[j] / denominators[j]))
                .collect(),
        })
        .collect();
    RadarExport {
        components,
        warnings,
    }
}
