//! Data preparation: CSV ingestion, VIF-based multicollinearity pruning, and
//! a seeded synthetic-data generator for benchmarking.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{wls_fit, wls_fit_ridged};
use crate::rng::SeededRng;
use crate::serialize::format_float;

/// Load a headered CSV into a dataset. Every non-outcome column becomes a
/// feature, in header order; every cell must parse as a finite number.
pub fn load_csv(path: impl AsRef<Path>, outcome_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile(path.display().to_string()));
    }
    let outcome_idx = headers
        .iter()
        .position(|h| h == outcome_column)
        .ok_or_else(|| Error::MissingColumn(outcome_column.to_string()))?;

    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != outcome_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::InvalidData(
            "no feature columns besides the outcome".to_string(),
        ));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut outcome: Vec<f64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::CsvParse {
                row: row_idx + 1,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::CsvParse {
                row: row_idx + 1,
                column: headers[j].clone(),
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvParse {
                    row: row_idx + 1,
                    column: headers[j].clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            if j == outcome_idx {
                outcome.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(format!(
            "{} has a header but no data rows",
            path.display()
        )));
    }

    let n = rows.len();
    let p = feature_names.len();
    let features = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    Dataset::new(
        features,
        DVector::from_vec(outcome),
        feature_names,
        outcome_column,
    )
}

/// Write a dataset as CSV (features in order, outcome last), with floats at
/// `precision` significant digits.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>, precision: usize) -> Result<()> {
    std::fs::write(path.as_ref(), csv_bytes(d, precision)?)?;
    Ok(())
}

/// The CSV encoding of a dataset, for callers that write files atomically.
pub fn csv_bytes(d: &Dataset, precision: usize) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = d.feature_names().to_vec();
    header.push(d.outcome_name().to_string());
    writer.write_record(&header)?;
    for i in 0..d.n_rows() {
        let mut record: Vec<String> = (0..d.n_features())
            .map(|j| format_float(d.features()[(i, j)], precision))
            .collect();
        record.push(format_float(d.outcome()[i], precision));
        writer.write_record(&record)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::InvalidData(e.to_string()))
}

/// Load a feature-only CSV whose header must carry exactly `feature_names`
/// (any order; `ignore_column` is dropped first). Columns come back in
/// `feature_names` order. A mismatch reports the missing and unexpected names.
pub fn load_feature_matrix(
    path: impl AsRef<Path>,
    feature_names: &[String],
    ignore_column: Option<&str>,
) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile(path.display().to_string()));
    }

    let usable: Vec<(usize, &String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| Some(h.as_str()) != ignore_column)
        .collect();
    let missing: Vec<&String> = feature_names
        .iter()
        .filter(|n| !usable.iter().any(|(_, h)| h == n))
        .collect();
    let unexpected: Vec<&String> = usable
        .iter()
        .map(|(_, h)| *h)
        .filter(|h| !feature_names.contains(h))
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(Error::FeatureMismatch(format!(
            "missing {missing:?}, unexpected {unexpected:?}"
        )));
    }
    let column_of: Vec<usize> = feature_names
        .iter()
        .map(|n| headers.iter().position(|h| h == n).unwrap())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(feature_names.len());
        for &j in &column_of {
            let cell = record.get(j).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| Error::CsvParse {
                row: row_idx + 1,
                column: headers[j].clone(),
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvParse {
                    row: row_idx + 1,
                    column: headers[j].clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(format!(
            "{} has a header but no data rows",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), feature_names.len(), |i, j| {
        rows[i][j]
    }))
}

/// Outcome of one VIF pruning run.
#[derive(Debug, Clone, Serialize)]
pub struct VifReport {
    /// Features removed, in removal order, with the VIF that removed them.
    pub removed: Vec<(String, f64)>,
    /// Features kept, with their final VIF (NaN once only one feature is left).
    pub kept: Vec<(String, f64)>,
}

/// Iteratively drop the feature with the largest variance inflation factor
/// until every VIF is at or below `threshold`. VIF_j = 1/(1−R²_j) from
/// regressing feature j on the remaining features (with intercept); an R² of
/// 1 within 1e-12 counts as infinite. Ties pick the lexicographically
/// smallest name. Stops once a single feature remains.
pub fn vif_prune(d: &Dataset, threshold: f64) -> Result<(Dataset, VifReport)> {
    if d.n_features() < 2 {
        return Err(Error::InvalidData(
            "VIF pruning needs at least two features".to_string(),
        ));
    }
    let mut keep: Vec<usize> = (0..d.n_features()).collect();
    let mut removed = Vec::new();

    loop {
        if keep.len() < 2 {
            break;
        }
        let vifs = vif_values(d, &keep)?;
        let mut worst: Option<(usize, f64)> = None;
        for (slot, &j) in keep.iter().enumerate() {
            let v = vifs[slot];
            let better = match worst {
                None => true,
                Some((wj, wv)) => {
                    v > wv || (v == wv && d.feature_names()[j] < d.feature_names()[wj])
                }
            };
            if better {
                worst = Some((j, v));
            }
        }
        let (worst_j, worst_v) = worst.unwrap();
        if worst_v > threshold {
            removed.push((d.feature_names()[worst_j].clone(), worst_v));
            keep.retain(|&j| j != worst_j);
        } else {
            break;
        }
    }

    let kept = if keep.len() >= 2 {
        let vifs = vif_values(d, &keep)?;
        keep.iter()
            .zip(vifs)
            .map(|(&j, v)| (d.feature_names()[j].clone(), v))
            .collect()
    } else {
        keep.iter()
            .map(|&j| (d.feature_names()[j].clone(), f64::NAN))
            .collect()
    };

    let pruned = d.select_features(&keep)?;
    Ok((pruned, VifReport { removed, kept }))
}

/// VIFs of the features at `keep`, each regressed on the others.
fn vif_values(d: &Dataset, keep: &[usize]) -> Result<Vec<f64>> {
    let n = d.n_rows();
    let mut out = Vec::with_capacity(keep.len());
    for (slot, &j) in keep.iter().enumerate() {
        let others: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter(|(s, _)| *s != slot)
            .map(|(_, &c)| c)
            .collect();
        let design = DMatrix::from_fn(n, others.len(), |i, c| d.features()[(i, others[c])]);
        let target = DVector::from_fn(n, |i, _| d.features()[(i, j)]);
        let unit = DVector::from_element(n, 1.0);

        let rss = match wls_fit(&design, &target, &unit) {
            Ok(sol) => sol.weighted_rss,
            // The remaining regressors are themselves collinear; a tiny ridge
            // recovers the fit without changing R² materially.
            Err(Error::SingularDesign { .. }) => {
                let scale =
                    design.iter().map(|v| v * v).sum::<f64>() / (n * others.len().max(1)) as f64;
                wls_fit_ridged(&design, &target, &unit, scale.max(1.0) * 1e-10)?.weighted_rss
            }
            Err(e) => return Err(e),
        };

        let mean = target.iter().sum::<f64>() / n as f64;
        let tss: f64 = target.iter().map(|v| (v - mean) * (v - mean)).sum();
        let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
        out.push(if r_squared >= 1.0 - 1e-12 {
            f64::INFINITY
        } else {
            (1.0 / (1.0 - r_squared)).max(1.0)
        });
    }
    Ok(out)
}

/// Recipe for a synthetic mixture-of-lines dataset.
///
/// Component c draws `component_sizes[c]` points with `x ~ N(x_means[c],
/// x_variances[c]·I)` and `y = intercepts[c] + slopes[c]·Σⱼ xⱼ + ε`,
/// `ε ~ N(0, residual_variance)`. Rows are shuffled by the seed.
#[derive(Debug, Clone, Serialize)]
pub struct SyntheticSpec {
    pub component_sizes: Vec<usize>,
    pub x_means: Vec<Vec<f64>>,
    pub x_variances: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub residual_variance: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// The two-component benchmark: 3000 + 2000 points sharing x-mean 500
    /// with variances 100 and 600, lines y = 200 + x and y = 800 + x, and
    /// residual variance 20.
    fn default() -> Self {
        Self {
            component_sizes: vec![3000, 2000],
            x_means: vec![vec![500.0], vec![500.0]],
            x_variances: vec![100.0, 600.0],
            intercepts: vec![200.0, 800.0],
            slopes: vec![1.0, 1.0],
            residual_variance: 20.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let c = self.component_sizes.len();
        if c == 0 {
            return Err(Error::InvalidConfig("no components in spec".into()));
        }
        if self.x_means.len() != c
            || self.x_variances.len() != c
            || self.intercepts.len() != c
            || self.slopes.len() != c
        {
            return Err(Error::InvalidConfig(
                "component list lengths disagree".into(),
            ));
        }
        let p = self.x_means[0].len();
        if p == 0 || self.x_means.iter().any(|m| m.len() != p) {
            return Err(Error::InvalidConfig(
                "x_means must be non-empty and of equal length".into(),
            ));
        }
        if self.component_sizes.contains(&0) {
            return Err(Error::InvalidConfig("component sizes must be >= 1".into()));
        }
        if self.x_variances.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::InvalidConfig("x variances must be > 0".into()));
        }
        if !self.residual_variance.is_finite() || self.residual_variance < 0.0 {
            return Err(Error::InvalidConfig(
                "residual variance must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.x_means[0].len()
    }
}

/// Generate the dataset described by `spec`; deterministic given the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let p = spec.n_features();
    let total: usize = spec.component_sizes.iter().sum();
    let mut rng = SeededRng::new(spec.seed);

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(total);
    let noise_sd = spec.residual_variance.sqrt();
    for (c, &size) in spec.component_sizes.iter().enumerate() {
        let sd = spec.x_variances[c].sqrt();
        for _ in 0..size {
            let x: Vec<f64> = (0..p)
                .map(|j| spec.x_means[c][j] + sd * rng.normal())
                .collect();
            let y = spec.intercepts[c]
                + spec.slopes[c] * x.iter().sum::<f64>()
                + noise_sd * rng.normal();
            rows.push((x, y));
        }
    }
    rng.shuffle(&mut rows);

    let features = DMatrix::from_fn(total, p, |i, j| rows[i].0[j]);
    let outcome = DVector::from_fn(total, |i, _| rows[i].1);
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Dataset::new(features, outcome, names, "y")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_headered_csv() {
        let f = write_temp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv(f.path(), "y").unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(d.features()[(1, 1)], 5.0);
        assert_eq!(d.outcome()[2], 9.0);
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let f = write_temp("a,b,y\n1,2,3\n4,abc,6\n");
        let err = load_csv(f.path(), "y").unwrap_err();
        match err {
            Error::CsvParse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_outcome_column_is_reported() {
        let f = write_temp("a,b\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), "y").unwrap_err(),
            Error::MissingColumn(_)
        ));
    }

    #[test]
    fn empty_file_is_reported() {
        let f = write_temp("");
        assert!(matches!(
            load_csv(f.path(), "y").unwrap_err(),
            Error::EmptyFile(_)
        ));
    }

    #[test]
    fn non_finite_cell_is_rejected() {
        let f = write_temp("a,y\ninf,1\n");
        assert!(matches!(
            load_csv(f.path(), "y").unwrap_err(),
            Error::CsvParse { .. }
        ));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let d = generate_synthetic(&SyntheticSpec {
            component_sizes: vec![40, 30],
            seed: 5,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, f.path(), 17).unwrap();
        let back = load_csv(f.path(), "y").unwrap();
        assert_eq!(d.n_rows(), back.n_rows());
        for i in 0..d.n_rows() {
            assert_eq!(
                d.features()[(i, 0)].to_bits(),
                back.features()[(i, 0)].to_bits()
            );
            assert_eq!(d.outcome()[i].to_bits(), back.outcome()[i].to_bits());
        }
    }

    fn independent_features(n: usize, seed: u64) -> Dataset {
        let mut rng = SeededRng::new(seed);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.normal());
        let y = DVector::from_fn(n, |_, _| rng.normal());
        Dataset::new(x, y, vec!["x1".to_string(), "x2".to_string()], "y").unwrap()
    }

    #[test]
    fn independent_features_are_kept() {
        let d = independent_features(500, 3);
        let (pruned, report) = vif_prune(&d, 5.0).unwrap();
        assert_eq!(pruned.n_features(), 2);
        assert!(report.removed.is_empty());
        for (_, v) in &report.kept {
            assert!(*v < 1.2, "vif {v}");
        }
    }

    #[test]
    fn exact_collinearity_removes_exactly_one() {
        let mut rng = SeededRng::new(4);
        let n = 200;
        let x1: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mut features = DMatrix::zeros(n, 3);
        for i in 0..n {
            features[(i, 0)] = x1[i];
            features[(i, 1)] = x2[i];
            features[(i, 2)] = x1[i] + x2[i];
        }
        let d = Dataset::new(
            features,
            DVector::from_fn(n, |_, _| rng.normal()),
            vec!["x1".to_string(), "x2".to_string(), "x3".to_string()],
            "y",
        )
        .unwrap();
        let (pruned, report) = vif_prune(&d, 5.0).unwrap();
        assert_eq!(report.removed.len(), 1);
        assert!(report.removed[0].1.is_infinite());
        assert_eq!(pruned.n_features(), 2);

        // Idempotent: pruning the output removes nothing further.
        let (again, second) = vif_prune(&pruned, 5.0).unwrap();
        assert!(second.removed.is_empty());
        assert_eq!(again.n_features(), pruned.n_features());
    }

    #[test]
    fn halts_at_single_feature() {
        // Both features are copies: one removal leaves p=1 and the loop stops.
        let mut rng = SeededRng::new(6);
        let n = 100;
        let base: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mut features = DMatrix::zeros(n, 2);
        for i in 0..n {
            features[(i, 0)] = base[i];
            features[(i, 1)] = base[i];
        }
        let d = Dataset::new(
            features,
            DVector::from_fn(n, |_, _| rng.normal()),
            vec!["a".to_string(), "b".to_string()],
            "y",
        )
        .unwrap();
        let (pruned, report) = vif_prune(&d, 5.0).unwrap();
        assert_eq!(pruned.n_features(), 1);
        assert_eq!(report.removed.len(), 1);
        // Tie at infinite VIF resolves to the lexicographically smallest name.
        assert_eq!(report.removed[0].0, "a");
        assert_eq!(pruned.feature_names(), &["b".to_string()]);
    }

    #[test]
    fn single_feature_input_is_rejected() {
        let mut rng = SeededRng::new(7);
        let d = Dataset::new(
            DMatrix::from_fn(10, 1, |_, _| rng.normal()),
            DVector::from_fn(10, |_, _| rng.normal()),
            vec!["x1".to_string()],
            "y",
        )
        .unwrap();
        assert!(vif_prune(&d, 5.0).is_err());
    }

    #[test]
    fn default_spec_shape() {
        let d = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(d.n_rows(), 5000);
        assert_eq!(d.n_features(), 1);
    }

    #[test]
    fn noiseless_limit_recovers_intercepts_exactly() {
        let spec = SyntheticSpec {
            residual_variance: 0.0,
            component_sizes: vec![50, 50],
            ..SyntheticSpec::default()
        };
        let d = generate_synthetic(&spec).unwrap();
        for i in 0..d.n_rows() {
            let r = d.outcome()[i] - d.features()[(i, 0)];
            assert!(
                (r - 200.0).abs() < 1e-9 || (r - 800.0).abs() < 1e-9,
                "residual {r}"
            );
        }
    }

    #[test]
    fn law_of_large_numbers_checks() {
        let d = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let n = d.n_rows() as f64;
        let mean_x: f64 = d.features().column(0).iter().sum::<f64>() / n;
        assert!((mean_x - 500.0).abs() < 1.0, "mean {mean_x}");

        // Residuals around the bottom line, restricted to points that clearly
        // belong to it (the lines are 600 apart, residual sd is ~4.5).
        let mut residuals = Vec::new();
        for i in 0..d.n_rows() {
            let r = d.outcome()[i] - (200.0 + d.features()[(i, 0)]);
            if r.abs() < 100.0 {
                residuals.push(r);
            }
        }
        assert!(residuals.len() > 2500);
        let m = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let var = residuals.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / residuals.len() as f64;
        assert!((var - 20.0).abs() < 2.0, "residual variance {var}");
    }

    #[test]
    fn feature_matrix_honors_model_column_order() {
        let f = write_temp("b,y,a\n2,9,1\n4,9,3\n");
        let names = vec!["a".to_string(), "b".to_string()];
        let m = load_feature_matrix(f.path(), &names, Some("y")).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn feature_matrix_mismatch_lists_names() {
        let f = write_temp("a,c\n1,2\n");
        let names = vec!["a".to_string(), "b".to_string()];
        let err = load_feature_matrix(f.path(), &names, None).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("\"b\""), "{text}");
        assert!(text.contains("\"c\""), "{text}");
    }

    #[test]
    fn generator_is_seed_deterministic() {
        let a = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let b = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let c = generate_synthetic(&SyntheticSpec {
            seed: 1,
            ..SyntheticSpec::default()
        })
        .unwrap();
        assert_eq!(
            a.features()[(0, 0)].to_bits(),
            b.features()[(0, 0)].to_bits()
        );
        assert_ne!(
            a.features()[(0, 0)].to_bits(),
            c.features()[(0, 0)].to_bits()
        );
    }
}
