//! Tabular dataset: a feature matrix, an outcome vector and column names.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// N observations of p features plus an outcome. All values are finite; this
/// is checked once at construction so numeric code never re-validates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    outcome: DVector<f64>,
    feature_names: Vec<String>,
    outcome_name: String,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        outcome: DVector<f64>,
        feature_names: Vec<String>,
        outcome_name: impl Into<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        let p = features.ncols();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".to_string()));
        }
        if p == 0 {
            return Err(Error::InvalidData("dataset has no features".to_string()));
        }
        if outcome.len() != n {
            return Err(Error::DimensionMismatch {
                context: "Dataset::new: outcome vs features",
                expected: n,
                actual: outcome.len(),
            });
        }
        if feature_names.len() != p {
            return Err(Error::DimensionMismatch {
                context: "Dataset::new: feature_names vs features",
                expected: p,
                actual: feature_names.len(),
            });
        }
        for (j, name) in feature_names.iter().enumerate() {
            if feature_names[..j].contains(name) {
                return Err(Error::InvalidData(format!(
                    "duplicate feature name '{name}'"
                )));
            }
        }
        if features.iter().any(|v| !v.is_finite()) || outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(
                "non-finite value in dataset".to_string(),
            ));
        }
        Ok(Self {
            features,
            outcome,
            feature_names,
            outcome_name: outcome_name.into(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn outcome(&self) -> &DVector<f64> {
        &self.outcome
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    /// Feature vector of row `i` as a column vector.
    pub fn feature_row(&self, i: usize) -> DVector<f64> {
        DVector::from_fn(self.n_features(), |j, _| self.features[(i, j)])
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData("subset of zero rows".to_string()));
        }
        let p = self.n_features();
        let features = DMatrix::from_fn(rows.len(), p, |i, j| self.features[(rows[i], j)]);
        let outcome = DVector::from_fn(rows.len(), |i, _| self.outcome[rows[i]]);
        Self::new(
            features,
            outcome,
            self.feature_names.clone(),
            self.outcome_name.clone(),
        )
    }

    /// New dataset keeping only the feature columns at `keep` (in that order).
    pub fn select_features(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidData("no features selected".to_string()));
        }
        let n = self.n_rows();
        let features = DMatrix::from_fn(n, keep.len(), |i, j| self.features[(i, keep[j])]);
        let names = keep
            .iter()
            .map(|&j| self.feature_names[j].clone())
            .collect();
        Self::new(
            features,
            self.outcome.clone(),
            names,
            self.outcome_name.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            DVector::from_vec(vec![10.0, 20.0, 30.0]),
            vec!["a".to_string(), "b".to_string()],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        let err = Dataset::new(
            DMatrix::from_row_slice(1, 1, &[f64::NAN]),
            DVector::from_vec(vec![1.0]),
            vec!["a".to_string()],
            "y",
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn rejects_duplicate_feature_names() {
        let err = Dataset::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            DVector::from_vec(vec![1.0]),
            vec!["a".to_string(), "a".to_string()],
            "y",
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn subset_and_select() {
        let d = toy();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.n_rows(), 2);
        assert_eq!(s.features()[(0, 0)], 5.0);
        assert_eq!(s.outcome()[1], 10.0);
        let f = d.select_features(&[1]).unwrap();
        assert_eq!(f.feature_names(), &["b".to_string()]);
        assert_eq!(f.features()[(2, 0)], 6.0);
    }
}
