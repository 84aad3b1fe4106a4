//! Dense numerical kernels: multivariate normal log-density, weighted least
//! squares with coefficient standard errors, and log-domain utilities.
//!
//! All densities are computed through a Cholesky factorization of the
//! covariance — never by forming an explicit inverse, and never by
//! exponentiating and then taking logs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Symmetric square matrix; symmetry is enforced on construction by mirroring
/// the lower triangle, so `get(i, j) == get(j, i)` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    entries: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Build from an arbitrary square matrix, mirroring the lower triangle.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "SymmetricMatrix::from_matrix",
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        if m.is_empty() {
            return Err(Error::EmptyInput("SymmetricMatrix::from_matrix"));
        }
        let dim = m.nrows();
        let mut entries = m;
        for i in 0..dim {
            for j in (i + 1)..dim {
                entries[(i, j)] = entries[(j, i)];
            }
        }
        Ok(Self { dim, entries })
    }

    /// Row-major flat construction, mirroring the lower triangle.
    pub fn from_rows(dim: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: "SymmetricMatrix::from_rows",
                expected: dim * dim,
                actual: rows.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, rows))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().sum()
    }

    /// Returns a copy with `ridge` added to every diagonal entry.
    pub fn with_ridge(&self, ridge: f64) -> Self {
        let mut entries = self.entries.clone();
        for i in 0..self.dim {
            entries[(i, i)] += ridge;
        }
        Self {
            dim: self.dim,
            entries,
        }
    }

    /// Cholesky factorization; failure means the matrix is not usable as a
    /// covariance. `context` identifies the offending component in errors.
    pub fn factorize(&self, context: &str) -> Result<CovarianceFactor> {
        let chol =
            Cholesky::new(self.entries.clone()).ok_or_else(|| Error::NotPositiveDefinite {
                context: context.to_string(),
            })?;
        let log_det = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        Ok(CovarianceFactor {
            dim: self.dim,
            chol,
            log_det,
        })
    }

    /// Row-major flat copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.push(self.entries[(i, j)]);
            }
        }
        out
    }
}

/// Cached Cholesky factorization of a covariance matrix.
pub struct CovarianceFactor {
    dim: usize,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl CovarianceFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Squared Mahalanobis norm d' Σ⁻¹ d via triangular solves.
    pub fn mahalanobis_sq(&self, diff: &DVector<f64>) -> f64 {
        diff.dot(&self.chol.solve(diff))
    }

    /// Log-density of N(mean, Σ) at `x` given this factorization of Σ.
    pub fn log_density(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let diff = x - mean;
        -0.5 * (self.dim as f64 * LN_TWO_PI + self.log_det + self.mahalanobis_sq(&diff))
    }
}

pub(crate) const LN_TWO_PI: f64 = 1.8378770664093453;

/// Log-density of the D-dimensional normal N(mean, cov) at `x`.
pub fn mvn_log_density(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &SymmetricMatrix,
) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            context: "mvn_log_density: x vs mean",
            expected: mean.len(),
            actual: x.len(),
        });
    }
    if cov.dim() != mean.len() {
        return Err(Error::DimensionMismatch {
            context: "mvn_log_density: cov vs mean",
            expected: mean.len(),
            actual: cov.dim(),
        });
    }
    let factor = cov.factorize("mvn_log_density")?;
    Ok(factor.log_density(x, mean))
}

/// Result of a weighted-least-squares fit. `coefficients[0]` is the intercept.
#[derive(Debug, Clone)]
pub struct WlsSolution {
    pub coefficients: DVector<f64>,
    pub standard_errors: DVector<f64>,
    pub weighted_rss: f64,
    pub effective_weight: f64,
}

impl WlsSolution {
    /// Intercept plus inner product with the feature vector.
    pub fn value_at(&self, x: &DVector<f64>) -> f64 {
        regression_value(&self.coefficients, x)
    }
}

pub(crate) fn regression_value(coefficients: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let mut v = coefficients[0];
    for j in 0..x.len() {
        v += coefficients[j + 1] * x[j];
    }
    v
}

/// Weighted least squares of `y` on `x` with an internal intercept column.
///
/// Minimizes Σᵢ wᵢ (yᵢ − β₀ − β·xᵢ)². Standard errors come from the inverse
/// of the weighted normal matrix scaled by the weighted residual variance with
/// denominator (Σw − (p+1)).
pub fn wls_fit(x: &DMatrix<f64>, y: &DVector<f64>, weights: &DVector<f64>) -> Result<WlsSolution> {
    wls_fit_ridged(x, y, weights, 0.0)
}

/// Same as [`wls_fit`] but with `ridge` added to the diagonal of the weighted
/// normal matrix; used by callers that must recover from rank deficiency.
pub(crate) fn wls_fit_ridged(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    ridge: f64,
) -> Result<WlsSolution> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "wls_fit: y vs x rows",
            expected: n,
            actual: y.len(),
        });
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            context: "wls_fit: weights vs x rows",
            expected: n,
            actual: weights.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput("wls_fit"));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::DegenerateWeights(
            "weights must be finite and nonnegative".to_string(),
        ));
    }
    let effective_weight: f64 = weights.iter().sum();
    if effective_weight <= 0.0 {
        return Err(Error::DegenerateWeights("all weights are zero".to_string()));
    }
    // With a positive ridge the normal matrix is well-posed no matter how
    // few rows carry weight, so the support-size precondition only applies
    // to the plain fit.
    let n_effective = weights.iter().filter(|&&w| w > 0.0).count();
    let q = p + 1;
    if ridge == 0.0 && n_effective < q {
        return Err(Error::InsufficientData {
            required: q,
            actual: n_effective,
            k: 1,
            p,
        });
    }

    // Weighted normal matrix G = A'WA and right-hand side b = A'Wy over the
    // intercept-augmented design A = [1 | x], accumulated on the lower
    // triangle and mirrored.
    let mut gram = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    let mut row = vec![0.0; q];
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        row[0] = 1.0;
        for j in 0..p {
            row[j + 1] = x[(i, j)];
        }
        let wy = w * y[i];
        for a in 0..q {
            rhs[a] += wy * row[a];
            let wa = w * row[a];
            for b in 0..=a {
                gram[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..q {
        gram[(a, a)] += ridge;
        for b in (a + 1)..q {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let chol = Cholesky::new(gram).ok_or_else(|| Error::SingularDesign {
        context: format!("weighted normal matrix of size {q}"),
    })?;
    let coefficients = chol.solve(&rhs);

    let mut weighted_rss = 0.0;
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let mut fitted = coefficients[0];
        for j in 0..p {
            fitted += coefficients[j + 1] * x[(i, j)];
        }
        let r = y[i] - fitted;
        weighted_rss += w * r * r;
    }

    // Weighted analogue of the unbiased residual variance. A degenerate
    // denominator yields infinite standard errors rather than an error.
    let dof = effective_weight - q as f64;
    let sigma2 = if dof > 0.0 {
        weighted_rss / dof
    } else {
        f64::INFINITY
    };
    let gram_inv = chol.inverse();
    let standard_errors = DVector::from_fn(q, |j, _| (gram_inv[(j, j)] * sigma2).max(0.0).sqrt());

    Ok(WlsSolution {
        coefficients,
        standard_errors,
        weighted_rss,
        effective_weight,
    })
}

/// log Σ exp(vᵢ) computed with the max-shift trick.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("log_sum_exp"));
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if max.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}
