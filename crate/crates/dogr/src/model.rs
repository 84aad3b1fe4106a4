//! Mixture-of-regressions model and its EM fit.
//!
//! Each component k carries a mixture weight ω_k, a Gaussian over the feature
//! space (μ_k, Σ_k) and a linear regression (β_k, σ_k²) for the outcome. The
//! joint density of a point factors as f(x, y) = N(x; μ, Σ) · N(y; ŷ(x), σ²),
//! and fitting alternates soft assignment (E-step) with weighted re-estimation
//! of every parameter (M-step).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{
    log_sum_exp, regression_value, wls_fit_ridged, CovarianceFactor, SymmetricMatrix, LN_TWO_PI,
};
use crate::rng::{derive_seed, SeededRng};

/// One latent subgroup: mixture weight, feature Gaussian and outcome regression.
#[derive(Debug, Clone)]
pub struct Component {
    /// Mixture weight ω in (0, 1].
    pub weight: f64,
    /// Feature-space mean, length p.
    pub mean: DVector<f64>,
    /// Feature-space covariance, p×p, positive definite after regularization.
    pub covariance: SymmetricMatrix,
    /// Regression coefficients, intercept first, length p+1.
    pub coefficients: DVector<f64>,
    /// Variance of the regression residuals (σ², stored as a variance).
    pub residual_variance: f64,
    /// Standard errors of the coefficients, length p+1.
    pub coefficient_standard_errors: DVector<f64>,
}

impl Component {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }
}

/// A component whose responsibilities had to be re-seeded during a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReseedEvent {
    pub iteration: usize,
    pub component: usize,
}

/// Fitted mixture model.
#[derive(Debug, Clone)]
pub struct Model {
    pub components: Vec<Component>,
    pub feature_names: Vec<String>,
    pub outcome_name: String,
    /// Log-likelihood after each iteration; non-decreasing up to roundoff.
    pub fit_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Configuration the model was fitted with.
    pub config: FitConfig,
    /// Components that had to be re-seeded during the fit.
    pub reseed_events: Vec<ReseedEvent>,
}

impl Model {
    /// Assemble a model from parts, checking the weight and dimension
    /// invariants. Fit metadata is left empty.
    pub fn from_parts(
        components: Vec<Component>,
        feature_names: Vec<String>,
        outcome_name: impl Into<String>,
        config: FitConfig,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("Model::from_parts: components"));
        }
        let p = feature_names.len();
        let weight_sum: f64 = components.iter().map(|c| c.weight).sum();
        if (weight_sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidData(format!(
                "component weights sum to {weight_sum}, expected 1"
            )));
        }
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != p || c.covariance.dim() != p || c.coefficients.len() != p + 1 {
                return Err(Error::InvalidData(format!(
                    "component {k} dimensions do not match {p} features"
                )));
            }
            if !c.weight.is_finite() || c.weight <= 0.0 || c.residual_variance <= 0.0 {
                return Err(Error::InvalidData(format!(
                    "component {k} has non-positive weight or residual variance"
                )));
            }
        }
        Ok(Self {
            components,
            feature_names,
            outcome_name: outcome_name.into(),
            fit_trace: Vec::new(),
            converged: false,
            iterations: 0,
            config,
            reseed_events: Vec::new(),
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn final_log_likelihood(&self) -> Option<f64> {
        self.fit_trace.last().copied()
    }
}

/// N×K responsibilities γ: entry (i, k) is the probability that row i belongs
/// to component k. Every row sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    values: DMatrix<f64>,
}

impl MembershipMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for i in 0..values.nrows() {
            let mut sum = 0.0;
            for k in 0..values.ncols() {
                let g = values[(i, k)];
                if !(0.0..=1.0).contains(&g) {
                    return Err(Error::InvalidData(format!(
                        "responsibility ({i}, {k}) = {g} outside [0, 1]"
                    )));
                }
                sum += g;
            }
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidData(format!(
                    "responsibility row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[(i, k)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Responsibilities of component `k` as a weight vector over rows.
    pub fn column(&self, k: usize) -> DVector<f64> {
        DVector::from_fn(self.values.nrows(), |i, _| self.values[(i, k)])
    }
}

/// How the responsibilities are initialized before the first M-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Each γ row drawn from a symmetric Dirichlet(1).
    RandomResponsibilities,
    /// K-means on the standardized (x, y) vectors, labels softened to 0.9/0.1.
    KmeansOnXy,
}

/// Fit configuration. The stopping rule is a relative log-likelihood change
/// below `rel_tolerance` or `max_iterations`, whichever comes first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_components: usize,
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub seed: u64,
    pub init_strategy: InitStrategy,
    /// Relative ridge: each Σ gets ridge·trace(Σ)/p added to its diagonal.
    pub covariance_ridge: f64,
    pub residual_variance_floor: f64,
    /// A component whose responsibility mass falls below this fraction of N
    /// is re-seeded once, then treated as a hard failure.
    pub min_component_weight: f64,
    pub n_restarts: usize,
}

impl FitConfig {
    pub fn new(n_components: usize) -> Self {
        Self {
            n_components,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::InvalidConfig("n_components must be >= 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !self.rel_tolerance.is_finite() || self.rel_tolerance <= 0.0 {
            return Err(Error::InvalidConfig("rel_tolerance must be > 0".into()));
        }
        if self.covariance_ridge < 0.0 {
            return Err(Error::InvalidConfig("covariance_ridge must be >= 0".into()));
        }
        if !self.residual_variance_floor.is_finite() || self.residual_variance_floor <= 0.0 {
            return Err(Error::InvalidConfig(
                "residual_variance_floor must be > 0".into(),
            ));
        }
        if self.min_component_weight < 0.0 {
            return Err(Error::InvalidConfig(
                "min_component_weight must be >= 0".into(),
            ));
        }
        if self.n_restarts == 0 {
            return Err(Error::InvalidConfig("n_restarts must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_components: 1,
            max_iterations: 500,
            rel_tolerance: 1e-6,
            seed: 0,
            init_strategy: InitStrategy::RandomResponsibilities,
            covariance_ridge: 1e-6,
            residual_variance_floor: 1e-8,
            min_component_weight: 1e-6,
            n_restarts: 1,
        }
    }
}

/// Regression value ŷ = β₀ + Σⱼ βⱼ xⱼ of one component at `x`.
pub fn component_regression_value(c: &Component, x: &DVector<f64>) -> Result<f64> {
    if x.len() != c.n_features() {
        return Err(Error::DimensionMismatch {
            context: "component_regression_value",
            expected: c.n_features(),
            actual: x.len(),
        });
    }
    Ok(regression_value(&c.coefficients, x))
}

/// Per-component cache of everything the density evaluations need.
pub(crate) struct ComponentDensity {
    pub log_weight: f64,
    pub mean: DVector<f64>,
    pub factor: CovarianceFactor,
    pub coefficients: DVector<f64>,
    pub log_residual_variance: f64,
    pub residual_variance: f64,
}

impl ComponentDensity {
    pub fn new(c: &Component, context: &str) -> Result<Self> {
        Ok(Self {
            log_weight: c.weight.ln(),
            mean: c.mean.clone(),
            factor: c.covariance.factorize(context)?,
            coefficients: c.coefficients.clone(),
            log_residual_variance: c.residual_variance.ln(),
            residual_variance: c.residual_variance,
        })
    }

    /// log N(x; μ, Σ) + log N(y; ŷ(x), σ²).
    pub fn log_joint(&self, x: &DVector<f64>, y: f64) -> f64 {
        let marginal = self.factor.log_density(x, &self.mean);
        let r = y - regression_value(&self.coefficients, x);
        let conditional =
            -0.5 * (LN_TWO_PI + self.log_residual_variance + r * r / self.residual_variance);
        marginal + conditional
    }

    /// log N(x; μ, Σ), the feature-marginal part only.
    pub fn log_marginal(&self, x: &DVector<f64>) -> f64 {
        self.factor.log_density(x, &self.mean)
    }
}

pub(crate) fn density_caches(m: &Model) -> Result<Vec<ComponentDensity>> {
    m.components
        .iter()
        .enumerate()
        .map(|(k, c)| ComponentDensity::new(c, &format!("component {k}")))
        .collect()
}

/// Log of the joint density f(x, y) under one component: the product of the
/// feature marginal N(x; μ, Σ) and the conditional N(y; ŷ(x), σ²).
pub fn joint_log_density(c: &Component, x: &DVector<f64>, y: f64) -> Result<f64> {
    if x.len() != c.n_features() {
        return Err(Error::DimensionMismatch {
            context: "joint_log_density",
            expected: c.n_features(),
            actual: x.len(),
        });
    }
    Ok(ComponentDensity::new(c, "joint_log_density")?.log_joint(x, y))
}

fn check_dims(m: &Model, d: &Dataset) -> Result<()> {
    if m.n_features() != d.n_features() {
        return Err(Error::DimensionMismatch {
            context: "model vs dataset features",
            expected: m.n_features(),
            actual: d.n_features(),
        });
    }
    Ok(())
}

/// N×K matrix of log(ω_k) + log f_k(x_i, y_i).
fn weighted_log_joint_matrix(caches: &[ComponentDensity], d: &Dataset) -> DMatrix<f64> {
    let n = d.n_rows();
    let k = caches.len();
    let mut out = DMatrix::<f64>::zeros(n, k);
    for i in 0..n {
        let x = d.feature_row(i);
        let y = d.outcome()[i];
        for (j, cache) in caches.iter().enumerate() {
            out[(i, j)] = cache.log_weight + cache.log_joint(&x, y);
        }
    }
    out
}

/// Total log-likelihood Σᵢ log Σₖ ω_k f_k(x_i, y_i).
pub fn log_likelihood(m: &Model, d: &Dataset) -> Result<f64> {
    check_dims(m, d)?;
    let caches = density_caches(m)?;
    let logd = weighted_log_joint_matrix(&caches, d);
    let mut total = 0.0;
    let mut row = vec![0.0; m.n_components()];
    for i in 0..d.n_rows() {
        for k in 0..m.n_components() {
            row[k] = logd[(i, k)];
        }
        total += log_sum_exp(&row)?;
    }
    Ok(total)
}

/// E-step: responsibilities computed in the log domain, then exponentiated.
pub fn e_step(m: &Model, d: &Dataset) -> Result<MembershipMatrix> {
    check_dims(m, d)?;
    let caches = density_caches(m)?;
    let (_, gamma) = e_step_from_caches(&caches, d)?;
    MembershipMatrix::new(gamma)
}

/// Shared E-step core: returns (log-likelihood, raw responsibilities).
fn e_step_from_caches(caches: &[ComponentDensity], d: &Dataset) -> Result<(f64, DMatrix<f64>)> {
    let logd = weighted_log_joint_matrix(caches, d);
    let n = d.n_rows();
    let k = caches.len();
    let mut gamma = DMatrix::<f64>::zeros(n, k);
    let mut total = 0.0;
    let mut row = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            row[j] = logd[(i, j)];
        }
        let lse = log_sum_exp(&row)?;
        total += lse;
        for j in 0..k {
            gamma[(i, j)] = (logd[(i, j)] - lse).exp();
        }
    }
    Ok((total, gamma))
}

/// M-step: re-estimate every component from the responsibilities.
///
/// ω_k = Σᵢ γᵢₖ / N, μ_k and Σ_k are γ-weighted mean and (biased) scatter,
/// β_k comes from weighted least squares with γ-column weights, and σ_k² is
/// the γ-weighted mean squared residual, floored at the configured minimum.
pub fn m_step(d: &Dataset, gamma: &MembershipMatrix, cfg: &FitConfig) -> Result<Vec<Component>> {
    if gamma.n_rows() != d.n_rows() {
        return Err(Error::DimensionMismatch {
            context: "m_step: gamma vs dataset rows",
            expected: d.n_rows(),
            actual: gamma.n_rows(),
        });
    }
    let n = d.n_rows();
    let p = d.n_features();
    let n_components = gamma.n_components();
    let mut components = Vec::with_capacity(n_components);
    for k in 0..n_components {
        let weights = gamma.column(k);
        let mass: f64 = weights.iter().sum();
        if mass < cfg.min_component_weight * n as f64 {
            return Err(Error::DegenerateComponent {
                component: k,
                iteration: 0,
                details: format!(
                    "responsibility mass {mass:.3e} below {:.3e}",
                    cfg.min_component_weight * n as f64
                ),
            });
        }

        let weight = mass / n as f64;
        let mean = DVector::from_fn(p, |j, _| {
            (0..n)
                .map(|i| weights[i] * d.features()[(i, j)])
                .sum::<f64>()
                / mass
        });

        // Weighted scatter, lower triangle then mirrored by the constructor.
        let mut scatter = DMatrix::<f64>::zeros(p, p);
        let mut diff = vec![0.0; p];
        for i in 0..n {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            for j in 0..p {
                diff[j] = d.features()[(i, j)] - mean[j];
            }
            for a in 0..p {
                let wd = w * diff[a];
                for b in 0..=a {
                    scatter[(a, b)] += wd * diff[b];
                }
            }
        }
        scatter /= mass;
        let covariance = regularized_covariance(scatter, cfg, k)?;

        let wls = fit_component_regression(d, &weights, cfg, k)?;
        let residual_variance = (wls.weighted_rss / mass).max(cfg.residual_variance_floor);

        components.push(Component {
            weight,
            mean,
            covariance,
            coefficients: wls.coefficients,
            residual_variance,
            coefficient_standard_errors: wls.standard_errors,
        });
    }
    Ok(components)
}

/// Add the relative ridge to a scatter matrix and make sure it factorizes,
/// escalating the ridge tenfold up to three times before giving up.
fn regularized_covariance(
    scatter: DMatrix<f64>,
    cfg: &FitConfig,
    component: usize,
) -> Result<SymmetricMatrix> {
    let p = scatter.nrows();
    let trace: f64 = scatter.diagonal().sum();
    let scale = if trace > 0.0 { trace / p as f64 } else { 1.0 };
    let base = SymmetricMatrix::from_matrix(scatter)?;
    for attempt in 0..=3 {
        let ridge = if attempt == 0 {
            scale * cfg.covariance_ridge
        } else {
            scale * cfg.covariance_ridge.max(1e-10) * 10f64.powi(attempt)
        };
        let candidate = base.with_ridge(ridge);
        if candidate
            .factorize(&format!("component {component} covariance"))
            .is_ok()
        {
            return Ok(candidate);
        }
    }
    Err(Error::NotPositiveDefinite {
        context: format!("component {component} covariance after ridge escalation"),
    })
}

/// Component regression via WLS; on a rank-deficient design the normal matrix
/// gets a tenfold-escalating ridge before failing hard.
fn fit_component_regression(
    d: &Dataset,
    weights: &DVector<f64>,
    cfg: &FitConfig,
    component: usize,
) -> Result<crate::numerics::WlsSolution> {
    let p = d.n_features();
    let mut last_err = None;
    for attempt in 0..=3 {
        let ridge = if attempt == 0 {
            0.0
        } else {
            // Scaled to the design: mean squared feature magnitude.
            let scale = d.features().iter().map(|v| v * v).sum::<f64>() / (d.n_rows() * p) as f64;
            scale.max(1.0) * cfg.covariance_ridge.max(1e-10) * 10f64.powi(attempt)
        };
        match wls_fit_ridged(d.features(), d.outcome(), weights, ridge) {
            Ok(sol) => return Ok(sol),
            // Too few effectively weighted rows is rank deficiency too; the
            // ridged retries handle both.
            Err(e @ (Error::SingularDesign { .. } | Error::InsufficientData { .. })) => {
                last_err = Some(e)
            }
            Err(other) => return Err(other),
        }
    }
    Err(match last_err.unwrap() {
        Error::SingularDesign { context } => Error::SingularDesign {
            context: format!("component {component}: {context} (after ridge escalation)"),
        },
        e => e,
    })
}

/// Fit the mixture by EM; with `n_restarts > 1` the seeds `seed, seed+1, …`
/// are tried and the model with the highest final log-likelihood wins.
pub fn fit(d: &Dataset, cfg: &FitConfig) -> Result<Model> {
    cfg.validate()?;
    let n = d.n_rows();
    let p = d.n_features();
    let k = cfg.n_components;
    let required = k * (p + 2);
    if n <= required {
        return Err(Error::InsufficientData {
            required,
            actual: n,
            k,
            p,
        });
    }
    let mut best: Option<Model> = None;
    let mut first_err: Option<Error> = None;
    for restart in 0..cfg.n_restarts {
        let seed = cfg.seed.wrapping_add(restart as u64);
        match fit_once(d, cfg, seed) {
            Ok(model) => {
                let ll = model.final_log_likelihood().unwrap_or(f64::NEG_INFINITY);
                let best_ll = best
                    .as_ref()
                    .and_then(Model::final_log_likelihood)
                    .unwrap_or(f64::NEG_INFINITY);
                if best.is_none() || ll > best_ll {
                    best = Some(model);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    best.ok_or_else(|| first_err.expect("n_restarts >= 1"))
}

fn fit_once(d: &Dataset, cfg: &FitConfig, seed: u64) -> Result<Model> {
    let k = cfg.n_components;
    let mut gamma = initial_responsibilities(d, cfg, seed)?;
    let mut reseeded = vec![false; k];
    let mut reseed_events = Vec::new();

    rescue_dying_components(&mut gamma, cfg, &mut reseeded, &mut reseed_events, 0)?;
    let mut components = m_step_raw(d, &gamma, cfg)?;

    let mut fit_trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=cfg.max_iterations {
        iterations = t;
        let caches = components
            .iter()
            .enumerate()
            .map(|(j, c)| ComponentDensity::new(c, &format!("component {j} at iteration {t}")))
            .collect::<Result<Vec<_>>>()?;
        let (ll, g) = e_step_from_caches(&caches, d)?;
        if !ll.is_finite() {
            return Err(Error::InvalidData(format!(
                "log-likelihood became {ll} at iteration {t}"
            )));
        }
        fit_trace.push(ll);
        gamma = g;
        if t >= 2 {
            let prev = fit_trace[t - 2];
            if (ll - prev).abs() <= cfg.rel_tolerance * prev.abs() {
                converged = true;
                break;
            }
        }
        rescue_dying_components(&mut gamma, cfg, &mut reseeded, &mut reseed_events, t)?;
        components = m_step_raw(d, &gamma, cfg)?;
    }

    Ok(Model {
        components,
        feature_names: d.feature_names().to_vec(),
        outcome_name: d.outcome_name().to_string(),
        fit_trace,
        converged,
        iterations,
        config: FitConfig {
            seed,
            ..cfg.clone()
        },
        reseed_events,
    })
}

/// m_step without the membership-row validation round trip (gamma rows are
/// normalized by construction inside the fit loop).
fn m_step_raw(d: &Dataset, gamma: &DMatrix<f64>, cfg: &FitConfig) -> Result<Vec<Component>> {
    let membership = MembershipMatrix {
        values: gamma.clone(),
    };
    m_step(d, &membership, cfg)
}

/// Re-seed any component whose responsibility mass has collapsed: the 5% of
/// rows with the lowest maximum responsibility get 1/K of this component and
/// are renormalized. Allowed once per component per fit.
fn rescue_dying_components(
    gamma: &mut DMatrix<f64>,
    cfg: &FitConfig,
    reseeded: &mut [bool],
    events: &mut Vec<ReseedEvent>,
    iteration: usize,
) -> Result<()> {
    let n = gamma.nrows();
    let k = gamma.ncols();
    if k == 1 {
        return Ok(());
    }
    let threshold = cfg.min_component_weight * n as f64;
    for comp in 0..k {
        let mass: f64 = (0..n).map(|i| gamma[(i, comp)]).sum();
        if mass >= threshold {
            continue;
        }
        if reseeded[comp] {
            return Err(Error::DegenerateComponent {
                component: comp,
                iteration,
                details: format!(
                    "collapsed again after re-seeding (mass {mass:.3e}, threshold {threshold:.3e})"
                ),
            });
        }
        reseeded[comp] = true;
        events.push(ReseedEvent {
            iteration,
            component: comp,
        });

        let mut order: Vec<usize> = (0..n).collect();
        let max_resp: Vec<f64> = (0..n)
            .map(|i| {
                (0..k)
                    .map(|j| gamma[(i, j)])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        order.sort_by(|&a, &b| {
            max_resp[a]
                .partial_cmp(&max_resp[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        let take = ((n as f64 * 0.05).ceil() as usize).max(1);
        for &i in order.iter().take(take) {
            gamma[(i, comp)] = 1.0 / k as f64;
            let sum: f64 = (0..k).map(|j| gamma[(i, j)]).sum();
            for j in 0..k {
                gamma[(i, j)] /= sum;
            }
        }
    }
    Ok(())
}

fn initial_responsibilities(d: &Dataset, cfg: &FitConfig, seed: u64) -> Result<DMatrix<f64>> {
    let n = d.n_rows();
    let k = cfg.n_components;
    if k == 1 {
        return Ok(DMatrix::from_element(n, 1, 1.0));
    }
    match cfg.init_strategy {
        InitStrategy::RandomResponsibilities => {
            let mut rng = SeededRng::new(derive_seed(seed, &[0]));
            let mut gamma = DMatrix::<f64>::zeros(n, k);
            for i in 0..n {
                let mut sum = 0.0;
                for j in 0..k {
                    let e = rng.exp1();
                    gamma[(i, j)] = e;
                    sum += e;
                }
                for j in 0..k {
                    gamma[(i, j)] /= sum;
                }
            }
            Ok(gamma)
        }
        InitStrategy::KmeansOnXy => {
            let labels = kmeans_labels(d, k, derive_seed(seed, &[1]));
            let off = 0.1 / (k - 1) as f64;
            let mut gamma = DMatrix::<f64>::from_element(n, k, off);
            for (i, &label) in labels.iter().enumerate() {
                gamma[(i, label)] = 0.9;
            }
            Ok(gamma)
        }
    }
}

/// K-means over the standardized (x, y) rows: ++-style seeded centers, a
/// fixed 50 Lloyd iterations, empty clusters re-seeded to the farthest point.
fn kmeans_labels(d: &Dataset, k: usize, seed: u64) -> Vec<usize> {
    let n = d.n_rows();
    let p = d.n_features();
    let dim = p + 1;

    let value = |i: usize, j: usize| {
        if j < p {
            d.features()[(i, j)]
        } else {
            d.outcome()[i]
        }
    };
    let (means, stds): (Vec<f64>, Vec<f64>) = (0..dim)
        .map(|j| {
            let mean = (0..n).map(|i| value(i, j)).sum::<f64>() / n as f64;
            let var = (0..n)
                .map(|i| (value(i, j) - mean) * (value(i, j) - mean))
                .sum::<f64>()
                / n as f64;
            (mean, var.sqrt())
        })
        .unzip();
    let mut points = vec![vec![0.0; dim]; n];
    for (i, point) in points.iter_mut().enumerate() {
        for (j, coord) in point.iter_mut().enumerate() {
            *coord = if stds[j] > 0.0 {
                (value(i, j) - means[j]) / stds[j]
            } else {
                0.0
            };
        }
    }

    let dist_sq =
        |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

    let mut rng = SeededRng::new(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.below(n)].clone());
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|pt| {
                centers
                    .iter()
                    .map(|c| dist_sq(pt, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform_open() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(n)
        };
        centers.push(points[next].clone());
    }

    let mut labels = vec![0usize; n];
    for _ in 0..50 {
        for (i, pt) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dd = dist_sq(pt, center);
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            labels[i] = best;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                // Re-seed an empty cluster at the point farthest from its center.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist_sq(&points[a], center)
                            .partial_cmp(&dist_sq(&points[b], center))
                            .unwrap()
                    })
                    .unwrap();
                *center = points[far].clone();
                continue;
            }
            for j in 0..dim {
                center[j] =
                    members.iter().map(|&i| points[i][j]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    labels
}
