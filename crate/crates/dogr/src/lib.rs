//! DoGR: soft disaggregation of tabular data into overlapping Gaussian
//! components with a weighted linear regression per component, fit jointly by
//! expectation-maximization.
//!
//! The point of the joint fit is heterogeneous data: a trend estimated on the
//! pooled population can differ from — or even reverse against — the trends
//! inside latent subgroups (Simpson's paradox). Fitting the grouping and the
//! per-group regressions together recovers those subgroup trends without
//! requiring the grouping variable to be observed, and the soft memberships
//! carry the assignment uncertainty into prediction and interpretation.
//!
//! What's here:
//!
//! * [`numerics`] — multivariate normal log-density via Cholesky, weighted
//!   least squares with standard errors, log-sum-exp.
//! * [`dataset`] — validated feature matrix + outcome container.
//! * [`model`] — the mixture model, E/M steps and the EM training loop.
//! * [`inference`] — prediction (global or posterior weighting), soft
//!   membership, coefficient significance vs the pooled regression, radar
//!   export.
//! * [`selection`] — BIC sweep over the number of components.
//! * [`preprocess`] — CSV ingestion, VIF pruning, synthetic data generation.
//! * [`eval`] — RMSE/MAE and the nested cross-validation harness with a
//!   pooled-regression baseline.
//! * [`serialize`] — model JSON with round-trip-exact float formatting.
//!
//! ```
//! use dogr::model::{fit, FitConfig};
//! use dogr::inference::{predict, PredictionMode};
//! use dogr::preprocess::{generate_synthetic, SyntheticSpec};
//!
//! let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
//! let model = fit(&data, &FitConfig::new(2).with_seed(7)).unwrap();
//! let x = nalgebra::DVector::from_vec(vec![500.0]);
//! let y = predict(&model, &x, PredictionMode::PosteriorWeights).unwrap();
//! assert!(y.is_finite());
//! ```

pub mod dataset;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod preprocess;
pub mod selection;
pub mod serialize;

mod rng;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use inference::PredictionMode;
pub use model::{Component, FitConfig, InitStrategy, MembershipMatrix, Model};
pub use numerics::{SymmetricMatrix, WlsSolution};
