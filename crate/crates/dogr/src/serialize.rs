//! Model persistence and float formatting.
//!
//! Every float in JSON and CSV output is printed with a configurable number
//! of significant digits, 17 by default so parsing the text back yields the
//! exact same doubles.

use std::io::{self, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Component, FitConfig, Model};
use crate::numerics::SymmetricMatrix;

pub const MODEL_FILE_VERSION: u32 = 1;
pub const DEFAULT_PRECISION: usize = 17;

/// Format a float with the given number of significant digits.
pub fn format_float(value: f64, sig_digits: usize) -> String {
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".to_string()
        } else if value > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    format!("{:.*e}", sig_digits.max(1) - 1, value)
}

/// JSON formatter that prints every f64 with fixed significant digits.
struct SigDigitFormatter {
    sig_digits: usize,
}

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{:.*e}", self.sig_digits.max(1) - 1, value)
    }
}

/// Serialize any value to JSON with floats at `sig_digits` significant digits.
pub fn to_json_with_precision<T: Serialize>(value: &T, sig_digits: usize) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, SigDigitFormatter { sig_digits });
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

/// Serialize to JSON with full round-trip precision.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    to_json_with_precision(value, DEFAULT_PRECISION)
}

#[derive(Serialize, Deserialize)]
struct ComponentFile {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
    coefficients: Vec<f64>,
    residual_variance: f64,
    standard_errors: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FitFile {
    log_likelihood_trace: Vec<f64>,
    converged: bool,
    iterations: usize,
    config: FitConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    feature_names: Vec<String>,
    outcome_name: String,
    components: Vec<ComponentFile>,
    fit: FitFile,
}

impl From<&Model> for ModelFile {
    fn from(m: &Model) -> Self {
        ModelFile {
            version: MODEL_FILE_VERSION,
            feature_names: m.feature_names.clone(),
            outcome_name: m.outcome_name.clone(),
            components: m
                .components
                .iter()
                .map(|c| ComponentFile {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    covariance: c.covariance.to_row_major(),
                    coefficients: c.coefficients.iter().copied().collect(),
                    residual_variance: c.residual_variance,
                    standard_errors: c.coefficient_standard_errors.iter().copied().collect(),
                })
                .collect(),
            fit: FitFile {
                log_likelihood_trace: m.fit_trace.clone(),
                converged: m.converged,
                iterations: m.iterations,
                config: m.config.clone(),
            },
        }
    }
}

/// Serialize a model to its JSON schema at full precision.
pub fn model_to_json(m: &Model) -> Result<String> {
    to_json(&ModelFile::from(m))
}

/// Serialize a model with a caller-chosen precision.
pub fn model_to_json_with_precision(m: &Model, sig_digits: usize) -> Result<String> {
    to_json_with_precision(&ModelFile::from(m), sig_digits)
}

/// Parse a model from its JSON schema, re-validating every invariant.
pub fn model_from_json(text: &str) -> Result<Model> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.version != MODEL_FILE_VERSION {
        return Err(Error::UnsupportedVersion(file.version));
    }
    let p = file.feature_names.len();
    let mut components = Vec::with_capacity(file.components.len());
    for (k, c) in file.components.into_iter().enumerate() {
        if c.mean.len() != p || c.coefficients.len() != p + 1 || c.covariance.len() != p * p {
            return Err(Error::InvalidData(format!(
                "component {k} has inconsistent dimensions"
            )));
        }
        let covariance =
            SymmetricMatrix::from_matrix(DMatrix::from_row_slice(p, p, &c.covariance))?;
        covariance.factorize(&format!("component {k} (loaded)"))?;
        components.push(Component {
            weight: c.weight,
            mean: DVector::from_vec(c.mean),
            covariance,
            coefficients: DVector::from_vec(c.coefficients),
            residual_variance: c.residual_variance,
            coefficient_standard_errors: DVector::from_vec(c.standard_errors),
        });
    }
    let mut model = Model::from_parts(
        components,
        file.feature_names,
        file.outcome_name,
        file.fit.config,
    )?;
    model.fit_trace = file.fit.log_likelihood_trace;
    model.converged = file.fit.converged;
    model.iterations = file.fit.iterations;
    Ok(model)
}

/// Read a model from a JSON file.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}

/// Write a model to a JSON file at full precision.
pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(m)?)?;
    Ok(())
}
