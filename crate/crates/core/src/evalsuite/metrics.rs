use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-query planar distance `√(Δx² + Δy²)`.
pub fn euclidean_errors<S: Scalar>(pred: &[[S; 2]], truth: &[[S; 2]]) -> Result<Vec<S>> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            axis: "queries",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p[0] - t[0]).hypot(p[1] - t[1]))
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub algorithm: String,
    pub scenario: String,
    /// `"1/8"` ... `"8"`, when the report belongs to a speed sweep row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_factor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub errors: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    /// `(error, fraction of queries with error ≤ it)` at each distinct error.
    pub cdf: Vec<(f64, f64)>,
    pub metadata: ReportMeta,
}

impl ErrorReport {
    pub fn with_meta(mut self, metadata: ReportMeta) -> Self {
        self.metadata = metadata;
        self
    }

    /// Empirical CDF at an arbitrary threshold.
    pub fn cdf_at(&self, x: f64) -> f64 {
        self.cdf
            .iter()
            .take_while(|(e, _)| *e <= x)
            .last()
            .map_or(0.0, |(_, f)| *f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn summarize(errors: &[f64]) -> Result<ErrorReport> {
    if errors.is_empty() {
        return Err(Error::Empty("summarize needs at least one error"));
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite()) {
        return Err(Error::Config(format!("non-finite localization error {bad}")));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let sd = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cdf: Vec<(f64, f64)> = Vec::new();
    for (i, &e) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match cdf.last_mut() {
            Some(last) if last.0 == e => last.1 = frac,
            _ => cdf.push((e, frac)),
        }
    }
    if let Some(last) = cdf.last_mut() {
        last.1 = 1.0;
    }
    Ok(ErrorReport {
        errors: errors.to_vec(),
        mean,
        sd,
        cdf,
        metadata: ReportMeta::default(),
    })
}
