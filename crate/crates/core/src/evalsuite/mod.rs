//! Localization error metrics, the DTW fingerprint baseline and speed sweeps.

mod dtw;
mod metrics;
mod trajectory;

pub use dtw::{dtw_distance, dtw_localize, dtw_localize_all, dtw_scores, first_argmin, FingerprintDB};
pub use metrics::{euclidean_errors, summarize, ErrorReport, ReportMeta};
pub use trajectory::{export_trajectory, read_trajectory, TRAJECTORY_HEADER};

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::Result;
use crate::magdata::{build_dataset, resample_speed, NormalizationStats, SpeedFactor, Trace, WindowedDataset};
use crate::neuralnet::{Model, ParameterSet};
use crate::scalar::Scalar;

/// Anything that maps query windows to positions.
pub trait Localizer: Sync {
    fn name(&self) -> String;
    fn localize(&self, windows: &WindowedDataset) -> Result<Vec<[f64; 2]>>;
}

pub struct NeuralLocalizer<S> {
    pub model: Model,
    pub params: ParameterSet<S>,
}

impl<S: Scalar> NeuralLocalizer<S> {
    pub fn new(model: Model, params: ParameterSet<S>) -> Result<Self> {
        model.param_layout().check(&params)?;
        Ok(Self { model, params })
    }
}

impl<S: Scalar> Localizer for NeuralLocalizer<S> {
    fn name(&self) -> String {
        self.model.spec().kind.to_string()
    }

    fn localize(&self, windows: &WindowedDataset) -> Result<Vec<[f64; 2]>> {
        crate::train::predict(&self.model, &self.params, windows)
    }
}

pub struct DtwLocalizer {
    pub db: FingerprintDB,
}

impl Localizer for DtwLocalizer {
    fn name(&self) -> String {
        "DTW".into()
    }

    fn localize(&self, windows: &WindowedDataset) -> Result<Vec<[f64; 2]>> {
        let queries: Vec<&[[f64; 3]]> = (0..windows.len()).map(|s| windows.window_features(s)).collect();
        dtw_localize_all(&self.db, &queries)
    }
}

/// Localize every window and summarize the errors against its labels.
pub fn evaluate(localizer: &dyn Localizer, windows: &WindowedDataset, scenario: &str) -> Result<(ErrorReport, Vec<[f64; 2]>)> {
    let pred = localizer.localize(windows)?;
    let report = summarize(&euclidean_errors(&pred, windows.labels())?)?.with_meta(ReportMeta {
        algorithm: localizer.name(),
        scenario: scenario.into(),
        speed_factor: None,
    });
    Ok((report, pred))
}

/// One [`ErrorReport`] per speed factor, in the order requested.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<(SpeedFactor, ErrorReport)>,
}

impl SweepTable {
    pub fn get(&self, factor: SpeedFactor) -> Option<&ErrorReport> {
        self.rows.iter().find(|(f, _)| *f == factor).map(|(_, r)| r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Serialize for SweepTable {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        let mut map = s.serialize_map(Some(self.rows.len()))?;
        for (f, r) in &self.rows {
            map.serialize_entry(&f.to_string(), r)?;
        }
        map.end()
    }
}

/// Resample `traces` at each factor, window them at `window`, localize and summarize.
pub fn speed_sweep(
    localizer: &dyn Localizer,
    traces: &[Trace],
    factors: &[SpeedFactor],
    stats: &NormalizationStats,
    window: usize,
    scenario: &str,
) -> Result<SweepTable> {
    let mut rows = Vec::with_capacity(factors.len());
    for &factor in factors {
        let resampled = traces
            .iter()
            .map(|t| resample_speed(t, factor))
            .collect::<Result<Vec<_>>>()?;
        let ds = build_dataset(&resampled, stats, window, 1)?;
        let (mut report, _) = evaluate(localizer, &ds, scenario)?;
        report.metadata.speed_factor = Some(factor.to_string());
        rows.push((factor, report));
    }
    Ok(SweepTable { rows })
}
