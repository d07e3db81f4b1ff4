//! Magnetic trace ingestion and preprocessing.
//!
//! A [`Trace`] is one walk along a typical trajectory: timestamped 3-axis
//! magnetometer readings with their ground-truth planar position. Traces are
//! reduced to the attitude-insensitive feature triple
//! `(m_z, |m_xy|, |m_xyz|)`, z-scored with statistics fitted on training traces
//! only, and cut into sliding windows labeled with the position of the
//! window's last sample.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

/// Header line of the trace CSV format.
pub const TRACE_HEADER: [&str; 6] = ["t_sec", "mx_uT", "my_uT", "mz_uT", "x_m", "y_m"];

/// Sampling rate used when nothing else is known.
pub const DEFAULT_RATE_HZ: f64 = 20.0;

const FEATURE_NAMES: [&str; 3] = ["m_z", "m_xy", "m_xyz"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticSample {
    /// Seconds.
    pub t: f64,
    /// Field in microtesla, `(x, y, z)`.
    pub m: [f64; 3],
    /// Ground-truth position in meters.
    pub pos: [f64; 2],
}

impl MagneticSample {
    pub fn new(t: f64, m: [f64; 3], pos: [f64; 2]) -> Self {
        Self { t, m, pos }
    }
}

/// An ordered walk: at least two samples, strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    id: String,
    rate_hz: f64,
    samples: Vec<MagneticSample>,
}

impl Trace {
    pub fn new(id: impl Into<String>, rate_hz: f64, samples: Vec<MagneticSample>) -> Result<Self> {
        let id = id.into();
        if samples.len() < 2 {
            return Err(Error::TraceTooShort {
                trace: id,
                len: samples.len(),
                need: 2,
            });
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::InvalidTrace {
                trace: id,
                msg: format!("sampling rate must be positive, got {rate_hz}"),
            });
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.m.iter().all(|v| v.is_finite()) && s.pos.iter().all(|v| v.is_finite())) {
                return Err(Error::InvalidTrace {
                    trace: id,
                    msg: format!("sample {i} has a non-finite value"),
                });
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::InvalidTrace {
                    trace: id,
                    msg: format!(
                        "timestamps not strictly increasing at sample {i} ({} after {})",
                        s.t,
                        samples[i - 1].t
                    ),
                });
            }
        }
        Ok(Self { id, rate_hz, samples })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn samples(&self) -> &[MagneticSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

/// Load one trace file, or every `*.csv` in a directory (sorted by file name).
pub fn load_traces(path: impl AsRef<Path>) -> Result<Vec<Trace>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        files.iter().map(|f| load_trace(f)).collect()
    } else {
        Ok(vec![load_trace(path)?])
    }
}

pub fn load_trace(path: &Path) -> Result<Trace> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;

    let mut samples = Vec::new();
    let mut seen_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if !seen_header {
            let fields: Vec<&str> = record.iter().map(str::trim).collect();
            if fields != TRACE_HEADER {
                return Err(parse_err(
                    line,
                    format!("expected header `{}`", TRACE_HEADER.join(",")),
                ));
            }
            seen_header = true;
            continue;
        }
        if record.len() != 6 {
            return Err(parse_err(line, format!("expected 6 fields, found {}", record.len())));
        }
        let mut v = [0.0f64; 6];
        for (slot, field) in v.iter_mut().zip(record.iter()) {
            *slot = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("`{field}` is not a number")))?;
        }
        samples.push(MagneticSample::new(v[0], [v[1], v[2], v[3]], [v[4], v[5]]));
    }

    if samples.len() < 2 {
        return Err(Error::TraceTooShort {
            trace: id,
            len: samples.len(),
            need: 2,
        });
    }
    let rate = infer_rate(&samples);
    Trace::new(id, rate, samples)
}

/// Reciprocal of the median sampling interval, snapped to an integer when within 1 ppm.
fn infer_rate(samples: &[MagneticSample]) -> f64 {
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    dts.sort_by(f64::total_cmp);
    let median = dts[dts.len() / 2];
    if !(median > 0.0) {
        // Trace::new reports the ordering problem.
        return DEFAULT_RATE_HZ;
    }
    let rate = 1.0 / median;
    let snapped = rate.round();
    if snapped > 0.0 && (rate - snapped).abs() <= 1e-6 * rate {
        snapped
    } else {
        rate
    }
}

/// Write a trace in the CSV format. Values use shortest round-trip decimal
/// formatting, so reloading reproduces every field bit for bit.
pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(&TRACE_HEADER.join(","));
    out.push('\n');
    for s in &trace.samples {
        use std::fmt::Write;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.t, s.m[0], s.m[1], s.m[2], s.pos[0], s.pos[1]
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// `(m_z, sqrt(m_x² + m_y²), sqrt(m_x² + m_y² + m_z²))`.
pub fn derive_features<S: Scalar>(m: [S; 3]) -> [S; 3] {
    let xy2 = m[0] * m[0] + m[1] * m[1];
    [m[2], xy2.sqrt(), (xy2 + m[2] * m[2]).sqrt()]
}

/// Per-feature z-score statistics, fitted on training traces only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

impl NormalizationStats {
    pub fn new(mean: [f64; 3], sd: [f64; 3]) -> Result<Self> {
        for (i, &s) in sd.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::ZeroVariance {
                    feature: FEATURE_NAMES[i],
                });
            }
        }
        Ok(Self { mean, sd })
    }

    pub fn normalize(&self, f: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (f[i] - self.mean[i]) / self.sd[i])
    }
}

/// Population mean and standard deviation of the derived features over every sample.
pub fn fit_normalizer(traces: &[Trace]) -> Result<NormalizationStats> {
    let feats: Vec<[f64; 3]> = traces
        .iter()
        .flat_map(|t| t.samples.iter().map(|s| derive_features(s.m)))
        .collect();
    fit_features(&feats)
}

pub(crate) fn fit_features(feats: &[[f64; 3]]) -> Result<NormalizationStats> {
    if feats.len() < 2 {
        return Err(Error::Empty("normalization needs at least 2 samples"));
    }
    let n = feats.len() as f64;
    let mut mean = [0.0; 3];
    for f in feats {
        for i in 0..3 {
            mean[i] += f[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 3];
    for f in feats {
        for i in 0..3 {
            let d = f[i] - mean[i];
            var[i] += d * d;
        }
    }
    let sd = var.map(|v| (v / n).sqrt());
    NormalizationStats::new(mean, sd)
}

pub fn normalize(stats: &NormalizationStats, f: [f64; 3]) -> [f64; 3] {
    stats.normalize(f)
}

/// A trace reduced to normalized features with per-sample positions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrace {
    pub id: String,
    pub features: Vec<[f64; 3]>,
    pub positions: Vec<[f64; 2]>,
}

impl FeatureTrace {
    pub fn from_trace(trace: &Trace, stats: &NormalizationStats) -> Self {
        Self {
            id: trace.id.clone(),
            features: trace
                .samples
                .iter()
                .map(|s| stats.normalize(derive_features(s.m)))
                .collect(),
            positions: trace.samples.iter().map(|s| s.pos).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Sliding windows `[S, T, 3]` with labels `[S, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    window: usize,
    features: Vec<[f64; 3]>,
    labels: Vec<[f64; 2]>,
    trace_ids: Vec<String>,
    starts: Vec<usize>,
}

impl WindowedDataset {
    pub fn empty(window: usize) -> Self {
        Self {
            window,
            features: Vec::new(),
            labels: Vec::new(),
            trace_ids: Vec::new(),
            starts: Vec::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[[f64; 2]] {
        &self.labels
    }

    pub fn trace_ids(&self) -> &[String] {
        &self.trace_ids
    }

    /// Start index of each window within its source trace.
    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    /// Flat `[S, T, 3]` feature buffer.
    pub fn features(&self) -> &[f64] {
        self.features.as_flattened()
    }

    /// The `[T, 3]` block of window `s`.
    pub fn window_features(&self, s: usize) -> &[[f64; 3]] {
        &self.features[s * self.window..(s + 1) * self.window]
    }

    pub fn push(&mut self, trace_id: &str, start: usize, window: &[[f64; 3]], label: [f64; 2]) {
        assert_eq!(window.len(), self.window, "window length mismatch");
        self.features.extend_from_slice(window);
        self.labels.push(label);
        self.trace_ids.push(trace_id.to_owned());
        self.starts.push(start);
    }

    pub fn extend(&mut self, other: &WindowedDataset) -> Result<()> {
        if other.window != self.window {
            return Err(Error::Shape {
                axis: "window",
                expected: self.window,
                got: other.window,
            });
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        self.trace_ids.extend_from_slice(&other.trace_ids);
        self.starts.extend_from_slice(&other.starts);
        Ok(())
    }

    pub fn to_tensor<S: Scalar>(&self) -> Result<Tensor3<S>> {
        Tensor3::from_vec(
            self.len(),
            self.window,
            3,
            self.features().iter().map(|&v| S::of(v)).collect(),
        )
    }

    pub fn labels_as<S: Scalar>(&self) -> Vec<[S; 2]> {
        self.labels.iter().map(|l| [S::of(l[0]), S::of(l[1])]).collect()
    }
}

/// Windows `[s·stride, s·stride + T)` labeled with the position of their last sample.
pub fn serialize_windows(trace: &FeatureTrace, window: usize, stride: usize) -> Result<WindowedDataset> {
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    let n = trace.len();
    if n < window {
        return Err(Error::ShorterThanWindow {
            trace: trace.id.clone(),
            len: n,
            window,
        });
    }
    let mut ds = WindowedDataset::empty(window);
    for start in (0..=n - window).step_by(stride) {
        ds.push(
            &trace.id,
            start,
            &trace.features[start..start + window],
            trace.positions[start + window - 1],
        );
    }
    Ok(ds)
}

/// Normalize and window several traces into one dataset.
pub fn build_dataset(
    traces: &[Trace],
    stats: &NormalizationStats,
    window: usize,
    stride: usize,
) -> Result<WindowedDataset> {
    let mut ds = WindowedDataset::empty(window);
    for t in traces {
        ds.extend(&serialize_windows(&FeatureTrace::from_trace(t, stats), window, stride)?)?;
    }
    Ok(ds)
}

/// Walking-speed multiple relative to the survey speed.
///
/// `Faster(n)` keeps every n-th sample; `Slower(n)` inserts `n - 1` linearly
/// interpolated samples between neighbours. `n` ranges over `1..=8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpeedFactor {
    Faster(u32),
    Slower(u32),
}

impl SpeedFactor {
    pub const MAX: u32 = 8;
    pub const IDENTITY: SpeedFactor = SpeedFactor::Faster(1);

    pub fn faster(n: u32) -> Result<Self> {
        Self::check(n, &n.to_string())?;
        Ok(Self::Faster(n))
    }

    pub fn slower(n: u32) -> Result<Self> {
        Self::check(n, &format!("1/{n}"))?;
        Ok(if n == 1 { Self::Faster(1) } else { Self::Slower(n) })
    }

    fn check(n: u32, text: &str) -> Result<()> {
        if (1..=Self::MAX).contains(&n) {
            Ok(())
        } else {
            Err(Error::UnsupportedFactor(text.to_owned()))
        }
    }

    /// All fifteen factors, slowest first.
    pub fn all() -> Vec<SpeedFactor> {
        let mut v: Vec<_> = (2..=Self::MAX).rev().map(Self::Slower).collect();
        v.extend((1..=Self::MAX).map(Self::Faster));
        v
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Faster(n) => n as f64,
            Self::Slower(n) => 1.0 / n as f64,
        }
    }

    pub fn is_identity(self) -> bool {
        matches!(self, Self::Faster(1) | Self::Slower(1))
    }
}

impl PartialOrd for SpeedFactor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SpeedFactor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.value().total_cmp(&other.value())
    }
}

impl fmt::Display for SpeedFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Faster(n) | Self::Slower(n) if n == 1 => write!(f, "1"),
            Self::Faster(n) => write!(f, "{n}"),
            Self::Slower(n) => write!(f, "1/{n}"),
        }
    }
}

impl FromStr for SpeedFactor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::UnsupportedFactor(s.to_owned());
        match s.split_once('/') {
            Some((num, den)) => {
                if num.trim() != "1" {
                    return Err(bad());
                }
                let n: u32 = den.trim().parse().map_err(|_| bad())?;
                Self::slower(n).map_err(|_| bad())
            }
            None => {
                let n: u32 = s.parse().map_err(|_| bad())?;
                Self::faster(n).map_err(|_| bad())
            }
        }
    }
}

impl Serialize for SpeedFactor {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpeedFactor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Simulate a different walking speed by decimation or linear interpolation.
///
/// Timestamps of the result are re-indexed to the trace's nominal rate
/// starting from its first timestamp.
pub fn resample_speed(trace: &Trace, factor: SpeedFactor) -> Result<Trace> {
    if factor.is_identity() {
        return Ok(trace.clone());
    }
    let t0 = trace.samples[0].t;
    let rate = trace.rate_hz;
    let reindex = |i: usize| t0 + i as f64 / rate;
    let samples: Vec<MagneticSample> = match factor {
        SpeedFactor::Faster(n) => {
            let n = n as usize;
            if trace.len() < n + 1 {
                return Err(Error::TraceTooShort {
                    trace: trace.id.clone(),
                    len: trace.len(),
                    need: n + 1,
                });
            }
            trace
                .samples
                .iter()
                .step_by(n)
                .enumerate()
                .map(|(i, s)| MagneticSample::new(reindex(i), s.m, s.pos))
                .collect()
        }
        SpeedFactor::Slower(n) => {
            let mut out = Vec::with_capacity((trace.len() - 1) * n as usize + 1);
            for pair in trace.samples.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                for j in 0..n {
                    let w = j as f64 / n as f64;
                    let m = std::array::from_fn(|k| a.m[k] + (b.m[k] - a.m[k]) * w);
                    let pos = std::array::from_fn(|k| a.pos[k] + (b.pos[k] - a.pos[k]) * w);
                    out.push(MagneticSample::new(reindex(out.len()), m, pos));
                }
            }
            let last = trace.samples[trace.len() - 1];
            out.push(MagneticSample::new(reindex(out.len()), last.m, last.pos));
            out
        }
    };
    Trace::new(trace.id.clone(), rate, samples)
}

/// Three-way split at item granularity. Counts are `round(n·r)` for validation
/// and test (at least one each); the remainder goes to training.
pub fn split<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Config(format!("split ratios must be positive, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must sum to 1, got {sum}")));
    }
    let n = items.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "need at least 3 traces to form train/validation/test partitions, got {n}"
        )));
    }
    let n_val = ((n as f64 * ratios[1]).round() as usize).max(1);
    let n_test = ((n as f64 * ratios[2]).round() as usize).max(1);
    if n_val + n_test >= n {
        return Err(Error::Config(format!(
            "{n} traces cannot be split as {ratios:?} with at least one training trace"
        )));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |range: &[usize]| {
        let mut r = range.to_vec();
        r.sort_unstable();
        r.into_iter().map(|i| items[i].clone()).collect::<Vec<T>>()
    };
    let val = pick(&idx[..n_val]);
    let test = pick(&idx[n_val..n_val + n_test]);
    let train = pick(&idx[n_val + n_test..]);
    Ok((train, val, test))
}
