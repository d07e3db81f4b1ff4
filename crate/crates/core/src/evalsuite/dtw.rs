//! Dynamic time warping and the sliding-window fingerprint baseline.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::magdata::FeatureTrace;
use crate::scalar::Scalar;

/// Full-table DTW with Euclidean local cost:
/// `D(i,j) = ‖a_i − b_j‖ + min(D(i−1,j), D(i,j−1), D(i−1,j−1))`.
pub fn dtw_distance<S: Scalar, const D: usize>(a: &[[S; D]], b: &[[S; D]]) -> Result<S> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("dtw_distance needs non-empty sequences"));
    }
    Ok(dtw_unchecked(a, b))
}

fn dtw_unchecked<S: Scalar, const D: usize>(a: &[[S; D]], b: &[[S; D]]) -> S {
    let inf = S::infinity();
    let m = b.len();
    let mut prev = vec![inf; m + 1];
    let mut cur = vec![inf; m + 1];
    prev[0] = S::zero();
    for ai in a {
        cur[0] = inf;
        for (j, bj) in b.iter().enumerate() {
            let cost = ai
                .iter()
                .zip(bj)
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum::<S>()
                .sqrt();
            cur[j + 1] = cost + prev[j + 1].min(cur[j]).min(prev[j]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Training-trace feature sequences searched with length-`window` references.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintDB {
    window: usize,
    traces: Vec<FeatureTrace>,
}

impl FingerprintDB {
    /// `traces` must be normalized with the statistics used for queries.
    pub fn new(traces: Vec<FeatureTrace>, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("fingerprint window must be positive".into()));
        }
        if traces.is_empty() {
            return Err(Error::Empty("fingerprint database has no traces"));
        }
        if traces.iter().all(|t| t.len() < window) {
            return Err(Error::ShorterThanWindow {
                trace: traces[0].id.clone(),
                len: traces.iter().map(FeatureTrace::len).max().unwrap_or(0),
                window,
            });
        }
        Ok(Self { window, traces })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn traces(&self) -> &[FeatureTrace] {
        &self.traces
    }

    pub fn num_references(&self) -> usize {
        self.traces
            .iter()
            .map(|t| (t.len() + 1).saturating_sub(self.window))
            .sum()
    }

    /// Every reference window in (trace, start) order with its label.
    pub fn references(&self) -> impl Iterator<Item = (&[[f64; 3]], [f64; 2])> + '_ {
        let w = self.window;
        self.traces.iter().flat_map(move |t| {
            (0..(t.len() + 1).saturating_sub(w)).map(move |s| (&t.features[s..s + w], t.positions[s + w - 1]))
        })
    }
}

/// Index of the first minimum; `None` for an empty input.
pub fn first_argmin<S: PartialOrd + Copy>(values: impl IntoIterator<Item = S>) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// DTW distance from `query` to every reference, in reference order.
pub fn dtw_scores(db: &FingerprintDB, query: &[[f64; 3]]) -> Result<Vec<f64>> {
    if query.is_empty() {
        return Err(Error::Empty("DTW query window"));
    }
    Ok(db.references().map(|(r, _)| dtw_unchecked(query, r)).collect())
}

/// Label of the reference window nearest to `query` under DTW.
pub fn dtw_localize(db: &FingerprintDB, query: &[[f64; 3]]) -> Result<[f64; 2]> {
    let scores = dtw_scores(db, query)?;
    let best = first_argmin(scores).ok_or(Error::Empty("fingerprint database has no reference windows"))?;
    Ok(db.references().nth(best).map(|(_, p)| p).expect("argmin within references"))
}

/// [`dtw_localize`] over many queries, parallel across queries.
pub fn dtw_localize_all(db: &FingerprintDB, queries: &[&[[f64; 3]]]) -> Result<Vec<[f64; 2]>> {
    queries.par_iter().map(|q| dtw_localize(db, q)).collect()
}
