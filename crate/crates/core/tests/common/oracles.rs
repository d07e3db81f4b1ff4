//! Independent reference computations shared by the integration and
//! acceptance tests. Nothing here calls the code paths it is used to check.

#![allow(dead_code)]

use mstl_core::neuralnet::{Model, ParameterSet};
use mstl_core::Tensor3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose ±ε step flipped a ReLU and were excluded.
    pub kink_skips: usize,
}

/// Scalar test loss `L = Σ_s Σ_o w[s][o]·y[s][o]`, so `dL/dy = w`.
fn probe_loss(model: &Model, params: &ParameterSet<f64>, input: &Tensor3<f64>, w: &[[f64; 2]]) -> f64 {
    let y = model.forward(params, input).unwrap();
    y.iter().zip(w).map(|(y, w)| y[0] * w[0] + y[1] * w[1]).sum()
}

/// Compare analytic gradients to central finite differences with step `eps`.
/// Relative error is `|a − n| / max(|a|, |n|, floor)`.
pub fn gradient_check(model: &Model, params: &ParameterSet<f64>, input: &Tensor3<f64>, seed: u64, eps: f64, floor: f64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let w: Vec<[f64; 2]> = (0..input.batch()).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let analytic = model.backward(params, input, &w).unwrap();
    let base_pattern = model.activation_pattern(params, input).unwrap();

    let mut out = GradCheck { max_rel_err: 0.0, checked: 0, kink_skips: 0 };
    let n = params.num_scalars();
    let flat_grad: Vec<f64> = analytic.iter_scalars().copied().collect();
    let mut p = params.clone();
    for i in 0..n {
        let (k, j) = p.locate(i).unwrap();
        let orig = p.params()[k].data[j];
        p.params_mut()[k].data[j] = orig + eps;
        let plus = probe_loss(model, &p, input, &w);
        let pat_plus = model.activation_pattern(&p, input).unwrap();
        p.params_mut()[k].data[j] = orig - eps;
        let minus = probe_loss(model, &p, input, &w);
        let pat_minus = model.activation_pattern(&p, input).unwrap();
        p.params_mut()[k].data[j] = orig;
        if pat_plus != base_pattern || pat_minus != base_pattern {
            out.kink_skips += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = flat_grad[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel > out.max_rel_err {
            out.max_rel_err = rel;
        }
        out.checked += 1;
    }
    out
}

/// Random `[S, T, 3]` input in `[-2, 2)`.
pub fn random_input(rng: &mut impl Rng, batch: usize, window: usize) -> Tensor3<f64> {
    Tensor3::from_fn(batch, window, 3, |_, _, _| rng.gen_range(-2.0..2.0))
}

/// Randomize every parameter (biases included) so no gradient is structurally zero.
pub fn randomize(params: &mut ParameterSet<f64>, rng: &mut impl Rng, scale: f64) {
    for v in params.iter_scalars_mut() {
        *v = rng.gen_range(-scale..scale);
    }
}

/// DTW by explicit enumeration of every monotone warping path from (0,0) to
/// (n−1, m−1) with unit steps right, down or diagonal.
pub fn dtw_brute_force(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}
