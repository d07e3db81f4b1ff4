//! Named, ordered parameter storage.
//!
//! A [`LayoutBuilder`] records every trainable array once, in construction
//! order; the resulting [`ParamLayout`] fixes the enumeration order shared by
//! initialization, forward, backward, the optimizer and checkpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of one parameter array within a [`ParamLayout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    /// LSTM gate bias `[i, f, g, o]`: forget block set to one, the rest zero.
    LstmBias { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
pub struct LayoutBuilder {
    infos: Vec<ParamInfo>,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        self.infos.push(ParamInfo {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        });
        ParamId(self.infos.len() - 1)
    }

    pub fn finish(self) -> ParamLayout {
        ParamLayout { infos: self.infos }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    infos: Vec<ParamInfo>,
}

impl ParamLayout {
    pub fn infos(&self) -> &[ParamInfo] {
        &self.infos
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.infos.iter().map(ParamInfo::len).sum()
    }

    pub fn zeros<S: Scalar>(&self) -> ParameterSet<S> {
        ParameterSet {
            params: self
                .infos
                .iter()
                .map(|i| Param {
                    name: i.name.clone(),
                    shape: i.shape.clone(),
                    data: vec![S::zero(); i.len()],
                })
                .collect(),
        }
    }

    /// Deterministic initialization; values are drawn in layout order from one seeded stream.
    pub fn init<S: Scalar>(&self, seed: u64) -> ParameterSet<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = self.zeros::<S>();
        for (info, p) in self.infos.iter().zip(&mut set.params) {
            match info.init {
                Init::Glorot { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    for v in &mut p.data {
                        *v = S::of(rng.gen_range(-a..a));
                    }
                }
                Init::Zeros => {}
                Init::LstmBias { hidden } => {
                    for v in &mut p.data[hidden..2 * hidden] {
                        *v = S::one();
                    }
                }
            }
        }
        set
    }

    /// Check that `set` has exactly this layout's names and shapes.
    pub fn check<S>(&self, set: &ParameterSet<S>) -> Result<()> {
        if set.params.len() != self.infos.len() {
            return Err(Error::Shape {
                axis: "parameter count",
                expected: self.infos.len(),
                got: set.params.len(),
            });
        }
        for (info, p) in self.infos.iter().zip(&set.params) {
            if info.name != p.name || info.shape != p.shape || p.data.len() != info.len() {
                return Err(Error::Config(format!(
                    "parameter `{}` {:?} does not match layout entry `{}` {:?}",
                    p.name, p.shape, info.name, info.shape
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

/// Flat ordered collection of named parameter arrays; also used for gradients
/// and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<S> {
    params: Vec<Param<S>>,
}

impl<S: Scalar> ParameterSet<S> {
    pub fn from_params(params: Vec<Param<S>>) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<S>] {
        &mut self.params
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[S] {
        &self.params[id.0].data
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [S] {
        &mut self.params[id.0].data
    }

    /// Two distinct arrays mutably at once.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [S], &mut [S]) {
        assert_ne!(a, b, "pair_mut needs distinct parameters");
        if a.0 < b.0 {
            let (lo, hi) = self.params.split_at_mut(b.0);
            (&mut lo[a.0].data, &mut hi[0].data)
        } else {
            let (lo, hi) = self.params.split_at_mut(a.0);
            (&mut hi[0].data, &mut lo[b.0].data)
        }
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<S>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Param<S>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: vec![S::zero(); p.data.len()],
                })
                .collect(),
        }
    }

    /// All scalars in enumeration order.
    pub fn iter_scalars(&self) -> impl Iterator<Item = &S> {
        self.params.iter().flat_map(|p| p.data.iter())
    }

    pub fn iter_scalars_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.params.iter_mut().flat_map(|p| p.data.iter_mut())
    }

    /// Locate flat scalar index `i` as `(array, offset)`.
    pub fn locate(&self, mut i: usize) -> Option<(usize, usize)> {
        for (k, p) in self.params.iter().enumerate() {
            if i < p.data.len() {
                return Some((k, i));
            }
            i -= p.data.len();
        }
        None
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, k: S) {
        self.iter_scalars_mut().for_each(|v| *v *= k);
    }

    pub fn fill(&mut self, v: S) {
        self.iter_scalars_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.iter_scalars().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> ParameterSet<T> {
        ParameterSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|&v| T::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}
