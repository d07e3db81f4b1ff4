use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense rank-3 array laid out as `[batch, time, channel]`, channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<S> {
    data: Vec<S>,
    batch: usize,
    time: usize,
    channels: usize,
}

impl<S: Scalar> Tensor3<S> {
    pub fn zeros(batch: usize, time: usize, channels: usize) -> Self {
        Self {
            data: vec![S::zero(); batch * time * channels],
            batch,
            time,
            channels,
        }
    }

    pub fn from_vec(batch: usize, time: usize, channels: usize, data: Vec<S>) -> Result<Self> {
        if batch == 0 || time == 0 || channels == 0 {
            return Err(Error::Config(format!(
                "tensor shape must be positive, got [{batch}, {time}, {channels}]"
            )));
        }
        let expected = batch * time * channels;
        if data.len() != expected {
            return Err(Error::Shape {
                axis: "data length",
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            data,
            batch,
            time,
            channels,
        })
    }

    /// Build from a closure over `(sample, step, channel)`.
    pub fn from_fn(
        batch: usize,
        time: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> S,
    ) -> Self {
        let mut data = Vec::with_capacity(batch * time * channels);
        for s in 0..batch {
            for t in 0..time {
                for c in 0..channels {
                    data.push(f(s, t, c));
                }
            }
        }
        Self {
            data,
            batch,
            time,
            channels,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.batch, self.time, self.channels]
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize, c: usize) -> S {
        self.data[(s * self.time + t) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, s: usize, t: usize, c: usize, v: S) {
        self.data[(s * self.time + t) * self.channels + c] = v;
    }

    /// The `[time, channel]` block of one sample.
    pub fn sample(&self, s: usize) -> &[S] {
        let n = self.time * self.channels;
        &self.data[s * n..(s + 1) * n]
    }

    pub fn sample_mut(&mut self, s: usize) -> &mut [S] {
        let n = self.time * self.channels;
        &mut self.data[s * n..(s + 1) * n]
    }

    /// Copy of channels `[lo, hi)`.
    pub fn channel_slice(&self, lo: usize, hi: usize) -> Tensor3<S> {
        assert!(lo < hi && hi <= self.channels, "channel range out of bounds");
        Tensor3::from_fn(self.batch, self.time, hi - lo, |s, t, c| {
            self.get(s, t, lo + c)
        })
    }

    /// Gather the given samples into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Tensor3<S> {
        let n = self.time * self.channels;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor3 {
            data,
            batch: indices.len(),
            time: self.time,
            channels: self.channels,
        }
    }

    pub fn cast<T: Scalar>(&self) -> Tensor3<T> {
        Tensor3 {
            data: self.data.iter().map(|&v| T::of(v.as_f64())).collect(),
            batch: self.batch,
            time: self.time,
            channels: self.channels,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
