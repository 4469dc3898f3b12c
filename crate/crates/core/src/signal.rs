use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{invalid_arg, Result};

/// Multichannel time-domain audio, stored as complex samples `[channels × length]`.
///
/// Real signals carry a zero imaginary part; modulated signals are complex.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    samples: Array2<Complex64>,
    sample_rate_hz: f64,
}

impl SignalBuffer {
    pub fn new(samples: Array2<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return invalid_arg("signal needs at least one channel and one sample");
        }
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return invalid_arg(format!("sample rate must be positive, got {sample_rate_hz}"));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    /// Builds a buffer from equal-length real channels.
    pub fn from_real(channels: &[Vec<f64>], sample_rate_hz: f64) -> Result<Self> {
        let m = channels.len();
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return invalid_arg("all channels must have the same length");
        }
        let samples = Array2::from_shape_fn((m, n), |(i, j)| Complex64::new(channels[i][j], 0.0));
        Self::new(samples, sample_rate_hz)
    }

    pub fn mono(samples: &[f64], sample_rate_hz: f64) -> Result<Self> {
        Self::from_real(&[samples.to_vec()], sample_rate_hz)
    }

    pub fn zeros(channels: usize, len: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::new(Array2::zeros((channels, len)), sample_rate_hz)
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn samples(&self) -> &Array2<Complex64> {
        &self.samples
    }

    pub fn channel(&self, m: usize) -> ArrayView1<'_, Complex64> {
        self.samples.row(m)
    }

    /// Real part of channel `m`.
    pub fn real_channel(&self, m: usize) -> Vec<f64> {
        self.samples.row(m).iter().map(|c| c.re).collect()
    }

    pub fn select_channel(&self, m: usize) -> SignalBuffer {
        let row = self.samples.row(m).to_owned().insert_axis(ndarray::Axis(0));
        SignalBuffer { samples: row, sample_rate_hz: self.sample_rate_hz }
    }

    /// First `m` channels.
    pub fn take_channels(&self, m: usize) -> Result<SignalBuffer> {
        if m == 0 || m > self.n_channels() {
            return invalid_arg(format!("cannot take {m} of {} channels", self.n_channels()));
        }
        let s = self.samples.slice(ndarray::s![..m, ..]).to_owned();
        SignalBuffer::new(s, self.sample_rate_hz)
    }

    /// Inserts `front` zeros before and `back` zeros after every channel.
    pub fn zero_pad(&self, front: usize, back: usize) -> SignalBuffer {
        let (m, n) = self.samples.dim();
        let mut out = Array2::zeros((m, front + n + back));
        out.slice_mut(ndarray::s![.., front..front + n]).assign(&self.samples);
        SignalBuffer { samples: out, sample_rate_hz: self.sample_rate_hz }
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn segment(&self, start: usize, len: usize) -> Result<SignalBuffer> {
        if start + len > self.len() || len == 0 {
            return invalid_arg("segment out of range");
        }
        let s = self.samples.slice(ndarray::s![.., start..start + len]).to_owned();
        SignalBuffer::new(s, self.sample_rate_hz)
    }

    pub fn is_real(&self) -> bool {
        self.samples.iter().all(|c| c.im == 0.0)
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}
