//! Short-time Fourier analysis/synthesis and time-domain frequency shifting.
//!
//! Frames start at multiples of the hop and span `fft_size` samples. The
//! forward DFT is unnormalized and all `K` bins are kept, since modulated
//! inputs are complex. Synthesis is a weighted overlap-add normalized by the
//! accumulated squared window.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::fft;
use crate::signal::SignalBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    SqrtHann,
    Rectangular,
}

/// Analysis window of length `k`. The square-root Hann window uses the
/// periodic Hann convention so that it is power-complementary at 50% and
/// 75% overlap.
pub fn make_window(kind: WindowKind, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return invalid_arg(format!("window length must be at least 2, got {k}"));
    }
    Ok(match kind {
        WindowKind::Rectangular => vec![1.0; k],
        WindowKind::SqrtHann => (0..k)
            .map(|n| {
                let hann = 0.5 - 0.5 * (2.0 * PI * n as f64 / k as f64).cos();
                hann.max(0.0).sqrt()
            })
            .collect(),
    })
}

/// Number of frames for a signal of length `n`: `ceil(1 + (n - k) / r)`.
pub fn num_frames(n: usize, k: usize, r: usize) -> Result<usize> {
    if r == 0 || k == 0 {
        return invalid_arg("fft size and hop must be positive");
    }
    if n < k {
        return invalid_arg(format!("signal length {n} shorter than frame {k}; zero-pad first"));
    }
    Ok(1 + (n - k).div_ceil(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { fft_size: 2048, hop: 512, window: WindowKind::SqrtHann }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize, window: WindowKind) -> Result<Self> {
        let cfg = Self { fft_size, hop, window };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 {
            return Err(Error::InvalidConfig(format!("fft size {} < 2", self.fft_size)));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "hop {} must lie in 1..={}",
                self.hop, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn window(&self) -> Vec<f64> {
        make_window(self.window, self.fft_size).expect("validated config")
    }

    /// Squared window summed over all hop-shifted copies, one period of length `hop`.
    fn overlap_energy(&self) -> Vec<f64> {
        let w = self.window();
        let mut acc = vec![0.0; self.hop];
        for (n, v) in w.iter().enumerate() {
            acc[n % self.hop] += v * v;
        }
        acc
    }

    /// True when the summed squared window is constant (perfect reconstruction
    /// by plain overlap-add of windowed frames).
    pub fn is_power_complementary(&self) -> bool {
        let acc = self.overlap_energy();
        let max = acc.iter().cloned().fold(f64::MIN, f64::max);
        let min = acc.iter().cloned().fold(f64::MAX, f64::min);
        max > 0.0 && (max - min) <= 1e-12 * max
    }

    /// True when the summed squared window never vanishes, which is what
    /// normalized weighted overlap-add needs.
    pub fn has_perfect_reconstruction(&self) -> bool {
        let acc = self.overlap_energy();
        let max = acc.iter().cloned().fold(f64::MIN, f64::max);
        acc.iter().all(|&v| v > 1e-10 * max)
    }
}

/// Complex STFT coefficients `[channels × K bins × L frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StftTensor {
    pub coeffs: Array3<Complex64>,
    pub config: StftConfig,
    pub sample_rate_hz: f64,
}

impl StftTensor {
    pub fn n_channels(&self) -> usize {
        self.coeffs.dim().0
    }

    pub fn n_bins(&self) -> usize {
        self.coeffs.dim().1
    }

    pub fn n_frames(&self) -> usize {
        self.coeffs.dim().2
    }

    /// `[K × L]` view of one channel.
    pub fn channel(&self, m: usize) -> ArrayView2<'_, Complex64> {
        self.coeffs.index_axis(Axis(0), m)
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate_hz / self.config.fft_size as f64
    }
}

/// Multiplies every channel by `exp(j 2π alpha n / fs)`, moving spectral
/// content up by `alpha_hz`. After an STFT, bin `k` of the result reads the
/// input spectrum at `ω_k − alpha`.
pub fn modulate(x: &SignalBuffer, alpha_hz: f64) -> SignalBuffer {
    if alpha_hz == 0.0 {
        return x.clone();
    }
    let fs = x.sample_rate_hz();
    let cycles_per_sample = alpha_hz / fs;
    let phasor: Vec<Complex64> = (0..x.len())
        .map(|n| {
            // Reduce the phase modulo one cycle before scaling by 2π.
            let turns = (cycles_per_sample * n as f64).rem_euclid(1.0);
            Complex64::from_polar(1.0, 2.0 * PI * turns)
        })
        .collect();
    let mut samples = x.samples().clone();
    for mut row in samples.rows_mut() {
        for (v, p) in row.iter_mut().zip(&phasor) {
            *v *= p;
        }
    }
    SignalBuffer::new(samples, fs).expect("shape unchanged")
}

/// Length the signal is zero-padded to before framing.
pub fn padded_len(n: usize, cfg: &StftConfig) -> usize {
    let n = n.max(cfg.fft_size);
    let frames = num_frames(n, cfg.fft_size, cfg.hop).expect("n >= fft size");
    (frames - 1) * cfg.hop + cfg.fft_size
}

pub fn stft(x: &SignalBuffer, cfg: &StftConfig) -> Result<StftTensor> {
    cfg.validate()?;
    let k = cfg.fft_size;
    let n_pad = padded_len(x.len(), cfg);
    let frames = num_frames(n_pad, k, cfg.hop)?;
    let window = cfg.window();
    let plan = fft::forward(k);
    let m = x.n_channels();
    let mut coeffs = Array3::zeros((m, k, frames));
    let mut buf = vec![Complex64::default(); k];
    for ch in 0..m {
        let row = x.channel(ch);
        for l in 0..frames {
            let start = l * cfg.hop;
            for (n, b) in buf.iter_mut().enumerate() {
                let idx = start + n;
                *b = if idx < row.len() { row[idx] * window[n] } else { Complex64::default() };
            }
            plan.process(&mut buf);
            for (bin, v) in buf.iter().enumerate() {
                coeffs[[ch, bin, l]] = *v;
            }
        }
    }
    Ok(StftTensor { coeffs, config: *cfg, sample_rate_hz: x.sample_rate_hz() })
}

/// Weighted overlap-add synthesis. The output has the padded length
/// `(L − 1)·R + K`; samples whose accumulated squared window vanishes are zero.
pub fn istft(x: &StftTensor) -> Result<SignalBuffer> {
    let cfg = x.config;
    cfg.validate()?;
    if !cfg.has_perfect_reconstruction() {
        return Err(Error::InvalidConfig(format!(
            "window {:?} with fft size {} and hop {} cannot be inverted",
            cfg.window, cfg.fft_size, cfg.hop
        )));
    }
    let (m, k, frames) = x.coeffs.dim();
    if k != cfg.fft_size {
        return invalid_arg("tensor bin count does not match its config");
    }
    let len = if frames == 0 { 0 } else { (frames - 1) * cfg.hop + k };
    let window = cfg.window();
    let mut norm = vec![0.0; len];
    for l in 0..frames {
        for (n, w) in window.iter().enumerate() {
            norm[l * cfg.hop + n] += w * w;
        }
    }
    let floor = 1e-10 * norm.iter().cloned().fold(0.0, f64::max);
    let plan = fft::inverse(k);
    let scale = 1.0 / k as f64;
    let mut out = Array2::<Complex64>::zeros((m, len.max(1)));
    let mut buf = vec![Complex64::default(); k];
    for ch in 0..m {
        for l in 0..frames {
            for (bin, b) in buf.iter_mut().enumerate() {
                *b = x.coeffs[[ch, bin, l]];
            }
            plan.process(&mut buf);
            let start = l * cfg.hop;
            for (n, v) in buf.iter().enumerate() {
                out[[ch, start + n]] += *v * (window[n] * scale);
            }
        }
        for (n, d) in norm.iter().enumerate() {
            out[[ch, n]] = if *d > floor { out[[ch, n]] / *d } else { Complex64::default() };
        }
    }
    SignalBuffer::new(out, x.sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(m: usize, n: usize, seed: u64) -> SignalBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch: Vec<Vec<f64>> =
            (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        SignalBuffer::from_real(&ch, 16000.0).unwrap()
    }

    #[test]
    fn rectangular_window_is_ones() {
        assert_eq!(make_window(WindowKind::Rectangular, 4).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn sqrt_hann_starts_at_zero() {
        let w = make_window(WindowKind::SqrtHann, 16).unwrap();
        assert_eq!(w[0], 0.0);
        assert!((w[8] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn short_window_rejected() {
        assert!(make_window(WindowKind::SqrtHann, 1).is_err());
    }

    #[test]
    fn sqrt_hann_power_complementary_at_quarter_hop() {
        let k = 2048;
        let w = make_window(WindowKind::SqrtHann, k).unwrap();
        let r = 512;
        let sums: Vec<f64> = (0..r)
            .map(|n| (0..k / r).map(|j| w[n + j * r].powi(2)).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - min) / max < 1e-12, "spread {}", (max - min) / max);
        assert!(StftConfig::new(k, r, WindowKind::SqrtHann).unwrap().is_power_complementary());
        assert!(StftConfig::new(k, k / 2, WindowKind::SqrtHann).unwrap().is_power_complementary());
        assert!(!StftConfig::new(k, k, WindowKind::SqrtHann).unwrap().is_power_complementary());
    }

    #[test]
    fn frame_counts() {
        assert_eq!(num_frames(2048, 2048, 512).unwrap(), 1);
        assert_eq!(num_frames(16000, 2048, 512).unwrap(), 29);
        assert_eq!(num_frames(2049, 2048, 512).unwrap(), 2);
        assert!(num_frames(100, 2048, 512).is_err());
        for n in 64..400 {
            for (k, r) in [(64, 16), (64, 32), (128, 48), (32, 32)] {
                if n < k {
                    continue;
                }
                let expect = (1.0 + (n - k) as f64 / r as f64).ceil() as usize;
                assert_eq!(num_frames(n, k, r).unwrap(), expect);
            }
        }
    }

    #[test]
    fn zero_shift_is_identity() {
        let x = random_signal(2, 100, 1);
        assert_eq!(modulate(&x, 0.0), x);
    }

    #[test]
    fn modulation_round_trip() {
        let x = random_signal(2, 5000, 2);
        let y = modulate(&modulate(&x, 123.4), -123.4);
        let err: f64 = (y.samples() - x.samples()).iter().map(|c| c.norm_sqr()).sum();
        let ref_e: f64 = x.samples().iter().map(|c| c.norm_sqr()).sum();
        assert!((err / ref_e).sqrt() < 1e-12);
    }

    #[test]
    fn modulated_tone_peaks_at_shifted_bin() {
        let fs = 16000.0;
        let n = 4096;
        let f0 = 1000.0;
        let g = 250.0;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f0 * i as f64 / fs).cos()).collect();
        let y = modulate(&SignalBuffer::mono(&x, fs).unwrap(), g);
        let cfg = StftConfig::new(n, n, WindowKind::Rectangular).unwrap();
        let spec = stft(&y, &cfg).unwrap();
        let ch = spec.channel(0);
        let (best, _) = (0..n / 2)
            .map(|k| (k, ch[[k, 0]].norm()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        assert_eq!(best, ((f0 + g) / fs * n as f64).round() as usize);
    }

    #[test]
    fn zero_input_zero_output() {
        let x = SignalBuffer::zeros(2, 3000, 16000.0).unwrap();
        let s = stft(&x, &StftConfig::default()).unwrap();
        assert!(s.coeffs.iter().all(|c| c.norm() == 0.0));
        let y = istft(&s).unwrap();
        assert!(y.samples().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut x = vec![0.0; 64];
        x[0] = 1.0;
        let cfg = StftConfig::new(64, 64, WindowKind::Rectangular).unwrap();
        let s = stft(&SignalBuffer::mono(&x, 8000.0).unwrap(), &cfg).unwrap();
        assert_eq!(s.n_frames(), 1);
        for k in 0..64 {
            assert!((s.coeffs[[0, k, 0]].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn parseval_single_rectangular_frame() {
        let x = random_signal(1, 256, 3);
        let cfg = StftConfig::new(256, 256, WindowKind::Rectangular).unwrap();
        let s = stft(&x, &cfg).unwrap();
        let time: f64 = x.samples().iter().map(|c| c.norm_sqr()).sum();
        let freq: f64 = s.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / 256.0;
        assert!(((time - freq) / time).abs() < 1e-10);
    }

    #[test]
    fn frame_count_matches_formula_for_noise() {
        let x = random_signal(1, 16000, 4);
        let s = stft(&x, &StftConfig::default()).unwrap();
        assert_eq!(s.n_frames(), num_frames(16000, 2048, 512).unwrap());
        assert_eq!(s.n_bins(), 2048);
    }

    #[test]
    fn modulation_samples_fine_spectrum() {
        // Single rectangular frame: the shifted STFT samples the zero-padded
        // DFT of the original at ω_k + α.
        let k = 128;
        let pad = 4;
        let x = random_signal(1, k, 5);
        let alpha = 3.0 * x.sample_rate_hz() / (k * pad) as f64;
        let cfg = StftConfig::new(k, k, WindowKind::Rectangular).unwrap();
        let shifted = stft(&modulate(&x, -alpha), &cfg).unwrap();
        let mut fine: Vec<Complex64> = x.channel(0).to_vec();
        fine.resize(k * pad, Complex64::default());
        fft::forward(k * pad).process(&mut fine);
        for bin in 0..k {
            let idx = (bin * pad + 3) % (k * pad);
            assert!((shifted.coeffs[[0, bin, 0]] - fine[idx]).norm() < 1e-10);
        }
    }

    #[test]
    fn round_trip_interior() {
        let x = random_signal(2, 9000, 6);
        let cfg = StftConfig::default();
        let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
        let lo = cfg.fft_size;
        let hi = x.len() - cfg.fft_size;
        for m in 0..2 {
            let mut err = 0.0;
            let mut energy = 0.0;
            for n in lo..hi {
                err += (y.samples()[[m, n]] - x.samples()[[m, n]]).norm_sqr();
                energy += x.samples()[[m, n]].norm_sqr();
            }
            assert!((err / energy).sqrt() < 1e-10);
        }
    }

    #[test]
    fn istft_rejects_non_invertible_pair() {
        let cfg = StftConfig::new(64, 64, WindowKind::SqrtHann).unwrap();
        let x = random_signal(1, 640, 7);
        let s = stft(&x, &cfg).unwrap();
        assert!(matches!(istft(&s), Err(Error::InvalidConfig(_))));
    }
}
