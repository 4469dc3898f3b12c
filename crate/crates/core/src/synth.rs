//! Synthetic data: harmonic noise with controllable envelope correlation and
//! inharmonicity, delay-plus-tail room responses, a vowel-like target and
//! scene mixing at prescribed SNRs.

use std::f64::consts::PI;
use std::path::PathBuf;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::beamform::RtfVector;
use crate::error::{invalid_arg, Result};
use crate::fft::fft_convolve;
use crate::signal::{mean_power, SignalBuffer};
use crate::stft::StftConfig;
use crate::wav::read_wav;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarmonicNoiseParams {
    /// Weight of the envelope shared by all components, in `[0, 1]`.
    pub beta: f64,
    pub n_components: usize,
    pub f0_range_hz: (f64, f64),
    pub amp_range: (f64, f64),
    pub envelope_std: f64,
    pub envelope_cutoff_hz: f64,
    /// Deviation of the upper partials from integer multiples of the fundamental, in percent.
    pub inharmonicity_pct: f64,
}

impl Default for HarmonicNoiseParams {
    fn default() -> Self {
        Self {
            beta: 0.8,
            n_components: 16,
            f0_range_hz: (60.0, 150.0),
            amp_range: (1.0, 10.0),
            envelope_std: 10f64.sqrt(),
            envelope_cutoff_hz: 5.0,
            inharmonicity_pct: 0.0,
        }
    }
}

impl HarmonicNoiseParams {
    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return invalid_arg(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.n_components == 0 {
            return invalid_arg("at least one component is required");
        }
        let (lo, hi) = self.f0_range_hz;
        if !(lo > 0.0 && lo <= hi) {
            return invalid_arg("f0 range must be positive and ordered");
        }
        let (alo, ahi) = self.amp_range;
        if !(alo <= ahi) || !alo.is_finite() || !ahi.is_finite() {
            return invalid_arg("amplitude range must be ordered");
        }
        if !(self.envelope_std >= 0.0) {
            return invalid_arg("envelope std must be non-negative");
        }
        if !(self.envelope_cutoff_hz > 0.0 && self.envelope_cutoff_hz < fs / 2.0) {
            return invalid_arg("envelope cutoff must lie in (0, fs/2)");
        }
        if !self.inharmonicity_pct.is_finite() || self.inharmonicity_pct <= -100.0 {
            return invalid_arg("inharmonicity must be finite and above -100 %");
        }
        Ok(())
    }

    /// Partial frequencies for fundamental `f0`. The fundamental stays put and
    /// every higher partial `p·f0` is scaled by `1 + inharmonicity/100`.
    pub fn partial_frequencies(&self, f0: f64) -> Vec<f64> {
        let stretch = 1.0 + self.inharmonicity_pct / 100.0;
        (1..=self.n_components)
            .map(|p| if p == 1 { f0 } else { f0 * p as f64 * stretch })
            .collect()
    }
}

/// A generated noise realization with every parameter that was drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsNoise {
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub f0_hz: f64,
    /// Frequencies of the components that were kept (below Nyquist).
    pub freqs_hz: Vec<f64>,
    pub phases: Vec<f64>,
    pub gains: Vec<f64>,
    #[serde(skip)]
    pub envelopes: Vec<Vec<f64>>,
}

/// 4th-order Butterworth lowpass as two biquads `[b0, b1, b2, a1, a2]`
/// (bilinear transform with prewarping).
pub fn butter4_lowpass_sos(fc_hz: f64, fs: f64) -> Result<[[f64; 5]; 2]> {
    if !(fc_hz > 0.0 && fc_hz < fs / 2.0) {
        return invalid_arg(format!("cutoff {fc_hz} Hz outside (0, {})", fs / 2.0));
    }
    let k = (PI * fc_hz / fs).tan();
    let k2 = k * k;
    let section = |c: f64| {
        let a0 = 1.0 + c * k + k2;
        [k2 / a0, 2.0 * k2 / a0, k2 / a0, (2.0 * k2 - 2.0) / a0, (1.0 - c * k + k2) / a0]
    };
    Ok([section(2.0 * (PI / 8.0).sin()), section(2.0 * (3.0 * PI / 8.0).sin())])
}

fn sos_filter(sos: &[[f64; 5]], x: &mut [f64], scale_zi: f64) {
    let mut gain = 1.0;
    for s in sos {
        let [b0, b1, b2, a1, a2] = *s;
        // Steady-state state for a unit step (transposed direct form II).
        let g = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let mut z2 = (b2 - a2 * g) * gain * scale_zi;
        let mut z1 = (b1 - a1 * g) * gain * scale_zi + z2;
        gain *= g;
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z1;
            z1 = b1 * xin - a1 * y + z2;
            z2 = b2 * xin - a2 * y;
            *v = y;
        }
    }
}

/// Zero-phase (forward-backward) filtering with odd-extension padding and
/// steady-state initial conditions.
pub fn sosfiltfilt(sos: &[[f64; 5]], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = (3 * (2 * sos.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let first = ext[0];
    sos_filter(sos, &mut ext, first);
    ext.reverse();
    let first = ext[0];
    sos_filter(sos, &mut ext, first);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase 4th-order Butterworth lowpass applied to every channel.
pub fn lowpass_butter4(x: &SignalBuffer, fc_hz: f64) -> Result<SignalBuffer> {
    let sos = butter4_lowpass_sos(fc_hz, x.sample_rate_hz())?;
    let (m, n) = x.samples().dim();
    let mut out = Array2::<Complex64>::zeros((m, n));
    for ch in 0..m {
        let re: Vec<f64> = x.channel(ch).iter().map(|c| c.re).collect();
        let im: Vec<f64> = x.channel(ch).iter().map(|c| c.im).collect();
        let fre = sosfiltfilt(&sos, &re);
        let fim = if im.iter().any(|&v| v != 0.0) { sosfiltfilt(&sos, &im) } else { vec![0.0; n] };
        for i in 0..n {
            out[[ch, i]] = Complex64::new(fre[i], fim[i]);
        }
    }
    SignalBuffer::new(out, x.sample_rate_hz())
}

/// Lowpassed Gaussian sequence of length `n`. One second of extra samples on
/// each side is filtered and discarded so the output has no start-up transient.
fn lowpass_gaussian<R: Rng + ?Sized>(
    n: usize,
    std: f64,
    sos: &[[f64; 5]],
    warm: usize,
    rng: &mut R,
) -> Vec<f64> {
    let raw: Vec<f64> = (0..n + 2 * warm).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
    sosfiltfilt(sos, &raw)[warm..warm + n].to_vec()
}

/// Harmonic noise `Σ_p a_p(n) cos(2π f_p n/fs + φ_p)` with
/// `a_p = (β b + (1 − β) c_p) d_p` built from lowpassed Gaussian envelopes.
pub fn gen_cs_noise<R: Rng + ?Sized>(
    p: &HarmonicNoiseParams,
    fs: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<CsNoise> {
    p.validate(fs)?;
    if n_samples == 0 {
        return invalid_arg("noise length must be positive");
    }
    let f0 = if p.f0_range_hz.0 == p.f0_range_hz.1 {
        p.f0_range_hz.0
    } else {
        rng.random_range(p.f0_range_hz.0..p.f0_range_hz.1)
    };
    let all_freqs = p.partial_frequencies(f0);
    let mut freqs = Vec::new();
    let mut phases = Vec::new();
    let mut gains = Vec::new();
    for &f in &all_freqs {
        let phase = rng.random_range(-PI..PI);
        let gain = if p.amp_range.0 == p.amp_range.1 {
            p.amp_range.0
        } else {
            rng.random_range(p.amp_range.0..p.amp_range.1)
        };
        if f >= fs / 2.0 {
            continue;
        }
        freqs.push(f);
        phases.push(phase);
        gains.push(gain);
    }
    if freqs.len() < all_freqs.len() {
        log::warn!("{} components above Nyquist dropped", all_freqs.len() - freqs.len());
    }

    let sos = butter4_lowpass_sos(p.envelope_cutoff_hz, fs)?;
    let warm = fs.ceil() as usize;
    let shared = lowpass_gaussian(n_samples, p.envelope_std, &sos, warm, rng);
    let envelopes: Vec<Vec<f64>> = (0..freqs.len())
        .map(|_| {
            let own = lowpass_gaussian(n_samples, p.envelope_std, &sos, warm, rng);
            shared.iter().zip(&own).map(|(b, c)| p.beta * b + (1.0 - p.beta) * c).collect()
        })
        .collect();

    let mut samples = vec![0.0; n_samples];
    for (q, env) in envelopes.iter().enumerate() {
        let w = 2.0 * PI * freqs[q] / fs;
        for (i, s) in samples.iter_mut().enumerate() {
            *s += gains[q] * env[i] * (w * i as f64 + phases[q]).cos();
        }
    }
    Ok(CsNoise { samples, f0_hz: f0, freqs_hz: freqs, phases, gains, envelopes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RirParams {
    pub rt60_s: f64,
    /// Direct-path to reverberant energy ratio of the tail.
    pub drr_db: f64,
    /// Largest direct-path delay drawn per microphone.
    pub max_delay_samples: usize,
    /// Response length; `None` keeps the tail down to −60 dB.
    pub length_samples: Option<usize>,
}

impl Default for RirParams {
    fn default() -> Self {
        Self { rt60_s: 0.3, drr_db: 6.0, max_delay_samples: 8, length_samples: None }
    }
}

impl RirParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rt60_s >= 0.0) || !self.rt60_s.is_finite() {
            return invalid_arg("rt60 must be non-negative");
        }
        if !self.drr_db.is_finite() {
            return invalid_arg("DRR must be finite");
        }
        Ok(())
    }
}

/// Unit impulse at `delay` followed (for `rt60 > 0`) by Gaussian noise whose
/// amplitude falls by 60 dB over `rt60` seconds. The expected tail energy is
/// set by `drr_db`.
pub fn gen_rir<R: Rng + ?Sized>(p: &RirParams, delay: usize, fs: f64, rng: &mut R) -> Result<Vec<f64>> {
    p.validate()?;
    let tail_len = (p.rt60_s * fs).ceil() as usize;
    let len = p.length_samples.unwrap_or(delay + 1 + tail_len).max(delay + 1);
    let mut h = vec![0.0; len];
    h[delay] = 1.0;
    if p.rt60_s == 0.0 || len == delay + 1 {
        return Ok(h);
    }
    let decay = |t: usize| 10f64.powf(-3.0 * t as f64 / (p.rt60_s * fs));
    let energy: f64 = (1..len - delay).map(|t| decay(t).powi(2)).sum();
    let gain = (10f64.powf(-p.drr_db / 10.0) / energy).sqrt();
    for t in 1..len - delay {
        h[delay + t] = gain * decay(t) * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(h)
}

/// Zero-mean lowpassed Gaussian sequence rescaled to standard deviation `std`.
fn smooth_noise<R: Rng + ?Sized>(n: usize, fc_hz: f64, fs: f64, std: f64, rng: &mut R) -> Vec<f64> {
    let sos = butter4_lowpass_sos(fc_hz, fs).expect("cutoff below Nyquist");
    let warm = (fs / fc_hz).ceil() as usize;
    let x = lowpass_gaussian(n, 1.0, &sos, warm, rng);
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if sd > 0.0 {
        x.iter().map(|v| (v - mean) * std / sd).collect()
    } else {
        vec![0.0; n]
    }
}

/// Speech-like test signal: voiced syllables built from phase-locked
/// harmonics shaped by moving formants, a continuously varying pitch contour
/// (intonation drift, declination and jitter), syllabic amplitude modulation
/// with short pauses, and occasional fricative bursts.
pub fn synthetic_speech<R: Rng + ?Sized>(n: usize, fs: f64, rng: &mut R) -> Vec<f64> {
    const VOWELS: [[f64; 3]; 5] = [
        [730.0, 1090.0, 2440.0],
        [530.0, 1840.0, 2480.0],
        [270.0, 2290.0, 3010.0],
        [570.0, 840.0, 2410.0],
        [300.0, 870.0, 2240.0],
    ];
    const BANDWIDTHS: [f64; 3] = [90.0, 110.0, 170.0];
    const FORMANT_GAINS: [f64; 3] = [1.0, 0.6, 0.3];
    if n == 0 {
        return Vec::new();
    }
    let base_pitch: f64 = rng.random_range(100.0..200.0);
    let drift = smooth_noise(n, 2.0, fs, 0.15, rng);
    let jitter = smooth_noise(n, 40.0, fs, 0.01, rng);
    let declination = rng.random_range(0.1..0.25);
    let pitch: Vec<f64> = (0..n)
        .map(|i| base_pitch * (drift[i] + jitter[i] - declination * i as f64 / n as f64).exp())
        .collect();
    let max_freq = 4000.0f64.min(fs / 2.0);

    let mut out = vec![0.0; n];
    let mut phase = 0.0;
    let mut prev_formants = VOWELS[rng.random_range(0..VOWELS.len())];
    let mut start = 0;
    while start < n {
        if rng.random_bool(0.4) {
            // Fricative: differenced (high-tilted) noise with a smooth envelope.
            let len = ((rng.random_range(0.04..0.09) * fs) as usize).min(n - start);
            let level = rng.random_range(0.05..0.15);
            let mut last = 0.0;
            for j in 0..len {
                let w: f64 = rng.sample(StandardNormal);
                let env = (PI * j as f64 / len as f64).sin().powi(2);
                out[start + j] = level * env * (w - last);
                last = w;
            }
            start += len;
            if start >= n {
                break;
            }
        }
        let syl = (rng.random_range(0.15..0.3) * fs) as usize;
        let gap = (rng.random_range(0.02..0.08) * fs) as usize;
        let formants = VOWELS[rng.random_range(0..VOWELS.len())];
        let level = rng.random_range(0.5..1.0);
        let end = (start + syl).min(n);
        for i in start..end {
            let t = (i - start) as f64 / syl as f64;
            let f0 = pitch[i];
            phase = (phase + 2.0 * PI * f0 / fs) % (2.0 * PI);
            // Formants glide from the previous vowel during the first third.
            let mix = (3.0 * t).min(1.0);
            let env = level * (PI * t).sin().powi(2);
            let mut v = 0.0;
            let mut h = 1;
            while h as f64 * f0 < max_freq {
                let f = h as f64 * f0;
                let shape: f64 = (0..3)
                    .map(|j| {
                        let fj = prev_formants[j] + (formants[j] - prev_formants[j]) * mix;
                        FORMANT_GAINS[j] / (1.0 + ((f - fj) / BANDWIDTHS[j]).powi(2))
                    })
                    .sum();
                v += shape * (h as f64 * phase).sin() / (h as f64).sqrt();
                h += 1;
            }
            out[i] += env * v;
        }
        prev_formants = formants;
        start = end + gap;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Target WAV (first channel used); the synthetic vowel-like target when absent.
    pub target_wav: Option<PathBuf>,
    /// Noise WAV (first channel used); harmonic noise from `noise` when absent.
    pub noise_wav: Option<PathBuf>,
    pub noise: HarmonicNoiseParams,
    pub isnr_db: f64,
    pub self_noise_snr_db: f64,
    pub n_mics: usize,
    pub rir: RirParams,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            target_wav: None,
            noise_wav: None,
            noise: HarmonicNoiseParams::default(),
            isnr_db: -10.0,
            self_noise_snr_db: 30.0,
            n_mics: 2,
            rir: RirParams::default(),
            duration_s: 2.0,
            sample_rate_hz: 16000.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return invalid_arg("duration must be positive");
        }
        if self.n_mics == 0 {
            return invalid_arg("at least one microphone is required");
        }
        if !(self.sample_rate_hz > 0.0) {
            return invalid_arg("sample rate must be positive");
        }
        if !self.isnr_db.is_finite() || !self.self_noise_snr_db.is_finite() {
            return invalid_arg("SNRs must be finite");
        }
        self.rir.validate()?;
        self.noise.validate(self.sample_rate_hz)
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }
}

/// A mixed scene with the references needed for evaluation and oracle variants.
#[derive(Debug, Clone)]
pub struct Scene {
    pub noisy: SignalBuffer,
    /// Reverberant target at microphone 0.
    pub target_ref: SignalBuffer,
    /// Interferer plus sensor noise, identical to the noise in `noisy`.
    pub noise_only: SignalBuffer,
    pub target_delays: Vec<usize>,
    pub interferer_delays: Vec<usize>,
    /// Target impulse responses, one per microphone.
    pub target_rirs: Vec<Vec<f64>>,
    /// Present when the interferer was synthesized.
    pub noise: Option<CsNoise>,
    pub noise_gain: f64,
}

impl Scene {
    /// True target RTFs as seen through the analysis window of `cfg`.
    pub fn oracle_rtf(&self, cfg: &StftConfig) -> Result<Vec<RtfVector>> {
        windowed_rtf(&self.target_rirs, &cfg.window(), cfg.fft_size)
    }
}

/// RTFs of arbitrary impulse responses on a `k`-bin grid.
///
/// Each bin takes the ratio of the cross-spectrum `H_m H_0*` to `|H_0|²`,
/// both smoothed by the squared magnitude response of `window`. For a white
/// source this is the ratio an STFT with that window measures, which stays
/// well defined when the responses are much longer than the frame.
pub fn windowed_rtf(rirs: &[Vec<f64>], window: &[f64], k: usize) -> Result<Vec<RtfVector>> {
    if rirs.is_empty() || k == 0 || window.len() != k {
        return invalid_arg("need at least one response and a window of length k");
    }
    let longest = rirs.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let up = (2 * longest.div_ceil(k)).next_power_of_two().max(4);
    let p = k * up;
    let fwd = crate::fft::forward(p);
    let spectrum = |x: &[f64]| {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(p, Complex64::default());
        fwd.process(&mut buf);
        buf
    };
    let h: Vec<Vec<Complex64>> = rirs.iter().map(|r| spectrum(r)).collect();
    let kernel: Vec<f64> = spectrum(window).iter().map(|c| c.norm_sqr()).collect();
    let half = (4 * up) as isize;
    (0..k)
        .map(|bin| {
            let centre = (bin * up) as isize;
            let mut num = vec![Complex64::default(); h.len()];
            let mut den = 0.0;
            for j in -half..=half {
                let g = kernel[j.rem_euclid(p as isize) as usize];
                let f = (centre + j).rem_euclid(p as isize) as usize;
                let h0 = h[0][f];
                den += g * h0.norm_sqr();
                for (acc, hm) in num.iter_mut().zip(&h) {
                    *acc += g * hm[f] * h0.conj();
                }
            }
            if !(den > 0.0) {
                return Err(crate::error::Error::Numerical(format!(
                    "reference response has no energy near bin {bin}"
                )));
            }
            let a: Vec<Complex64> = num.iter().map(|c| c / den).collect();
            RtfVector::from_unnormalized(&a)
        })
        .collect()
}

/// RTFs `exp(−j2πκ(d_m − d_0)/K)` of pure delays, for bins `κ = 0..K`.
pub fn delay_rtf(delays: &[usize], k: usize) -> Vec<RtfVector> {
    (0..k)
        .map(|bin| {
            let a: Vec<Complex64> = delays
                .iter()
                .map(|&d| {
                    let lag = d as f64 - delays[0] as f64;
                    let turns = (bin as f64 * lag / k as f64).rem_euclid(1.0);
                    Complex64::from_polar(1.0, -2.0 * PI * turns)
                })
                .collect();
            RtfVector::from_unnormalized(&a).expect("unit reference")
        })
        .collect()
}

fn source_from_wav(path: &PathBuf, n: usize, fs: f64) -> Result<Vec<f64>> {
    let x = read_wav(path)?;
    if x.sample_rate_hz() != fs {
        return invalid_arg(format!(
            "{} has sample rate {} Hz, scene uses {fs} Hz",
            path.display(),
            x.sample_rate_hz()
        ));
    }
    let mut s = x.real_channel(0);
    s.resize(n, 0.0);
    Ok(s)
}

fn draw_delays<R: Rng + ?Sized>(m: usize, max: usize, rng: &mut R) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(0..=max)).collect()
}

fn tdoa(d: &[usize]) -> Vec<i64> {
    d.iter().map(|&v| v as i64 - d[0] as i64).collect()
}

/// Convolves target and interferer with per-microphone responses, scales the
/// interferer to `isnr_db` at microphone 0 and adds white sensor noise at
/// `self_noise_snr_db` below the reference target power.
pub fn mix_scene<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<Scene> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let fs = cfg.sample_rate_hz;
    let m = cfg.n_mics;
    let target = match &cfg.target_wav {
        Some(p) => source_from_wav(p, n, fs)?,
        None => synthetic_speech(n, fs, rng),
    };
    let (interferer, noise) = match &cfg.noise_wav {
        Some(p) => (source_from_wav(p, n, fs)?, None),
        None => {
            let cs = gen_cs_noise(&cfg.noise, fs, n, rng)?;
            (cs.samples.clone(), Some(cs))
        }
    };

    let max_delay = cfg.rir.max_delay_samples;
    let target_delays = draw_delays(m, max_delay, rng);
    let mut interferer_delays = draw_delays(m, max_delay, rng);
    if m > 1 && max_delay > 0 {
        while tdoa(&interferer_delays) == tdoa(&target_delays) {
            interferer_delays = draw_delays(m, max_delay, rng);
        }
    }

    let mut draw_rirs = |delays: &[usize]| -> Result<Vec<Vec<f64>>> {
        delays.iter().map(|&d| gen_rir(&cfg.rir, d, fs, rng)).collect()
    };
    let target_rirs = draw_rirs(&target_delays)?;
    let interferer_rirs = draw_rirs(&interferer_delays)?;
    let convolve = |src: &[f64], rirs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rirs.iter()
            .map(|h| {
                let mut y = fft_convolve(src, h);
                y.truncate(n);
                y
            })
            .collect()
    };
    let target_mics = convolve(&target, &target_rirs);
    let noise_mics = convolve(&interferer, &interferer_rirs);

    let target_power = mean_power(&target_mics[0]);
    if !(target_power > 0.0) {
        return invalid_arg("target is silent at the reference microphone; SNR is undefined");
    }
    let noise_power = mean_power(&noise_mics[0]);
    if !(noise_power > 0.0) {
        return invalid_arg("interferer is silent at the reference microphone");
    }
    let noise_gain = (target_power / noise_power / 10f64.powf(cfg.isnr_db / 10.0)).sqrt();
    let sensor = Normal::new(0.0, (target_power / 10f64.powf(cfg.self_noise_snr_db / 10.0)).sqrt())
        .map_err(|e| crate::error::Error::InvalidConfig(e.to_string()))?;

    let noise_only: Vec<Vec<f64>> = noise_mics
        .iter()
        .map(|ch| ch.iter().map(|v| noise_gain * v + sensor.sample(rng)).collect())
        .collect();
    let noisy: Vec<Vec<f64>> = target_mics
        .iter()
        .zip(&noise_only)
        .map(|(t, v)| t.iter().zip(v).map(|(a, b)| a + b).collect())
        .collect();
    Ok(Scene {
        noisy: SignalBuffer::from_real(&noisy, fs)?,
        target_ref: SignalBuffer::mono(&target_mics[0], fs)?,
        noise_only: SignalBuffer::from_real(&noise_only, fs)?,
        target_delays,
        interferer_delays,
        target_rirs,
        noise,
        noise_gain,
    })
}
