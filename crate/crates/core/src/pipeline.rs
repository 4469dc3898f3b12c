//! End-to-end enhancement: resonant-frequency estimation, candidate shifts,
//! coherence filtering, stacking, covariance estimation, RTF estimation and
//! (cyclic) MVDR beamforming.

use std::fmt;
use std::str::FromStr;

use ndarray::Array3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{
    build_multiband_stack, cmvdr_weights, diagonal_load, estimate_cov_batch, estimate_rtf_cw, mvdr_weights,
    recursive_update, sample_covariance, BeamWeights, CMatrix, MultibandStack, RtfVector,
};
use crate::cyclospec::{
    candidate_shifts_difference, candidate_shifts_integer, coherence_filter, estimate_resonant_frequencies,
    null_modulation_sets, ModulationSet, PeakParams, ResonantFrequencySet,
};
use crate::error::{invalid_arg, Error, Result};
use crate::signal::SignalBuffer;
use crate::stft::{istft, stft, StftConfig, StftTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MVDR")]
    Mvdr,
    #[serde(rename = "MVDR+")]
    MvdrOracle,
    #[serde(rename = "cMVDR")]
    Cmvdr,
    #[serde(rename = "cMVDR+")]
    CmvdrOracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mvdr, Method::MvdrOracle, Method::Cmvdr, Method::CmvdrOracle];

    pub fn is_cyclic(self) -> bool {
        matches!(self, Method::Cmvdr | Method::CmvdrOracle)
    }

    pub fn uses_oracle_rtf(self) -> bool {
        matches!(self, Method::MvdrOracle | Method::CmvdrOracle)
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Mvdr => "MVDR",
            Method::MvdrOracle => "MVDR+",
            Method::Cmvdr => "cMVDR",
            Method::CmvdrOracle => "cMVDR+",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}' (MVDR, MVDR+, cMVDR, cMVDR+)")))
    }
}

/// How candidate frequency shifts are derived from resonant frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftStrategy {
    /// Negative multiples of the lowest resonant frequency.
    IntegerMultiple,
    /// Pairwise differences of all resonant frequencies.
    Difference,
}

impl FromStr for ShiftStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" | "integer_multiple" | "integer" => Ok(Self::IntegerMultiple),
            "delta" | "difference" => Ok(Self::Difference),
            other => invalid_arg(format!("unknown shift strategy '{other}' (x, delta)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// One estimate over the whole signal.
    Batch,
    /// Exponential averaging with weights recomputed every frame.
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceConfig {
    pub stft: StftConfig,
    pub peaks: PeakParams,
    pub strategy: ShiftStrategy,
    pub gamma_min: f64,
    pub c_max: usize,
    /// PSD regularization ratio used in the coherence.
    pub coherence_reg: f64,
    pub kappa0: f64,
    pub covariance: CovarianceMode,
    pub smoothing: f64,
    /// Run coherence filtering on the noise-only data instead of the noisy mixture.
    pub coherence_on_noise: bool,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            peaks: PeakParams::default(),
            strategy: ShiftStrategy::Difference,
            gamma_min: 0.6,
            c_max: 8,
            coherence_reg: 1000.0,
            kappa0: 1000.0,
            covariance: CovarianceMode::Batch,
            smoothing: 0.95,
            coherence_on_noise: false,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.peaks.validate()?;
        if !(0.0..=1.0).contains(&self.gamma_min) {
            return invalid_arg("coherence threshold must lie in [0, 1]");
        }
        if !(self.coherence_reg > 1.0) {
            return invalid_arg("coherence regularization must exceed 1");
        }
        if !(self.kappa0 > 1.0) {
            return invalid_arg("kappa0 must exceed 1");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return invalid_arg("smoothing must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Signals and side information for one enhancement run.
#[derive(Debug, Clone, Copy)]
pub struct EnhanceInput<'a> {
    pub noisy: &'a SignalBuffer,
    /// Noise-only recording from the same array (noise covariance, frequency
    /// estimation and coherence filtering).
    pub noise_only: Option<&'a SignalBuffer>,
    /// Resonant frequencies known in advance; skips periodogram estimation.
    pub known_freqs_hz: Option<&'a [f64]>,
    /// True per-bin RTFs, needed by the oracle methods.
    pub oracle_rtf: Option<&'a [RtfVector]>,
}

#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub method: Method,
    /// Single-channel estimate with the input length.
    pub signal: SignalBuffer,
    /// Largest `|wᴴa₀ − 1|` over all weight vectors used.
    pub max_constraint_residual: f64,
    pub n_weight_vectors: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnhanceDiagnostics {
    pub resonant: Option<ResonantFrequencySet>,
    pub candidates_hz: Vec<f64>,
    /// `histogram[c]` counts bins whose modulation set has `c` elements.
    pub set_size_histogram: Vec<usize>,
    pub n_shifted_stfts: usize,
    pub max_condition_number: f64,
}

#[derive(Debug, Clone)]
pub struct Enhancement {
    pub outputs: Vec<MethodOutput>,
    pub mod_sets: Vec<ModulationSet>,
    pub diagnostics: EnhanceDiagnostics,
}

impl Enhancement {
    pub fn output(&self, method: Method) -> Option<&MethodOutput> {
        self.outputs.iter().find(|o| o.method == method)
    }
}

fn check_input(input: &EnhanceInput<'_>, cfg: &EnhanceConfig, methods: &[Method]) -> Result<()> {
    cfg.validate()?;
    if methods.is_empty() {
        return invalid_arg("no methods requested");
    }
    let fs = input.noisy.sample_rate_hz();
    let m = input.noisy.n_channels();
    if let Some(v) = input.noise_only {
        if v.sample_rate_hz() != fs {
            return invalid_arg(format!(
                "noise sample rate {} Hz differs from noisy sample rate {fs} Hz",
                v.sample_rate_hz()
            ));
        }
        if v.n_channels() != m {
            return invalid_arg(format!("noise has {} channels, noisy signal {m}", v.n_channels()));
        }
    }
    if methods.iter().any(|x| x.uses_oracle_rtf()) {
        match input.oracle_rtf {
            None => return invalid_arg("oracle methods need the true RTFs"),
            Some(r) if r.len() != cfg.stft.fft_size || r.iter().any(|a| a.len() != m) => {
                return invalid_arg("oracle RTFs must hold one M-vector per bin")
            }
            _ => {}
        }
    }
    Ok(())
}

/// Resonant frequencies from the reference channel of `x` (first `K_v` samples).
pub fn resonant_frequencies(x: &SignalBuffer, params: &PeakParams) -> Result<ResonantFrequencySet> {
    let mut r = x.real_channel(0);
    r.truncate(params.fft_size);
    estimate_resonant_frequencies(&r, x.sample_rate_hz(), params)
}

pub fn candidate_shifts(set: &ResonantFrequencySet, strategy: ShiftStrategy) -> Vec<f64> {
    match strategy {
        ShiftStrategy::IntegerMultiple => match set.freqs_hz.first() {
            Some(&alpha1) => candidate_shifts_integer(alpha1, set.len()),
            None => vec![0.0],
        },
        ShiftStrategy::Difference => candidate_shifts_difference(set),
    }
}

/// Modulation sets for every bin. Resonant frequencies come from the
/// noise-only data when available; coherence is measured on the noisy
/// mixture unless `coherence_on_noise` is set.
pub fn modulation_sets(
    input: &EnhanceInput<'_>,
    cfg: &EnhanceConfig,
) -> Result<(Vec<ModulationSet>, Option<ResonantFrequencySet>, Vec<f64>)> {
    let freq_source = input.noise_only.unwrap_or(input.noisy);
    let fs = freq_source.sample_rate_hz();
    let set = match input.known_freqs_hz {
        Some(f) => ResonantFrequencySet::known(f, fs / cfg.peaks.fft_size as f64),
        None => resonant_frequencies(freq_source, &cfg.peaks)?,
    };
    let candidates = candidate_shifts(&set, cfg.strategy);
    let coh_source = match (cfg.coherence_on_noise, input.noise_only) {
        (true, Some(v)) => v,
        _ => input.noisy,
    };
    let sets =
        coherence_filter(&candidates, coh_source, &cfg.stft, cfg.gamma_min, cfg.c_max, cfg.coherence_reg)?;
    Ok((sets, Some(set), candidates))
}

/// Per-bin noise covariance of the unmodulated signal; a scaled identity
/// when no noise-only data exists.
fn noise_covariances(noise: Option<&SignalBuffer>, m: usize, cfg: &StftConfig) -> Result<Vec<CMatrix>> {
    match noise {
        Some(v) => {
            let spec = stft(v, cfg)?;
            Ok((0..spec.n_bins())
                .map(|k| {
                    let frames = spec.coeffs.slice(ndarray::s![.., k, ..]).t().to_owned();
                    sample_covariance(&frames)
                })
                .collect())
        }
        None => {
            log::warn!("no noise-only data: RTFs estimated against white noise");
            Ok(vec![CMatrix::identity(m, m); cfg.fft_size])
        }
    }
}

fn spatial_block(s: &CMatrix, m: usize) -> CMatrix {
    s.view((0, 0), (m, m)).into_owned()
}

fn zero_padded(w: &BeamWeights, len: usize) -> BeamWeights {
    let mut v = crate::beamform::CVector::zeros(len);
    v.rows_mut(0, w.len()).copy_from(&w.w);
    BeamWeights { w: v }
}

/// Weights of one method for one bin from a stacked covariance `s`.
struct BinSolver<'a> {
    m: usize,
    kappa0: f64,
    s_v: &'a CMatrix,
}

struct BinWeights {
    weights: Vec<BeamWeights>,
    residuals: Vec<f64>,
    condition: f64,
}

impl BinSolver<'_> {
    fn solve(&self, s: &CMatrix, methods: &[Method], oracle: Option<&RtfVector>) -> Result<BinWeights> {
        let m = self.m;
        let stacked = s.nrows();
        let c = stacked / m;
        let spatial = diagonal_load(&spatial_block(s, m), self.kappa0)?;
        let mut condition = spatial.condition;
        let estimated = if methods.iter().any(|x| !x.uses_oracle_rtf()) {
            let s_v = diagonal_load(self.s_v, self.kappa0)?;
            Some(estimate_rtf_cw(&spatial.matrix, &s_v.matrix)?)
        } else {
            None
        };
        let full = if c > 1 && methods.iter().any(|x| x.is_cyclic()) {
            let l = diagonal_load(s, self.kappa0)?;
            condition = condition.max(l.condition);
            Some(l.matrix)
        } else {
            None
        };
        let mut weights = Vec::with_capacity(methods.len());
        let mut residuals = Vec::with_capacity(methods.len());
        for &method in methods {
            let a = if method.uses_oracle_rtf() { oracle } else { estimated.as_ref() }
                .ok_or_else(|| Error::InvalidArgument("missing RTF".into()))?;
            let a0 = a.padded(c);
            let w = match (&full, method.is_cyclic()) {
                (Some(sf), true) => cmvdr_weights(sf, &a0)?,
                _ => zero_padded(&mvdr_weights(&spatial.matrix, a)?, stacked),
            };
            residuals.push(w.constraint_residual(&a0));
            weights.push(w);
        }
        Ok(BinWeights { weights, residuals, condition })
    }
}

/// Runs every requested method on the same input and returns their outputs.
pub fn enhance(input: &EnhanceInput<'_>, cfg: &EnhanceConfig, methods: &[Method]) -> Result<Enhancement> {
    check_input(input, cfg, methods)?;
    let k = cfg.stft.fft_size;
    let m = input.noisy.n_channels();
    let n = input.noisy.len();
    let fs = input.noisy.sample_rate_hz();

    let (mod_sets, resonant, candidates) = if methods.iter().any(|x| x.is_cyclic()) {
        modulation_sets(input, cfg)?
    } else {
        (null_modulation_sets(k), None, vec![0.0])
    };

    // Leading padding keeps every output sample covered by a full set of frames.
    let pad = k - cfg.stft.hop;
    let x = input.noisy.zero_pad(pad, pad);
    let stack = build_multiband_stack(&x, &mod_sets, &cfg.stft)?;
    let noise = input.noise_only.map(|v| v.zero_pad(pad, pad));
    let s_v = noise_covariances(noise.as_ref(), m, &cfg.stft)?;

    let (spectra, residuals, n_weights, max_condition) = match cfg.covariance {
        CovarianceMode::Batch => run_batch(&stack, &s_v, cfg, methods, input.oracle_rtf)?,
        CovarianceMode::Recursive => run_recursive(&stack, &s_v, cfg, methods, input.oracle_rtf)?,
    };

    let mut outputs = Vec::with_capacity(methods.len());
    for (i, &method) in methods.iter().enumerate() {
        let y = istft(&spectra[i])?;
        let samples: Vec<f64> = y.real_channel(0)[pad..pad + n].to_vec();
        outputs.push(MethodOutput {
            method,
            signal: SignalBuffer::mono(&samples, fs)?,
            max_constraint_residual: residuals[i],
            n_weight_vectors: n_weights,
        });
    }

    let max_c = mod_sets.iter().map(|s| s.len()).max().unwrap_or(1);
    let mut hist = vec![0; max_c + 1];
    for s in &mod_sets {
        hist[s.len()] += 1;
    }
    Ok(Enhancement {
        outputs,
        diagnostics: EnhanceDiagnostics {
            resonant,
            candidates_hz: candidates,
            set_size_histogram: hist,
            n_shifted_stfts: stack.n_stfts,
            max_condition_number: max_condition,
        },
        mod_sets,
    })
}

type RunResult = (Vec<StftTensor>, Vec<f64>, usize, f64);

fn empty_spectra(stack: &MultibandStack, count: usize) -> Vec<StftTensor> {
    (0..count)
        .map(|_| StftTensor {
            coeffs: Array3::zeros((1, stack.n_bins(), stack.n_frames)),
            config: stack.config,
            sample_rate_hz: stack.sample_rate_hz,
        })
        .collect()
}

fn beamform_frame(w: &BeamWeights, z: ndarray::ArrayView1<'_, Complex64>) -> Complex64 {
    w.w.iter().zip(z.iter()).map(|(a, b)| a.conj() * b).sum()
}

fn run_batch(
    stack: &MultibandStack,
    s_v: &[CMatrix],
    cfg: &EnhanceConfig,
    methods: &[Method],
    oracle: Option<&[RtfVector]>,
) -> Result<RunResult> {
    let cov = estimate_cov_batch(stack)?;
    let m = stack.n_channels;
    let per_bin: Vec<BinWeights> = (0..stack.n_bins())
        .into_par_iter()
        .map(|k| {
            let solver = BinSolver { m, kappa0: cfg.kappa0, s_v: &s_v[k] };
            solver.solve(&cov.mats[k], methods, oracle.map(|o| &o[k]))
        })
        .collect::<Result<_>>()?;
    let mut spectra = empty_spectra(stack, methods.len());
    let mut residuals = vec![0.0f64; methods.len()];
    let mut max_condition = 0.0f64;
    for (k, bw) in per_bin.iter().enumerate() {
        max_condition = max_condition.max(bw.condition);
        for (i, w) in bw.weights.iter().enumerate() {
            residuals[i] = residuals[i].max(bw.residuals[i]);
            for l in 0..stack.n_frames {
                spectra[i].coeffs[[0, k, l]] = beamform_frame(w, stack.vector(k, l));
            }
        }
    }
    Ok((spectra, residuals, stack.n_bins(), max_condition))
}

fn run_recursive(
    stack: &MultibandStack,
    s_v: &[CMatrix],
    cfg: &EnhanceConfig,
    methods: &[Method],
    oracle: Option<&[RtfVector]>,
) -> Result<RunResult> {
    let m = stack.n_channels;
    let per_bin: Vec<(Vec<Vec<Complex64>>, Vec<f64>, f64)> = (0..stack.n_bins())
        .into_par_iter()
        .map(|k| {
            let solver = BinSolver { m, kappa0: cfg.kappa0, s_v: &s_v[k] };
            let mut s: Option<CMatrix> = None;
            let mut out = vec![vec![Complex64::default(); stack.n_frames]; methods.len()];
            let mut res = vec![0.0f64; methods.len()];
            let mut cond = 0.0f64;
            for l in 0..stack.n_frames {
                let z = stack.vector(k, l);
                let next = recursive_update(s.as_ref(), &z.to_vec(), cfg.smoothing)?;
                let bw = solver.solve(&next, methods, oracle.map(|o| &o[k]))?;
                cond = cond.max(bw.condition);
                for (i, w) in bw.weights.iter().enumerate() {
                    res[i] = res[i].max(bw.residuals[i]);
                    out[i][l] = beamform_frame(w, z);
                }
                s = Some(next);
            }
            Ok((out, res, cond))
        })
        .collect::<Result<_>>()?;
    let mut spectra = empty_spectra(stack, methods.len());
    let mut residuals = vec![0.0f64; methods.len()];
    let mut max_condition = 0.0f64;
    for (k, (out, res, cond)) in per_bin.iter().enumerate() {
        max_condition = max_condition.max(*cond);
        for i in 0..methods.len() {
            residuals[i] = residuals[i].max(res[i]);
            for l in 0..stack.n_frames {
                spectra[i].coeffs[[0, k, l]] = out[i][l];
            }
        }
    }
    Ok((spectra, residuals, stack.n_bins() * stack.n_frames, max_condition))
}
