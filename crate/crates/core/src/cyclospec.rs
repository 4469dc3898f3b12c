//! Cyclic spectrum and spectral coherence estimation with the time-averaged
//! cyclic periodogram, resonant-frequency detection from a zero-padded
//! periodogram, and selection of per-bin frequency-shift sets.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::fft;
use crate::signal::SignalBuffer;
use crate::stft::{modulate, stft, StftConfig};

/// Cyclic spectrum `Ŝ_yx(α_p, ω_k)`, one row per shift.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicSpectrumEstimate {
    pub values: Array2<Complex64>,
    pub shifts_hz: Vec<f64>,
    pub n_frames: usize,
}

/// Spectral coherence in `[0, 1]`, one row per shift.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceEstimate {
    pub values: Array2<f64>,
    pub shifts_hz: Vec<f64>,
    pub regularization: f64,
}

impl CoherenceEstimate {
    pub fn n_bins(&self) -> usize {
        self.values.ncols()
    }
}

/// Averaged cyclic periodogram. `y` is a `[K × L]` STFT; `shifted[p]` is the
/// STFT of the signal moved so that bin `k` reads `x(ω_k − α_p)`.
pub fn acp_estimate(
    y: ArrayView2<'_, Complex64>,
    shifted: &[ArrayView2<'_, Complex64>],
    shifts_hz: &[f64],
) -> Result<CyclicSpectrumEstimate> {
    if shifted.len() != shifts_hz.len() {
        return invalid_arg("one shifted STFT per shift is required");
    }
    let (k, l) = y.dim();
    if l == 0 {
        return invalid_arg("no frames");
    }
    let mut values = Array2::zeros((shifts_hz.len(), k));
    for (p, x) in shifted.iter().enumerate() {
        if x.dim() != (k, l) {
            return invalid_arg(format!(
                "shifted STFT {p} has shape {:?}, expected {:?}",
                x.dim(),
                (k, l)
            ));
        }
        for bin in 0..k {
            let acc: Complex64 = y.row(bin).iter().zip(x.row(bin)).map(|(a, b)| a * b.conj()).sum();
            values[[p, bin]] = acc / l as f64;
        }
    }
    Ok(CyclicSpectrumEstimate { values, shifts_hz: shifts_hz.to_vec(), n_frames: l })
}

/// Welch PSD: frame-averaged squared magnitude of a `[K × L]` STFT.
pub fn psd(x: ArrayView2<'_, Complex64>) -> Vec<f64> {
    let l = x.ncols().max(1) as f64;
    x.rows().into_iter().map(|r| r.iter().map(|c| c.norm_sqr()).sum::<f64>() / l).collect()
}

fn regularize(psd: &[f64], d: f64) -> Vec<f64> {
    let floor = psd.iter().cloned().fold(0.0, f64::max) / d;
    psd.iter().map(|&v| v.max(floor)).collect()
}

/// Coherence `|Ŝ_yx|² / (S̃_y(ω_k) S̃_x(ω_k − α))` with each PSD floored at
/// its maximum divided by `d`.
pub fn coherence_estimate(
    s_yx: &CyclicSpectrumEstimate,
    y_psd: &[f64],
    shifted_psds: &[Vec<f64>],
    d: f64,
) -> Result<CoherenceEstimate> {
    if !(d > 1.0) {
        return invalid_arg(format!("regularization D must exceed 1, got {d}"));
    }
    let (p, k) = s_yx.values.dim();
    if y_psd.len() != k || shifted_psds.len() != p || shifted_psds.iter().any(|v| v.len() != k) {
        return invalid_arg("PSD dimensions do not match the cyclic spectrum");
    }
    let sy = regularize(y_psd, d);
    let mut values = Array2::zeros((p, k));
    for (row, sx_raw) in shifted_psds.iter().enumerate() {
        let sx = regularize(sx_raw, d);
        for bin in 0..k {
            let den = sy[bin] * sx[bin];
            let g = if den > 0.0 { s_yx.values[[row, bin]].norm_sqr() / den } else { 0.0 };
            values[[row, bin]] = g.clamp(0.0, 1.0);
        }
    }
    Ok(CoherenceEstimate { values, shifts_hz: s_yx.shifts_hz.clone(), regularization: d })
}

/// Unwindowed periodogram `|DFT_kv(x)|²` with zero-padding to `kv` points.
pub fn periodogram(x: &[f64], kv: usize) -> Result<Vec<f64>> {
    if kv < x.len() || kv == 0 {
        return invalid_arg(format!("periodogram size {kv} smaller than signal length {}", x.len()));
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(kv, Complex64::default());
    fft::forward(kv).process(&mut buf);
    Ok(buf.iter().map(|c| c.norm_sqr()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakParams {
    pub fft_size: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub min_distance_hz: f64,
    pub max_peak_ratio: f64,
    pub max_peaks: usize,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            fft_size: 1 << 17,
            f_min_hz: 20.0,
            f_max_hz: 2500.0,
            min_distance_hz: 20.0,
            max_peak_ratio: 1e4,
            max_peaks: 20,
        }
    }
}

impl PeakParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min_hz < self.f_max_hz) {
            return invalid_arg("f_min must be below f_max");
        }
        if self.max_peaks == 0 {
            return invalid_arg("at least one peak must be allowed");
        }
        if !(self.max_peak_ratio > 0.0) || self.min_distance_hz < 0.0 {
            return invalid_arg("peak ratio must be positive and distance non-negative");
        }
        Ok(())
    }
}

/// Estimated resonant frequencies, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonantFrequencySet {
    pub freqs_hz: Vec<f64>,
    pub peak_amplitudes: Vec<f64>,
    pub params: PeakParams,
    /// Grid spacing of the periodogram the peaks came from.
    pub resolution_hz: f64,
}

impl ResonantFrequencySet {
    /// A set of frequencies known in advance (no detection).
    pub fn known(freqs_hz: &[f64], resolution_hz: f64) -> Self {
        let mut freqs = freqs_hz.to_vec();
        freqs.sort_by(f64::total_cmp);
        Self {
            peak_amplitudes: vec![1.0; freqs.len()],
            freqs_hz: freqs,
            params: PeakParams::default(),
            resolution_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }
}

/// Peak picking on a periodogram of length `K_v`. Peaks are local maxima in
/// the admissible band, at least `max / max_peak_ratio` high, thinned by
/// minimum distance in descending amplitude order and capped at `max_peaks`.
pub fn find_resonant_frequencies(
    spectrum: &[f64],
    fs: f64,
    params: &PeakParams,
) -> Result<ResonantFrequencySet> {
    params.validate()?;
    let kv = spectrum.len();
    if kv < 3 {
        return invalid_arg("spectrum too short for peak picking");
    }
    let df = fs / kv as f64;
    let half = kv / 2;
    let global_max = spectrum[..=half].iter().cloned().fold(0.0, f64::max);
    let threshold = global_max / params.max_peak_ratio;
    let mut peaks: Vec<(usize, f64)> = (1..half)
        .filter(|&i| spectrum[i] > spectrum[i - 1] && spectrum[i] >= spectrum[i + 1])
        .map(|i| (i, spectrum[i]))
        .filter(|&(i, a)| {
            let f = i as f64 * df;
            f >= params.f_min_hz && f <= params.f_max_hz && a >= threshold && a > 0.0
        })
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut kept: Vec<(usize, f64)> = Vec::new();
    for (i, a) in peaks {
        let f = i as f64 * df;
        if kept.iter().all(|&(j, _)| (j as f64 * df - f).abs() >= params.min_distance_hz) {
            kept.push((i, a));
            if kept.len() == params.max_peaks {
                break;
            }
        }
    }
    kept.sort_by_key(|p| p.0);
    Ok(ResonantFrequencySet {
        freqs_hz: kept.iter().map(|&(i, _)| i as f64 * df).collect(),
        peak_amplitudes: kept.iter().map(|&(_, a)| a).collect(),
        params: *params,
        resolution_hz: df,
    })
}

/// Periodogram of `x` followed by peak picking.
pub fn estimate_resonant_frequencies(
    x: &[f64],
    fs: f64,
    params: &PeakParams,
) -> Result<ResonantFrequencySet> {
    let spec = periodogram(x, params.fft_size)?;
    find_resonant_frequencies(&spec, fs, params)
}

/// Integer-multiple candidates `{−r·α₁ : r = 0..q}`.
pub fn candidate_shifts_integer(alpha1_hz: f64, q: usize) -> Vec<f64> {
    (0..q.max(1)).map(|r| if r == 0 { 0.0 } else { -(r as f64) * alpha1_hz }).collect()
}

/// All pairwise differences of `freqs`, ascending, with differences closer
/// than `merge_tol_hz` merged. The result contains 0 and is symmetric about it.
pub fn difference_shifts(freqs: &[f64], merge_tol_hz: f64) -> Vec<f64> {
    let mut pos: Vec<f64> = Vec::new();
    for (i, a) in freqs.iter().enumerate() {
        for b in &freqs[i + 1..] {
            let d = (a - b).abs();
            if d > merge_tol_hz {
                pos.push(d);
            }
        }
    }
    pos.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::new();
    for d in pos {
        match merged.last() {
            Some(&last) if d - last <= merge_tol_hz => {}
            _ => merged.push(d),
        }
    }
    let mut out: Vec<f64> = merged.iter().rev().map(|d| -d).collect();
    out.push(0.0);
    out.extend(merged);
    out
}

/// Difference-based candidates from detected resonant frequencies, merged at
/// the periodogram resolution.
pub fn candidate_shifts_difference(set: &ResonantFrequencySet) -> Vec<f64> {
    difference_shifts(&set.freqs_hz, set.resolution_hz)
}

/// Frequency shifts used at one STFT bin. The first shift is always 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationSet {
    pub bin: usize,
    pub shifts_hz: Vec<f64>,
    pub coherences: Vec<f64>,
}

impl ModulationSet {
    pub fn null(bin: usize) -> Self {
        Self { bin, shifts_hz: vec![0.0], coherences: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.shifts_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts_hz.is_empty()
    }
}

pub fn null_modulation_sets(n_bins: usize) -> Vec<ModulationSet> {
    (0..n_bins).map(ModulationSet::null).collect()
}

/// Coherence of channel 0 of `x` with its shifted copies, for every candidate.
/// Duplicate candidates are evaluated once.
pub fn coherence_map(
    candidates: &[f64],
    x: &SignalBuffer,
    cfg: &StftConfig,
    d: f64,
) -> Result<CoherenceEstimate> {
    let reference = x.select_channel(0);
    let base = stft(&reference, cfg)?;
    let y = base.channel(0);
    let y_psd = psd(y);
    let mut shifts: Vec<f64> = Vec::with_capacity(candidates.len());
    for &c in candidates {
        if !shifts.contains(&c) {
            shifts.push(c);
        }
    }
    let rows: Vec<(Vec<Complex64>, Vec<f64>)> = shifts
        .par_iter()
        .map(|&phi| -> Result<(Vec<Complex64>, Vec<f64>)> {
            let shifted = if phi == 0.0 { base.clone() } else { stft(&modulate(&reference, phi), cfg)? };
            let xs = shifted.channel(0);
            let s = acp_estimate(y, &[xs], &[phi])?;
            Ok((s.values.row(0).to_vec(), psd(xs)))
        })
        .collect::<Result<_>>()?;
    let k = y.nrows();
    let values = Array2::from_shape_fn((shifts.len(), k), |(p, b)| rows[p].0[b]);
    let s = CyclicSpectrumEstimate { values, shifts_hz: shifts, n_frames: y.ncols() };
    let psds: Vec<Vec<f64>> = rows.into_iter().map(|r| r.1).collect();
    coherence_estimate(&s, &y_psd, &psds, d)
}

/// Per bin: nonzero shifts with coherence at least `gamma_min`, keeping the
/// `c_max` most coherent, placed after the null shift.
pub fn select_modulation_sets(
    coherence: &CoherenceEstimate,
    gamma_min: f64,
    c_max: usize,
) -> Vec<ModulationSet> {
    let zero_row = coherence.shifts_hz.iter().position(|&s| s == 0.0);
    (0..coherence.n_bins())
        .map(|bin| {
            let mut picks: Vec<(f64, f64)> = coherence
                .shifts_hz
                .iter()
                .enumerate()
                .filter(|&(_, &s)| s != 0.0)
                .map(|(p, &s)| (s, coherence.values[[p, bin]]))
                .filter(|&(_, g)| g >= gamma_min)
                .collect();
            picks.sort_by(|a, b| b.1.total_cmp(&a.1));
            picks.truncate(c_max);
            let g0 = zero_row.map_or(1.0, |p| coherence.values[[p, bin]]);
            let mut set = ModulationSet { bin, shifts_hz: vec![0.0], coherences: vec![g0] };
            for (s, g) in picks {
                set.shifts_hz.push(s);
                set.coherences.push(g);
            }
            set
        })
        .collect()
}

/// Coherence-based filtering of candidate shifts on the reference channel.
pub fn coherence_filter(
    candidates: &[f64],
    x: &SignalBuffer,
    cfg: &StftConfig,
    gamma_min: f64,
    c_max: usize,
    d: f64,
) -> Result<Vec<ModulationSet>> {
    let nonzero: Vec<f64> = candidates.iter().cloned().filter(|&c| c != 0.0).collect();
    if nonzero.is_empty() || c_max == 0 {
        return Ok(null_modulation_sets(cfg.fft_size));
    }
    let map = coherence_map(candidates, x, cfg, d)?;
    Ok(select_modulation_sets(&map, gamma_min, c_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tones(freqs: &[(f64, f64)], n: usize, fs: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                freqs
                    .iter()
                    .map(|&(f, a)| a * (2.0 * PI * f * i as f64 / fs).sin())
                    .sum()
            })
            .collect()
    }

    /// Hann-tapered tones, so that rectangular-periodogram sidelobes stay
    /// below the peak-ratio threshold.
    fn tapered(freqs: &[(f64, f64)], n: usize, fs: f64) -> Vec<f64> {
        tones(freqs, n, fs)
            .into_iter()
            .enumerate()
            .map(|(i, v)| v * (PI * i as f64 / n as f64).sin().powi(2))
            .collect()
    }

    #[test]
    fn periodogram_peaks_at_tone() {
        let fs = 16000.0;
        let kv = 1 << 15;
        let x = tones(&[(440.0, 1.0)], 8000, fs);
        let p = periodogram(&x, kv).unwrap();
        let best = (0..kv / 2).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(best, (440.0 / fs * kv as f64).round() as usize);
    }

    #[test]
    fn periodogram_dc_peaks_at_zero() {
        let p = periodogram(&[1.0; 100], 256).unwrap();
        let best = (0..256).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn periodogram_rejects_short_size() {
        assert!(periodogram(&[0.0; 10], 8).is_err());
    }

    #[test]
    fn two_tones_detected() {
        let fs = 16000.0;
        let params = PeakParams { fft_size: 1 << 16, ..PeakParams::default() };
        let x = tapered(&[(440.0, 1.0), (660.0, 1.0)], 16000, fs);
        let set = estimate_resonant_frequencies(&x, fs, &params).unwrap();
        assert_eq!(set.len(), 2);
        let res = fs / params.fft_size as f64;
        assert!((set.freqs_hz[0] - 440.0).abs() <= res);
        assert!((set.freqs_hz[1] - 660.0).abs() <= res);
    }

    #[test]
    fn close_tones_suppressed_by_distance() {
        let fs = 16000.0;
        let params = PeakParams { fft_size: 1 << 16, ..PeakParams::default() };
        let x = tapered(&[(440.0, 1.0), (450.0, 0.5)], 16000, fs);
        let set = estimate_resonant_frequencies(&x, fs, &params).unwrap();
        assert_eq!(set.len(), 1);
        assert!((set.freqs_hz[0] - 440.0).abs() <= fs / params.fft_size as f64);
    }

    #[test]
    fn silence_yields_no_peaks() {
        let set = estimate_resonant_frequencies(&[0.0; 1000], 16000.0, &PeakParams::default()).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn peak_count_capped() {
        let fs = 16000.0;
        let comps: Vec<(f64, f64)> = (1..=10).map(|p| (100.0 * p as f64, 1.0 + p as f64)).collect();
        let params = PeakParams { fft_size: 1 << 15, max_peaks: 4, ..PeakParams::default() };
        let set = estimate_resonant_frequencies(&tapered(&comps, 16000, fs), fs, &params).unwrap();
        assert_eq!(set.len(), 4);
        // The four strongest are the top harmonics.
        for (f, want) in set.freqs_hz.iter().zip([700.0, 800.0, 900.0, 1000.0]) {
            assert!((f - want).abs() < 1.0);
        }
    }

    #[test]
    fn integer_candidates() {
        assert_eq!(candidate_shifts_integer(100.0, 3), vec![0.0, -100.0, -200.0]);
        assert_eq!(candidate_shifts_integer(37.0, 1), vec![0.0]);
    }

    #[test]
    fn difference_candidates() {
        let set = ResonantFrequencySet::known(&[100.0, 200.0, 310.0], 0.1);
        assert_eq!(
            candidate_shifts_difference(&set),
            vec![-210.0, -110.0, -100.0, 0.0, 100.0, 110.0, 210.0]
        );
        assert_eq!(candidate_shifts_difference(&ResonantFrequencySet::known(&[55.0], 0.1)), vec![0.0]);
    }

    #[test]
    fn difference_set_contains_integer_set_for_harmonics() {
        let f = 90.0;
        let set = ResonantFrequencySet::known(&[f, 2.0 * f, 3.0 * f], 0.01);
        let delta = candidate_shifts_difference(&set);
        for c in candidate_shifts_integer(f, 3) {
            assert!(delta.iter().any(|d| (d - c).abs() < 1e-9));
            assert!(delta.iter().any(|d| (d + c).abs() < 1e-9));
        }
    }

    #[test]
    fn coherence_of_signal_with_itself_is_one() {
        let fs = 16000.0;
        let x: Vec<f64> = tones(&[(300.0, 1.0), (1234.0, 0.3)], 8000, fs)
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.01 * ((i * 7919 % 101) as f64 - 50.0) / 50.0)
            .collect();
        let sig = SignalBuffer::mono(&x, fs).unwrap();
        let cfg = StftConfig::new(512, 128, crate::stft::WindowKind::SqrtHann).unwrap();
        let coh = coherence_map(&[0.0], &sig, &cfg, 1000.0).unwrap();
        let spec = stft(&sig, &cfg).unwrap();
        let p = psd(spec.channel(0));
        let floor = p.iter().cloned().fold(0.0, f64::max) / 1000.0;
        for (bin, pv) in p.iter().enumerate() {
            if *pv > floor {
                assert!((coh.values[[0, bin]] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_zero_psd_gives_zero_coherence() {
        let s = CyclicSpectrumEstimate { values: Array2::zeros((1, 4)), shifts_hz: vec![5.0], n_frames: 3 };
        let c = coherence_estimate(&s, &[0.0; 4], &[vec![0.0; 4]], 10.0).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
        assert!(coherence_estimate(&s, &[0.0; 4], &[vec![0.0; 4]], 1.0).is_err());
    }

    #[test]
    fn acp_rejects_mismatched_shapes() {
        let y = Array2::<Complex64>::zeros((4, 3));
        let x = Array2::<Complex64>::zeros((4, 2));
        assert!(acp_estimate(y.view(), &[x.view()], &[1.0]).is_err());
    }

    #[test]
    fn null_shift_always_first() {
        let values = Array2::from_shape_vec((3, 2), vec![1.0, 1.0, 0.9, 0.2, 0.7, 0.65]).unwrap();
        let coh = CoherenceEstimate { values, shifts_hz: vec![0.0, 50.0, -50.0], regularization: 1000.0 };
        let sets = select_modulation_sets(&coh, 0.6, 8);
        assert_eq!(sets[0].shifts_hz, vec![0.0, 50.0, -50.0]);
        assert_eq!(sets[1].shifts_hz, vec![0.0, -50.0]);
        let capped = select_modulation_sets(&coh, 0.6, 1);
        assert_eq!(capped[0].shifts_hz, vec![0.0, 50.0]);
        let none = select_modulation_sets(&coh, 0.95, 8);
        assert!(none.iter().all(|s| s.shifts_hz == vec![0.0]));
    }

    #[test]
    fn empty_candidates_give_null_sets() {
        let sig = SignalBuffer::mono(&[0.1; 4096], 16000.0).unwrap();
        let cfg = StftConfig::default();
        let sets = coherence_filter(&[0.0], &sig, &cfg, 0.6, 8, 1000.0).unwrap();
        assert_eq!(sets.len(), 2048);
        assert!(sets.iter().all(|s| s.shifts_hz == vec![0.0]));
    }
}
