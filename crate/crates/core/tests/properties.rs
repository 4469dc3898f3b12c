//! Invariants over randomly drawn inputs.

use cmvdr_core::beamform::{
    distortionless_weights, diagonal_load, mvdr_weights, sample_covariance, CMatrix, CVector,
};
use cmvdr_core::cyclospec::{
    coherence_map, difference_shifts, find_resonant_frequencies, select_modulation_sets,
};
use cmvdr_core::metrics::si_sdr_slices;
use cmvdr_core::stft::{istft, modulate, num_frames, stft};
use cmvdr_core::{PeakParams, RtfVector, SignalBuffer, StftConfig, WindowKind};
use ndarray::Array2;
use num_complex::Complex64;
use proptest::collection::vec;
use proptest::prelude::*;

const FS: f64 = 16000.0;

fn small_stft() -> StftConfig {
    StftConfig::new(64, 16, WindowKind::SqrtHann).unwrap()
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

/// `n × n` matrix `B Bᴴ` with `B` of shape `n × r`; rank-deficient when `r < n`.
fn psd_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    (1..=n).prop_flat_map(move |r| {
        vec(complex(), n * r).prop_map(move |b| {
            let b = CMatrix::from_vec(n, r, b);
            &b * b.adjoint()
        })
    })
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn stft_round_trip(x in vec(-1.0..1.0f64, 64..400)) {
        let buf = SignalBuffer::mono(&x, FS).unwrap();
        let y = istft(&stft(&buf, &small_stft()).unwrap()).unwrap().real_channel(0);
        prop_assert!(y.len() >= x.len());
        // Sample 0 lies under the window's zero.
        for i in 1..x.len() {
            prop_assert!((y[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn modulation_is_undone_by_its_inverse(x in vec(-1.0..1.0f64, 1..300), alpha in -4000.0..4000.0f64) {
        let buf = SignalBuffer::mono(&x, FS).unwrap();
        let back = modulate(&modulate(&buf, alpha), -alpha);
        for (a, b) in back.channel(0).iter().zip(buf.channel(0)) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn frame_count_covers_the_signal(n in 1usize..5000, k in 1usize..600, r in 1usize..600) {
        let n = n.max(k);
        let l = num_frames(n, k, r).unwrap();
        prop_assert!((l - 1) * r + k >= n);
        if l >= 2 {
            prop_assert!((l - 2) * r + k < n);
        }
    }

    #[test]
    fn coherence_is_a_fraction(
        x in vec(-1.0..1.0f64, 200..600),
        shifts in vec(-3000.0..3000.0f64, 1..4),
        d in 1.0..1e4f64,
    ) {
        let mut candidates = vec![0.0];
        candidates.extend(shifts);
        let map = coherence_map(&candidates, &SignalBuffer::mono(&x, FS).unwrap(), &small_stft(), d).unwrap();
        prop_assert!(map.values.iter().all(|g| (0.0..=1.0 + 1e-12).contains(g)));
    }

    #[test]
    fn difference_set_is_symmetric_and_contains_zero(
        freqs in vec(20.0..2500.0f64, 0..12),
        tol in 0.0..5.0f64,
    ) {
        let d = difference_shifts(&freqs, tol);
        prop_assert!(d.contains(&0.0));
        prop_assert!(d.windows(2).all(|w| w[0] < w[1]));
        for s in &d {
            prop_assert!(d.contains(&-s));
        }
        let positive: Vec<f64> = d.iter().cloned().filter(|&s| s > 0.0).collect();
        prop_assert!(positive.iter().all(|&s| s > tol));
        prop_assert!(positive.windows(2).all(|w| w[1] - w[0] > tol));
    }

    #[test]
    fn modulation_sets_respect_threshold_and_cap(
        x in vec(-1.0..1.0f64, 200..500),
        shifts in vec(-2000.0..2000.0f64, 1..6),
        gamma in 0.0..1.0f64,
        raise in 0.0..0.5f64,
        c_max in 1usize..4,
    ) {
        let mut candidates = vec![0.0];
        candidates.extend(shifts);
        let map = coherence_map(&candidates, &SignalBuffer::mono(&x, FS).unwrap(), &small_stft(), 1000.0).unwrap();
        let sets = select_modulation_sets(&map, gamma, c_max);
        let stricter = select_modulation_sets(&map, gamma + raise, c_max);
        prop_assert_eq!(sets.len(), map.n_bins());
        for (k, (s, t)) in sets.iter().zip(&stricter).enumerate() {
            prop_assert_eq!(s.bin, k);
            prop_assert_eq!(s.shifts_hz[0], 0.0);
            prop_assert!(s.len() <= c_max + 1);
            prop_assert_eq!(s.shifts_hz.len(), s.coherences.len());
            prop_assert!(s.coherences[1..].iter().all(|&g| g >= gamma));
            prop_assert!(t.len() <= s.len());
        }
    }

    #[test]
    fn loading_caps_the_condition_number(s in (1usize..6).prop_flat_map(psd_matrix), kappa0 in 2.0..1e4f64) {
        let l = diagonal_load(&s, kappa0).unwrap();
        prop_assert!(l.delta >= 0.0);
        prop_assert!(l.condition <= kappa0 * (1.0 + 1e-9));
        let ev = l.matrix.clone().symmetric_eigenvalues();
        let (lo, hi) = ev.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(lo > 0.0);
        prop_assert!(hi / lo <= kappa0 * (1.0 + 1e-6));
        prop_assert!(max_abs(&(&l.matrix - l.matrix.adjoint())) <= 1e-12 * max_abs(&l.matrix).max(1.0));
    }

    #[test]
    fn weights_are_distortionless_and_optimal(
        s in (1usize..6).prop_flat_map(psd_matrix),
        c in vec(complex(), 6),
        u in vec(complex(), 6),
    ) {
        let n = s.nrows();
        let s = diagonal_load(&s, 100.0).unwrap().matrix;
        let c = CVector::from_vec(c[..n].to_vec());
        prop_assume!(c.norm() > 1e-3);
        let w = distortionless_weights(&s, &c).unwrap();
        prop_assert!(w.constraint_residual(&c) < 1e-10);
        // Any other feasible vector w + u with uᴴc = 0 has at least the same power.
        let u = CVector::from_vec(u[..n].to_vec());
        let u = &u - &c * (c.dotc(&u) / c.dotc(&c));
        let other = cmvdr_core::BeamWeights { w: &w.w + u };
        prop_assert!(other.constraint_residual(&c) < 1e-9);
        let p = w.output_power(&s);
        prop_assert!(other.output_power(&s) >= p * (1.0 - 1e-9) - 1e-12);
    }

    #[test]
    fn block_diagonal_stack_reduces_to_mvdr(
        blocks in (1usize..4, 1usize..4).prop_flat_map(|(m, c)| vec(psd_matrix(m), c)),
        a in vec(complex(), 3),
    ) {
        let m = blocks[0].nrows();
        let c = blocks.len();
        let mut s = CMatrix::zeros(m * c, m * c);
        for (i, b) in blocks.iter().enumerate() {
            let b = diagonal_load(b, 50.0).unwrap().matrix;
            s.view_mut((i * m, i * m), (m, m)).copy_from(&b);
        }
        let mut raw = vec![Complex64::new(1.0, 0.0)];
        raw.extend_from_slice(&a[..m - 1]);
        let rtf = RtfVector::from_unnormalized(&raw).unwrap();
        let cyc = distortionless_weights(&s, &rtf.padded(c)).unwrap();
        let plain = mvdr_weights(&s.view((0, 0), (m, m)).into_owned(), &rtf).unwrap();
        for i in 0..m * c {
            let expect = if i < m { plain.w[i] } else { Complex64::default() };
            prop_assert!((cyc.w[i] - expect).norm() < 1e-9 * (1.0 + plain.w.norm()));
        }
    }

    #[test]
    fn rtf_reference_entry_is_one(v in vec(complex(), 1..8), scale in complex()) {
        prop_assume!(v[0].norm() > 1e-6 && scale.norm() > 1e-6);
        let a = RtfVector::from_unnormalized(&v).unwrap();
        prop_assert_eq!(a.as_slice()[0], Complex64::new(1.0, 0.0));
        let scaled: Vec<Complex64> = v.iter().map(|x| x * scale).collect();
        let b = RtfVector::from_unnormalized(&scaled).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).norm() < 1e-9 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn sample_covariance_is_hermitian_psd(d in 1usize..5, frames in vec(complex(), 4..60)) {
        let l = frames.len() / d;
        prop_assume!(l >= 1);
        let z = Array2::from_shape_vec((l, d), frames[..l * d].to_vec()).unwrap();
        let s = sample_covariance(&z);
        prop_assert_eq!(&s, &s.adjoint());
        let ev = s.symmetric_eigenvalues();
        let top = ev.iter().cloned().fold(0.0, f64::max);
        prop_assert!(ev.iter().all(|&v| v >= -1e-12 * top.max(1.0)));
    }

    #[test]
    fn si_sdr_ignores_estimate_scale(
        pair in vec((-1.0..1.0f64, -1.0..1.0f64), 8..200),
        gain in 0.01..100.0f64,
    ) {
        let (s, e): (Vec<f64>, Vec<f64>) = pair.into_iter().unzip();
        let base = si_sdr_slices(&e, &s);
        prop_assume!(base.is_ok());
        let scaled: Vec<f64> = e.iter().map(|v| v * gain).collect();
        let ref_scaled: Vec<f64> = s.iter().map(|v| v * gain).collect();
        let base = base.unwrap();
        prop_assert!((si_sdr_slices(&scaled, &s).unwrap() - base).abs() < 1e-8);
        prop_assert!((si_sdr_slices(&e, &ref_scaled).unwrap() - base).abs() < 1e-8);
    }

    #[test]
    fn resonant_peaks_obey_band_spacing_and_count(
        spectrum in vec(0.0..1.0f64, 64..1024),
        f_min in 0.0..3000.0f64,
        width in 100.0..5000.0f64,
        spacing in 0.0..400.0f64,
        ratio in 1.0..1e4f64,
        cap in 1usize..10,
    ) {
        let params = PeakParams {
            fft_size: spectrum.len(),
            f_min_hz: f_min,
            f_max_hz: f_min + width,
            min_distance_hz: spacing,
            max_peak_ratio: ratio,
            max_peaks: cap,
        };
        let set = find_resonant_frequencies(&spectrum, FS, &params).unwrap();
        let global = spectrum[..=spectrum.len() / 2].iter().cloned().fold(0.0, f64::max);
        prop_assert!(set.len() <= cap);
        prop_assert_eq!(set.freqs_hz.len(), set.peak_amplitudes.len());
        prop_assert!(set.freqs_hz.iter().all(|&f| f >= f_min && f <= f_min + width));
        prop_assert!(set.freqs_hz.windows(2).all(|w| w[1] - w[0] >= spacing && w[1] > w[0]));
        prop_assert!(set.peak_amplitudes.iter().all(|&a| a >= global / ratio));
    }
}
