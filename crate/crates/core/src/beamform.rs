//! Spatial-spectral beamforming: multi-band stacking of frequency-shifted
//! STFTs, covariance estimation, diagonal loading, covariance-whitening RTF
//! estimation and distortionless (MVDR / cyclic MVDR) weights.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array2, Array3, ArrayView1};
use num_complex::Complex64;

use crate::cyclospec::ModulationSet;
use crate::error::{invalid_arg, Error, Result};
use crate::signal::SignalBuffer;
use crate::stft::{modulate, stft, StftConfig, StftTensor};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Stacked multi-band STFT. For bin `k` the stacked vector holds, block by
/// block, all `M` channels read at `ω_k − φ_c` for every shift `φ_c` in the
/// bin's modulation set (shift 0 first). Bins keep only their own `M·C_k`
/// entries.
#[derive(Debug, Clone)]
pub struct MultibandStack {
    /// Per bin, `[L × M·C_k]`.
    pub bins: Vec<Array2<Complex64>>,
    pub mod_sets: Vec<ModulationSet>,
    pub n_channels: usize,
    pub n_frames: usize,
    pub config: StftConfig,
    pub sample_rate_hz: f64,
    /// Distinct shifted STFTs that were computed.
    pub n_stfts: usize,
}

impl MultibandStack {
    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn vector(&self, k: usize, l: usize) -> ArrayView1<'_, Complex64> {
        self.bins[k].row(l)
    }

    pub fn set_size(&self, k: usize) -> usize {
        self.mod_sets[k].len()
    }
}

pub fn build_multiband_stack(
    x: &SignalBuffer,
    mod_sets: &[ModulationSet],
    cfg: &StftConfig,
) -> Result<MultibandStack> {
    if mod_sets.len() != cfg.fft_size {
        return invalid_arg(format!(
            "{} modulation sets given for {} bins",
            mod_sets.len(),
            cfg.fft_size
        ));
    }
    if mod_sets.iter().any(|s| s.shifts_hz.first() != Some(&0.0)) {
        return invalid_arg("every modulation set must start with the null shift");
    }
    let m = x.n_channels();
    // Distinct shifts and, for each, the (bin, block) slots it fills.
    let mut distinct: Vec<f64> = Vec::new();
    let mut slots: Vec<Vec<(usize, usize)>> = Vec::new();
    for (k, set) in mod_sets.iter().enumerate() {
        for (c, &phi) in set.shifts_hz.iter().enumerate() {
            let idx = match distinct.iter().position(|&d| d == phi) {
                Some(i) => i,
                None => {
                    distinct.push(phi);
                    slots.push(Vec::new());
                    distinct.len() - 1
                }
            };
            slots[idx].push((k, c));
        }
    }
    let mut bins: Vec<Array2<Complex64>> = Vec::with_capacity(mod_sets.len());
    let mut n_frames = 0;
    for (i, (&phi, slot)) in distinct.iter().zip(&slots).enumerate() {
        let spec = stft(&modulate(x, phi), cfg)?;
        if i == 0 {
            n_frames = spec.n_frames();
            bins = mod_sets.iter().map(|s| Array2::zeros((n_frames, m * s.len()))).collect();
        }
        for &(k, c) in slot {
            let dst = &mut bins[k];
            for ch in 0..m {
                for l in 0..n_frames {
                    dst[[l, c * m + ch]] = spec.coeffs[[ch, k, l]];
                }
            }
        }
    }
    Ok(MultibandStack {
        bins,
        mod_sets: mod_sets.to_vec(),
        n_channels: m,
        n_frames,
        config: *cfg,
        sample_rate_hz: x.sample_rate_hz(),
        n_stfts: distinct.len(),
    })
}

/// Per-bin spatial-spectral covariance matrices.
#[derive(Debug, Clone)]
pub struct SpatialSpectralCov {
    pub mats: Vec<CMatrix>,
    pub last_frame: Option<usize>,
    pub smoothing: Option<f64>,
}

impl SpatialSpectralCov {
    /// Leading `m × m` block of every bin (the unmodulated spatial covariance).
    pub fn spatial_blocks(&self, m: usize) -> Vec<CMatrix> {
        self.mats.iter().map(|s| s.view((0, 0), (m, m)).into_owned()).collect()
    }
}

fn hermitize(s: &mut CMatrix) {
    let n = s.nrows();
    for i in 0..n {
        s[(i, i)] = Complex64::new(s[(i, i)].re, 0.0);
        for j in i + 1..n {
            let v = (s[(i, j)] + s[(j, i)].conj()) * 0.5;
            s[(i, j)] = v;
            s[(j, i)] = v.conj();
        }
    }
}

/// Sample covariance `(1/L) Σ_ℓ z zᴴ` of the rows of an `[L × D]` block.
pub fn sample_covariance(frames: &Array2<Complex64>) -> CMatrix {
    let (l, d) = frames.dim();
    let z = CMatrix::from_fn(l, d, |r, c| frames[[r, c]]);
    let mut s = z.transpose() * z.conjugate();
    s /= Complex64::new(l.max(1) as f64, 0.0);
    hermitize(&mut s);
    s
}

/// Batch estimate over all frames of the stack.
pub fn estimate_cov_batch(stack: &MultibandStack) -> Result<SpatialSpectralCov> {
    if stack.n_frames == 0 {
        return invalid_arg("stack has no frames");
    }
    Ok(SpatialSpectralCov {
        mats: stack.bins.iter().map(sample_covariance).collect(),
        last_frame: Some(stack.n_frames - 1),
        smoothing: None,
    })
}

/// One recursive-averaging step `S ← β S + (1 − β) z zᴴ`. Without a previous
/// estimate the recursion starts from the identity scaled by the mean power of `z`.
pub fn recursive_update(prev: Option<&CMatrix>, z: &[Complex64], beta: f64) -> Result<CMatrix> {
    if !(0.0..1.0).contains(&beta) {
        return invalid_arg(format!("smoothing constant must lie in [0, 1), got {beta}"));
    }
    let d = z.len();
    let start = match prev {
        Some(p) if p.nrows() == d => p.clone(),
        Some(_) => return invalid_arg("frame length does not match covariance size"),
        None => {
            let power = z.iter().map(|c| c.norm_sqr()).sum::<f64>() / d.max(1) as f64;
            CMatrix::identity(d, d) * Complex64::new(power, 0.0)
        }
    };
    let zv = CVector::from_column_slice(z);
    let mut s = start * Complex64::new(beta, 0.0) + (&zv * zv.adjoint()) * Complex64::new(1.0 - beta, 0.0);
    hermitize(&mut s);
    Ok(s)
}

/// Recursive estimate for frame `frame` of the stack, continuing from `prev`.
pub fn estimate_cov_recursive(
    prev: Option<&SpatialSpectralCov>,
    stack: &MultibandStack,
    frame: usize,
    beta: f64,
) -> Result<SpatialSpectralCov> {
    if frame >= stack.n_frames {
        return invalid_arg("frame index out of range");
    }
    let mats = (0..stack.n_bins())
        .map(|k| {
            let z = stack.vector(k, frame).to_vec();
            recursive_update(prev.map(|p| &p.mats[k]), &z, beta)
        })
        .collect::<Result<_>>()?;
    Ok(SpatialSpectralCov { mats, last_frame: Some(frame), smoothing: Some(beta) })
}

#[derive(Debug, Clone)]
pub struct LoadedMatrix {
    pub matrix: CMatrix,
    pub delta: f64,
    /// Condition number after loading.
    pub condition: f64,
}

fn extreme_eigenvalues(s: &CMatrix) -> (f64, f64) {
    let ev = s.clone().symmetric_eigenvalues();
    let max = ev.iter().cloned().fold(f64::MIN, f64::max);
    let min = ev.iter().cloned().fold(f64::MAX, f64::min);
    (min, max)
}

/// Adds the smallest `δ I` that brings the condition number down to `kappa0`.
/// A zero matrix is loaded to the identity.
pub fn diagonal_load(s: &CMatrix, kappa0: f64) -> Result<LoadedMatrix> {
    if !(kappa0 > 1.0) {
        return invalid_arg(format!("target condition number must exceed 1, got {kappa0}"));
    }
    if s.nrows() != s.ncols() || s.nrows() == 0 {
        return invalid_arg("covariance must be square and non-empty");
    }
    let (min, max) = extreme_eigenvalues(s);
    if !max.is_finite() || !min.is_finite() {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    if max <= 0.0 {
        if min < -1e-300 {
            return Err(Error::Numerical("covariance is negative definite".into()));
        }
        let n = s.nrows();
        return Ok(LoadedMatrix { matrix: s + CMatrix::identity(n, n), delta: 1.0, condition: 1.0 });
    }
    if min < -1e-10 * max {
        return Err(Error::Numerical(format!("covariance has eigenvalue {min:e} (max {max:e})")));
    }
    let delta = ((max - kappa0 * min) / (kappa0 - 1.0)).max(0.0);
    let mut matrix = s.clone();
    for i in 0..matrix.nrows() {
        matrix[(i, i)] += Complex64::new(delta, 0.0);
    }
    Ok(LoadedMatrix { matrix, delta, condition: (max + delta) / (min + delta) })
}

/// Relative transfer function with the reference (channel 0) entry equal to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RtfVector(Vec<Complex64>);

impl RtfVector {
    /// Normalizes by the reference entry.
    pub fn from_unnormalized(v: &[Complex64]) -> Result<Self> {
        let r = *v.first().ok_or_else(|| Error::InvalidArgument("empty RTF".into()))?;
        if r.norm() <= f64::MIN_POSITIVE || !r.is_finite() {
            return Err(Error::Numerical("RTF reference entry vanishes".into()));
        }
        let mut a: Vec<Complex64> = v.iter().map(|x| x / r).collect();
        a[0] = Complex64::new(1.0, 0.0);
        Ok(Self(a))
    }

    pub fn unit(m: usize) -> Self {
        let mut a = vec![Complex64::default(); m.max(1)];
        a[0] = Complex64::new(1.0, 0.0);
        Self(a)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `[aᵀ 0ᵀ]ᵀ` of length `m · c`.
    pub fn padded(&self, c: usize) -> CVector {
        let mut v = CVector::zeros(self.0.len() * c.max(1));
        for (i, a) in self.0.iter().enumerate() {
            v[i] = *a;
        }
        v
    }
}

/// Covariance whitening: principal eigenvector of `L⁻¹ S_x L⁻ᴴ` with
/// `S_v = L Lᴴ`, mapped back through `L` and normalized to the reference.
pub fn estimate_rtf_cw(s_x: &CMatrix, s_v: &CMatrix) -> Result<RtfVector> {
    let m = s_x.nrows();
    if s_x.shape() != s_v.shape() || s_x.ncols() != m || m == 0 {
        return invalid_arg("covariances must be square with equal size");
    }
    if m == 1 {
        return Ok(RtfVector::unit(1));
    }
    let chol = Cholesky::new(s_v.clone())
        .ok_or_else(|| Error::Numerical("noise covariance is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&CMatrix::identity(m, m))
        .ok_or_else(|| Error::Numerical("singular noise factor".into()))?;
    let mut w = &linv * s_x * linv.adjoint();
    hermitize(&mut w);
    let eig = w.symmetric_eigen();
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty");
    let u = eig.eigenvectors.column(top).into_owned();
    let mut a = &l * u;
    let (imax, _) = a
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .expect("non-empty");
    let phase = a[imax].conj() / a[imax].norm();
    a *= phase;
    RtfVector::from_unnormalized(a.as_slice())
}

/// Beamforming weights for one bin; the output is `wᴴ z`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights {
    pub w: CVector,
}

impl BeamWeights {
    /// `|wᴴ a − 1|`.
    pub fn constraint_residual(&self, a: &CVector) -> f64 {
        (self.w.dotc(a) - Complex64::new(1.0, 0.0)).norm()
    }

    /// `wᴴ S w`.
    pub fn output_power(&self, s: &CMatrix) -> f64 {
        self.w.dotc(&(s * &self.w)).re
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn passthrough(n: usize) -> Self {
        let mut w = CVector::zeros(n);
        w[0] = Complex64::new(1.0, 0.0);
        Self { w }
    }
}

/// `w = S⁻¹c / (cᴴ S⁻¹ c)` via a Cholesky factorization of `S`.
pub fn distortionless_weights(s: &CMatrix, constraint: &CVector) -> Result<BeamWeights> {
    if s.nrows() != constraint.len() || s.ncols() != constraint.len() {
        return invalid_arg(format!(
            "covariance is {}x{} but constraint has {} entries",
            s.nrows(),
            s.ncols(),
            constraint.len()
        ));
    }
    let chol = Cholesky::new(s.clone())
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let u = chol.solve(constraint);
    let c = constraint.dotc(&u);
    if !(c.norm() > 0.0) || !c.is_finite() {
        return Err(Error::Numerical("degenerate distortionless denominator".into()));
    }
    // Dividing by the complex cᴴS⁻¹c (not its real part) keeps wᴴc = 1 to rounding.
    Ok(BeamWeights { w: u / c })
}

pub fn mvdr_weights(s: &CMatrix, a: &RtfVector) -> Result<BeamWeights> {
    distortionless_weights(s, &a.padded(1))
}

/// Cyclic MVDR weights for a stacked covariance of size `M·C`; `a0` is the
/// zero-padded target RTF.
pub fn cmvdr_weights(s: &CMatrix, a0: &CVector) -> Result<BeamWeights> {
    distortionless_weights(s, a0)
}

/// `ŝ(ω_k, ℓ) = wᴴ(ω_k) z(ω_k, ℓ)` for every bin and frame.
pub fn apply_beamformer(weights: &[BeamWeights], stack: &MultibandStack) -> Result<StftTensor> {
    if weights.len() != stack.n_bins() {
        return invalid_arg("one weight vector per bin is required");
    }
    let mut coeffs = Array3::zeros((1, stack.n_bins(), stack.n_frames));
    for (k, (w, z)) in weights.iter().zip(&stack.bins).enumerate() {
        if w.len() != z.ncols() {
            return invalid_arg(format!("bin {k}: {} weights for {} stacked entries", w.len(), z.ncols()));
        }
        for (l, row) in z.rows().into_iter().enumerate() {
            coeffs[[0, k, l]] = w.w.iter().zip(row.iter()).map(|(wi, zi)| wi.conj() * zi).sum();
        }
    }
    Ok(StftTensor { coeffs, config: stack.config, sample_rate_hz: stack.sample_rate_hz })
}

/// Single-microphone, two-band scenario used to analyse the cyclic MVDR in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleChannelScenario {
    pub rho: f64,
    pub sigma_s2: f64,
    pub sigma_i2: f64,
    pub sigma_v2: f64,
}

impl SingleChannelScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() <= 1.0) {
            return invalid_arg(format!("|rho| must be at most 1, got {}", self.rho));
        }
        if [self.sigma_s2, self.sigma_i2, self.sigma_v2].iter().any(|v| !(*v >= 0.0)) {
            return invalid_arg("powers must be non-negative");
        }
        Ok(())
    }

    /// Noisy covariance `S_s + S_i + S_v` and noise covariance `S_i + S_v`.
    pub fn covariances(&self) -> (CMatrix, CMatrix) {
        let c = |v: f64| Complex64::new(v, 0.0);
        let noise = CMatrix::from_row_slice(
            2,
            2,
            &[
                c(self.sigma_v2),
                c(self.rho * self.sigma_v2),
                c(self.rho * self.sigma_v2),
                c(self.sigma_i2 + self.sigma_v2),
            ],
        );
        let mut noisy = noise.clone();
        noisy[(0, 0)] += c(self.sigma_s2);
        (noisy, noise)
    }
}

/// `[1, −ρ σ_v² / (σ_v² + σ_i²)]`; `[1, 0]` when there is no noise to cancel.
pub fn closed_form_weights(sc: &SingleChannelScenario) -> Result<[f64; 2]> {
    sc.validate()?;
    let den = sc.sigma_v2 + sc.sigma_i2;
    if den == 0.0 {
        return Ok([1.0, 0.0]);
    }
    Ok([1.0, -sc.rho * sc.sigma_v2 / den])
}

/// Residual noise relative to the input noise, `η = 1 − ρ² / (1 + σ_i²/σ_v²)`.
pub fn residual_noise_factor(sc: &SingleChannelScenario) -> Result<f64> {
    sc.validate()?;
    if sc.sigma_v2 <= 0.0 {
        return invalid_arg("noise power must be positive");
    }
    Ok(1.0 - sc.rho * sc.rho / (1.0 + sc.sigma_i2 / sc.sigma_v2))
}

/// Absolute residual `wᴴ (S_i + S_v) w` for the given weights.
pub fn residual_noise_power(sc: &SingleChannelScenario, w: &BeamWeights) -> f64 {
    w.output_power(&sc.covariances().1)
}
