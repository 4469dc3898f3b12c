//! Scale-invariant signal-to-distortion ratio.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::signal::SignalBuffer;

/// Upper bound returned for (numerically) perfect estimates.
pub const SI_SDR_CAP_DB: f64 = 120.0;

/// SI-SDR in dB after mean removal, capped at [`SI_SDR_CAP_DB`].
pub fn si_sdr_slices(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return invalid_arg(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        ));
    }
    if reference.is_empty() {
        return invalid_arg("empty signals");
    }
    let n = reference.len() as f64;
    let me = estimate.iter().sum::<f64>() / n;
    let mr = reference.iter().sum::<f64>() / n;
    let s: Vec<f64> = reference.iter().map(|v| v - mr).collect();
    let e: Vec<f64> = estimate.iter().map(|v| v - me).collect();
    let ss: f64 = s.iter().map(|v| v * v).sum();
    if !(ss > 0.0) {
        return invalid_arg("reference is zero after mean removal");
    }
    let alpha = e.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / ss;
    let target: f64 = alpha * alpha * ss;
    let err: f64 = e.iter().zip(&s).map(|(a, b)| (a - alpha * b).powi(2)).sum();
    if err <= 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target <= 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / err).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

fn mono(x: &SignalBuffer, what: &str) -> Result<Vec<f64>> {
    if x.n_channels() != 1 {
        return invalid_arg(format!("{what} must have one channel, got {}", x.n_channels()));
    }
    Ok(x.real_channel(0))
}

pub fn si_sdr(estimate: &SignalBuffer, reference: &SignalBuffer) -> Result<f64> {
    si_sdr_slices(&mono(estimate, "estimate")?, &mono(reference, "reference")?)
}

/// `si_sdr(enhanced, target) − si_sdr(noisy, target)`.
pub fn improvement(noisy_ref: &SignalBuffer, enhanced: &SignalBuffer, target_ref: &SignalBuffer) -> Result<f64> {
    Ok(si_sdr(enhanced, target_ref)? - si_sdr(noisy_ref, target_ref)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub si_sdr_db: f64,
    pub si_sdr_improvement_db: f64,
    pub trial: usize,
    pub seed: u64,
}
