//! Cyclic MVDR beamforming for speech in cyclostationary noise.
//!
//! Noise with periodic statistics (engines, fans, instruments) is correlated
//! across frequencies separated by its resonant frequencies. The cyclic MVDR
//! stacks frequency-shifted copies of the array signal and minimizes output
//! power over space and frequency jointly, under a distortionless constraint
//! on the unshifted target.

pub mod beamform;
pub mod cyclospec;
pub mod error;
pub mod experiment;
mod fft;
pub mod metrics;
pub mod pipeline;
pub mod signal;
pub mod stft;
pub mod synth;
pub mod wav;

pub use beamform::{
    BeamWeights, MultibandStack, RtfVector, SingleChannelScenario, SpatialSpectralCov,
};
pub use cyclospec::{
    CoherenceEstimate, CyclicSpectrumEstimate, ModulationSet, PeakParams, ResonantFrequencySet,
};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, SummaryRow, SweepSummary, SweepVariable, TrialRow};
pub use fft::fft_convolve;
pub use metrics::{improvement, si_sdr, MetricReport};
pub use pipeline::{CovarianceMode, EnhanceConfig, EnhanceInput, Enhancement, Method, ShiftStrategy};
pub use signal::SignalBuffer;
pub use stft::{StftConfig, StftTensor, WindowKind};
pub use synth::{HarmonicNoiseParams, RirParams, Scene, SceneConfig};
