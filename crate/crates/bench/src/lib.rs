//! Fixtures shared by the benchmarks.

use cmvdr_core::beamform::CMatrix;
use cmvdr_core::synth::{mix_scene, Scene};
use cmvdr_core::SceneConfig;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default two-microphone scene, two seconds at 16 kHz.
pub fn scene(seed: u64) -> Scene {
    mix_scene(&SceneConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).expect("default scene is valid")
}

/// Hermitian positive definite `n × n` matrix.
pub fn random_pd(n: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    &a * a.adjoint() + CMatrix::identity(n, n) * Complex64::new(0.01, 0.0)
}
