//! WAV input/output. Reads 16/24-bit PCM and 32-bit float, writes 32-bit float.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{invalid_arg, Result};
use crate::signal::SignalBuffer;

pub fn read_wav(path: impl AsRef<Path>) -> Result<SignalBuffer> {
    let mut reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => {
            reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?
        }
        (SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => return invalid_arg(format!("unsupported wav format {fmt:?} {bits}-bit")),
    };
    if channels == 0 || interleaved.is_empty() {
        return invalid_arg(format!("{} holds no audio", path.as_ref().display()));
    }
    let frames = interleaved.len() / channels;
    let chans: Vec<Vec<f64>> = (0..channels)
        .map(|c| (0..frames).map(|i| interleaved[i * channels + c]).collect())
        .collect();
    SignalBuffer::from_real(&chans, spec.sample_rate as f64)
}

/// Writes the real part of every channel as 32-bit float.
pub fn write_wav(path: impl AsRef<Path>, x: &SignalBuffer) -> Result<()> {
    let rate = x.sample_rate_hz().round();
    if rate < 1.0 || rate > u32::MAX as f64 {
        return invalid_arg("sample rate not representable in wav header");
    }
    let spec = WavSpec {
        channels: x.n_channels() as u16,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for n in 0..x.len() {
        for m in 0..x.n_channels() {
            writer.write_sample(x.samples()[[m, n]].re as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_mono_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate_hz: f64) -> Result<()> {
    write_wav(path, &SignalBuffer::mono(samples, sample_rate_hz)?)
}
