//! Input signal sources cut into frames.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SignalSource {
    /// Seeded uniform noise in (-1, 1).
    White,
    Wav(std::path::PathBuf),
}

impl SignalSource {
    pub fn parse(spec: &str) -> Self {
        if spec.eq_ignore_ascii_case("white") {
            SignalSource::White
        } else {
            SignalSource::Wav(spec.into())
        }
    }
}

/// `frames` consecutive frames of `frame_len` samples.
pub fn load_signal(
    source: &SignalSource,
    sample_rate: u32,
    frame_len: usize,
    frames: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if frame_len == 0 {
        return Err(Error::config("frame length must be positive"));
    }
    let total = frame_len * frames;
    let mut samples = match source {
        SignalSource::White => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..total).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
        SignalSource::Wav(path) => read_wav(path, sample_rate)?,
    };
    if samples.len() < total {
        log::warn!(
            "signal has {} samples, {total} requested; padding with {} zero frames",
            samples.len(),
            (total - samples.len()) / frame_len
        );
    }
    samples.resize(total, 0.0);
    Ok(samples.chunks(frame_len).map(<[f64]>::to_vec).collect())
}

/// First channel of a 16-bit PCM or 32-bit float WAV file at `sample_rate`.
pub fn read_wav(path: &Path, sample_rate: u32) -> Result<Vec<f64>> {
    let fail = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => fail(format!("unreadable WAV ({other}); expected RIFF PCM16 or float32")),
    })?;
    let spec = reader.spec();
    if spec.sample_rate != sample_rate {
        return Err(fail(format!(
            "sample rate {} Hz does not match the configured {sample_rate} Hz (no resampling is done)",
            spec.sample_rate
        )));
    }
    let channels = spec.channels.max(1) as usize;
    let all: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(fail(format!(
                "unsupported sample format {fmt:?} {bits}-bit; expected PCM16 or float32"
            )))
        }
    }
    .map_err(|e| fail(format!("corrupt sample data: {e}")))?;
    Ok(all.into_iter().step_by(channels).collect())
}

/// Writes mono float32 samples.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in samples {
        w.write_sample(s as f32).map_err(wrap)?;
    }
    w.finalize().map_err(wrap)
}

/// Adds seeded uniform white noise at `snr_db`
/// relative to `frame`'s energy.
pub fn add_noise(frame: &mut [f64], snr_db: f64, rng: &mut ChaCha8Rng) {
    let power = frame.iter().map(|v| v * v).sum::<f64>() / frame.len().max(1) as f64;
    // Uniform(-a, a) has variance a^2 / 3.
    let amp = (3.0 * power / 10f64.powf(snr_db / 10.0)).sqrt();
    for v in frame.iter_mut() {
        *v += amp * rng.random_range(-1.0..1.0);
    }
}
