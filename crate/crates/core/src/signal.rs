//! Mono time-domain signals: WAV I/O, mixing and resampling.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// A sampled mono signal.
///
/// Always holds at least one sample, every sample is finite and the sample
/// rate is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidSignal("signal must contain at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// All-zero signal of the given length.
    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Reads a PCM WAV file (8/16/24-bit integer or 32-bit float, mono or
/// stereo) into a mono signal. Stereo frames are averaged.
pub fn read_wav(path: impl AsRef<Path>) -> Result<TimeSignal> {
    let reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels != 1 && channels != 2 {
        return Err(Error::UnsupportedFormat(format!("{channels} channels (expected 1 or 2)")));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24)) => {
            let scale = (1i64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (format, bits) => {
            return Err(Error::UnsupportedFormat(format!("{bits}-bit {format:?} samples")));
        }
    };

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved.chunks_exact(2).map(|lr| 0.5 * (lr[0] + lr[1])).collect()
    };
    TimeSignal::new(samples, spec.sample_rate)
}

/// Quantises one sample to a 16-bit code, clipping to the representable range.
pub fn quantize_i16(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Writes a 16-bit PCM mono WAV file. Samples outside [-1, 1) are clipped.
pub fn write_wav(path: impl AsRef<Path>, signal: &TimeSignal) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for &s in &signal.samples {
        writer.write_sample(quantize_i16(s))?;
    }
    writer.finalize()?;
    Ok(())
}

/// Sums signals sample-wise (linear instantaneous mixing, no renormalisation).
pub fn mix(signals: &[TimeSignal]) -> Result<TimeSignal> {
    let first = signals
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot mix an empty list of signals".into()))?;
    let mut out = vec![0.0; first.len()];
    for (i, s) in signals.iter().enumerate() {
        if s.len() != first.len() {
            return Err(Error::DimensionMismatch(format!(
                "signal {i} has {} samples, expected {}",
                s.len(),
                first.len()
            )));
        }
        if s.sample_rate != first.sample_rate {
            return Err(Error::DimensionMismatch(format!(
                "signal {i} has sample rate {}, expected {}",
                s.sample_rate, first.sample_rate
            )));
        }
        for (acc, x) in out.iter_mut().zip(&s.samples) {
            *acc += x;
        }
    }
    TimeSignal::new(out, first.sample_rate)
}

/// Linear-interpolation resampling. No anti-aliasing filter is applied.
///
/// The output has `round(T * target / source)` samples (at least one).
pub fn resample(signal: &TimeSignal, target_rate: u32) -> Result<TimeSignal> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target sample rate must be positive".into()));
    }
    if target_rate == signal.sample_rate {
        return Ok(signal.clone());
    }
    let ratio = signal.sample_rate as f64 / target_rate as f64;
    let out_len = ((signal.len() as f64 / ratio).round() as usize).max(1);
    let src = &signal.samples;
    let last = src.len() - 1;
    let out = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = (pos - lo as f64).clamp(0.0, 1.0);
            src[lo] + (src[hi] - src[lo]) * frac
        })
        .collect();
    TimeSignal::new(out, target_rate)
}
