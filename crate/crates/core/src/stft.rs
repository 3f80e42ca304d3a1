//! Short-time Fourier transform, its normalised overlap-add inverse and the
//! amplitude spectrogram.
//!
//! Frame `n` covers samples `[n*hop, n*hop + size)`. The signal is
//! zero-padded at the tail so that the last partial frame is kept, and only
//! the `size/2 + 1` non-negative frequency bins are stored.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSignal;

/// Squared-window sums below this value are clamped during the inverse.
const OLA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Hann,
    Rectangular,
}

impl WindowKind {
    /// Periodic window of length `size`.
    pub fn coefficients(self, size: usize) -> Vec<f64> {
        let n = size as f64;
        (0..size)
            .map(|j| {
                let phase = 2.0 * PI * j as f64 / n;
                match self {
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

impl std::str::FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hamming" => Ok(WindowKind::Hamming),
            "hann" | "hanning" => Ok(WindowKind::Hann),
            "rectangular" | "rect" | "boxcar" => Ok(WindowKind::Rectangular),
            other => Err(Error::InvalidArgument(format!("unknown window kind `{other}`"))),
        }
    }
}

/// Window size, hop and shape of an STFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    size: usize,
    hop: usize,
    kind: WindowKind,
}

impl WindowSpec {
    /// `size` must be a power of two and `0 < hop <= size`.
    pub fn new(size: usize, hop: usize, kind: WindowKind) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("window size {size} is not a power of two")));
        }
        if hop == 0 || hop > size {
            return Err(Error::InvalidArgument(format!("hop {hop} must lie in 1..={size}")));
        }
        Ok(Self { size, hop, kind })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    /// Number of overlapping samples between consecutive frames.
    pub fn overlap(&self) -> usize {
        self.size - self.hop
    }

    pub fn num_bins(&self) -> usize {
        self.size / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len <= self.size {
            1
        } else {
            (len - self.size).div_ceil(self.hop) + 1
        }
    }
}

impl Default for WindowSpec {
    /// Hamming window of 1024 samples with 50% overlap.
    fn default() -> Self {
        Self { size: 1024, hop: 512, kind: WindowKind::Hamming }
    }
}

/// Entry-wise non-negative, finite real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegMatrix(Array2<f64>);

impl NonnegMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("matrix entry {v} is not finite and non-negative")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    /// Copy with every entry raised to at least `floor`.
    pub fn floored(&self, floor: f64) -> Self {
        Self(self.0.mapv(|v| v.max(floor)))
    }
}

/// Complex time-frequency matrix (bins x frames) with the parameters that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Array2<Complex64>,
    spec: WindowSpec,
    original_length: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn new(values: Array2<Complex64>, spec: WindowSpec, original_length: usize, sample_rate: u32) -> Result<Self> {
        let expected = (spec.num_bins(), spec.num_frames(original_length));
        if values.dim() != expected {
            return Err(Error::DimensionMismatch(format!(
                "spectrogram is {:?}, expected {:?} for length {original_length}",
                values.dim(),
                expected
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidArgument("spectrogram contains non-finite entries".into()));
        }
        Ok(Self { values, spec, original_length, sample_rate })
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn spec(&self) -> WindowSpec {
        self.spec
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.values.ncols()
    }

    /// Same framing, new values (used for masking).
    pub fn with_values(&self, values: Array2<Complex64>) -> Result<Self> {
        Self::new(values, self.spec, self.original_length, self.sample_rate)
    }
}

/// Forward STFT: `X[f, n] = sum_j w[j] x[n*hop + j] exp(-2i*pi*f*j/F)`.
pub fn stft(signal: &TimeSignal, spec: WindowSpec) -> Spectrogram {
    let size = spec.size();
    let frames = spec.num_frames(signal.len());
    let window = spec.kind().coefficients(size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(size);
    let samples = signal.samples();

    let mut values = Array2::<Complex64>::zeros((spec.num_bins(), frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for n in 0..frames {
        let start = n * spec.hop();
        for (j, slot) in buf.iter_mut().enumerate() {
            let x = samples.get(start + j).copied().unwrap_or(0.0);
            *slot = Complex64::new(window[j] * x, 0.0);
        }
        fft.process(&mut buf);
        for (f, z) in buf.iter().take(spec.num_bins()).enumerate() {
            values[[f, n]] = *z;
        }
    }
    Spectrogram { values, spec, original_length: signal.len(), sample_rate: signal.sample_rate() }
}

/// Inverse STFT by windowed overlap-add divided by the overlap-added squared
/// window, truncated to the original length.
pub fn istft(spectro: &Spectrogram) -> TimeSignal {
    let spec = spectro.spec;
    let size = spec.size();
    let half = size / 2;
    let frames = spectro.num_frames();
    let window = spec.kind().coefficients(size);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(size);

    let padded_len = (frames - 1) * spec.hop() + size;
    let mut acc = vec![0.0; padded_len];
    let mut wsum = vec![0.0; padded_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for n in 0..frames {
        for f in 0..=half {
            buf[f] = spectro.values[[f, n]];
        }
        buf[0].im = 0.0;
        buf[half].im = 0.0;
        for f in 1..half {
            buf[size - f] = buf[f].conj();
        }
        ifft.process(&mut buf);
        let start = n * spec.hop();
        for j in 0..size {
            acc[start + j] += window[j] * buf[j].re / size as f64;
            wsum[start + j] += window[j] * window[j];
        }
    }
    let samples = acc
        .iter()
        .zip(&wsum)
        .take(spectro.original_length)
        .map(|(a, w)| a / w.max(OLA_FLOOR))
        .collect();
    TimeSignal::new(samples, spectro.sample_rate).expect("overlap-add of finite frames is finite")
}

/// Element-wise modulus `V = |X|`.
pub fn amplitude(spectro: &Spectrogram) -> NonnegMatrix {
    NonnegMatrix(spectro.values.mapv(|z| z.norm()))
}
