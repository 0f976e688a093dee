//! Sampled audio, framing, and windowed spectra.
//!
//! Amplitudes are `f64` in the nominal range `[-1, 1)`. Frames are plain
//! sample vectors; windows are applied only when a spectrum is taken.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Returns a copy multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Root-mean-square amplitude; zero for an empty signal.
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Sample-wise sum of two equally long signals.
    pub fn add(&self, other: &Waveform) -> Result<Self> {
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::SampleRateMismatch(
                self.sample_rate_hz,
                other.sample_rate_hz,
            ));
        }
        check_len(self.len(), other.len())?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn resized(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// The two microphone signals of the array. Channel 1 is the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoWaveform {
    ch1: Waveform,
    ch2: Waveform,
}

impl StereoWaveform {
    pub fn new(ch1: Waveform, ch2: Waveform) -> Result<Self> {
        if ch1.sample_rate_hz != ch2.sample_rate_hz {
            return Err(Error::SampleRateMismatch(
                ch1.sample_rate_hz,
                ch2.sample_rate_hz,
            ));
        }
        check_len(ch1.len(), ch2.len())?;
        Ok(Self { ch1, ch2 })
    }

    pub fn ch1(&self) -> &Waveform {
        &self.ch1
    }

    pub fn ch2(&self) -> &Waveform {
        &self.ch2
    }

    pub fn into_channels(self) -> (Waveform, Waveform) {
        (self.ch1, self.ch2)
    }

    pub fn len(&self) -> usize {
        self.ch1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ch1.is_empty()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.ch1.sample_rate_hz
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            ch1: self.ch1.scaled(gain),
            ch2: self.ch2.scaled(gain),
        }
    }

    pub fn add(&self, other: &StereoWaveform) -> Result<Self> {
        Ok(Self {
            ch1: self.ch1.add(&other.ch1)?,
            ch2: self.ch2.add(&other.ch2)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    #[default]
    Hamming,
    Hann,
}

impl Window {
    /// Symmetric window coefficients of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len <= 1 {
            return vec![1.0; len];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let phase = 2.0 * PI * n as f64 / denom;
                match self {
                    Window::Rectangular => 1.0,
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                }
            })
            .collect()
    }
}

/// Framing contract shared by every per-frame stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameParams {
    pub frame_len: usize,
    pub frame_shift: usize,
    pub window: Window,
}

impl FrameParams {
    pub fn new(frame_len: usize, frame_shift: usize, window: Window) -> Result<Self> {
        let p = Self {
            frame_len,
            frame_shift,
            window,
        };
        p.validate()?;
        Ok(p)
    }

    /// 25 ms frames with a 10 ms shift at the given rate.
    pub fn for_rate(sample_rate_hz: u32) -> Self {
        Self::from_ms(sample_rate_hz, 25.0, 10.0, Window::Hamming)
            .expect("default framing is valid at every positive rate")
    }

    pub fn from_ms(sample_rate_hz: u32, len_ms: f64, shift_ms: f64, window: Window) -> Result<Self> {
        let to_samples = |ms: f64| (ms * 1e-3 * sample_rate_hz as f64).round() as usize;
        Self::new(to_samples(len_ms), to_samples(shift_ms), window)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_shift == 0 || self.frame_shift > self.frame_len {
            return Err(Error::invalid(format!(
                "frame shift {} must be in 1..={}",
                self.frame_shift, self.frame_len
            )));
        }
        Ok(())
    }

    /// Smallest power of two holding one frame.
    pub fn fft_size(&self) -> usize {
        self.frame_len.next_power_of_two()
    }

    /// Number of whole frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.frame_shift + 1
        }
    }
}

impl Default for FrameParams {
    fn default() -> Self {
        Self::for_rate(8000)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Vec<f64>>,
    params: FrameParams,
    origin_len: usize,
}

impl FrameSequence {
    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn origin_len(&self) -> usize {
        self.origin_len
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// First sample index of frame `t` in the original signal.
    pub fn frame_start(&self, t: usize) -> usize {
        t * self.params.frame_shift
    }

    /// Builds a sequence with the same layout but replaced frame contents.
    pub(crate) fn with_frames(&self, frames: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(frames.len(), self.frames.len());
        Self {
            frames,
            params: self.params,
            origin_len: self.origin_len,
        }
    }
}

/// Splits `w` into overlapping frames; a trailing partial frame is dropped.
pub fn frame_signal(w: &Waveform, p: &FrameParams) -> Result<FrameSequence> {
    p.validate()?;
    if w.len() < p.frame_len {
        return Err(Error::SignalTooShort {
            len: w.len(),
            frame_len: p.frame_len,
        });
    }
    let frames = (0..p.frame_count(w.len()))
        .map(|t| {
            let start = t * p.frame_shift;
            w.samples()[start..start + p.frame_len].to_vec()
        })
        .collect();
    Ok(FrameSequence {
        frames,
        params: *p,
        origin_len: w.len(),
    })
}

/// Reusable forward transform of windowed, zero-padded frames.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
    window: Window,
    // keyed by frame length, recomputed on change
    coeffs: Vec<f64>,
}

impl SpectrumAnalyzer {
    pub fn new(window: Window, fft_size: usize) -> Result<Self> {
        if fft_size == 0 || !fft_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "fft size {fft_size} is not a power of two"
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self {
            fft,
            fft_size,
            window,
            coeffs: Vec::new(),
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn spectrum(&mut self, frame: &[f64]) -> Result<Vec<Complex64>> {
        if frame.len() > self.fft_size {
            return Err(Error::invalid(format!(
                "frame of {} samples exceeds fft size {}",
                frame.len(),
                self.fft_size
            )));
        }
        if self.coeffs.len() != frame.len() {
            self.coeffs = self.window.coefficients(frame.len());
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_size];
        for ((b, &x), &c) in buf.iter_mut().zip(frame).zip(&self.coeffs) {
            b.re = x * c;
        }
        self.fft.process(&mut buf);
        Ok(buf)
    }
}

/// `fft_size`-point DFT of the windowed, zero-padded frame. Bin 0 is DC.
pub fn windowed_spectrum(frame: &[f64], window: Window, fft_size: usize) -> Result<Vec<Complex64>> {
    SpectrumAnalyzer::new(window, fft_size)?.spectrum(frame)
}
