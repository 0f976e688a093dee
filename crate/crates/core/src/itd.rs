//! Interchannel time difference estimation with GCC-PHAT, plus the array
//! geometry that bounds which integer lags are physically possible.
//!
//! Lag sign convention used throughout: a positive lag means channel 2
//! lags channel 1, i.e. the wavefront reached microphone 1 first.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::signal::{frame_signal, FrameParams, StereoWaveform, Window};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mic_spacing_m: f64,
    pub sample_rate_hz: u32,
    pub speed_of_sound_mps: f64,
}

impl ArrayGeometry {
    pub fn new(mic_spacing_m: f64, sample_rate_hz: u32, speed_of_sound_mps: f64) -> Result<Self> {
        let g = Self {
            mic_spacing_m,
            sample_rate_hz,
            speed_of_sound_mps,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mic_spacing_m > 0.0
            && self.mic_spacing_m.is_finite()
            && self.speed_of_sound_mps > 0.0
            && self.speed_of_sound_mps.is_finite()
            && self.sample_rate_hz > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid array geometry {self:?}")))
        }
    }

    /// Largest physically possible integer lag magnitude, `(max_itd - 1) / 2`.
    pub fn max_lag(&self) -> i32 {
        (max_itd(self) as i32 - 1) / 2
    }
}

impl Default for ArrayGeometry {
    /// 15 cm spacing at 8 kHz.
    fn default() -> Self {
        Self {
            mic_spacing_m: 0.15,
            sample_rate_hz: 8000,
            speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

/// Count of distinguishable integer lags, `floor(fs / (c / d)) * 2 + 1`.
pub fn max_itd(g: &ArrayGeometry) -> u32 {
    let per_side = (g.sample_rate_hz as f64 / (g.speed_of_sound_mps / g.mic_spacing_m)).floor();
    per_side as u32 * 2 + 1
}

pub fn angle_resolution_deg(g: &ArrayGeometry) -> f64 {
    180.0 / max_itd(g) as f64
}

/// Angular width covered by the inclusive lag interval `[thr1, thr2]`.
pub fn fov_deg(g: &ArrayGeometry, thr1: i32, thr2: i32) -> Result<f64> {
    check_thresholds(g, thr1, thr2)?;
    Ok((thr2 - thr1 + 1) as f64 * angle_resolution_deg(g))
}

pub(crate) fn check_thresholds(g: &ArrayGeometry, thr1: i32, thr2: i32) -> Result<()> {
    let max = g.max_lag();
    if thr1 > thr2 || thr1.abs() > max || thr2.abs() > max {
        return Err(Error::invalid(format!(
            "thresholds ({thr1}, {thr2}) must be ordered and within ±{max}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GccPeak {
    pub lag: i32,
    /// PHAT correlation value at `lag`; 0 for a silent frame pair.
    pub peak: f64,
}

/// GCC-PHAT correlator with plans cached for one transform size.
#[derive(Clone)]
pub struct GccPhat {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    fft_size: usize,
    window: Window,
    coeffs: Vec<f64>,
}

impl GccPhat {
    pub fn new(fft_size: usize, window: Window) -> Result<Self> {
        if fft_size == 0 || !fft_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "fft size {fft_size} is not a power of two"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            forward: planner.plan_fft_forward(fft_size),
            inverse: planner.plan_fft_inverse(fft_size),
            fft_size,
            window,
            coeffs: Vec::new(),
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn estimate(&mut self, frame1: &[f64], frame2: &[f64], max_lag: usize) -> Result<GccPeak> {
        check_len(frame1.len(), frame2.len())?;
        let n = frame1.len();
        if max_lag >= n {
            return Err(Error::invalid(format!(
                "max lag {max_lag} must be below the frame length {n}"
            )));
        }
        if self.fft_size < 2 * n {
            return Err(Error::invalid(format!(
                "fft size {} must be at least twice the frame length {n}",
                self.fft_size
            )));
        }
        if self.coeffs.len() != n {
            self.coeffs = self.window.coefficients(n);
        }

        let mut s1 = self.transform(frame1);
        let s2 = self.transform(frame2);
        for (a, b) in s1.iter_mut().zip(&s2) {
            *a *= b.conj();
        }
        let mean_mag = s1.iter().map(|c| c.norm()).sum::<f64>() / self.fft_size as f64;
        if mean_mag == 0.0 {
            return Ok(GccPeak { lag: 0, peak: 0.0 });
        }
        let eps = 1e-12 * mean_mag;
        for c in s1.iter_mut() {
            *c /= c.norm() + eps;
        }
        self.inverse.process(&mut s1);

        let scale = 1.0 / self.fft_size as f64;
        // r[m] = sum_k x1[k + m] x2[k]; a delay D of channel 2 peaks at m = -D.
        let corr_at = |lag: i32| {
            let idx = (-(lag as i64)).rem_euclid(self.fft_size as i64) as usize;
            s1[idx].re * scale
        };
        let mut best = GccPeak {
            lag: 0,
            peak: corr_at(0),
        };
        // Visit 0, -1, 1, -2, 2, ...: strict improvement keeps the tie-break.
        for m in 1..=max_lag as i32 {
            for lag in [-m, m] {
                let v = corr_at(lag);
                if v > best.peak {
                    best = GccPeak { lag, peak: v };
                }
            }
        }
        Ok(best)
    }

    fn transform(&self, frame: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_size];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.coeffs) {
            b.re = x * w;
        }
        self.forward.process(&mut buf);
        buf
    }
}

/// One-shot GCC-PHAT on a pair of unwindowed frames.
pub fn gcc_phat(frame1: &[f64], frame2: &[f64], max_lag: usize, fft_size: usize) -> Result<GccPeak> {
    GccPhat::new(fft_size, Window::Rectangular)?.estimate(frame1, frame2, max_lag)
}

/// Per-frame ITD with its PHAT peak value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ItdTrack {
    pub tau_per_frame: Vec<i32>,
    pub confidence_per_frame: Vec<f64>,
}

impl ItdTrack {
    pub fn len(&self) -> usize {
        self.tau_per_frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_per_frame.is_empty()
    }

    /// Writes `frame_index,tau,peak` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frame_index", "tau", "peak"])?;
        for (t, (tau, peak)) in self
            .tau_per_frame
            .iter()
            .zip(&self.confidence_per_frame)
            .enumerate()
        {
            w.write_record([t.to_string(), tau.to_string(), peak.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Frame-by-frame GCC-PHAT restricted to the lags the geometry allows.
pub fn estimate_itd(s: &StereoWaveform, p: &FrameParams, g: &ArrayGeometry) -> Result<ItdTrack> {
    g.validate()?;
    if s.sample_rate_hz() != g.sample_rate_hz {
        return Err(Error::SampleRateMismatch(s.sample_rate_hz(), g.sample_rate_hz));
    }
    let f1 = frame_signal(s.ch1(), p)?;
    let f2 = frame_signal(s.ch2(), p)?;
    let max_lag = (g.max_lag() as usize).min(p.frame_len.saturating_sub(1));
    let mut gcc = GccPhat::new((2 * p.frame_len).next_power_of_two(), p.window)?;

    let mut track = ItdTrack {
        tau_per_frame: Vec::with_capacity(f1.len()),
        confidence_per_frame: Vec::with_capacity(f1.len()),
    };
    for (a, b) in f1.frames().iter().zip(f2.frames()) {
        let peak = gcc.estimate(a, b, max_lag)?;
        track.tau_per_frame.push(peak.lag);
        track.confidence_per_frame.push(peak.peak);
    }
    Ok(track)
}
