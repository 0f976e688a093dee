//! Active speech level (P.56 method B style), SNR scaling and
//! energy-based reference labels.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{frame_signal, FrameParams, Waveform};

const ENVELOPE_TIME_CONSTANT_S: f64 = 0.03;
const HANGOVER_S: f64 = 0.2;
const MARGIN_DB: f64 = 15.9;
const LADDER_STEP_DB: f64 = 0.5;
const LADDER_SPAN_DB: f64 = 120.0;

/// Frames quieter than the active speech level minus this are non-speech.
pub const LABEL_FLOOR_DB: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeechLevel {
    /// Mean-square level over active samples, dB re full scale.
    pub level_db: f64,
    /// Fraction of samples counted as active.
    pub activity: f64,
    /// Envelope threshold at the margin crossing, dB re full scale.
    pub threshold_db: f64,
}

/// Active speech level in dB.
pub fn active_speech_level(w: &Waveform) -> Result<f64> {
    measure_active_speech(w).map(|l| l.level_db)
}

pub fn measure_active_speech(w: &Waveform) -> Result<SpeechLevel> {
    let x = w.samples();
    let fs = w.sample_rate_hz() as f64;
    let g = (-1.0 / (fs * ENVELOPE_TIME_CONSTANT_S)).exp();
    let hang = (HANGOVER_S * fs).round() as usize;

    // two cascaded one-pole smoothers of |x|
    let mut p = 0.0;
    let mut q = 0.0;
    let mut envelope = Vec::with_capacity(x.len());
    for &s in x {
        p = g * p + (1.0 - g) * s.abs();
        q = g * q + (1.0 - g) * p;
        envelope.push(q);
    }
    let q_max = envelope.iter().copied().fold(0.0, f64::max);
    let energy: f64 = x.iter().map(|s| s * s).sum();
    if q_max <= 0.0 || energy <= 0.0 {
        return Err(Error::NoActivity);
    }

    // A sample is active at threshold c when the envelope reached c within
    // the last `hang` samples, i.e. when its trailing max is at least c.
    let mut trailing = trailing_max(&envelope, hang);
    trailing.sort_by(f64::total_cmp);
    let active_count = |c: f64| trailing.len() - trailing.partition_point(|&v| v < c);

    // Walk thresholds upwards from q_max - 120 dB. The margin between the
    // active level and the threshold shrinks as the threshold rises; the
    // level is read off where it first drops to MARGIN_DB.
    let steps = (LADDER_SPAN_DB / LADDER_STEP_DB) as usize;
    let top_db = 20.0 * q_max.log10();
    let mut prev: Option<(f64, f64, f64)> = None;
    for j in (0..=steps).rev() {
        let c_db = top_db - j as f64 * LADDER_STEP_DB;
        let count = active_count(10f64.powf(c_db / 20.0));
        if count == 0 {
            break;
        }
        let a_db = 10.0 * (energy / count as f64).log10();
        let delta = a_db - c_db;
        if delta <= MARGIN_DB {
            let (level_db, threshold_db) = match prev {
                Some((pa, pc, pd)) => {
                    let f = (pd - MARGIN_DB) / (pd - delta);
                    (pa + f * (a_db - pa), pc + f * (c_db - pc))
                }
                None => (a_db, c_db),
            };
            let activity = energy / x.len() as f64 / 10f64.powf(level_db / 10.0);
            return Ok(SpeechLevel {
                level_db,
                activity: activity.min(1.0),
                threshold_db,
            });
        }
        prev = Some((a_db, c_db, delta));
    }
    Err(Error::NoActivity)
}

fn trailing_max(v: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut dq: VecDeque<usize> = VecDeque::new();
    for (k, &x) in v.iter().enumerate() {
        while dq.back().is_some_and(|&i| v[i] <= x) {
            dq.pop_back();
        }
        dq.push_back(k);
        while dq.front().is_some_and(|&i| i + window < k) {
            dq.pop_front();
        }
        out.push(v[dq[0]]);
    }
    out
}

fn rms_db(w: &Waveform) -> f64 {
    20.0 * w.rms().log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReference {
    /// Speech power over active samples only.
    #[default]
    P56ActiveSpeech,
    /// Speech power over the whole signal.
    Rms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub snr_db: f64,
    #[serde(default)]
    pub snr_reference: SnrReference,
}

impl MixSpec {
    pub fn new(snr_db: f64) -> Self {
        Self {
            snr_db,
            snr_reference: SnrReference::P56ActiveSpeech,
        }
    }
}

pub fn speech_level_db(speech: &Waveform, reference: SnrReference) -> Result<f64> {
    match reference {
        SnrReference::P56ActiveSpeech => active_speech_level(speech),
        SnrReference::Rms if speech.rms() > 0.0 => Ok(rms_db(speech)),
        SnrReference::Rms => Err(Error::NoActivity),
    }
}

/// Speech level minus noise RMS level, in dB.
pub fn measured_snr_db(speech: &Waveform, noise: &Waveform, reference: SnrReference) -> Result<f64> {
    if noise.rms() <= 0.0 {
        return Err(Error::invalid("noise has zero energy"));
    }
    Ok(speech_level_db(speech, reference)? - rms_db(noise))
}

/// Amplitude gain that brings `noise` to the requested SNR against `speech`.
pub fn noise_gain_for_snr(speech: &Waveform, noise: &Waveform, spec: &MixSpec) -> Result<f64> {
    if !spec.snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    let current = measured_snr_db(speech, noise, spec.snr_reference)?;
    Ok(10f64.powf((current - spec.snr_db) / 20.0))
}

pub fn scale_noise_to_snr(speech: &Waveform, noise: &Waveform, spec: &MixSpec) -> Result<(Waveform, f64)> {
    let gain = noise_gain_for_snr(speech, noise, spec)?;
    Ok((noise.scaled(gain), gain))
}

/// Frame labels from dry speech: 1 where frame energy exceeds the active
/// speech level minus [`LABEL_FLOOR_DB`].
pub fn generate_labels(dry_speech: &Waveform, p: &FrameParams) -> Result<Vec<bool>> {
    let frames = frame_signal(dry_speech, p)?;
    let level = match active_speech_level(dry_speech) {
        Ok(l) => l,
        Err(Error::NoActivity) => return Ok(vec![false; frames.len()]),
        Err(e) => return Err(e),
    };
    let floor_db = level - LABEL_FLOOR_DB;
    Ok(frames
        .frames()
        .iter()
        .map(|f| {
            let ms = f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64;
            ms > 0.0 && 10.0 * ms.log10() > floor_db
        })
        .collect())
}
