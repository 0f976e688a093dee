//! Seeded speech-like test signals.
//!
//! Utterances alternate voiced syllables (harmonic stacks shaped by two
//! formant resonances, gliding pitch, fast attack and release, level
//! varying by a few dB) with short fricative bursts and silent pauses,
//! framed by leading and trailing silence.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::signal::Waveform;

const PEAK: f64 = 0.5;

fn formant_gain(f: f64, center: f64, bandwidth: f64) -> f64 {
    let d = (f - center) / bandwidth;
    1.0 / (1.0 + d * d)
}

fn hann_envelope(len: usize) -> impl Fn(usize) -> f64 {
    move |k| (PI * (k as f64 + 0.5) / len as f64).sin().powi(2)
}

/// Raised-cosine attack and release around a slowly decaying body.
fn syllable_envelope(len: usize, attack: usize, release: usize) -> impl Fn(usize) -> f64 {
    let attack = attack.clamp(1, len / 2);
    let release = release.clamp(1, len - attack);
    move |k| {
        let body = 1.0 - 0.3 * k as f64 / len as f64;
        let ramp = if k < attack {
            0.5 * (1.0 - (PI * (k as f64 + 0.5) / attack as f64).cos())
        } else if k >= len - release {
            0.5 * (1.0 - (PI * (len - k) as f64 / release as f64).cos())
        } else {
            1.0
        };
        body * ramp
    }
}

fn voiced(rng: &mut ChaCha8Rng, fs: f64, len: usize, out: &mut Vec<f64>) {
    let f0_start = rng.random_range(90.0..220.0);
    let f0_end = f0_start * rng.random_range(0.8..1.25);
    let f1 = rng.random_range(300.0..850.0);
    let f2 = rng.random_range(900.0..2400.0);
    let nyquist = fs / 2.0;
    let level = 10f64.powf(rng.random_range(-4.0..4.0) / 20.0);
    let env = syllable_envelope(len, (0.015 * fs) as usize, (0.04 * fs) as usize);
    let mut phase = 0.0;
    for k in 0..len {
        let f0 = f0_start + (f0_end - f0_start) * k as f64 / len as f64;
        phase += 2.0 * PI * f0 / fs;
        let mut s = 0.0;
        let mut h = 1;
        while h as f64 * f0 < nyquist * 0.95 {
            let f = h as f64 * f0;
            let g = formant_gain(f, f1, 120.0) + 0.6 * formant_gain(f, f2, 200.0) + 0.02;
            s += g * (h as f64 * phase).sin() / h as f64;
            h += 1;
        }
        out.push(level * s * env(k));
    }
}

fn fricative(rng: &mut ChaCha8Rng, len: usize, out: &mut Vec<f64>) {
    let normal = Normal::new(0.0, 0.3).expect("valid deviation");
    let env = hann_envelope(len);
    let mut prev = 0.0;
    for k in 0..len {
        let n = normal.sample(rng);
        // first difference tilts the noise towards high frequencies
        out.push((n - prev) * env(k));
        prev = n;
    }
}

/// A speech-like utterance of `duration_s` seconds, peak-normalized to 0.5.
pub fn synthetic_utterance(seed: u64, sample_rate_hz: u32, duration_s: f64) -> Result<Waveform> {
    if sample_rate_hz == 0 || !(duration_s > 0.0) {
        return Err(Error::invalid("sample rate and duration must be positive"));
    }
    let fs = sample_rate_hz as f64;
    let total = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms = |v: f64| (v * fs / 1000.0).round() as usize;

    let lead = ms(rng.random_range(200.0..400.0));
    let tail = ms(rng.random_range(200.0..400.0));
    let mut x = vec![0.0; lead];
    while x.len() + tail < total {
        if rng.random_bool(0.25) {
            let len = ms(rng.random_range(60.0..140.0));
            fricative(&mut rng, len, &mut x);
        }
        let len = ms(rng.random_range(120.0..300.0));
        voiced(&mut rng, fs, len, &mut x);
        if rng.random_bool(0.4) {
            x.resize(x.len() + ms(rng.random_range(80.0..350.0)), 0.0);
        }
    }
    x.truncate(total.saturating_sub(tail));
    x.resize(total, 0.0);

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    Waveform::new(x, sample_rate_hz)
}
