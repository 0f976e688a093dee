//! Single-channel VAD engines behind a common frame-scoring interface.
//!
//! Engines emit one pre-threshold score per frame (higher means more
//! speech-like). Thresholding and hangover smoothing are separate steps so
//! that ROC sweeps can work on the raw scores.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::signal::{FrameSequence, SpectrumAnalyzer, Window};

const ENERGY_EPS: f64 = 1e-12;
const LR_EXPONENT_CLAMP: f64 = 50.0;

/// A frame-sequential VAD scorer. Instances carry per-run state and must
/// see frames in order; call [`SvadScorer::reset`] before reuse.
pub trait SvadScorer: Send {
    fn name(&self) -> &'static str;

    fn score(&mut self, frame: &[f64]) -> f64;

    /// Default operating point: a frame is speech iff its score exceeds this.
    fn threshold(&self) -> f64;

    fn reset(&mut self);

    fn score_frames(&mut self, frames: &FrameSequence) -> Vec<f64> {
        frames.frames().iter().map(|f| self.score(f)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SohnParams {
    /// Decision-directed smoothing of the a priori SNR.
    pub dd_alpha: f64,
    /// Leading frames averaged into the initial noise estimate.
    pub noise_init_frames: usize,
    /// Lower bound on every noise PSD bin.
    pub min_gain_floor: f64,
    /// Mean log likelihood ratio above which a frame is speech.
    pub threshold_eta: f64,
    /// Recursive smoothing of the noise PSD on non-speech frames.
    pub noise_smoothing: f64,
    pub window: Window,
}

impl Default for SohnParams {
    fn default() -> Self {
        Self {
            dd_alpha: 0.99,
            noise_init_frames: 10,
            min_gain_floor: 1e-12,
            threshold_eta: 0.0,
            noise_smoothing: 0.98,
            window: Window::Hamming,
        }
    }
}

impl SohnParams {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = (0.0..1.0).contains(&self.dd_alpha)
            && self.noise_init_frames >= 1
            && self.min_gain_floor > 0.0
            && self.threshold_eta.is_finite()
            && (0.0..1.0).contains(&self.noise_smoothing);
        if ok {
            Ok(())
        } else {
            Err(crate::Error::invalid(format!("invalid Sohn parameters {self:?}")))
        }
    }
}

/// Mean per-bin log likelihood ratio of speech presence under Gaussian
/// speech and noise models, with a decision-directed a priori SNR.
///
/// `prev_xi_state` holds, per bin, the decision-directed term carried over
/// from the previous frame: the squared Wiener-gain speech estimate
/// normalized by the noise PSD. Returns the score and next frame's state.
pub fn sohn_frame_score(
    frame_spectrum: &[Complex64],
    noise_psd: &[f64],
    prev_xi_state: &[f64],
    params: &SohnParams,
) -> (f64, Vec<f64>) {
    debug_assert_eq!(frame_spectrum.len(), noise_psd.len());
    debug_assert_eq!(frame_spectrum.len(), prev_xi_state.len());
    let alpha = params.dd_alpha;
    let mut sum = 0.0;
    let mut state = Vec::with_capacity(frame_spectrum.len());
    for ((s, &lambda), &prev) in frame_spectrum.iter().zip(noise_psd).zip(prev_xi_state) {
        let gamma = s.norm_sqr() / lambda.max(params.min_gain_floor);
        let xi = alpha * prev + (1.0 - alpha) * (gamma - 1.0).max(0.0);
        let exponent = (gamma * xi / (1.0 + xi)).clamp(-LR_EXPONENT_CLAMP, LR_EXPONENT_CLAMP);
        sum += exponent - xi.ln_1p();
        let gain = xi / (1.0 + xi);
        state.push(gain * gain * gamma);
    }
    let n = frame_spectrum.len().max(1) as f64;
    (sum / n, state)
}

/// Recursive noise PSD update, frozen during speech frames.
pub fn update_noise_psd(
    noise_psd: &[f64],
    frame_spectrum: &[Complex64],
    speech_decision: bool,
    smoothing: f64,
    floor: f64,
) -> Vec<f64> {
    noise_psd
        .iter()
        .zip(frame_spectrum)
        .map(|(&lambda, s)| {
            let next = if speech_decision {
                lambda
            } else {
                smoothing * lambda + (1.0 - smoothing) * s.norm_sqr()
            };
            next.max(floor)
        })
        .collect()
}

/// Statistical model-based VAD.
pub struct SohnVad {
    params: SohnParams,
    analyzer: SpectrumAnalyzer,
    noise_psd: Vec<f64>,
    xi_state: Vec<f64>,
    frames_seen: usize,
}

impl SohnVad {
    pub fn new(params: SohnParams, fft_size: usize) -> crate::Result<Self> {
        params.validate()?;
        Ok(Self {
            analyzer: SpectrumAnalyzer::new(params.window, fft_size)?,
            params,
            noise_psd: Vec::new(),
            xi_state: Vec::new(),
            frames_seen: 0,
        })
    }

    pub fn params(&self) -> &SohnParams {
        &self.params
    }

    pub fn noise_psd(&self) -> &[f64] {
        &self.noise_psd
    }

    fn half_spectrum(&mut self, frame: &[f64]) -> Vec<Complex64> {
        if frame.len() > self.analyzer.fft_size() {
            self.analyzer = SpectrumAnalyzer::new(self.params.window, frame.len().next_power_of_two())
                .expect("power-of-two size");
            self.noise_psd.clear();
            self.xi_state.clear();
            self.frames_seen = 0;
        }
        let mut spec = self
            .analyzer
            .spectrum(frame)
            .expect("frame fits analyzer");
        spec.truncate(self.analyzer.fft_size() / 2 + 1);
        spec
    }
}

impl SvadScorer for SohnVad {
    fn name(&self) -> &'static str {
        "sohn"
    }

    fn score(&mut self, frame: &[f64]) -> f64 {
        let spec = self.half_spectrum(frame);
        let floor = self.params.min_gain_floor;
        if self.noise_psd.len() != spec.len() {
            self.noise_psd = vec![0.0; spec.len()];
            self.xi_state = vec![0.0; spec.len()];
        }
        let initializing = self.frames_seen < self.params.noise_init_frames;
        if initializing {
            // running mean of the leading frames
            let n = self.frames_seen as f64;
            for (lambda, s) in self.noise_psd.iter_mut().zip(&spec) {
                *lambda = ((*lambda * n + s.norm_sqr()) / (n + 1.0)).max(floor);
            }
        }
        self.frames_seen += 1;

        let (score, state) = sohn_frame_score(&spec, &self.noise_psd, &self.xi_state, &self.params);
        self.xi_state = state;
        if !initializing {
            self.noise_psd = update_noise_psd(
                &self.noise_psd,
                &spec,
                score > self.params.threshold_eta,
                self.params.noise_smoothing,
                floor,
            );
        }
        score
    }

    fn threshold(&self) -> f64 {
        self.params.threshold_eta
    }

    fn reset(&mut self) {
        self.noise_psd.clear();
        self.xi_state.clear();
        self.frames_seen = 0;
    }
}

/// Frame energy in dB, `10 log10(mean(x^2) + 1e-12)`.
pub fn energy_score(frame: &[f64]) -> f64 {
    let mean = if frame.is_empty() {
        0.0
    } else {
        frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64
    };
    10.0 * (mean + ENERGY_EPS).log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyVad {
    pub threshold_db: f64,
}

impl Default for EnergyVad {
    fn default() -> Self {
        Self { threshold_db: -45.0 }
    }
}

impl SvadScorer for EnergyVad {
    fn name(&self) -> &'static str {
        "energy"
    }

    fn score(&mut self, frame: &[f64]) -> f64 {
        energy_score(frame)
    }

    fn threshold(&self) -> f64 {
        self.threshold_db
    }

    fn reset(&mut self) {}
}

/// Replays scores produced by an external engine, ignoring frame content.
#[derive(Debug, Clone)]
pub struct PrecomputedScores {
    scores: Vec<f64>,
    threshold: f64,
    cursor: usize,
}

impl PrecomputedScores {
    pub fn new(scores: Vec<f64>, threshold: f64) -> Self {
        Self {
            scores,
            threshold,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl SvadScorer for PrecomputedScores {
    fn name(&self) -> &'static str {
        "external"
    }

    fn score(&mut self, _frame: &[f64]) -> f64 {
        let s = self.scores.get(self.cursor).copied().unwrap_or(f64::MIN);
        self.cursor += 1;
        s
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn reset(&mut self) {
        self.cursor = 0;
    }
}

/// `score > eta`, frame by frame.
pub fn threshold_scores(scores: &[f64], eta: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > eta).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HangoverParams {
    pub hang_frames: usize,
    pub onset_frames: usize,
}

impl Default for HangoverParams {
    fn default() -> Self {
        Self {
            hang_frames: 8,
            onset_frames: 1,
        }
    }
}

/// Drops speech runs shorter than `onset_frames`, then extends every
/// remaining run by `hang_frames`.
pub fn hangover(decisions: &[bool], p: &HangoverParams) -> Vec<bool> {
    let n = decisions.len();
    let mut kept = vec![false; n];
    let mut t = 0;
    while t < n {
        if !decisions[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < n && decisions[t] {
            t += 1;
        }
        if t - start >= p.onset_frames.max(1) {
            kept[start..t].fill(true);
        }
    }
    let mut out = kept.clone();
    let mut remaining = 0;
    for (o, &k) in out.iter_mut().zip(&kept) {
        if k {
            remaining = p.hang_frames;
        } else if remaining > 0 {
            *o = true;
            remaining -= 1;
        }
    }
    out
}
