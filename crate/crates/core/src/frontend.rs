//! Spatial pre-processing in front of a single-channel VAD.
//!
//! The target detector keeps frames whose ITD falls inside a lag window
//! `[thr1, thr2]`. Its output either zeroes rejected frames before the SVAD
//! (filter modes) or is ANDed with the SVAD decision (AND modes). A
//! delay-and-sum beamformer can replace channel 1 as the SVAD input.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::csvio::format_real;
use crate::error::{check_len, Error, Result};
use crate::itd::{check_thresholds, estimate_itd, ArrayGeometry, ItdTrack};
use crate::signal::{frame_signal, FrameParams, FrameSequence, StereoWaveform, Waveform};
use crate::svad::{hangover, threshold_scores, HangoverParams, SvadScorer};

/// Score given to frames the detector rejects in AND modes, below any
/// threshold an SVAD can produce.
pub const SCORE_FLOOR: f64 = f64::MIN;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub thr1: i32,
    pub thr2: i32,
    pub geometry: ArrayGeometry,
}

impl DetectorConfig {
    pub fn new(thr1: i32, thr2: i32, geometry: ArrayGeometry) -> Result<Self> {
        let cfg = Self {
            thr1,
            thr2,
            geometry,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        check_thresholds(&self.geometry, self.thr1, self.thr2)
    }

    /// Lag at the middle of the detector window, rounded toward zero.
    pub fn center_lag(&self) -> i32 {
        (self.thr1 + self.thr2) / 2
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            thr1: -1,
            thr2: 1,
            geometry: ArrayGeometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DetectorOutput {
    pub f_per_frame: Vec<bool>,
}

impl DetectorOutput {
    pub fn len(&self) -> usize {
        self.f_per_frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_per_frame.is_empty()
    }

    pub fn all(value: bool, len: usize) -> Self {
        Self {
            f_per_frame: vec![value; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreprocessMode {
    None,
    F,
    A,
    B,
    FB,
    AB,
}

impl PreprocessMode {
    pub const ALL: [PreprocessMode; 6] = [
        PreprocessMode::None,
        PreprocessMode::F,
        PreprocessMode::A,
        PreprocessMode::B,
        PreprocessMode::FB,
        PreprocessMode::AB,
    ];

    pub fn uses_beamformer(self) -> bool {
        matches!(self, PreprocessMode::B | PreprocessMode::FB | PreprocessMode::AB)
    }

    pub fn uses_detector(self) -> bool {
        !matches!(self, PreprocessMode::None | PreprocessMode::B)
    }

    pub fn is_filter(self) -> bool {
        matches!(self, PreprocessMode::F | PreprocessMode::FB)
    }

    pub fn is_and(self) -> bool {
        matches!(self, PreprocessMode::A | PreprocessMode::AB)
    }

    /// Whether the mode needs both microphone channels.
    pub fn needs_stereo(self) -> bool {
        self != PreprocessMode::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PreprocessMode::None => "none",
            PreprocessMode::F => "f",
            PreprocessMode::A => "a",
            PreprocessMode::B => "b",
            PreprocessMode::FB => "fb",
            PreprocessMode::AB => "ab",
        }
    }
}

impl fmt::Display for PreprocessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PreprocessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PreprocessMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown mode `{s}`")))
    }
}

/// `F(t) = 1` iff `thr1 <= tau(t) <= thr2`.
pub fn spatial_detect(itd: &ItdTrack, cfg: &DetectorConfig) -> DetectorOutput {
    DetectorOutput {
        f_per_frame: itd
            .tau_per_frame
            .iter()
            .map(|&tau| cfg.thr1 <= tau && tau <= cfg.thr2)
            .collect(),
    }
}

/// Zeroes every frame the detector rejects.
pub fn filter_frames(frames: &FrameSequence, det: &DetectorOutput) -> Result<FrameSequence> {
    check_len(frames.len(), det.len())?;
    let out = frames
        .frames()
        .iter()
        .zip(&det.f_per_frame)
        .map(|(f, &keep)| if keep { f.clone() } else { vec![0.0; f.len()] })
        .collect();
    Ok(frames.with_frames(out))
}

pub fn and_combine(det: &DetectorOutput, vad: &[bool]) -> Result<Vec<bool>> {
    check_len(det.len(), vad.len())?;
    Ok(det.f_per_frame.iter().zip(vad).map(|(&f, &v)| f && v).collect())
}

/// Two-channel beamformer producing one SVAD input signal.
pub trait Beamformer: Sync {
    fn beamform(&self, s: &StereoWaveform) -> Result<Waveform>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DelayAndSum {
    pub steer_lag: i32,
}

impl Beamformer for DelayAndSum {
    fn beamform(&self, s: &StereoWaveform) -> Result<Waveform> {
        ds_beamform(s, self.steer_lag)
    }
}

/// `out(k) = (ch1(k) + ch2(k + steer_lag)) / 2`, zero outside the signal.
pub fn ds_beamform(s: &StereoWaveform, steer_lag: i32) -> Result<Waveform> {
    let n = s.len() as i64;
    if (steer_lag as i64).abs() >= n.max(1) {
        return Err(Error::invalid(format!(
            "steering lag {steer_lag} exceeds signal length {n}"
        )));
    }
    let ch1 = s.ch1().samples();
    let ch2 = s.ch2().samples();
    let out = (0..n)
        .map(|k| {
            let j = k + steer_lag as i64;
            let other = if (0..n).contains(&j) { ch2[j as usize] } else { 0.0 };
            (ch1[k as usize] + other) / 2.0
        })
        .collect();
    Waveform::new(out, s.sample_rate_hz())
}

/// Per-frame results of one pipeline run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOutput {
    /// Detector decisions, `None` for modes that do not run the detector.
    pub detector: Option<DetectorOutput>,
    pub itd: Option<ItdTrack>,
    /// Pre-threshold scores, with [`SCORE_FLOOR`] on AND-rejected frames.
    pub scores: Vec<f64>,
    /// Decisions at the engine's default operating point after hangover.
    pub decisions: Vec<bool>,
}

impl PipelineOutput {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Writes `frame_index,F,score,decision`; `F` is 1 when no detector ran.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frame_index", "F", "score", "decision"])?;
        for t in 0..self.scores.len() {
            let f = self
                .detector
                .as_ref()
                .map_or(true, |d| d.f_per_frame[t]);
            w.write_record([
                t.to_string(),
                u8::from(f).to_string(),
                format_real(self.scores[t]),
                u8::from(self.decisions[t]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mono-input pipeline: only mode `none` is possible.
pub fn run_mono(
    w: &Waveform,
    svad: &mut dyn SvadScorer,
    p: &FrameParams,
    hang: &HangoverParams,
) -> Result<PipelineOutput> {
    let frames = frame_signal(w, p)?;
    svad.reset();
    let scores = svad.score_frames(&frames);
    let decisions = hangover(&threshold_scores(&scores, svad.threshold()), hang);
    Ok(PipelineOutput {
        detector: None,
        itd: None,
        scores,
        decisions,
    })
}

/// Runs one pre-processing variant with the delay-and-sum beamformer
/// steered at the detector window's center.
pub fn run_pipeline(
    s: &StereoWaveform,
    mode: PreprocessMode,
    cfg: &DetectorConfig,
    svad: &mut (dyn SvadScorer + Send),
    p: &FrameParams,
    hang: &HangoverParams,
) -> Result<PipelineOutput> {
    let bf = DelayAndSum {
        steer_lag: cfg.center_lag(),
    };
    run_pipeline_with(s, mode, cfg, svad, &bf, p, hang)
}

pub fn run_pipeline_with(
    s: &StereoWaveform,
    mode: PreprocessMode,
    cfg: &DetectorConfig,
    svad: &mut (dyn SvadScorer + Send),
    beamformer: &dyn Beamformer,
    p: &FrameParams,
    hang: &HangoverParams,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    p.validate()?;

    let svad_input = if mode.uses_beamformer() {
        beamformer.beamform(s)?
    } else {
        s.ch1().clone()
    };
    let frames = frame_signal(&svad_input, p)?;

    let detect = || -> Result<(ItdTrack, DetectorOutput)> {
        let itd = estimate_itd(s, p, &cfg.geometry)?;
        let det = spatial_detect(&itd, cfg);
        Ok((itd, det))
    };
    let mut score = |frames: &FrameSequence| {
        svad.reset();
        svad.score_frames(frames)
    };

    let (itd, det, raw_scores) = match mode {
        PreprocessMode::None | PreprocessMode::B => (None, None, score(&frames)),
        PreprocessMode::F | PreprocessMode::FB => {
            let (itd, det) = detect()?;
            let filtered = filter_frames(&frames, &det)?;
            (Some(itd), Some(det), score(&filtered))
        }
        PreprocessMode::A | PreprocessMode::AB => {
            // the detector does not depend on the SVAD, so run them side by side
            let (detected, scores) = rayon::join(detect, || score(&frames));
            let (itd, det) = detected?;
            (Some(itd), Some(det), scores)
        }
    };
    let threshold = svad.threshold();
    let svad_decisions = hangover(&threshold_scores(&raw_scores, threshold), hang);

    let (scores, decisions) = match (&det, mode.is_and()) {
        (Some(det), true) => {
            let decisions = and_combine(det, &svad_decisions)?;
            let scores = raw_scores
                .iter()
                .zip(&det.f_per_frame)
                .map(|(&s, &f)| if f { s } else { SCORE_FLOOR })
                .collect();
            (scores, decisions)
        }
        _ => (raw_scores, svad_decisions),
    };
    Ok(PipelineOutput {
        detector: det,
        itd,
        scores,
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Window;
    use crate::svad::{EnergyVad, SohnParams, SohnVad};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn track(taus: &[i32]) -> ItdTrack {
        ItdTrack {
            tau_per_frame: taus.to_vec(),
            confidence_per_frame: vec![1.0; taus.len()],
        }
    }

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 8000).unwrap()
    }

    fn bursty(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len)
            .map(|k| {
                let on = (k / 1600) % 2 == 1;
                let x: f64 = rng.random_range(-1.0..1.0);
                if on { 0.5 * x } else { 0.001 * x }
            })
            .collect()
    }

    #[test]
    fn detector_is_inclusive() {
        let cfg = DetectorConfig::default();
        let det = spatial_detect(&track(&[0, -1, 1, 3, -2, 2]), &cfg);
        assert_eq!(det.f_per_frame, vec![true, true, true, false, false, false]);
        assert!(DetectorConfig::new(-4, 0, ArrayGeometry::default()).is_err());
        assert!(DetectorConfig::new(1, 0, ArrayGeometry::default()).is_err());
    }

    #[test]
    fn filter_frames_cases() {
        let w = wave((1..=240).map(f64::from).collect());
        let p = FrameParams::new(80, 80, Window::Rectangular).unwrap();
        let frames = frame_signal(&w, &p).unwrap();

        let pass = filter_frames(&frames, &DetectorOutput::all(true, 3)).unwrap();
        assert_eq!(pass, frames);

        let none = filter_frames(&frames, &DetectorOutput::all(false, 3)).unwrap();
        assert!(none.frames().iter().flatten().all(|&x| x == 0.0));

        let det = DetectorOutput {
            f_per_frame: vec![true, false, true],
        };
        let mid = filter_frames(&frames, &det).unwrap();
        assert_eq!(mid.frames()[0], frames.frames()[0]);
        assert!(mid.frames()[1].iter().all(|&x| x == 0.0));
        assert_eq!(mid.frames()[2], frames.frames()[2]);
        assert_eq!(filter_frames(&mid, &det).unwrap(), mid);

        assert!(filter_frames(&frames, &DetectorOutput::all(true, 2)).is_err());
    }

    #[test]
    fn and_truth_table() {
        let det = DetectorOutput {
            f_per_frame: vec![true, true, false, false],
        };
        assert_eq!(
            and_combine(&det, &[true, false, true, false]).unwrap(),
            vec![true, false, false, false]
        );
        let ones = DetectorOutput::all(true, 3);
        assert_eq!(and_combine(&ones, &[true, false, true]).unwrap(), vec![true, false, true]);
        assert!(and_combine(&ones, &[true]).is_err());
    }

    #[test]
    fn beamformer_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let same = StereoWaveform::new(wave(x.clone()), wave(x.clone())).unwrap();
        assert_eq!(ds_beamform(&same, 0).unwrap().samples(), &x[..]);

        let neg = StereoWaveform::new(wave(x.clone()), wave(x.iter().map(|v| -v).collect())).unwrap();
        assert!(ds_beamform(&neg, 0).unwrap().samples().iter().all(|&v| v == 0.0));

        let mut delayed = vec![0.0, 0.0];
        delayed.extend_from_slice(&x[..498]);
        let s = StereoWaveform::new(wave(x.clone()), wave(delayed)).unwrap();
        let out = ds_beamform(&s, 2).unwrap();
        assert_eq!(out.len(), 500);
        assert_eq!(&out.samples()[..498], &x[..498]);

        assert!(ds_beamform(&s, 500).is_err());
    }

    #[test]
    fn beamformer_array_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 80_000;
        let normal = Normal::new(0.0, 0.1).unwrap();
        let n1: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let n2: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let noise = StereoWaveform::new(wave(n1), wave(n2)).unwrap();
        let out = ds_beamform(&noise, 0).unwrap();
        let gain_db = 20.0 * (noise.ch1().rms() / out.rms()).log10();
        assert!((gain_db - 3.0).abs() < 0.5, "{gain_db}");
    }

    #[test]
    fn none_equals_and_when_detector_passes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = bursty(&mut rng, 16_000);
        let s = StereoWaveform::new(wave(x.clone()), wave(x)).unwrap();
        let p = FrameParams::default();
        let cfg = DetectorConfig::default();
        let hang = HangoverParams::default();
        let mut e = EnergyVad::default();
        let none = run_pipeline(&s, PreprocessMode::None, &cfg, &mut e, &p, &hang).unwrap();
        let a = run_pipeline(&s, PreprocessMode::A, &cfg, &mut e, &p, &hang).unwrap();
        assert!(a.detector.as_ref().unwrap().f_per_frame.iter().all(|&f| f));
        assert_eq!(none.decisions, a.decisions);
        assert_eq!(none.scores, a.scores);
        assert!(none.decisions.iter().any(|&d| d));

        let mono = run_mono(s.ch1(), &mut e, &p, &hang).unwrap();
        assert_eq!(mono, none);
    }

    #[test]
    fn filter_mode_with_rejecting_detector_is_silent() {
        // channel 2 leads by 3 samples: outside the (-1, 1) window on every frame
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let src: Vec<f64> = bursty(&mut rng, 16_003);
        let s = StereoWaveform::new(wave(src[..16_000].to_vec()), wave(src[3..].to_vec())).unwrap();
        let cfg = DetectorConfig::default();
        let p = FrameParams::default();
        let hang = HangoverParams::default();
        for mode in [PreprocessMode::F, PreprocessMode::FB] {
            let mut sohn = SohnVad::new(SohnParams::default(), p.fft_size()).unwrap();
            let out = run_pipeline(&s, mode, &cfg, &mut sohn, &p, &hang).unwrap();
            let det = out.detector.as_ref().unwrap();
            assert!(det.f_per_frame.iter().all(|&f| !f));
            assert!(out.decisions.iter().all(|&d| !d), "{mode}");
            let mut e = EnergyVad::default();
            let out = run_pipeline(&s, mode, &cfg, &mut e, &p, &hang).unwrap();
            assert!(out.decisions.iter().all(|&d| !d));
        }
        let mut e = EnergyVad::default();
        let out = run_pipeline(&s, PreprocessMode::A, &cfg, &mut e, &p, &hang).unwrap();
        assert!(out.scores.iter().all(|&s| s == SCORE_FLOOR));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let s = StereoWaveform::new(wave(bursty(&mut rng, 8000)), wave(bursty(&mut rng, 8000))).unwrap();
        let p = FrameParams::default();
        let cfg = DetectorConfig::default();
        let hang = HangoverParams::default();
        for mode in PreprocessMode::ALL {
            let mut a = SohnVad::new(SohnParams::default(), 256).unwrap();
            let mut b = SohnVad::new(SohnParams::default(), 256).unwrap();
            let x = run_pipeline(&s, mode, &cfg, &mut a, &p, &hang).unwrap();
            let y = run_pipeline(&s, mode, &cfg, &mut b, &p, &hang).unwrap();
            assert_eq!(x, y);
            assert_eq!(x.len(), p.frame_count(8000));
        }
    }

    #[test]
    fn csv_layout() {
        let out = PipelineOutput {
            detector: Some(DetectorOutput {
                f_per_frame: vec![true, false],
            }),
            itd: None,
            scores: vec![1.5, SCORE_FLOOR],
            decisions: vec![true, false],
        };
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "frame_index,F,score,decision");
        assert_eq!(lines[1], "0,1,1.5,1");
        assert_eq!(lines[2], "1,0,-1.7976931348623157e308,0");
    }

    #[test]
    fn mode_names_round_trip() {
        for m in PreprocessMode::ALL {
            assert_eq!(m.as_str().parse::<PreprocessMode>().unwrap(), m);
        }
        assert_eq!("AB".parse::<PreprocessMode>().unwrap(), PreprocessMode::AB);
        assert!("x".parse::<PreprocessMode>().is_err());
    }

    proptest! {
        #[test]
        fn and_is_elementwise_min(bits in prop::collection::vec(any::<(bool, bool)>(), 0..64)) {
            let det = DetectorOutput { f_per_frame: bits.iter().map(|b| b.0).collect() };
            let vad: Vec<bool> = bits.iter().map(|b| b.1).collect();
            let out = and_combine(&det, &vad).unwrap();
            for (o, b) in out.iter().zip(&bits) {
                prop_assert_eq!(*o, std::cmp::min(b.0, b.1));
                prop_assert!(!*o || b.1);
            }
        }

        #[test]
        fn detector_ignores_confidence(taus in prop::collection::vec(-3i32..=3, 1..40), g in 0.0f64..10.0) {
            let cfg = DetectorConfig::default();
            let a = spatial_detect(&track(&taus), &cfg);
            let mut scaled = track(&taus);
            scaled.confidence_per_frame.iter_mut().for_each(|c| *c *= g);
            prop_assert_eq!(a, spatial_detect(&scaled, &cfg));
        }
    }
}
