//! Room scene description and dual-channel scene synthesis.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itd::DEFAULT_SPEED_OF_SOUND;
use crate::room::convolve::convolve;
use crate::room::ism::{default_max_order, eyring_reflection_coeff, generate_rir_with_floor, Rir, IMAGE_FLOOR};
use crate::room::level::{generate_labels, measured_snr_db, noise_gain_for_snr, MixSpec};
use crate::signal::{FrameParams, StereoWaveform, Waveform};

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FractionalDelay {
    /// Each image lands on its nearest sample.
    #[default]
    Nearest,
    /// Hann-windowed sinc interpolation, 8 ms wide.
    Sinc,
}

/// A shoebox room with two microphones, one target talker and a set of
/// noise source positions.
///
/// Scene files are TOML with these keys (all lengths in meters):
///
/// ```toml
/// room_dims_m = [9.5, 6.5, 5.0]
/// t60_s = 0.2                  # or: reflection_coeff = 0.64
/// mic_positions_m = [[4.825, 3.25, 1.7], [4.675, 3.25, 1.7]]
/// target_position_m = [4.75, 2.857, 1.7]
/// noise_positions_m = [[7.75, 3.25, 1.7]]
/// sample_rate_hz = 8000
/// rir_length_s = 0.4
/// speed_of_sound_mps = 343.0   # optional
/// max_order = 16               # optional; otherwise images 60 dB below the direct path are dropped
/// fractional_delay = "nearest" # optional, or "sinc"
/// seed = 1                     # optional
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomScene {
    pub room_dims_m: Point3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection_coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t60_s: Option<f64>,
    pub mic_positions_m: [Point3; 2],
    pub target_position_m: Point3,
    pub noise_positions_m: Vec<Point3>,
    pub sample_rate_hz: u32,
    pub rir_length_s: f64,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound_mps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<usize>,
    #[serde(default)]
    pub fractional_delay: FractionalDelay,
    #[serde(default)]
    pub seed: u64,
}

fn default_speed_of_sound() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

/// `count` points on a horizontal circle, the first at angle 0 (+x).
pub fn circle_positions(center: Point3, radius_m: f64, count: usize) -> Vec<Point3> {
    (0..count)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / count as f64;
            [center[0] + radius_m * a.cos(), center[1] + radius_m * a.sin(), center[2]]
        })
        .collect()
}

impl Default for RoomScene {
    /// 9.5 x 6.5 x 5 m office, T60 = 0.2 s, 15 cm array at 1.7 m height with
    /// a broadside talker 0.39 m in front and six noise positions on a 3 m
    /// circle around the array center.
    fn default() -> Self {
        let mics = [[4.825, 3.25, 1.7], [4.675, 3.25, 1.7]];
        let center = [4.75, 3.25, 1.7];
        Self {
            room_dims_m: [9.5, 6.5, 5.0],
            reflection_coeff: None,
            t60_s: Some(0.2),
            mic_positions_m: mics,
            target_position_m: [4.75, 2.857, 1.7],
            noise_positions_m: circle_positions(center, 3.0, 6),
            sample_rate_hz: 8000,
            rir_length_s: 0.4,
            speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND,
            max_order: None,
            fractional_delay: FractionalDelay::Nearest,
            seed: 0,
        }
    }
}

impl RoomScene {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scene: Self = toml::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene fields serialize")
    }

    pub fn contains(&self, p: Point3) -> bool {
        p.iter().zip(&self.room_dims_m).all(|(&x, &d)| x > 0.0 && x < d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.room_dims_m.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad(format!("room dimensions {:?} must be positive", self.room_dims_m));
        }
        match (self.reflection_coeff, self.t60_s) {
            (Some(b), None) if (0.0..1.0).contains(&b) => {}
            (None, Some(t)) if t > 0.0 && t.is_finite() => {}
            (Some(_), Some(_)) | (None, None) => {
                return bad("give exactly one of reflection_coeff and t60_s".into())
            }
            _ => return bad("reflection_coeff must be in [0, 1) and t60_s positive".into()),
        }
        if self.sample_rate_hz == 0 || !(self.rir_length_s > 0.0) {
            return bad("sample rate and RIR length must be positive".into());
        }
        if !(self.speed_of_sound_mps > 0.0) {
            return bad("speed of sound must be positive".into());
        }
        let positions = self
            .mic_positions_m
            .iter()
            .chain(std::iter::once(&self.target_position_m))
            .chain(&self.noise_positions_m);
        for p in positions {
            if !self.contains(*p) {
                return bad(format!("position {p:?} is not strictly inside the room"));
            }
        }
        if self.mic_positions_m[0] == self.mic_positions_m[1] {
            return bad("microphone positions must differ".into());
        }
        Ok(())
    }

    /// Uniform wall reflection coefficient, given or derived from T60.
    pub fn reflection_coeff(&self) -> Result<f64> {
        match (self.reflection_coeff, self.t60_s) {
            (Some(b), None) => Ok(b),
            (None, Some(t)) => Ok(eyring_reflection_coeff(self.room_dims_m, t, self.speed_of_sound_mps)),
            _ => Err(Error::invalid("give exactly one of reflection_coeff and t60_s")),
        }
    }

    /// Reflection order cutoff: the configured one, or the order at which
    /// wall losses alone reach the 60 dB image floor.
    pub fn effective_max_order(&self) -> Result<usize> {
        match self.max_order {
            Some(n) => Ok(n),
            None => Ok(default_max_order(self.reflection_coeff()?)),
        }
    }

    /// Images quieter than this fraction of the direct path are dropped.
    /// Only applies when `max_order` is derived rather than configured.
    pub fn image_floor(&self) -> f64 {
        if self.max_order.is_some() {
            0.0
        } else {
            IMAGE_FLOOR
        }
    }

    pub fn rir_taps(&self) -> usize {
        ((self.rir_length_s * self.sample_rate_hz as f64).round() as usize).max(1)
    }

    pub fn mic_spacing_m(&self) -> f64 {
        let [a, b] = self.mic_positions_m;
        a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    /// RIRs from `source` to both microphones.
    pub fn rir_pair(&self, source: Point3) -> Result<[Rir; 2]> {
        let order = self.effective_max_order()?;
        let floor = self.image_floor();
        let [m1, m2] = self.mic_positions_m;
        let (a, b) = rayon::join(
            || generate_rir_with_floor(self, source, m1, order, floor),
            || generate_rir_with_floor(self, source, m2, order, floor),
        );
        Ok([a?, b?])
    }

    /// Target RIR pair followed by one pair per noise position.
    pub fn all_rirs(&self) -> Result<SceneRirs> {
        let target = self.rir_pair(self.target_position_m)?;
        let noise = self
            .noise_positions_m
            .par_iter()
            .map(|&p| self.rir_pair(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(SceneRirs { target, noise })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRirs {
    pub target: [Rir; 2],
    pub noise: Vec<[Rir; 2]>,
}

fn spatialize(dry: &Waveform, pair: &[Rir; 2], len: usize) -> Result<StereoWaveform> {
    let ch1 = convolve(dry, &pair[0])?.resized(len);
    let ch2 = convolve(dry, &pair[1])?.resized(len);
    StereoWaveform::new(ch1, ch2)
}

/// Repeats `w` until it is `len` samples long, crossfading each seam over
/// `crossfade` samples, then truncates.
pub fn loop_to_length(w: &Waveform, len: usize, crossfade: usize) -> Waveform {
    let src = w.samples();
    if src.is_empty() {
        return w.resized(len);
    }
    let xf = crossfade.min(src.len() / 2);
    let mut out: Vec<f64> = src.to_vec();
    while out.len() < len {
        let seam = out.len() - xf;
        for i in 0..xf {
            let fade_in = (i as f64 + 0.5) / xf as f64;
            out[seam + i] = out[seam + i] * (1.0 - fade_in) + src[i] * fade_in;
        }
        out.extend_from_slice(&src[xf..]);
    }
    out.truncate(len);
    Waveform::new(out, w.sample_rate_hz()).expect("finite input stays finite")
}

/// Drops leading and trailing samples more than 60 dB below the peak.
pub fn trim_silence(w: &Waveform) -> Waveform {
    let x = w.samples();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = peak * 1e-3;
    match (x.iter().position(|v| v.abs() > floor), x.iter().rposition(|v| v.abs() > floor)) {
        (Some(a), Some(b)) => Waveform::new(x[a..=b].to_vec(), w.sample_rate_hz()).expect("subslice of finite samples"),
        _ => w.clone(),
    }
}

/// Seeded Gaussian sources, one per noise position.
pub fn white_noise_sources(scene: &RoomScene, len: usize, seed: u64) -> Vec<Waveform> {
    let normal = Normal::new(0.0, 0.1).expect("valid deviation");
    (0..scene.noise_positions_m.len())
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let x = (0..len).map(|_| normal.sample(&mut rng)).collect();
            Waveform::new(x, scene.sample_rate_hz).expect("gaussian samples are finite")
        })
        .collect()
}

/// Clean target and unscaled noise at both microphones, ready to mix at
/// any SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRender {
    pub clean_at_mics: StereoWaveform,
    pub noise_at_mics: StereoWaveform,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMix {
    pub stereo_mix: StereoWaveform,
    pub clean_at_mics: StereoWaveform,
    pub noise_at_mics: StereoWaveform,
    pub labels: Vec<bool>,
    pub noise_gain: f64,
    /// SNR re-measured on channel 1 after scaling.
    pub achieved_snr_db: f64,
}

/// Places the target and the noise sources in the room. Source `j` plays
/// every utterance whose index is `j` modulo the number of positions; when
/// there are fewer utterances than positions they are reused with a
/// circular offset. Every placed utterance is trimmed of edge silence,
/// looped to the target length and normalized to unit RMS before
/// convolution.
pub fn render_scene(
    scene: &RoomScene,
    target_speech: &Waveform,
    noise_utterances: &[Waveform],
    frame: &FrameParams,
) -> Result<SceneRender> {
    let rirs = scene.all_rirs()?;
    render_with_rirs(scene, &rirs, target_speech, noise_utterances, frame)
}

pub fn render_with_rirs(
    scene: &RoomScene,
    rirs: &SceneRirs,
    target_speech: &Waveform,
    noise_utterances: &[Waveform],
    frame: &FrameParams,
) -> Result<SceneRender> {
    scene.validate()?;
    if noise_utterances.is_empty() {
        return Err(Error::invalid("at least one noise utterance is required"));
    }
    if scene.noise_positions_m.is_empty() {
        return Err(Error::invalid("scene has no noise positions"));
    }
    let rate = scene.sample_rate_hz;
    for w in std::iter::once(target_speech).chain(noise_utterances) {
        if w.sample_rate_hz() != rate {
            return Err(Error::SampleRateMismatch(w.sample_rate_hz(), rate));
        }
    }
    let len = target_speech.len();
    let crossfade = (0.01 * rate as f64).round() as usize;
    let n_pos = scene.noise_positions_m.len();

    let mut placements: Vec<Vec<Waveform>> = vec![Vec::new(); n_pos];
    let trimmed: Vec<Waveform> = noise_utterances.iter().map(trim_silence).collect();
    for (i, u) in trimmed.iter().enumerate() {
        placements[i % n_pos].push(u.clone());
    }
    for (j, slot) in placements.iter_mut().enumerate() {
        if slot.is_empty() {
            let u = &trimmed[j % trimmed.len()];
            let round = j / noise_utterances.len();
            let rounds = n_pos.div_ceil(noise_utterances.len());
            let mut rotated = u.samples().to_vec();
            rotated.rotate_left(round * u.len() / rounds);
            slot.push(Waveform::new(rotated, rate)?);
        }
    }

    let clean_at_mics = spatialize(target_speech, &rirs.target, len)?;
    let beds = placements
        .par_iter()
        .zip(&rirs.noise)
        .map(|(utts, pair)| {
            let mut acc = StereoWaveform::new(Waveform::zeros(len, rate)?, Waveform::zeros(len, rate)?)?;
            for u in utts {
                let looped = loop_to_length(u, len, crossfade);
                let rms = looped.rms();
                if rms <= 0.0 {
                    return Err(Error::invalid("noise utterance is silent"));
                }
                acc = acc.add(&spatialize(&looped.scaled(1.0 / rms), pair, len)?)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut noise_at_mics = StereoWaveform::new(Waveform::zeros(len, rate)?, Waveform::zeros(len, rate)?)?;
    for bed in &beds {
        noise_at_mics = noise_at_mics.add(bed)?;
    }
    let labels = generate_labels(target_speech, frame)?;
    Ok(SceneRender {
        clean_at_mics,
        noise_at_mics,
        labels,
    })
}

impl SceneRender {
    /// Scales the noise against channel 1 of the clean signal and sums.
    pub fn mix(&self, spec: &MixSpec) -> Result<SceneMix> {
        let gain = noise_gain_for_snr(self.clean_at_mics.ch1(), self.noise_at_mics.ch1(), spec)?;
        let noise = self.noise_at_mics.scaled(gain);
        let achieved = measured_snr_db(self.clean_at_mics.ch1(), noise.ch1(), spec.snr_reference)?;
        Ok(SceneMix {
            stereo_mix: self.clean_at_mics.add(&noise)?,
            clean_at_mics: self.clean_at_mics.clone(),
            noise_at_mics: noise,
            labels: self.labels.clone(),
            noise_gain: gain,
            achieved_snr_db: achieved,
        })
    }
}

pub fn build_scene(
    scene: &RoomScene,
    target_speech: &Waveform,
    noise_utterances: &[Waveform],
    spec: &MixSpec,
    frame: &FrameParams,
) -> Result<SceneMix> {
    render_scene(scene, target_speech, noise_utterances, frame)?.mix(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENE_TOML: &str = r#"
room_dims_m = [9.5, 6.5, 5.0]
t60_s = 0.2
mic_positions_m = [[4.825, 3.25, 1.7], [4.675, 3.25, 1.7]]
target_position_m = [4.75, 2.857, 1.7]
noise_positions_m = [[7.75, 3.25, 1.7], [1.75, 3.25, 1.7]]
sample_rate_hz = 8000
rir_length_s = 0.3
seed = 7
"#;

    #[test]
    fn parses_scene_file() {
        let s = RoomScene::from_toml_str(SCENE_TOML).unwrap();
        assert_eq!(s.noise_positions_m.len(), 2);
        assert_eq!(s.speed_of_sound_mps, 343.0);
        assert_eq!(s.seed, 7);
        assert_eq!(s.rir_taps(), 2400);
        let again = RoomScene::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejects_invalid_scenes() {
        let both = format!("{SCENE_TOML}reflection_coeff = 0.5\n");
        assert!(RoomScene::from_toml_str(&both).is_err());
        let outside = SCENE_TOML.replace("[7.75, 3.25, 1.7]", "[9.75, 3.25, 1.7]");
        assert!(RoomScene::from_toml_str(&outside).is_err());
        let same_mics = SCENE_TOML.replace("[4.675, 3.25, 1.7]]", "[4.825, 3.25, 1.7]]");
        assert!(RoomScene::from_toml_str(&same_mics).is_err());
        assert!(RoomScene::from_toml_str("room_dims_m = [1, 1, 1]").is_err());
    }

    #[test]
    fn default_scene_geometry() {
        let s = RoomScene::default();
        s.validate().unwrap();
        assert!((s.mic_spacing_m() - 0.15).abs() < 1e-12);
        let center = [4.75, 3.25, 1.7];
        for p in &s.noise_positions_m {
            let r = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
            assert!((r - 3.0).abs() < 1e-12);
            assert_eq!(p[2], 1.7);
        }
    }

    #[test]
    fn trims_edge_silence_only() {
        let w = Waveform::new(vec![0.0, 1e-5, 0.5, 0.0, -0.2, 0.0, 0.0], 8000).unwrap();
        assert_eq!(trim_silence(&w).samples(), &[0.5, 0.0, -0.2]);
        let silent = Waveform::zeros(4, 8000).unwrap();
        assert_eq!(trim_silence(&silent), silent);
    }

    #[test]
    fn loop_with_crossfade() {
        let w = Waveform::new(vec![1.0; 100], 8000).unwrap();
        let l = loop_to_length(&w, 250, 10);
        assert_eq!(l.len(), 250);
        assert!(l.samples().iter().all(|&x| (x - 1.0).abs() < 1e-12));
        let short = loop_to_length(&w, 40, 10);
        assert_eq!(short.samples(), &[1.0; 40][..]);
    }

    #[test]
    fn white_sources_are_seeded_and_distinct() {
        let s = RoomScene::default();
        let a = white_noise_sources(&s, 100, 3);
        let b = white_noise_sources(&s, 100, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_ne!(a[0], a[1]);
        assert_ne!(a[0], white_noise_sources(&s, 100, 4)[0]);
    }
}
