//! The evaluation matrix: noise kinds x SNRs x engines x pre-processing modes.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{auc, confusion, pool_utterances, roc_sweep, ThresholdMode};
use crate::frontend::{run_pipeline, DetectorConfig, PreprocessMode};
use crate::room::level::{MixSpec, SnrReference};
use crate::room::scene::{render_with_rirs, white_noise_sources, RoomScene};
use crate::signal::{FrameParams, Waveform};
use crate::svad::{EnergyVad, HangoverParams, SohnParams, SohnVad, SvadScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Babble,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::White => "white",
            Self::Babble => "babble",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Sohn,
    Energy,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sohn => "sohn",
            Self::Energy => "energy",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sohn" => Ok(Self::Sohn),
            "energy" => Ok(Self::Energy),
            other => Err(Error::invalid(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub scene: RoomScene,
    pub frame: FrameParams,
    pub detector: DetectorConfig,
    pub hangover: HangoverParams,
    pub sohn: SohnParams,
    pub energy: EnergyVad,
    pub noises: Vec<NoiseKind>,
    pub snrs_db: Vec<f64>,
    pub snr_reference: SnrReference,
    pub engines: Vec<EngineKind>,
    pub modes: Vec<PreprocessMode>,
    /// Competing talkers per babble mixture.
    pub babble_talkers: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let scene = RoomScene::default();
        Self {
            frame: FrameParams::for_rate(scene.sample_rate_hz),
            detector: DetectorConfig::default(),
            hangover: HangoverParams::default(),
            sohn: SohnParams::default(),
            energy: EnergyVad::default(),
            noises: vec![NoiseKind::White, NoiseKind::Babble],
            snrs_db: vec![-5.0, 0.0, 10.0, 20.0],
            snr_reference: SnrReference::P56ActiveSpeech,
            engines: vec![EngineKind::Sohn, EngineKind::Energy],
            modes: PreprocessMode::ALL.to_vec(),
            babble_talkers: scene.noise_positions_m.len(),
            seed: scene.seed,
            scene,
        }
    }
}

impl BenchConfig {
    pub fn make_engine(&self, kind: EngineKind) -> Result<Box<dyn SvadScorer + Send>> {
        Ok(match kind {
            EngineKind::Sohn => Box::new(SohnVad::new(self.sohn, self.frame.fft_size())?),
            EngineKind::Energy => Box::new(self.energy),
        })
    }

    fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.frame.validate()?;
        self.detector.validate()?;
        self.sohn.validate()?;
        if self.noises.is_empty() || self.snrs_db.is_empty() || self.engines.is_empty() || self.modes.is_empty() {
            return Err(Error::invalid("bench matrix has an empty axis"));
        }
        if self.scene.sample_rate_hz != self.detector.geometry.sample_rate_hz {
            return Err(Error::SampleRateMismatch(
                self.detector.geometry.sample_rate_hz,
                self.scene.sample_rate_hz,
            ));
        }
        Ok(())
    }
}

/// Scores and decisions of one utterance under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub utterance: usize,
    pub noise: NoiseKind,
    pub snr_db: f64,
    pub engine: EngineKind,
    pub mode: PreprocessMode,
    pub scores: Vec<f64>,
    pub decisions: Vec<bool>,
    pub labels: Vec<bool>,
    pub achieved_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucRow {
    pub noise: NoiseKind,
    pub snr_db: f64,
    pub engine: EngineKind,
    pub mode: PreprocessMode,
    pub auc: f64,
    /// Utterances pooled into the curve.
    pub utterances: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<AucRow>,
    pub records: Vec<UtteranceRecord>,
}

impl BenchReport {
    pub fn auc(&self, noise: NoiseKind, snr_db: f64, engine: EngineKind, mode: PreprocessMode) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.noise == noise && r.snr_db == snr_db && r.engine == engine && r.mode == mode)
            .map(|r| r.auc)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["noise", "snr_db", "engine", "mode", "auc", "utterances"])?;
        for r in &self.rows {
            w.write_record([
                r.noise.to_string(),
                r.snr_db.to_string(),
                r.engine.to_string(),
                r.mode.to_string(),
                format!("{:.6}", r.auc),
                r.utterances.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Confusion counts at each engine's default operating point, one row
    /// per utterance and condition.
    pub fn write_utterance_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "utterance", "noise", "snr_db", "engine", "mode", "achieved_snr_db", "tp", "fp", "tn", "fn",
        ])?;
        for r in &self.records {
            let c = confusion(&r.decisions, &r.labels)?;
            w.write_record([
                r.utterance.to_string(),
                r.noise.to_string(),
                r.snr_db.to_string(),
                r.engine.to_string(),
                r.mode.to_string(),
                format!("{:.4}", r.achieved_snr_db),
                c.tp.to_string(),
                c.fp.to_string(),
                c.tn.to_string(),
                c.fn_.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mix_seed(seed: u64, utterance: usize) -> u64 {
    seed ^ (utterance as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn babble_for(i: usize, speech: &[Waveform], pool: Option<&[Waveform]>, talkers: usize) -> Result<Vec<Waveform>> {
    let talkers = talkers.max(1);
    match pool {
        Some(pool) if !pool.is_empty() => Ok((0..talkers).map(|k| pool[(i + k) % pool.len()].clone()).collect()),
        Some(_) => Err(Error::invalid("babble pool is empty")),
        None if speech.len() < 2 => Err(Error::invalid(
            "babble from the speech list needs at least two utterances",
        )),
        None => {
            let others = speech.len() - 1;
            Ok((0..talkers.min(others))
                .map(|k| speech[(i + 1 + k) % speech.len()].clone())
                .collect())
        }
    }
}

fn run_utterance(
    cfg: &BenchConfig,
    rirs: &crate::room::scene::SceneRirs,
    i: usize,
    speech: &[Waveform],
    pool: Option<&[Waveform]>,
) -> Result<Vec<UtteranceRecord>> {
    let target = &speech[i];
    let mut out = Vec::new();
    for &noise in &cfg.noises {
        let sources = match noise {
            NoiseKind::White => white_noise_sources(&cfg.scene, target.len(), mix_seed(cfg.seed, i)),
            NoiseKind::Babble => babble_for(i, speech, pool, cfg.babble_talkers)?,
        };
        let render = render_with_rirs(&cfg.scene, rirs, target, &sources, &cfg.frame)?;
        for &snr_db in &cfg.snrs_db {
            let mix = render.mix(&MixSpec {
                snr_db,
                snr_reference: cfg.snr_reference,
            })?;
            for &engine in &cfg.engines {
                let mut svad = cfg.make_engine(engine)?;
                for &mode in &cfg.modes {
                    let p = run_pipeline(&mix.stereo_mix, mode, &cfg.detector, svad.as_mut(), &cfg.frame, &cfg.hangover)?;
                    out.push(UtteranceRecord {
                        utterance: i,
                        noise,
                        snr_db,
                        engine,
                        mode,
                        scores: p.scores,
                        decisions: p.decisions,
                        labels: mix.labels.clone(),
                        achieved_snr_db: mix.achieved_snr_db,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Runs the full matrix over `speech`. Babble for utterance `i` comes from
/// `babble_pool` when given, otherwise from the other speech utterances.
/// AUCs pool all frames of a condition before the ROC sweep.
pub fn run_bench(cfg: &BenchConfig, speech: &[Waveform], babble_pool: Option<&[Waveform]>) -> Result<BenchReport> {
    if speech.is_empty() {
        return Err(Error::invalid("speech list is empty"));
    }
    cfg.validate()?;
    let rirs = cfg.scene.all_rirs()?;

    let per_utt = (0..speech.len())
        .into_par_iter()
        .map(|i| run_utterance(cfg, &rirs, i, speech, babble_pool))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<UtteranceRecord> = per_utt.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &noise in &cfg.noises {
        for &snr_db in &cfg.snrs_db {
            for &engine in &cfg.engines {
                for &mode in &cfg.modes {
                    let cell: Vec<&UtteranceRecord> = records
                        .iter()
                        .filter(|r| r.noise == noise && r.snr_db == snr_db && r.engine == engine && r.mode == mode)
                        .collect();
                    let (scores, labels, skipped) =
                        pool_utterances(cell.iter().map(|r| (&r.scores[..], &r.labels[..])));
                    let curve = roc_sweep(&scores, &labels, ThresholdMode::Exhaustive)?;
                    rows.push(AucRow {
                        noise,
                        snr_db,
                        engine,
                        mode,
                        auc: auc(&curve)?,
                        utterances: cell.len() - skipped,
                    });
                }
            }
        }
    }
    Ok(BenchReport { rows, records })
}
