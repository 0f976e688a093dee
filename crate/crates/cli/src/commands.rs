use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dualvad_core::csvio::{format_real, read_binary, read_indexed, write_binary, write_indexed};
use dualvad_core::room::scene::white_noise_sources;
use dualvad_core::{
    auc, build_scene, confusion, load_wav, measured_t60, pool_utterances, roc_sweep, run_bench, run_mono,
    run_pipeline, save_wav, synthetic_utterance, ArrayGeometry, Audio, BenchConfig, DetectorConfig, EnergyVad,
    EngineKind, FrameParams, HangoverParams, MixSpec, NoiseKind, PrecomputedScores, PreprocessMode, RoomScene,
    SohnParams, SohnVad, SvadScorer, ThresholdMode, Waveform, Window,
};

use crate::{
    usage, BenchArgs, Engine, EvalArgs, FramingArgs, NoiseArg, RirArgs, RocArgs, SimulateArgs, SpeechArg, VadArgs,
};

fn load_scene(path: Option<&Path>) -> Result<RoomScene> {
    match path {
        Some(p) => RoomScene::load(p).with_context(|| format!("loading scene {}", p.display())),
        None => Ok(RoomScene::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn mono(path: &Path) -> Result<Waveform> {
    let audio = load_wav(path).with_context(|| format!("reading {}", path.display()))?;
    if let Audio::Stereo(_) = audio {
        log::warn!("{} is stereo; using channel 1", path.display());
    }
    Ok(audio.first_channel().clone())
}

/// Sorted `.wav` files of a directory, or the file itself.
fn wav_list(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(usage(format!("{} does not exist", path.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("no WAV files in {}", path.display())));
    }
    Ok(files)
}

fn load_all(path: &Path) -> Result<Vec<Waveform>> {
    wav_list(path)?.iter().map(|p| mono(p)).collect()
}

fn frame_params(f: &FramingArgs, rate: u32) -> Result<FrameParams> {
    Ok(FrameParams::from_ms(rate, f.frame_ms, f.shift_ms, Window::Hamming)?)
}

fn hangover_params(f: &FramingArgs) -> HangoverParams {
    HangoverParams {
        hang_frames: f.hang_frames,
        onset_frames: f.onset_frames,
    }
}

fn sohn_params(f: &FramingArgs) -> SohnParams {
    let mut p = SohnParams::default();
    if let Some(eta) = f.sohn_eta {
        p.threshold_eta = eta;
    }
    p
}

fn energy_vad(f: &FramingArgs) -> EnergyVad {
    let mut e = EnergyVad::default();
    if let Some(t) = f.energy_threshold_db {
        e.threshold_db = t;
    }
    e
}

fn detector(f: &FramingArgs, scene: Option<&RoomScene>, rate: u32) -> Result<DetectorConfig> {
    let spacing = f
        .mic_spacing
        .or(scene.map(RoomScene::mic_spacing_m))
        .unwrap_or(ArrayGeometry::default().mic_spacing_m);
    let c = scene.map_or(dualvad_core::itd::DEFAULT_SPEED_OF_SOUND, |s| s.speed_of_sound_mps);
    let geometry = ArrayGeometry::new(spacing, rate, c)?;
    Ok(DetectorConfig::new(f.thr1, f.thr2, geometry)?)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut scene = load_scene(a.scene.as_deref())?;
    if let Some(seed) = a.seed {
        scene.seed = seed;
    }
    let noise = a
        .noise
        .as_ref()
        .ok_or_else(|| usage("no noise given: pass --noise white or --noise babble:<dir>"))?;
    let target = mono(&a.speech)?;
    let sources = match noise {
        NoiseArg::White => white_noise_sources(&scene, target.len(), scene.seed),
        NoiseArg::Babble(Some(dir)) => load_all(dir)?,
        NoiseArg::Babble(None) => return Err(usage("simulate needs a directory: --noise babble:<dir>")),
    };
    let frame = frame_params(&a.framing, scene.sample_rate_hz)?;
    let spec = MixSpec {
        snr_db: a.snr,
        snr_reference: a.snr_reference.into(),
    };
    let mix = build_scene(&scene, &target, &sources, &spec, &frame)?;

    out_dir(&a.out)?;
    save_wav(&Audio::Stereo(mix.stereo_mix.clone()), a.out.join("mix.wav"))?;
    save_wav(&Audio::Stereo(mix.clean_at_mics.clone()), a.out.join("clean.wav"))?;
    let mut w = create(&a.out.join("labels.csv"))?;
    write_binary(&mut w, "label", &mix.labels)?;
    w.flush()?;
    println!("achieved SNR: {:.2} dB", mix.achieved_snr_db);
    Ok(())
}

pub fn rir(a: &RirArgs) -> Result<()> {
    let scene = load_scene(a.scene.as_deref())?;
    let rirs = scene.all_rirs()?;
    out_dir(&a.out)?;
    let named = std::iter::once(("target".to_string(), &rirs.target))
        .chain(rirs.noise.iter().enumerate().map(|(j, p)| (format!("noise{j}"), p)));
    for (name, pair) in named {
        for (k, rir) in pair.iter().enumerate() {
            let stem = format!("{name}_mic{}", k + 1);
            let mut w = create(&a.out.join(format!("{stem}.csv")))?;
            rir.write_csv(&mut w)?;
            w.flush()?;
            if a.wav {
                save_wav(&Audio::Mono(rir.to_normalized_waveform()?), a.out.join(format!("{stem}.wav")))?;
            }
            match measured_t60(rir) {
                Ok(t) => println!("{stem}: T60 {t:.3} s"),
                Err(e) => println!("{stem}: T60 unavailable ({e})"),
            }
        }
    }
    Ok(())
}

fn read_scores(path: &Path, column: &str) -> Result<Vec<f64>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_indexed(f, column).with_context(|| format!("reading {}", path.display()))
}

fn read_labels(path: &Path, column: &str) -> Result<Vec<bool>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_binary(f, column).with_context(|| format!("reading {}", path.display()))
}

pub fn vad(a: &VadArgs) -> Result<()> {
    let scene = a.scene.as_deref().map(|p| load_scene(Some(p))).transpose()?;
    let audio = load_wav(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let rate = audio.sample_rate_hz();
    let frame = frame_params(&a.framing, rate)?;
    let hang = hangover_params(&a.framing);

    let mut engine: Box<dyn SvadScorer + Send> = match a.engine {
        Engine::Sohn => Box::new(SohnVad::new(sohn_params(&a.framing), frame.fft_size())?),
        Engine::Energy => Box::new(energy_vad(&a.framing)),
        Engine::External => {
            if a.mode.is_filter() {
                return Err(usage(format!(
                    "mode {} re-scores filtered frames and cannot use external scores",
                    a.mode
                )));
            }
            let path = a
                .scores
                .as_ref()
                .ok_or_else(|| usage("--engine external needs --scores <csv>"))?;
            let scores = read_scores(path, "score")?;
            let expected = frame.frame_count(audio.first_channel().len());
            if scores.len() != expected {
                return Err(usage(format!(
                    "{} holds {} scores but the input has {expected} frames",
                    path.display(),
                    scores.len()
                )));
            }
            Box::new(PrecomputedScores::new(scores, a.external_threshold))
        }
    };

    let out = match &audio {
        Audio::Mono(_) if a.mode.needs_stereo() => {
            return Err(usage(format!("mode {} needs a stereo input", a.mode)));
        }
        Audio::Mono(w) => run_mono(w, engine.as_mut(), &frame, &hang)?,
        Audio::Stereo(s) => {
            let cfg = detector(&a.framing, scene.as_ref(), rate)?;
            run_pipeline(s, a.mode, &cfg, engine.as_mut(), &frame, &hang)?
        }
    };

    out_dir(&a.out)?;
    let mut w = create(&a.out.join("vad.csv"))?;
    out.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&a.out.join("scores.csv"))?;
    write_indexed(&mut w, "score", out.scores.iter().map(|&s| format_real(s)))?;
    w.flush()?;
    let mut w = create(&a.out.join("decisions.csv"))?;
    write_binary(&mut w, "decision", &out.decisions)?;
    w.flush()?;
    if let Some(itd) = &out.itd {
        let mut w = create(&a.out.join("itd.csv"))?;
        itd.write_csv(&mut w)?;
        w.flush()?;
    }
    let active = out.decisions.iter().filter(|&&d| d).count();
    println!("{active} of {} frames speech", out.len());
    Ok(())
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let decisions = read_labels(&a.decisions, "decision")?;
    let labels = read_labels(&a.labels, "label")?;
    let counts = confusion(&decisions, &labels)?;
    let mut out = sink(a.out.as_deref())?;
    counts.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn roc(a: &RocArgs) -> Result<()> {
    if a.scores.len() != a.labels.len() {
        return Err(usage(format!(
            "{} score files but {} label files",
            a.scores.len(),
            a.labels.len()
        )));
    }
    let mut utterances = Vec::with_capacity(a.scores.len());
    for (s, l) in a.scores.iter().zip(&a.labels) {
        let scores = read_scores(s, &a.column)?;
        let labels = read_labels(l, "label")?;
        if scores.len() != labels.len() {
            return Err(usage(format!(
                "{} has {} frames but {} has {}",
                s.display(),
                scores.len(),
                l.display(),
                labels.len()
            )));
        }
        utterances.push((scores, labels));
    }
    let (scores, labels, _) = pool_utterances(utterances.iter().map(|(s, l)| (&s[..], &l[..])));
    if scores.is_empty() {
        return Err(usage("every utterance has single-class labels"));
    }
    let mode = a.quantiles.map_or(ThresholdMode::Exhaustive, ThresholdMode::Quantiles);
    let curve = roc_sweep(&scores, &labels, mode)?;
    let mut out = sink(a.out.as_deref())?;
    curve.write_csv(&mut out)?;
    out.flush()?;
    if a.out.is_some() {
        println!("AUC {:.6}", auc(&curve)?);
    }
    Ok(())
}

fn speech_list(a: &BenchArgs, rate: u32, seed: u64) -> Result<Vec<Waveform>> {
    let speech = match &a.speech {
        SpeechArg::Synthetic(n) => (0..*n as u64)
            .map(|i| synthetic_utterance(seed.wrapping_add(i), rate, a.synth_duration))
            .collect::<dualvad_core::Result<Vec<_>>>()?,
        SpeechArg::Path(p) => load_all(p)?,
    };
    if speech.is_empty() {
        return Err(usage("speech list is empty"));
    }
    Ok(speech)
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let mut scene = load_scene(a.scene.as_deref())?;
    if let Some(seed) = a.seed {
        scene.seed = seed;
    }
    let rate = scene.sample_rate_hz;

    let noise_args = if a.noise.is_empty() {
        vec![NoiseArg::White, NoiseArg::Babble(None)]
    } else {
        a.noise.clone()
    };
    let mut pool_dir = None;
    let mut noises = Vec::new();
    for n in &noise_args {
        let kind = match n {
            NoiseArg::White => NoiseKind::White,
            NoiseArg::Babble(dir) => {
                if dir.is_some() {
                    if pool_dir.is_some() && pool_dir != dir.as_ref() {
                        return Err(usage("only one babble directory per bench run"));
                    }
                    pool_dir = dir.as_ref();
                }
                NoiseKind::Babble
            }
        };
        if !noises.contains(&kind) {
            noises.push(kind);
        }
    }
    let engines = if a.engines.is_empty() {
        vec![EngineKind::Sohn, EngineKind::Energy]
    } else {
        a.engines
            .iter()
            .map(|e| match e {
                Engine::Sohn => Ok(EngineKind::Sohn),
                Engine::Energy => Ok(EngineKind::Energy),
                Engine::External => Err(usage("bench runs built-in engines only")),
            })
            .collect::<Result<Vec<_>>>()?
    };

    let defaults = BenchConfig::default();
    let cfg = BenchConfig {
        frame: frame_params(&a.framing, rate)?,
        detector: detector(&a.framing, Some(&scene), rate)?,
        hangover: hangover_params(&a.framing),
        sohn: sohn_params(&a.framing),
        energy: energy_vad(&a.framing),
        noises,
        snrs_db: if a.snr.is_empty() { defaults.snrs_db } else { a.snr.clone() },
        snr_reference: a.snr_reference.into(),
        engines,
        modes: if a.modes.is_empty() { PreprocessMode::ALL.to_vec() } else { a.modes.clone() },
        babble_talkers: scene.noise_positions_m.len(),
        seed: scene.seed,
        scene,
    };
    let speech = speech_list(a, rate, cfg.seed)?;
    let pool = pool_dir.map(|d| load_all(d)).transpose()?;
    let report = run_bench(&cfg, &speech, pool.as_deref())?;

    out_dir(&a.out)?;
    let mut w = create(&a.out.join("auc.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&a.out.join("utterances.csv"))?;
    report.write_utterance_csv(&mut w)?;
    w.flush()?;
    let mut stdout = io::stdout().lock();
    report.write_csv(&mut stdout)?;
    Ok(())
}
