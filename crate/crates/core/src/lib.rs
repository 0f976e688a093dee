//! Dual-microphone voice activity detection with a spatial front end.
//!
//! A GCC-PHAT delay estimate per frame gates a single-channel VAD engine
//! (Sohn likelihood ratio or frame energy), optionally after delay-and-sum
//! beamforming. The crate also simulates reverberant two-microphone scenes
//! and scores detectors with ROC/AUC.

pub mod csvio;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod frontend;
pub mod itd;
pub mod room;
pub mod signal;
pub mod svad;
pub mod synth;
pub mod wav;

pub use error::{Error, Result};
pub use eval::{auc, confusion, pool_utterances, roc_sweep, ConfusionCounts, RocCurve, RocPoint, ThresholdMode};
pub use experiment::{run_bench, AucRow, BenchConfig, BenchReport, EngineKind, NoiseKind, UtteranceRecord};
pub use frontend::{
    and_combine, ds_beamform, filter_frames, run_mono, run_pipeline, run_pipeline_with, spatial_detect, Beamformer,
    DelayAndSum, DetectorConfig, DetectorOutput, PipelineOutput, PreprocessMode, SCORE_FLOOR,
};
pub use itd::{
    angle_resolution_deg, estimate_itd, fov_deg, gcc_phat, max_itd, ArrayGeometry, GccPeak, GccPhat, ItdTrack,
};
pub use room::{
    build_scene, convolve, generate_labels, generate_rir, measured_snr_db, measured_t60, scale_noise_to_snr, MixSpec,
    Rir, RoomScene, SceneMix, SnrReference,
};
pub use signal::{frame_signal, FrameParams, FrameSequence, StereoWaveform, Waveform, Window};
pub use svad::{
    hangover, threshold_scores, EnergyVad, HangoverParams, PrecomputedScores, SohnParams, SohnVad, SvadScorer,
};
pub use synth::synthetic_utterance;
pub use wav::{load_wav, save_wav, Audio};
