//! Image-source room simulation and reverberant scene mixing.

pub mod convolve;
pub mod ism;
pub mod level;
pub mod scene;

pub use convolve::convolve;
pub use ism::{eyring_reflection_coeff, generate_rir, generate_rir_with_floor, measured_t60, Rir};
pub use level::{
    active_speech_level, generate_labels, measure_active_speech, measured_snr_db,
    scale_noise_to_snr, MixSpec, SnrReference, SpeechLevel,
};
pub use scene::{
    build_scene, circle_positions, render_scene, white_noise_sources, FractionalDelay, Point3,
    RoomScene, SceneMix, SceneRender,
};
