use dualvad_core::room::scene::render_scene;
use dualvad_core::*;

fn utterances(n: u64) -> Vec<Waveform> {
    (0..n).map(|s| synthetic_utterance(100 + s, 8000, 2.5).unwrap()).collect()
}

fn speech_frames_at_lag_zero(scene: &RoomScene, snr_db: f64) -> f64 {
    let p = FrameParams::default();
    let speech = utterances(5);
    let (mut zero, mut total) = (0usize, 0usize);
    for i in 0..speech.len() {
        let babble: Vec<Waveform> = (1..speech.len()).map(|k| speech[(i + k) % speech.len()].clone()).collect();
        let mix = build_scene(scene, &speech[i], &babble, &MixSpec::new(snr_db), &p).unwrap();
        let itd = estimate_itd(&mix.stereo_mix, &p, &ArrayGeometry::default()).unwrap();
        for (tau, &l) in itd.tau_per_frame.iter().zip(&mix.labels) {
            if l {
                total += 1;
                zero += usize::from(*tau == 0);
            }
        }
    }
    zero as f64 / total as f64
}

#[test]
fn broadside_target_dominates_itd_at_zero_db() {
    let share = speech_frames_at_lag_zero(&RoomScene::default(), 0.0);
    assert!(share > 0.5, "{share}");
}

#[test]
fn anechoic_broadside_target_has_zero_itd() {
    let scene = RoomScene {
        t60_s: None,
        reflection_coeff: Some(0.0),
        ..RoomScene::default()
    };
    assert_eq!(speech_frames_at_lag_zero(&scene, 200.0), 1.0);
}

#[test]
fn scene_build_is_deterministic_and_hits_the_snr() {
    let scene = RoomScene::default();
    let p = FrameParams::default();
    let speech = utterances(3);
    for snr in [-5.0, 0.0, 10.0, 20.0] {
        let a = build_scene(&scene, &speech[0], &speech[1..], &MixSpec::new(snr), &p).unwrap();
        let b = build_scene(&scene, &speech[0], &speech[1..], &MixSpec::new(snr), &p).unwrap();
        assert_eq!(a, b);
        assert!((a.achieved_snr_db - snr).abs() < 0.01);
        assert_eq!(a.labels.len(), p.frame_count(speech[0].len()));
    }
}

#[test]
fn mixing_is_linear_in_the_target() {
    let scene = RoomScene::default();
    let p = FrameParams::default();
    let speech = utterances(2);
    let base = render_scene(&scene, &speech[0], &speech[1..], &p).unwrap();
    let g = 0.25;
    let scaled = render_scene(&scene, &speech[0].scaled(g), &speech[1..], &p).unwrap();
    let spec = MixSpec::new(0.0);
    let m0 = base.mix(&spec).unwrap();
    // keep the absolute noise level: SNR drops by 20 log10(1/g)
    let m1 = scaled.mix(&MixSpec::new(20.0 * g.log10())).unwrap();
    assert!((m1.noise_gain / m0.noise_gain - 1.0).abs() < 1e-9);
    for (a, b) in m0.clean_at_mics.ch1().samples().iter().zip(scaled.clean_at_mics.ch1().samples()) {
        assert!((a * g - b).abs() < 1e-12);
    }
    assert_eq!(m0.labels, m1.labels);
}

#[test]
fn high_snr_mix_is_close_to_clean() {
    let scene = RoomScene::default();
    let p = FrameParams::default();
    let speech = utterances(2);
    let m = build_scene(&scene, &speech[0], &speech[1..], &MixSpec::new(200.0), &p).unwrap();
    let err: f64 = m
        .stereo_mix
        .ch1()
        .samples()
        .iter()
        .zip(m.clean_at_mics.ch1().samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn scene_file_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("room.toml");
    let scene = RoomScene::default();
    std::fs::write(&path, scene.to_toml_string()).unwrap();
    assert_eq!(RoomScene::load(&path).unwrap(), scene);
}
