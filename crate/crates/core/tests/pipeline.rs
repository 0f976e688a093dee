use dualvad_core::*;

fn default_run(s: &StereoWaveform, mode: PreprocessMode, engine: &mut (dyn SvadScorer + Send)) -> PipelineOutput {
    run_pipeline(s, mode, &DetectorConfig::default(), engine, &FrameParams::default(), &HangoverParams::default()).unwrap()
}

#[test]
fn off_axis_interferer_is_gated_in_and_mode() {
    // a lone interferer that reaches mic 2 three samples before mic 1
    let x = synthetic_utterance(7, 8000, 2.0).unwrap();
    let mut delayed = vec![0.0; 3];
    delayed.extend_from_slice(&x.samples()[..x.len() - 3]);
    let s = StereoWaveform::new(Waveform::new(delayed, 8000).unwrap(), x.clone()).unwrap();
    let mut energy = EnergyVad::default();
    let none = default_run(&s, PreprocessMode::None, &mut energy);
    let a = default_run(&s, PreprocessMode::A, &mut energy);
    assert!(none.decisions.iter().filter(|&&d| d).count() > 20);
    let det = a.detector.as_ref().unwrap();
    for (t, (&d, &f)) in a.decisions.iter().zip(&det.f_per_frame).enumerate() {
        assert!(!d || f, "frame {t}");
        assert!(d <= none.decisions[t]);
    }
    let active: Vec<usize> = (0..none.len()).filter(|&t| none.scores[t] > -60.0).collect();
    let gated = active.iter().filter(|&&t| !det.f_per_frame[t]).count();
    assert!(gated as f64 > 0.9 * active.len() as f64, "{gated} of {}", active.len());
}

#[test]
fn every_mode_runs_on_a_scene_mix() {
    let speech: Vec<Waveform> = (0..3).map(|s| synthetic_utterance(s, 8000, 2.0).unwrap()).collect();
    let p = FrameParams::default();
    let mix = build_scene(&RoomScene::default(), &speech[0], &speech[1..], &MixSpec::new(0.0), &p).unwrap();
    let mut sohn = SohnVad::new(SohnParams::default(), p.fft_size()).unwrap();
    let none = default_run(&mix.stereo_mix, PreprocessMode::None, &mut sohn);
    for mode in PreprocessMode::ALL {
        let out = default_run(&mix.stereo_mix, mode, &mut sohn);
        assert_eq!(out.len(), mix.labels.len());
        assert_eq!(out.detector.is_some(), mode.uses_detector());
        if mode == PreprocessMode::A {
            for t in 0..out.len() {
                assert!(out.decisions[t] <= none.decisions[t]);
            }
        }
    }
}
