//! Image-source room impulse responses for a shoebox room with uniform
//! wall reflection.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::room::scene::{FractionalDelay, Point3, RoomScene};
use crate::signal::Waveform;

/// Image amplitudes below this fraction of the direct path are not rendered.
pub const IMAGE_FLOOR: f64 = 1e-3;
const MAX_ORDER_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Index and value of the largest-magnitude tap.
    pub fn peak(&self) -> Option<(usize, f64)> {
        self.taps
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
    }

    /// Taps scaled so the largest magnitude is just below full scale.
    pub fn to_normalized_waveform(&self) -> Result<Waveform> {
        let peak = self.peak().map_or(0.0, |p| p.1.abs());
        let gain = if peak > 0.0 { 0.99 / peak } else { 1.0 };
        Waveform::new(self.taps.iter().map(|t| t * gain).collect(), self.sample_rate_hz)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "tap"])?;
        for (i, t) in self.taps.iter().enumerate() {
            w.write_record([i.to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform pressure reflection coefficient giving `t60_s` by Eyring's formula.
pub fn eyring_reflection_coeff(dims: Point3, t60_s: f64, speed_of_sound: f64) -> f64 {
    let [l, w, h] = dims;
    let volume = l * w * h;
    let surface = 2.0 * (l * w + l * h + w * h);
    // T60 = 24 ln(10) V / (-c S ln(1 - alpha)), beta = sqrt(1 - alpha)
    let log_energy_refl = -24.0 * std::f64::consts::LN_10 * volume / (speed_of_sound * surface * t60_s);
    (0.5 * log_energy_refl).exp()
}

/// Smallest order at which every image is at least 60 dB below the direct
/// path, bounding distance attenuation by 1.
pub fn default_max_order(beta: f64) -> usize {
    if beta <= 0.0 {
        return 0;
    }
    if beta >= 1.0 {
        return MAX_ORDER_CAP;
    }
    ((IMAGE_FLOOR.ln() / beta.ln()).ceil() as usize).min(MAX_ORDER_CAP)
}

fn distance(a: Point3, b: Point3) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Calls `f(order, image)` for every mirror image of `source` with at most
/// `max_order` reflections.
fn for_each_image(dims: Point3, source: Point3, max_order: usize, mut f: impl FnMut(usize, Point3)) {
    let reach = (max_order as i64 + 1) / 2;
    for mx in -reach..=reach {
        for my in -reach..=reach {
            for mz in -reach..=reach {
                let m = [mx, my, mz];
                for mirror in 0..8u8 {
                    let q = [(mirror & 1) as i64, ((mirror >> 1) & 1) as i64, ((mirror >> 2) & 1) as i64];
                    let mut order = 0usize;
                    let mut image = [0.0; 3];
                    for d in 0..3 {
                        order += (2 * m[d] - q[d]).unsigned_abs() as usize;
                        image[d] = (1 - 2 * q[d]) as f64 * source[d] + 2.0 * m[d] as f64 * dims[d];
                    }
                    if order <= max_order {
                        f(order, image);
                    }
                }
            }
        }
    }
}

/// RIR from `source` to `mic`, summing mirror images with at most
/// `max_order` wall reflections. Each image contributes
/// `beta^reflections / (4 pi r)` at delay `r / c * fs`.
pub fn generate_rir(scene: &RoomScene, source: Point3, mic: Point3, max_order: usize) -> Result<Rir> {
    generate_rir_with_floor(scene, source, mic, max_order, 0.0)
}

/// Like [`generate_rir`], but drops every image whose amplitude is below
/// `relative_floor` times the direct-path amplitude.
pub fn generate_rir_with_floor(
    scene: &RoomScene,
    source: Point3,
    mic: Point3,
    max_order: usize,
    relative_floor: f64,
) -> Result<Rir> {
    scene.validate()?;
    for (name, p) in [("source", source), ("microphone", mic)] {
        if !scene.contains(p) {
            return Err(Error::DegenerateGeometry(format!(
                "{name} {p:?} is not strictly inside the room"
            )));
        }
    }
    if distance(source, mic) < 1e-9 {
        return Err(Error::DegenerateGeometry(
            "source coincides with microphone".into(),
        ));
    }

    let beta = scene.reflection_coeff()?;
    let fs = scene.sample_rate_hz as f64;
    let c = scene.speed_of_sound_mps;
    let n_taps = scene.rir_taps();
    let mut taps = vec![0.0; n_taps];

    let direct = distance(source, mic);

    // windowed-sinc half width: 4 ms
    let half_width = (0.004 * fs).round().max(1.0);

    for_each_image(scene.room_dims_m, source, max_order, |order, image| {
        let gain = if order == 0 { 1.0 } else { beta.powi(order as i32) };
        let r = distance(image, mic);
        if gain == 0.0 || gain * direct / r < relative_floor {
            return;
        }
        let amp = gain / (4.0 * PI * r);
        let delay = r / c * fs;
        match scene.fractional_delay {
            FractionalDelay::Nearest => {
                let idx = delay.round() as usize;
                if idx < n_taps {
                    taps[idx] += amp;
                }
            }
            FractionalDelay::Sinc => {
                let lo = (delay - half_width).ceil().max(0.0) as usize;
                let hi = (delay + half_width).floor() as usize;
                for (n, tap) in taps.iter_mut().enumerate().take(hi + 1).skip(lo) {
                    let x = n as f64 - delay;
                    let win = 0.5 * (1.0 + (PI * x / half_width).cos());
                    let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
                    *tap += amp * win * sinc;
                }
            }
        }
    });
    Ok(Rir {
        taps,
        sample_rate_hz: scene.sample_rate_hz,
    })
}

/// Reverberation time from Schroeder backward integration, fitted over the
/// -5 dB to -25 dB range of the energy decay curve and extrapolated to 60 dB.
pub fn measured_t60(rir: &Rir) -> Result<f64> {
    let total: f64 = rir.taps.iter().map(|t| t * t).sum();
    if total <= 0.0 {
        return Err(Error::invalid("impulse response has no energy"));
    }
    let mut edc = vec![0.0; rir.taps.len()];
    let mut acc = 0.0;
    for (e, t) in edc.iter_mut().zip(&rir.taps).rev() {
        acc += t * t;
        *e = acc;
    }
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).log10()).collect();
    let start = db.iter().position(|&d| d <= -5.0).ok_or(Error::DecayRangeNotReached(-5.0))?;
    let end = db.iter().position(|&d| d <= -25.0).ok_or(Error::DecayRangeNotReached(-25.0))?;
    let points: Vec<(f64, f64)> = (start..=end)
        .filter(|&i| db[i].is_finite())
        .map(|i| (i as f64 / rir.sample_rate_hz as f64, db[i]))
        .collect();
    if points.len() < 2 {
        return Err(Error::invalid("no reverberant tail to fit"));
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_d = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_d)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let slope = cov / var;
    if slope >= 0.0 {
        return Err(Error::invalid("energy decay curve does not fall"));
    }
    Ok(-60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anechoic() -> RoomScene {
        RoomScene {
            reflection_coeff: Some(0.0),
            t60_s: None,
            ..RoomScene::default()
        }
    }

    #[test]
    fn anechoic_single_tap() {
        let scene = anechoic();
        let src = [4.0, 3.0, 1.7];
        let mic = [5.0, 3.5, 1.2];
        let rir = generate_rir(&scene, src, mic, 5).unwrap();
        let r = distance(src, mic);
        let idx = (r / 343.0 * 8000.0).round() as usize;
        let nonzero: Vec<usize> = (0..rir.len()).filter(|&i| rir.taps[i] != 0.0).collect();
        assert_eq!(nonzero, vec![idx]);
        assert!((rir.taps[idx] - 1.0 / (4.0 * PI * r)).abs() < 1e-9);
    }

    #[test]
    fn amplitude_halves_with_double_distance() {
        let scene = anechoic();
        let mic = [2.0, 3.0, 1.7];
        let near = generate_rir(&scene, [3.0, 3.0, 1.7], mic, 0).unwrap().peak().unwrap().1;
        let far = generate_rir(&scene, [4.0, 3.0, 1.7], mic, 0).unwrap().peak().unwrap().1;
        assert!((near / far - 2.0).abs() < 1e-9);
    }

    #[test]
    fn office_direct_path_delays() {
        let scene = RoomScene::default();
        let rir1 = generate_rir(&scene, scene.target_position_m, scene.mic_positions_m[0], 0).unwrap();
        let rir2 = generate_rir(&scene, scene.target_position_m, scene.mic_positions_m[1], 0).unwrap();
        // |(0.075, 0.393, 0)| = 0.4001 m -> 9.33 samples
        assert_eq!(rir1.peak().unwrap().0, 9);
        assert_eq!(rir2.peak().unwrap().0, 9);
        assert_eq!(rir1.taps, rir2.taps);
    }

    #[test]
    fn tdoa_matches_geometry() {
        let scene = RoomScene::default();
        let src = [7.0, 3.25, 1.7];
        let [m1, m2] = scene.mic_positions_m;
        let d1 = generate_rir(&scene, src, m1, 0).unwrap().peak().unwrap().0 as i64;
        let d2 = generate_rir(&scene, src, m2, 0).unwrap().peak().unwrap().0 as i64;
        let expect = ((distance(src, m2) / 343.0 * 8000.0).round()
            - (distance(src, m1) / 343.0 * 8000.0).round()) as i64;
        assert_eq!(d2 - d1, expect);
        assert!(d2 - d1 > 0);
    }

    #[test]
    fn degenerate_positions() {
        let scene = RoomScene::default();
        let mic = scene.mic_positions_m[0];
        assert!(matches!(
            generate_rir(&scene, mic, mic, 3),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(generate_rir(&scene, [10.0, 1.0, 1.0], mic, 3).is_err());
    }

    #[test]
    fn eyring_and_order() {
        let beta = eyring_reflection_coeff([9.5, 6.5, 5.0], 0.2, 343.0);
        assert!(beta > 0.6 && beta < 0.7, "{beta}");
        assert_eq!(default_max_order(0.0), 0);
        let n = default_max_order(beta);
        assert!(beta.powi(n as i32) <= IMAGE_FLOOR);
        assert!(beta.powi(n as i32 - 1) > IMAGE_FLOOR);
    }

    #[test]
    fn relative_floor_prunes_weak_images() {
        let scene = RoomScene::default();
        let src = [7.75, 3.25, 1.7];
        let mic = scene.mic_positions_m[0];
        let full = generate_rir(&scene, src, mic, 16).unwrap();
        let pruned = generate_rir_with_floor(&scene, src, mic, 16, IMAGE_FLOOR).unwrap();
        assert_eq!(full.peak(), pruned.peak());
        let energy = |r: &Rir| r.taps.iter().map(|t| t * t).sum::<f64>();
        assert!(energy(&pruned) < energy(&full));
        let direct_amp = full.peak().unwrap().1;
        assert!(pruned.taps.iter().all(|&t| t == 0.0 || t.abs() >= IMAGE_FLOOR * direct_amp * 0.999));
    }

    #[test]
    fn t60_of_exponential_decay() {
        let fs = 8000;
        let t60 = 0.35;
        // amplitude envelope 10^(-3 t / T60) gives 60 dB of energy decay per T60
        let taps = (0..8000)
            .map(|i| {
                let t = i as f64 / fs as f64;
                10f64.powf(-3.0 * t / t60) * if i % 2 == 0 { 1.0 } else { -1.0 }
            })
            .collect();
        let got = measured_t60(&Rir { taps, sample_rate_hz: fs }).unwrap();
        assert!((got / t60 - 1.0).abs() < 0.05, "{got}");
    }

    #[test]
    fn t60_of_single_tap_is_rejected() {
        let mut taps = vec![0.0; 100];
        taps[3] = 1.0;
        assert!(measured_t60(&Rir { taps, sample_rate_hz: 8000 }).is_err());
        assert!(measured_t60(&Rir { taps: vec![0.0; 10], sample_rate_hz: 8000 }).is_err());
    }

    #[test]
    fn sinc_delay_puts_energy_near_the_path() {
        let scene = RoomScene {
            fractional_delay: FractionalDelay::Sinc,
            ..anechoic()
        };
        let src = [4.0, 3.0, 1.7];
        let mic = [4.5, 3.1, 1.7];
        let rir = generate_rir(&scene, src, mic, 0).unwrap();
        let delay = distance(src, mic) / 343.0 * 8000.0;
        assert!((rir.peak().unwrap().0 as f64 - delay).abs() <= 0.5);
    }
}
