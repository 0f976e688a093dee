//! 16-bit PCM WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::signal::{StereoWaveform, Waveform};

const PCM_SCALE: f64 = 32768.0;

/// A decoded file, mono or stereo.
#[derive(Debug, Clone, PartialEq)]
pub enum Audio {
    Mono(Waveform),
    Stereo(StereoWaveform),
}

impl Audio {
    pub fn sample_rate_hz(&self) -> u32 {
        match self {
            Audio::Mono(w) => w.sample_rate_hz(),
            Audio::Stereo(s) => s.sample_rate_hz(),
        }
    }

    pub fn channels(&self) -> u16 {
        match self {
            Audio::Mono(_) => 1,
            Audio::Stereo(_) => 2,
        }
    }

    /// Channel 1 of a stereo file, or the mono signal itself.
    pub fn first_channel(&self) -> &Waveform {
        match self {
            Audio::Mono(w) => w,
            Audio::Stereo(s) => s.ch1(),
        }
    }
}

impl From<Waveform> for Audio {
    fn from(w: Waveform) -> Self {
        Audio::Mono(w)
    }
}

impl From<StereoWaveform> for Audio {
    fn from(s: StereoWaveform) -> Self {
        Audio::Stereo(s)
    }
}

pub fn pcm_to_amplitude(v: i16) -> f64 {
    v as f64 / PCM_SCALE
}

/// Clips to `[-1, 1 - 2^-15]` and rounds to the nearest code.
pub fn amplitude_to_pcm(a: f64) -> i16 {
    let max = 1.0 - 1.0 / PCM_SCALE;
    (a.clamp(-1.0, max) * PCM_SCALE).round() as i16
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<Audio> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if !(1..=2).contains(&spec.channels) {
        return Err(Error::UnsupportedEncoding(format!(
            "{} channels",
            spec.channels
        )));
    }
    let raw = reader.samples::<i16>().collect::<Result<Vec<_>, _>>()?;
    if raw.is_empty() {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    let rate = spec.sample_rate;
    if spec.channels == 1 {
        let w = Waveform::new(raw.into_iter().map(pcm_to_amplitude).collect(), rate)?;
        return Ok(Audio::Mono(w));
    }
    let ch1 = raw.iter().step_by(2).copied().map(pcm_to_amplitude).collect();
    let ch2 = raw.iter().skip(1).step_by(2).copied().map(pcm_to_amplitude).collect();
    Ok(Audio::Stereo(StereoWaveform::new(
        Waveform::new(ch1, rate)?,
        Waveform::new(ch2, rate)?,
    )?))
}

pub fn save_wav(audio: &Audio, path: impl AsRef<Path>) -> Result<()> {
    let spec = WavSpec {
        channels: audio.channels(),
        sample_rate: audio.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    match audio {
        Audio::Mono(w) => {
            for &s in w.samples() {
                writer.write_sample(amplitude_to_pcm(s))?;
            }
        }
        Audio::Stereo(st) => {
            for (&a, &b) in st.ch1().samples().iter().zip(st.ch2().samples()) {
                writer.write_sample(amplitude_to_pcm(a))?;
                writer.write_sample(amplitude_to_pcm(b))?;
            }
        }
    }
    writer.finalize()?;
    Ok(())
}
