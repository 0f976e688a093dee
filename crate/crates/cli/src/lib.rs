//! Argument parsing and command dispatch for the `dualvad` binary.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dualvad_core::{PreprocessMode, SnrReference};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "dualvad", version, about = "Spatially pre-processed voice activity detection for a two-microphone array")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a reverberant two-microphone mixture with reference labels.
    Simulate(SimulateArgs),
    /// Export the scene's room impulse responses.
    Rir(RirArgs),
    /// Run one pre-processing mode and engine over a WAV file.
    Vad(VadArgs),
    /// Confusion counts of decisions against labels.
    Eval(EvalArgs),
    /// Pooled ROC curve and AUC from score and label files.
    Roc(RocArgs),
    /// The full noise x SNR x mode x engine AUC matrix.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Sohn,
    Energy,
    /// Scores read from a CSV produced elsewhere.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SnrRef {
    P56,
    Rms,
}

impl From<SnrRef> for SnrReference {
    fn from(r: SnrRef) -> Self {
        match r {
            SnrRef::P56 => SnrReference::P56ActiveSpeech,
            SnrRef::Rms => SnrReference::Rms,
        }
    }
}

/// `white`, `babble` (competing talkers from the speech list) or
/// `babble:<dir>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NoiseArg {
    White,
    Babble(Option<PathBuf>),
}

impl FromStr for NoiseArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s.eq_ignore_ascii_case("white") => Ok(Self::White),
            None if s.eq_ignore_ascii_case("babble") => Ok(Self::Babble(None)),
            Some((kind, dir)) if kind.eq_ignore_ascii_case("babble") && !dir.is_empty() => {
                Ok(Self::Babble(Some(PathBuf::from(dir))))
            }
            _ => Err(format!("expected `white`, `babble` or `babble:<dir>`, got `{s}`")),
        }
    }
}

/// A WAV file, a directory of WAV files, or `synth:<count>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpeechArg {
    Path(PathBuf),
    Synthetic(usize),
}

impl FromStr for SpeechArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("synth:") {
            Some(n) => n
                .parse()
                .map(Self::Synthetic)
                .map_err(|_| format!("bad utterance count in `{s}`")),
            None => Ok(Self::Path(PathBuf::from(s))),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FramingArgs {
    /// Analysis frame length in milliseconds.
    #[arg(long, default_value_t = 25.0)]
    pub frame_ms: f64,
    /// Frame shift in milliseconds.
    #[arg(long, default_value_t = 10.0)]
    pub shift_ms: f64,
    /// Lower detector lag threshold in samples.
    #[arg(long, default_value_t = -1, allow_hyphen_values = true)]
    pub thr1: i32,
    /// Upper detector lag threshold in samples.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub thr2: i32,
    #[arg(long, default_value_t = 8)]
    pub hang_frames: usize,
    #[arg(long, default_value_t = 1)]
    pub onset_frames: usize,
    /// Decision threshold on the mean log likelihood ratio.
    #[arg(long, allow_hyphen_values = true)]
    pub sohn_eta: Option<f64>,
    /// Decision threshold of the energy engine in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub energy_threshold_db: Option<f64>,
    /// Microphone spacing in meters; defaults to the scene's, then 0.15.
    #[arg(long)]
    pub mic_spacing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene TOML; the built-in office room when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Dry target speech (mono WAV).
    #[arg(long)]
    pub speech: PathBuf,
    /// `white` or `babble:<dir>`.
    #[arg(long)]
    pub noise: Option<NoiseArg>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub snr: f64,
    #[arg(long, value_enum, default_value_t = SnrRef::P56)]
    pub snr_reference: SnrRef,
    /// Overrides the scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub framing: FramingArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RirArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Also write peak-normalized WAV files.
    #[arg(long)]
    pub wav: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VadArgs {
    /// Stereo WAV; mono is accepted for mode `none`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = PreprocessMode::None)]
    pub mode: PreprocessMode,
    #[arg(long, value_enum, default_value_t = Engine::Sohn)]
    pub engine: Engine,
    /// Scores CSV (`frame_index,score`) for `--engine external`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Decision threshold for external scores.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub external_threshold: f64,
    /// Scene TOML, used for the array geometry.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[command(flatten)]
    pub framing: FramingArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with a `decision` column.
    #[arg(long)]
    pub decisions: PathBuf,
    /// CSV with a `label` column.
    #[arg(long)]
    pub labels: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    /// Score CSVs, one per utterance; paired in order with `--labels`.
    #[arg(long, required = true, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    /// Column holding the scores.
    #[arg(long, default_value = "score")]
    pub column: String,
    /// Use this many quantile thresholds instead of every distinct score.
    #[arg(long)]
    pub quantiles: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// WAV file, directory of WAV files, or `synth:<count>`.
    #[arg(long)]
    pub speech: SpeechArg,
    /// Length of each synthetic utterance in seconds.
    #[arg(long, default_value_t = 3.0)]
    pub synth_duration: f64,
    /// Noise conditions; `white` and `babble` when omitted.
    #[arg(long, value_delimiter = ',')]
    pub noise: Vec<NoiseArg>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr: Vec<f64>,
    #[arg(long = "mode", value_delimiter = ',')]
    pub modes: Vec<PreprocessMode>,
    #[arg(long = "engine", value_enum, value_delimiter = ',')]
    pub engines: Vec<Engine>,
    #[arg(long, value_enum, default_value_t = SnrRef::P56)]
    pub snr_reference: SnrRef,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Overrides the scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub framing: FramingArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// A bad invocation or unmet precondition; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage and precondition failures, 1 for anything internal.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<dualvad_core::Error>() {
            return match e {
                dualvad_core::Error::Io(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Rir(a) => commands::rir(&a),
        Command::Vad(a) => commands::vad(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Roc(a) => commands::roc(&a),
        Command::Bench(a) => commands::bench(&a),
    }
}
