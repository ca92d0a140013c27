//! Run configuration. Every setting resolves as built-in default, then the
//! TOML config file, then the command-line flag, the last one present
//! winning. The same structs back the flags and the file sections.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use kfwpe::estimators::{FIXED_BIAS_DB, MAX_BIAS_DB};
use kfwpe::{DatasetConfig, Mode, ResidualFeed, StftConfig, WpeConfig};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SMOOTHING: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Kf,
    Rls,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Kf => Mode::KalmanFilter,
            ModeArg::Rls => Mode::RecursiveLeastSquares,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeedArg {
    Previous,
    NetworkLagged,
}

impl From<FeedArg> for ResidualFeed {
    fn from(f: FeedArg) -> ResidualFeed {
        match f {
            FeedArg::Previous => ResidualFeed::Previous,
            FeedArg::NetworkLagged => ResidualFeed::NetworkLagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum PsdSource {
    Oracle,
    Smoothed,
    Masknet(PathBuf),
}

impl FromStr for PsdSource {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.split_once(':') {
            None if s == "oracle" => Ok(PsdSource::Oracle),
            None if s == "smoothed" => Ok(PsdSource::Smoothed),
            Some(("masknet", p)) if !p.is_empty() => Ok(PsdSource::Masknet(p.into())),
            _ => Err(CliError::config(format!(
                "psd source `{s}`: expected oracle, smoothed or masknet:<path>"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TransitionSource {
    /// `phi` identically zero.
    Zero,
    Fixed {
        eta_db: f64,
    },
    Varnet {
        path: PathBuf,
    },
}

impl FromStr for TransitionSource {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let bad = || {
            CliError::config(format!(
                "transition source `{s}`: expected zero, fixed[:<eta dB>] or varnet:<path>"
            ))
        };
        match s.split_once(':') {
            None if s == "zero" => Ok(TransitionSource::Zero),
            None if s == "fixed" => Ok(TransitionSource::Fixed {
                eta_db: FIXED_BIAS_DB,
            }),
            Some(("fixed", v)) => {
                let eta_db: f64 = v.parse().map_err(|_| bad())?;
                if !eta_db.is_finite() {
                    return Err(bad());
                }
                Ok(TransitionSource::Fixed { eta_db })
            }
            Some(("varnet", p)) if !p.is_empty() => Ok(TransitionSource::Varnet { path: p.into() }),
            _ => Err(bad()),
        }
    }
}

/// Engine settings as given on the command line or in `[engine]`.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// oracle | smoothed | masknet:<weights>
    #[arg(long)]
    pub psd: Option<String>,
    /// zero | fixed[:<eta dB>] | varnet:<weights>
    #[arg(long)]
    pub transition: Option<String>,
    /// Smoothed-periodogram memory in [0, 1).
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Upper bound of the network-predicted bias, dB.
    #[arg(long, allow_hyphen_values = true)]
    pub eta_max_db: Option<f64>,
    #[arg(long, value_enum)]
    pub residual_feed: Option<FeedArg>,
    #[arg(long)]
    pub taps: Option<usize>,
    #[arg(long)]
    pub delay: Option<usize>,
    #[arg(long)]
    pub rls_forgetting: Option<f64>,
    #[arg(long)]
    pub init_cov_scale: Option<f64>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
}

/// Corpus settings as given on the command line or in `[synth]`.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// Number of examples.
    #[arg(long = "n")]
    pub n: Option<usize>,
    #[arg(long)]
    pub t60_min: Option<f64>,
    #[arg(long)]
    pub t60_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_max: Option<f64>,
    /// Seconds per example.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub channels: Option<usize>,
}

/// Layout of the TOML config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub skip_seconds: Option<f64>,
    pub engine: EngineArgs,
    pub synth: SynthArgs,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::config(e.to_string()).at(path))?;
        toml::from_str(&text).map_err(|e| CliError::config(e.to_string()).at(path))
    }
}

macro_rules! merge {
    ($flag:expr, $file:expr, $default:expr) => {
        $flag.or($file).unwrap_or($default)
    };
}

impl EngineArgs {
    fn over(&self, file: &EngineArgs) -> EngineArgs {
        EngineArgs {
            mode: self.mode.or(file.mode),
            psd: self.psd.clone().or_else(|| file.psd.clone()),
            transition: self.transition.clone().or_else(|| file.transition.clone()),
            smoothing: self.smoothing.or(file.smoothing),
            eta_max_db: self.eta_max_db.or(file.eta_max_db),
            residual_feed: self.residual_feed.or(file.residual_feed),
            taps: self.taps.or(file.taps),
            delay: self.delay.or(file.delay),
            rls_forgetting: self.rls_forgetting.or(file.rls_forgetting),
            init_cov_scale: self.init_cov_scale.or(file.init_cov_scale),
            window_len: self.window_len.or(file.window_len),
            hop: self.hop.or(file.hop),
        }
    }
}

/// Fully resolved engine configuration, recorded next to enhanced outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub psd: PsdSource,
    pub transition: TransitionSource,
    pub smoothing: f64,
    pub eta_max_db: f64,
    pub residual_feed: ResidualFeed,
    pub stft: StftConfig,
    /// `channels` is taken from the data at processing time.
    pub wpe: WpeConfig,
}

impl EngineConfig {
    pub fn resolve(flags: &EngineArgs, file: &FileConfig) -> CliResult<Self> {
        let a = flags.over(&file.engine);
        let d_stft = StftConfig::default();
        let d_wpe = WpeConfig::default();
        let stft = StftConfig {
            window_len: a.window_len.unwrap_or(d_stft.window_len),
            hop: a.hop.unwrap_or(d_stft.hop),
            sample_rate_hz: d_stft.sample_rate_hz,
        };
        stft.validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        let wpe = WpeConfig {
            mode: a.mode.map_or(d_wpe.mode, Mode::from),
            taps: a.taps.unwrap_or(d_wpe.taps),
            delay: a.delay.unwrap_or(d_wpe.delay),
            rls_forgetting: a.rls_forgetting.unwrap_or(d_wpe.rls_forgetting),
            init_cov_scale: a.init_cov_scale.unwrap_or(d_wpe.init_cov_scale),
            ..d_wpe
        };
        wpe.validate()?;
        let smoothing = a.smoothing.unwrap_or(DEFAULT_SMOOTHING);
        if !(0.0..1.0).contains(&smoothing) {
            return Err(CliError::config(format!(
                "smoothing {smoothing} outside [0, 1)"
            )));
        }
        let eta_max_db = a.eta_max_db.unwrap_or(MAX_BIAS_DB);
        if !eta_max_db.is_finite() {
            return Err(CliError::config("eta_max_db must be finite"));
        }
        Ok(EngineConfig {
            psd: a.psd.as_deref().unwrap_or("oracle").parse()?,
            transition: match a.transition.as_deref() {
                Some(t) => t.parse()?,
                None => TransitionSource::Fixed {
                    eta_db: FIXED_BIAS_DB,
                },
            },
            smoothing,
            eta_max_db,
            residual_feed: a
                .residual_feed
                .map_or(ResidualFeed::default(), ResidualFeed::from),
            stft,
            wpe,
        })
    }

    pub fn needs_ground_truth(&self) -> bool {
        self.psd == PsdSource::Oracle
    }
}

pub fn resolve_dataset(
    flags: &SynthArgs,
    file: &FileConfig,
    seed: Option<u64>,
) -> CliResult<DatasetConfig> {
    let f = &file.synth;
    let d = DatasetConfig::default();
    let cfg = DatasetConfig {
        n_examples: merge!(flags.n, f.n, d.n_examples),
        t60_range: (
            merge!(flags.t60_min, f.t60_min, d.t60_range.0),
            merge!(flags.t60_max, f.t60_max, d.t60_range.1),
        ),
        snr_range: (
            merge!(flags.snr_min, f.snr_min, d.snr_range.0),
            merge!(flags.snr_max, f.snr_max, d.snr_range.1),
        ),
        seed: merge!(seed, file.seed, d.seed),
        duration_seconds: merge!(flags.duration, f.duration, d.duration_seconds),
        channels: merge!(flags.channels, f.channels, d.channels),
        sample_rate_hz: d.sample_rate_hz,
    };
    if cfg.channels > crate::wav::MAX_CHANNELS {
        return Err(CliError::config(format!(
            "{} channels requested, WAV corpus supports at most {}",
            cfg.channels,
            crate::wav::MAX_CHANNELS
        )));
    }
    cfg.validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(cfg)
}
