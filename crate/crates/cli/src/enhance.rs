use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use kfwpe::{
    engine::process_utterance, MaskNet, NeuralNetWeights, PsdEstimator, Stft, TransitionModel,
    VarNet,
};

use crate::config::{EngineArgs, EngineConfig, FileConfig, PsdSource, TransitionSource};
use crate::corpus::{base_dir, load_example, read_manifest, ManifestRow};
use crate::error::{CliError, CliResult};
use crate::wav::{self, WavFormat};

pub const RUN_RECORD: &str = "run.json";
pub const ENHANCED_INDEX: &str = "enhanced.jsonl";

#[derive(Args, Debug)]
pub struct EnhanceCmd {
    /// Corpus manifest; required for the oracle PSD.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub manifest: Option<PathBuf>,
    /// A single WAV file to enhance.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = WavFormat::F32)]
    pub format: WavFormat,
    /// Skip writing the per-file diagnostics dump (needed by `evaluate`).
    #[arg(long)]
    pub no_diagnostics: bool,
    #[command(flatten)]
    pub engine: EngineArgs,
}

/// Settings the outputs were produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub engine: EngineConfig,
    pub format: WavFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedRow {
    pub id: String,
    pub enhanced: PathBuf,
    pub diagnostics: Option<PathBuf>,
}

/// Networks loaded once and shared by all files.
pub struct Networks {
    pub masknet: Option<Arc<MaskNet>>,
    pub varnet: Option<Arc<VarNet>>,
}

fn load_weights(path: &Path) -> CliResult<NeuralNetWeights> {
    // Missing or unreadable weights are a configuration problem.
    NeuralNetWeights::load(path).map_err(|e| CliError::config(e.to_string()).at(path))
}

pub fn load_networks(cfg: &EngineConfig) -> CliResult<Networks> {
    let bins = cfg.stft.num_bins();
    let check = |what: &str, net_bins: usize, path: &Path| {
        if net_bins == bins {
            Ok(())
        } else {
            Err(
                CliError::config(format!("{what} expects {net_bins} bins, STFT gives {bins}"))
                    .at(path),
            )
        }
    };
    let masknet = match &cfg.psd {
        PsdSource::Masknet(p) => {
            let net = MaskNet::from_weights(&load_weights(p)?)
                .map_err(|e| CliError::config(e.to_string()).at(p))?;
            check("mask network", net.bins(), p)?;
            Some(Arc::new(net))
        }
        _ => None,
    };
    let varnet = match &cfg.transition {
        TransitionSource::Varnet { path } => {
            let net = VarNet::from_weights(&load_weights(path)?)
                .map_err(|e| CliError::config(e.to_string()).at(path))?;
            check("transition network", net.bins(), path)?;
            Some(Arc::new(net))
        }
        _ => None,
    };
    Ok(Networks { masknet, varnet })
}

pub fn psd_estimator(
    cfg: &EngineConfig,
    nets: &Networks,
    target: Option<kfwpe::ComplexSpectrogram>,
) -> CliResult<PsdEstimator> {
    Ok(match &cfg.psd {
        PsdSource::Oracle => PsdEstimator::oracle(target.ok_or_else(|| {
            CliError::config("oracle PSD needs ground-truth components (use --manifest)")
        })?),
        PsdSource::Smoothed => PsdEstimator::smoothed_periodogram(cfg.smoothing)?,
        PsdSource::Masknet(_) => PsdEstimator::masknet(nets.masknet.clone().expect("loaded")),
    })
}

pub fn transition_model(cfg: &EngineConfig, nets: &Networks) -> TransitionModel {
    match cfg.transition {
        TransitionSource::Zero => TransitionModel::Zero,
        TransitionSource::Fixed { eta_db } => TransitionModel::fixed_bias_db(eta_db),
        TransitionSource::Varnet { .. } => TransitionModel::varnet(
            nets.varnet.clone().expect("loaded"),
            cfg.eta_max_db,
            cfg.residual_feed,
        ),
    }
}

struct Job {
    id: String,
    mixture: Vec<Vec<f64>>,
    target: Option<Vec<Vec<f64>>>,
    sample_rate_hz: u32,
}

fn enhance_one(
    job: &Job,
    cfg: &EngineConfig,
    nets: &Networks,
) -> CliResult<(Vec<Vec<f64>>, Vec<u8>)> {
    if job.sample_rate_hz != cfg.stft.sample_rate_hz {
        return Err(CliError::data(format!(
            "{}: sampled at {} Hz, engine runs at {} Hz",
            job.id, job.sample_rate_hz, cfg.stft.sample_rate_hz
        )));
    }
    let len = job.mixture[0].len();
    let stft = Stft::new(cfg.stft)?;
    let spec = stft.analyze(&job.mixture)?;
    if spec.frames() == 0 {
        return Err(CliError::data(format!(
            "{}: shorter than one STFT window",
            job.id
        )));
    }
    let wpe = kfwpe::WpeConfig {
        channels: job.mixture.len(),
        ..cfg.wpe
    };
    let target = job.target.as_ref().map(|t| stft.analyze(t)).transpose()?;
    let mut psd = psd_estimator(cfg, nets, target)?;
    let mut transition = transition_model(cfg, nets);
    let res = process_utterance(&spec, &mut psd, &mut transition, &wpe)?;
    let mut out = stft.synthesize(&res.enhanced)?;
    for c in &mut out {
        c.resize(len, 0.0);
    }
    Ok((out, res.diagnostics.to_bytes()))
}

pub fn run(cmd: &EnhanceCmd, file: &FileConfig) -> CliResult<()> {
    let cfg = EngineConfig::resolve(&cmd.engine, file)?;
    if cmd.input.is_some() && cfg.needs_ground_truth() {
        return Err(CliError::config(
            "oracle PSD needs ground-truth components; pass --manifest or choose another --psd",
        ));
    }
    let nets = load_networks(&cfg)?;
    let sources: Vec<(String, Option<(PathBuf, ManifestRow)>)> = match (&cmd.manifest, &cmd.input) {
        (Some(m), _) => {
            let base = base_dir(m);
            read_manifest(m)?
                .into_iter()
                .map(|r| (r.id.clone(), Some((base.clone(), r))))
                .collect()
        }
        (None, Some(p)) => {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned());
            vec![(stem.unwrap_or_else(|| "input".into()), None)]
        }
        (None, None) => unreachable!("clap requires one of --manifest and --input"),
    };
    std::fs::create_dir_all(&cmd.out).map_err(|e| CliError::from(e).at(&cmd.out))?;

    let rows: Vec<EnhancedRow> = sources
        .par_iter()
        .map(|(id, src)| {
            let job = match src {
                Some((base, row)) => {
                    let ex = load_example(base, row)?;
                    Job {
                        id: id.clone(),
                        target: cfg.needs_ground_truth().then(|| ex.target.clone()),
                        sample_rate_hz: ex.sample_rate_hz,
                        mixture: ex.mixture,
                    }
                }
                None => {
                    let p = cmd.input.as_ref().expect("input");
                    let a = wav::read(p)?;
                    Job {
                        id: id.clone(),
                        mixture: a.channels,
                        target: None,
                        sample_rate_hz: a.sample_rate_hz,
                    }
                }
            };
            let (audio, diag) = enhance_one(&job, &cfg, &nets)?;
            let enhanced = PathBuf::from(format!("{id}.wav"));
            wav::write(
                &cmd.out.join(&enhanced),
                &audio,
                job.sample_rate_hz,
                cmd.format,
            )?;
            let diagnostics = if cmd.no_diagnostics {
                None
            } else {
                let p = PathBuf::from(format!("{id}.kwpd"));
                std::fs::write(cmd.out.join(&p), diag).map_err(|e| CliError::from(e).at(&p))?;
                Some(p)
            };
            Ok(EnhancedRow {
                id: id.clone(),
                enhanced,
                diagnostics,
            })
        })
        .collect::<CliResult<_>>()?;

    let record = RunRecord {
        engine: cfg,
        format: cmd.format,
    };
    let path = cmd.out.join(RUN_RECORD);
    std::fs::write(&path, serde_json::to_string_pretty(&record)?)
        .map_err(|e| CliError::from(e).at(&path))?;
    let mut index = String::new();
    for r in &rows {
        index.push_str(&serde_json::to_string(r)?);
        index.push('\n');
    }
    let path = cmd.out.join(ENHANCED_INDEX);
    std::fs::write(&path, index).map_err(|e| CliError::from(e).at(&path))?;
    println!("enhanced {} files into {}", rows.len(), cmd.out.display());
    Ok(())
}
