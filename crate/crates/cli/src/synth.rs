use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use kfwpe::acoustics::{make_example, make_example_with_noise};

use crate::config::{resolve_dataset, FileConfig, SynthArgs};
use crate::corpus::{export_example, write_manifest, ManifestRow, MANIFEST_NAME};
use crate::error::{CliError, CliResult};
use crate::wav;

#[derive(Args, Debug)]
pub struct SynthCmd {
    /// Output directory; receives the WAVs and `manifest.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    /// Noise recording to use instead of seeded pink noise. Channel `d` of
    /// the corpus takes file channel `d mod channels`, from a seeded offset.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
}

pub fn run(cmd: &SynthCmd, file: &FileConfig, seed: Option<u64>) -> CliResult<()> {
    let cfg = resolve_dataset(&cmd.synth, file, seed)?;
    let noise = match &cmd.noise {
        Some(p) => {
            let a = wav::read(p)?;
            if a.sample_rate_hz != cfg.sample_rate_hz {
                return Err(CliError::config(format!(
                    "noise is sampled at {} Hz, corpus at {} Hz",
                    a.sample_rate_hz, cfg.sample_rate_hz
                ))
                .at(p));
            }
            if a.len() < cfg.example_len() {
                return Err(CliError::config(format!(
                    "noise has {} samples, examples need {}",
                    a.len(),
                    cfg.example_len()
                ))
                .at(p));
            }
            Some(a)
        }
        None => None,
    };
    let params = cfg.sample_params()?;
    std::fs::create_dir_all(&cmd.out).map_err(|e| CliError::from(e).at(&cmd.out))?;

    let rows: Vec<ManifestRow> = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let ex = match &noise {
                None => make_example(&cfg, p)?,
                Some(a) => {
                    let len = cfg.example_len();
                    let offset = (p.seed % (a.len() - len + 1) as u64) as usize;
                    let segs: Vec<&[f64]> = (0..cfg.channels)
                        .map(|d| &a.channels[d % a.channels.len()][offset..offset + len])
                        .collect();
                    make_example_with_noise(&cfg, p, &segs)?
                }
            };
            export_example(&cmd.out, i, &ex)
        })
        .collect::<CliResult<_>>()?;
    write_manifest(&cmd.out.join(MANIFEST_NAME), &rows)?;
    println!("wrote {} examples to {}", rows.len(), cmd.out.display());
    Ok(())
}
