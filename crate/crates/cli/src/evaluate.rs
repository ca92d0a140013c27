use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use kfwpe::engine::{shadow_filter, Diagnostics, FilterTrajectory};
use kfwpe::metrics::{aggregate, evaluate_example, EvalCase, EvalOptions, DEFAULT_SKIP_SECONDS};
use kfwpe::{EvalReport, ExampleMetrics, Stft, StftConfig, WpeConfig};

use crate::config::FileConfig;
use crate::corpus::{base_dir, load_example, read_jsonl, read_manifest};
use crate::enhance::{EnhancedRow, RunRecord, ENHANCED_INDEX, RUN_RECORD};
use crate::error::{CliError, CliResult};
use crate::wav;

/// Largest tolerated relative L2 gap between a stored enhanced WAV and the
/// replayed output; covers 16-bit quantization, not a different corpus.
pub const STORED_OUTPUT_TOLERANCE: f64 = 1e-2;

#[derive(Args, Debug)]
pub struct EvaluateCmd {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory of `enhance`.
    #[arg(long, required_unless_present = "identity")]
    pub enhanced: Option<PathBuf>,
    /// Score the unprocessed mixtures instead (all improvements zero).
    #[arg(long, conflicts_with = "enhanced")]
    pub identity: bool,
    /// Report path; defaults to `report.json` next to the enhanced files
    /// (or the manifest with `--identity`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write per-example metrics as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Seconds excluded from the start of every signal.
    #[arg(long)]
    pub skip_seconds: Option<f64>,
}

pub fn run(cmd: &EvaluateCmd, file: &FileConfig) -> CliResult<EvalReport> {
    let skip_seconds = cmd
        .skip_seconds
        .or(file.skip_seconds)
        .unwrap_or(DEFAULT_SKIP_SECONDS);
    if !(skip_seconds >= 0.0 && skip_seconds.is_finite()) {
        return Err(CliError::config(format!(
            "skip_seconds {skip_seconds} must be >= 0"
        )));
    }
    let rows = read_manifest(&cmd.manifest)?;
    let base = base_dir(&cmd.manifest);

    let (stft_cfg, wpe, outputs) = match &cmd.enhanced {
        None => (StftConfig::default(), WpeConfig::default(), None),
        Some(dir) => {
            let rec_path = dir.join(RUN_RECORD);
            let text =
                std::fs::read_to_string(&rec_path).map_err(|e| CliError::from(e).at(&rec_path))?;
            let rec: RunRecord =
                serde_json::from_str(&text).map_err(|e| CliError::from(e).at(&rec_path))?;
            let index: Vec<EnhancedRow> = read_jsonl(&dir.join(ENHANCED_INDEX))?;
            let by_id: BTreeMap<String, EnhancedRow> =
                index.into_iter().map(|r| (r.id.clone(), r)).collect();
            if by_id.len() != rows.len() || rows.iter().any(|r| !by_id.contains_key(&r.id)) {
                return Err(CliError::data(format!(
                    "enhanced outputs in {} do not match the corpus ({} outputs, {} examples)",
                    dir.display(),
                    by_id.len(),
                    rows.len()
                )));
            }
            (rec.engine.stft, rec.engine.wpe, Some((dir.clone(), by_id)))
        }
    };

    let examples: Vec<ExampleMetrics> = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let ex = load_example(&base, row)?;
            let wpe = WpeConfig {
                channels: ex.channels(),
                ..wpe
            };
            let opts = EvalOptions {
                wpe,
                stft: stft_cfg,
                skip_seconds,
            };
            let stft = Stft::new(stft_cfg)?;
            let mixture = stft.analyze(&ex.mixture)?;
            let (frames, bins) = (mixture.frames(), mixture.bins());
            let (trajectory, enhanced) = match &outputs {
                None => (FilterTrajectory::zeros(frames, bins, &wpe), mixture),
                Some((dir, by_id)) => {
                    let out = &by_id[&row.id];
                    let diag_path = out.diagnostics.as_ref().ok_or_else(|| {
                        CliError::data(format!("{}: enhanced without diagnostics, cannot evaluate", row.id))
                    })?;
                    let diag_path = dir.join(diag_path);
                    let bytes = std::fs::read(&diag_path).map_err(|e| CliError::from(e).at(&diag_path))?;
                    let diag = Diagnostics::from_bytes(&bytes).map_err(|e| CliError::from(e).at(&diag_path))?;
                    if (diag.frames, diag.bins) != (frames, bins) {
                        return Err(CliError::data(format!(
                            "{}: diagnostics cover {}x{} frames x bins, example has {frames}x{bins}",
                            row.id, diag.frames, diag.bins
                        )));
                    }
                    let trajectory = FilterTrajectory::Replay {
                        mixture: mixture.clone(),
                        lambda: diag.lambda,
                        phi: diag.phi,
                        cfg: wpe,
                    };
                    let enhanced = shadow_filter(&[mixture], &trajectory, &wpe)?.remove(0);
                    check_stored_output(&stft, &enhanced, &dir.join(&out.enhanced), &row.id)?;
                    (trajectory, enhanced)
                }
            };
            let case = EvalCase {
                example: &ex,
                enhanced: &enhanced,
                trajectory: &trajectory,
            };
            Ok(evaluate_example(i, &case, &opts)?)
        })
        .collect::<CliResult<_>>()?;

    let report = aggregate(examples, skip_seconds);
    let path = match (&cmd.report, &cmd.enhanced) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("report.json"),
        (None, None) => base.join("identity_report.json"),
    };
    report
        .write_json(&path)
        .map_err(|e| CliError::from(e).at(&path))?;
    if let Some(p) = &cmd.csv {
        let f = std::fs::File::create(p).map_err(|e| CliError::from(e).at(p))?;
        report.write_csv(f).map_err(|e| CliError::from(e).at(p))?;
    }
    print!("{}", report.table());
    Ok(report)
}

/// The replayed output must reproduce the stored WAV; otherwise the outputs
/// belong to another corpus or configuration.
fn check_stored_output(
    stft: &Stft,
    replayed: &kfwpe::ComplexSpectrogram,
    path: &std::path::Path,
    id: &str,
) -> CliResult<()> {
    let stored = wav::read(path)?;
    let replayed = stft.synthesize(replayed)?;
    if stored.channels.len() != replayed.len() {
        return Err(CliError::data(format!(
            "{id}: stored output has a different channel count"
        )));
    }
    let (mut err, mut energy) = (0.0, 0.0);
    for (s, r) in stored.channels.iter().zip(&replayed) {
        for (a, b) in s.iter().zip(r) {
            err += (a - b) * (a - b);
            energy += b * b;
        }
    }
    let rel = if energy > 0.0 {
        (err / energy).sqrt()
    } else {
        err.sqrt()
    };
    if !(rel <= STORED_OUTPUT_TOLERANCE) {
        return Err(CliError::data(format!(
            "{id}: stored enhanced output differs from the replay by {rel:e} (relative)"
        )));
    }
    Ok(())
}
