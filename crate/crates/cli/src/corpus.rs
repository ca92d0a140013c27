//! On-disk corpus: one directory per example holding the mixture and its
//! three components as float WAVs, indexed by a JSON-lines manifest whose
//! paths are relative to the manifest.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kfwpe::MixtureExample;

use crate::error::{CliError, CliResult};
use crate::wav::{self, WavFormat};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub mixture: PathBuf,
    pub target: PathBuf,
    pub late: PathBuf,
    pub noise: PathBuf,
    pub t60: f64,
    pub snr_db: f64,
    pub seed: u64,
}

pub fn example_id(index: usize) -> String {
    format!("{index:04}")
}

/// Power of two that brings the mixture peak to at most full scale. Scaling
/// by it is exact, so the components still sum to the mixture bit for bit.
pub fn full_scale_gain(ex: &MixtureExample) -> f64 {
    let peak = ex
        .mixture
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if peak <= 1.0 {
        1.0
    } else {
        0.5f64.powi(peak.log2().ceil() as i32)
    }
}

/// Writes the example's WAVs below `root`, scaled by [`full_scale_gain`],
/// and returns its manifest row.
pub fn export_example(root: &Path, index: usize, ex: &MixtureExample) -> CliResult<ManifestRow> {
    let g = full_scale_gain(ex);
    let scale = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
        x.iter()
            .map(|c| c.iter().map(|v| v * g).collect())
            .collect()
    };
    let id = example_id(index);
    fs::create_dir_all(root.join(&id)).map_err(|e| CliError::from(e).at(root))?;
    let rel = |name: &str| PathBuf::from(&id).join(format!("{name}.wav"));
    let row = ManifestRow {
        mixture: rel("mixture"),
        target: rel("target"),
        late: rel("late"),
        noise: rel("noise"),
        id,
        t60: ex.t60_seconds,
        snr_db: ex.snr_db,
        seed: ex.seed,
    };
    for (path, data) in [
        (&row.mixture, &ex.mixture),
        (&row.target, &ex.target),
        (&row.late, &ex.late),
        (&row.noise, &ex.noise),
    ] {
        wav::write(
            &root.join(path),
            &scale(data),
            ex.sample_rate_hz,
            WavFormat::F32,
        )?;
    }
    Ok(row)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> CliResult<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| CliError::from(e).at(path))
}

pub fn read_manifest(path: &Path) -> CliResult<Vec<ManifestRow>> {
    read_jsonl(path)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| CliError::from(e).at(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::from(e).at(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("line {}: {e}", i + 1)).at(path))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data("no rows").at(path));
    }
    Ok(rows)
}

/// Directory the manifest's relative paths are resolved against.
pub fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads one manifest example. The mixture is rebuilt as the sum of the
/// stored components so the decomposition holds exactly after the float
/// round trip; `mixture.wav` is only checked against it.
pub fn load_example(base: &Path, row: &ManifestRow) -> CliResult<MixtureExample> {
    let load = |p: &Path| wav::read(&base.join(p));
    let target = load(&row.target)?;
    let late = load(&row.late)?;
    let noise = load(&row.noise)?;
    let stored = load(&row.mixture)?;
    let dims = |a: &wav::Audio| (a.channels.len(), a.len(), a.sample_rate_hz);
    if [&late, &noise, &stored]
        .iter()
        .any(|a| dims(a) != dims(&target))
    {
        return Err(CliError::data(format!(
            "example {}: component files differ in shape",
            row.id
        )));
    }
    let mixture: Vec<Vec<f64>> = (0..target.channels.len())
        .map(|d| {
            (0..target.len())
                .map(|i| target.channels[d][i] + late.channels[d][i] + noise.channels[d][i])
                .collect()
        })
        .collect();
    let worst = mixture
        .iter()
        .flatten()
        .zip(stored.channels.iter().flatten())
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max);
    // Three float roundings at most.
    if worst > 1e-6 {
        return Err(CliError::data(format!(
            "example {}: mixture differs from its components by {worst:e}",
            row.id
        )));
    }
    Ok(MixtureExample {
        dry: Vec::new(),
        mixture,
        target: target.channels,
        late: late.channels,
        noise: noise.channels,
        snr_db: row.snr_db,
        t60_seconds: row.t60,
        seed: row.seed,
        sample_rate_hz: target.sample_rate_hz,
    })
}
