//! Real-time-factor measurement of the full neural chain plus the analytic
//! MAC estimate.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use kfwpe::acoustics::{make_example, ExampleParams};
use kfwpe::complexity::{mac_per_second, ComplexityConfig, MacBreakdown};
use kfwpe::engine::process_utterance;
use kfwpe::estimators::MAX_BIAS_DB;
use kfwpe::{
    DatasetConfig, MaskNet, NeuralNetWeights, PsdEstimator, ResidualFeed, Stft, StftConfig,
    TransitionModel, VarNet, WpeConfig,
};

use crate::error::{CliError, CliResult};

/// Published figure for the full network-augmented filter at 16 kHz.
pub const REFERENCE_GMAC_PER_SECOND: f64 = 31.4;
pub const REFERENCE_TOLERANCE: f64 = 0.2;

#[derive(Args, Debug)]
pub struct BenchCmd {
    /// Utterance length in seconds.
    #[arg(long, default_value_t = 20.0)]
    pub duration: f64,
    /// Recurrent width of the randomly initialized networks.
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub window_len: usize,
    pub bins: usize,
    pub frames: usize,
    /// Wall-clock, not deterministic.
    pub wall_seconds: f64,
    pub rtf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub duration_seconds: f64,
    pub hidden: usize,
    pub threads: usize,
    pub mac_per_second: MacBreakdown,
    pub total_gmac_per_second: f64,
    pub reference_gmac_per_second: f64,
    pub within_reference_tolerance: bool,
    pub runs: Vec<BenchRun>,
    /// RTF at 129 bins over RTF at 257 bins; about 0.5 when cost is linear
    /// in the bin count.
    pub rtf_bin_ratio: f64,
}

fn time_chain(
    mixture: &[Vec<f64>],
    stft_cfg: StftConfig,
    hidden: usize,
    seed: u64,
) -> CliResult<BenchRun> {
    let bins = stft_cfg.num_bins();
    let mask = Arc::new(MaskNet::from_weights(&NeuralNetWeights::random_masknet(
        bins, hidden, seed,
    ))?);
    let var = Arc::new(VarNet::from_weights(&NeuralNetWeights::random_varnet(
        bins,
        hidden,
        seed + 1,
    ))?);
    let wpe = WpeConfig {
        channels: mixture.len(),
        ..Default::default()
    };
    let stft = Stft::new(stft_cfg)?;
    let start = Instant::now();
    let spec = stft.analyze(mixture)?;
    let mut psd = PsdEstimator::masknet(mask);
    let mut tr = TransitionModel::varnet(var, MAX_BIAS_DB, ResidualFeed::Previous);
    let res = process_utterance(&spec, &mut psd, &mut tr, &wpe)?;
    let _ = stft.synthesize(&res.enhanced)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    Ok(BenchRun {
        window_len: stft_cfg.window_len,
        bins,
        frames: spec.frames(),
        wall_seconds,
        rtf: wall_seconds * stft_cfg.sample_rate_hz as f64 / mixture[0].len() as f64,
    })
}

pub fn run(cmd: &BenchCmd, seed: u64) -> CliResult<BenchReport> {
    if !(cmd.duration >= 1.0) || cmd.hidden == 0 {
        return Err(CliError::config(
            "bench needs --duration >= 1 and --hidden >= 1",
        ));
    }
    let data = DatasetConfig {
        n_examples: 1,
        duration_seconds: cmd.duration,
        ..Default::default()
    };
    let ex = make_example(
        &data,
        &ExampleParams {
            seed,
            t60_seconds: 0.7,
            snr_db: 10.0,
        },
    )?;
    let full = StftConfig::default();
    // Same frame rate, half the bins.
    let half = StftConfig::new(256, full.hop, full.sample_rate_hz)?;
    let runs = vec![
        time_chain(&ex.mixture, full, cmd.hidden, seed)?,
        time_chain(&ex.mixture, half, cmd.hidden, seed)?,
    ];
    let macs = mac_per_second(&ComplexityConfig {
        hidden: cmd.hidden,
        ..Default::default()
    });
    let gmac = macs.total() / 1e9;
    let report = BenchReport {
        duration_seconds: cmd.duration,
        hidden: cmd.hidden,
        threads: rayon::current_num_threads(),
        mac_per_second: macs,
        total_gmac_per_second: gmac,
        reference_gmac_per_second: REFERENCE_GMAC_PER_SECOND,
        within_reference_tolerance: (gmac - REFERENCE_GMAC_PER_SECOND).abs()
            <= REFERENCE_TOLERANCE * REFERENCE_GMAC_PER_SECOND,
        rtf_bin_ratio: runs[1].rtf / runs[0].rtf,
        runs,
    };
    println!(
        "analytic cost: {:.3} GMAC/s (stft {:.3}, recursion {:.3}, mask net {:.3}, transition net {:.3}); reference {} GMAC/s {}",
        gmac,
        macs.stft / 1e9,
        macs.recursion / 1e9,
        macs.masknet / 1e9,
        macs.varnet / 1e9,
        REFERENCE_GMAC_PER_SECOND,
        if report.within_reference_tolerance { "matched" } else { "not matched" }
    );
    for r in &report.runs {
        println!(
            "F={:<4} {} frames: {:.2} s wall, RTF {:.3}",
            r.bins, r.frames, r.wall_seconds, r.rtf
        );
    }
    println!("RTF ratio F=129/F=257: {:.3}", report.rtf_bin_ratio);
    if let Some(p) = &cmd.report {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)
            .map_err(|e| CliError::from(e).at(p))?;
    }
    Ok(report)
}
