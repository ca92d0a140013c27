//! Golden-vector fixtures shared with the training code.
//!
//! A fixture is one JSON object tagged by `kind`:
//!
//! * `lstm_step`: `weights` (`lstm.*` tensors), `inputs [T][F]`,
//!   `expected_h [T][H]`; the state starts at zero.
//! * `masknet_forward` / `varnet_forward`: full container `weights`,
//!   already-standardized `inputs [T][F or 3F]`, `expected [T][F]` masks.
//! * `kf_trajectory`: `config` (engine layout), `channels`, `frames`, `bins`,
//!   `mixture` `[d][t][f]` as `[re, im]` pairs, `lambda` and `phi` `[t][f]`,
//!   and `expected` enhanced spectrogram in the mixture's layout.
//!
//! Deviation is `max |got - want| / max |want|` over the whole fixture.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{shadow_filter, FilterTrajectory, WpeConfig};
use crate::error::{Error, Result};
use crate::neural::{
    lstm_step, masknet_forward, varnet_forward, Lstm, MaskNet, NeuralNetWeights, RecurrentState,
    Tensor, VarNet,
};
use crate::stft::ComplexSpectrogram;

pub const NEURAL_TOLERANCE: f64 = 1e-5;
pub const TRAJECTORY_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParityFixture {
    LstmStep {
        seed: u64,
        weights: BTreeMap<String, Tensor>,
        inputs: Vec<Vec<f32>>,
        expected_h: Vec<Vec<f32>>,
    },
    MasknetForward {
        seed: u64,
        weights: BTreeMap<String, Tensor>,
        inputs: Vec<Vec<f32>>,
        expected: Vec<Vec<f32>>,
    },
    VarnetForward {
        seed: u64,
        weights: BTreeMap<String, Tensor>,
        inputs: Vec<Vec<f32>>,
        expected: Vec<Vec<f32>>,
    },
    KfTrajectory {
        seed: u64,
        config: WpeConfig,
        channels: usize,
        frames: usize,
        bins: usize,
        mixture: Vec<Complex64>,
        lambda: Vec<f64>,
        phi: Vec<f64>,
        expected: Vec<Complex64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityOutcome {
    pub kind: &'static str,
    pub max_rel_deviation: f64,
    pub tolerance: f64,
}

impl ParityOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_deviation < self.tolerance
    }
}

fn weights_of(map: &BTreeMap<String, Tensor>) -> NeuralNetWeights {
    NeuralNetWeights {
        tensors: map.clone(),
    }
}

fn deviation_f32(got: &[Vec<f32>], want: &[Vec<f32>]) -> Result<f64> {
    if got.len() != want.len() || got.iter().zip(want).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::invalid(
            "fixture output shape differs from expectation",
        ));
    }
    let mut diff = 0.0f64;
    let mut peak = 0.0f64;
    for (a, b) in got.iter().flatten().zip(want.iter().flatten()) {
        diff = diff.max((*a as f64 - *b as f64).abs());
        peak = peak.max((*b as f64).abs());
    }
    Ok(if peak > 0.0 { diff / peak } else { diff })
}

fn deviation_c64(got: &[Complex64], want: &[Complex64]) -> f64 {
    let mut diff = 0.0f64;
    let mut peak = 0.0f64;
    for (a, b) in got.iter().zip(want) {
        diff = diff.max((a - b).norm());
        peak = peak.max(b.norm());
    }
    if peak > 0.0 {
        diff / peak
    } else {
        diff
    }
}

fn run_lstm(w: &Lstm, inputs: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
    let mut state = RecurrentState::zeros(w.hidden);
    inputs
        .iter()
        .map(|x| {
            lstm_step(x, &mut state, w)?;
            Ok(state.h.clone())
        })
        .collect()
}

fn run_masknet(net: &MaskNet, inputs: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
    let mut state = RecurrentState::zeros(net.hidden());
    inputs
        .iter()
        .map(|x| {
            let mut m = vec![0.0; net.bins()];
            masknet_forward(x, &mut state, net, &mut m)?;
            Ok(m)
        })
        .collect()
}

fn run_varnet(net: &VarNet, inputs: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
    let mut state = RecurrentState::zeros(net.hidden());
    inputs
        .iter()
        .map(|x| {
            let mut m = vec![0.0; net.bins()];
            varnet_forward(x, &mut state, net, &mut m)?;
            Ok(m)
        })
        .collect()
}

/// Runs the recursion with the recorded `lambda` and `phi`.
fn run_trajectory(
    config: &WpeConfig,
    channels: usize,
    frames: usize,
    bins: usize,
    mixture: &[Complex64],
    lambda: &[f64],
    phi: &[f64],
) -> Result<ComplexSpectrogram> {
    if channels != config.channels || lambda.len() != frames * bins || phi.len() != frames * bins {
        return Err(Error::invalid("trajectory fixture fields disagree in size"));
    }
    let mix = ComplexSpectrogram::from_vec(channels, frames, bins, mixture.to_vec())?;
    let traj = FilterTrajectory::Replay {
        mixture: mix.clone(),
        lambda: lambda.to_vec(),
        phi: phi.to_vec(),
        cfg: *config,
    };
    Ok(shadow_filter(&[mix], &traj, config)?.remove(0))
}

impl ParityFixture {
    pub fn kind(&self) -> &'static str {
        match self {
            ParityFixture::LstmStep { .. } => "lstm_step",
            ParityFixture::MasknetForward { .. } => "masknet_forward",
            ParityFixture::VarnetForward { .. } => "varnet_forward",
            ParityFixture::KfTrajectory { .. } => "kf_trajectory",
        }
    }

    /// Runs this engine on the fixture inputs and measures the deviation.
    pub fn check(&self) -> Result<ParityOutcome> {
        let (dev, tolerance) = match self {
            ParityFixture::LstmStep {
                weights,
                inputs,
                expected_h,
                ..
            } => {
                let lstm = Lstm::from_weights(&weights_of(weights))?;
                (
                    deviation_f32(&run_lstm(&lstm, inputs)?, expected_h)?,
                    NEURAL_TOLERANCE,
                )
            }
            ParityFixture::MasknetForward {
                weights,
                inputs,
                expected,
                ..
            } => {
                let net = MaskNet::from_weights(&weights_of(weights))?;
                (
                    deviation_f32(&run_masknet(&net, inputs)?, expected)?,
                    NEURAL_TOLERANCE,
                )
            }
            ParityFixture::VarnetForward {
                weights,
                inputs,
                expected,
                ..
            } => {
                let net = VarNet::from_weights(&weights_of(weights))?;
                (
                    deviation_f32(&run_varnet(&net, inputs)?, expected)?,
                    NEURAL_TOLERANCE,
                )
            }
            ParityFixture::KfTrajectory {
                config,
                channels,
                frames,
                bins,
                mixture,
                lambda,
                phi,
                expected,
                ..
            } => {
                let out = run_trajectory(config, *channels, *frames, *bins, mixture, lambda, phi)?;
                if expected.len() != out.as_slice().len() {
                    return Err(Error::invalid("expected spectrogram has the wrong size"));
                }
                (
                    deviation_c64(out.as_slice(), expected),
                    TRAJECTORY_TOLERANCE,
                )
            }
        };
        Ok(ParityOutcome {
            kind: self.kind(),
            max_rel_deviation: dev,
            tolerance,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn random_frames(rng: &mut ChaCha8Rng, frames: usize, width: usize) -> Vec<Vec<f32>> {
    (0..frames)
        .map(|_| (0..width).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

/// Reference fixtures computed by this engine: 3-frame neural sequences
/// with `H = 8`, `F = 4`, and a 50-frame trajectory.
pub fn emit_fixtures(seed: u64) -> Result<Vec<ParityFixture>> {
    const F: usize = 4;
    const H: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let lstm_weights: BTreeMap<_, _> = NeuralNetWeights::random_masknet(F, H, seed)
        .tensors
        .into_iter()
        .filter(|(k, _)| k.starts_with("lstm."))
        .collect();
    let inputs = random_frames(&mut rng, 3, F);
    let expected_h = run_lstm(&Lstm::from_weights(&weights_of(&lstm_weights))?, &inputs)?;
    let lstm = ParityFixture::LstmStep {
        seed,
        weights: lstm_weights,
        inputs,
        expected_h,
    };

    let mw = NeuralNetWeights::random_masknet(F, H, seed.wrapping_add(1));
    let inputs = random_frames(&mut rng, 3, F);
    let expected = run_masknet(&MaskNet::from_weights(&mw)?, &inputs)?;
    let mask = ParityFixture::MasknetForward {
        seed,
        weights: mw.tensors,
        inputs,
        expected,
    };

    let vw = NeuralNetWeights::random_varnet(F, H, seed.wrapping_add(2));
    let inputs = random_frames(&mut rng, 3, 3 * F);
    let expected = run_varnet(&VarNet::from_weights(&vw)?, &inputs)?;
    let var = ParityFixture::VarnetForward {
        seed,
        weights: vw.tensors,
        inputs,
        expected,
    };

    let config = WpeConfig {
        channels: 2,
        taps: 3,
        delay: 1,
        ..Default::default()
    };
    let (frames, bins) = (50, F);
    let mixture: Vec<Complex64> = (0..config.channels * frames * bins)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let lambda: Vec<f64> = (0..frames * bins)
        .map(|_| rng.random_range(0.05..1.0))
        .collect();
    let phi: Vec<f64> = (0..frames * bins)
        .map(|_| rng.random_range(0.0..1e-2))
        .collect();
    let expected = run_trajectory(
        &config,
        config.channels,
        frames,
        bins,
        &mixture,
        &lambda,
        &phi,
    )?
    .as_slice()
    .to_vec();
    let traj = ParityFixture::KfTrajectory {
        seed,
        config,
        channels: config.channels,
        frames,
        bins,
        mixture,
        lambda,
        phi,
        expected,
    };
    Ok(vec![lstm, mask, var, traj])
}
