//! Target-PSD estimators and filter-transition-power models.
//!
//! Both are queried once per frame for every bin. Neural variants carry
//! recurrent state and must not be shared between utterances running at
//! the same time.

use std::sync::Arc;

use crate::engine::{ResidualFeed, WpeConfig};
use crate::error::{Error, Result};
use crate::neural::{masknet_forward, varnet_forward, MaskNet, RecurrentState, VarNet};
use crate::stft::ComplexSpectrogram;

/// Default fixed transition bias in dB.
pub const FIXED_BIAS_DB: f64 = -35.0;
/// Default ceiling of the learned transition bias in dB.
pub const MAX_BIAS_DB: f64 = -30.0;

/// Power-ratio dB to linear.
pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Channel-averaged features of the observed frame `t`.
#[derive(Debug, Clone, Copy)]
pub struct FrameFeatures<'a> {
    pub t: usize,
    /// `(1/D) sum_d |x_d|^2` per bin.
    pub power: &'a [f64],
    /// `(1/D) sum_d |x_d|` per bin.
    pub magnitude: &'a [f64],
    pub lambda_min: f64,
}

#[derive(Debug, Clone)]
pub enum PsdEstimator {
    /// Channel-averaged power of the known target.
    Oracle { target: ComplexSpectrogram },
    /// First-order recursive average of the observed periodogram.
    SmoothedPeriodogram {
        beta: f64,
        previous: Option<Vec<f64>>,
    },
    /// `(M |x|)^2` with `M` from the mask network.
    MaskNet {
        net: Arc<MaskNet>,
        state: RecurrentState,
        features: Vec<f32>,
        mask: Vec<f32>,
    },
}

impl PsdEstimator {
    pub fn oracle(target: ComplexSpectrogram) -> Self {
        PsdEstimator::Oracle { target }
    }

    pub fn smoothed_periodogram(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!(
                "smoothing factor {beta} outside [0, 1)"
            )));
        }
        Ok(PsdEstimator::SmoothedPeriodogram {
            beta,
            previous: None,
        })
    }

    pub fn masknet(net: Arc<MaskNet>) -> Self {
        let h = net.hidden();
        let f = net.bins();
        PsdEstimator::MaskNet {
            net,
            state: RecurrentState::zeros(h),
            features: vec![0.0; f],
            mask: vec![0.0; f],
        }
    }

    /// Clears recurrent state before a new utterance.
    pub fn reset(&mut self) {
        match self {
            PsdEstimator::Oracle { .. } => {}
            PsdEstimator::SmoothedPeriodogram { previous, .. } => *previous = None,
            PsdEstimator::MaskNet { state, .. } => state.reset(),
        }
    }

    pub fn estimate(&mut self, feat: &FrameFeatures, out: &mut [f64]) -> Result<()> {
        let bins = feat.power.len();
        if out.len() != bins {
            return Err(Error::invalid("PSD buffer length differs from bin count"));
        }
        match self {
            PsdEstimator::Oracle { target } => {
                if target.bins() != bins || feat.t >= target.frames() {
                    return Err(Error::invalid(format!(
                        "oracle target ({} frames, {} bins) does not cover frame {} with {bins} bins",
                        target.frames(),
                        target.bins(),
                        feat.t
                    )));
                }
                oracle_psd(target, feat.t, feat.lambda_min, out);
            }
            PsdEstimator::SmoothedPeriodogram { beta, previous } => {
                let prev = previous.get_or_insert_with(|| feat.power.to_vec());
                for ((p, &x), o) in prev.iter_mut().zip(feat.power).zip(out.iter_mut()) {
                    *p = *beta * *p + (1.0 - *beta) * x;
                    *o = p.max(feat.lambda_min);
                }
            }
            PsdEstimator::MaskNet {
                net,
                state,
                features,
                mask,
            } => {
                if net.bins() != bins {
                    return Err(Error::Config(format!(
                        "MaskNet has {} bins, signal has {bins}",
                        net.bins()
                    )));
                }
                masknet_psd(
                    feat.magnitude,
                    feat.lambda_min,
                    net,
                    state,
                    features,
                    mask,
                    out,
                )?;
            }
        }
        Ok(())
    }
}

/// `max(lambda_min, (1/D) sum_d |target_d|^2)` for frame `t`.
pub fn oracle_psd(target: &ComplexSpectrogram, t: usize, lambda_min: f64, out: &mut [f64]) {
    target.mean_power(t, out);
    out.iter_mut().for_each(|v| *v = v.max(lambda_min));
}

/// `max(lambda_min, (M |x|)^2)`; advances the network by one frame.
pub fn masknet_psd(
    magnitude: &[f64],
    lambda_min: f64,
    net: &MaskNet,
    state: &mut RecurrentState,
    features: &mut [f32],
    mask: &mut [f32],
    out: &mut [f64],
) -> Result<()> {
    net.norm.apply(magnitude, 0, features);
    masknet_forward(features, state, net, mask)?;
    for ((o, &m), &x) in out.iter_mut().zip(mask.iter()).zip(magnitude) {
        *o = (m as f64 * x).powi(2).max(lambda_min);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum TransitionModel {
    /// No transition noise: the filter is modelled as static.
    Zero,
    /// `e / (D K) + eta`.
    FixedBias { eta: f64 },
    /// `e / (D K) + eta_max * M` with `M` from the transition network.
    VarNet {
        eta_max: f64,
        feed: ResidualFeed,
        net: Arc<VarNet>,
        state: RecurrentState,
        features: Vec<f32>,
        mask: Vec<f32>,
    },
}

impl TransitionModel {
    pub fn fixed_bias_db(eta_db: f64) -> Self {
        TransitionModel::FixedBias {
            eta: db_to_power(eta_db),
        }
    }

    pub fn varnet(net: Arc<VarNet>, eta_max_db: f64, feed: ResidualFeed) -> Self {
        let h = net.hidden();
        let f = net.bins();
        TransitionModel::VarNet {
            eta_max: db_to_power(eta_max_db),
            feed,
            net,
            state: RecurrentState::zeros(h),
            features: vec![0.0; 3 * f],
            mask: vec![0.0; f],
        }
    }

    pub fn reset(&mut self) {
        if let TransitionModel::VarNet { state, .. } = self {
            state.reset();
        }
    }

    /// Transition power for every bin of frame `t`. `residual_prev` is the
    /// residual produced by step `t-1` (zero before the first step),
    /// `residual_prev2` the one of step `t-2`.
    pub fn power(
        &mut self,
        feat: &FrameFeatures,
        lambda: &[f64],
        residual_prev: &[f64],
        residual_prev2: &[f64],
        cfg: &WpeConfig,
        out: &mut [f64],
    ) -> Result<()> {
        let bins = feat.power.len();
        if out.len() != bins || lambda.len() != bins || residual_prev.len() != bins {
            return Err(Error::invalid("transition buffers differ from bin count"));
        }
        let dk = cfg.filter_len();
        match self {
            TransitionModel::Zero => out.fill(0.0),
            TransitionModel::FixedBias { eta } => fixed_bias_power(residual_prev, dk, *eta, out),
            TransitionModel::VarNet {
                eta_max,
                feed,
                net,
                state,
                features,
                mask,
            } => {
                if net.bins() != bins {
                    return Err(Error::Config(format!(
                        "VarNet has {} bins, signal has {bins}",
                        net.bins()
                    )));
                }
                let net_residual = match feed {
                    ResidualFeed::Previous => residual_prev,
                    ResidualFeed::NetworkLagged => residual_prev2,
                };
                varnet_power(
                    feat.power,
                    lambda,
                    net_residual,
                    residual_prev,
                    dk,
                    *eta_max,
                    net,
                    state,
                    features,
                    mask,
                    out,
                )?;
            }
        }
        Ok(())
    }
}

/// `phi = e / (D K) + eta`.
pub fn fixed_bias_power(residual: &[f64], filter_len: usize, eta: f64, out: &mut [f64]) {
    let n = filter_len as f64;
    for (o, &e) in out.iter_mut().zip(residual) {
        *o = e / n + eta;
    }
}

/// `phi = e_add / (D K) + eta_max * M([|x|^2; lambda; e_net])`.
#[allow(clippy::too_many_arguments)]
pub fn varnet_power(
    power: &[f64],
    lambda: &[f64],
    net_residual: &[f64],
    additive_residual: &[f64],
    filter_len: usize,
    eta_max: f64,
    net: &VarNet,
    state: &mut RecurrentState,
    features: &mut [f32],
    mask: &mut [f32],
    out: &mut [f64],
) -> Result<()> {
    let f = power.len();
    net.norm.apply(power, 0, &mut features[..f]);
    net.norm.apply(lambda, f, &mut features[f..2 * f]);
    net.norm.apply(net_residual, 2 * f, &mut features[2 * f..]);
    varnet_forward(features, state, net, mask)?;
    let n = filter_len as f64;
    for ((o, &e), &m) in out.iter_mut().zip(additive_residual).zip(mask.iter()) {
        *o = e / n + eta_max * m as f64;
    }
    Ok(())
}
