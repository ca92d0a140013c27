//! Per-band adaptive weighted-prediction-error recursions.
//!
//! Every frequency band owns a [`WpeBandState`]: one prediction filter per
//! channel, a filter error covariance shared by all channels, and the last
//! `delay + taps - 1` input frames. A step runs
//!
//! ```text
//! prior:   P <- P + phi I                  (Kalman)   or  P <- P / alpha   (RLS)
//! gain:    k  = P X / (lambda + X^H P X)
//! update:  P <- P - k X^H P
//! filter:  g_d <- g_d + k conj(x_d - g_d^H X)
//! output:  y_d  = x_d - g_d^H X            (updated filter)
//! ```
//!
//! where `X` stacks the delayed frames newest first,
//! `[x_{t-delay}; ...; x_{t-delay-taps+1}]`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{FrameFeatures, PsdEstimator, TransitionModel};
use crate::stft::ComplexSpectrogram;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative floor on the target PSD, scaled by the running peak periodogram.
pub const LAMBDA_FLOOR_REL: f64 = 1e-10;
/// Absolute floor so an all-zero input still yields a positive PSD.
pub const LAMBDA_FLOOR_ABS: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    KalmanFilter,
    RecursiveLeastSquares,
}

/// How the a-posteriori covariance is formed from the gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceUpdate {
    /// `P - k X^H P`, followed by Hermitian symmetrization.
    #[default]
    Hermitian,
    /// `P - k X^T P` exactly as sometimes printed; breaks Hermitian symmetry.
    /// Kept for comparison only, never symmetrized.
    LiteralTranspose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpeConfig {
    pub channels: usize,
    pub taps: usize,
    pub delay: usize,
    pub mode: Mode,
    pub rls_forgetting: f64,
    pub init_cov_scale: f64,
    #[serde(default)]
    pub covariance_update: CovarianceUpdate,
}

impl Default for WpeConfig {
    fn default() -> Self {
        WpeConfig {
            channels: 2,
            taps: 10,
            delay: 5,
            mode: Mode::KalmanFilter,
            rls_forgetting: 0.99,
            init_cov_scale: 1.0,
            covariance_update: CovarianceUpdate::Hermitian,
        }
    }
}

impl WpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.taps == 0 || self.delay == 0 {
            return Err(Error::Config(format!(
                "channels ({}), taps ({}) and delay ({}) must all be >= 1",
                self.channels, self.taps, self.delay
            )));
        }
        if !(self.rls_forgetting > 0.0 && self.rls_forgetting <= 1.0) {
            return Err(Error::Config(format!(
                "RLS forgetting factor {} outside (0, 1]",
                self.rls_forgetting
            )));
        }
        if !(self.init_cov_scale > 0.0 && self.init_cov_scale.is_finite()) {
            return Err(Error::Config(
                "initial covariance scale must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Length `D K` of one channel's prediction filter.
    pub fn filter_len(&self) -> usize {
        self.channels * self.taps
    }

    fn history_len(&self) -> usize {
        self.delay + self.taps - 1
    }
}

/// Ring of past multichannel frames for one band.
#[derive(Debug, Clone)]
struct DelayLine {
    channels: usize,
    len: usize,
    data: Vec<Complex64>,
    head: usize,
}

impl DelayLine {
    fn new(channels: usize, len: usize) -> Self {
        DelayLine {
            channels,
            len,
            data: vec![ZERO; channels * len],
            head: 0,
        }
    }

    fn push(&mut self, frame: &[Complex64]) {
        let at = self.head * self.channels;
        self.data[at..at + self.channels].copy_from_slice(frame);
        self.head = (self.head + 1) % self.len;
    }

    /// Frame pushed `lag` steps ago (`lag = 1` is the most recent).
    fn lagged(&self, lag: usize) -> &[Complex64] {
        debug_assert!(lag >= 1 && lag <= self.len);
        let slot = (self.head + self.len - lag) % self.len;
        &self.data[slot * self.channels..(slot + 1) * self.channels]
    }

    /// Writes `X_{t-delay}` newest first: `out[k D + d] = x^{(d)}_{t-delay-k}`.
    fn stack(&self, delay: usize, taps: usize, out: &mut [Complex64]) {
        for k in 0..taps {
            out[k * self.channels..(k + 1) * self.channels].copy_from_slice(self.lagged(delay + k));
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Prior {
    Transition(f64),
    Forgetting(f64),
}

/// Adaptive state of one frequency band.
#[derive(Debug, Clone)]
pub struct WpeBandState {
    bin: usize,
    frame_index: usize,
    channels: usize,
    taps: usize,
    delay: usize,
    covariance_update: CovarianceUpdate,
    /// Row-major `D x DK`; row `d` is channel `d`'s filter.
    filters: Vec<Complex64>,
    /// Row-major `DK x DK`.
    cov: Vec<Complex64>,
    history: DelayLine,
    residual: f64,
    stacked: Vec<Complex64>,
    projected: Vec<Complex64>,
    gain: Vec<Complex64>,
    denominator: Complex64,
}

pub fn init_state(cfg: &WpeConfig, bins: usize) -> Result<Vec<WpeBandState>> {
    cfg.validate()?;
    Ok((0..bins).map(|f| WpeBandState::new(cfg, f)).collect())
}

impl WpeBandState {
    pub fn new(cfg: &WpeConfig, bin: usize) -> Self {
        let n = cfg.filter_len();
        let mut cov = vec![ZERO; n * n];
        for i in 0..n {
            cov[i * n + i] = Complex64::new(cfg.init_cov_scale, 0.0);
        }
        WpeBandState {
            bin,
            frame_index: 0,
            channels: cfg.channels,
            taps: cfg.taps,
            delay: cfg.delay,
            covariance_update: cfg.covariance_update,
            filters: vec![ZERO; cfg.channels * n],
            cov,
            history: DelayLine::new(cfg.channels, cfg.history_len()),
            residual: 0.0,
            stacked: vec![ZERO; n],
            projected: vec![ZERO; n],
            gain: vec![ZERO; n],
            denominator: ZERO,
        }
    }

    pub fn bin(&self) -> usize {
        self.bin
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn filter_len(&self) -> usize {
        self.channels * self.taps
    }

    pub fn filters(&self) -> &[Complex64] {
        &self.filters
    }

    pub fn filter(&self, d: usize) -> &[Complex64] {
        let n = self.filter_len();
        &self.filters[d * n..(d + 1) * n]
    }

    /// Filter error covariance, row-major.
    pub fn covariance(&self) -> &[Complex64] {
        &self.cov
    }

    /// Residual `e` produced by the last step.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Kalman gain of the last step.
    pub fn last_gain(&self) -> &[Complex64] {
        &self.gain
    }

    /// `lambda + X^H P X` of the last step, before its real part was taken.
    pub fn last_denominator(&self) -> Complex64 {
        self.denominator
    }

    /// Delayed stack `X_{t-delay}` the next step will use.
    pub fn delayed_stack(&self) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.filter_len()];
        self.history.stack(self.delay, self.taps, &mut out);
        out
    }

    /// One Kalman step with transition power `phi`. Writes the enhanced
    /// frame to `out` and returns the residual `e`.
    pub fn kf_step(
        &mut self,
        x: &[Complex64],
        lambda: f64,
        phi: f64,
        out: &mut [Complex64],
    ) -> Result<f64> {
        if !(phi >= 0.0) || !phi.is_finite() {
            return Err(self.numeric(format!(
                "transition power {phi} is not a finite nonnegative value"
            )));
        }
        self.step(x, lambda, Prior::Transition(phi), out)
    }

    /// One RLS step with forgetting factor `alpha`.
    pub fn rls_step(
        &mut self,
        x: &[Complex64],
        lambda: f64,
        alpha: f64,
        out: &mut [Complex64],
    ) -> Result<f64> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!(
                "forgetting factor {alpha} outside (0, 1]"
            )));
        }
        self.step(x, lambda, Prior::Forgetting(alpha), out)
    }

    fn numeric(&self, msg: String) -> Error {
        Error::Numeric {
            frame: self.frame_index,
            bin: self.bin,
            msg,
        }
    }

    fn step(
        &mut self,
        x: &[Complex64],
        lambda: f64,
        prior: Prior,
        out: &mut [Complex64],
    ) -> Result<f64> {
        let d_count = self.channels;
        let n = self.filter_len();
        if x.len() != d_count || out.len() != d_count {
            return Err(Error::invalid(format!(
                "frame has {} channels, band state expects {d_count}",
                x.len()
            )));
        }
        if x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(self.numeric("non-finite input frame".into()));
        }
        if lambda.is_nan() || lambda.is_infinite() {
            return Err(self.numeric(format!("non-finite target PSD {lambda}")));
        }
        if lambda <= 0.0 {
            return Err(Error::invalid(format!(
                "target PSD {lambda} must be positive (frame {}, bin {})",
                self.frame_index, self.bin
            )));
        }

        self.history.stack(self.delay, self.taps, &mut self.stacked);
        let xs = &self.stacked;

        match prior {
            Prior::Transition(phi) => {
                for i in 0..n {
                    self.cov[i * n + i].re += phi;
                }
            }
            Prior::Forgetting(alpha) => {
                for p in self.cov.iter_mut() {
                    *p /= alpha;
                }
            }
        }

        // projected = P X, denominator = lambda + X^H P X
        let mut quad = ZERO;
        for i in 0..n {
            let row = &self.cov[i * n..(i + 1) * n];
            let v: Complex64 = row.iter().zip(xs).map(|(p, x)| p * x).sum();
            self.projected[i] = v;
            quad += xs[i].conj() * v;
        }
        self.denominator = Complex64::new(lambda, 0.0) + quad;
        let den = self.denominator.re;
        if !(den > 0.0) || !den.is_finite() {
            return Err(self.numeric(format!("gain denominator {den} is not positive")));
        }
        let inv = 1.0 / den;
        for (g, p) in self.gain.iter_mut().zip(&self.projected) {
            *g = p * inv;
        }

        match self.covariance_update {
            CovarianceUpdate::Hermitian => {
                // X^H P = (P X)^H for Hermitian P.
                for i in 0..n {
                    let gi = self.gain[i];
                    let row = &mut self.cov[i * n..(i + 1) * n];
                    for (p, u) in row.iter_mut().zip(&self.projected) {
                        *p -= gi * u.conj();
                    }
                }
                for i in 0..n {
                    self.cov[i * n + i].im = 0.0;
                    for j in i + 1..n {
                        let avg = (self.cov[i * n + j] + self.cov[j * n + i].conj()) * 0.5;
                        self.cov[i * n + j] = avg;
                        self.cov[j * n + i] = avg.conj();
                    }
                }
            }
            CovarianceUpdate::LiteralTranspose => {
                // row vector X^T P
                let mut xt_p = vec![ZERO; n];
                for (i, &xi) in xs.iter().enumerate() {
                    for (acc, p) in xt_p.iter_mut().zip(&self.cov[i * n..(i + 1) * n]) {
                        *acc += xi * p;
                    }
                }
                for i in 0..n {
                    let gi = self.gain[i];
                    for (p, v) in self.cov[i * n..(i + 1) * n].iter_mut().zip(&xt_p) {
                        *p -= gi * v;
                    }
                }
            }
        }

        let gain_norm: f64 = self.gain.iter().map(|g| g.norm_sqr()).sum();
        let mut residual = 0.0;
        for d in 0..d_count {
            let g = &mut self.filters[d * n..(d + 1) * n];
            let predicted: Complex64 = g.iter().zip(xs).map(|(g, x)| g.conj() * x).sum();
            let innovation = (x[d] - predicted).conj();
            for (gk, kk) in g.iter_mut().zip(&self.gain) {
                *gk += kk * innovation;
            }
            residual += gain_norm * innovation.norm_sqr();
            let predicted: Complex64 = g.iter().zip(xs).map(|(g, x)| g.conj() * x).sum();
            out[d] = x[d] - predicted;
        }
        self.residual = residual / d_count as f64;

        self.history.push(x);
        self.frame_index += 1;
        Ok(self.residual)
    }
}

/// Per (frame, bin) quantities recorded while processing, stored `[t][f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub frames: usize,
    pub bins: usize,
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
    pub residual: Vec<f64>,
}

impl Diagnostics {
    fn new(frames: usize, bins: usize) -> Self {
        Diagnostics {
            frames,
            bins,
            lambda: vec![0.0; frames * bins],
            phi: vec![0.0; frames * bins],
            residual: vec![0.0; frames * bins],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lambda
            .iter()
            .chain(&self.phi)
            .chain(&self.residual)
            .all(|v| v.is_finite())
    }

    /// Binary dump: `"KWPD"`, u32 version, u32 frames, u32 bins, then the
    /// lambda, phi and residual planes as little-endian f64 `[t][f]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 24 * self.lambda.len());
        out.extend_from_slice(DIAGNOSTICS_MAGIC);
        for v in [DIAGNOSTICS_VERSION, self.frames as u32, self.bins as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.lambda.iter().chain(&self.phi).chain(&self.residual) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::invalid(format!("diagnostics dump: {m}"));
        if bytes.len() < 16 || &bytes[..4] != DIAGNOSTICS_MAGIC {
            return Err(bad("bad header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        if word(1) != DIAGNOSTICS_VERSION {
            return Err(bad(&format!("unsupported version {}", word(1))));
        }
        let (frames, bins) = (word(2) as usize, word(3) as usize);
        let n = frames * bins;
        if bytes.len() != 16 + 24 * n {
            return Err(bad(&format!(
                "expected {} bytes, got {}",
                16 + 24 * n,
                bytes.len()
            )));
        }
        let mut values = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut plane = || values.by_ref().take(n).collect::<Vec<_>>();
        Ok(Diagnostics {
            frames,
            bins,
            lambda: plane(),
            phi: plane(),
            residual: plane(),
        })
    }
}

const DIAGNOSTICS_MAGIC: &[u8; 4] = b"KWPD";
const DIAGNOSTICS_VERSION: u32 = 1;

/// The filters applied at every (frame, bin).
#[derive(Debug, Clone)]
pub enum FilterTrajectory {
    /// Re-derived by running the recursion again on the recorded inputs.
    /// The recursion is deterministic, so replay reproduces the original
    /// filters bit for bit without storing them.
    Replay {
        mixture: ComplexSpectrogram,
        lambda: Vec<f64>,
        phi: Vec<f64>,
        cfg: WpeConfig,
    },
    /// Filters stored `[t][f][d][k]`.
    Explicit {
        frames: usize,
        bins: usize,
        channels: usize,
        filter_len: usize,
        filters: Vec<Complex64>,
    },
}

impl FilterTrajectory {
    /// All-zero filters: processing becomes the identity.
    pub fn zeros(frames: usize, bins: usize, cfg: &WpeConfig) -> Self {
        let n = cfg.filter_len();
        FilterTrajectory::Explicit {
            frames,
            bins,
            channels: cfg.channels,
            filter_len: n,
            filters: vec![ZERO; frames * bins * cfg.channels * n],
        }
    }

    pub fn frames(&self) -> usize {
        match self {
            FilterTrajectory::Replay { mixture, .. } => mixture.frames(),
            FilterTrajectory::Explicit { frames, .. } => *frames,
        }
    }

    pub fn bins(&self) -> usize {
        match self {
            FilterTrajectory::Replay { mixture, .. } => mixture.bins(),
            FilterTrajectory::Explicit { bins, .. } => *bins,
        }
    }

    /// Stores every applied filter explicitly.
    pub fn materialize(&self) -> Result<FilterTrajectory> {
        match self {
            FilterTrajectory::Explicit { .. } => Ok(self.clone()),
            FilterTrajectory::Replay { mixture, cfg, .. } => {
                let (d_count, frames, bins) = mixture.dims();
                let n = cfg.filter_len();
                let per_band: Vec<Vec<Complex64>> = (0..bins)
                    .into_par_iter()
                    .map(|f| {
                        let mut band = Vec::with_capacity(frames * d_count * n);
                        self.replay_band(f, |_, state, _| {
                            band.extend_from_slice(state.filters());
                        })?;
                        Ok(band)
                    })
                    .collect::<Result<_>>()?;
                let mut filters = vec![ZERO; frames * bins * d_count * n];
                let block = d_count * n;
                for (f, band) in per_band.iter().enumerate() {
                    for t in 0..frames {
                        let dst = (t * bins + f) * block;
                        filters[dst..dst + block]
                            .copy_from_slice(&band[t * block..(t + 1) * block]);
                    }
                }
                Ok(FilterTrajectory::Explicit {
                    frames,
                    bins,
                    channels: d_count,
                    filter_len: n,
                    filters,
                })
            }
        }
    }

    /// Runs the recursion of band `f` again, calling `visit(t, state, x_t)`
    /// after each step.
    fn replay_band(
        &self,
        f: usize,
        mut visit: impl FnMut(usize, &WpeBandState, &[Complex64]),
    ) -> Result<()> {
        let FilterTrajectory::Replay {
            mixture,
            lambda,
            phi,
            cfg,
        } = self
        else {
            unreachable!("replay_band on explicit trajectory");
        };
        let (d_count, frames, bins) = mixture.dims();
        let mut state = WpeBandState::new(cfg, f);
        let mut x = vec![ZERO; d_count];
        let mut y = vec![ZERO; d_count];
        for t in 0..frames {
            for (d, v) in x.iter_mut().enumerate() {
                *v = mixture.get(d, t, f);
            }
            let i = t * bins + f;
            match cfg.mode {
                Mode::KalmanFilter => state.kf_step(&x, lambda[i], phi[i], &mut y)?,
                Mode::RecursiveLeastSquares => {
                    state.rls_step(&x, lambda[i], cfg.rls_forgetting, &mut y)?
                }
            };
            visit(t, &state, &x);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EnhancementResult {
    pub enhanced: ComplexSpectrogram,
    pub trajectory: FilterTrajectory,
    pub diagnostics: Diagnostics,
}

/// Which residual the transition model is handed at frame `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualFeed {
    /// Network input and additive term both use the residual of the
    /// previous step (`e_{t-1}`).
    #[default]
    Previous,
    /// Network input lags one more frame (`e_{t-2}`) than the additive term.
    NetworkLagged,
}

/// Processes a whole utterance frame by frame. Bands run in parallel within
/// a frame; the estimators see every bin of a frame at once.
pub fn process_utterance(
    spec: &ComplexSpectrogram,
    psd: &mut PsdEstimator,
    transition: &mut TransitionModel,
    cfg: &WpeConfig,
) -> Result<EnhancementResult> {
    cfg.validate()?;
    let (d_count, frames, bins) = spec.dims();
    if d_count != cfg.channels {
        return Err(Error::invalid(format!(
            "spectrogram has {d_count} channels, config expects {}",
            cfg.channels
        )));
    }
    if !spec.is_finite() {
        return Err(Error::invalid(
            "input spectrogram contains non-finite values",
        ));
    }
    psd.reset();
    transition.reset();

    let mut states = init_state(cfg, bins)?;
    let mut enhanced = ComplexSpectrogram::zeros(d_count, frames, bins);
    let mut diag = Diagnostics::new(frames, bins);

    let mut power = vec![0.0; bins];
    let mut magnitude = vec![0.0; bins];
    let mut lambda = vec![0.0; bins];
    let mut phi = vec![0.0; bins];
    let mut residual = vec![0.0; bins];
    let mut residual_prev = vec![0.0; bins];
    let mut residual_prev2 = vec![0.0; bins];
    let mut frame_in = vec![ZERO; bins * d_count];
    let mut frame_out = vec![ZERO; bins * d_count];
    let mut running_peak = 0.0f64;

    for t in 0..frames {
        spec.mean_power(t, &mut power);
        spec.mean_magnitude(t, &mut magnitude);
        running_peak = power.iter().copied().fold(running_peak, f64::max);
        let lambda_min = (LAMBDA_FLOOR_REL * running_peak).max(LAMBDA_FLOOR_ABS);
        let features = FrameFeatures {
            t,
            power: &power,
            magnitude: &magnitude,
            lambda_min,
        };

        psd.estimate(&features, &mut lambda)?;
        lambda.iter_mut().for_each(|l| *l = l.max(lambda_min));

        match cfg.mode {
            Mode::KalmanFilter => transition.power(
                &features,
                &lambda,
                &residual_prev,
                &residual_prev2,
                cfg,
                &mut phi,
            )?,
            Mode::RecursiveLeastSquares => phi.fill(0.0),
        }

        for d in 0..d_count {
            for (f, v) in spec.frame(d, t).iter().enumerate() {
                frame_in[f * d_count + d] = *v;
            }
        }

        states
            .par_iter_mut()
            .zip(frame_in.par_chunks(d_count))
            .zip(frame_out.par_chunks_mut(d_count))
            .zip(residual.par_iter_mut())
            .enumerate()
            .try_for_each(|(f, (((state, x), y), e))| {
                *e = match cfg.mode {
                    Mode::KalmanFilter => state.kf_step(x, lambda[f], phi[f], y)?,
                    Mode::RecursiveLeastSquares => {
                        state.rls_step(x, lambda[f], cfg.rls_forgetting, y)?
                    }
                };
                Ok::<_, Error>(())
            })?;

        for d in 0..d_count {
            let out = enhanced.frame_mut(d, t);
            for (f, v) in out.iter_mut().enumerate() {
                *v = frame_out[f * d_count + d];
            }
        }
        let row = t * bins..(t + 1) * bins;
        diag.lambda[row.clone()].copy_from_slice(&lambda);
        diag.phi[row.clone()].copy_from_slice(&phi);
        diag.residual[row].copy_from_slice(&residual);

        std::mem::swap(&mut residual_prev2, &mut residual_prev);
        residual_prev.copy_from_slice(&residual);
    }

    Ok(EnhancementResult {
        enhanced,
        trajectory: FilterTrajectory::Replay {
            mixture: spec.clone(),
            lambda: diag.lambda.clone(),
            phi: diag.phi.clone(),
            cfg: *cfg,
        },
        diagnostics: diag,
    })
}

/// Applies the recorded filter trajectory to each component through the
/// component's own delayed history. The filters are fixed, so the outputs
/// are linear in the input and sum to the enhanced mixture.
pub fn shadow_filter(
    components: &[ComplexSpectrogram],
    trajectory: &FilterTrajectory,
    cfg: &WpeConfig,
) -> Result<Vec<ComplexSpectrogram>> {
    cfg.validate()?;
    let frames = trajectory.frames();
    let bins = trajectory.bins();
    for c in components {
        if c.dims() != (cfg.channels, frames, bins) {
            return Err(Error::invalid(format!(
                "component dims {:?} differ from trajectory ({}, {frames}, {bins})",
                c.dims(),
                cfg.channels
            )));
        }
    }
    let d_count = cfg.channels;
    let n = cfg.filter_len();
    match trajectory {
        FilterTrajectory::Replay { cfg: tcfg, .. }
            if tcfg.filter_len() != n || tcfg.channels != d_count =>
        {
            return Err(Error::invalid(
                "trajectory was recorded with a different filter layout",
            ));
        }
        FilterTrajectory::Explicit {
            channels,
            filter_len,
            filters,
            ..
        } if *channels != d_count
            || *filter_len != n
            || filters.len() != frames * bins * d_count * n =>
        {
            return Err(Error::invalid(
                "explicit trajectory does not match the configuration",
            ));
        }
        _ => {}
    }

    // Per band: outputs for every component, laid out [c][t][d].
    let per_band: Vec<Vec<Complex64>> = (0..bins)
        .into_par_iter()
        .map(|f| {
            let mut lines: Vec<DelayLine> = components
                .iter()
                .map(|_| DelayLine::new(d_count, cfg.history_len()))
                .collect();
            let mut out = vec![ZERO; components.len() * frames * d_count];
            let mut stacked = vec![ZERO; n];
            let mut frame = vec![ZERO; d_count];
            let mut apply = |t: usize, g: &[Complex64]| {
                for (c, (comp, line)) in components.iter().zip(lines.iter_mut()).enumerate() {
                    line.stack(cfg.delay, cfg.taps, &mut stacked);
                    for (d, v) in frame.iter_mut().enumerate() {
                        *v = comp.get(d, t, f);
                    }
                    for d in 0..d_count {
                        let gd = &g[d * n..(d + 1) * n];
                        let predicted: Complex64 =
                            gd.iter().zip(&stacked).map(|(g, x)| g.conj() * x).sum();
                        out[(c * frames + t) * d_count + d] = frame[d] - predicted;
                    }
                    line.push(&frame);
                }
            };
            match trajectory {
                FilterTrajectory::Replay { .. } => {
                    trajectory.replay_band(f, |t, state, _| apply(t, state.filters()))?;
                }
                FilterTrajectory::Explicit { filters, .. } => {
                    let block = d_count * n;
                    for t in 0..frames {
                        let at = (t * bins + f) * block;
                        apply(t, &filters[at..at + block]);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut outputs = vec![ComplexSpectrogram::zeros(d_count, frames, bins); components.len()];
    for (f, band) in per_band.iter().enumerate() {
        for (c, spec) in outputs.iter_mut().enumerate() {
            for t in 0..frames {
                for d in 0..d_count {
                    spec.set(d, t, f, band[(c * frames + t) * d_count + d]);
                }
            }
        }
    }
    Ok(outputs)
}
