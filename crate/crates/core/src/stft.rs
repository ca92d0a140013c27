//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames start at sample 0 with no padding, so the first and last
//! `window_len - hop` samples are not fully overlapped and do not
//! reconstruct exactly. Analysis and synthesis share the periodic
//! square-root Hann window.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate_hz: u32,
}

impl Default for StftConfig {
    /// 32 ms window, 75% overlap at 16 kHz (257 bins).
    fn default() -> Self {
        StftConfig {
            window_len: 512,
            hop: 128,
            sample_rate_hz: 16_000,
        }
    }
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize, sample_rate_hz: u32) -> Result<Self> {
        let cfg = StftConfig {
            window_len,
            hop,
            sample_rate_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || !self.window_len.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "window length must be even and >= 2, got {}",
                self.window_len
            )));
        }
        if self.hop == 0 || !self.window_len.is_multiple_of(self.hop) {
            return Err(Error::invalid(format!(
                "hop {} must divide window length {}",
                self.hop, self.window_len
            )));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        // Squared sqrt-Hann must overlap-add to a constant.
        let w = self.window();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| {
                (n..self.window_len)
                    .step_by(self.hop)
                    .map(|i| w[i] * w[i])
                    .sum()
            })
            .collect();
        let (lo, hi) = sums.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
        if lo <= 0.0 || (hi - lo) > 1e-12 * hi {
            return Err(Error::invalid(format!(
                "window {} with hop {} does not satisfy constant overlap-add",
                self.window_len, self.hop
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    pub fn output_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.window_len
        }
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate_hz as f64 / self.hop as f64
    }

    /// Periodic square-root Hann window.
    pub fn window(&self) -> Vec<f64> {
        sqrt_hann(self.window_len)
    }

    /// Overlap-add gain of the squared window in the fully overlapped region.
    fn ola_gain(&self) -> f64 {
        let w = self.window();
        (0..self.window_len)
            .step_by(self.hop)
            .map(|i| w[i] * w[i])
            .sum()
    }
}

pub fn sqrt_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).sqrt())
        .collect()
}

/// Multichannel one-sided spectrogram, stored `[channel][frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    channels: usize,
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn zeros(channels: usize, frames: usize, bins: usize) -> Self {
        ComplexSpectrogram {
            channels,
            frames,
            bins,
            data: vec![Complex64::new(0.0, 0.0); channels * frames * bins],
        }
    }

    pub fn from_vec(
        channels: usize,
        frames: usize,
        bins: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if data.len() != channels * frames * bins {
            return Err(Error::invalid(format!(
                "spectrogram data has {} values, expected {}x{}x{}",
                data.len(),
                channels,
                frames,
                bins
            )));
        }
        Ok(ComplexSpectrogram {
            channels,
            frames,
            bins,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.frames, self.bins)
    }

    #[inline]
    fn offset(&self, d: usize, t: usize, f: usize) -> usize {
        debug_assert!(d < self.channels && t < self.frames && f < self.bins);
        (d * self.frames + t) * self.bins + f
    }

    #[inline]
    pub fn get(&self, d: usize, t: usize, f: usize) -> Complex64 {
        self.data[self.offset(d, t, f)]
    }

    #[inline]
    pub fn set(&mut self, d: usize, t: usize, f: usize, v: Complex64) {
        let i = self.offset(d, t, f);
        self.data[i] = v;
    }

    pub fn frame(&self, d: usize, t: usize) -> &[Complex64] {
        let i = self.offset(d, t, 0);
        &self.data[i..i + self.bins]
    }

    pub fn frame_mut(&mut self, d: usize, t: usize) -> &mut [Complex64] {
        let i = self.offset(d, t, 0);
        &mut self.data[i..i + self.bins]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Sum of squared magnitudes over all entries.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn same_dims(&self, other: &ComplexSpectrogram) -> bool {
        self.dims() == other.dims()
    }

    /// Channel-averaged periodogram `(1/D) sum_d |x_d|^2` of frame `t`.
    pub fn mean_power(&self, t: usize, out: &mut [f64]) {
        out.fill(0.0);
        for d in 0..self.channels {
            for (o, c) in out.iter_mut().zip(self.frame(d, t)) {
                *o += c.norm_sqr();
            }
        }
        let scale = 1.0 / self.channels as f64;
        out.iter_mut().for_each(|o| *o *= scale);
    }

    /// Channel-averaged magnitude `(1/D) sum_d |x_d|` of frame `t`.
    pub fn mean_magnitude(&self, t: usize, out: &mut [f64]) {
        out.fill(0.0);
        for d in 0..self.channels {
            for (o, c) in out.iter_mut().zip(self.frame(d, t)) {
                *o += c.norm();
            }
        }
        let scale = 1.0 / self.channels as f64;
        out.iter_mut().for_each(|o| *o *= scale);
    }
}

impl std::ops::Add for &ComplexSpectrogram {
    type Output = ComplexSpectrogram;

    fn add(self, rhs: &ComplexSpectrogram) -> ComplexSpectrogram {
        assert!(self.same_dims(rhs), "spectrogram dims differ");
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        ComplexSpectrogram { data, ..*self }
    }
}

/// Reusable forward/inverse transforms for one configuration.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Stft {
            window: cfg.window(),
            forward: planner.plan_fft_forward(cfg.window_len),
            inverse: planner.plan_fft_inverse(cfg.window_len),
            cfg,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn analyze<S: AsRef<[f64]>>(&self, signal: &[S]) -> Result<ComplexSpectrogram> {
        let n = self.cfg.window_len;
        let len = check_channels(signal)?;
        if len < n {
            return Err(Error::invalid(format!(
                "signal has {len} samples, shorter than one {n}-sample window"
            )));
        }
        let frames = self.cfg.num_frames(len);
        let bins = self.cfg.num_bins();
        let mut spec = ComplexSpectrogram::zeros(signal.len(), frames, bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for (d, ch) in signal.iter().enumerate() {
            let ch = ch.as_ref();
            for t in 0..frames {
                let start = t * self.cfg.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(ch[start + i] * self.window[i], 0.0);
                }
                self.forward.process_with_scratch(&mut buf, &mut scratch);
                let out = spec.frame_mut(d, t);
                out.copy_from_slice(&buf[..bins]);
                // Real input: DC and Nyquist are real up to rounding.
                out[0].im = 0.0;
                out[bins - 1].im = 0.0;
            }
        }
        Ok(spec)
    }

    pub fn synthesize(&self, spec: &ComplexSpectrogram) -> Result<Vec<Vec<f64>>> {
        let n = self.cfg.window_len;
        let bins = self.cfg.num_bins();
        if spec.bins() != bins {
            return Err(Error::invalid(format!(
                "spectrogram has {} bins, config expects {bins}",
                spec.bins()
            )));
        }
        let len = self.cfg.output_len(spec.frames());
        let scale = 1.0 / (n as f64 * self.cfg.ola_gain());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let mut out = vec![vec![0.0; len]; spec.channels()];
        for (d, y) in out.iter_mut().enumerate() {
            for t in 0..spec.frames() {
                let frame = spec.frame(d, t);
                buf[..bins].copy_from_slice(frame);
                buf[0].im = 0.0;
                buf[bins - 1].im = 0.0;
                for k in bins..n {
                    buf[k] = frame[n - k].conj();
                }
                self.inverse.process_with_scratch(&mut buf, &mut scratch);
                let start = t * self.cfg.hop;
                for (i, b) in buf.iter().enumerate() {
                    y[start + i] += b.re * self.window[i] * scale;
                }
            }
        }
        Ok(out)
    }
}

pub fn analyze<S: AsRef<[f64]>>(signal: &[S], cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    Stft::new(*cfg)?.analyze(signal)
}

pub fn synthesize(spec: &ComplexSpectrogram, cfg: &StftConfig) -> Result<Vec<Vec<f64>>> {
    Stft::new(*cfg)?.synthesize(spec)
}

fn check_channels<S: AsRef<[f64]>>(signal: &[S]) -> Result<usize> {
    let first = signal
        .first()
        .ok_or_else(|| Error::invalid("signal has no channels"))?
        .as_ref()
        .len();
    if signal.iter().any(|c| c.as_ref().len() != first) {
        return Err(Error::invalid("channels differ in length"));
    }
    if let Some(bad) = signal
        .iter()
        .flat_map(|c| c.as_ref().iter())
        .find(|v| !v.is_finite())
    {
        return Err(Error::invalid(format!("non-finite sample {bad}")));
    }
    Ok(first)
}
