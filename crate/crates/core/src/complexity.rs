//! Analytic multiply-accumulate counts for one second of processing.
//!
//! Counts follow the operations the engine actually performs. One complex
//! multiply-accumulate is four real ones; additions, symmetrization and
//! nonlinearities are not counted.

use serde::{Deserialize, Serialize};

use crate::engine::{Mode, WpeConfig};
use crate::stft::StftConfig;

/// Hidden width of the full-size networks.
pub const REFERENCE_HIDDEN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityConfig {
    pub wpe: WpeConfig,
    pub stft: StftConfig,
    /// Recurrent width of the networks; ignored for disabled networks.
    pub hidden: usize,
    pub masknet: bool,
    pub varnet: bool,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        ComplexityConfig {
            wpe: WpeConfig::default(),
            stft: StftConfig::default(),
            hidden: REFERENCE_HIDDEN,
            masknet: true,
            varnet: true,
        }
    }
}

/// Real MACs per second, split by stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacBreakdown {
    pub stft: f64,
    pub recursion: f64,
    pub masknet: f64,
    pub varnet: f64,
}

impl MacBreakdown {
    pub fn total(&self) -> f64 {
        self.stft + self.recursion + self.masknet + self.varnet
    }
}

/// Complex MACs of one per-bin recursion step with `n = DK` filter taps:
/// `Phi X` and the rank-one covariance update (`n^2` each), the gain
/// denominator and scaling (`n` each), and per channel the innovation, the
/// filter update and the output (`n` each). RLS additionally rescales the
/// covariance by the forgetting factor, `n^2` real-by-complex products.
pub fn recursion_complex_macs(cfg: &WpeConfig) -> usize {
    let n = cfg.filter_len();
    let rescale = match cfg.mode {
        Mode::KalmanFilter => 0,
        Mode::RecursiveLeastSquares => n * n / 2,
    };
    2 * n * n + 2 * n + 3 * cfg.channels * n + rescale
}

/// Real MACs of one radix-2 complex FFT of length `n` (one complex
/// multiply per butterfly).
pub fn fft_real_macs(n: usize) -> usize {
    4 * (n / 2) * n.trailing_zeros() as usize
}

/// Real MACs of one LSTM step.
pub fn lstm_macs(inputs: usize, hidden: usize) -> usize {
    4 * hidden * (inputs + hidden)
}

pub fn masknet_macs(bins: usize, hidden: usize) -> usize {
    lstm_macs(bins, hidden) + hidden * bins
}

pub fn varnet_macs(bins: usize, hidden: usize) -> usize {
    3 * bins * bins + lstm_macs(bins, hidden) + hidden * bins
}

pub fn mac_per_second(cfg: &ComplexityConfig) -> MacBreakdown {
    let fps = cfg.stft.frames_per_second();
    let bins = cfg.stft.num_bins();
    let n = cfg.stft.window_len;
    // Analysis and synthesis per channel: windowing plus one FFT each.
    let stft_frame = 2 * cfg.wpe.channels * (fft_real_macs(n.next_power_of_two()) + n);
    let recursion = 4 * recursion_complex_macs(&cfg.wpe) * bins;
    let h = cfg.hidden;
    MacBreakdown {
        stft: stft_frame as f64 * fps,
        recursion: recursion as f64 * fps,
        masknet: if cfg.masknet {
            masknet_macs(bins, h) as f64 * fps
        } else {
            0.0
        },
        varnet: if cfg.varnet {
            varnet_macs(bins, h) as f64 * fps
        } else {
            0.0
        },
    }
}
