//! Online multichannel dereverberation with Kalman-filter and RLS weighted
//! prediction error filters.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustics;
pub mod complexity;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod metrics;
pub mod neural;
pub mod parity;
pub mod stft;

pub use num_complex::Complex64;

pub use acoustics::{DatasetConfig, MixtureExample, Rir};
pub use engine::{
    process_utterance, shadow_filter, CovarianceUpdate, Diagnostics, EnhancementResult,
    FilterTrajectory, Mode, ResidualFeed, WpeBandState, WpeConfig,
};
pub use error::{Error, Result};
pub use estimators::{PsdEstimator, TransitionModel};
pub use metrics::{EvalReport, ExampleMetrics};
pub use neural::{MaskNet, NeuralNetWeights, VarNet};
pub use stft::{ComplexSpectrogram, Stft, StftConfig};
