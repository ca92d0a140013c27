//! Inputs shared by the benchmarks.

use kfwpe::{ComplexSpectrogram, DatasetConfig, MixtureExample, Stft, StftConfig};

/// One seeded two-channel reverberant example.
pub fn example(seconds: f64) -> MixtureExample {
    let cfg = DatasetConfig {
        n_examples: 1,
        duration_seconds: seconds,
        seed: 11,
        ..Default::default()
    };
    kfwpe::acoustics::make_dataset(&cfg)
        .expect("valid corpus config")
        .remove(0)
}

pub fn mixture_spectrogram(seconds: f64) -> ComplexSpectrogram {
    let stft = Stft::new(StftConfig::default()).expect("default STFT");
    stft.analyze(&example(seconds).mixture).expect("analysis")
}
