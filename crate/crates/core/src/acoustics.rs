//! Synthetic noisy reverberant mixtures with a known decomposition into
//! target (direct path plus early reflections), late reverberation and noise.
//!
//! Room responses follow a statistical model: Gaussian taps under an
//! exponential envelope that falls by 60 dB over T60. Dry sources are
//! speech-like modulated noise with pauses; noise is pink.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary between early and late parts of a response.
pub const EARLY_BOUNDARY_MS: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate_hz: u32,
    pub t60_seconds: f64,
}

impl Rir {
    /// Single unit tap, no reverberation.
    pub fn anechoic(sample_rate_hz: u32) -> Self {
        Rir {
            taps: vec![1.0],
            sample_rate_hz,
            t60_seconds: 0.0,
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.taps.len() as f64 / self.sample_rate_hz as f64
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Exponentially decaying Gaussian response for channel `channel`.
///
/// Tap `k` is `g_k * exp(-3 ln(10) k / (fs T60))`, so the energy envelope
/// drops by 60 dB after T60 seconds. Tap 0 is the envelope peak (direct path).
pub fn generate_rir(
    t60: f64,
    duration: f64,
    sample_rate_hz: u32,
    channel: usize,
    seed: u64,
) -> Result<Rir> {
    if !(t60 > 0.0) || !t60.is_finite() {
        return Err(Error::invalid(format!("T60 must be positive, got {t60}")));
    }
    if !(duration >= 0.1) || !duration.is_finite() {
        return Err(Error::invalid(format!(
            "response duration must be at least 0.1 s, got {duration}"
        )));
    }
    let fs = sample_rate_hz as f64;
    let len = (duration * fs).round() as usize;
    let rate = 3.0 * 10f64.ln() / (fs * t60);
    let mut rng = rng_for(seed, 0x5249_5200 + channel as u64);
    let mut taps: Vec<f64> = (0..len)
        .map(|k| {
            let g: f64 = rng.sample(StandardNormal);
            g * (-rate * k as f64).exp()
        })
        .collect();
    taps[0] = 1.0;
    Ok(Rir {
        taps,
        sample_rate_hz,
        t60_seconds: t60,
    })
}

/// Splits a response at `boundary_ms` into early `[0, b)` and late `[b, end)`
/// parts. Both keep the full length so they sum back to the input.
pub fn split_rir(rir: &Rir, boundary_ms: f64) -> Result<(Rir, Rir)> {
    let boundary = (boundary_ms * 1e-3 * rir.sample_rate_hz as f64).round();
    if !(boundary >= 0.0) || boundary as usize > rir.taps.len() {
        return Err(Error::invalid(format!(
            "boundary {boundary_ms} ms lies outside a {:.3} s response",
            rir.duration_seconds()
        )));
    }
    let b = boundary as usize;
    let mut early = rir.clone();
    let mut late = rir.clone();
    early.taps[b..].fill(0.0);
    late.taps[..b].fill(0.0);
    Ok((early, late))
}

/// Full linear convolution via FFT.
pub fn convolve(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    if signal.is_empty() || kernel.is_empty() {
        return Vec::new();
    }
    let out_len = signal.len() + kernel.len() - 1;
    if kernel.len().min(signal.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, &s) in signal.iter().enumerate() {
            for (j, &k) in kernel.iter().enumerate() {
                out[i + j] += s * k;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |x: &[f64]| {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for (o, &s) in v.iter_mut().zip(x) {
            o.re = s;
        }
        v
    };
    let mut a = pad(signal);
    let mut b = pad(kernel);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Power summed over all channels and samples.
pub fn total_power<S: AsRef<[f64]>>(channels: &[S]) -> f64 {
    channels
        .iter()
        .flat_map(|c| c.as_ref().iter())
        .map(|v| v * v)
        .sum()
}

/// Noisy reverberant mixture with ground truth components.
/// `mixture = target + late + noise` holds sample-exact per channel.
#[derive(Debug, Clone)]
pub struct MixtureExample {
    pub dry: Vec<f64>,
    pub mixture: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    pub late: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub snr_db: f64,
    pub t60_seconds: f64,
    pub seed: u64,
    pub sample_rate_hz: u32,
}

impl MixtureExample {
    pub fn channels(&self) -> usize {
        self.mixture.len()
    }

    pub fn len(&self) -> usize {
        self.dry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dry.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Convolves `dry` with each channel's early and late response parts and
/// adds `noise` scaled so that the reverberant-to-noise power ratio, summed
/// over channels, equals `snr_db`. Components are truncated to the dry length.
pub fn render_mixture<S: AsRef<[f64]>>(
    dry: &[f64],
    rirs: &[Rir],
    noise: &[S],
    snr_db: f64,
) -> Result<MixtureExample> {
    if rirs.is_empty() {
        return Err(Error::invalid("at least one channel response is required"));
    }
    if noise.len() != rirs.len() {
        return Err(Error::invalid(format!(
            "{} noise channels for {} responses",
            noise.len(),
            rirs.len()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    let len = dry.len();
    if total_power(&[dry]) == 0.0 {
        return Err(Error::invalid("dry signal is silent"));
    }
    if let Some(short) = noise.iter().find(|n| n.as_ref().len() < len) {
        return Err(Error::invalid(format!(
            "noise has {} samples, dry signal has {len}",
            short.as_ref().len()
        )));
    }
    let sample_rate_hz = rirs[0].sample_rate_hz;
    let mut target = Vec::with_capacity(rirs.len());
    let mut late = Vec::with_capacity(rirs.len());
    for rir in rirs {
        let boundary = EARLY_BOUNDARY_MS.min(rir.duration_seconds() * 1e3);
        let (e, l) = split_rir(rir, boundary)?;
        let mut nu = convolve(dry, &e.taps);
        nu.truncate(len);
        let mut r = convolve(dry, &l.taps);
        r.truncate(len);
        target.push(nu);
        late.push(r);
    }
    let reverberant: Vec<Vec<f64>> = target
        .iter()
        .zip(&late)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let signal_power = total_power(&reverberant);
    let raw_noise: Vec<&[f64]> = noise.iter().map(|n| &n.as_ref()[..len]).collect();
    let noise_power = total_power(&raw_noise);
    if noise_power == 0.0 {
        return Err(Error::invalid("noise is silent"));
    }
    let gain = (signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise: Vec<Vec<f64>> = raw_noise
        .iter()
        .map(|n| n.iter().map(|v| v * gain).collect())
        .collect();
    let mixture = reverberant
        .iter()
        .zip(&noise)
        .map(|(s, n)| s.iter().zip(n).map(|(a, b)| a + b).collect())
        .collect();
    Ok(MixtureExample {
        dry: dry.to_vec(),
        mixture,
        target,
        late,
        noise,
        snr_db,
        t60_seconds: rirs[0].t60_seconds,
        seed: 0,
        sample_rate_hz,
    })
}

/// Speech-like source: low-passed Gaussian noise under a 4 Hz syllabic
/// envelope, gated into words with about 30% silence.
pub fn speech_like(len: usize, sample_rate_hz: u32, seed: u64) -> Vec<f64> {
    let fs = sample_rate_hz as f64;
    let mut rng = rng_for(seed, 0x5350_4545);

    // Word gating: blocks of 150-600 ms, each silent with probability 0.3.
    let mut gate = vec![0.0; len];
    let mut pos = 0;
    while pos < len {
        let block = ((rng.random_range(0.15..0.6)) * fs) as usize;
        // The first word is always voiced so short clips are never silent.
        let on = if pos > 0 && rng.random_bool(0.3) {
            0.0
        } else {
            1.0
        };
        let end = (pos + block).min(len);
        gate[pos..end].fill(on);
        pos = end;
    }
    // 5 ms one-pole smoothing of the gate edges.
    let smooth = (-1.0 / (0.005 * fs)).exp();
    let mut g = 0.0;
    for v in gate.iter_mut() {
        g = smooth * g + (1.0 - smooth) * *v;
        *v = g;
    }

    let syllable_hz = 4.0;
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    let mut lp = 0.0;
    let mut out: Vec<f64> = (0..len)
        .map(|i| {
            let white: f64 = rng.sample(StandardNormal);
            lp = 0.9 * lp + white;
            let t = i as f64 / fs;
            let syllable = 0.5 - 0.5 * (2.0 * PI * syllable_hz * t + phase).cos();
            lp * (0.1 + 0.9 * syllable) * gate[i]
        })
        .collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

/// Pink noise using Paul Kellett's refined filter on seeded white noise.
pub fn pink_noise(len: usize, seed: u64, channel: usize) -> Vec<f64> {
    let mut rng = rng_for(seed, 0x504E_4B00 + channel as u64);
    let mut b = [0.0f64; 7];
    (0..len)
        .map(|_| {
            let white: f64 = rng.sample(StandardNormal);
            b[0] = 0.99886 * b[0] + white * 0.0555179;
            b[1] = 0.99332 * b[1] + white * 0.0750759;
            b[2] = 0.96900 * b[2] + white * 0.1538520;
            b[3] = 0.86650 * b[3] + white * 0.3104856;
            b[4] = 0.55000 * b[4] + white * 0.5329522;
            b[5] = -0.7616 * b[5] - white * 0.0168980;
            let out = b.iter().sum::<f64>() + white * 0.5362;
            b[6] = white * 0.115926;
            out * 0.11
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_examples: usize,
    pub t60_range: (f64, f64),
    pub snr_range: (f64, f64),
    pub seed: u64,
    pub duration_seconds: f64,
    pub channels: usize,
    pub sample_rate_hz: u32,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_examples: 20,
            t60_range: (0.4, 1.0),
            snr_range: (-5.0, 25.0),
            seed: 42,
            duration_seconds: 8.0,
            channels: 2,
            sample_rate_hz: 16_000,
        }
    }
}

/// Parameters drawn for one corpus entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleParams {
    pub seed: u64,
    pub t60_seconds: f64,
    pub snr_db: f64,
}

impl DatasetConfig {
    /// Samples per example.
    pub fn example_len(&self) -> usize {
        (self.duration_seconds * self.sample_rate_hz as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let (t_lo, t_hi) = self.t60_range;
        let (s_lo, s_hi) = self.snr_range;
        if self.n_examples == 0 {
            return Err(Error::invalid("corpus needs at least one example"));
        }
        if !(t_lo > 0.0 && t_hi >= t_lo) {
            return Err(Error::invalid(format!("empty T60 range {t_lo}..{t_hi}")));
        }
        if !(s_lo.is_finite() && s_hi.is_finite() && s_hi >= s_lo) {
            return Err(Error::invalid(format!("empty SNR range {s_lo}..{s_hi}")));
        }
        if self.channels == 0 || self.sample_rate_hz == 0 || !(self.duration_seconds > 0.0) {
            return Err(Error::invalid(
                "channels, sample rate and duration must be positive",
            ));
        }
        Ok(())
    }

    /// Draws T60 and SNR uniformly per example. Pure function of the seed.
    pub fn sample_params(&self) -> Result<Vec<ExampleParams>> {
        self.validate()?;
        let mut rng = rng_for(self.seed, 0x434F_5250);
        Ok((0..self.n_examples)
            .map(|_| {
                let t60 = uniform(&mut rng, self.t60_range);
                let snr = uniform(&mut rng, self.snr_range);
                ExampleParams {
                    seed: rng.random(),
                    t60_seconds: t60,
                    snr_db: snr,
                }
            })
            .collect())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Renders one corpus entry from its drawn parameters with seeded pink noise.
pub fn make_example(cfg: &DatasetConfig, params: &ExampleParams) -> Result<MixtureExample> {
    let noise: Vec<Vec<f64>> = (0..cfg.channels)
        .map(|d| pink_noise(cfg.example_len(), params.seed, d))
        .collect();
    make_example_with_noise(cfg, params, &noise)
}

/// Same as [`make_example`] with caller-supplied noise, one signal per
/// channel of at least [`DatasetConfig::example_len`] samples.
pub fn make_example_with_noise<S: AsRef<[f64]>>(
    cfg: &DatasetConfig,
    params: &ExampleParams,
    noise: &[S],
) -> Result<MixtureExample> {
    let fs = cfg.sample_rate_hz;
    let dry = speech_like(cfg.example_len(), fs, params.seed);
    // The response spans its own 60 dB decay.
    let rir_duration = params.t60_seconds.max(0.1);
    let rirs = (0..cfg.channels)
        .map(|d| generate_rir(params.t60_seconds, rir_duration, fs, d, params.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut ex = render_mixture(&dry, &rirs, noise, params.snr_db)?;
    ex.seed = params.seed;
    Ok(ex)
}

pub fn make_dataset(cfg: &DatasetConfig) -> Result<Vec<MixtureExample>> {
    cfg.sample_params()?
        .par_iter()
        .map(|p| make_example(cfg, p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: u32 = 16_000;

    /// Mean energy per 10 ms window across many responses, then a
    /// least-squares line through the dB values in the first 60 dB.
    fn fitted_decay_db_per_second(t60: f64, count: u64) -> f64 {
        let duration = t60;
        let win = (0.01 * FS as f64) as usize;
        let mut energy: Vec<f64> = Vec::new();
        for seed in 0..count {
            let rir = generate_rir(t60, duration, FS, 0, seed).unwrap();
            let frames = rir.taps.len() / win;
            energy.resize(frames, 0.0);
            for (w, e) in energy.iter_mut().enumerate() {
                // Skip the direct-path tap; it sits above the envelope.
                let start = (w * win).max(1);
                *e += rir.taps[start..(w + 1) * win]
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>();
            }
        }
        let pts: Vec<(f64, f64)> = energy
            .iter()
            .enumerate()
            .map(|(w, &e)| ((w as f64 + 0.5) * 0.01, 10.0 * e.log10()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn rir_decays_sixty_db_over_t60() {
        for &t60 in &[0.4, 0.7, 1.0] {
            let slope = fitted_decay_db_per_second(t60, 200);
            let drop = -slope * t60;
            assert!((drop - 60.0).abs() < 3.0, "t60 {t60}: {drop} dB");
        }
    }

    #[test]
    fn decay_slope_ratio_tracks_t60() {
        let ratio = fitted_decay_db_per_second(0.4, 200) / fitted_decay_db_per_second(1.0, 200);
        assert!((ratio - 2.5).abs() < 0.25, "ratio {ratio}");
    }

    #[test]
    fn rir_is_deterministic_per_seed_and_channel() {
        let a = generate_rir(0.5, 0.3, FS, 1, 9).unwrap();
        let b = generate_rir(0.5, 0.3, FS, 1, 9).unwrap();
        let c = generate_rir(0.5, 0.3, FS, 0, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.taps, c.taps);
        assert_eq!(a.taps[0], 1.0);
        assert_eq!(a.taps.len(), 4800);
    }

    #[test]
    fn rir_rejects_bad_parameters() {
        assert!(generate_rir(0.0, 1.0, FS, 0, 0).is_err());
        assert!(generate_rir(-1.0, 1.0, FS, 0, 0).is_err());
        assert!(generate_rir(0.5, 0.05, FS, 0, 0).is_err());
    }

    #[test]
    fn split_at_forty_ms() {
        let rir = generate_rir(0.6, 0.6, FS, 0, 4).unwrap();
        let (early, late) = split_rir(&rir, 40.0).unwrap();
        let boundary = (0.040f64 * 16000.0).round() as usize;
        assert_eq!(boundary, 640);
        assert!(early.taps[640..].iter().all(|&v| v == 0.0));
        assert!(late.taps[..640].iter().all(|&v| v == 0.0));
        for k in 0..rir.taps.len() {
            assert_eq!(early.taps[k] + late.taps[k], rir.taps[k]);
        }
    }

    #[test]
    fn split_at_full_duration_leaves_empty_late_part() {
        let rir = generate_rir(0.6, 0.2, FS, 0, 4).unwrap();
        let (early, late) = split_rir(&rir, 200.0).unwrap();
        assert_eq!(early.taps, rir.taps);
        assert!(late.taps.iter().all(|&v| v == 0.0));
        assert!(split_rir(&rir, 250.0).is_err());
        assert!(split_rir(&rir, -1.0).is_err());
    }

    #[test]
    fn convolution_is_linear_in_the_split() {
        let rir = generate_rir(0.5, 0.5, FS, 0, 2).unwrap();
        let (early, late) = split_rir(&rir, 40.0).unwrap();
        let dry = speech_like(8000, FS, 5);
        let whole = convolve(&dry, &rir.taps);
        let e = convolve(&dry, &early.taps);
        let l = convolve(&dry, &late.taps);
        let err: f64 = whole
            .iter()
            .zip(e.iter().zip(&l))
            .map(|(w, (a, b))| (w - a - b).powi(2))
            .sum();
        let norm: f64 = whole.iter().map(|v| v * v).sum();
        assert!((err / norm).sqrt() < 1e-10);
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.11).cos()).collect();
        let fast = convolve(&a, &b);
        for n in 0..fast.len() {
            let direct: f64 = (0..b.len())
                .filter(|&j| n >= j && n - j < a.len())
                .map(|j| a[n - j] * b[j])
                .sum();
            assert!((fast[n] - direct).abs() < 1e-12);
        }
    }

    fn two_channel_example(snr_db: f64) -> MixtureExample {
        let dry = speech_like(16_000, FS, 1);
        let rirs: Vec<Rir> = (0..2)
            .map(|d| generate_rir(0.5, 0.5, FS, d, 1).unwrap())
            .collect();
        let noise: Vec<Vec<f64>> = (0..2).map(|d| pink_noise(16_000, 1, d)).collect();
        render_mixture(&dry, &rirs, &noise, snr_db).unwrap()
    }

    #[test]
    fn mixture_components_sum_exactly() {
        let ex = two_channel_example(5.0);
        for d in 0..2 {
            for i in 0..ex.len() {
                assert_eq!(
                    ex.mixture[d][i],
                    ex.target[d][i] + ex.late[d][i] + ex.noise[d][i]
                );
            }
        }
    }

    #[test]
    fn measured_snr_matches_request() {
        for &snr in &[-5.0, 7.3, 25.0] {
            let ex = two_channel_example(snr);
            let rev: Vec<Vec<f64>> = (0..2)
                .map(|d| {
                    (0..ex.len())
                        .map(|i| ex.target[d][i] + ex.late[d][i])
                        .collect()
                })
                .collect();
            let measured = 10.0 * (total_power(&rev) / total_power(&ex.noise)).log10();
            assert!((measured - snr).abs() < 1e-9, "{measured} vs {snr}");
        }
    }

    #[test]
    fn high_snr_leaves_negligible_noise() {
        let ex = two_channel_example(60.0);
        let ratio = total_power(&ex.noise) / (total_power(&ex.target) + total_power(&ex.late));
        assert!(ratio < 1.2e-6);
    }

    #[test]
    fn anechoic_response_passes_dry_through() {
        let dry = speech_like(4000, FS, 8);
        let noise = vec![pink_noise(4000, 8, 0)];
        let ex = render_mixture(&dry, &[Rir::anechoic(FS)], &noise, 20.0).unwrap();
        assert_eq!(ex.target[0], dry);
        assert!(ex.late[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn render_rejects_silence_and_short_noise() {
        let rirs = [Rir::anechoic(FS)];
        let noise = vec![vec![1.0; 100]];
        assert!(render_mixture(&[0.0; 100], &rirs, &noise, 0.0).is_err());
        assert!(render_mixture(&[1.0; 200], &rirs, &noise, 0.0).is_err());
    }

    #[test]
    fn speech_like_has_pauses() {
        let x = speech_like(16_000 * 10, FS, 3);
        let win = 160;
        let frames: Vec<f64> = x
            .chunks(win)
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        let peak = frames.iter().cloned().fold(0.0, f64::max);
        let silent = frames.iter().filter(|&&e| e < 1e-4 * peak).count() as f64;
        let frac = silent / frames.len() as f64;
        assert!(frac > 0.1 && frac < 0.5, "silent fraction {frac}");
    }

    #[test]
    fn dataset_is_deterministic() {
        let cfg = DatasetConfig {
            n_examples: 10,
            duration_seconds: 0.5,
            ..Default::default()
        };
        let a = make_dataset(&cfg).unwrap();
        let b = make_dataset(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mixture, y.mixture);
            assert_eq!(x.snr_db, y.snr_db);
            assert!((0.4..=1.0).contains(&x.t60_seconds));
        }
    }

    #[test]
    fn snr_draws_are_uniform() {
        let cfg = DatasetConfig {
            n_examples: 500,
            ..Default::default()
        };
        let params = cfg.sample_params().unwrap();
        let mean = params.iter().map(|p| p.snr_db).sum::<f64>() / 500.0;
        assert!((mean - 10.0).abs() < 1.0, "mean SNR {mean}");
        assert!(params.iter().all(|p| (0.4..=1.0).contains(&p.t60_seconds)));
        assert!(params.iter().all(|p| (-5.0..=25.0).contains(&p.snr_db)));
    }

    #[test]
    fn empty_ranges_are_rejected() {
        let mut cfg = DatasetConfig {
            t60_range: (1.0, 0.4),
            ..Default::default()
        };
        assert!(cfg.sample_params().is_err());
        cfg = DatasetConfig::default();
        cfg.n_examples = 0;
        assert!(cfg.sample_params().is_err());
    }
}
