//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any failed.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use kfwpe::acoustics::{make_dataset, DatasetConfig, MixtureExample};
use kfwpe::complexity::{mac_per_second, ComplexityConfig};
use kfwpe::engine::{process_utterance, FilterTrajectory, Mode, WpeBandState, WpeConfig};
use kfwpe::estimators::{PsdEstimator, TransitionModel, FIXED_BIAS_DB, MAX_BIAS_DB};
use kfwpe::metrics::{
    decomposition_error, evaluate_corpus, EvalCase, EvalOptions, EvalReport, MetricSet,
};
use kfwpe::neural::{MaskNet, NeuralNetWeights, VarNet};
use kfwpe::{shadow_filter, Complex64, ResidualFeed, Stft, StftConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn cn(rng: &mut ChaCha8Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    Complex64::new(
        s * rng.sample::<f64, _>(StandardNormal),
        s * rng.sample::<f64, _>(StandardNormal),
    )
}

fn interior_rel_err(x: &[f64], y: &[f64], margin: usize) -> f64 {
    let end = y.len() - margin;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in margin..end {
        num += (x[i] - y[i]).powi(2);
        den += x[i].powi(2);
    }
    (num / den).sqrt()
}

fn stft_round_trip() -> Outcome {
    let start = Instant::now();
    let cfg = StftConfig::default();
    let stft = Stft::new(cfg).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.random_range(4_000..20_000);
        let x: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let y = stft.synthesize(&stft.analyze(&[&x]).unwrap()).unwrap();
        worst = worst.max(interior_rel_err(&x, &y[0], cfg.window_len));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-6 && secs < 5.0,
        format!("max interior rel L2 {worst:.2e} (< 1e-6), {secs:.2} s (< 5 s)"),
    )
}

fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let peak = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    if peak > 0.0 {
        diff / peak
    } else {
        diff
    }
}

fn static_equivalence() -> Outcome {
    let cfg = WpeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for bin in 0..16 {
        let mut kf = WpeBandState::new(&cfg, bin);
        let mut rls = WpeBandState::new(&cfg, bin);
        let mut ya = vec![Complex64::new(0.0, 0.0); cfg.channels];
        let mut yb = ya.clone();
        for _ in 0..1000 {
            let x: Vec<Complex64> = (0..cfg.channels).map(|_| cn(&mut rng, 1.0)).collect();
            let lambda = 10f64.powf(rng.random_range(-2.0..1.0));
            kf.kf_step(&x, lambda, 0.0, &mut ya).unwrap();
            rls.rls_step(&x, lambda, 1.0, &mut yb).unwrap();
            worst = worst
                .max(max_rel(rls.filters(), kf.filters()))
                .max(max_rel(&yb, &ya))
                .max(max_rel(rls.covariance(), kf.covariance()));
        }
    }
    outcome(
        worst <= 1e-10,
        format!("max rel deviation {worst:.2e} over 1000 frames x 16 bands (<= 1e-10)"),
    )
}

/// Smallest eigenvalue of a Hermitian matrix via its real symmetric
/// embedding `[[A, -B], [B, A]]`, which has the same spectrum doubled.
fn min_eigenvalue(p: &[Complex64], n: usize) -> f64 {
    let m = DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let v = p[(r % n) * n + (c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    });
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn kalman_invariants() -> Outcome {
    let layouts = [(1, 8, 2), (2, 4, 3), (2, 3, 1), (4, 2, 2), (1, 1, 1)];
    let mut herm = 0.0f64;
    let mut eig_margin = f64::INFINITY;
    let mut den_ok = true;
    let mut checked = 0usize;
    for (i, &(channels, taps, delay)) in layouts.iter().enumerate() {
        let cfg = WpeConfig {
            channels,
            taps,
            delay,
            ..Default::default()
        };
        let n = cfg.filter_len();
        let eta = 10f64.powf(FIXED_BIAS_DB / 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let mut st = WpeBandState::new(&cfg, 0);
        let mut y = vec![Complex64::new(0.0, 0.0); channels];
        let mut e_prev = 0.0;
        for t in 0..600 {
            // Bursts and silences spanning 80 dB, as in gated speech.
            let level = if (t / 40) % 3 == 2 {
                0.0
            } else {
                10f64.powf(rng.random_range(-6.0..2.0))
            };
            let x: Vec<Complex64> = (0..channels).map(|_| cn(&mut rng, level)).collect();
            let lambda = (level * rng.random_range(0.1..1.0)).max(1e-12);
            let phi = e_prev / n as f64 + eta;
            e_prev = st.kf_step(&x, lambda, phi, &mut y).unwrap();

            let p = st.covariance();
            let mut scale = 0.0f64;
            let mut asym = 0.0f64;
            let mut trace = 0.0;
            for r in 0..n {
                trace += p[r * n + r].re;
                for c in 0..n {
                    scale = scale.max(p[r * n + c].norm());
                    asym = asym.max((p[r * n + c] - p[c * n + r].conj()).norm());
                }
            }
            herm = herm.max(asym / scale);
            let floor = -1e-8 * trace / n as f64;
            eig_margin = eig_margin.min(min_eigenvalue(p, n) - floor);
            let den = st.last_denominator();
            den_ok &= den.re > 0.0 && den.re.is_finite() && den.im.abs() <= 1e-10 * den.re;
            checked += 1;
        }
    }
    outcome(
        herm < 1e-12 && eig_margin >= 0.0 && den_ok,
        format!(
            "{checked} steps: hermitian rel {herm:.1e} (< 1e-12), min-eig margin {eig_margin:.2e} (>= 0), denominators real-positive {den_ok}"
        ),
    )
}

/// Spectral radius of the block companion matrix of
/// `x_t = s_t + G^H [x_{t-delay}; ...]`, via the real embedding.
fn spectral_radius(g: &[Complex64], channels: usize, taps: usize, delay: usize) -> f64 {
    let n = channels * taps;
    let m = channels * (delay + taps - 1);
    let mut a = vec![Complex64::new(0.0, 0.0); m * m];
    for k in 0..taps {
        let lag = delay + k - 1;
        for r in 0..channels {
            for c in 0..channels {
                a[r * m + lag * channels + c] = g[r * n + k * channels + c].conj();
            }
        }
    }
    for i in channels..m {
        a[i * m + i - channels] = Complex64::new(1.0, 0.0);
    }
    let re = DMatrix::from_fn(2 * m, 2 * m, |r, c| {
        let v = a[(r % m) * m + c % m];
        match (r < m, c < m) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    });
    re.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `x_t = s_t + G^H X_{t-delay}` with `s` circular Gaussian and `G` scaled
/// to a decaying response (spectral radius 0.9). The oracle PSD is the
/// channel-averaged power of the drawn `s_t`. Returns the final relative
/// filter error.
fn identify(channels: usize, taps: usize, delay: usize, frames: usize, seed: u64) -> f64 {
    let cfg = WpeConfig {
        channels,
        taps,
        delay,
        ..Default::default()
    };
    let n = cfg.filter_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g: Vec<Complex64> = (0..channels * n).map(|_| cn(&mut rng, 1.0)).collect();
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..50 {
        let c = 0.5 * (lo + hi);
        let scaled: Vec<_> = g.iter().map(|v| v * c).collect();
        if spectral_radius(&scaled, channels, taps, delay) < 0.9 {
            lo = c;
        } else {
            hi = c;
        }
    }
    g.iter_mut().for_each(|v| *v *= lo);

    let mut hist: Vec<Vec<Complex64>> = Vec::new();
    let mut st = WpeBandState::new(&cfg, 0);
    let mut y = vec![Complex64::new(0.0, 0.0); channels];
    for t in 0..frames {
        let level = 10f64.powf(rng.random_range(-1.0..1.0));
        let mut stacked = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..taps {
            if let Some(past) = t.checked_sub(delay + k).map(|i| &hist[i]) {
                stacked[k * channels..(k + 1) * channels].copy_from_slice(past);
            }
        }
        let s: Vec<Complex64> = (0..channels).map(|_| cn(&mut rng, level)).collect();
        let x: Vec<Complex64> = (0..channels)
            .map(|d| {
                let pred: Complex64 = g[d * n..(d + 1) * n]
                    .iter()
                    .zip(&stacked)
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                s[d] + pred
            })
            .collect();
        let lambda = s.iter().map(|v| v.norm_sqr()).sum::<f64>() / channels as f64;
        st.kf_step(&x, lambda, 0.0, &mut y).unwrap();
        hist.push(x);
    }
    let num: f64 = st
        .filters()
        .iter()
        .zip(&g)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let den: f64 = g.iter().map(|v| v.norm_sqr()).sum();
    (num / den).sqrt()
}

fn filter_identification() -> Outcome {
    let start = Instant::now();
    let layouts = [
        (1, 1, 1),
        (1, 6, 2),
        (2, 3, 2),
        (3, 2, 1),
        (2, 2, 3),
        (6, 1, 1),
    ];
    let mut worst = 0.0f64;
    for (i, &(d, k, delta)) in layouts.iter().enumerate() {
        for rep in 0..5u64 {
            worst = worst.max(identify(d, k, delta, 500, 1000 + 10 * i as u64 + rep));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 0.1 && secs < 10.0,
        format!("worst ||G-g||/||g|| {worst:.3} after 500 frames (< 0.1), {secs:.2} s (< 10 s)"),
    )
}

struct CorpusRun {
    kf: EvalReport,
    rls: EvalReport,
    decomposition: f64,
    identity: EvalReport,
    secs: f64,
}

fn run_corpus(corpus: &[MixtureExample]) -> CorpusRun {
    let start = Instant::now();
    let opts = EvalOptions::default();
    let stft = Stft::new(opts.stft).unwrap();
    let mixtures: Vec<_> = corpus
        .iter()
        .map(|ex| stft.analyze(&ex.mixture).unwrap())
        .collect();

    let enhance = |mode: Mode| {
        let wpe = WpeConfig {
            mode,
            ..Default::default()
        };
        corpus
            .iter()
            .zip(&mixtures)
            .map(|(ex, mix)| {
                let mut psd = PsdEstimator::oracle(stft.analyze(&ex.target).unwrap());
                let mut tr = TransitionModel::fixed_bias_db(FIXED_BIAS_DB);
                process_utterance(mix, &mut psd, &mut tr, &wpe).unwrap()
            })
            .collect::<Vec<_>>()
    };
    let kf_out = enhance(Mode::KalmanFilter);
    let rls_out = enhance(Mode::RecursiveLeastSquares);

    let mut decomposition = 0.0f64;
    for (ex, res) in corpus.iter().zip(&kf_out) {
        let comps: Vec<_> = [&ex.target, &ex.late, &ex.noise]
            .iter()
            .map(|c| stft.analyze(c).unwrap())
            .collect();
        let shadow = shadow_filter(&comps, &res.trajectory, &opts.wpe).unwrap();
        decomposition = decomposition.max(decomposition_error(&shadow, &res.enhanced).unwrap());
    }

    let report = |outs: &[kfwpe::EnhancementResult], mode: Mode| {
        let cases: Vec<_> = corpus
            .iter()
            .zip(outs)
            .map(|(example, r)| EvalCase {
                example,
                enhanced: &r.enhanced,
                trajectory: &r.trajectory,
            })
            .collect();
        let o = EvalOptions {
            wpe: WpeConfig {
                mode,
                ..Default::default()
            },
            ..opts
        };
        evaluate_corpus(&cases, &o).unwrap()
    };
    let kf = report(&kf_out, Mode::KalmanFilter);
    let rls = report(&rls_out, Mode::RecursiveLeastSquares);

    let zero: Vec<_> = mixtures
        .iter()
        .map(|m| FilterTrajectory::zeros(m.frames(), m.bins(), &opts.wpe))
        .collect();
    let cases: Vec<_> = corpus
        .iter()
        .zip(&mixtures)
        .zip(&zero)
        .map(|((example, enhanced), trajectory)| EvalCase {
            example,
            enhanced,
            trajectory,
        })
        .collect();
    let identity = evaluate_corpus(&cases, &opts).unwrap();

    CorpusRun {
        kf,
        rls,
        decomposition,
        identity,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn mean_improvement(r: &EvalReport) -> MetricSet {
    r.overall.mean_improvement.unwrap()
}

fn oracle_ordering(run: &CorpusRun) -> Outcome {
    let kf = mean_improvement(&run.kf);
    let rls = mean_improvement(&run.rls);
    let ok = kf.elr_db >= rls.elr_db
        && kf.snr_db >= rls.snr_db
        && kf.elr_db > 2.0
        && rls.elr_db > 2.0
        && run.secs < 300.0;
    outcome(
        ok,
        format!(
            "KF dELR {:.2} dB dSNR {:.2} dB dSDR {:.2} dB; RLS dELR {:.2} dB dSNR {:.2} dB dSDR {:.2} dB; {:.0} s (< 300 s)",
            kf.elr_db, kf.snr_db, kf.sdr_db, rls.elr_db, rls.snr_db, rls.sdr_db, run.secs
        ),
    )
}

fn shadow_linearity(run: &CorpusRun, n: usize) -> Outcome {
    outcome(
        run.decomposition < 1e-10,
        format!(
            "max rel mismatch {:.2e} over {n} examples (< 1e-10)",
            run.decomposition
        ),
    )
}

fn identity_null(run: &CorpusRun) -> Outcome {
    let exact = run.identity.examples.iter().all(|e| {
        e.improvement
            == MetricSet {
                snr_db: 0.0,
                sdr_db: 0.0,
                elr_db: 0.0,
            }
    });
    outcome(
        exact,
        format!(
            "all {} examples exactly 0 dB on every metric: {exact}",
            run.identity.examples.len()
        ),
    )
}

fn benchmark() -> Outcome {
    const REFERENCE_GMAC: f64 = 31.4;
    let macs = mac_per_second(&ComplexityConfig::default()).total() / 1e9;
    let mac_ok = (macs - REFERENCE_GMAC).abs() <= 0.2 * REFERENCE_GMAC;

    // Full chain on 20 s: STFT, MaskNet PSD, VarNet transition, recursion,
    // resynthesis.
    let cfg = StftConfig::default();
    let stft = Stft::new(cfg).unwrap();
    let corpus = make_dataset(&DatasetConfig {
        n_examples: 1,
        duration_seconds: 20.0,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let ex = &corpus[0];
    let bins = cfg.num_bins();
    let mask =
        Arc::new(MaskNet::from_weights(&NeuralNetWeights::random_masknet(bins, 512, 1)).unwrap());
    let var =
        Arc::new(VarNet::from_weights(&NeuralNetWeights::random_varnet(bins, 512, 2)).unwrap());
    let start = Instant::now();
    let spec = stft.analyze(&ex.mixture).unwrap();
    let mut psd = PsdEstimator::masknet(mask);
    let mut tr = TransitionModel::varnet(var, MAX_BIAS_DB, ResidualFeed::Previous);
    let res = process_utterance(&spec, &mut psd, &mut tr, &WpeConfig::default()).unwrap();
    let _ = stft.synthesize(&res.enhanced).unwrap();
    let rtf = start.elapsed().as_secs_f64() / ex.duration_seconds();
    outcome(
        mac_ok && rtf < 1.0,
        format!(
            "analytic {macs:.3} GMAC/s vs {REFERENCE_GMAC} +- 20%: {}; measured RTF {rtf:.3} (< 1.0): {}",
            if mac_ok { "ok" } else { "out of range" },
            if rtf < 1.0 { "ok" } else { "too slow" }
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 stft round trip", stft_round_trip()),
        ("2 static-case equivalence", static_equivalence()),
        ("3 kalman invariants", kalman_invariants()),
        ("4 filter identification", filter_identification()),
    ];

    let corpus = make_dataset(&DatasetConfig::default()).unwrap();
    let run = run_corpus(&corpus);
    results.push(("5 oracle ordering", oracle_ordering(&run)));
    results.push((
        "6 shadow-filter linearity",
        shadow_linearity(&run, corpus.len()),
    ));
    results.push(("7 identity null", identity_null(&run)));
    results.push(("8 benchmark", benchmark()));

    let mut failed = 0;
    for (name, o) in &results {
        println!(
            "[{}] {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
