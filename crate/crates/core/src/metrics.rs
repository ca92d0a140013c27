//! Component-wise evaluation of enhanced signals.
//!
//! Every metric is computed on time-domain resynthesis. Input metrics use
//! the components after an STFT round trip, output metrics use the
//! shadow-filtered components, so a zero filter trajectory gives identical
//! signals on both sides. Channels are concatenated before taking powers.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::MixtureExample;
use crate::engine::{shadow_filter, FilterTrajectory, WpeConfig};
use crate::error::{Error, Result};
use crate::stft::{ComplexSpectrogram, Stft, StftConfig};

/// Magnitude limit for every dB figure.
pub const METRIC_CAP_DB: f64 = 100.0;
/// Leading segment excluded from all metrics.
pub const DEFAULT_SKIP_SECONDS: f64 = 4.0;
/// Largest relative mismatch accepted between the summed shadow components
/// and the enhanced mixture.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-10;

/// Input-SNR buckets as `[lo, hi)`; the last one is closed.
pub const SNR_BUCKETS: [(f64, f64); 3] = [(-5.0, 5.0), (5.0, 15.0), (15.0, 25.0)];

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return METRIC_CAP_DB;
    }
    if num == 0.0 {
        return -METRIC_CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-METRIC_CAP_DB, METRIC_CAP_DB)
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `10 log10(sum s^2 / sum n^2)`; zero noise gives the cap.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> Result<f64> {
    check_len(signal, noise)?;
    let ps = energy(signal);
    if ps == 0.0 {
        return Err(Error::UndefinedMetric(
            "signal component has zero power".into(),
        ));
    }
    Ok(ratio_db(ps, energy(noise)))
}

/// Scale-invariant SDR: the estimate is projected onto the reference and
/// the projection is compared against the remainder.
pub fn sdr_db(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_len(estimate, reference)?;
    let rr = energy(reference);
    if rr == 0.0 {
        return Err(Error::UndefinedMetric("reference has zero power".into()));
    }
    let alpha = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| e * r)
        .sum::<f64>()
        / rr;
    let mut proj = 0.0;
    let mut dist = 0.0;
    for (e, r) in estimate.iter().zip(reference) {
        let p = alpha * r;
        proj += p * p;
        dist += (e - p) * (e - p);
    }
    Ok(ratio_db(proj, dist))
}

/// Early-to-late power ratio; zero late power gives the cap.
pub fn elr_db(early: &[f64], late: &[f64]) -> Result<f64> {
    check_len(early, late)?;
    Ok(ratio_db(energy(early), energy(late)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub snr_db: f64,
    pub sdr_db: f64,
    pub elr_db: f64,
}

impl MetricSet {
    fn zip(self, other: MetricSet, op: impl Fn(f64, f64) -> f64) -> MetricSet {
        MetricSet {
            snr_db: op(self.snr_db, other.snr_db),
            sdr_db: op(self.sdr_db, other.sdr_db),
            elr_db: op(self.elr_db, other.elr_db),
        }
    }

    fn map(self, op: impl Fn(f64) -> f64) -> MetricSet {
        MetricSet {
            snr_db: op(self.snr_db),
            sdr_db: op(self.sdr_db),
            elr_db: op(self.elr_db),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetrics {
    pub index: usize,
    pub seed: u64,
    pub nominal_snr_db: f64,
    pub t60_seconds: f64,
    pub input: MetricSet,
    pub output: MetricSet,
    /// `output - input`.
    pub improvement: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub lo_db: f64,
    pub hi_db: f64,
    pub count: usize,
    pub mean_input: Option<MetricSet>,
    pub mean_output: Option<MetricSet>,
    pub mean_improvement: Option<MetricSet>,
    /// Half-width of the 95% confidence interval of the improvement mean.
    pub ci95_improvement: Option<MetricSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub skip_seconds: f64,
    pub examples: Vec<ExampleMetrics>,
    pub buckets: Vec<BucketSummary>,
    pub overall: BucketSummary,
}

/// One enhanced example with the trajectory that produced it.
#[derive(Debug, Clone, Copy)]
pub struct EvalCase<'a> {
    pub example: &'a MixtureExample,
    pub enhanced: &'a ComplexSpectrogram,
    pub trajectory: &'a FilterTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub wpe: WpeConfig,
    pub stft: StftConfig,
    pub skip_seconds: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            wpe: WpeConfig::default(),
            stft: StftConfig::default(),
            skip_seconds: DEFAULT_SKIP_SECONDS,
        }
    }
}

/// Relative mismatch `||sum(parts) - whole|| / ||whole||` (absolute when
/// `whole` is zero).
pub fn decomposition_error(
    parts: &[ComplexSpectrogram],
    whole: &ComplexSpectrogram,
) -> Result<f64> {
    if parts.iter().any(|p| !p.same_dims(whole)) {
        return Err(Error::invalid(
            "component dims differ from the enhanced mixture",
        ));
    }
    let mut diff = 0.0;
    for (i, w) in whole.as_slice().iter().enumerate() {
        let s: num_complex::Complex64 = parts.iter().map(|p| p.as_slice()[i]).sum();
        diff += (s - w).norm_sqr();
    }
    let norm = whole.energy();
    Ok(if norm > 0.0 {
        (diff / norm).sqrt()
    } else {
        diff.sqrt()
    })
}

/// Trailing samples of all channels, concatenated.
fn tail(channels: &[Vec<f64>], skip: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for c in channels {
        if c.len() <= skip {
            return Err(Error::invalid(format!(
                "signal of {} samples is shorter than the {skip}-sample skip",
                c.len()
            )));
        }
        out.extend_from_slice(&c[skip..]);
    }
    Ok(out)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn metric_set(target: &[f64], late: &[f64], noise: &[f64], estimate: &[f64]) -> Result<MetricSet> {
    Ok(MetricSet {
        snr_db: snr_db(target, &add(late, noise))?,
        sdr_db: sdr_db(estimate, target)?,
        elr_db: elr_db(target, late)?,
    })
}

pub fn evaluate_example(
    index: usize,
    case: &EvalCase,
    opts: &EvalOptions,
) -> Result<ExampleMetrics> {
    let ex = case.example;
    if ex.target.len() != ex.channels()
        || ex.late.len() != ex.channels()
        || ex.noise.len() != ex.channels()
    {
        return Err(Error::invalid(format!(
            "example {index} is missing ground-truth components"
        )));
    }
    let stft = Stft::new(opts.stft)?;
    let mixture = stft.analyze(&ex.mixture)?;
    let comps = [
        stft.analyze(&ex.target)?,
        stft.analyze(&ex.late)?,
        stft.analyze(&ex.noise)?,
    ];
    if !case.enhanced.same_dims(&mixture) {
        return Err(Error::invalid(format!(
            "enhanced dims {:?} differ from the mixture {:?}",
            case.enhanced.dims(),
            mixture.dims()
        )));
    }
    let shadow = shadow_filter(&comps, case.trajectory, &opts.wpe)?;
    let err = decomposition_error(&shadow, case.enhanced)?;
    if !(err <= DECOMPOSITION_TOLERANCE) {
        return Err(Error::Numeric {
            frame: 0,
            bin: 0,
            msg: format!("shadow components miss the enhanced mixture by {err:e} (relative)"),
        });
    }

    let skip = (opts.skip_seconds * ex.sample_rate_hz as f64).round() as usize;
    let resynth = |s: &ComplexSpectrogram| -> Result<Vec<f64>> { tail(&stft.synthesize(s)?, skip) };

    let input = metric_set(
        &resynth(&comps[0])?,
        &resynth(&comps[1])?,
        &resynth(&comps[2])?,
        &resynth(&mixture)?,
    )?;
    let output = metric_set(
        &resynth(&shadow[0])?,
        &resynth(&shadow[1])?,
        &resynth(&shadow[2])?,
        &resynth(case.enhanced)?,
    )?;
    Ok(ExampleMetrics {
        index,
        seed: ex.seed,
        nominal_snr_db: ex.snr_db,
        t60_seconds: ex.t60_seconds,
        input,
        output,
        improvement: output.zip(input, |o, i| o - i),
    })
}

/// Bucket index for a nominal input SNR; values outside the covered range
/// fall into the nearest end bucket.
pub fn bucket_of(snr_db: f64) -> usize {
    SNR_BUCKETS
        .iter()
        .position(|&(_, hi)| snr_db < hi)
        .unwrap_or(SNR_BUCKETS.len() - 1)
}

fn mean_and_ci(sets: &[MetricSet]) -> (Option<MetricSet>, Option<MetricSet>) {
    let n = sets.len();
    if n == 0 {
        return (None, None);
    }
    let zero = MetricSet {
        snr_db: 0.0,
        sdr_db: 0.0,
        elr_db: 0.0,
    };
    let mean = sets
        .iter()
        .fold(zero, |a, &b| a.zip(b, |x, y| x + y))
        .map(|v| v / n as f64);
    if n == 1 {
        // One sample has no spread estimate.
        return (Some(mean), None);
    }
    let var = sets
        .iter()
        .fold(zero, |a, &b| {
            a.zip(b.zip(mean, |x, m| (x - m) * (x - m)), |x, y| x + y)
        })
        .map(|v| v / (n - 1) as f64);
    let ci = var.map(|v| 1.96 * (v / n as f64).sqrt());
    (Some(mean), Some(ci))
}

pub fn summarize(examples: &[ExampleMetrics], lo_db: f64, hi_db: f64) -> BucketSummary {
    let input: Vec<_> = examples.iter().map(|e| e.input).collect();
    let output: Vec<_> = examples.iter().map(|e| e.output).collect();
    let improvement: Vec<_> = examples.iter().map(|e| e.improvement).collect();
    let (mean_improvement, ci95_improvement) = mean_and_ci(&improvement);
    BucketSummary {
        lo_db,
        hi_db,
        count: examples.len(),
        mean_input: mean_and_ci(&input).0,
        mean_output: mean_and_ci(&output).0,
        mean_improvement,
        ci95_improvement,
    }
}

pub fn aggregate(examples: Vec<ExampleMetrics>, skip_seconds: f64) -> EvalReport {
    let buckets = SNR_BUCKETS
        .iter()
        .enumerate()
        .map(|(b, &(lo, hi))| {
            let members: Vec<_> = examples
                .iter()
                .filter(|e| bucket_of(e.nominal_snr_db) == b)
                .cloned()
                .collect();
            summarize(&members, lo, hi)
        })
        .collect();
    let overall = summarize(
        &examples,
        SNR_BUCKETS[0].0,
        SNR_BUCKETS[SNR_BUCKETS.len() - 1].1,
    );
    EvalReport {
        skip_seconds,
        examples,
        buckets,
        overall,
    }
}

/// Shadow-filters and scores every case in parallel, then aggregates per
/// input-SNR bucket.
pub fn evaluate_corpus(cases: &[EvalCase], opts: &EvalOptions) -> Result<EvalReport> {
    let examples = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| evaluate_example(i, c, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(examples, opts.skip_seconds))
}

#[derive(Serialize)]
struct CsvRow {
    index: usize,
    seed: u64,
    nominal_snr_db: f64,
    t60_seconds: f64,
    input_snr_db: f64,
    input_sdr_db: f64,
    input_elr_db: f64,
    output_snr_db: f64,
    output_sdr_db: f64,
    output_elr_db: f64,
    delta_snr_db: f64,
    delta_sdr_db: f64,
    delta_elr_db: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// One row per example.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.examples {
            w.serialize(CsvRow {
                index: e.index,
                seed: e.seed,
                nominal_snr_db: e.nominal_snr_db,
                t60_seconds: e.t60_seconds,
                input_snr_db: e.input.snr_db,
                input_sdr_db: e.input.sdr_db,
                input_elr_db: e.input.elr_db,
                output_snr_db: e.output.snr_db,
                output_sdr_db: e.output.sdr_db,
                output_elr_db: e.output.elr_db,
                delta_snr_db: e.improvement.snr_db,
                delta_sdr_db: e.improvement.sdr_db,
                delta_elr_db: e.improvement.elr_db,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text table of bucket improvements.
    pub fn table(&self) -> String {
        let mut s = String::from("bucket          n   dSNR            dSDR            dELR\n");
        let fmt = |m: &Option<MetricSet>, c: &Option<MetricSet>, pick: fn(&MetricSet) -> f64| match (
            m, c,
        ) {
            (Some(m), Some(c)) => format!("{:>6.2} +- {:<5.2}", pick(m), pick(c)),
            (Some(m), None) => format!("{:>6.2} +- {:<5}", pick(m), "n/a"),
            _ => format!("{:>15}", "-"),
        };
        for b in self.buckets.iter().chain(std::iter::once(&self.overall)) {
            let last = SNR_BUCKETS[SNR_BUCKETS.len() - 1];
            let label = if std::ptr::eq(b, &self.overall) {
                "all".to_string()
            } else if (b.lo_db, b.hi_db) == last {
                // The top bucket includes its upper edge.
                format!("[{}, {}]", b.lo_db, b.hi_db)
            } else {
                format!("[{}, {})", b.lo_db, b.hi_db)
            };
            s.push_str(&format!(
                "{label:<12} {:>4}   {} {} {}\n",
                b.count,
                fmt(&b.mean_improvement, &b.ci95_improvement, |m| m.snr_db),
                fmt(&b.mean_improvement, &b.ci95_improvement, |m| m.sdr_db),
                fmt(&b.mean_improvement, &b.ci95_improvement, |m| m.elr_db),
            ));
        }
        s
    }
}
