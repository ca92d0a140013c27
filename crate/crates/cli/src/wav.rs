//! WAV reading and writing. Samples are handled as `[channel][sample]` in
//! f64, full scale at 1.0.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MAX_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    #[default]
    F32,
    Pcm16,
}

#[derive(Debug, Clone)]
pub struct Audio {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate_hz: u32,
}

impl Audio {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}

pub fn read(path: &Path) -> CliResult<Audio> {
    let reader = WavReader::open(path).map_err(|e| CliError::from(e).at(path))?;
    let spec = reader.spec();
    let d = spec.channels as usize;
    if d == 0 || d > MAX_CHANNELS {
        return Err(CliError::data(format!("{d} channels, expected 1 to {MAX_CHANNELS}")).at(path));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>(),
        (fmt, bits) => {
            return Err(
                CliError::data(format!("unsupported sample format {fmt:?} {bits}-bit")).at(path),
            );
        }
    }
    .map_err(|e| CliError::from(e).at(path))?;
    let mut channels = vec![Vec::with_capacity(interleaved.len() / d); d];
    for frame in interleaved.chunks_exact(d) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    Ok(Audio {
        channels,
        sample_rate_hz: spec.sample_rate,
    })
}

/// Writes `channels` interleaved. PCM output is clipped to full scale.
pub fn write<S: AsRef<[f64]>>(
    path: &Path,
    channels: &[S],
    sample_rate_hz: u32,
    format: WavFormat,
) -> CliResult<()> {
    let d = channels.len();
    if d == 0 || d > MAX_CHANNELS {
        return Err(CliError::data(format!("cannot write {d} channels")).at(path));
    }
    let len = channels[0].as_ref().len();
    let (sample_format, bits) = match format {
        WavFormat::F32 => (SampleFormat::Float, 32),
        WavFormat::Pcm16 => (SampleFormat::Int, 16),
    };
    let spec = WavSpec {
        channels: d as u16,
        sample_rate: sample_rate_hz,
        bits_per_sample: bits,
        sample_format,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| CliError::from(e).at(path))?;
    for i in 0..len {
        for c in channels {
            let v = c.as_ref()[i];
            match format {
                WavFormat::F32 => w.write_sample(v as f32),
                WavFormat::Pcm16 => {
                    w.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                }
            }
            .map_err(|e| CliError::from(e).at(path))?;
        }
    }
    w.finalize().map_err(|e| CliError::from(e).at(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_roundtrip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x = vec![vec![0.5, -0.25, 0.125f32 as f64], vec![1.5, 0.0, -2.0]];
        write(&p, &x, 16_000, WavFormat::F32).unwrap();
        let a = read(&p).unwrap();
        assert_eq!(a.channels, x);
        assert_eq!(a.sample_rate_hz, 16_000);
    }

    #[test]
    fn pcm_roundtrip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x = vec![vec![0.3, -0.7, 0.999, -1.0, 1.2]];
        write(&p, &x, 16_000, WavFormat::Pcm16).unwrap();
        let a = read(&p).unwrap();
        for (r, v) in a.channels[0].iter().zip(&x[0]) {
            assert!((r - v.clamp(-1.0, 32767.0 / 32768.0)).abs() <= 0.5 / 32768.0);
        }
    }

    #[test]
    fn three_channels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        assert!(write(
            &p,
            &[vec![0.0], vec![0.0], vec![0.0]],
            16_000,
            WavFormat::F32
        )
        .is_err());
    }
}
