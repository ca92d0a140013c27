//! Single-precision recurrent inference for the mask and transition-power
//! networks, and the binary weight container they are loaded from.
//!
//! Container layout, all integers little-endian:
//!
//! ```text
//! "KWPE"                magic
//! u32                   format version (1)
//! u32                   checksum algorithm (1 = CRC-64/XZ)
//! u32                   tensor count
//! per tensor, sorted by name:
//!   u32 name length, UTF-8 name
//!   u32 rank, rank x u32 dims
//!   prod(dims) x f32    row-major values
//! u64                   checksum of every preceding byte
//! ```
//!
//! MaskNet tensors: `lstm.w_ih [4H, F]`, `lstm.w_hh [4H, H]`, `lstm.b [4H]`,
//! `out.w [F, H]`, `out.b [F]`, `norm.mean [F]`, `norm.std [F]`.
//! VarNet adds `fuse.w [F, 3F]`, `fuse.b [F]` and stores `3F` normalization
//! statistics. An optional `norm.log_eps [1]` selects log-domain features
//! `ln(v + eps)`; without it features are standardized linearly.
//! LSTM gates are stacked in the order input, forget, cell, output.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"KWPE";
pub const FORMAT_VERSION: u32 = 1;
pub const CHECKSUM_CRC64_XZ: u32 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// Default log-domain feature offset.
pub const DEFAULT_LOG_EPS: f32 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::invalid(format!(
                "tensor of shape {dims:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn filled(dims: Vec<usize>, value: f32) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![value; n],
        }
    }
}

/// Named tensors as stored on disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeuralNetWeights {
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    MaskNet,
    VarNet,
}

impl NeuralNetWeights {
    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.tensors.insert(name.to_owned(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::format(Some(name), "missing tensor"))
    }

    pub fn kind(&self) -> NetKind {
        if self.tensors.contains_key("fuse.w") {
            NetKind::VarNet
        } else {
            NetKind::MaskNet
        }
    }

    /// Returns `(kind, bins F, hidden H)` after checking every shape.
    pub fn validate(&self) -> Result<(NetKind, usize, usize)> {
        for (name, t) in &self.tensors {
            if let Some(v) = t.data.iter().find(|v| !v.is_finite()) {
                return Err(Error::format(Some(name), format!("non-finite value {v}")));
            }
        }
        let out_b = self.get("out.b")?;
        let bins = match out_b.dims[..] {
            [f] if f > 0 => f,
            _ => {
                return Err(Error::format(
                    Some("out.b"),
                    format!("expected [F], got {:?}", out_b.dims),
                ))
            }
        };
        let w_hh = self.get("lstm.w_hh")?;
        let hidden = match w_hh.dims[..] {
            [g, h] if g == 4 * h && h > 0 => h,
            _ => {
                return Err(Error::format(
                    Some("lstm.w_hh"),
                    format!("expected [4H, H], got {:?}", w_hh.dims),
                ))
            }
        };
        let kind = self.kind();
        let features = match kind {
            NetKind::MaskNet => bins,
            NetKind::VarNet => 3 * bins,
        };
        let mut expect = vec![
            ("lstm.w_ih", vec![4 * hidden, bins]),
            ("lstm.b", vec![4 * hidden]),
            ("out.w", vec![bins, hidden]),
            ("norm.mean", vec![features]),
            ("norm.std", vec![features]),
        ];
        if kind == NetKind::VarNet {
            expect.push(("fuse.w", vec![bins, 3 * bins]));
            expect.push(("fuse.b", vec![bins]));
        }
        for (name, dims) in expect {
            let t = self.get(name)?;
            if t.dims != dims {
                return Err(Error::format(
                    Some(name),
                    format!("expected shape {dims:?}, got {:?}", t.dims),
                ));
            }
        }
        if let Some(s) = self.get("norm.std")?.data.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::format(
                Some("norm.std"),
                format!("non-positive deviation {s}"),
            ));
        }
        if let Some(t) = self.tensors.get("norm.log_eps") {
            if t.dims != [1] || !(t.data[0] > 0.0) {
                return Err(Error::format(
                    Some("norm.log_eps"),
                    "expected one positive value",
                ));
            }
        }
        Ok((kind, bins, hidden))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&CHECKSUM_CRC64_XZ.to_le_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = CRC64.checksum(&buf);
        buf.extend_from_slice(&sum.to_le_bytes());
        buf
    }

    /// Parses and checksums a container. Shapes are not validated here.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 4 * 3 + 8 {
            return Err(Error::format(None, "file too short for a container header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::format(None, "bad magic bytes"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32(None)?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                None,
                format!("unsupported format version {version}"),
            ));
        }
        let algo = r.u32(None)?;
        if algo != CHECKSUM_CRC64_XZ {
            return Err(Error::format(
                None,
                format!("unknown checksum algorithm {algo}"),
            ));
        }
        let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
        if CRC64.checksum(body) != stored {
            return Err(Error::format(
                None,
                "checksum mismatch (truncated or corrupted file)",
            ));
        }
        let count = r.u32(None)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32(None)? as usize;
            let name = std::str::from_utf8(r.take(name_len, None)?)
                .map_err(|_| Error::format(None, "tensor name is not UTF-8"))?
                .to_owned();
            let rank = r.u32(Some(&name))? as usize;
            let dims = (0..rank)
                .map(|_| r.u32(Some(&name)).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::format(Some(&name), "tensor size overflows"))?;
            let raw = r.take(
                count
                    .checked_mul(4)
                    .ok_or_else(|| Error::format(Some(&name), "tensor size overflows"))?,
                Some(&name),
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if tensors
                .insert(name.clone(), Tensor { dims, data })
                .is_some()
            {
                return Err(Error::format(Some(&name), "duplicate tensor"));
            }
        }
        if r.pos != body.len() {
            return Err(Error::format(None, "trailing bytes after last tensor"));
        }
        Ok(NeuralNetWeights { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    /// Reads, checksums and shape-validates a container.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let w = Self::from_bytes(&bytes)?;
        w.validate()?;
        Ok(w)
    }

    /// Seeded MaskNet weights, uniform in `+-1/sqrt(H)`, unit normalization.
    pub fn random_masknet(bins: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = NeuralNetWeights::default();
        random_lstm(&mut w, &mut rng, bins, hidden);
        random_linear(&mut w, &mut rng, "out", bins, hidden);
        w.insert("norm.mean", Tensor::filled(vec![bins], 0.0));
        w.insert("norm.std", Tensor::filled(vec![bins], 1.0));
        w.insert("norm.log_eps", Tensor::filled(vec![1], DEFAULT_LOG_EPS));
        w
    }

    pub fn random_varnet(bins: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = NeuralNetWeights::default();
        random_linear(&mut w, &mut rng, "fuse", bins, 3 * bins);
        random_lstm(&mut w, &mut rng, bins, hidden);
        random_linear(&mut w, &mut rng, "out", bins, hidden);
        w.insert("norm.mean", Tensor::filled(vec![3 * bins], 0.0));
        w.insert("norm.std", Tensor::filled(vec![3 * bins], 1.0));
        w.insert("norm.log_eps", Tensor::filled(vec![1], DEFAULT_LOG_EPS));
        w
    }

    /// Sets the output layer to a constant pre-activation `bias`, so the
    /// mask is `sigmoid(bias)` everywhere.
    pub fn with_constant_output(mut self, bias: f32) -> Self {
        for t in ["out.w", "out.b"] {
            if let Some(t) = self.tensors.get_mut(t) {
                t.data.fill(0.0);
            }
        }
        if let Some(b) = self.tensors.get_mut("out.b") {
            b.data.fill(bias);
        }
        self
    }
}

fn uniform_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>, bound: f32) -> Tensor {
    let n = dims.iter().product();
    Tensor {
        dims,
        data: (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
    }
}

fn random_lstm(w: &mut NeuralNetWeights, rng: &mut ChaCha8Rng, input: usize, hidden: usize) {
    let k = 1.0 / (hidden as f32).sqrt();
    w.insert("lstm.w_ih", uniform_tensor(rng, vec![4 * hidden, input], k));
    w.insert(
        "lstm.w_hh",
        uniform_tensor(rng, vec![4 * hidden, hidden], k),
    );
    w.insert("lstm.b", uniform_tensor(rng, vec![4 * hidden], k));
}

fn random_linear(
    w: &mut NeuralNetWeights,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    out: usize,
    input: usize,
) {
    let k = 1.0 / (input as f32).sqrt();
    w.insert(
        &format!("{prefix}.w"),
        uniform_tensor(rng, vec![out, input], k),
    );
    w.insert(&format!("{prefix}.b"), uniform_tensor(rng, vec![out], k));
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, tensor: Option<&str>) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::format(tensor, "unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, tensor: Option<&str>) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, tensor)?.try_into().unwrap(),
        ))
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Dense layer `y = W x + b`, `W` row-major `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    fn from_weights(w: &NeuralNetWeights, prefix: &str) -> Result<Self> {
        let weight = w.get(&format!("{prefix}.w"))?;
        let bias = w.get(&format!("{prefix}.b"))?;
        Ok(Linear {
            outputs: weight.dims[0],
            inputs: weight.dims[1],
            weight: weight.data.clone(),
            bias: bias.data.clone(),
        })
    }

    pub fn forward(&self, x: &[f32], y: &mut [f32]) {
        debug_assert_eq!(x.len(), self.inputs);
        for (o, (row, b)) in y
            .iter_mut()
            .zip(self.weight.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = dot(row, x) + b;
        }
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

#[derive(Debug, Clone)]
pub struct Lstm {
    pub inputs: usize,
    pub hidden: usize,
    pub w_ih: Vec<f32>,
    pub w_hh: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Lstm {
    /// Reads `lstm.w_ih`, `lstm.w_hh` and `lstm.b`, checking their shapes
    /// against each other only.
    pub fn from_weights(w: &NeuralNetWeights) -> Result<Self> {
        let w_ih = w.get("lstm.w_ih")?;
        let w_hh = w.get("lstm.w_hh")?;
        let b = w.get("lstm.b")?;
        let h = match w_hh.dims[..] {
            [g, h] if g == 4 * h && h > 0 => h,
            _ => {
                return Err(Error::format(
                    Some("lstm.w_hh"),
                    format!("expected [4H, H], got {:?}", w_hh.dims),
                ))
            }
        };
        if w_ih.dims.len() != 2 || w_ih.dims[0] != 4 * h || w_ih.dims[1] == 0 {
            return Err(Error::format(
                Some("lstm.w_ih"),
                format!("expected [4H, F], got {:?}", w_ih.dims),
            ));
        }
        if b.dims != [4 * h] {
            return Err(Error::format(
                Some("lstm.b"),
                format!("expected [4H], got {:?}", b.dims),
            ));
        }
        Ok(Lstm {
            inputs: w_ih.dims[1],
            hidden: w_hh.dims[1],
            w_ih: w_ih.data.clone(),
            w_hh: w_hh.data.clone(),
            bias: w.get("lstm.b")?.data.clone(),
        })
    }
}

/// Hidden and cell vectors of one LSTM, zero at utterance start.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
    gates: Vec<f32>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        RecurrentState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
            gates: vec![0.0; 4 * hidden],
        }
    }

    pub fn reset(&mut self) {
        self.h.fill(0.0);
        self.c.fill(0.0);
    }
}

/// Advances `state` by one input frame; the new hidden vector is `state.h`.
pub fn lstm_step(x: &[f32], state: &mut RecurrentState, w: &Lstm) -> Result<()> {
    if x.len() != w.inputs || state.h.len() != w.hidden {
        return Err(Error::invalid(format!(
            "LSTM expects input {} / hidden {}, got {} / {}",
            w.inputs,
            w.hidden,
            x.len(),
            state.h.len()
        )));
    }
    let h = w.hidden;
    for (r, z) in state.gates.iter_mut().enumerate() {
        *z = dot(&w.w_ih[r * w.inputs..(r + 1) * w.inputs], x)
            + dot(&w.w_hh[r * h..(r + 1) * h], &state.h)
            + w.bias[r];
    }
    let (i, rest) = state.gates.split_at(h);
    let (f, rest) = rest.split_at(h);
    let (g, o) = rest.split_at(h);
    for j in 0..h {
        let c = sigmoid(f[j]) * state.c[j] + sigmoid(i[j]) * g[j].tanh();
        state.c[j] = c;
        state.h[j] = sigmoid(o[j]) * c.tanh();
    }
    Ok(())
}

/// Per-feature standardization, optionally in the log domain.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    pub log_eps: Option<f32>,
}

impl Standardizer {
    fn from_weights(w: &NeuralNetWeights) -> Result<Self> {
        Ok(Standardizer {
            mean: w.get("norm.mean")?.data.clone(),
            std: w.get("norm.std")?.data.clone(),
            log_eps: w.tensors.get("norm.log_eps").map(|t| t.data[0]),
        })
    }

    /// Standardizes `raw` into `out` starting at feature `offset`.
    pub fn apply(&self, raw: &[f64], offset: usize, out: &mut [f32]) {
        for (k, (o, &v)) in out.iter_mut().zip(raw).enumerate() {
            let j = offset + k;
            let v = match self.log_eps {
                Some(eps) => (v + eps as f64).ln() as f32,
                None => v as f32,
            };
            *o = (v - self.mean[j]) / self.std[j];
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaskNet {
    pub lstm: Lstm,
    pub out: Linear,
    pub norm: Standardizer,
}

#[derive(Debug, Clone)]
pub struct VarNet {
    pub fuse: Linear,
    pub lstm: Lstm,
    pub out: Linear,
    pub norm: Standardizer,
}

impl MaskNet {
    pub fn from_weights(w: &NeuralNetWeights) -> Result<Self> {
        match w.validate()? {
            (NetKind::MaskNet, ..) => Ok(MaskNet {
                lstm: Lstm::from_weights(w)?,
                out: Linear::from_weights(w, "out")?,
                norm: Standardizer::from_weights(w)?,
            }),
            _ => Err(Error::Config(
                "container holds a VarNet, expected a MaskNet".into(),
            )),
        }
    }

    pub fn bins(&self) -> usize {
        self.out.outputs
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }
}

impl VarNet {
    pub fn from_weights(w: &NeuralNetWeights) -> Result<Self> {
        match w.validate()? {
            (NetKind::VarNet, ..) => Ok(VarNet {
                fuse: Linear::from_weights(w, "fuse")?,
                lstm: Lstm::from_weights(w)?,
                out: Linear::from_weights(w, "out")?,
                norm: Standardizer::from_weights(w)?,
            }),
            _ => Err(Error::Config(
                "container holds a MaskNet, expected a VarNet".into(),
            )),
        }
    }

    pub fn bins(&self) -> usize {
        self.out.outputs
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }
}

/// `sigmoid(out.w h + out.b)` with `h` the next LSTM state on `input`.
pub fn masknet_forward(
    input: &[f32],
    state: &mut RecurrentState,
    net: &MaskNet,
    mask: &mut [f32],
) -> Result<()> {
    lstm_step(input, state, &net.lstm)?;
    head(&net.out, &state.h, mask)
}

/// Fuses the `3F` standardized features to `F`, then as [`masknet_forward`].
pub fn varnet_forward(
    input: &[f32],
    state: &mut RecurrentState,
    net: &VarNet,
    mask: &mut [f32],
) -> Result<()> {
    if input.len() != net.fuse.inputs {
        return Err(Error::invalid(format!(
            "VarNet expects {} fused features, got {}",
            net.fuse.inputs,
            input.len()
        )));
    }
    let mut fused = vec![0.0f32; net.fuse.outputs];
    net.fuse.forward(input, &mut fused);
    lstm_step(&fused, state, &net.lstm)?;
    head(&net.out, &state.h, mask)
}

fn head(out: &Linear, h: &[f32], mask: &mut [f32]) -> Result<()> {
    if mask.len() != out.outputs {
        return Err(Error::invalid(format!(
            "mask buffer has {} bins, network emits {}",
            mask.len(),
            out.outputs
        )));
    }
    out.forward(h, mask);
    mask.iter_mut().for_each(|m| *m = sigmoid(*m));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_lstm(wi: f32, wh: f32, b: [f32; 4]) -> Lstm {
        // H = 1, one input; gate rows i, f, g, o.
        Lstm {
            inputs: 1,
            hidden: 1,
            w_ih: vec![wi; 4],
            w_hh: vec![wh; 4],
            bias: b.to_vec(),
        }
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let lstm = tiny_lstm(0.0, 0.0, [0.0; 4]);
        let mut s = RecurrentState::zeros(1);
        lstm_step(&[3.0], &mut s, &lstm).unwrap();
        assert_eq!(s.h, [0.0]);
        assert_eq!(s.c, [0.0]);
    }

    #[test]
    fn single_unit_matches_hand_evaluation() {
        let lstm = tiny_lstm(0.5, -0.25, [0.1, 0.2, -0.3, 0.4]);
        let mut s = RecurrentState::zeros(1);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = (0.0f64, 0.0f64);
        for &x in &[1.0f64, -2.0, 0.5] {
            lstm_step(&[x as f32], &mut s, &lstm).unwrap();
            let pre = |b: f64| 0.5 * x - 0.25 * h + b;
            let (i, f, g, o) = (
                sig(pre(0.1)),
                sig(pre(0.2)),
                pre(-0.3).tanh(),
                sig(pre(0.4)),
            );
            c = f * c + i * g;
            h = o * c.tanh();
            assert!((s.h[0] as f64 - h).abs() < 1e-6);
            assert!((s.c[0] as f64 - c).abs() < 1e-6);
        }
    }

    #[test]
    fn lstm_rejects_wrong_input() {
        let lstm = tiny_lstm(0.0, 0.0, [0.0; 4]);
        let mut s = RecurrentState::zeros(1);
        assert!(lstm_step(&[1.0, 2.0], &mut s, &lstm).is_err());
    }

    #[test]
    fn masknet_output_bias_controls_mask() {
        let w = NeuralNetWeights::random_masknet(5, 4, 1).with_constant_output(0.0);
        let net = MaskNet::from_weights(&w).unwrap();
        let mut s = RecurrentState::zeros(4);
        let mut m = [0.0f32; 5];
        masknet_forward(&[0.3; 5], &mut s, &net, &mut m).unwrap();
        assert!(m.iter().all(|&v| v == 0.5));

        let w = NeuralNetWeights::random_masknet(5, 4, 1).with_constant_output(20.0);
        let net = MaskNet::from_weights(&w).unwrap();
        masknet_forward(&[0.3; 5], &mut s, &net, &mut m).unwrap();
        assert!(m.iter().all(|&v| (1.0 - v as f64) < 1e-8));
    }

    #[test]
    fn varnet_output_bias_controls_mask() {
        let w = NeuralNetWeights::random_varnet(5, 4, 2).with_constant_output(0.0);
        let net = VarNet::from_weights(&w).unwrap();
        let mut s = RecurrentState::zeros(4);
        let mut m = [0.0f32; 5];
        varnet_forward(&[0.1; 15], &mut s, &net, &mut m).unwrap();
        assert!(m.iter().all(|&v| v == 0.5));
        let w = NeuralNetWeights::random_varnet(5, 4, 2).with_constant_output(20.0);
        let net = VarNet::from_weights(&w).unwrap();
        varnet_forward(&[0.1; 15], &mut s, &net, &mut m).unwrap();
        assert!(m.iter().all(|&v| (1.0 - v as f64) < 1e-8));
        assert!(varnet_forward(&[0.1; 5], &mut s, &net, &mut m).is_err());
    }

    #[test]
    fn masks_stay_in_unit_interval() {
        let w = NeuralNetWeights::random_masknet(16, 8, 3);
        let net = MaskNet::from_weights(&w).unwrap();
        let mut s = RecurrentState::zeros(8);
        let mut m = [0.0f32; 16];
        for t in 0..50 {
            let x: Vec<f32> = (0..16).map(|k| ((t * 7 + k) as f32).sin() * 4.0).collect();
            masknet_forward(&x, &mut s, &net, &mut m).unwrap();
            assert!(m.iter().all(|&v| v > 0.0 && v < 1.0));
            assert!(s.h.iter().all(|h| h.abs() <= 1.0));
        }
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let w = NeuralNetWeights::random_varnet(7, 3, 9);
        let back = NeuralNetWeights::from_bytes(&w.to_bytes()).unwrap();
        assert_eq!(back, w);
        for (name, t) in &w.tensors {
            let b = &back.tensors[name];
            assert!(t
                .data
                .iter()
                .zip(&b.data)
                .all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn container_layout_is_fixed() {
        let mut w = NeuralNetWeights::default();
        w.insert("a", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        let bytes = w.to_bytes();
        let mut expected = b"KWPE".to_vec();
        for v in [1u32, 1, 1, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.push(b'a');
        for v in [1u32, 2] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(&bytes[..bytes.len() - 8], &expected[..]);
        let sum = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        assert_eq!(sum, CRC64.checksum(&expected));
    }

    #[test]
    fn truncated_and_corrupt_containers_fail() {
        let bytes = NeuralNetWeights::random_masknet(4, 2, 1).to_bytes();
        for cut in [3, 12, 40, bytes.len() - 1] {
            assert!(matches!(
                NeuralNetWeights::from_bytes(&bytes[..cut]),
                Err(Error::Format { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[30] ^= 0xff;
        assert!(NeuralNetWeights::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(NeuralNetWeights::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        let err = NeuralNetWeights::from_bytes(&bad).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn shape_errors_name_the_tensor() {
        let mut w = NeuralNetWeights::random_masknet(4, 2, 1);
        w.insert("out.w", Tensor::filled(vec![4, 3], 0.0));
        let err = w.validate().unwrap_err();
        assert!(
            matches!(&err, Error::Format { tensor: Some(t), .. } if t == "out.w"),
            "{err}"
        );

        let mut w = NeuralNetWeights::random_masknet(4, 2, 1);
        w.tensors.remove("lstm.b");
        let err = w.validate().unwrap_err();
        assert!(err.to_string().contains("lstm.b"));
    }

    #[test]
    fn kind_mismatch_is_a_config_error() {
        let w = NeuralNetWeights::random_masknet(4, 2, 1);
        assert!(matches!(VarNet::from_weights(&w), Err(Error::Config(_))));
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.kwpe");
        let w = NeuralNetWeights::random_masknet(6, 3, 4);
        w.save(&path).unwrap();
        assert_eq!(NeuralNetWeights::load(&path).unwrap(), w);
        std::fs::write(&path, &w.to_bytes()[..50]).unwrap();
        assert!(NeuralNetWeights::load(&path).is_err());
    }
}
