use std::path::Path;

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

use super::spec::{NetworkSpec, ParamBlock};
use crate::error::{Error, Result};
use crate::seed;

pub const WEIGHTS_MAGIC: &[u8; 5] = b"DCFN1";

/// Flat parameter vector plus the layout that names its blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    spec: NetworkSpec,
    layout: Vec<ParamBlock>,
    data: Vec<f64>,
}

impl Weights {
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let n = layout.iter().map(ParamBlock::len).sum();
        Ok(Weights {
            spec,
            layout,
            data: vec![0.0; n],
        })
    }

    pub fn from_vec(spec: NetworkSpec, data: Vec<f64>) -> Result<Self> {
        let mut w = Self::zeros(spec)?;
        if data.len() != w.data.len() {
            return Err(Error::shape(w.data.len(), data.len()));
        }
        w.data = data;
        Ok(w)
    }

    /// Glorot-uniform kernels (input and recurrent), zero biases, LSTM
    /// forget-gate bias 1.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut w = Self::zeros(spec)?;
        let mut rng = seed::rng(seed);
        for block in &w.layout {
            let slice = &mut w.data[block.range()];
            if block.name.ends_with(".bias") {
                if block.name.starts_with("lstm") {
                    let u = block.cols / 4;
                    slice[u..2 * u].fill(1.0);
                }
                continue;
            }
            let (fan_in, fan_out) = (block.rows as f64, block.cols as f64);
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for x in slice.iter_mut() {
                *x = rng.random_range(-limit..limit);
            }
        }
        Ok(w)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layout(&self) -> &[ParamBlock] {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.layout.iter().find(|b| b.name == name)
    }

    pub(crate) fn block_index(&self, name: &str) -> usize {
        self.layout
            .iter()
            .position(|b| b.name == name)
            .unwrap_or_else(|| panic!("layout has no block {name}"))
    }

    pub fn view(&self, name: &str) -> ArrayView2<'_, f64> {
        let b = &self.layout[self.block_index(name)];
        ArrayView2::from_shape((b.rows, b.cols), &self.data[b.range()]).expect("block shape")
    }

    /// Order-sensitive hash of the parameter bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.data.len() as u64;
        for x in &self.data {
            h = (h ^ x.to_bits()).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(17);
        }
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let desc = self.spec.descriptor();
        let mut buf = Vec::with_capacity(32 + desc.len() + self.data.len() * 8);
        buf.extend_from_slice(WEIGHTS_MAGIC);
        buf.extend_from_slice(&(desc.len() as u32).to_le_bytes());
        buf.extend_from_slice(desc.as_bytes());
        buf.extend_from_slice(&(self.data.len() as u64).to_le_bytes());
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(m.to_string());
        if bytes.len() < 9 || &bytes[..5] != WEIGHTS_MAGIC {
            return Err(bad("not a DCFN1 weight file"));
        }
        let dlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let desc_end = 9 + dlen;
        let desc = bytes
            .get(9..desc_end)
            .ok_or_else(|| bad("truncated descriptor"))?;
        let desc = std::str::from_utf8(desc).map_err(|_| bad("descriptor is not UTF-8"))?;
        let spec = NetworkSpec::from_descriptor(desc)?;
        let count_bytes = bytes
            .get(desc_end..desc_end + 8)
            .ok_or_else(|| bad("truncated parameter count"))?;
        let count = u64::from_le_bytes(count_bytes.try_into().unwrap()) as usize;
        let body = &bytes[desc_end + 8..];
        if body.len() != count * 8 {
            return Err(bad("parameter block length does not match count"));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Weights::from_vec(spec, data).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a weight file and checks it was written for `spec`.
    pub fn load_expecting(path: &Path, spec: &NetworkSpec) -> Result<Self> {
        let w = Self::load(path)?;
        if w.spec() != spec {
            return Err(Error::Format(format!(
                "{} holds a {} network that does not match the configured spec",
                path.display(),
                w.spec().kind()
            )));
        }
        Ok(w)
    }
}

/// Mutable 2-D view of one block of a gradient vector laid out like `w`.
pub(crate) fn grad_view<'a>(w: &Weights, grad: &'a mut [f64], name: &str) -> ArrayViewMut2<'a, f64> {
    let b = &w.layout[w.block_index(name)];
    ArrayViewMut2::from_shape((b.rows, b.cols), &mut grad[b.range()]).expect("block shape")
}
