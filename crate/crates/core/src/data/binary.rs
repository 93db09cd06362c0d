//! Windowed dataset file.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic    b"DCFW1"
//! dt       f64
//! history  u32   steps per window
//! channels u32
//! n_pairs  u32   then per pair: class u8, id length u32, id bytes (UTF-8)
//! n_rows   u64
//! rows     n_rows x (history*channels + 4) f64:
//!          features..., target, t_end, pair index, segment
//! ```
//!
//! The normalization spec lives in a text sidecar next to the file.

use std::collections::BTreeMap;
use std::path::Path;

use super::{PairClass, Window, CHANNELS};
use crate::error::{Error, Result};

pub const WINDOW_MAGIC: &[u8; 5] = b"DCFW1";

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFile {
    pub dt: f64,
    pub steps: usize,
    pub windows: Vec<Window>,
}

pub fn write_windows(path: &Path, file: &WindowFile) -> Result<()> {
    let mut pair_index: BTreeMap<&str, (u32, PairClass)> = BTreeMap::new();
    for w in &file.windows {
        if w.features.len() != file.steps * CHANNELS {
            return Err(Error::shape(file.steps * CHANNELS, w.features.len()));
        }
        let next = pair_index.len() as u32;
        pair_index.entry(&w.pair_id).or_insert((next, w.class));
    }
    let mut ordered: Vec<(&str, u32, PairClass)> =
        pair_index.iter().map(|(id, (i, c))| (*id, *i, *c)).collect();
    ordered.sort_by_key(|(_, i, _)| *i);

    let row_len = file.steps * CHANNELS + 4;
    let mut buf = Vec::with_capacity(64 + file.windows.len() * row_len * 8);
    buf.extend_from_slice(WINDOW_MAGIC);
    buf.extend_from_slice(&file.dt.to_le_bytes());
    buf.extend_from_slice(&(file.steps as u32).to_le_bytes());
    buf.extend_from_slice(&(CHANNELS as u32).to_le_bytes());
    buf.extend_from_slice(&(ordered.len() as u32).to_le_bytes());
    for (id, _, class) in &ordered {
        buf.push(class.code());
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
    }
    buf.extend_from_slice(&(file.windows.len() as u64).to_le_bytes());
    for w in &file.windows {
        let idx = pair_index[w.pair_id.as_str()].0;
        for x in w
            .features
            .iter()
            .copied()
            .chain([w.target, w.t_end, f64::from(idx), f64::from(w.segment)])
        {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("window file truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_windows(path: &Path) -> Result<WindowFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(5)? != WINDOW_MAGIC {
        return Err(Error::Format(format!("{}: not a DCFW1 window file", path.display())));
    }
    let dt = c.f64()?;
    let steps = c.u32()? as usize;
    let channels = c.u32()? as usize;
    if channels != CHANNELS {
        return Err(Error::Format(format!("expected {CHANNELS} channels, file has {channels}")));
    }
    let n_pairs = c.u32()? as usize;
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let code = c.take(1)?[0];
        let class = PairClass::from_code(code).ok_or_else(|| Error::Format(format!("bad class code {code}")))?;
        let len = c.u32()? as usize;
        let id = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Format("pair id is not UTF-8".into()))?
            .to_string();
        pairs.push((id, class));
    }
    let n_rows = c.u64()? as usize;
    let width = steps * CHANNELS;
    let mut windows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let features = (0..width).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        let target = c.f64()?;
        let t_end = c.f64()?;
        let idx = c.f64()? as usize;
        let segment = c.f64()? as u32;
        let (pair_id, class) = pairs
            .get(idx)
            .cloned()
            .ok_or_else(|| Error::Format(format!("pair index {idx} out of range")))?;
        windows.push(Window {
            features,
            target,
            pair_id,
            class,
            segment,
            t_end,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after window rows".into()));
    }
    Ok(WindowFile { dt, steps, windows })
}
