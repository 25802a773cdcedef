//! `WSTF` tensor files: magic, format version, rank, u32 dims, f32 payload,
//! all little-endian and row-major.

use std::path::Path;

use crate::attention::Tensor;
use crate::error::{Error, Result};
use crate::raster::{FloatMap, SuperpixelMap};

pub const TENSOR_MAGIC: [u8; 4] = *b"WSTF";
pub const TENSOR_FORMAT_VERSION: u8 = 1;

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + 4 * t.data().len());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.push(TENSOR_FORMAT_VERSION);
    out.push(t.rank() as u8);
    for &d in t.dims() {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidParameter(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::InvalidParameter(format!("{v} overflows f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

fn need(bytes: &[u8], n: usize) -> Result<()> {
    if bytes.len() < n {
        Err(Error::Truncated {
            expected: n,
            found: bytes.len(),
        })
    } else {
        Ok(())
    }
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    need(bytes, 4)?;
    if bytes[..4] != TENSOR_MAGIC {
        return Err(Error::BadMagic {
            found: bytes[..4].try_into().expect("four bytes"),
        });
    }
    need(bytes, 6)?;
    if bytes[4] != TENSOR_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    let rank = bytes[5] as usize;
    if !(1..=4).contains(&rank) {
        return Err(Error::RankOutOfRange(rank));
    }
    let header = 6 + 4 * rank;
    need(bytes, header)?;
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("four bytes")) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::InvalidParameter("tensor dims overflow".into()))?;
    let total = header + count;
    need(bytes, total)?;
    if bytes.len() > total {
        return Err(Error::TrailingData {
            expected: total,
            found: bytes.len(),
        });
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64)
        .collect();
    Tensor::new(dims, data)
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_tensor(t)?).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

/// Rank-2 `(h, w)` tensor view of a float map.
pub fn map_to_tensor(m: &FloatMap) -> Tensor {
    Tensor::new(vec![m.height(), m.width()], m.data().to_vec()).expect("map is finite")
}

/// Accepts `(h, w)` or a singleton-led `(1, h, w)` tensor.
pub fn tensor_to_map(t: &Tensor) -> Result<FloatMap> {
    match *t.dims() {
        [h, w] | [1, h, w] => FloatMap::new(w, h, t.data().to_vec()),
        _ => Err(Error::InvalidParameter(format!(
            "expected a (h, w) tensor, got dims {:?}",
            t.dims()
        ))),
    }
}

/// Superpixel label maps travel as rank-2 tensors of integral labels.
pub fn save_label_map(sp: &SuperpixelMap, path: impl AsRef<Path>) -> Result<()> {
    let data = sp.labels().iter().map(|&l| l as f64).collect();
    save_tensor(&Tensor::new(vec![sp.height(), sp.width()], data)?, path)
}

pub fn load_label_map(path: impl AsRef<Path>) -> Result<SuperpixelMap> {
    let t = load_tensor(path)?;
    let [h, w] = *t.dims() else {
        return Err(Error::InvalidParameter(format!(
            "label map must be rank 2, got dims {:?}",
            t.dims()
        )));
    };
    let mut labels = Vec::with_capacity(t.data().len());
    for &v in t.data() {
        if v < 0.0 || v.fract() != 0.0 || v > (1u32 << 24) as f64 {
            return Err(Error::InvalidRaster(format!("label {v} is not a small non-negative integer")));
        }
        labels.push(v as u32);
    }
    let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
    SuperpixelMap::new(w, h, labels, count)
}
