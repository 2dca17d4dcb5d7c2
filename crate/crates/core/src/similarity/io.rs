//! Similarity matrix file: magic `VPRS`, little-endian u32 `n`, u32 `m`, then
//! `n·m` little-endian f32 values row-major, then the measure tag and the
//! postprocess tag, each as a little-endian u32 byte length followed by UTF-8.

use std::fs;
use std::path::Path;

use crate::error::{Result, VprError};
use crate::model::SimilarityMatrix;

const MAGIC: &[u8; 4] = b"VPRS";

pub fn encode_similarity(s: &SimilarityMatrix) -> Result<Vec<u8>> {
    let n = u32::try_from(s.rows()).map_err(|_| VprError::invalid("too many rows for u32"))?;
    let m = u32::try_from(s.cols()).map_err(|_| VprError::invalid("too many columns for u32"))?;
    let mut out = Vec::with_capacity(
        12 + 4 * s.values().len() + 8 + s.measure_tag.len() + s.postprocess_tag.len(),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&m.to_le_bytes());
    for &v in s.values() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(VprError::invalid(format!("similarity {v} overflows f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    for tag in [&s.measure_tag, &s.postprocess_tag] {
        out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
        out.extend_from_slice(tag.as_bytes());
    }
    Ok(out)
}

pub fn decode_similarity(bytes: &[u8]) -> Result<SimilarityMatrix> {
    let perr = |offset: usize, message: &str| VprError::Parse {
        what: "similarity file",
        offset,
        message: message.to_string(),
    };
    if bytes.get(..4) != Some(MAGIC) {
        return Err(perr(0, "magic mismatch: expected VPRS"));
    }
    let read_u32 = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| perr(bytes.len(), "truncated"))
    };
    let n = read_u32(4)? as usize;
    let m = read_u32(8)? as usize;
    let payload_end = n
        .checked_mul(m)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(12))
        .ok_or_else(|| perr(4, "dimensions overflow"))?;
    if bytes.len() < payload_end {
        return Err(perr(bytes.len(), "truncated matrix payload"));
    }
    let mut values = Vec::with_capacity(n * m);
    for (k, chunk) in bytes[12..payload_end].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(VprError::NonFinite {
                row: k / m,
                col: k % m,
            });
        }
        values.push(f64::from(v));
    }
    let mut pos = payload_end;
    let mut tags = Vec::with_capacity(2);
    for _ in 0..2 {
        let len = read_u32(pos)? as usize;
        pos += 4;
        let raw = bytes
            .get(pos..pos + len)
            .ok_or_else(|| perr(bytes.len(), "truncated tag"))?;
        let tag = std::str::from_utf8(raw)
            .map_err(|e| perr(pos + e.valid_up_to(), "tag is not UTF-8"))?;
        tags.push(tag.to_string());
        pos += len;
    }
    if pos != bytes.len() {
        return Err(perr(pos, "trailing bytes after tags"));
    }
    let postprocess = tags.pop().unwrap();
    let measure = tags.pop().unwrap();
    let mut s = SimilarityMatrix::new(n, m, values, measure)?;
    s.postprocess_tag = postprocess;
    Ok(s)
}

pub fn save_similarity(s: &SimilarityMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_similarity(s)?).map_err(|e| VprError::io(path, e))
}

pub fn load_similarity(path: &Path) -> Result<SimilarityMatrix> {
    let bytes = fs::read(path).map_err(|e| VprError::io(path, e))?;
    decode_similarity(&bytes)
}
