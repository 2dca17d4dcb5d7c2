//! Descriptor files.
//!
//! Text: first line `VPRD n d`, then `n` lines of `d` space-separated decimal
//! numbers. Binary: magic `VPRB`, little-endian u32 `n`, u32 `d`, then `n·d`
//! little-endian f32 values row-major. Binary files store 32-bit floats, so
//! saving narrows each value to the nearest f32.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Result, VprError};
use crate::model::DescriptorSet;

pub const TEXT_MAGIC: &str = "VPRD";
pub const BINARY_MAGIC: &[u8; 4] = b"VPRB";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorFormat {
    Text,
    Binary,
}

impl DescriptorFormat {
    /// `.vprb` and `.bin` are binary; anything else is text.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("vprb") | Some("bin") => DescriptorFormat::Binary,
            _ => DescriptorFormat::Text,
        }
    }
}

pub fn encode_text(set: &DescriptorSet) -> String {
    let mut out = format!("{TEXT_MAGIC} {} {}\n", set.count(), set.dim());
    for row in set.rows() {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            // shortest decimal that reads back to the same f64
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn decode_text(text: &str) -> Result<DescriptorSet> {
    let fmt_err = |line: usize, message: String| VprError::Format {
        what: "descriptor text",
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| fmt_err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&TEXT_MAGIC) {
        return Err(fmt_err(
            1,
            format!("magic mismatch: expected `{TEXT_MAGIC}`"),
        ));
    }
    let (n, d) = match fields[1..] {
        [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
            (Ok(n), Ok(d)) => (n, d),
            _ => return Err(fmt_err(1, format!("bad dimensions `{header}`"))),
        },
        _ => {
            return Err(fmt_err(
                1,
                format!("expected `{TEXT_MAGIC} n d`, got `{header}`"),
            ))
        }
    };
    let mut data = Vec::with_capacity(n * d);
    let mut row = 0;
    for (idx, line) in lines {
        if row == n {
            return Err(fmt_err(idx + 1, format!("more than the declared {n} rows")));
        }
        let before = data.len();
        for (col, tok) in line.split_whitespace().enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|_| fmt_err(idx + 1, format!("column {col}: cannot parse `{tok}`")))?;
            if !v.is_finite() {
                return Err(VprError::NonFinite { row, col });
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != d {
            return Err(VprError::dims(
                "descriptor text row",
                d,
                format!("{got} (row {row})"),
            ));
        }
        row += 1;
    }
    if row != n {
        return Err(VprError::dims("descriptor text rows", n, row));
    }
    DescriptorSet::new(n, d, data)
}

pub fn encode_binary(set: &DescriptorSet) -> Result<Vec<u8>> {
    let n = u32::try_from(set.count())
        .map_err(|_| VprError::invalid("too many descriptors for u32"))?;
    let d =
        u32::try_from(set.dim()).map_err(|_| VprError::invalid("descriptor dim exceeds u32"))?;
    let mut out = Vec::with_capacity(12 + 4 * set.data().len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for &v in set.data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(VprError::invalid(format!("value {v} overflows f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8]) -> Result<DescriptorSet> {
    let perr = |offset: usize, message: String| VprError::Parse {
        what: "descriptor binary",
        offset,
        message,
    };
    if bytes.get(..4) != Some(BINARY_MAGIC) {
        return Err(perr(0, "magic mismatch: expected VPRB".into()));
    }
    if bytes.len() < 12 {
        return Err(perr(bytes.len(), "truncated header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(12))
        .ok_or_else(|| perr(4, "dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(perr(
            bytes.len().min(expected),
            format!(
                "dimension mismatch: header declares {n}x{d} ({expected} bytes), file has {}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(n * d);
    for (k, chunk) in bytes[12..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(VprError::NonFinite {
                row: k / d,
                col: k % d,
            });
        }
        data.push(f64::from(v));
    }
    DescriptorSet::new(n, d, data)
}

pub fn save_descriptors(set: &DescriptorSet, path: &Path, format: DescriptorFormat) -> Result<()> {
    let bytes = match format {
        DescriptorFormat::Text => encode_text(set).into_bytes(),
        DescriptorFormat::Binary => encode_binary(set)?,
    };
    fs::write(path, bytes).map_err(|e| VprError::io(path, e))
}

/// Loads either format, chosen by the file's magic bytes.
pub fn load_descriptors(path: &Path) -> Result<DescriptorSet> {
    let bytes = fs::read(path).map_err(|e| VprError::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(&bytes)
    } else if bytes.starts_with(TEXT_MAGIC.as_bytes()) {
        let text = std::str::from_utf8(&bytes).map_err(|e| VprError::Parse {
            what: "descriptor text",
            offset: e.valid_up_to(),
            message: "invalid UTF-8".into(),
        })?;
        decode_text(text)
    } else {
        Err(VprError::Parse {
            what: "descriptor file",
            offset: 0,
            message: "magic mismatch: expected VPRD or VPRB".into(),
        })
    }
}

/// Condition labels as CSV `index,label`.
pub fn save_labels(labels: &[u32], path: &Path) -> Result<()> {
    let mut out = String::from("index,label\n");
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    fs::write(path, out).map_err(|e| VprError::io(path, e))
}

pub fn load_labels(path: &Path) -> Result<Vec<u32>> {
    #[derive(serde::Deserialize)]
    struct Row {
        index: usize,
        label: u32,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (k, rec) in reader.deserialize::<Row>().enumerate() {
        let row = rec.map_err(|e| csv_err(path, e))?;
        if row.index != k {
            return Err(VprError::Format {
                what: "labels csv",
                line: k + 2,
                message: format!("expected index {k}, found {}", row.index),
            });
        }
        out.push(row.label);
    }
    Ok(out)
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> VprError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    VprError::Format {
        what: "csv",
        line,
        message: format!("{}: {e}", path.display()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_direct_parse() {
        let set = decode_text("VPRD 2 3\n1 2 3\n-0.5 1e3 7\n").unwrap();
        assert_eq!((set.count(), set.dim()), (2, 3));
        assert_eq!(set.row(1), &[-0.5, 1000.0, 7.0]);
    }

    #[test]
    fn text_rejects_nan_with_position() {
        match decode_text("VPRD 2 2\n1 2\n3 nan\n") {
            Err(VprError::NonFinite { row: 1, col: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn text_shape_errors() {
        assert!(decode_text("VPRX 1 1\n1\n").is_err());
        assert!(decode_text("VPRD 2 2\n1 2\n").is_err());
        assert!(decode_text("VPRD 1 2\n1 2 3\n").is_err());
        assert!(decode_text("VPRD 1 1\n1\n2\n").is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let set = DescriptorSet::new(2, 2, vec![0.1, -1.0 / 3.0, 1e-300, 12345.678]).unwrap();
        assert_eq!(decode_text(&encode_text(&set)).unwrap(), set);
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let set =
            DescriptorSet::new(2, 3, vec![0.5, -1.25, 3.0, 1e-3f32 as f64, 7.0, 0.0]).unwrap();
        let bytes = encode_binary(&set).unwrap();
        let back = decode_binary(&bytes).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.source_hash(), set.source_hash());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_binary(&bad).is_err());
        assert!(decode_binary(&bytes[..bytes.len() - 1]).is_err());
        let mut nan = bytes;
        nan[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_binary(&nan),
            Err(VprError::NonFinite { row: 0, col: 0 })
        ));
    }

    #[test]
    fn files_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let set = DescriptorSet::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        for (name, fmt) in [
            ("a.vprd", DescriptorFormat::Text),
            ("a.vprb", DescriptorFormat::Binary),
        ] {
            let p = dir.path().join(name);
            assert_eq!(DescriptorFormat::for_path(&p), fmt);
            save_descriptors(&set, &p, fmt).unwrap();
            assert_eq!(load_descriptors(&p).unwrap(), set);
        }
        let lp = dir.path().join("l.csv");
        save_labels(&[2, 0, 1], &lp).unwrap();
        assert_eq!(load_labels(&lp).unwrap(), vec![2, 0, 1]);
        let junk = dir.path().join("junk");
        fs::write(&junk, b"hello").unwrap();
        assert!(load_descriptors(&junk).is_err());
    }
}
