//! Tensor file formats.
//!
//! The ATKD binary layout is:
//!
//! ```text
//! b"ATKD" | rank: u32 LE | rank x dim: u64 LE | prod(dims) x f64 LE (row-major)
//! ```
//!
//! CSV stores one last-axis slice per row; the leading dims are kept in a
//! `# shape: d0 d1 ...` comment line so the tensor round-trips.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ATKD";
const MAX_RANK: u32 = 16;

pub fn write_atkd<W: Write>(tensor: &Tensor, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
    for &d in tensor.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(tensor.len() * 8);
    for x in tensor.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn encode_atkd(tensor: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * tensor.rank() + 8 * tensor.len());
    write_atkd(tensor, &mut out).expect("writing to a Vec cannot fail");
    out
}

/// Parses one ATKD tensor from a byte buffer. Trailing bytes are an error.
pub fn decode_atkd(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = bytes;
    let t = read_one(&mut cur)?;
    if !cur.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", cur.len())));
    }
    Ok(t)
}

/// Reads exactly one tensor from a stream (leaves the reader after it).
pub fn read_atkd<R: Read>(mut r: R) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_atkd(&bytes)
}

fn take<'a>(cur: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if cur.len() < n {
        return Err(Error::Format(format!(
            "truncated file: need {n} bytes for {what}, have {}",
            cur.len()
        )));
    }
    let (head, tail) = cur.split_at(n);
    *cur = tail;
    Ok(head)
}

fn read_one(cur: &mut &[u8]) -> Result<Tensor> {
    let magic = take(cur, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let rank = u32::from_le_bytes(take(cur, 4, "rank")?.try_into().unwrap());
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format(format!("unsupported rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut len: usize = 1;
    for _ in 0..rank {
        let d = u64::from_le_bytes(take(cur, 8, "dims")?.try_into().unwrap());
        let d = usize::try_from(d).map_err(|_| Error::Format(format!("dim {d} too large")))?;
        len = len
            .checked_mul(d)
            .ok_or_else(|| Error::Format("dims overflow".into()))?;
        shape.push(d);
    }
    let nbytes = len
        .checked_mul(8)
        .ok_or_else(|| Error::Format("payload overflow".into()))?;
    let payload = take(cur, nbytes, "payload")?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_atkd(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_atkd(tensor))?;
    Ok(())
}

pub fn load_atkd(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_atkd(&fs::read(path)?)
}

/// Formats a float so it parses back to the identical value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn to_csv(tensor: &Tensor) -> String {
    let shape: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
    let mut out = format!("# shape: {}\n", shape.join(" "));
    for row in tensor.rows() {
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses CSV written by [`to_csv`]; without a shape comment the result is
/// a `[rows, cols]` matrix.
pub fn from_csv(text: &str) -> Result<Tensor> {
    let mut shape: Option<Vec<usize>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(dims) = rest.trim().strip_prefix("shape:") {
                let dims = dims
                    .split_whitespace()
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
                shape = Some(dims);
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Format("ragged CSV rows".into()));
    }
    let shape = shape.unwrap_or_else(|| vec![rows.len(), cols]);
    Tensor::new(shape, rows.concat()).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let b = encode_atkd(&t);
        assert_eq!(&b[..4], b"ATKD");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..16], &1u64.to_le_bytes());
        assert_eq!(&b[16..24], &2u64.to_le_bytes());
        assert_eq!(&b[24..32], &1.0f64.to_le_bytes());
        assert_eq!(&b[32..40], &(-2.5f64).to_le_bytes());
        assert_eq!(b.len(), 40);
    }

    #[test]
    fn rejects_truncation_and_magic() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = encode_atkd(&t);
        for cut in 0..b.len() {
            assert!(matches!(decode_atkd(&b[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_atkd(&bad), Err(Error::Format(_))));
        let mut long = b;
        long.push(0);
        assert!(decode_atkd(&long).is_err());
    }

    #[test]
    fn rejects_huge_dims_without_allocating() {
        let mut b = Vec::from(&MAGIC[..]);
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&u64::MAX.to_le_bytes());
        b.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_atkd(&b).is_err());
    }

    #[test]
    fn csv_without_shape_is_matrix() {
        let t = from_csv("1,2\n3,4\n").unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert!(from_csv("1,2\n3\n").is_err());
    }

    proptest! {
        #[test]
        fn atkd_and_csv_round_trip(
            dims in proptest::collection::vec(1usize..4, 1..4),
            seed in proptest::collection::vec(-1e6f64..1e6, 64),
        ) {
            let len: usize = dims.iter().product();
            let data: Vec<f64> = (0..len).map(|i| seed[i % seed.len()] / (i as f64 + 1.0)).collect();
            let t = Tensor::new(dims, data).unwrap();
            prop_assert_eq!(&decode_atkd(&encode_atkd(&t)).unwrap(), &t);
            prop_assert_eq!(&from_csv(&to_csv(&t)).unwrap(), &t);
        }
    }
}
