//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `CKPT`, `u32` tensor count, then per tensor
//! `u16` name length, UTF-8 name, `u32` rows, `u32` cols, `rows * cols` `f64`
//! values in row-major order.

use std::io::{Read, Write};

use super::{Matrix, TensorError};

const MAGIC: &[u8; 4] = b"CKPT";

pub fn write_checkpoint<W: Write>(mut out: W, tensors: &[(String, Matrix)]) -> Result<(), TensorError> {
    out.write_all(MAGIC)?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, m) in tensors {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| TensorError::Checkpoint(format!("tensor name too long: {name}")))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(bytes)?;
        out.write_all(&(m.rows() as u32).to_le_bytes())?;
        out.write_all(&(m.cols() as u32).to_le_bytes())?;
        for v in m.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Matrix)>, TensorError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let count = read_u32(&mut input)?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut len = [0u8; 2];
        input.read_exact(&mut len)?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| TensorError::Checkpoint(format!("tensor name not UTF-8: {e}")))?;
        let rows = read_u32(&mut input)? as usize;
        let cols = read_u32(&mut input)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(TensorError::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(tensors)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, TensorError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            shapes in prop::collection::vec((0usize..5, 0usize..5), 0..4),
            seed in any::<u64>(),
        ) {
            let tensors: Vec<(String, Matrix)> = shapes
                .iter()
                .enumerate()
                .map(|(i, &(r, c))| {
                    let m = Matrix::from_fn(r, c, |a, b| {
                        f64::from_bits(seed.rotate_left((a * 7 + b + i) as u32) >> 2)
                    });
                    (format!("layer.{i}.w"), m)
                })
                .collect();
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &tensors).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), tensors.len());
            for ((n1, m1), (n2, m2)) in tensors.iter().zip(&back) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(m1.shape(), m2.shape());
                let bits1: Vec<u64> = m1.as_slice().iter().map(|v| v.to_bits()).collect();
                let bits2: Vec<u64> = m2.as_slice().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits1, bits2);
            }
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let err = read_checkpoint(&b"NOPE\0\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, TensorError::Checkpoint(_)));
    }
}
