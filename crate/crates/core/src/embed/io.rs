//! Embedding files: binary `EMB1` (little-endian; u32 rows, u32 dim, then per
//! row a u16-length id and `dim` f32 values) or CSV `id,v0,...`.

use std::io::{Read, Write};
use std::path::Path;

use super::{EmbedError, EmbeddingMatrix};
use crate::tensor::Matrix;

const MAGIC: &[u8; 4] = b"EMB1";

pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), EmbedError> {
    let mut buf = Vec::with_capacity(12 + m.rows() * (m.dim() * 4 + 16));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    for (i, id) in m.ids().iter().enumerate() {
        let len = u16::try_from(id.len()).map_err(|_| EmbedError::Format(format!("id {id:?} too long")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for v in m.values().row(i) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn write_embeddings_csv(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), EmbedError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..m.dim()).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for (i, id) in m.ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.values().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read either format, sniffing the magic bytes.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, EmbedError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    if bytes.starts_with(MAGIC) {
        read_binary(&bytes)
    } else {
        read_csv(&bytes)
    }
}

fn read_binary(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbedError> {
    let mut pos = MAGIC.len();
    let mut take = |n: usize| -> Result<&[u8], EmbedError> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| EmbedError::Format("truncated embedding file".into()))?;
        pos += n;
        Ok(s)
    };
    let rows = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut ids = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows.saturating_mul(dim).min(1 << 24));
    for _ in 0..rows {
        let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let id = std::str::from_utf8(take(len)?)
            .map_err(|e| EmbedError::Format(format!("id is not UTF-8: {e}")))?
            .to_string();
        ids.push(id);
        for chunk in take(dim * 4)?.chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
    }
    if pos != bytes.len() {
        return Err(EmbedError::Format("trailing bytes after embedding rows".into()));
    }
    EmbeddingMatrix::new(ids, Matrix::from_vec(rows, dim, data)?)
}

fn read_csv(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbedError> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    if header.get(0) != Some("id") {
        return Err(EmbedError::Format("CSV header must start with id".into()));
    }
    let dim = header.len() - 1;
    for (i, h) in header.iter().skip(1).enumerate() {
        if h != format!("v{i}") {
            return Err(EmbedError::Format(format!("unexpected CSV column {h:?}")));
        }
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| EmbedError::Format(format!("bad value {field:?}: {e}")))?,
            );
        }
    }
    let rows = ids.len();
    EmbeddingMatrix::new(ids, Matrix::from_vec(rows, dim, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            vec!["t1".into(), "tweet-β".into()],
            Matrix::from_rows(&[vec![0.5, -1.25, 3.0], vec![0.0, 2.0, -0.75]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        write_embeddings(&sample(), &p).unwrap();
        assert_eq!(read_embeddings(&p).unwrap(), sample());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_embeddings_csv(&sample(), &p).unwrap();
        assert_eq!(read_embeddings(&p).unwrap(), sample());
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        write_embeddings(&sample(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_embeddings(&p), Err(EmbedError::Format(_))));
    }
}
