//! Binary index file.
//!
//! ```text
//! "PCIX1"                      5 bytes magic
//! scalar width                 u8 (4 = f32, 8 = f64)
//! dimension                    u32 LE
//! count                        u64 LE
//! vectors                      count * dimension scalars, LE IEEE-754
//! chunk ids                    count * (u32 LE byte length, UTF-8 bytes)
//! crc32                        u32 LE over every preceding byte
//! ```

use super::{ChunkId, IndexError, VectorIndex};
use crate::embed::EmbeddingVector;
use crate::scalar::Scalar;

pub const INDEX_MAGIC: &[u8; 5] = b"PCIX1";

const HEADER_LEN: usize = 5 + 1 + 4 + 8;

pub fn save_index<S: Scalar>(index: &VectorIndex<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + index.data.len() * S::WIDTH + 4);
    out.extend_from_slice(INDEX_MAGIC);
    out.push(S::WIDTH as u8);
    out.extend_from_slice(&(index.dimension as u32).to_le_bytes());
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    for &v in &index.data {
        v.write_le(&mut out);
    }
    for id in &index.ids {
        let bytes = id.as_str().as_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(bytes);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn corrupt(msg: impl Into<String>) -> IndexError {
    IndexError::CorruptIndex(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| corrupt("truncated"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_index<S: Scalar>(bytes: &[u8]) -> Result<VectorIndex<S>, IndexError> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(corrupt("truncated"));
    }
    if &bytes[..5] != INDEX_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader { bytes: body, pos: 5 };
    let width = r.take(1)?[0] as usize;
    if width != S::WIDTH {
        return Err(corrupt(format!(
            "file stores {width}-byte scalars, expected {}",
            S::WIDTH
        )));
    }
    let dimension = r.u32()? as usize;
    let count = usize::try_from(r.u64()?).map_err(|_| corrupt("count overflow"))?;
    let payload_len = count
        .checked_mul(dimension)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| corrupt("count overflow"))?;
    let payload = r.take(payload_len)?;

    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        let id = std::str::from_utf8(raw).map_err(|_| corrupt("chunk id is not UTF-8"))?;
        ids.push(ChunkId::new(id));
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }

    let mut index = VectorIndex::new(dimension).map_err(|_| corrupt("zero dimension"))?;
    let items = ids.into_iter().enumerate().map(|(i, id)| {
        let row = &payload[i * dimension * width..(i + 1) * dimension * width];
        let values = row.chunks_exact(width).map(S::read_le).collect();
        (id, values)
    });
    let mut vectors = Vec::with_capacity(count);
    for (id, values) in items {
        let v = EmbeddingVector::new(values, "").map_err(|_| corrupt("non-finite vector value"))?;
        vectors.push((id, v));
    }
    index.add_vectors(vectors).map_err(|e| corrupt(e.to_string()))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::mock_embed;

    fn sample<S: Scalar>(n: usize) -> VectorIndex<S> {
        let mut index = VectorIndex::new(16).unwrap();
        index
            .add_vectors((0..n).map(|i| {
                (
                    ChunkId::new(format!("doc#{i:04}")),
                    mock_embed(&format!("chunk {i}"), 16),
                )
            }))
            .unwrap();
        index
    }

    #[test]
    fn empty_round_trip() {
        let index = VectorIndex::<f32>::new(8).unwrap();
        let loaded = load_index::<f32>(&save_index(&index)).unwrap();
        assert!(loaded.is_empty());
        assert_eq!(loaded.dimension(), 8);
    }

    #[test]
    fn round_trip_is_bit_exact_for_both_widths() {
        let a = sample::<f32>(50);
        assert!(load_index::<f32>(&save_index(&a)).unwrap().bit_eq(&a));
        let b = sample::<f64>(50);
        assert!(load_index::<f64>(&save_index(&b)).unwrap().bit_eq(&b));
        assert_eq!(save_index(&load_index::<f64>(&save_index(&b)).unwrap()), save_index(&b));
    }

    #[test]
    fn header_layout() {
        let bytes = save_index(&sample::<f32>(2));
        assert_eq!(&bytes[..5], b"PCIX1");
        assert_eq!(bytes[5], 4);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 16);
        assert_eq!(u64::from_le_bytes(bytes[10..18].try_into().unwrap()), 2);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = save_index(&sample::<f32>(10));
        for cut in [0, 3, 17, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                load_index::<f32>(&bytes[..cut]),
                Err(IndexError::CorruptIndex(_))
            ));
        }
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 0x01;
        assert!(matches!(load_index::<f32>(&flipped), Err(IndexError::CorruptIndex(_))));
        let mut payload = bytes.clone();
        payload[40] ^= 0x80;
        assert!(matches!(load_index::<f32>(&payload), Err(IndexError::CorruptIndex(_))));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(load_index::<f32>(&magic), Err(IndexError::CorruptIndex(_))));
        assert!(matches!(load_index::<f64>(&bytes), Err(IndexError::CorruptIndex(_))));
    }
}
