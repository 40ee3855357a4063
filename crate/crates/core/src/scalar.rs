//! Storage scalar for embedding vectors.
//!
//! Vectors may be held as `f32` (the usual choice for embedding stores) or
//! `f64`. Similarity scores are always accumulated in `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable as an embedding component.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Width in bytes of the little-endian IEEE-754 encoding.
    const WIDTH: usize;

    fn write_le(self, out: &mut Vec<u8>);

    /// Decodes from exactly `Self::WIDTH` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("float to f64 is infallible")
    }

    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("f64 to float is infallible")
    }

    /// Bit pattern, used for exact equality checks.
    fn bits(self) -> u64;
}

impl Scalar for f32 {
    const WIDTH: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }

    fn bits(self) -> u64 {
        u64::from(self.to_bits())
    }
}

impl Scalar for f64 {
    const WIDTH: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }

    fn bits(self) -> u64 {
        self.to_bits()
    }
}
