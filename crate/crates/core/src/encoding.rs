//! Canonical wire encoding. Every structure that gets hashed or signed is
//! encoded with these rules so that block hashes are reproducible across
//! implementations:
//!
//! - fields in declared order;
//! - integers fixed-width big-endian;
//! - `f64` as the big-endian bytes of its IEEE 754 bit pattern;
//! - byte strings prefixed by a 4-byte big-endian length;
//! - lists prefixed by a 4-byte big-endian element count;
//! - digests, public keys and signatures as raw fixed-width bytes.
//!
//! The encoding is injective over well-formed values: decoding is exact and
//! any trailing bytes are an error.

use crate::crypto::{Digest, PublicKeyBytes, SignatureBytes, DIGEST_LEN};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("length exceeds u32 range: {0}")]
    LengthOverflow(usize),
    #[error("input truncated")]
    Truncated,
    #[error("trailing bytes after decode")]
    TrailingBytes,
    #[error("invalid value: {0}")]
    Invalid(&'static str),
}

/// Append-only canonical byte writer.
#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Encoder {
        Encoder::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_be_bytes());
    }

    pub fn put_digest(&mut self, d: &Digest) {
        self.buf.extend_from_slice(&d.0);
    }

    pub fn put_pubkey(&mut self, pk: &PublicKeyBytes) {
        self.buf.extend_from_slice(&pk.0);
    }

    pub fn put_signature(&mut self, sig: &SignatureBytes) {
        self.buf.extend_from_slice(&sig.0);
    }

    /// Length-prefixed byte string.
    pub fn put_bytes(&mut self, b: &[u8]) -> Result<(), EncodingError> {
        let len = u32::try_from(b.len()).map_err(|_| EncodingError::LengthOverflow(b.len()))?;
        self.put_u32(len);
        self.buf.extend_from_slice(b);
        Ok(())
    }

    /// Count prefix for a list; caller encodes the elements.
    pub fn put_count(&mut self, n: usize) -> Result<(), EncodingError> {
        let n = u32::try_from(n).map_err(|_| EncodingError::LengthOverflow(n))?;
        self.put_u32(n);
        Ok(())
    }
}

/// Cursor over canonical bytes.
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Decoder<'a> {
        Decoder { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    /// Fails unless every input byte was consumed.
    pub fn finish(self) -> Result<(), EncodingError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(EncodingError::TrailingBytes)
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], EncodingError> {
        if self.remaining() < n {
            return Err(EncodingError::Truncated);
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn get_u8(&mut self) -> Result<u8, EncodingError> {
        Ok(self.take(1)?[0])
    }

    pub fn get_u32(&mut self) -> Result<u32, EncodingError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn get_u64(&mut self) -> Result<u64, EncodingError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn get_f64(&mut self) -> Result<f64, EncodingError> {
        Ok(f64::from_bits(u64::from_be_bytes(
            self.take(8)?.try_into().unwrap(),
        )))
    }

    pub fn get_digest(&mut self) -> Result<Digest, EncodingError> {
        Ok(Digest(self.take(DIGEST_LEN)?.try_into().unwrap()))
    }

    pub fn get_pubkey(&mut self) -> Result<PublicKeyBytes, EncodingError> {
        Ok(PublicKeyBytes(self.take(32)?.try_into().unwrap()))
    }

    pub fn get_signature(&mut self) -> Result<SignatureBytes, EncodingError> {
        Ok(SignatureBytes(self.take(64)?.try_into().unwrap()))
    }

    pub fn get_bytes(&mut self) -> Result<Vec<u8>, EncodingError> {
        let len = self.get_u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    pub fn get_count(&mut self) -> Result<usize, EncodingError> {
        Ok(self.get_u32()? as usize)
    }
}

/// Types with a canonical byte form.
pub trait CanonicalEncode {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError>;

    fn canonical_bytes(&self) -> Result<Vec<u8>, EncodingError> {
        let mut enc = Encoder::new();
        self.encode_into(&mut enc)?;
        Ok(enc.into_bytes())
    }
}

/// Types decodable from their canonical byte form.
pub trait CanonicalDecode: Sized {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError>;

    fn from_canonical_bytes(data: &[u8]) -> Result<Self, EncodingError> {
        let mut dec = Decoder::new(data);
        let v = Self::decode_from(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}
