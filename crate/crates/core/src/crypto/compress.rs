use std::io::{Read, Write};

use crate::codec::{Reader, Writer};
use crate::error::{CryptoError, DecodeError};

/// A general-purpose byte compressor.
pub trait Codec: Send + Sync {
    fn name(&self) -> &'static str;
    fn compress(&self, input: &[u8]) -> Vec<u8>;
    fn decompress(&self, input: &[u8]) -> Result<Vec<u8>, CryptoError>;
}

/// Brotli with a fixed quality and window.
#[derive(Clone, Copy, Debug)]
pub struct Brotli {
    pub quality: u32,
    pub lgwin: u32,
}

impl Default for Brotli {
    fn default() -> Self {
        Brotli {
            quality: 6,
            lgwin: 22,
        }
    }
}

impl Codec for Brotli {
    fn name(&self) -> &'static str {
        "brotli"
    }

    fn compress(&self, input: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(input.len() / 2 + 64);
        {
            let mut w = brotli::CompressorWriter::new(&mut out, 4096, self.quality, self.lgwin);
            w.write_all(input).expect("writing to a Vec cannot fail");
        }
        out
    }

    fn decompress(&self, input: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let mut out = Vec::new();
        brotli::Decompressor::new(input, 4096)
            .read_to_end(&mut out)
            .map_err(|_| CryptoError::CorruptStream)?;
        Ok(out)
    }
}

/// Passes bytes through unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl Codec for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn compress(&self, input: &[u8]) -> Vec<u8> {
        input.to_vec()
    }

    fn decompress(&self, input: &[u8]) -> Result<Vec<u8>, CryptoError> {
        Ok(input.to_vec())
    }
}

pub fn compress(bytes: &[u8]) -> Vec<u8> {
    Brotli::default().compress(bytes)
}

pub fn decompress(bytes: &[u8]) -> Result<Vec<u8>, CryptoError> {
    Brotli::default().decompress(bytes)
}

/// A batch encoding after compression, keyed by batch id.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CompressedBatch {
    pub id: u64,
    pub bytes: Vec<u8>,
}

impl CompressedBatch {
    /// Container layout: `id: u64 | payload length: u32 | codec bytes`.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(12 + self.bytes.len());
        w.u64(self.id).bytes(&self.bytes);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let c = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(c)
    }

    /// Reads one container from a stream of back-to-back containers.
    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        if r.remaining() == 0 {
            return Err(DecodeError::Empty);
        }
        Ok(CompressedBatch {
            id: r.u64()?,
            bytes: r.bytes()?.to_vec(),
        })
    }
}
