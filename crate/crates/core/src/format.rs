//! Binary preprocessed edge-list file.
//!
//! Little-endian layout:
//!
//! ```text
//! header:  magic "GRPR" | version u16 | V u32 | C u16 | N u16 | G u16 | B u32 | E u64
//! records: E × { src u32 | dst u32 | weight u16 }   (ascending global order ID)
//! ```
//!
//! The order ID itself is not stored; readers recompute it and reject files
//! whose records are not strictly ascending.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::fixed::Fx16;
use crate::preprocess::{OrderedEdgeList, PreprocessError, TilingParams};

pub const MAGIC: &[u8; 4] = b"GRPR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 2 + 2 + 4 + 8;
pub const RECORD_LEN: usize = 4 + 4 + 2;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a preprocessed edge file (bad magic)")]
    BadMagic,
    #[error("unsupported file version {0}")]
    UnsupportedVersion(u16),
    #[error("tiling parameter {name}={value} does not fit the header field")]
    FieldOverflow { name: &'static str, value: u64 },
    #[error("header parameters are inconsistent: {0:?}")]
    BadParams(TilingParams),
    #[error(transparent)]
    Order(#[from] PreprocessError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn narrow<T: TryFrom<usize>>(name: &'static str, value: usize) -> Result<T, FormatError> {
    T::try_from(value).map_err(|_| FormatError::FieldOverflow {
        name,
        value: value as u64,
    })
}

pub fn write_preprocessed<W: Write>(ol: &OrderedEdgeList, mut w: W) -> Result<(), FormatError> {
    let p = ol.params();
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&narrow::<u32>("V", p.v)?.to_le_bytes());
    header.extend_from_slice(&narrow::<u16>("C", p.c)?.to_le_bytes());
    header.extend_from_slice(&narrow::<u16>("N", p.n)?.to_le_bytes());
    header.extend_from_slice(&narrow::<u16>("G", p.g)?.to_le_bytes());
    header.extend_from_slice(&narrow::<u32>("B", p.b)?.to_le_bytes());
    header.extend_from_slice(&(ol.len() as u64).to_le_bytes());
    w.write_all(&header)?;

    let mut buf = Vec::with_capacity(RECORD_LEN * 4096);
    for chunk in ol.entries().chunks(4096) {
        buf.clear();
        for e in chunk {
            buf.extend_from_slice(&e.src.to_le_bytes());
            buf.extend_from_slice(&e.dst.to_le_bytes());
            buf.extend_from_slice(&e.weight.raw().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_preprocessed<R: Read>(mut r: R) -> Result<OrderedEdgeList, FormatError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let u16_at = |o: usize| u16::from_le_bytes([header[o], header[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let params = TilingParams {
        v: u32_at(6) as usize,
        c: u16_at(10) as usize,
        n: u16_at(12) as usize,
        g: u16_at(14) as usize,
        b: u32_at(16) as usize,
    };
    let num_edges = u64::from_le_bytes(header[20..28].try_into().unwrap());
    let consistent = params.c > 0
        && params.n > 0
        && params.g > 0
        && params.b > 0
        && params.b.is_multiple_of(params.stripe())
        && params.v.is_multiple_of(params.b)
        && params.v > 0;
    if !consistent {
        return Err(FormatError::BadParams(params));
    }

    let mut records = Vec::with_capacity(num_edges.min(1 << 24) as usize);
    let mut rec = [0u8; RECORD_LEN];
    for _ in 0..num_edges {
        r.read_exact(&mut rec)?;
        let src = u32::from_le_bytes(rec[0..4].try_into().unwrap());
        let dst = u32::from_le_bytes(rec[4..8].try_into().unwrap());
        let weight = Fx16(u16::from_le_bytes([rec[8], rec[9]]));
        records.push((src, dst, weight));
    }
    Ok(OrderedEdgeList::from_records(params, records)?)
}

/// Cheap sniff used by the CLI to tell binary files from text edge lists.
pub fn has_magic(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && &bytes[..4] == MAGIC
}
