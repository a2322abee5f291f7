//! Bit-exact container layout.
//!
//! magic "SEVC" | version u8=1 | width u16 | height u16 | bit_depth u8 |
//! qp u8 | gop_size u8 | ctu_size u8 | enc_flags u8 | nonce u64 |
//! frame_count u32, then per frame: frame_type u8 (0=I, 1=P) |
//! payload_len u32 | payload bytes. Multi-byte fields little-endian.
//! The key is never stored.

use crate::error::{Error, Result};
use crate::selective_crypto::ClassSet;

pub const MAGIC: [u8; 4] = *b"SEVC";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameType {
    I,
    P,
}

impl FrameType {
    pub fn to_byte(self) -> u8 {
        match self {
            FrameType::I => 0,
            FrameType::P => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(FrameType::I),
            1 => Ok(FrameType::P),
            other => Err(Error::CorruptStream(format!("bad frame type {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContainerHeader {
    pub width: u16,
    pub height: u16,
    pub bit_depth: u8,
    pub qp: u8,
    pub gop_size: u8,
    pub ctu_size: u8,
    pub enc_flags: ClassSet,
    pub nonce: u64,
    pub frame_count: u32,
}

pub const HEADER_LEN: usize = 4 + 1 + 2 + 2 + 1 + 1 + 1 + 1 + 1 + 8 + 4;

pub fn write_header(header: &ContainerHeader, out: &mut Vec<u8>) {
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&header.width.to_le_bytes());
    out.extend_from_slice(&header.height.to_le_bytes());
    out.push(header.bit_depth);
    out.push(header.qp);
    out.push(header.gop_size);
    out.push(header.ctu_size);
    out.push(header.enc_flags.bits());
    out.extend_from_slice(&header.nonce.to_le_bytes());
    out.extend_from_slice(&header.frame_count.to_le_bytes());
}

pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::TruncatedStream);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_header(reader: &mut ByteReader) -> Result<ContainerHeader> {
    if reader.take(4)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = reader.u8()?;
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let width = reader.u16()?;
    let height = reader.u16()?;
    let bit_depth = reader.u8()?;
    let qp = reader.u8()?;
    let gop_size = reader.u8()?;
    let ctu_size = reader.u8()?;
    let enc_flags = ClassSet::from_bits(reader.u8()?)?;
    let nonce = reader.u64()?;
    let frame_count = reader.u32()?;
    if bit_depth != 8 {
        return Err(Error::CorruptStream(format!(
            "unsupported bit depth {bit_depth}"
        )));
    }
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(Error::CorruptStream(format!(
            "bad dimensions {width}x{height}"
        )));
    }
    if gop_size == 0 || ctu_size == 0 || !ctu_size.is_power_of_two() || ctu_size < 8 {
        return Err(Error::CorruptStream("bad gop or ctu size".into()));
    }
    if qp > 51 {
        return Err(Error::CorruptStream(format!("qp {qp} out of range")));
    }
    Ok(ContainerHeader {
        width,
        height,
        bit_depth,
        qp,
        gop_size,
        ctu_size,
        enc_flags,
        nonce,
        frame_count,
    })
}
