//! On-disk tensor cache: every training segment's encoding, for all twelve
//! transpositions, precomputed once.
//!
//! Binary little-endian layout, one file per experiment:
//!
//! ```text
//! magic       8 bytes  "FIFTHTNS"
//! version     u32      1
//! encoding    u8       EncodingId code
//! seg_length  u32      timesteps per segment
//! count       u64      entry count
//! entry*      piece_id (u32 len + UTF-8), transposition i8,
//!             start_step u32, tonic u8, mode u8, padded u8,
//!             kind u8, rows u32, width u32, values (rows*width f64)
//! ```
//!
//! Values stay f64, so a reload is bit-identical to what was written.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use fifthspace::score::SegmentMeta;
use fifthspace::{ElementKind, EncodedTensor, EncodingId, KeyLabel, Mode};

use crate::CliError;

const MAGIC: &[u8; 8] = b"FIFTHTNS";
const VERSION: u32 = 1;

/// One encoded segment of one transposed training piece.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub piece_id: String,
    /// Semitone offset from the piece's original key, in -5..=6.
    pub transposition: i8,
    pub meta: SegmentMeta,
    pub tensor: EncodedTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCache {
    pub encoding: EncodingId,
    pub segment_length: usize,
    pub entries: Vec<CacheEntry>,
}

fn mode_code(mode: Mode) -> u8 {
    match mode {
        Mode::Major => 0,
        Mode::Minor => 1,
    }
}

fn mode_from_code(code: u8) -> Option<Mode> {
    match code {
        0 => Some(Mode::Major),
        1 => Some(Mode::Minor),
        _ => None,
    }
}

impl TensorCache {
    pub fn write_to(&self, path: &Path) -> Result<(), CliError> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.encoding.code());
        out.extend_from_slice(&(self.segment_length as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.piece_id.len() as u32).to_le_bytes());
            out.extend_from_slice(e.piece_id.as_bytes());
            out.push(e.transposition as u8);
            out.extend_from_slice(&(e.meta.start_step as u32).to_le_bytes());
            out.push(e.meta.key.tonic_pc);
            out.push(mode_code(e.meta.key.mode));
            out.push(u8::from(e.meta.padded));
            out.push(e.tensor.kind.code());
            out.extend_from_slice(&(e.tensor.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(e.tensor.width() as u32).to_le_bytes());
            for v in &e.tensor.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<TensorCache, CliError> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .map_err(|e| CliError::Data(format!("cache {}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        let corrupt = |what: &str| CliError::Data(format!("cache {}: {what}", path.display()));

        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let encoding =
            EncodingId::from_code(r.u8()?).ok_or_else(|| corrupt("unknown encoding tag"))?;
        let segment_length = r.u32()? as usize;
        let count = r.u64()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let id_len = r.u32()? as usize;
            let piece_id = String::from_utf8(r.take(id_len)?.to_vec())
                .map_err(|_| corrupt("piece id is not UTF-8"))?;
            let transposition = r.u8()? as i8;
            let start_step = r.u32()? as usize;
            let tonic_pc = r.u8()?;
            if tonic_pc > 11 {
                return Err(corrupt("tonic out of range"));
            }
            let mode = mode_from_code(r.u8()?).ok_or_else(|| corrupt("bad mode tag"))?;
            let padded = r.u8()? != 0;
            let kind =
                ElementKind::from_code(r.u8()?).ok_or_else(|| corrupt("unknown element kind"))?;
            let rows = r.u32()? as usize;
            let width = r.u32()? as usize;
            let mut values = Vec::with_capacity(rows * width);
            for _ in 0..rows * width {
                values.push(r.f64()?);
            }
            entries.push(CacheEntry {
                piece_id: piece_id.clone(),
                transposition,
                meta: SegmentMeta {
                    piece_id,
                    start_step,
                    key: KeyLabel::new(tonic_pc, mode),
                    padded,
                },
                tensor: EncodedTensor {
                    encoding_id: encoding,
                    shape: (rows, width),
                    kind,
                    values,
                },
            });
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(TensorCache {
            encoding,
            segment_length,
            entries,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::Data("cache: unexpected end of file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CliError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
