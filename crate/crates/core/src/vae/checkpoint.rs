//! Checkpoint files: magic, format version, encoding tag, loss kind, dims,
//! then the ten parameter arrays in declared order as little-endian f32.
//! Parameters are trained in f64 and truncated on save; a reloaded model
//! reproduces the saved one's behavior bit-for-bit, not the trainer's.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{LossKind, Tensor2, VaeParams};
use crate::encodings::EncodingId;

const MAGIC: &[u8; 8] = b"FIFTHVAE";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

pub fn save_checkpoint(
    path: &Path,
    encoding: EncodingId,
    params: &VaeParams,
) -> Result<(), CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(encoding.code());
    out.push(params.loss_kind.code());
    for dim in [
        params.input_dim,
        params.hidden_dim,
        params.latent_dim,
        params.vocab_size.unwrap_or(0),
    ] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for array in params.flat() {
        out.extend_from_slice(&(array.len() as u64).to_le_bytes());
        for &v in array {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Format("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(EncodingId, VaeParams), CheckpointError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let encoding = EncodingId::from_code(r.u8()?)
        .ok_or_else(|| CheckpointError::Format("unknown encoding tag".into()))?;
    let loss_kind = LossKind::from_code(r.u8()?)
        .ok_or_else(|| CheckpointError::Format("unknown loss kind".into()))?;
    let input_dim = r.u32()? as usize;
    let hidden_dim = r.u32()? as usize;
    let latent_dim = r.u32()? as usize;
    let vocab_raw = r.u32()? as usize;
    let vocab_size = (vocab_raw != 0).then_some(vocab_raw);

    let mut params = VaeParams {
        input_dim,
        hidden_dim,
        latent_dim,
        vocab_size,
        loss_kind,
        w1: Tensor2::zeros(hidden_dim, input_dim),
        b1: vec![0.0; hidden_dim],
        w_mu: Tensor2::zeros(latent_dim, hidden_dim),
        b_mu: vec![0.0; latent_dim],
        w_lv: Tensor2::zeros(latent_dim, hidden_dim),
        b_lv: vec![0.0; latent_dim],
        w2: Tensor2::zeros(hidden_dim, latent_dim),
        b2: vec![0.0; hidden_dim],
        w3: Tensor2::zeros(input_dim, hidden_dim),
        b3: vec![0.0; input_dim],
    };
    for slot in params.flat_mut() {
        let len = r.u64()? as usize;
        if len != slot.len() {
            return Err(CheckpointError::Format(format!(
                "array length {len} does not match dims (expected {})",
                slot.len()
            )));
        }
        for v in slot.iter_mut() {
            *v = f32::from_le_bytes(r.take(4)?.try_into().unwrap()) as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Format("trailing bytes".into()));
    }
    Ok((encoding, params))
}
