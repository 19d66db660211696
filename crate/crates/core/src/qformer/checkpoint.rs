//! TDCP parameter checkpoints.
//!
//! ```text
//! "TDCP"              4 bytes
//! version             u32 LE (= 1)
//! config length       u32 LE, then that many bytes of JSON (QFormerConfig)
//! tensor count        u32 LE
//! per tensor:
//!   name length       u32 LE, then UTF-8 name
//!   rows, cols        u32 LE each
//!   rows*cols         f32 LE, row-major
//! ```
//! Tensors appear in [`QFormerParams::tensors`] order.

use std::fs;
use std::path::Path;

use super::{QFormerConfig, QFormerParams};
use crate::binio::{checked_u32, put_f32s, put_u32, ByteReader};
use crate::error::{FormatError, Result, TdcError};

pub const TDCP_MAGIC: [u8; 4] = *b"TDCP";
pub const TDCP_VERSION: u32 = 1;

pub fn encode_tdcp(params: &QFormerParams) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&TDCP_MAGIC);
    put_u32(&mut out, TDCP_VERSION);
    let config = serde_json::to_vec(&params.config)
        .map_err(|e| TdcError::Argument(format!("config serialization: {e}")))?;
    put_u32(&mut out, checked_u32(config.len(), "config length")?);
    out.extend_from_slice(&config);
    let tensors = params.tensors();
    put_u32(&mut out, checked_u32(tensors.len(), "tensor count")?);
    for (name, m) in tensors {
        put_u32(&mut out, checked_u32(name.len(), "name length")?);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, checked_u32(m.rows(), "rows")?);
        put_u32(&mut out, checked_u32(m.cols(), "cols")?);
        put_f32s(&mut out, m.data());
    }
    Ok(out)
}

pub fn decode_tdcp(bytes: &[u8]) -> Result<QFormerParams, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(TDCP_MAGIC)?;
    r.version(TDCP_VERSION)?;
    let config_at = r.position();
    let config_len = r.u32()? as usize;
    let config: QFormerConfig =
        serde_json::from_slice(r.take(config_len)?).map_err(|e| FormatError::Invalid {
            offset: config_at + 4,
            reason: format!("config JSON: {e}"),
        })?;
    config.validate().map_err(|e| FormatError::Invalid {
        offset: config_at + 4,
        reason: e.to_string(),
    })?;

    let mut params = QFormerParams::zeroed(&config);
    let count_at = r.position();
    let count = r.u32()? as usize;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(FormatError::Invalid {
            offset: count_at,
            reason: format!("{count} tensors, config implies {}", slots.len()),
        });
    }
    for (expected_name, slot) in slots.iter_mut() {
        let at = r.position();
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| FormatError::Invalid {
            offset: at + 4,
            reason: "tensor name is not UTF-8".into(),
        })?;
        if name != expected_name {
            return Err(FormatError::Invalid {
                offset: at + 4,
                reason: format!("tensor {name:?}, expected {expected_name:?}"),
            });
        }
        let shape_at = r.position();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if (rows, cols) != slot.shape() {
            return Err(FormatError::Invalid {
                offset: shape_at,
                reason: format!("{name} is {rows}x{cols}, expected {:?}", slot.shape()),
            });
        }
        let data = r.f32s(rows * cols)?;
        slot.data_mut().copy_from_slice(&data);
    }
    drop(slots);
    r.finish()?;
    Ok(params)
}

pub fn save_checkpoint(params: &QFormerParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tdcp(params)?;
    fs::write(path, bytes).map_err(|e| TdcError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<QFormerParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TdcError::io(path, e))?;
    decode_tdcp(&bytes).map_err(|e| TdcError::format(path, e))
}
