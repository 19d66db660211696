//! TDCS container for an assembled stream.
//!
//! ```text
//! "TDCS"            4 bytes
//! version           u32 LE (= 1)
//! token count N     u32 LE
//! dim D             u32 LE
//! N*D               f32 LE embeddings, row-major
//! N                 provenance bytes (0 static-visual, 1 static-audio, 2 sep, 3 dynamic)
//! N * (u32, u32)    frame index, window index
//! ```

use std::fs;
use std::path::Path;

use super::{Provenance, TdcStream, TokenMeta};
use crate::binio::{checked_u32, put_f32s, put_u32, ByteReader};
use crate::error::{FormatError, Result, TdcError};
use crate::numkernel::Matrix;

pub const TDCS_MAGIC: [u8; 4] = *b"TDCS";
pub const TDCS_VERSION: u32 = 1;

pub fn encode_stream(stream: &TdcStream) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&TDCS_MAGIC);
    put_u32(&mut out, TDCS_VERSION);
    put_u32(&mut out, checked_u32(stream.len(), "token count")?);
    put_u32(&mut out, checked_u32(stream.dim(), "dimension")?);
    put_f32s(&mut out, stream.embeddings().data());
    out.extend(stream.meta().iter().map(|m| m.provenance as u8));
    for m in stream.meta() {
        put_u32(&mut out, checked_u32(m.frame, "frame index")?);
        put_u32(&mut out, checked_u32(m.window, "window index")?);
    }
    Ok(out)
}

fn header(r: &mut ByteReader<'_>) -> Result<(usize, usize), FormatError> {
    r.magic(TDCS_MAGIC)?;
    r.version(TDCS_VERSION)?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    Ok((count, dim))
}

fn provenance_bytes(r: &mut ByteReader<'_>, count: usize) -> Result<Vec<Provenance>, FormatError> {
    let start = r.position();
    r.take(count)?
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            Provenance::from_byte(b).ok_or_else(|| FormatError::Invalid {
                offset: start + i,
                reason: format!("provenance byte {b}"),
            })
        })
        .collect()
}

pub fn decode_stream(bytes: &[u8]) -> Result<TdcStream, FormatError> {
    let mut r = ByteReader::new(bytes);
    let (count, dim) = header(&mut r)?;
    let total = count.checked_mul(dim).ok_or_else(|| FormatError::Invalid {
        offset: 8,
        reason: "count*dim overflows".into(),
    })?;
    let data = r.f32s(total)?;
    let provenance = provenance_bytes(&mut r, count)?;
    let mut meta = Vec::with_capacity(count);
    for p in provenance {
        let frame = r.u32()? as usize;
        let window = r.u32()? as usize;
        meta.push(TokenMeta {
            provenance: p,
            frame,
            window,
        });
    }
    r.finish()?;
    let embeddings = Matrix::new(count, dim, data).expect("length read above");
    Ok(TdcStream::new(embeddings, meta).expect("one record per embedding"))
}

pub fn write_stream(stream: &TdcStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_stream(stream)?).map_err(|e| TdcError::io(path, e))
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<TdcStream> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TdcError::io(path, e))?;
    decode_stream(&bytes).map_err(|e| TdcError::format(path, e))
}

/// Counts tokens by walking the provenance side-channel of a stream file,
/// without trusting the header count for anything but locating it.
pub fn count_stream_tokens(bytes: &[u8]) -> Result<usize, FormatError> {
    let mut r = ByteReader::new(bytes);
    let (count, dim) = header(&mut r)?;
    r.take(count * dim * 4)?;
    Ok(provenance_bytes(&mut r, count)?.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TdcStream {
        let emb = Matrix::new(3, 2, vec![0.5, -1.0, 2.0, 0.25, 0.0, 8.0]).unwrap();
        let meta = vec![
            TokenMeta { provenance: Provenance::StaticVisual, frame: 0, window: 0 },
            TokenMeta { provenance: Provenance::Sep, frame: 0, window: 0 },
            TokenMeta { provenance: Provenance::Dynamic, frame: 1, window: 0 },
        ];
        TdcStream::new(emb, meta).unwrap()
    }

    #[test]
    fn round_trip_and_count() {
        let s = sample();
        let bytes = encode_stream(&s).unwrap();
        assert_eq!(&bytes[..4], b"TDCS");
        assert_eq!(decode_stream(&bytes).unwrap(), s);
        assert_eq!(count_stream_tokens(&bytes).unwrap(), 3);
        assert_eq!(&bytes[16 + 24..16 + 27], &[0, 2, 3]);
    }

    #[test]
    fn bad_provenance_byte() {
        let mut bytes = encode_stream(&sample()).unwrap();
        bytes[16 + 24] = 7;
        assert!(matches!(
            decode_stream(&bytes),
            Err(FormatError::Invalid { offset: 40, .. })
        ));
    }
}
