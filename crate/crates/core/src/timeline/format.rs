//! TDCF container.
//!
//! ```text
//! "TDCF"            4 bytes
//! version           u32 LE (= 1)
//! T                 u32 LE
//! 3 streams, in order visual (tag 0), audio (tag 1), descriptor (tag 2):
//!   tag             u8
//!   tokens/frame    u32 LE   (1 for descriptors)
//!   dim             u32 LE
//!   T*tokens*dim    f32 LE, frame-major then row-major
//! ```

use std::fs;
use std::path::Path;

use super::VideoTimeline;
use crate::binio::{checked_u32, put_f32s, put_u32, ByteReader};
use crate::error::{FormatError, Result, TdcError};
use crate::numkernel::Matrix;

pub const TDCF_MAGIC: [u8; 4] = *b"TDCF";
pub const TDCF_VERSION: u32 = 1;

const TAG_VISUAL: u8 = 0;
const TAG_AUDIO: u8 = 1;
const TAG_DESCRIPTOR: u8 = 2;

/// Serializes a timeline; values are narrowed to `f32`.
pub fn encode_tdcf(tl: &VideoTimeline) -> Result<Vec<u8>> {
    let frames = tl.frames();
    let mut out = Vec::new();
    out.extend_from_slice(&TDCF_MAGIC);
    put_u32(&mut out, TDCF_VERSION);
    put_u32(&mut out, checked_u32(frames, "frame count")?);

    put_u32_stream_header(&mut out, TAG_VISUAL, tl.visual_tokens(), tl.visual_dim())?;
    for t in 0..frames {
        put_f32s(&mut out, tl.visual(t).data());
    }
    put_u32_stream_header(&mut out, TAG_AUDIO, tl.audio_tokens(), tl.audio_dim())?;
    for t in 0..frames {
        put_f32s(&mut out, tl.audio(t).data());
    }
    put_u32_stream_header(&mut out, TAG_DESCRIPTOR, 1, tl.descriptor_dim())?;
    for t in 0..frames {
        put_f32s(&mut out, tl.descriptor(t));
    }
    Ok(out)
}

fn put_u32_stream_header(out: &mut Vec<u8>, tag: u8, tokens: usize, dim: usize) -> Result<()> {
    out.push(tag);
    put_u32(out, checked_u32(tokens, "tokens per frame")?);
    put_u32(out, checked_u32(dim, "dimension")?);
    Ok(())
}

pub fn decode_tdcf(bytes: &[u8]) -> Result<VideoTimeline, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(TDCF_MAGIC)?;
    r.version(TDCF_VERSION)?;
    let frames_at = r.position();
    let frames = r.u32()? as usize;
    if frames == 0 {
        return Err(FormatError::Invalid {
            offset: frames_at,
            reason: "frame count must be at least 1".into(),
        });
    }

    let visual = read_stream(&mut r, TAG_VISUAL, frames)?;
    let audio = read_stream(&mut r, TAG_AUDIO, frames)?;
    let descriptors = read_stream(&mut r, TAG_DESCRIPTOR, frames)?
        .into_iter()
        .map(Matrix::into_data)
        .collect();
    r.finish()?;
    let end = r.position();
    VideoTimeline::new(visual, audio, descriptors).map_err(|e| FormatError::Invalid {
        offset: end,
        reason: e.to_string(),
    })
}

fn read_stream(r: &mut ByteReader<'_>, tag: u8, frames: usize) -> Result<Vec<Matrix>, FormatError> {
    let tag_at = r.position();
    let found = r.u8()?;
    if found != tag {
        return Err(FormatError::Invalid {
            offset: tag_at,
            reason: format!("modality tag {found}, expected {tag}"),
        });
    }
    let tokens = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if tag == TAG_DESCRIPTOR && tokens != 1 {
        return Err(FormatError::Invalid {
            offset: tag_at + 1,
            reason: format!("descriptor stream must have 1 token per frame, found {tokens}"),
        });
    }
    let per_frame = tokens.checked_mul(dim).ok_or_else(|| FormatError::Invalid {
        offset: tag_at + 1,
        reason: "tokens*dim overflows".into(),
    })?;
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let data = r.f32s(per_frame)?;
        out.push(Matrix::new(tokens, dim, data).expect("length checked by reader"));
    }
    Ok(out)
}

pub fn write_tdcf(tl: &VideoTimeline, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tdcf(tl)?;
    fs::write(path, bytes).map_err(|e| TdcError::io(path, e))
}

pub fn read_tdcf(path: impl AsRef<Path>) -> Result<VideoTimeline> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TdcError::io(path, e))?;
    decode_tdcf(&bytes).map_err(|e| TdcError::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{synth_generate, SynthSpec};

    fn small() -> VideoTimeline {
        let spec = SynthSpec {
            frames: 3,
            visual_tokens: 4,
            audio_tokens: 2,
            visual_dim: 3,
            audio_dim: 2,
            descriptor_dim: 5,
            ..SynthSpec::default()
        };
        synth_generate(&spec).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_tdcf(&small()).unwrap();
        assert_eq!(&bytes[..4], &[0x54, 0x44, 0x43, 0x46]);
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(bytes[12], 0);
        assert_eq!(&bytes[13..17], &4u32.to_le_bytes());
        assert_eq!(&bytes[17..21], &3u32.to_le_bytes());
        let expected = 12 + 3 * 9 + 3 * (4 * 3 + 2 * 2 + 5) * 4;
        assert_eq!(bytes.len(), expected);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let tl = small();
        let back = decode_tdcf(&encode_tdcf(&tl).unwrap()).unwrap();
        assert_eq!(back, tl);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let bytes = encode_tdcf(&small()).unwrap();
        let cut = &bytes[..bytes.len() - 4];
        match decode_tdcf(cut) {
            Err(FormatError::Truncated { offset, .. }) => assert!(offset < cut.len()),
            other => panic!("expected truncation, got {other:?}"),
        }

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tdcf(&bad), Err(FormatError::BadMagic { offset: 0, .. })));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_tdcf(&bad),
            Err(FormatError::VersionMismatch { offset: 4, found: 2, .. })
        ));

        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode_tdcf(&extra), Err(FormatError::Invalid { .. })));
    }
}
