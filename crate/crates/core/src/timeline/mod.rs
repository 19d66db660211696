//! Per-second multimodal token timeline.
//!
//! A [`VideoTimeline`] holds, for each second of video (one frame per
//! second), a block of visual tokens, a block of audio tokens and a
//! descriptor vector used only for inter-frame similarity.

mod format;
mod synth;
mod text;

use std::borrow::Cow;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use format::{decode_tdcf, encode_tdcf, read_tdcf, write_tdcf, TDCF_MAGIC, TDCF_VERSION};
pub use synth::{synth_generate, SynthSpec};
pub use text::{fnv1a, tokenize_text, InstructionTokens, VOCAB_SIZE};

use crate::error::{Result, TdcError};
use crate::numkernel::Matrix;

/// Visual tokens per frame at the default encoder setting.
pub const DEFAULT_VISUAL_TOKENS: usize = 144;
/// Audio tokens per second at the default encoder setting.
pub const DEFAULT_AUDIO_TOKENS: usize = 50;
/// Desk-scale embedding width for visual, audio and descriptor streams.
pub const DEFAULT_DIM: usize = 32;

/// Where the per-frame similarity descriptor comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorMode {
    /// The separately stored descriptor stream.
    #[default]
    Stored,
    /// Column mean of the frame's visual tokens.
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoTimeline {
    visual: Vec<Matrix>,
    audio: Vec<Matrix>,
    descriptors: Vec<Vec<f64>>,
}

impl VideoTimeline {
    pub fn new(visual: Vec<Matrix>, audio: Vec<Matrix>, descriptors: Vec<Vec<f64>>) -> Result<Self> {
        let frames = visual.len();
        if frames == 0 {
            return Err(TdcError::Argument("a timeline needs at least one frame".into()));
        }
        if audio.len() != frames || descriptors.len() != frames {
            return Err(TdcError::Shape(format!(
                "stream lengths differ: {frames} visual, {} audio, {} descriptors",
                audio.len(),
                descriptors.len()
            )));
        }
        let vshape = visual[0].shape();
        let ashape = audio[0].shape();
        let ddim = descriptors[0].len();
        for t in 0..frames {
            if visual[t].shape() != vshape {
                return Err(TdcError::Shape(format!(
                    "frame {t} visual block is {:?}, expected {vshape:?}",
                    visual[t].shape()
                )));
            }
            if audio[t].shape() != ashape {
                return Err(TdcError::Shape(format!(
                    "frame {t} audio block is {:?}, expected {ashape:?}",
                    audio[t].shape()
                )));
            }
            if descriptors[t].len() != ddim {
                return Err(TdcError::Shape(format!(
                    "frame {t} descriptor has {} entries, expected {ddim}",
                    descriptors[t].len()
                )));
            }
        }
        Ok(Self {
            visual,
            audio,
            descriptors,
        })
    }

    /// Number of frames (seconds).
    pub fn frames(&self) -> usize {
        self.visual.len()
    }

    pub fn visual(&self, t: usize) -> &Matrix {
        &self.visual[t]
    }

    pub fn audio(&self, t: usize) -> &Matrix {
        &self.audio[t]
    }

    pub fn descriptor(&self, t: usize) -> &[f64] {
        &self.descriptors[t]
    }

    /// Descriptor for frame `t` under `mode`.
    pub fn descriptor_for(&self, t: usize, mode: DescriptorMode) -> Cow<'_, [f64]> {
        match mode {
            DescriptorMode::Stored => Cow::Borrowed(&self.descriptors[t]),
            DescriptorMode::Pooled => Cow::Owned(self.visual[t].column_mean().into_data()),
        }
    }

    pub fn visual_tokens(&self) -> usize {
        self.visual[0].rows()
    }

    pub fn visual_dim(&self) -> usize {
        self.visual[0].cols()
    }

    pub fn audio_tokens(&self) -> usize {
        self.audio[0].rows()
    }

    pub fn audio_dim(&self) -> usize {
        self.audio[0].cols()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptors[0].len()
    }

    /// Frames in `range` as a standalone timeline (frame 0 = `range.start`).
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > self.frames() {
            return Err(TdcError::Argument(format!(
                "frame range {range:?} invalid for {} frames",
                self.frames()
            )));
        }
        Ok(Self {
            visual: self.visual[range.clone()].to_vec(),
            audio: self.audio[range.clone()].to_vec(),
            descriptors: self.descriptors[range].to_vec(),
        })
    }

    /// Same timeline with the audio stream replaced by zero-token blocks.
    pub fn without_audio(&self) -> Self {
        let dim = self.audio_dim();
        Self {
            visual: self.visual.clone(),
            audio: vec![Matrix::zeros(0, dim); self.frames()],
            descriptors: self.descriptors.clone(),
        }
    }
}
