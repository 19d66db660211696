//! TDC stream assembly.
//!
//! Every scene is cut into windows of at most `N` frames. The first frame of
//! a window is static: its visual and audio tokens are kept (projected to the
//! model width). A `<Sep>` embedding follows, then `K` compressed tokens for
//! every remaining frame of the window, in frame order.

mod budget;
mod stream_file;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use budget::{token_budget, BudgetReport, WindowBudget};
pub use stream_file::{
    count_stream_tokens, decode_stream, encode_stream, read_stream, write_stream, TDCS_MAGIC,
    TDCS_VERSION,
};

use crate::error::{Result, TdcError};
use crate::numkernel::{matmul, Matrix};
use crate::qformer::{self, init_params, QFormerConfig, QFormerParams};
use crate::segmenter::{segment_scenes, ScenePartition, SegmenterConfig};
use crate::timeline::{InstructionTokens, VideoTimeline};

/// Frames per window by default.
pub const DEFAULT_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub scene: usize,
    /// Position of the window in timeline order.
    pub index: usize,
    pub static_frame: usize,
    pub dynamic_frames: Vec<usize>,
}

impl Window {
    pub fn len(&self) -> usize {
        1 + self.dynamic_frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.static_frame).chain(self.dynamic_frames.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub window_len: usize,
    pub frames: usize,
    pub scene_count: usize,
    pub windows: Vec<Window>,
}

impl WindowPlan {
    pub fn windows_in_scene(&self, scene: usize) -> impl Iterator<Item = &Window> {
        self.windows.iter().filter(move |w| w.scene == scene)
    }
}

/// Splits every scene into `ceil(len / N)` consecutive windows; the last
/// window of a scene may be short.
pub fn make_windows(partition: &ScenePartition, window_len: usize) -> Result<WindowPlan> {
    if window_len == 0 {
        return Err(TdcError::Argument("window length must be at least 1".into()));
    }
    let mut windows = Vec::new();
    for (scene, range) in partition.scenes().into_iter().enumerate() {
        let mut start = range.start;
        while start < range.end {
            let end = (start + window_len).min(range.end);
            windows.push(Window {
                scene,
                index: windows.len(),
                static_frame: start,
                dynamic_frames: (start + 1..end).collect(),
            });
            start = end;
        }
    }
    Ok(WindowPlan {
        window_len,
        frames: partition.frames(),
        scene_count: partition.scene_count(),
        windows,
    })
}

/// Where a token of the stream came from. The discriminant is the on-disk
/// provenance byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Provenance {
    StaticVisual = 0,
    StaticAudio = 1,
    Sep = 2,
    Dynamic = 3,
}

impl Provenance {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::StaticVisual),
            1 => Some(Self::StaticAudio),
            2 => Some(Self::Sep),
            3 => Some(Self::Dynamic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenMeta {
    pub provenance: Provenance,
    pub frame: usize,
    pub window: usize,
}

/// Ordered compressed token sequence: one embedding row per token plus its
/// provenance record.
#[derive(Debug, Clone, PartialEq)]
pub struct TdcStream {
    embeddings: Matrix,
    meta: Vec<TokenMeta>,
}

impl TdcStream {
    pub fn new(embeddings: Matrix, meta: Vec<TokenMeta>) -> Result<Self> {
        if embeddings.rows() != meta.len() {
            return Err(TdcError::Shape(format!(
                "{} embeddings for {} provenance records",
                embeddings.rows(),
                meta.len()
            )));
        }
        Ok(Self { embeddings, meta })
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn meta(&self) -> &[TokenMeta] {
        &self.meta
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.meta.iter().filter(|m| m.provenance == provenance).count()
    }

    /// Shifts every frame index by `offset`.
    pub fn offset_frames(mut self, offset: usize) -> Self {
        for m in &mut self.meta {
            m.frame += offset;
        }
        self
    }

    /// Concatenates streams in order; window indices are renumbered to stay
    /// unique.
    pub fn concat(parts: &[TdcStream]) -> Result<Self> {
        let dim = parts.first().map_or(0, TdcStream::dim);
        let embeddings = Matrix::vstack(&parts.iter().map(|p| &p.embeddings).collect::<Vec<_>>())?;
        let mut meta = Vec::with_capacity(embeddings.rows());
        let mut window_base = 0;
        for p in parts {
            if p.dim() != dim {
                return Err(TdcError::Shape(format!("stream dims {} and {dim} differ", p.dim())));
            }
            let next_base = window_base + p.meta.iter().map(|m| m.window + 1).max().unwrap_or(0);
            meta.extend(p.meta.iter().map(|m| TokenMeta {
                window: m.window + window_base,
                ..*m
            }));
            window_base = next_base;
        }
        Self::new(embeddings, meta)
    }
}

/// Query tokens for a window built from its static frame.
pub fn build_queries(params: &QFormerParams, static_visual: &Matrix) -> Result<Matrix> {
    qformer::build_queries(params, static_visual)
}

/// Compresses one dynamic frame against the window's queries.
pub fn compress_frame(
    params: &QFormerParams,
    queries: &Matrix,
    visual: &Matrix,
    audio: &Matrix,
    text: &InstructionTokens,
) -> Result<Matrix> {
    qformer::forward(params, queries, visual, audio, text)
}

fn window_block(
    tl: &VideoTimeline,
    window: &Window,
    params: &QFormerParams,
    text: &InstructionTokens,
) -> Result<(Vec<Matrix>, Vec<TokenMeta>)> {
    let s = window.static_frame;
    let static_visual = matmul(tl.visual(s), &params.proj_visual)?;
    let static_audio = matmul(tl.audio(s), &params.proj_audio)?;
    let mut meta = Vec::new();
    let tag = |provenance, frame, n: usize, meta: &mut Vec<TokenMeta>| {
        meta.extend(std::iter::repeat_n(
            TokenMeta {
                provenance,
                frame,
                window: window.index,
            },
            n,
        ));
    };
    tag(Provenance::StaticVisual, s, static_visual.rows(), &mut meta);
    tag(Provenance::StaticAudio, s, static_audio.rows(), &mut meta);
    tag(Provenance::Sep, s, 1, &mut meta);
    let mut blocks = vec![static_visual, static_audio, params.sep.clone()];

    if !window.dynamic_frames.is_empty() {
        let queries = build_queries(params, tl.visual(s))?;
        for &f in &window.dynamic_frames {
            let compressed = compress_frame(params, &queries, tl.visual(f), tl.audio(f), text)?;
            tag(Provenance::Dynamic, f, compressed.rows(), &mut meta);
            blocks.push(compressed);
        }
    }
    Ok((blocks, meta))
}

/// Builds the full stream for `plan`. Windows are compressed in parallel and
/// merged in window order, so the result does not depend on scheduling.
pub fn assemble_tdc(
    tl: &VideoTimeline,
    plan: &WindowPlan,
    params: &QFormerParams,
    text: &InstructionTokens,
) -> Result<TdcStream> {
    if plan.frames != tl.frames() {
        return Err(TdcError::Shape(format!(
            "plan covers {} frames, timeline has {}",
            plan.frames,
            tl.frames()
        )));
    }
    let cfg = &params.config;
    if tl.visual_dim() != cfg.visual_dim || tl.audio_dim() != cfg.audio_dim {
        return Err(TdcError::Shape(format!(
            "timeline dims ({}, {}) do not match compressor inputs ({}, {})",
            tl.visual_dim(),
            tl.audio_dim(),
            cfg.visual_dim,
            cfg.audio_dim
        )));
    }
    let parts = plan
        .windows
        .par_iter()
        .map(|w| window_block(tl, w, params, text))
        .collect::<Result<Vec<_>>>()?;
    let mut blocks = Vec::new();
    let mut meta = Vec::new();
    for (b, m) in parts {
        blocks.extend(b);
        meta.extend(m);
    }
    let embeddings = Matrix::vstack(&blocks.iter().collect::<Vec<_>>())?;
    TdcStream::new(embeddings, meta)
}

/// Everything needed to turn a timeline into a stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdcConfig {
    pub window: usize,
    pub segmenter: SegmenterConfig,
    pub qformer: QFormerConfig,
}

impl Default for TdcConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            segmenter: SegmenterConfig::default(),
            qformer: QFormerConfig::default(),
        }
    }
}

/// Segment, window and assemble with one set of parameters.
#[derive(Debug, Clone)]
pub struct Compressor {
    pub config: TdcConfig,
    pub params: QFormerParams,
}

impl Compressor {
    /// Seeded parameters for `config.qformer`.
    pub fn new(config: TdcConfig) -> Result<Self> {
        let params = init_params(&config.qformer)?;
        Ok(Self { config, params })
    }

    pub fn with_params(config: TdcConfig, params: QFormerParams) -> Self {
        Self {
            config: TdcConfig {
                qformer: params.config,
                ..config
            },
            params,
        }
    }

    pub fn plan(&self, tl: &VideoTimeline) -> Result<WindowPlan> {
        let partition = segment_scenes(tl, &self.config.segmenter)?;
        make_windows(&partition, self.config.window)
    }

    pub fn encode(&self, tl: &VideoTimeline, text: &InstructionTokens) -> Result<TdcStream> {
        let plan = self.plan(tl)?;
        assemble_tdc(tl, &plan, &self.params, text)
    }

    /// Encodes `range` as an independent clip; frame indices in the result
    /// refer to the full timeline.
    pub fn encode_range(
        &self,
        tl: &VideoTimeline,
        range: std::ops::Range<usize>,
        text: &InstructionTokens,
    ) -> Result<TdcStream> {
        let start = range.start;
        let clip = tl.slice(range)?;
        Ok(self.encode(&clip, text)?.offset_frames(start))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{synth_generate, tokenize_text, SynthSpec};

    fn ranges(plan: &WindowPlan) -> Vec<(usize, usize)> {
        plan.windows.iter().map(|w| (w.static_frame, w.static_frame + w.len())).collect()
    }

    #[test]
    fn windows_by_definition() {
        let p = ScenePartition::single(10).unwrap();
        assert_eq!(ranges(&make_windows(&p, 4).unwrap()), vec![(0, 4), (4, 8), (8, 10)]);
        assert_eq!(ranges(&make_windows(&p, 10).unwrap()), vec![(0, 10)]);
        assert_eq!(ranges(&make_windows(&p, 50).unwrap()), vec![(0, 10)]);

        let p = ScenePartition::single(60).unwrap();
        let plan = make_windows(&p, 8).unwrap();
        let lens: Vec<usize> = plan.windows.iter().map(Window::len).collect();
        assert_eq!(lens, vec![8, 8, 8, 8, 8, 8, 8, 4]);

        assert!(matches!(make_windows(&p, 0), Err(TdcError::Argument(_))));
    }

    #[test]
    fn windows_respect_scene_cuts() {
        let p = ScenePartition::new(12, vec![3, 5]).unwrap();
        let plan = make_windows(&p, 4).unwrap();
        assert_eq!(ranges(&plan), vec![(0, 3), (3, 5), (5, 9), (9, 12)]);
        assert_eq!(plan.windows_in_scene(2).count(), 2);
        let indices: Vec<usize> = plan.windows.iter().map(|w| w.index).collect();
        assert_eq!(indices, vec![0, 1, 2, 3]);
    }

    fn small_setup(frames: usize) -> (VideoTimeline, QFormerParams) {
        let tl = synth_generate(&SynthSpec {
            frames,
            visual_tokens: 12,
            audio_tokens: 5,
            visual_dim: 8,
            audio_dim: 8,
            descriptor_dim: 8,
            ..SynthSpec::default()
        })
        .unwrap();
        let params = init_params(&QFormerConfig::small()).unwrap();
        (tl, params)
    }

    #[test]
    fn one_frame_window_has_no_dynamic_tokens() {
        let (tl, params) = small_setup(1);
        let plan = make_windows(&ScenePartition::single(1).unwrap(), 8).unwrap();
        let s = assemble_tdc(&tl, &plan, &params, &InstructionTokens::default()).unwrap();
        assert_eq!(s.len(), 12 + 5 + 1);
        assert_eq!(s.count(Provenance::Dynamic), 0);
        assert_eq!(s.embeddings().row(17), params.sep.row(0));
    }

    #[test]
    fn identical_frames_compress_identically() {
        let (tl, params) = small_setup(3);
        let same = VideoTimeline::new(
            vec![tl.visual(0).clone(), tl.visual(1).clone(), tl.visual(1).clone()],
            vec![tl.audio(0).clone(), tl.audio(1).clone(), tl.audio(1).clone()],
            vec![tl.descriptor(0).to_vec(); 3],
        )
        .unwrap();
        let plan = make_windows(&ScenePartition::single(3).unwrap(), 8).unwrap();
        let s = assemble_tdc(&same, &plan, &params, &tokenize_text("go")).unwrap();
        let k = params.config.num_queries;
        let base = 12 + 5 + 1;
        for r in 0..k {
            assert_eq!(s.embeddings().row(base + r), s.embeddings().row(base + k + r));
        }
    }

    #[test]
    fn encode_range_reports_global_frames() {
        let (tl, params) = small_setup(10);
        let c = Compressor::with_params(
            TdcConfig { window: 3, ..TdcConfig::default() },
            params,
        );
        let s = c.encode_range(&tl, 4..10, &InstructionTokens::default()).unwrap();
        let frames: std::collections::BTreeSet<usize> = s.meta().iter().map(|m| m.frame).collect();
        assert_eq!(frames.into_iter().collect::<Vec<_>>(), (4..10).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_mismatched_plan() {
        let (tl, params) = small_setup(4);
        let plan = make_windows(&ScenePartition::single(5).unwrap(), 2).unwrap();
        assert!(assemble_tdc(&tl, &plan, &params, &InstructionTokens::default()).is_err());
    }
}
