//! Scene segmentation from consecutive-frame descriptor similarity.
//!
//! Cut candidates are the positions where the similarity between frame `t`
//! and frame `t + 1` falls below `tau`. When more than `max_scenes - 1`
//! candidates exist, only the lowest-similarity ones survive (ties go to the
//! earlier position). A cut at `c` means frame `c` opens a new scene.

use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TdcError};
use crate::numkernel::cosine_sim;
use crate::timeline::{DescriptorMode, VideoTimeline};

pub const DEFAULT_MAX_SCENES: usize = 24;
pub const DEFAULT_TAU: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub max_scenes: usize,
    pub tau: f64,
    pub descriptor: DescriptorMode,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            max_scenes: DEFAULT_MAX_SCENES,
            tau: DEFAULT_TAU,
            descriptor: DescriptorMode::Stored,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_scenes == 0 {
            return Err(TdcError::Argument("max_scenes must be at least 1".into()));
        }
        // tau = 1 is allowed so the cap-only behaviour is reachable.
        if !(self.tau > -1.0 && self.tau <= 1.0) {
            return Err(TdcError::Argument(format!("tau must lie in (-1, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenePartition {
    frames: usize,
    boundaries: Vec<usize>,
}

impl ScenePartition {
    /// Validates that `boundaries` is strictly increasing inside `(0, frames)`.
    pub fn new(frames: usize, boundaries: Vec<usize>) -> Result<Self> {
        if frames == 0 {
            return Err(TdcError::Argument("partition of zero frames".into()));
        }
        let mut prev = 0;
        for &b in &boundaries {
            if b <= prev || b >= frames {
                return Err(TdcError::Argument(format!(
                    "cut {b} is not strictly increasing within (0, {frames})"
                )));
            }
            prev = b;
        }
        Ok(Self { frames, boundaries })
    }

    pub fn single(frames: usize) -> Result<Self> {
        Self::new(frames, Vec::new())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn scene_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn scenes(&self) -> Vec<Range<usize>> {
        let mut starts = Vec::with_capacity(self.scene_count() + 1);
        starts.push(0);
        starts.extend_from_slice(&self.boundaries);
        starts.push(self.frames);
        starts.windows(2).map(|w| w[0]..w[1]).collect()
    }
}

/// `out[t] = cos(descriptor_t, descriptor_{t+1})`; empty for a single frame.
pub fn frame_similarities(tl: &VideoTimeline, mode: DescriptorMode) -> Result<Vec<f64>> {
    (0..tl.frames().saturating_sub(1))
        .map(|t| {
            cosine_sim(&tl.descriptor_for(t, mode), &tl.descriptor_for(t + 1, mode)).map_err(
                |e| match e {
                    TdcError::Degenerate(_) => TdcError::Degenerate(format!(
                        "zero descriptor between frames {t} and {}",
                        t + 1
                    )),
                    other => other,
                },
            )
        })
        .collect()
}

/// Applies the threshold-then-cap rule to precomputed similarities.
pub fn select_cuts(similarities: &[f64], cfg: &SegmenterConfig) -> Vec<usize> {
    let mut candidates: Vec<(usize, f64)> = similarities
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, s)| s < cfg.tau)
        .collect();
    let keep = cfg.max_scenes.saturating_sub(1);
    if candidates.len() > keep {
        candidates.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        candidates.truncate(keep);
    }
    let mut cuts: Vec<usize> = candidates.into_iter().map(|(t, _)| t + 1).collect();
    cuts.sort_unstable();
    cuts
}

pub fn segment_scenes(tl: &VideoTimeline, cfg: &SegmenterConfig) -> Result<ScenePartition> {
    cfg.validate()?;
    let sims = frame_similarities(tl, cfg.descriptor)?;
    ScenePartition::new(tl.frames(), select_cuts(&sims, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Matrix;

    fn from_descriptors(desc: Vec<Vec<f64>>) -> VideoTimeline {
        let n = desc.len();
        VideoTimeline::new(
            vec![Matrix::filled(2, 2, 1.0); n],
            vec![Matrix::zeros(1, 2); n],
            desc,
        )
        .unwrap()
    }

    #[test]
    fn single_frame_has_no_similarities() {
        let tl = from_descriptors(vec![vec![1.0, 0.0]]);
        assert!(frame_similarities(&tl, DescriptorMode::Stored).unwrap().is_empty());
        let p = segment_scenes(&tl, &SegmenterConfig::default()).unwrap();
        assert_eq!(p.scenes(), vec![0..1]);
    }

    #[test]
    fn identical_frames_form_one_scene() {
        let tl = from_descriptors(vec![vec![0.3, -1.0, 2.0]; 9]);
        let sims = frame_similarities(&tl, DescriptorMode::Stored).unwrap();
        assert!(sims.iter().all(|&s| (s - 1.0).abs() < 1e-12));
        let cfg = SegmenterConfig { tau: 0.999, ..SegmenterConfig::default() };
        assert_eq!(segment_scenes(&tl, &cfg).unwrap().scene_count(), 1);
    }

    #[test]
    fn zero_descriptor_is_degenerate() {
        let tl = from_descriptors(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(
            segment_scenes(&tl, &SegmenterConfig::default()),
            Err(TdcError::Degenerate(_))
        ));
    }

    #[test]
    fn cap_keeps_lowest_with_earlier_ties() {
        let sims = [0.5, 0.2, 0.2, 0.9, 0.1];
        let cfg = SegmenterConfig { max_scenes: 3, tau: 0.85, ..SegmenterConfig::default() };
        // lowest: idx4 (0.1), then tie 0.2 at idx1 and idx2, earlier wins.
        assert_eq!(select_cuts(&sims, &cfg), vec![2, 5]);
        let cfg = SegmenterConfig { max_scenes: 1, ..cfg };
        assert!(select_cuts(&sims, &cfg).is_empty());
    }

    #[test]
    fn partition_rejects_bad_cuts() {
        assert!(ScenePartition::new(5, vec![0]).is_err());
        assert!(ScenePartition::new(5, vec![5]).is_err());
        assert!(ScenePartition::new(5, vec![3, 2]).is_err());
        assert_eq!(ScenePartition::new(5, vec![2, 4]).unwrap().scenes(), vec![0..2, 2..4, 4..5]);
    }

    #[test]
    fn pooled_mode_uses_visual_means() {
        let tl = VideoTimeline::new(
            vec![
                Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap(),
                Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap(),
            ],
            vec![Matrix::zeros(0, 2); 2],
            vec![vec![1.0, 1.0]; 2],
        )
        .unwrap();
        let stored = frame_similarities(&tl, DescriptorMode::Stored).unwrap();
        assert!((stored[0] - 1.0).abs() < 1e-12);
        assert_eq!(frame_similarities(&tl, DescriptorMode::Pooled).unwrap(), vec![0.0]);
    }
}
