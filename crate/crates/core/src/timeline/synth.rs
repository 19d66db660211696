//! Deterministic synthetic encoder used in place of pretrained vision and
//! audio models.
//!
//! Each planted scene gets its own descriptor center, visual/audio mean and
//! per-token pattern. Frames inside a scene share those and differ by a
//! per-frame drift plus isotropic noise, so consecutive descriptors are
//! nearly parallel inside a scene and far apart across a planted cut.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{VideoTimeline, DEFAULT_AUDIO_TOKENS, DEFAULT_DIM, DEFAULT_VISUAL_TOKENS};
use crate::error::{Result, TdcError};
use crate::numkernel::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub frames: usize,
    /// Planted cut indices; frame `c` starts a new scene.
    pub boundaries: Vec<usize>,
    /// Optional per-scene descriptor centers (`boundaries.len() + 1` of them).
    pub centers: Option<Vec<Vec<f64>>>,
    /// Standard deviation of the per-entry noise.
    pub noise: f64,
    pub visual_tokens: usize,
    pub audio_tokens: usize,
    pub visual_dim: usize,
    pub audio_dim: usize,
    pub descriptor_dim: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 60,
            boundaries: Vec::new(),
            centers: None,
            noise: 0.1,
            visual_tokens: DEFAULT_VISUAL_TOKENS,
            audio_tokens: DEFAULT_AUDIO_TOKENS,
            visual_dim: DEFAULT_DIM,
            audio_dim: DEFAULT_DIM,
            descriptor_dim: DEFAULT_DIM,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(TdcError::Argument("frames must be at least 1".into()));
        }
        let mut prev = 0;
        for &b in &self.boundaries {
            if b <= prev || b >= self.frames {
                return Err(TdcError::Argument(format!(
                    "boundary {b} must be strictly increasing within (0, {})",
                    self.frames
                )));
            }
            prev = b;
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(TdcError::Argument(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        if self.visual_tokens == 0 || self.visual_dim == 0 || self.audio_dim == 0 || self.descriptor_dim == 0 {
            return Err(TdcError::Argument(
                "visual tokens and all dimensions must be positive".into(),
            ));
        }
        if let Some(centers) = &self.centers {
            if centers.len() != self.boundaries.len() + 1 {
                return Err(TdcError::Argument(format!(
                    "{} centers for {} scenes",
                    centers.len(),
                    self.boundaries.len() + 1
                )));
            }
            if let Some(c) = centers.iter().find(|c| c.len() != self.descriptor_dim) {
                return Err(TdcError::Argument(format!(
                    "center of length {} for descriptor dim {}",
                    c.len(),
                    self.descriptor_dim
                )));
            }
        }
        Ok(())
    }
}

struct SceneStyle {
    center: Vec<f64>,
    visual_mean: Vec<f64>,
    visual_pattern: Matrix,
    audio_mean: Vec<f64>,
    audio_pattern: Matrix,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn to_f32_grid(v: f64) -> f64 {
    v as f32 as f64
}

fn tokens(
    rng: &mut ChaCha8Rng,
    mean: &[f64],
    drift: &[f64],
    pattern: &Matrix,
    noise: f64,
) -> Matrix {
    let (rows, cols) = pattern.shape();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let eps: f64 = StandardNormal.sample(rng);
            data.push(to_f32_grid(mean[c] + drift[c] + pattern.get(r, c) + noise * eps));
        }
    }
    Matrix::new(rows, cols, data).expect("sized above")
}

/// Generates a timeline; a pure function of `spec`.
pub fn synth_generate(spec: &SynthSpec) -> Result<VideoTimeline> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scene_count = spec.boundaries.len() + 1;

    let styles: Vec<SceneStyle> = (0..scene_count)
        .map(|s| {
            let center = match &spec.centers {
                Some(c) => c[s].clone(),
                None => gaussian(&mut rng, spec.descriptor_dim, 1.0),
            };
            let visual_mean = gaussian(&mut rng, spec.visual_dim, 1.0);
            let visual_pattern = Matrix::new(
                spec.visual_tokens,
                spec.visual_dim,
                gaussian(&mut rng, spec.visual_tokens * spec.visual_dim, 0.5),
            )
            .expect("sized");
            let audio_mean = gaussian(&mut rng, spec.audio_dim, 1.0);
            let audio_pattern = Matrix::new(
                spec.audio_tokens,
                spec.audio_dim,
                gaussian(&mut rng, spec.audio_tokens * spec.audio_dim, 0.5),
            )
            .expect("sized");
            SceneStyle {
                center,
                visual_mean,
                visual_pattern,
                audio_mean,
                audio_pattern,
            }
        })
        .collect();

    let mut visual = Vec::with_capacity(spec.frames);
    let mut audio = Vec::with_capacity(spec.frames);
    let mut descriptors = Vec::with_capacity(spec.frames);
    let mut scene = 0;
    for t in 0..spec.frames {
        while scene < spec.boundaries.len() && t >= spec.boundaries[scene] {
            scene += 1;
        }
        let style = &styles[scene];
        let visual_drift = gaussian(&mut rng, spec.visual_dim, 0.5);
        let audio_drift = gaussian(&mut rng, spec.audio_dim, 0.5);
        visual.push(tokens(
            &mut rng,
            &style.visual_mean,
            &visual_drift,
            &style.visual_pattern,
            spec.noise,
        ));
        audio.push(tokens(
            &mut rng,
            &style.audio_mean,
            &audio_drift,
            &style.audio_pattern,
            spec.noise,
        ));
        let desc = style
            .center
            .iter()
            .map(|&c| {
                let eps: f64 = StandardNormal.sample(&mut rng);
                to_f32_grid(c + spec.noise * eps)
            })
            .collect();
        descriptors.push(desc);
    }
    VideoTimeline::new(visual, audio, descriptors)
}
