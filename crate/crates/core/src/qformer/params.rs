use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::QFormerConfig;
use crate::error::{Result, TdcError};
use crate::numkernel::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gamma: Matrix,
    pub beta: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub self_norm: NormParams,
    pub self_attn: AttentionParams,
    pub cross_norm: NormParams,
    pub cross_attn: AttentionParams,
    pub ffn_norm: NormParams,
    pub ffn: FeedForwardParams,
}

/// Every learnable tensor of the compressor, plus the config it was built for.
///
/// Linear maps are stored input-major (`x · W`). `readout` is the linear head
/// used only by the reconstruction objective in [`super::train_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct QFormerParams {
    pub config: QFormerConfig,
    pub proj_visual: Matrix,
    pub proj_audio: Matrix,
    pub layers: Vec<LayerParams>,
    pub final_norm: NormParams,
    pub text_embed: Matrix,
    pub learned_queries: Matrix,
    pub sep: Matrix,
    pub readout: Matrix,
}

impl NormParams {
    fn identity(dim: usize) -> Self {
        Self {
            gamma: Matrix::filled(1, dim, 1.0),
            beta: Matrix::zeros(1, dim),
        }
    }

    fn push<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((format!("{prefix}.gamma"), &self.gamma));
        out.push((format!("{prefix}.beta"), &self.beta));
    }

    fn push_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push((format!("{prefix}.gamma"), &mut self.gamma));
        out.push((format!("{prefix}.beta"), &mut self.beta));
    }
}

impl AttentionParams {
    fn push<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((format!("{prefix}.wq"), &self.wq));
        out.push((format!("{prefix}.wk"), &self.wk));
        out.push((format!("{prefix}.wv"), &self.wv));
        out.push((format!("{prefix}.wo"), &self.wo));
    }

    fn push_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push((format!("{prefix}.wq"), &mut self.wq));
        out.push((format!("{prefix}.wk"), &mut self.wk));
        out.push((format!("{prefix}.wv"), &mut self.wv));
        out.push((format!("{prefix}.wo"), &mut self.wo));
    }
}

impl FeedForwardParams {
    fn push<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((format!("{prefix}.w1"), &self.w1));
        out.push((format!("{prefix}.b1"), &self.b1));
        out.push((format!("{prefix}.w2"), &self.w2));
        out.push((format!("{prefix}.b2"), &self.b2));
    }

    fn push_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push((format!("{prefix}.w1"), &mut self.w1));
        out.push((format!("{prefix}.b1"), &mut self.b1));
        out.push((format!("{prefix}.w2"), &mut self.w2));
        out.push((format!("{prefix}.b2"), &mut self.b2));
    }
}

impl LayerParams {
    fn push<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        self.self_norm.push(&format!("{prefix}.self_norm"), out);
        self.self_attn.push(&format!("{prefix}.self_attn"), out);
        self.cross_norm.push(&format!("{prefix}.cross_norm"), out);
        self.cross_attn.push(&format!("{prefix}.cross_attn"), out);
        self.ffn_norm.push(&format!("{prefix}.ffn_norm"), out);
        self.ffn.push(&format!("{prefix}.ffn"), out);
    }

    fn push_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        self.self_norm.push_mut(&format!("{prefix}.self_norm"), out);
        self.self_attn.push_mut(&format!("{prefix}.self_attn"), out);
        self.cross_norm.push_mut(&format!("{prefix}.cross_norm"), out);
        self.cross_attn.push_mut(&format!("{prefix}.cross_attn"), out);
        self.ffn_norm.push_mut(&format!("{prefix}.ffn_norm"), out);
        self.ffn.push_mut(&format!("{prefix}.ffn"), out);
    }
}

impl QFormerParams {
    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("proj_visual".to_string(), &self.proj_visual),
            ("proj_audio".to_string(), &self.proj_audio),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            layer.push(&format!("layers.{i}"), &mut out);
        }
        self.final_norm.push("final_norm", &mut out);
        out.push(("text_embed".into(), &self.text_embed));
        out.push(("learned_queries".into(), &self.learned_queries));
        out.push(("sep".into(), &self.sep));
        out.push(("readout".into(), &self.readout));
        out
    }

    /// Same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = vec![
            ("proj_visual".to_string(), &mut self.proj_visual),
            ("proj_audio".to_string(), &mut self.proj_audio),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.push_mut(&format!("layers.{i}"), &mut out);
        }
        self.final_norm.push_mut("final_norm", &mut out);
        out.push(("text_embed".into(), &mut self.text_embed));
        out.push(("learned_queries".into(), &mut self.learned_queries));
        out.push(("sep".into(), &mut self.sep));
        out.push(("readout".into(), &mut self.readout));
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors().into_iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// All-zero tensors with the same shapes and config.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, m) in out.tensors_mut() {
            m.data_mut().fill(0.0);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.all_finite())
    }

    /// All-zero parameters for `cfg` (norm gammas included).
    pub(crate) fn zeroed(cfg: &QFormerConfig) -> Self {
        let mut p = init_unchecked(cfg, |_, _, _| 0.0);
        p.config = *cfg;
        p.zeros_like()
    }

    /// Shapes every tensor must have under `cfg`.
    pub fn expected_shapes(cfg: &QFormerConfig) -> Vec<(String, (usize, usize))> {
        init_unchecked(cfg, |_, _, _| 0.0)
            .tensors()
            .into_iter()
            .map(|(n, m)| (n, m.shape()))
            .collect()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let expected = Self::expected_shapes(&self.config);
        let actual = self.tensors();
        if expected.len() != actual.len() {
            return Err(TdcError::Shape(format!(
                "{} tensors, config implies {}",
                actual.len(),
                expected.len()
            )));
        }
        for ((en, es), (an, am)) in expected.iter().zip(&actual) {
            if en != an || *es != am.shape() {
                return Err(TdcError::Shape(format!(
                    "tensor {an} is {:?}, expected {en} {es:?}",
                    am.shape()
                )));
            }
        }
        Ok(())
    }
}

fn init_unchecked(cfg: &QFormerConfig, mut draw: impl FnMut(usize, usize, f64) -> f64) -> QFormerParams {
    let d = cfg.model_dim;
    let f = cfg.ffn_dim();
    let mut gauss = |rows: usize, cols: usize, fan_in: usize| {
        let scale = 1.0 / (fan_in as f64).sqrt();
        let data = (0..rows * cols).map(|i| draw(i / cols, i % cols, scale)).collect();
        Matrix::new(rows, cols, data).expect("sized")
    };
    let proj_visual = gauss(cfg.visual_dim, d, cfg.visual_dim);
    let proj_audio = gauss(cfg.audio_dim, d, cfg.audio_dim);
    let mut layers = Vec::with_capacity(cfg.layers);
    for _ in 0..cfg.layers {
        let mut attn = || AttentionParams {
            wq: gauss(d, d, d),
            wk: gauss(d, d, d),
            wv: gauss(d, d, d),
            wo: gauss(d, d, d),
        };
        let self_attn = attn();
        let cross_attn = attn();
        let ffn = FeedForwardParams {
            w1: gauss(d, f, d),
            b1: Matrix::zeros(1, f),
            w2: gauss(f, d, f),
            b2: Matrix::zeros(1, d),
        };
        layers.push(LayerParams {
            self_norm: NormParams::identity(d),
            self_attn,
            cross_norm: NormParams::identity(d),
            cross_attn,
            ffn_norm: NormParams::identity(d),
            ffn,
        });
    }
    // Embedding-like tensors have no fan-in; they use unit variance.
    let text_embed = gauss(cfg.vocab, d, 1);
    let learned_queries = gauss(cfg.num_queries, d, 1);
    let sep = gauss(1, d, 1);
    let readout = gauss(d, cfg.visual_dim, d);
    QFormerParams {
        config: *cfg,
        proj_visual,
        proj_audio,
        layers,
        final_norm: NormParams::identity(d),
        text_embed,
        learned_queries,
        sep,
        readout,
    }
}

/// Seeded Gaussian initialization scaled by `1/sqrt(fan_in)`; norms start at
/// identity and biases at zero.
pub fn init_params(cfg: &QFormerConfig) -> Result<QFormerParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(init_unchecked(cfg, |_, _, scale| {
        let z: f64 = StandardNormal.sample(&mut rng);
        // Checkpoints hold f32, so start from values they represent exactly.
        (scale * z) as f32 as f64
    }))
}

/// Gradients shaped like [`QFormerParams`], one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    grads: QFormerParams,
}

impl GradientBundle {
    pub fn zeros_for(params: &QFormerParams) -> Self {
        Self {
            grads: params.zeros_like(),
        }
    }

    pub(crate) fn inner_mut(&mut self) -> &mut QFormerParams {
        &mut self.grads
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        self.grads.tensors()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        self.grads.tensors_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.grads.tensor(name)
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.data().iter().all(|&v| v == 0.0))
    }

    pub fn all_finite(&self) -> bool {
        self.grads.all_finite()
    }

    /// `self += alpha * other`.
    pub fn accumulate(&mut self, alpha: f64, other: &GradientBundle) {
        for ((_, a), (_, b)) in self.grads.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(alpha, b).expect("bundles share shapes");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = QFormerConfig::small();
        let a = init_params(&cfg).unwrap();
        let b = init_params(&cfg).unwrap();
        assert_eq!(a, b);
        a.check_shapes().unwrap();
        let c = init_params(&QFormerConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_bad_heads() {
        let cfg = QFormerConfig { model_dim: 64, heads: 5, ..QFormerConfig::default() };
        assert!(matches!(init_params(&cfg), Err(TdcError::Argument(_))));
    }

    #[test]
    fn init_scale_follows_fan_in() {
        let cfg = QFormerConfig::default();
        let p = init_params(&cfg).unwrap();
        let w = &p.layers[0].ffn.w2;
        let var = w.data().iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let expected = 1.0 / cfg.ffn_dim() as f64;
        assert!((var / expected - 1.0).abs() < 0.1, "variance {var} vs {expected}");
    }

    #[test]
    fn tensor_names_are_unique_and_ordered() {
        let p = init_params(&QFormerConfig::default()).unwrap();
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert_eq!(names[0], "proj_visual");
        assert!(names.contains(&"layers.1.cross_attn.wv".to_string()));
        let mut q = p.clone();
        let mut_names: Vec<String> = q.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(mut_names, names);
    }
}
