//! Central finite-difference check of [`compress_backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compress, compress_backward, init_params, GradientBundle, QFormerConfig, QFormerParams};
use crate::error::Result;
use crate::numkernel::Matrix;
use crate::timeline::InstructionTokens;

/// Maximum relative error for a passing check.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-5;
const STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so entries whose true gradient
/// is ~0 are judged by absolute error at this scale.
const REL_FLOOR: f64 = 1e-6;

const STATIC_TOKENS: usize = 12;
const VISUAL_TOKENS: usize = 12;
const AUDIO_TOKENS: usize = 6;
const TEXT_TOKENS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub parameters: usize,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn failing(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed)
    }
}

struct Problem {
    params: QFormerParams,
    static_visual: Matrix,
    visual: Matrix,
    audio: Matrix,
    text: InstructionTokens,
    upstream: Matrix,
}

impl Problem {
    fn loss(&self, params: &QFormerParams) -> Result<f64> {
        let out = compress(params, &self.static_visual, &self.visual, &self.audio, &self.text)?;
        out.frobenius_dot(&self.upstream)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    Matrix::new(rows, cols, data).expect("sized")
}

fn problem(cfg: &QFormerConfig, seed: u64) -> Result<Problem> {
    let cfg = QFormerConfig { seed, ..*cfg };
    let mut params = init_params(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    // Move norms and biases off their identity/zero init so their gradients
    // are exercised in a generic regime.
    for (name, m) in params.tensors_mut() {
        let jitter = name.ends_with("gamma") || name.ends_with("beta") || name.ends_with(".b1") || name.ends_with(".b2");
        if jitter {
            for v in m.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += 0.1 * z;
            }
        }
    }
    let text = InstructionTokens::from_ids(
        (0..TEXT_TOKENS)
            .map(|_| rng.gen_range(0..cfg.vocab) as u16)
            .collect(),
    )
    .expect("ids drawn inside vocab");
    Ok(Problem {
        static_visual: gaussian(&mut rng, STATIC_TOKENS.max(cfg.num_queries), cfg.visual_dim, 1.0),
        visual: gaussian(&mut rng, VISUAL_TOKENS, cfg.visual_dim, 1.0),
        audio: gaussian(&mut rng, AUDIO_TOKENS, cfg.audio_dim, 1.0),
        upstream: gaussian(&mut rng, cfg.num_queries, cfg.model_dim, 1.0),
        text,
        params,
    })
}

fn check_tensor(
    problem: &Problem,
    index: usize,
    name: &str,
    analytic: &Matrix,
) -> Result<TensorCheck> {
    let mut params = problem.params.clone();
    let len = analytic.len();
    let cols = analytic.cols();
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut entries = 0;
    for i in 0..len {
        let analytic_value = analytic.data()[i];
        // Embedding rows not referenced by the text never enter the loss.
        if name == "text_embed" && !problem.text.ids().contains(&((i / cols) as u16)) {
            if analytic_value != 0.0 {
                max_abs = max_abs.max(analytic_value.abs());
                max_rel = f64::INFINITY;
            }
            continue;
        }
        let original = {
            let mut tensors = params.tensors_mut();
            let m = &mut tensors[index].1;
            let v = m.data()[i];
            m.data_mut()[i] = v + STEP;
            v
        };
        let plus = problem.loss(&params)?;
        params.tensors_mut()[index].1.data_mut()[i] = original - STEP;
        let minus = problem.loss(&params)?;
        params.tensors_mut()[index].1.data_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * STEP);
        let abs = (analytic_value - numeric).abs();
        let rel = abs / analytic_value.abs().max(numeric.abs()).max(REL_FLOOR);
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
        entries += 1;
    }
    Ok(TensorCheck {
        name: name.to_string(),
        entries,
        max_abs_error: max_abs,
        max_rel_error: max_rel,
        passed: max_rel <= GRAD_CHECK_TOLERANCE,
    })
}

/// Runs the check with a hook that may tamper with the analytic gradients.
pub fn grad_check_with_hook(
    cfg: &QFormerConfig,
    seed: u64,
    hook: impl FnOnce(&mut GradientBundle),
) -> Result<GradCheckReport> {
    let problem = problem(cfg, seed)?;
    let mut analytic = compress_backward(
        &problem.params,
        &problem.static_visual,
        &problem.visual,
        &problem.audio,
        &problem.text,
        &problem.upstream,
    )?;
    hook(&mut analytic);

    let named: Vec<(String, &Matrix)> = analytic.tensors();
    let tensors = named
        .par_iter()
        .enumerate()
        .map(|(i, (name, grad))| check_tensor(&problem, i, name, grad))
        .collect::<Result<Vec<_>>>()?;
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        seed,
        parameters: problem.params.parameter_count(),
        tolerance: GRAD_CHECK_TOLERANCE,
        max_rel_error,
        passed: tensors.iter().all(|t| t.passed),
        tensors,
    })
}

pub fn grad_check(cfg: &QFormerConfig, seed: u64) -> Result<GradCheckReport> {
    grad_check_with_hook(cfg, seed, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qformer::QueryType;

    #[test]
    fn small_config_passes() {
        let report = grad_check(&QFormerConfig::small(), 0).unwrap();
        assert!(report.passed, "{report:#?}");
        assert!(report.max_rel_error <= GRAD_CHECK_TOLERANCE);
    }

    #[test]
    fn learned_queries_pass_too() {
        let cfg = QFormerConfig { query_type: QueryType::Learned, ..QFormerConfig::small() };
        let report = grad_check(&cfg, 3).unwrap();
        assert!(report.passed, "{report:#?}");
    }

    #[test]
    fn corrupted_gradient_is_isolated() {
        let report = grad_check_with_hook(&QFormerConfig::small(), 1, |g| {
            for (name, m) in g.tensors_mut() {
                if name == "layers.0.cross_attn.wk" {
                    m.data_mut()[3] += 0.5;
                }
            }
        })
        .unwrap();
        assert!(!report.passed);
        let failing: Vec<&str> = report.failing().map(|t| t.name.as_str()).collect();
        assert_eq!(failing, vec!["layers.0.cross_attn.wk"]);
    }

    #[test]
    fn report_is_deterministic() {
        let a = grad_check(&QFormerConfig::small(), 2).unwrap();
        let b = grad_check(&QFormerConfig::small(), 2).unwrap();
        assert_eq!(a, b);
    }
}
