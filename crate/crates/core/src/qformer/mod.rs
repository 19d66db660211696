//! Query transformer compressor.
//!
//! `K` query tokens attend over the projected visual and audio tokens of one
//! frame. Each layer is a pre-norm residual stack of
//!
//! 1. self-attention over `[queries ; text embeddings]` (queries only when
//!    text conditioning is off),
//! 2. cross-attention from the query rows to `[visual·P_v ; audio·P_a]`,
//! 3. a GELU feed-forward block over every row.
//!
//! A final layer norm is applied to the query rows, which form the output.
//! Key/value tokens carry no positional encoding, so the output is invariant
//! to any joint reordering of the frame's tokens.

mod backward;
mod checkpoint;
mod forward;
mod gradcheck;
mod params;
mod train;

use serde::{Deserialize, Serialize};

pub use backward::{backward, backward_with_queries, compress_backward};
pub use checkpoint::{decode_tdcp, encode_tdcp, load_checkpoint, save_checkpoint, TDCP_MAGIC, TDCP_VERSION};
pub use forward::{attention, build_queries, compress, forward, forward_traced, AttentionCache, ForwardTrace};
pub use gradcheck::{grad_check, grad_check_with_hook, GradCheckReport, TensorCheck, GRAD_CHECK_TOLERANCE};
pub use params::{
    init_params, AttentionParams, FeedForwardParams, GradientBundle, LayerParams, NormParams,
    QFormerParams,
};
pub use train::{reconstruction_loss, train_step, TrainExample};

use crate::error::{Result, TdcError};
use crate::timeline::{DEFAULT_DIM, VOCAB_SIZE};

/// Number of query tokens per compressed frame by default.
pub const DEFAULT_QUERIES: usize = 16;

/// How the `K` query tokens of a window are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryType {
    /// Average-pooled projected tokens of the window's static frame.
    #[default]
    AvgPool,
    /// A learned `K × D_m` tensor shared by every window.
    Learned,
}

impl std::str::FromStr for QueryType {
    type Err = TdcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avgpool" => Ok(QueryType::AvgPool),
            "learned" => Ok(QueryType::Learned),
            other => Err(TdcError::Argument(format!(
                "unknown query type {other:?} (expected avgpool or learned)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QFormerConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// FFN hidden width as a multiple of `model_dim`.
    pub ffn_mult: usize,
    pub num_queries: usize,
    pub query_type: QueryType,
    pub text_conditioning: bool,
    pub vocab: usize,
    pub visual_dim: usize,
    pub audio_dim: usize,
    pub ln_eps: f64,
    pub seed: u64,
}

impl Default for QFormerConfig {
    fn default() -> Self {
        Self {
            model_dim: 64,
            heads: 4,
            layers: 2,
            ffn_mult: 4,
            num_queries: DEFAULT_QUERIES,
            query_type: QueryType::AvgPool,
            text_conditioning: true,
            vocab: VOCAB_SIZE,
            visual_dim: DEFAULT_DIM,
            audio_dim: DEFAULT_DIM,
            ln_eps: 1e-5,
            seed: 0,
        }
    }
}

impl QFormerConfig {
    /// The small configuration used for gradient checks.
    pub fn small() -> Self {
        Self {
            model_dim: 16,
            heads: 2,
            layers: 1,
            num_queries: 4,
            visual_dim: 8,
            audio_dim: 8,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.model_dim * self.ffn_mult
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(TdcError::Argument(msg));
        if self.model_dim == 0 || self.heads == 0 {
            return fail("model_dim and heads must be positive".into());
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return fail(format!(
                "model_dim {} is not divisible by {} heads",
                self.model_dim, self.heads
            ));
        }
        if self.layers == 0 {
            return fail("at least one layer is required".into());
        }
        if self.num_queries == 0 {
            return fail("at least one query token is required".into());
        }
        if self.ffn_mult == 0 || self.vocab == 0 || self.visual_dim == 0 || self.audio_dim == 0 {
            return fail("ffn_mult, vocab and input dims must be positive".into());
        }
        if self.ln_eps.is_nan() || self.ln_eps <= 0.0 {
            return fail(format!("ln_eps must be > 0, got {}", self.ln_eps));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_dim_and_validation() {
        let cfg = QFormerConfig::default();
        assert_eq!(cfg.head_dim(), 16);
        assert_eq!(cfg.ffn_dim(), 256);
        cfg.validate().unwrap();
        let bad = QFormerConfig { heads: 5, ..cfg };
        assert!(matches!(bad.validate(), Err(TdcError::Argument(_))));
        assert!(QFormerConfig { num_queries: 0, ..cfg }.validate().is_err());
        assert!(QFormerConfig { layers: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn query_type_parses() {
        assert_eq!("avgpool".parse::<QueryType>().unwrap(), QueryType::AvgPool);
        assert_eq!("learned".parse::<QueryType>().unwrap(), QueryType::Learned);
        assert!("mean".parse::<QueryType>().is_err());
    }
}
