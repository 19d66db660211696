use super::{AttentionParams, FeedForwardParams, NormParams, QFormerParams, QueryType};
use crate::error::{Result, TdcError};
use crate::numkernel::{
    gelu, layer_norm_cached, matmul, matmul_nt, mean_pool_groups, softmax_rows, LayerNormCache,
    Matrix,
};
use crate::timeline::InstructionTokens;

/// Intermediate values of one multi-head attention call.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub queries: Matrix,
    pub keys: Matrix,
    pub values: Matrix,
    /// Per-head attention weights, each `rows(q) × rows(kv)`.
    pub probs: Vec<Matrix>,
    /// Concatenated per-head outputs before the output projection.
    pub heads: Matrix,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub(crate) input: Matrix,
    pub(crate) self_ln: LayerNormCache,
    pub(crate) self_in: Matrix,
    pub(crate) self_attn: AttentionCache,
    pub(crate) cross_ln: LayerNormCache,
    pub(crate) cross_in: Matrix,
    pub(crate) cross_attn: AttentionCache,
    pub(crate) ffn_ln: LayerNormCache,
    pub(crate) ffn_in: Matrix,
    pub(crate) ffn_pre: Matrix,
    pub(crate) ffn_act: Matrix,
}

/// Everything the backward pass needs, plus the output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) kv: Matrix,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) final_ln: LayerNormCache,
    output: Matrix,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }

    /// Projected key/value tokens `[visual·P_v ; audio·P_a]`.
    pub fn key_values(&self) -> &Matrix {
        &self.kv
    }

    pub fn cross_attention(&self, layer: usize) -> &AttentionCache {
        &self.layers[layer].cross_attn
    }

    pub fn self_attention(&self, layer: usize) -> &AttentionCache {
        &self.layers[layer].self_attn
    }
}

/// Multi-head scaled dot-product attention, no biases: rows of `q_in` attend
/// over rows of `kv_in`.
pub fn attention(
    p: &AttentionParams,
    heads: usize,
    q_in: &Matrix,
    kv_in: &Matrix,
) -> Result<(Matrix, AttentionCache)> {
    let q = matmul(q_in, &p.wq)?;
    let k = matmul(kv_in, &p.wk)?;
    let v = matmul(kv_in, &p.wv)?;
    let dim = q.cols();
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut concat = Matrix::zeros(q.rows(), dim);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        let qh = q.slice_cols(cols.clone());
        let kh = k.slice_cols(cols.clone());
        let vh = v.slice_cols(cols);
        let a = softmax_rows(&matmul_nt(&qh, &kh)?.scale(scale));
        concat.set_cols(h * hd, &matmul(&a, &vh)?);
        probs.push(a);
    }
    let out = matmul(&concat, &p.wo)?;
    Ok((
        out,
        AttentionCache {
            queries: q,
            keys: k,
            values: v,
            probs,
            heads: concat,
        },
    ))
}

fn norm(x: &Matrix, p: &NormParams, eps: f64) -> Result<(Matrix, LayerNormCache)> {
    layer_norm_cached(x, p.gamma.data(), p.beta.data(), eps)
}

fn feed_forward(p: &FeedForwardParams, x: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
    let pre = matmul(x, &p.w1)?.add_row_broadcast(&p.b1)?;
    let act = gelu(&pre);
    let out = matmul(&act, &p.w2)?.add_row_broadcast(&p.b2)?;
    Ok((out, pre, act))
}

fn check_inputs(
    params: &QFormerParams,
    queries: &Matrix,
    visual: &Matrix,
    audio: &Matrix,
) -> Result<()> {
    let cfg = &params.config;
    if queries.shape() != (cfg.num_queries, cfg.model_dim) {
        return Err(TdcError::Shape(format!(
            "queries are {}x{}, expected {}x{}",
            queries.rows(),
            queries.cols(),
            cfg.num_queries,
            cfg.model_dim
        )));
    }
    if visual.cols() != cfg.visual_dim {
        return Err(TdcError::Shape(format!(
            "visual tokens have dim {}, expected {}",
            visual.cols(),
            cfg.visual_dim
        )));
    }
    if audio.cols() != cfg.audio_dim {
        return Err(TdcError::Shape(format!(
            "audio tokens have dim {}, expected {}",
            audio.cols(),
            cfg.audio_dim
        )));
    }
    if visual.rows() + audio.rows() == 0 {
        return Err(TdcError::Shape("frame has no visual or audio tokens".into()));
    }
    Ok(())
}

/// Text embedding rows fed alongside the queries; empty when conditioning is off.
pub(crate) fn text_rows(params: &QFormerParams, text: &InstructionTokens) -> Result<Matrix> {
    let cfg = &params.config;
    if !cfg.text_conditioning || text.is_empty() {
        return Ok(Matrix::zeros(0, cfg.model_dim));
    }
    let mut out = Matrix::zeros(text.len(), cfg.model_dim);
    for (r, &id) in text.ids().iter().enumerate() {
        let id = id as usize;
        if id >= cfg.vocab {
            return Err(TdcError::Argument(format!("token id {id} outside vocab {}", cfg.vocab)));
        }
        out.row_mut(r).copy_from_slice(params.text_embed.row(id));
    }
    Ok(out)
}

pub fn forward_traced(
    params: &QFormerParams,
    queries: &Matrix,
    visual: &Matrix,
    audio: &Matrix,
    text: &InstructionTokens,
) -> Result<ForwardTrace> {
    check_inputs(params, queries, visual, audio)?;
    let cfg = &params.config;
    let k = cfg.num_queries;
    let eps = cfg.ln_eps;

    let kv = Matrix::vstack(&[
        &matmul(visual, &params.proj_visual)?,
        &matmul(audio, &params.proj_audio)?,
    ])?;
    let mut x = Matrix::vstack(&[queries, &text_rows(params, text)?])?;

    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let input = x.clone();

        let (self_in, self_ln) = norm(&x, &lp.self_norm, eps)?;
        let (sa, self_attn) = attention(&lp.self_attn, cfg.heads, &self_in, &self_in)?;
        x.axpy(1.0, &sa)?;

        let (cross_in, cross_ln) = norm(&x.slice_rows(0..k), &lp.cross_norm, eps)?;
        let (ca, cross_attn) = attention(&lp.cross_attn, cfg.heads, &cross_in, &kv)?;
        for r in 0..k {
            for (v, &d) in x.row_mut(r).iter_mut().zip(ca.row(r)) {
                *v += d;
            }
        }

        let (ffn_in, ffn_ln) = norm(&x, &lp.ffn_norm, eps)?;
        let (ff, ffn_pre, ffn_act) = feed_forward(&lp.ffn, &ffn_in)?;
        x.axpy(1.0, &ff)?;

        layers.push(LayerCache {
            input,
            self_ln,
            self_in,
            self_attn,
            cross_ln,
            cross_in,
            cross_attn,
            ffn_ln,
            ffn_in,
            ffn_pre,
            ffn_act,
        });
    }

    let (output, final_ln) = norm(&x.slice_rows(0..k), &params.final_norm, eps)?;
    if !output.all_finite() {
        return Err(TdcError::Numeric("non-finite compressor output".into()));
    }
    Ok(ForwardTrace {
        kv,
        layers,
        final_ln,
        output,
    })
}

/// Compresses one frame's tokens into `K × D_m` using the given queries.
pub fn forward(
    params: &QFormerParams,
    queries: &Matrix,
    visual: &Matrix,
    audio: &Matrix,
    text: &InstructionTokens,
) -> Result<Matrix> {
    forward_traced(params, queries, visual, audio, text).map(ForwardTrace::into_output)
}

/// Query tokens for a window: pooled projected static tokens, or the learned tensor.
pub fn build_queries(params: &QFormerParams, static_visual: &Matrix) -> Result<Matrix> {
    let cfg = &params.config;
    match cfg.query_type {
        QueryType::Learned => Ok(params.learned_queries.clone()),
        QueryType::AvgPool => {
            if cfg.num_queries > static_visual.rows() {
                return Err(TdcError::Argument(format!(
                    "cannot pool {} static tokens into {} queries",
                    static_visual.rows(),
                    cfg.num_queries
                )));
            }
            let projected = matmul(static_visual, &params.proj_visual)?;
            mean_pool_groups(&projected, cfg.num_queries)
        }
    }
}

/// [`build_queries`] from the static frame followed by [`forward`] on a frame.
pub fn compress(
    params: &QFormerParams,
    static_visual: &Matrix,
    visual: &Matrix,
    audio: &Matrix,
    text: &InstructionTokens,
) -> Result<Matrix> {
    let queries = build_queries(params, static_visual)?;
    forward(params, &queries, visual, audio, text)
}
