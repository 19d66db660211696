//! Analytic gradients of `<upstream, output>` with respect to every tensor.

use super::forward::{build_queries, forward_traced, text_rows, AttentionCache, ForwardTrace};
use super::{AttentionParams, GradientBundle, NormParams, QFormerParams, QueryType};
use crate::error::{Result, TdcError};
use crate::numkernel::{
    gelu_grad_scalar, group_sizes, layer_norm_backward, matmul, matmul_nt, matmul_tn,
    LayerNormCache, Matrix,
};
use crate::timeline::InstructionTokens;

fn acc(target: &mut Matrix, delta: &Matrix) {
    target.axpy(1.0, delta).expect("gradient shapes match parameters");
}

fn norm_backward(
    upstream: &Matrix,
    p: &NormParams,
    cache: &LayerNormCache,
    g: &mut NormParams,
) -> Matrix {
    let (dx, dgamma, dbeta) = layer_norm_backward(upstream, p.gamma.data(), cache);
    for (a, b) in g.gamma.data_mut().iter_mut().zip(dgamma) {
        *a += b;
    }
    for (a, b) in g.beta.data_mut().iter_mut().zip(dbeta) {
        *a += b;
    }
    dx
}

/// Returns `(d q_in, d kv_in)` and accumulates weight gradients into `g`.
fn attention_backward(
    p: &AttentionParams,
    heads: usize,
    q_in: &Matrix,
    kv_in: &Matrix,
    cache: &AttentionCache,
    dout: &Matrix,
    g: &mut AttentionParams,
) -> Result<(Matrix, Matrix)> {
    acc(&mut g.wo, &matmul_tn(&cache.heads, dout)?);
    let dconcat = matmul_nt(dout, &p.wo)?;

    let dim = cache.queries.cols();
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dq = Matrix::zeros(cache.queries.rows(), dim);
    let mut dk = Matrix::zeros(cache.keys.rows(), dim);
    let mut dv = Matrix::zeros(cache.values.rows(), dim);
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        let a = &cache.probs[h];
        let d_head = dconcat.slice_cols(cols.clone());
        let vh = cache.values.slice_cols(cols.clone());
        let qh = cache.queries.slice_cols(cols.clone());
        let kh = cache.keys.slice_cols(cols);

        let da = matmul_nt(&d_head, &vh)?;
        dv.set_cols(h * hd, &matmul_tn(a, &d_head)?);

        // Softmax Jacobian, row by row.
        let mut ds = Matrix::zeros(a.rows(), a.cols());
        for r in 0..a.rows() {
            let arow = a.row(r);
            let darow = da.row(r);
            let dot: f64 = arow.iter().zip(darow).map(|(x, y)| x * y).sum();
            for (o, (&ai, &dai)) in ds.row_mut(r).iter_mut().zip(arow.iter().zip(darow)) {
                *o = ai * (dai - dot) * scale;
            }
        }
        dq.set_cols(h * hd, &matmul(&ds, &kh)?);
        dk.set_cols(h * hd, &matmul_tn(&ds, &qh)?);
    }

    acc(&mut g.wq, &matmul_tn(q_in, &dq)?);
    acc(&mut g.wk, &matmul_tn(kv_in, &dk)?);
    acc(&mut g.wv, &matmul_tn(kv_in, &dv)?);
    let dq_in = matmul_nt(&dq, &p.wq)?;
    let mut dkv_in = matmul_nt(&dk, &p.wk)?;
    acc(&mut dkv_in, &matmul_nt(&dv, &p.wv)?);
    Ok((dq_in, dkv_in))
}

fn run_backward(
    params: &QFormerParams,
    trace: &ForwardTrace,
    visual: &Matrix,
    audio: &Matrix,
    text: &InstructionTokens,
    upstream: &Matrix,
) -> Result<(GradientBundle, Matrix)> {
    let cfg = &params.config;
    let k = cfg.num_queries;
    if upstream.shape() != (k, cfg.model_dim) {
        return Err(TdcError::Shape(format!(
            "upstream gradient is {}x{}, expected {k}x{}",
            upstream.rows(),
            upstream.cols(),
            cfg.model_dim
        )));
    }
    let mut bundle = GradientBundle::zeros_for(params);
    let g = bundle.inner_mut();

    let d_final = norm_backward(upstream, &params.final_norm, &trace.final_ln, &mut g.final_norm);
    let rows = trace.layers[0].input.rows();
    let mut dx = Matrix::zeros(rows, cfg.model_dim);
    for r in 0..k {
        dx.row_mut(r).copy_from_slice(d_final.row(r));
    }
    let mut dkv = Matrix::zeros(trace.kv.rows(), cfg.model_dim);

    for (li, (lp, cache)) in params.layers.iter().zip(&trace.layers).enumerate().rev() {
        let lg = &mut g.layers[li];

        // Feed-forward block.
        acc(&mut lg.ffn.w2, &matmul_tn(&cache.ffn_act, &dx)?);
        acc(&mut lg.ffn.b2, &dx.column_sum());
        let dact = matmul_nt(&dx, &lp.ffn.w2)?;
        let dpre = Matrix::new(
            dact.rows(),
            dact.cols(),
            dact.data()
                .iter()
                .zip(cache.ffn_pre.data())
                .map(|(d, &u)| d * gelu_grad_scalar(u))
                .collect(),
        )?;
        acc(&mut lg.ffn.w1, &matmul_tn(&cache.ffn_in, &dpre)?);
        acc(&mut lg.ffn.b1, &dpre.column_sum());
        let dffn_in = matmul_nt(&dpre, &lp.ffn.w1)?;
        let dln = norm_backward(&dffn_in, &lp.ffn_norm, &cache.ffn_ln, &mut lg.ffn_norm);
        acc(&mut dx, &dln);

        // Cross-attention on the query rows.
        let dca = dx.slice_rows(0..k);
        let (dcross_in, dkv_layer) = attention_backward(
            &lp.cross_attn,
            cfg.heads,
            &cache.cross_in,
            &trace.kv,
            &cache.cross_attn,
            &dca,
            &mut lg.cross_attn,
        )?;
        acc(&mut dkv, &dkv_layer);
        let dln = norm_backward(&dcross_in, &lp.cross_norm, &cache.cross_ln, &mut lg.cross_norm);
        for r in 0..k {
            for (v, &d) in dx.row_mut(r).iter_mut().zip(dln.row(r)) {
                *v += d;
            }
        }

        // Self-attention over queries and text.
        let (dq_in, dkv_in) = attention_backward(
            &lp.self_attn,
            cfg.heads,
            &cache.self_in,
            &cache.self_in,
            &cache.self_attn,
            &dx,
            &mut lg.self_attn,
        )?;
        let mut dself_in = dq_in;
        acc(&mut dself_in, &dkv_in);
        let dln = norm_backward(&dself_in, &lp.self_norm, &cache.self_ln, &mut lg.self_norm);
        acc(&mut dx, &dln);
    }

    let d_queries = dx.slice_rows(0..k);
    if rows > k {
        for (r, &id) in text.ids().iter().enumerate() {
            let src = dx.row(k + r).to_vec();
            for (v, d) in g.text_embed.row_mut(id as usize).iter_mut().zip(src) {
                *v += d;
            }
        }
    }

    let mv = visual.rows();
    acc(&mut g.proj_visual, &matmul_tn(visual, &dkv.slice_rows(0..mv))?);
    acc(&mut g.proj_audio, &matmul_tn(audio, &dkv.slice_rows(mv..dkv.rows()))?);

    if !bundle.all_finite() {
        return Err(TdcError::Numeric("non-finite gradient".into()));
    }
    Ok((bundle, d_queries))
}

/// Gradients with the queries treated as an external input; also returns
/// the gradient with respect to `queries`.
pub fn backward_with_queries(
    params: &QFormerParams,
    queries: &Matrix,
    visual: &Matrix,
    audio: &Matrix,
    text: &InstructionTokens,
    upstream: &Matrix,
) -> Result<(GradientBundle, Matrix)> {
    let trace = forward_traced(params, queries, visual, audio, text)?;
    debug_assert_eq!(
        trace.layers[0].input.rows(),
        params.config.num_queries + text_rows(params, text)?.rows()
    );
    run_backward(params, &trace, visual, audio, text, upstream)
}

/// Parameter gradients of `<upstream, forward(..)>`.
///
/// With learned queries the query gradient lands in `learned_queries`; with
/// pooled queries the queries are treated as given (see
/// [`compress_backward`] for the end-to-end path through the static frame).
pub fn backward(
    params: &QFormerParams,
    queries: &Matrix,
    visual: &Matrix,
    audio: &Matrix,
    text: &InstructionTokens,
    upstream: &Matrix,
) -> Result<GradientBundle> {
    let (mut bundle, d_queries) =
        backward_with_queries(params, queries, visual, audio, text, upstream)?;
    if params.config.query_type == QueryType::Learned {
        acc(&mut bundle.inner_mut().learned_queries, &d_queries);
    }
    Ok(bundle)
}

/// Gradients of `<upstream, compress(..)>`, including the path from the
/// static frame through the pooled queries.
pub fn compress_backward(
    params: &QFormerParams,
    static_visual: &Matrix,
    visual: &Matrix,
    audio: &Matrix,
    text: &InstructionTokens,
    upstream: &Matrix,
) -> Result<GradientBundle> {
    let queries = build_queries(params, static_visual)?;
    let (mut bundle, d_queries) =
        backward_with_queries(params, &queries, visual, audio, text, upstream)?;
    match params.config.query_type {
        QueryType::Learned => acc(&mut bundle.inner_mut().learned_queries, &d_queries),
        QueryType::AvgPool => {
            let mut d_projected = Matrix::zeros(static_visual.rows(), params.config.model_dim);
            let mut start = 0;
            for (gi, size) in group_sizes(static_visual.rows(), params.config.num_queries)
                .into_iter()
                .enumerate()
            {
                let share = d_queries.row(gi).iter().map(|v| v / size as f64).collect::<Vec<_>>();
                for r in start..start + size {
                    d_projected.row_mut(r).copy_from_slice(&share);
                }
                start += size;
            }
            acc(
                &mut bundle.inner_mut().proj_visual,
                &matmul_tn(static_visual, &d_projected)?,
            );
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qformer::{init_params, QFormerConfig};
    use crate::timeline::tokenize_text;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_upstream_gives_zero_bundle() {
        let p = init_params(&QFormerConfig::small()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = backward(
            &p,
            &random(&mut rng, 4, 16),
            &random(&mut rng, 10, 8),
            &random(&mut rng, 5, 8),
            &tokenize_text("where is the dog"),
            &Matrix::zeros(4, 16),
        )
        .unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn learned_queries_unused_under_avgpool() {
        let p = init_params(&QFormerConfig::small()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = compress_backward(
            &p,
            &random(&mut rng, 12, 8),
            &random(&mut rng, 12, 8),
            &random(&mut rng, 5, 8),
            &InstructionTokens::default(),
            &random(&mut rng, 4, 16),
        )
        .unwrap();
        assert!(g.get("learned_queries").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.get("sep").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.get("proj_visual").unwrap().max_abs() > 0.0);
    }

    #[test]
    fn text_gradient_only_on_used_rows() {
        let p = init_params(&QFormerConfig::small()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let text = tokenize_text("red car");
        let g = backward(
            &p,
            &random(&mut rng, 4, 16),
            &random(&mut rng, 6, 8),
            &random(&mut rng, 3, 8),
            &text,
            &random(&mut rng, 4, 16),
        )
        .unwrap();
        let te = g.get("text_embed").unwrap();
        for r in 0..te.rows() {
            let used = text.ids().contains(&(r as u16));
            let nonzero = te.row(r).iter().any(|&v| v != 0.0);
            assert_eq!(used, nonzero, "row {r}");
        }
    }

    #[test]
    fn upstream_shape_checked() {
        let p = init_params(&QFormerConfig::small()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = backward(
            &p,
            &random(&mut rng, 4, 16),
            &random(&mut rng, 6, 8),
            &random(&mut rng, 3, 8),
            &InstructionTokens::default(),
            &Matrix::zeros(3, 16),
        );
        assert!(matches!(r, Err(TdcError::Shape(_))));
    }
}
