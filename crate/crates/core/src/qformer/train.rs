//! Desk-scale reconstruction objective: a linear readout of the mean output
//! token predicts the mean visual token of the compressed frame.

use rayon::prelude::*;

use super::{compress, compress_backward, GradientBundle, QFormerParams};
use crate::error::{Result, TdcError};
use crate::numkernel::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::timeline::InstructionTokens;

#[derive(Debug, Clone)]
pub struct TrainExample {
    pub static_visual: Matrix,
    pub visual: Matrix,
    pub audio: Matrix,
    pub text: InstructionTokens,
}

struct ExampleGrad {
    loss: f64,
    grads: GradientBundle,
}

fn example_loss(params: &QFormerParams, ex: &TrainExample) -> Result<(f64, Matrix, Matrix, Matrix)> {
    let out = compress(params, &ex.static_visual, &ex.visual, &ex.audio, &ex.text)?;
    let pooled = out.column_mean();
    let pred = matmul(&pooled, &params.readout)?;
    let residual = pred.sub(&ex.visual.column_mean())?;
    let loss = residual.data().iter().map(|r| r * r).sum::<f64>() / residual.len() as f64;
    Ok((loss, out, pooled, residual))
}

fn example_grad(params: &QFormerParams, ex: &TrainExample, batch: usize) -> Result<ExampleGrad> {
    let (loss, out, pooled, residual) = example_loss(params, ex)?;
    let d_pred = residual.scale(2.0 / (residual.len() * batch) as f64);
    let d_pooled = matmul_nt(&d_pred, &params.readout)?;
    let k = out.rows();
    let mut upstream = Matrix::zeros(k, out.cols());
    for r in 0..k {
        for (u, &d) in upstream.row_mut(r).iter_mut().zip(d_pooled.data()) {
            *u = d / k as f64;
        }
    }
    let mut grads = compress_backward(params, &ex.static_visual, &ex.visual, &ex.audio, &ex.text, &upstream)?;
    grads
        .inner_mut()
        .readout
        .axpy(1.0, &matmul_tn(&pooled, &d_pred)?)
        .expect("readout shape");
    Ok(ExampleGrad { loss, grads })
}

/// Mean over the batch of the per-example mean squared error.
pub fn reconstruction_loss(params: &QFormerParams, batch: &[TrainExample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(TdcError::Argument("empty training batch".into()));
    }
    let losses = batch
        .par_iter()
        .map(|ex| example_loss(params, ex).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}

/// One plain gradient-descent step. Returns the updated parameters and the
/// loss measured before the update.
pub fn train_step(
    params: &QFormerParams,
    batch: &[TrainExample],
    lr: f64,
) -> Result<(QFormerParams, f64)> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(TdcError::Argument(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    if batch.is_empty() {
        return Err(TdcError::Argument("empty training batch".into()));
    }
    let per_example = batch
        .par_iter()
        .map(|ex| example_grad(params, ex, batch.len()))
        .collect::<Result<Vec<_>>>()?;

    let mut total = GradientBundle::zeros_for(params);
    let mut loss = 0.0;
    for eg in &per_example {
        total.accumulate(1.0, &eg.grads);
        loss += eg.loss;
    }
    loss /= batch.len() as f64;
    if !loss.is_finite() {
        return Err(TdcError::Numeric(format!("non-finite training loss {loss}")));
    }

    let mut next = params.clone();
    if lr > 0.0 {
        for ((_, p), (_, g)) in next.tensors_mut().into_iter().zip(total.tensors()) {
            p.axpy(-lr, g)?;
        }
    }
    Ok((next, loss))
}
