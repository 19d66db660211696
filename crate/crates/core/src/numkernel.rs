//! Dense row-major `f64` kernels shared by every other module.
//!
//! Everything here is a pure function over immutable inputs. Shapes are
//! checked eagerly and reported as [`TdcError::Shape`] naming both operands.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TdcError};

/// `sqrt(2 / pi)`, the tanh-approximation GELU scale.
pub const GELU_SCALE: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh-approximation GELU.
pub const GELU_CUBIC: f64 = 0.044_715;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TdcError::Shape(format!(
                "buffer of {} values cannot back a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(TdcError::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on 0, and a 0-column matrix still has rows.
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of the rows in `range`.
    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.rows, "row range out of bounds");
        Self {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    /// Copy of the columns in `range`.
    pub fn slice_cols(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.cols, "column range out of bounds");
        let mut data = Vec::with_capacity(self.rows * range.len());
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[range.clone()]);
        }
        Self {
            rows: self.rows,
            cols: range.len(),
            data,
        }
    }

    /// Writes `block` into the columns starting at `col`.
    pub fn set_cols(&mut self, col: usize, block: &Matrix) {
        assert_eq!(block.rows, self.rows, "row count mismatch in set_cols");
        assert!(col + block.cols <= self.cols, "column block out of bounds");
        for r in 0..self.rows {
            let dst = r * self.cols + col;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(r));
        }
    }

    /// Stacks matrices vertically; all operands must share a column count.
    pub fn vstack(parts: &[&Matrix]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(TdcError::Shape(format!(
                    "cannot stack {}x{} under {rows}x{cols}",
                    p.rows, p.cols
                )));
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    fn check_same(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(TdcError::Shape(format!(
                "{op}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Self> {
        self.check_same(other, "add")?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        self.check_same(other, "sub")?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Self> {
        self.check_same(other, "hadamard")?;
        Ok(self.zip_with(other, |a, b| a * b))
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Adds a 1×cols row to every row.
    pub fn add_row_broadcast(&self, row: &Matrix) -> Result<Self> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(TdcError::Shape(format!(
                "broadcast {}x{} over {}x{}",
                row.rows, row.cols, self.rows, self.cols
            )));
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (v, &b) in out.row_mut(r).iter_mut().zip(&row.data) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// Column sums as a 1×cols row.
    pub fn column_sum(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for row in self.iter_rows() {
            for (acc, &v) in out.data.iter_mut().zip(row) {
                *acc += v;
            }
        }
        out
    }

    /// Column means as a 1×cols row; zero for a matrix without rows.
    pub fn column_mean(&self) -> Self {
        if self.rows == 0 {
            return Self::zeros(1, self.cols);
        }
        self.column_sum().scale(1.0 / self.rows as f64)
    }

    pub fn frobenius_dot(&self, other: &Matrix) -> Result<f64> {
        self.check_same(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        self.check_same(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Standard matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(TdcError::Shape(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(TdcError::Shape(format!(
            "matmul_tn: ({}x{})^T times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let brow = b.row(k);
        for (i, &aki) in a.row(k).iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(brow) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(TdcError::Shape(format!(
            "matmul_nt: {}x{} times ({}x{})^T",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = arow.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    Ok(out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Per-row normalization statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

/// Row-wise layer normalization with population variance, then `gamma * x + beta`.
pub fn layer_norm(m: &Matrix, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Matrix> {
    layer_norm_cached(m, gamma, beta, eps).map(|(out, _)| out)
}

pub fn layer_norm_cached(
    m: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Matrix, LayerNormCache)> {
    if gamma.len() != m.cols || beta.len() != m.cols {
        return Err(TdcError::Shape(format!(
            "layer_norm: gamma {} / beta {} for {} columns",
            gamma.len(),
            beta.len(),
            m.cols
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(TdcError::Argument(format!("layer_norm eps must be > 0, got {eps}")));
    }
    let n = m.cols as f64;
    let mut normalized = Matrix::zeros(m.rows, m.cols);
    let mut out = Matrix::zeros(m.rows, m.cols);
    let mut inv_std = Vec::with_capacity(m.rows);
    for r in 0..m.rows {
        let row = m.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std.push(istd);
        for c in 0..m.cols {
            let xhat = (row[c] - mean) * istd;
            normalized.data[r * m.cols + c] = xhat;
            out.data[r * m.cols + c] = gamma[c] * xhat + beta[c];
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

/// Gradients of [`layer_norm`]: returns `(d_input, d_gamma, d_beta)`.
pub fn layer_norm_backward(
    upstream: &Matrix,
    gamma: &[f64],
    cache: &LayerNormCache,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (rows, cols) = upstream.shape();
    let n = cols as f64;
    let mut dx = Matrix::zeros(rows, cols);
    let mut dgamma = vec![0.0; cols];
    let mut dbeta = vec![0.0; cols];
    for r in 0..rows {
        let dy = upstream.row(r);
        let xhat = cache.normalized.row(r);
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..cols {
            dgamma[c] += dy[c] * xhat[c];
            dbeta[c] += dy[c];
            let dxh = dy[c] * gamma[c];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[c];
        }
        mean_dxhat /= n;
        mean_dxhat_xhat /= n;
        let istd = cache.inv_std[r];
        let out = dx.row_mut(r);
        for c in 0..cols {
            let dxh = dy[c] * gamma[c];
            out[c] = istd * (dxh - mean_dxhat - xhat[c] * mean_dxhat_xhat);
        }
    }
    (dx, dgamma, dbeta)
}

/// Scalar tanh-approximation GELU: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_SCALE * (x + GELU_CUBIC * x * x * x)).tanh())
}

/// Derivative of [`gelu_scalar`].
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let t = (GELU_SCALE * (x + GELU_CUBIC * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

pub fn gelu(m: &Matrix) -> Matrix {
    m.map(gelu_scalar)
}

/// Sizes of `k` contiguous near-equal groups over `n` items, larger groups first.
pub fn group_sizes(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    (0..k).map(|g| base + usize::from(g < extra)).collect()
}

/// Average pooling of rows into `k` contiguous groups (see [`group_sizes`]).
pub fn mean_pool_groups(m: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 || k > m.rows {
        return Err(TdcError::Argument(format!(
            "cannot pool {} rows into {k} groups",
            m.rows
        )));
    }
    let mut out = Matrix::zeros(k, m.cols);
    let mut start = 0;
    for (g, size) in group_sizes(m.rows, k).into_iter().enumerate() {
        let block = m.slice_rows(start..start + size).column_mean();
        out.row_mut(g).copy_from_slice(block.data());
        start += size;
    }
    Ok(out)
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(TdcError::Shape(format!(
            "cosine_sim: lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(TdcError::Degenerate("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_small_cases() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), m(&[&[19.0, 22.0], &[43.0, 50.0]]));

        let x = m(&[&[1.0, -2.0], &[0.5, 3.0], &[7.0, 0.0]]);
        assert_eq!(matmul(&Matrix::identity(3), &x).unwrap(), x);

        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 2)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("2x2"), "{msg}");
    }

    #[test]
    fn transposed_products_agree_with_matmul() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = m(&[&[1.0, 0.0], &[2.0, -1.0]]);
        assert_eq!(matmul_tn(&a, &b).unwrap(), matmul(&a.transpose(), &b).unwrap());
        let c = m(&[&[1.0, 1.0, 0.0], &[0.0, 2.0, 1.0]]);
        assert_eq!(matmul_nt(&a, &c).unwrap(), matmul(&a, &c.transpose()).unwrap());
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&m(&[&[0.0, 0.0, 0.0]]));
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_rows(&m(&[&[2f64.ln(), 0.0]]));
        assert!((s.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);

        let x = m(&[&[0.3, -1.2, 4.0]]);
        let shifted = x.map(|v| v + 123.4);
        assert!(softmax_rows(&x).max_abs_diff(&softmax_rows(&shifted)).unwrap() < 1e-12);
    }

    #[test]
    fn layer_norm_examples() {
        let out = layer_norm(&m(&[&[3.0, 3.0, 3.0]]), &[1.0; 3], &[0.0; 3], 1e-5).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let out = layer_norm(&m(&[&[1.0, -1.0]]), &[1.0; 2], &[0.0; 2], 1e-14).unwrap();
        assert!((out.get(0, 0) - 1.0).abs() < 1e-12 && (out.get(0, 1) + 1.0).abs() < 1e-12);

        let out = layer_norm(&m(&[&[1.0, 5.0, -2.0]]), &[0.0; 3], &[0.5, -1.0, 2.0], 1e-5).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 2.0]);

        assert!(matches!(
            layer_norm(&m(&[&[1.0, 2.0]]), &[1.0], &[0.0, 0.0], 1e-5),
            Err(TdcError::Shape(_))
        ));
    }

    #[test]
    fn gelu_examples() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
        assert!(gelu_scalar(-10.0).abs() < 1e-6);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad_scalar(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn pooling_partition() {
        assert_eq!(group_sizes(144, 16), vec![9; 16]);
        assert_eq!(group_sizes(10, 4), vec![3, 3, 2, 2]);

        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let pooled = mean_pool_groups(&x, 4).unwrap();
        assert_eq!(pooled.slice_cols(0..1).data(), &[1.0, 4.0, 6.5, 8.5]);

        assert_eq!(mean_pool_groups(&x, 10).unwrap(), x);
        assert_eq!(mean_pool_groups(&x, 1).unwrap(), x.column_mean());
        assert!(matches!(mean_pool_groups(&x, 11), Err(TdcError::Argument(_))));
        assert!(matches!(mean_pool_groups(&x, 0), Err(TdcError::Argument(_))));
    }

    #[test]
    fn cosine_examples() {
        let v = [1.0, 2.0, -3.0];
        assert!((cosine_sim(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_sim(&v, &[-1.0, -2.0, 3.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine_sim(&[0.0, 0.0], &[1.0, 0.0]),
            Err(TdcError::Degenerate(_))
        ));
    }
}
