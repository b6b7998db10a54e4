//! Dense f64 linear algebra used by the model, engine and validators.
//!
//! Row-major matrices over `Vec<f64>`. Shapes are checked on every binary
//! operation; a mismatch is an error, never an implicit broadcast. This is
//! deliberately plain scalar code — the goal is a trustworthy reference
//! path, not BLAS throughput.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::InvalidParam(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(CoreError::InvalidParam(
                    "ragged rows in matrix construction".into(),
                ));
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(self.shape_err("add", other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Select a subset of rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn shape_err(&self, context: &'static str, other: &Matrix) -> CoreError {
        CoreError::ShapeError {
            context,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }
}

/// `A * B`. Parallel over rows of `A` for large inputs.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(a.shape_err("matmul", b));
    }
    let rows = matmul_rows(a, b);
    Ok(assemble_rows(a.rows, b.cols, rows))
}

/// Sequential `A * B`, kept public for benchmarking against the
/// feature-dispatched version.
pub fn matmul_seq(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(a.shape_err("matmul", b));
    }
    let rows = par::map_indexed_seq(a.rows, |i| matmul_row(a.row(i), b));
    Ok(assemble_rows(a.rows, b.cols, rows))
}

fn matmul_rows(a: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
    let work = a.cols * b.cols;
    par::map_indexed(a.rows, work, |i| matmul_row(a.row(i), b))
}

fn matmul_row(row: &[f64], b: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; b.cols];
    for (k, &x) in row.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let brow = b.row(k);
        for (o, &bv) in out.iter_mut().zip(brow) {
            *o += x * bv;
        }
    }
    out
}

fn assemble_rows(rows: usize, cols: usize, row_data: Vec<Vec<f64>>) -> Matrix {
    let mut data = Vec::with_capacity(rows * cols);
    for r in row_data {
        data.extend_from_slice(&r);
    }
    Matrix { rows, cols, data }
}

/// `A * B^T` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(a.shape_err("matmul_nt", b));
    }
    let work = a.cols * b.rows;
    let rows = par::map_indexed(a.rows, work, |i| {
        let arow = a.row(i);
        (0..b.rows).map(|j| dot(arow, b.row(j))).collect::<Vec<f64>>()
    });
    Ok(assemble_rows(a.rows, b.rows, rows))
}

/// `x * A` for a single row vector.
pub fn vec_mat(x: &[f64], a: &Matrix) -> Result<Vec<f64>> {
    if x.len() != a.rows {
        return Err(CoreError::ShapeError {
            context: "vec_mat",
            left_rows: 1,
            left_cols: x.len(),
            right_rows: a.rows,
            right_cols: a.cols,
        });
    }
    let mut out = vec![0.0; a.cols];
    for (k, &v) in x.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let arow = a.row(k);
        for (o, &av) in out.iter_mut().zip(arow) {
            *o += v * av;
        }
    }
    Ok(out)
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine of the angle between two vectors, in [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(CoreError::ShapeError {
            context: "cosine",
            left_rows: 1,
            left_cols: u.len(),
            right_rows: 1,
            right_cols: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(CoreError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Signed scalar projection of `w` onto the direction of `target`:
/// `<w, target> / ||target||`. Negative when the angle exceeds 90 degrees.
pub fn projection_magnitude(w: &[f64], target: &[f64]) -> Result<f64> {
    if w.len() != target.len() {
        return Err(CoreError::ShapeError {
            context: "projection_magnitude",
            left_rows: 1,
            left_cols: w.len(),
            right_rows: 1,
            right_cols: target.len(),
        });
    }
    let nt = norm(target);
    if nt == 0.0 {
        return Err(CoreError::ZeroVector);
    }
    Ok(dot(w, target) / nt)
}

/// Numerically stable softmax; rows sum to 1 within 1e-12.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

const LAYER_NORM_EPS: f64 = 1e-12;

/// Zero-mean unit-variance normalization, no learned affine.
pub fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = (var + LAYER_NORM_EPS).sqrt();
    x.iter().map(|v| (v - mean) / denom).collect()
}

/// Rescale to unit Euclidean norm. Zero vectors are returned unchanged.
pub fn unit_normalize(x: &[f64]) -> Vec<f64> {
    let n = norm(x);
    if n == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|v| v / n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Silu,
}

impl ActivationKind {
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Silu => x / (1.0 + (-x).exp()),
        }
    }
}

pub fn activation(x: &[f64], kind: ActivationKind) -> Vec<f64> {
    x.iter().map(|&v| kind.apply_scalar(v)).collect()
}

/// Normalized Frobenius distance of the Gram matrix from its best scaled
/// identity fit. The Gram is taken on the smaller side (`W W^T` for wide or
/// square, `W^T W` for tall) so that a scaled matrix with orthonormal
/// rows/columns scores ~0 regardless of shape.
pub fn orthogonality_deviation(w: &Matrix) -> Result<f64> {
    if w.rows == 0 || w.cols == 0 {
        return Err(CoreError::EmptySet);
    }
    let p = if w.rows <= w.cols {
        matmul_nt(w, w)?
    } else {
        let wt = w.transpose();
        matmul_nt(&wt, &wt)?
    };
    gram_deviation_from_scaled_identity(&p)
}

/// Deviation of an already-formed Gram/product matrix `P` from
/// `mean(diag(P)) * I`.
pub fn gram_deviation_from_scaled_identity(p: &Matrix) -> Result<f64> {
    let n = p.rows();
    if n != p.cols() || n == 0 {
        return Err(CoreError::InvalidParam("gram matrix must be square".into()));
    }
    let lambda = (0..n).map(|i| p.get(i, i)).sum::<f64>() / n as f64;
    if lambda <= 0.0 {
        return Err(CoreError::DegenerateMatrix);
    }
    let mut dist_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { lambda } else { 0.0 };
            let d = p.get(i, j) - target;
            dist_sq += d * d;
        }
    }
    let denom = lambda * (n as f64).sqrt();
    Ok(dist_sq.sqrt() / denom)
}

/// Thin QR via Householder reflections; returns Q with orthonormal columns
/// (rows >= cols required) and a sign convention making the factorization
/// deterministic.
pub fn householder_q(a: &Matrix) -> Result<Matrix> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(CoreError::InvalidParam(
            "householder_q needs rows >= cols".into(),
        ));
    }
    let mut r = a.clone();
    // Accumulate Q by applying the reflectors to the identity.
    let mut q = Matrix::identity(m);
    let mut v = vec![0.0; m];
    for k in 0..n {
        let mut alpha = 0.0;
        for i in k..m {
            let x = r.get(i, k);
            alpha += x * x;
        }
        let mut alpha = alpha.sqrt();
        if alpha == 0.0 {
            continue;
        }
        if r.get(k, k) > 0.0 {
            alpha = -alpha;
        }
        for i in 0..m {
            v[i] = if i < k { 0.0 } else { r.get(i, k) };
        }
        v[k] -= alpha;
        let vnorm_sq: f64 = v[k..].iter().map(|x| x * x).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        // r <- (I - 2 v v^T / v^T v) r
        for j in k..n {
            let mut proj = 0.0;
            for i in k..m {
                proj += v[i] * r.get(i, j);
            }
            let f = 2.0 * proj / vnorm_sq;
            for i in k..m {
                let val = r.get(i, j) - f * v[i];
                r.set(i, j, val);
            }
        }
        // q <- q (I - 2 v v^T / v^T v)
        for i in 0..m {
            let mut proj = 0.0;
            for l in k..m {
                proj += q.get(i, l) * v[l];
            }
            let f = 2.0 * proj / vnorm_sq;
            for l in k..m {
                let val = q.get(i, l) - f * v[l];
                q.set(i, l, val);
            }
        }
    }
    // Thin Q, with columns flipped so diag(R) > 0 (deterministic orientation).
    let mut thin = Matrix::zeros(m, n);
    for j in 0..n {
        let sign = if r.get(j, j) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            thin.set(i, j, sign * q.get(i, j));
        }
    }
    Ok(thin)
}
