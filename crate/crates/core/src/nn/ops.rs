//! Elementwise functions and the plain 2-D convolution used by the network.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Lower clamp applied to probabilities inside [`bce_loss`].
pub const PROB_EPS: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} values for {rows} x {cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Valid (unpadded) cross-correlation plus bias:
/// `out[r][c] = bias + sum_i sum_j x[r + i][c + j] * kernel[i][j]`.
pub fn conv2d_valid(x: &Matrix, kernel: &Matrix, bias: f64) -> Result<Matrix> {
    if kernel.rows == 0 || kernel.cols == 0 || kernel.rows > x.rows || kernel.cols > x.cols {
        return Err(Error::dims(format!(
            "kernel {} x {} does not fit input {} x {}",
            kernel.rows, kernel.cols, x.rows, x.cols
        )));
    }
    let rows = x.rows - kernel.rows + 1;
    let cols = x.cols - kernel.cols + 1;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = bias;
            for i in 0..kernel.rows {
                let xrow = &x.data[(r + i) * x.cols + c..(r + i) * x.cols + c + kernel.cols];
                let krow = &kernel.data[i * kernel.cols..(i + 1) * kernel.cols];
                acc += xrow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>();
            }
            out.push(acc);
        }
    }
    Matrix::new(rows, cols, out)
}

pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

pub fn relu_slice(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| relu(v)).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Binary cross-entropy `-t ln p - (1 - t) ln(1 - p)` with `p` clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bce_loss(p: f64, t: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -t * libm::log(p) - (1.0 - t) * libm::log(1.0 - p)
}

/// [`bce_loss`] of `sigmoid(logit)` without the clamp, evaluated as
/// `max(z, 0) - t z + ln(1 + e^-|z|)` to avoid cancellation near p = 0 or 1.
pub fn bce_with_logit(logit: f64, t: f64) -> f64 {
    logit.max(0.0) - t * logit + libm::log1p(libm::exp(-logit.abs()))
}
