//! Minimal dense f32 helpers for the toy model. Matrices are row-major.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    /// Row count.
    pub rows: usize,
    /// Column count.
    pub cols: usize,
    /// `rows * cols` entries.
    pub data: Vec<f32>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Entries drawn i.i.d. from `N(0, std^2)`.
    pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f32) -> Self {
        let data = (0..rows * cols)
            .map(|_| std * rng.sample::<f32, _>(StandardNormal))
            .collect();
        Self { rows, cols, data }
    }

    /// Row `i`.
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Elementwise negation.
    pub fn negated(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }

    /// `x * self` for a row vector `x` of length `rows`.
    pub fn left_mul(&self, x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (xi, w) in x.iter().zip(self.data.chunks_exact(self.cols)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, wv) in out.iter_mut().zip(w) {
                *o += xi * wv;
            }
        }
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Layer normalisation without learned gain or bias.
pub fn layer_norm(x: &[f32], out: &mut [f32]) {
    let n = x.len() as f32;
    let mean = x.iter().sum::<f32>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let inv = 1.0 / libm::sqrtf(var + 1e-5);
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - mean) * inv;
    }
}

/// In-place softmax; returns the sum of the normalised row (1 up to
/// rounding), used to check normalisation before truncation.
pub fn softmax(x: &mut [f32]) -> f32 {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in x.iter_mut() {
        *v = libm::expf(*v - max);
        sum += *v;
    }
    let inv = 1.0 / sum;
    let mut check = 0.0f32;
    for v in x.iter_mut() {
        *v *= inv;
        check += *v;
    }
    check
}
