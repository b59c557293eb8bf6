//! Differentiable building blocks of the tracker heads.
//!
//! Forward passes record the intermediate values their backward passes need
//! (`*Trace` types); backward passes accumulate into a gradient structure with the same
//! layout as the parameters.

pub mod cnn;
pub mod gradcheck;
pub mod head;
pub mod math;
pub mod mlp;
pub mod optim;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use cnn::{cnn_extract, CnnParams};
pub use gradcheck::{grad_check, GradCheckReport};
pub use head::{Head, HeadInput, HeadShape, HeadTrace};
pub use mlp::{Activation, Mlp};
pub use optim::{clip_global_norm, AdamConfig, AdamState};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> crate::Result<Self> {
        if data.len() != rows * cols {
            return Err(crate::Error::Shape(alloc::format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `start..start + n` as one contiguous slice.
    pub fn window(&self, start: usize, n: usize) -> &[f64] {
        &self.data[start * self.cols..(start + n) * self.cols]
    }

    pub(crate) fn window_mut(&mut self, start: usize, n: usize) -> &mut [f64] {
        &mut self.data[start * self.cols..(start + n) * self.cols]
    }
}

/// Named flat parameter arrays in a fixed order.
pub trait Params {
    fn groups(&self) -> Vec<(String, &[f64])>;
    fn groups_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    fn fill(&mut self, value: f64) {
        for (_, g) in self.groups_mut() {
            g.iter_mut().for_each(|x| *x = value);
        }
    }

    fn global_norm(&self) -> f64 {
        math::sqrt(self.groups().iter().map(|(_, g)| math::l2_norm_sq(g)).sum())
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
}

/// Applies inverted dropout when `training`; identity otherwise.
pub fn dropout<R: Rng + ?Sized>(x: &[f64], rate: f64, rng: &mut R, training: bool) -> Vec<f64> {
    if !training || rate == 0.0 {
        return x.to_vec();
    }
    dropout_mask(x.len(), rate, rng).iter().zip(x).map(|(m, v)| m * v).collect()
}

/// Randomness and rate used by training-time forward passes.
pub struct Dropout<'a, R: Rng + ?Sized> {
    pub rate: f64,
    pub rng: &'a mut R,
}

impl<R: Rng + ?Sized> Dropout<'_, R> {
    pub fn mask(&mut self, len: usize) -> Option<Vec<f64>> {
        if self.rate == 0.0 {
            None
        } else {
            Some(dropout_mask(len, self.rate, self.rng))
        }
    }
}

/// Uniform Glorot initialization.
pub(crate) fn glorot<R: Rng + ?Sized>(xs: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    for x in xs {
        *x = rng.gen_range(-limit..limit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = [1.0, -2.0, 3.0];
        assert_eq!(dropout(&x, 0.5, &mut rng, false), x.to_vec());
        assert_eq!(dropout(&x, 0.0, &mut rng, true), x.to_vec());
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = [1.0, 2.0, -0.5, 4.0];
        let mut acc = [0.0; 4];
        let draws = 10_000;
        for _ in 0..draws {
            for (a, y) in acc.iter_mut().zip(dropout(&x, 0.5, &mut rng, true)) {
                *a += y;
            }
        }
        for (a, xi) in acc.iter().zip(&x) {
            let mean = a / draws as f64;
            assert!((mean - xi).abs() <= 0.05 * xi.abs(), "{mean} vs {xi}");
        }
    }

    #[test]
    fn dropout_zeroes_or_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = dropout(&[1.0; 64], 0.5, &mut rng, true);
        assert!(y.iter().all(|v| *v == 0.0 || *v == 2.0));
        assert!(y.contains(&0.0) && y.contains(&2.0));
    }
}
