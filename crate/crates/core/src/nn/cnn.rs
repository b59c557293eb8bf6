//! Three-window convolutional feature extractor with ReLU and max-over-time pooling.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::math::{axpy, dot, relu};
use super::{glorot, Matrix, Params};
use crate::error::{Error, Result};

/// Window sizes of the filter banks, in output order.
pub const WINDOWS: [usize; 3] = [1, 2, 3];

/// `L` filters of one window size `n`, each `n × width` weights plus a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBank {
    pub window: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    width: usize,
    filters: usize,
    banks: Vec<ConvBank>,
}

impl CnnParams {
    pub fn zeros(width: usize, filters: usize) -> Self {
        let banks = WINDOWS
            .iter()
            .map(|&n| ConvBank { window: n, weights: vec![0.0; filters * n * width], bias: vec![0.0; filters] })
            .collect();
        Self { width, filters, banks }
    }

    pub fn init<R: Rng + ?Sized>(width: usize, filters: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(width, filters);
        for bank in &mut p.banks {
            glorot(&mut bank.weights, bank.window * width, filters, rng);
        }
        p
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn output_len(&self) -> usize {
        self.filters * WINDOWS.len()
    }

    pub fn banks(&self) -> &[ConvBank] {
        &self.banks
    }

    pub fn banks_mut(&mut self) -> &mut [ConvBank] {
        &mut self.banks
    }

    fn filter(&self, bank: usize, k: usize) -> &[f64] {
        let span = self.banks[bank].window * self.width;
        &self.banks[bank].weights[k * span..(k + 1) * span]
    }
}

impl Params for CnnParams {
    fn groups(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for b in &self.banks {
            out.push((format!("conv{}.weight", b.window), b.weights.as_slice()));
            out.push((format!("conv{}.bias", b.window), b.bias.as_slice()));
        }
        out
    }

    fn groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for b in &mut self.banks {
            out.push((format!("conv{}.weight", b.window), b.weights.as_mut_slice()));
            out.push((format!("conv{}.bias", b.window), b.bias.as_mut_slice()));
        }
        out
    }
}

/// Pre-activation maxima and their positions, one per (window, filter).
#[derive(Debug, Clone, PartialEq)]
pub struct CnnTrace {
    pub best: Vec<f64>,
    pub argmax: Vec<usize>,
}

fn check_input(p: &CnnParams, m: &Matrix) -> Result<()> {
    if m.cols() != p.width {
        return Err(Error::Shape(format!("matrix has {} columns, filters expect {}", m.cols(), p.width)));
    }
    if m.rows() < WINDOWS[WINDOWS.len() - 1] {
        return Err(Error::Shape(format!("matrix has {} rows, need at least 3", m.rows())));
    }
    Ok(())
}

/// Convolve, ReLU and max-pool; returns the `3L` summary vector.
pub fn cnn_forward(p: &CnnParams, m: &Matrix) -> Result<(Vec<f64>, CnnTrace)> {
    check_input(p, m)?;
    let l = p.filters;
    let mut best = vec![f64::NEG_INFINITY; 3 * l];
    let mut argmax = vec![0usize; 3 * l];
    for (b, bank) in p.banks.iter().enumerate() {
        let n = bank.window;
        for t in 0..=m.rows() - n {
            let window = m.window(t, n);
            for k in 0..l {
                let z = dot(p.filter(b, k), window) + bank.bias[k];
                let slot = b * l + k;
                if z > best[slot] {
                    best[slot] = z;
                    argmax[slot] = t;
                }
            }
        }
    }
    let out = best.iter().map(|z| relu(*z)).collect();
    Ok((out, CnnTrace { best, argmax }))
}

/// The CNN summary vector alone.
pub fn cnn_extract(p: &CnnParams, m: &Matrix) -> Result<Vec<f64>> {
    cnn_forward(p, m).map(|(out, _)| out)
}

/// Accumulates parameter gradients (and optionally input gradients) given `dout`.
pub fn cnn_backward(
    p: &CnnParams,
    m: &Matrix,
    trace: &CnnTrace,
    dout: &[f64],
    grads: &mut CnnParams,
    mut dm: Option<&mut Matrix>,
) {
    let l = p.filters;
    for (b, bank) in p.banks.iter().enumerate() {
        let n = bank.window;
        let span = n * p.width;
        for k in 0..l {
            let slot = b * l + k;
            let g = dout[slot];
            if g == 0.0 || trace.best[slot] <= 0.0 {
                continue;
            }
            let t = trace.argmax[slot];
            let window = m.window(t, n);
            let gb = &mut grads.banks[b];
            axpy(g, window, &mut gb.weights[k * span..(k + 1) * span]);
            gb.bias[k] += g;
            if let Some(dm) = dm.as_deref_mut() {
                axpy(g, p.filter(b, k), dm.window_mut(t, n));
            }
        }
    }
}
