//! One-hidden-layer network whose hidden layer is as wide as its input.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use super::math::{axpy, dot, sigmoid, softmax_in_place};
use super::{glorot, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Softmax,
}

/// Weights are stored input-major: `hidden_w[i * input + j]` connects input `i` to
/// hidden unit `j`, `out_w[j * output + o]` connects hidden `j` to output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input: usize,
    output: usize,
    activation: Activation,
    pub hidden_w: Vec<f64>,
    pub hidden_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

/// Values recorded by [`Mlp::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace {
    /// Hidden activations before dropout.
    pub hidden: Vec<f64>,
    pub mask: Option<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            input,
            output,
            activation,
            hidden_w: vec![0.0; input * input],
            hidden_b: vec![0.0; input],
            out_w: vec![0.0; input * output],
            out_b: vec![0.0; output],
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let mut m = Self::zeros(input, output, activation);
        glorot(&mut m.hidden_w, input, input, rng);
        glorot(&mut m.out_w, input, output, rng);
        m
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Forward pass; `mask` is an inverted-dropout mask over the hidden layer.
    pub fn forward(&self, x: &[f64], mask: Option<Vec<f64>>) -> Result<MlpTrace> {
        if x.len() != self.input {
            return Err(Error::Shape(format!("network input has {} entries, expected {}", x.len(), self.input)));
        }
        let n = self.input;
        let mut hidden = self.hidden_b.clone();
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                axpy(*xi, &self.hidden_w[i * n..(i + 1) * n], &mut hidden);
            }
        }
        hidden.iter_mut().for_each(|h| *h = sigmoid(*h));
        let mut output = self.out_b.clone();
        for (j, h) in hidden.iter().enumerate() {
            let h = match &mask {
                Some(m) => h * m[j],
                None => *h,
            };
            if h != 0.0 {
                axpy(h, &self.out_w[j * self.output..(j + 1) * self.output], &mut output);
            }
        }
        match self.activation {
            Activation::Softmax => softmax_in_place(&mut output),
            Activation::Sigmoid => output.iter_mut().for_each(|o| *o = sigmoid(*o)),
        }
        Ok(MlpTrace { hidden, mask, output })
    }

    /// Inference-time application.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, None).map(|t| t.output)
    }

    /// Back-propagates `dlogits` (gradient w.r.t. the pre-activation outputs).
    ///
    /// Input gradients are written to `dx` only inside the requested ranges.
    pub fn backward(
        &self,
        x: &[f64],
        trace: &MlpTrace,
        dlogits: &[f64],
        grads: &mut Mlp,
        dx: Option<(&mut [f64], &[Range<usize>])>,
    ) {
        let n = self.input;
        let o = self.output;
        let mut dpre = vec![0.0; n];
        for j in 0..n {
            let m = trace.mask.as_ref().map_or(1.0, |m| m[j]);
            let h = trace.hidden[j] * m;
            let row = j * o..(j + 1) * o;
            if h != 0.0 {
                axpy(h, dlogits, &mut grads.out_w[row.clone()]);
            }
            if m != 0.0 {
                let dh = dot(&self.out_w[row], dlogits) * m;
                dpre[j] = dh * trace.hidden[j] * (1.0 - trace.hidden[j]);
            }
        }
        for (gb, d) in grads.out_b.iter_mut().zip(dlogits) {
            *gb += d;
        }
        for (gb, d) in grads.hidden_b.iter_mut().zip(&dpre) {
            *gb += d;
        }
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                axpy(*xi, &dpre, &mut grads.hidden_w[i * n..(i + 1) * n]);
            }
        }
        if let Some((dx, ranges)) = dx {
            for r in ranges {
                for i in r.clone() {
                    dx[i] += dot(&self.hidden_w[i * n..(i + 1) * n], &dpre);
                }
            }
        }
    }
}

impl Params for Mlp {
    fn groups(&self) -> Vec<(String, &[f64])> {
        vec![
            ("hidden.weight".into(), self.hidden_w.as_slice()),
            ("hidden.bias".into(), self.hidden_b.as_slice()),
            ("out.weight".into(), self.out_w.as_slice()),
            ("out.bias".into(), self.out_b.as_slice()),
        ]
    }

    fn groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("hidden.weight".into(), self.hidden_w.as_mut_slice()),
            ("hidden.bias".into(), self.hidden_b.as_mut_slice()),
            ("out.weight".into(), self.out_w.as_mut_slice()),
            ("out.bias".into(), self.out_b.as_mut_slice()),
        ]
    }
}

/// `φ(x)` at inference time.
pub fn mlp_apply(p: &Mlp, x: &[f64]) -> Result<Vec<f64>> {
    p.apply(x)
}
