//! A complete tracker head: value-specific matrix → CNN → gated feature vector → softmax.
//!
//! ```text
//! c   = CNN(f3)                      (3L)
//! g   = φ_m^sigmoid(c)               gate over the previous belief
//! h   = f1 ⊗ g
//! r_i = f2[i] · c                    i = 1..6
//! p   = φ_classes^softmax(h ⊕ r_1 ⊕ … ⊕ r_6)
//! ```
//!
//! Heads without a previous belief drop `h`; heads without act indicators feed `c`
//! straight into the output network.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use super::cnn::{cnn_backward, cnn_forward, CnnParams, CnnTrace};
use super::math::ln;
use super::mlp::{Activation, Mlp, MlpTrace};
use super::{Dropout, Matrix, Params};
use crate::error::{Error, Result};
use crate::features::{assemble_matrix, DotMatchParams, UtteranceEncoding, ACT_FEATURES};

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Dimensions of one head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadShape {
    /// Embedding dimension `d`; the matrix is `d + 2` wide.
    pub embedding_dim: usize,
    /// Filters per window size, `L`.
    pub filters: usize,
    /// Length of the previous-belief vector, 0 when not used.
    pub belief_dim: usize,
    pub uses_acts: bool,
    pub classes: usize,
}

impl HeadShape {
    pub fn width(&self) -> usize {
        self.embedding_dim + 2
    }

    pub fn cnn_len(&self) -> usize {
        3 * self.filters
    }

    /// Input size of the output network.
    pub fn feature_len(&self) -> usize {
        let blocks = if self.uses_acts { ACT_FEATURES } else { 1 };
        self.belief_dim + blocks * self.cnn_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    shape: HeadShape,
    pub cnn: CnnParams,
    pub gate: Option<Mlp>,
    pub out: Mlp,
    /// `(w1, b1)` of the soft match column.
    pub dot: [f64; 2],
}

/// Everything a head reads for one entity at one turn.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadInput {
    pub utterance: Arc<UtteranceEncoding>,
    /// Raw dot products `X e(v)`, one per token.
    pub dots: Vec<f64>,
    /// `x_str`, one per token.
    pub exact: Vec<f64>,
    pub belief: Option<Vec<f64>>,
    pub acts: Option<[f64; ACT_FEATURES]>,
    /// Zero the match columns, leaving only the raw embeddings.
    pub ablate: bool,
}

/// Recorded forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    pub matrix: Matrix,
    pub cnn: CnnTrace,
    pub cnn_mask: Option<Vec<f64>>,
    /// CNN summary after dropout.
    pub features: Vec<f64>,
    pub gate: Option<MlpTrace>,
    pub combined: Vec<f64>,
    pub out: MlpTrace,
}

impl HeadTrace {
    pub fn probs(&self) -> &[f64] {
        &self.out.output
    }
}

impl Head {
    pub fn zeros(shape: HeadShape) -> Self {
        Self {
            shape,
            cnn: CnnParams::zeros(shape.width(), shape.filters),
            gate: (shape.belief_dim > 0).then(|| Mlp::zeros(shape.cnn_len(), shape.belief_dim, Activation::Sigmoid)),
            out: Mlp::zeros(shape.feature_len(), shape.classes, Activation::Softmax),
            dot: [1.0, 0.0],
        }
    }

    pub fn init<R: Rng + ?Sized>(shape: HeadShape, rng: &mut R) -> Self {
        Self {
            shape,
            cnn: CnnParams::init(shape.width(), shape.filters, rng),
            gate: (shape.belief_dim > 0)
                .then(|| Mlp::init(shape.cnn_len(), shape.belief_dim, Activation::Sigmoid, rng)),
            out: Mlp::init(shape.feature_len(), shape.classes, Activation::Softmax, rng),
            dot: [1.0, 0.0],
        }
    }

    /// A zero-valued structure with the same layout, used for gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.shape);
        z.dot = [0.0, 0.0];
        z
    }

    pub fn shape(&self) -> HeadShape {
        self.shape
    }

    pub fn dot_params(&self) -> DotMatchParams {
        DotMatchParams { w1: self.dot[0], b1: self.dot[1] }
    }

    fn check_input(&self, input: &HeadInput) -> Result<()> {
        let enc = &input.utterance;
        if enc.dim != self.shape.embedding_dim {
            return Err(Error::Shape(alloc::format!(
                "embedding dim {} but head expects {}",
                enc.dim,
                self.shape.embedding_dim
            )));
        }
        if input.dots.len() != enc.rows || input.exact.len() != enc.rows {
            return Err(Error::Shape("match columns do not cover the utterance".into()));
        }
        let belief_len = input.belief.as_ref().map_or(0, Vec::len);
        if belief_len != self.shape.belief_dim {
            return Err(Error::Shape(alloc::format!(
                "belief vector has {belief_len} entries, head expects {}",
                self.shape.belief_dim
            )));
        }
        if input.acts.is_some() != self.shape.uses_acts {
            return Err(Error::Shape("act indicators do not match the head".into()));
        }
        Ok(())
    }

    /// The value-specific matrix this head convolves for `input`.
    pub fn matrix(&self, input: &HeadInput) -> Matrix {
        assemble_matrix(&input.utterance, &input.dots, &input.exact, self.dot_params(), input.ablate)
    }

    pub fn forward<R: Rng + ?Sized>(&self, input: &HeadInput, mut dropout: Option<&mut Dropout<'_, R>>) -> Result<HeadTrace> {
        self.check_input(input)?;
        let matrix = self.matrix(input);
        let (raw, cnn) = cnn_forward(&self.cnn, &matrix)?;
        let cnn_mask = dropout.as_deref_mut().and_then(|d| d.mask(raw.len()));
        let features: Vec<f64> = match &cnn_mask {
            Some(m) => raw.iter().zip(m).map(|(x, k)| x * k).collect(),
            None => raw,
        };
        let mut combined = Vec::with_capacity(self.shape.feature_len());
        let gate = match (&self.gate, &input.belief) {
            (Some(gate), Some(belief)) => {
                let mask = dropout.as_deref_mut().and_then(|d| d.mask(gate.input()));
                let t = gate.forward(&features, mask)?;
                combined.extend(belief.iter().zip(&t.output).map(|(b, g)| b * g));
                Some(t)
            }
            _ => None,
        };
        match input.acts {
            Some(acts) => {
                for a in acts {
                    if a != 0.0 {
                        combined.extend(features.iter().map(|c| a * c));
                    } else {
                        combined.extend(core::iter::repeat_n(0.0, features.len()));
                    }
                }
            }
            None => combined.extend_from_slice(&features),
        }
        let mask = dropout.and_then(|d| d.mask(self.out.input()));
        let out = self.out.forward(&combined, mask)?;
        Ok(HeadTrace { matrix, cnn, cnn_mask, features, gate, combined, out })
    }

    /// Class distribution at inference time.
    pub fn predict(&self, input: &HeadInput) -> Result<Vec<f64>> {
        self.forward::<rand_chacha::ChaCha8Rng>(input, None).map(|t| t.out.output)
    }

    /// Cross-entropy of a recorded pass.
    pub fn loss(trace: &HeadTrace, gold: usize) -> f64 {
        cross_entropy(trace.probs(), gold)
    }

    /// Accumulates `∂ CE / ∂ θ` into `grads`.
    pub fn backward(&self, input: &HeadInput, trace: &HeadTrace, gold: usize, grads: &mut Head) {
        let c = self.shape.cnn_len();
        let m = self.shape.belief_dim;
        let mut dlogits = trace.out.output.clone();
        dlogits[gold] -= 1.0;

        let mut ranges: Vec<Range<usize>> = Vec::new();
        if m > 0 {
            ranges.push(0..m);
        }
        match input.acts {
            Some(acts) => {
                for (i, a) in acts.iter().enumerate() {
                    if *a != 0.0 {
                        ranges.push(m + i * c..m + (i + 1) * c);
                    }
                }
            }
            None => ranges.push(m..m + c),
        }
        let mut dz = vec![0.0; self.out.input()];
        self.out.backward(&trace.combined, &trace.out, &dlogits, &mut grads.out, Some((&mut dz, &ranges)));

        let mut dc = vec![0.0; c];
        match input.acts {
            Some(acts) => {
                for (i, a) in acts.iter().enumerate() {
                    if *a != 0.0 {
                        for (d, z) in dc.iter_mut().zip(&dz[m + i * c..m + (i + 1) * c]) {
                            *d += a * z;
                        }
                    }
                }
            }
            None => {
                for (d, z) in dc.iter_mut().zip(&dz[m..m + c]) {
                    *d += z;
                }
            }
        }
        if let (Some(gate), Some(gt), Some(belief), Some(gg)) =
            (&self.gate, &trace.gate, &input.belief, grads.gate.as_mut())
        {
            let dgl: Vec<f64> = (0..m)
                .map(|k| {
                    let g = gt.output[k];
                    dz[k] * belief[k] * g * (1.0 - g)
                })
                .collect();
            gate.backward(&trace.features, gt, &dgl, gg, Some((&mut dc, core::slice::from_ref(&(0..c)))));
        }
        if let Some(mask) = &trace.cnn_mask {
            for (d, k) in dc.iter_mut().zip(mask) {
                *d *= k;
            }
        }
        if input.ablate {
            cnn_backward(&self.cnn, &trace.matrix, &trace.cnn, &dc, &mut grads.cnn, None);
            return;
        }
        let mut dm = Matrix::zeros(trace.matrix.rows(), trace.matrix.cols());
        cnn_backward(&self.cnn, &trace.matrix, &trace.cnn, &dc, &mut grads.cnn, Some(&mut dm));
        let col = self.shape.embedding_dim;
        for (t, dot) in input.dots.iter().enumerate() {
            let s = trace.matrix.get(t, col);
            let ds = dm.get(t, col) * s * (1.0 - s);
            grads.dot[0] += ds * dot;
            grads.dot[1] += ds;
        }
    }
}

impl Params for Head {
    fn groups(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (n, g) in self.cnn.groups() {
            out.push((alloc::format!("cnn.{n}"), g));
        }
        if let Some(gate) = &self.gate {
            for (n, g) in gate.groups() {
                out.push((alloc::format!("gate.{n}"), g));
            }
        }
        for (n, g) in self.out.groups() {
            out.push((alloc::format!("output.{n}"), g));
        }
        out.push(("dot_match".into(), self.dot.as_slice()));
        out
    }

    fn groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (n, g) in self.cnn.groups_mut() {
            out.push((alloc::format!("cnn.{n}"), g));
        }
        if let Some(gate) = &mut self.gate {
            for (n, g) in gate.groups_mut() {
                out.push((alloc::format!("gate.{n}"), g));
            }
        }
        for (n, g) in self.out.groups_mut() {
            out.push((alloc::format!("output.{n}"), g));
        }
        out.push(("dot_match".into(), self.dot.as_mut_slice()));
        out
    }
}

/// `-ln p[gold]`, with `p[gold]` floored at [`PROB_FLOOR`].
pub fn cross_entropy(pred: &[f64], gold: usize) -> f64 {
    -ln(pred[gold].max(PROB_FLOOR))
}

/// `h_f ⊕ r_1 ⊕ … ⊕ r_6` for given `f1`, `f2`, CNN summary and gate network.
pub fn assemble_vst_input(f1: Option<&[f64]>, f2: &[f64; ACT_FEATURES], c: &[f64], gate: &Mlp) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    if let Some(f1) = f1 {
        let g = gate.apply(c)?;
        if g.len() != f1.len() {
            return Err(Error::Shape("gate output does not match the belief vector".into()));
        }
        out.extend(f1.iter().zip(&g).map(|(b, g)| b * g));
    }
    for a in f2 {
        out.extend(c.iter().map(|x| a * x));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{EmbeddingTable, Utterance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&[1.0, 0.0, 0.0], 0), 0.0);
        let third = 1.0 / 3.0;
        assert!((cross_entropy(&[third; 3], 2) - libm::log(3.0)).abs() < 1e-12);
        let clamped = cross_entropy(&[1.0, 0.0, 0.0], 1);
        assert!(clamped.is_finite() && clamped <= -libm::log(1e-12) + 1e-9);
    }

    #[test]
    fn feature_lengths() {
        let shape = |m, acts| HeadShape { embedding_dim: 300, filters: 50, belief_dim: m, uses_acts: acts, classes: 3 };
        assert_eq!(shape(3, true).feature_len(), 903);
        assert_eq!(shape(2, true).feature_len(), 902);
        assert_eq!(shape(0, true).feature_len(), 900);
        assert_eq!(shape(0, false).feature_len(), 150);
    }

    #[test]
    fn act_gating_and_identity_gate() {
        let c: Vec<f64> = (0..150).map(|i| i as f64 * 0.01).collect();
        let gate = Mlp::zeros(150, 3, Activation::Sigmoid);
        let only_none = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let v = assemble_vst_input(Some(&[0.2, 0.3, 0.5]), &only_none, &c, &gate).unwrap();
        assert_eq!(v.len(), 903);
        assert!(v[3..3 + 5 * 150].iter().all(|x| *x == 0.0));
        assert_eq!(&v[3 + 5 * 150..], c.as_slice());

        // a saturated gate passes f1 through unchanged
        let mut open = Mlp::zeros(150, 3, Activation::Sigmoid);
        open.out_b = vec![800.0; 3];
        let v = assemble_vst_input(Some(&[0.2, 0.3, 0.5]), &only_none, &c, &open).unwrap();
        assert_eq!(&v[..3], &[0.2, 0.3, 0.5]);
    }

    #[test]
    fn zero_output_weights_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut table = EmbeddingTable::new(4).unwrap();
        table.insert("a".into(), &[1.0, 0.0, 0.5, 0.0]).unwrap();
        let shape = HeadShape { embedding_dim: 4, filters: 2, belief_dim: 3, uses_acts: true, classes: 3 };
        let mut head = Head::init(shape, &mut rng);
        head.out = Mlp::zeros(shape.feature_len(), 3, Activation::Softmax);
        let enc = Arc::new(UtteranceEncoding::new(&Utterance::from_text("a b"), &table));
        let input = HeadInput {
            utterance: enc,
            dots: vec![1.0, 0.0],
            exact: vec![1.0, 0.0],
            belief: Some(vec![0.0, 0.0, 1.0]),
            acts: Some([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            ablate: false,
        };
        let p = head.predict(&input).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut bad = input.clone();
        bad.belief = None;
        assert!(head.predict(&bad).is_err());
    }
}
