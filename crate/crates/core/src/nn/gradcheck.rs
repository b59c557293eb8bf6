//! Central-difference verification of analytic head gradients.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::head::{cross_entropy, Head, HeadInput, HeadShape};
use super::Params;
use crate::error::Result;
use crate::features::UtteranceEncoding;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients that are zero up to
/// rounding are compared in absolute terms.
pub const ERROR_FLOOR: f64 = 1e-6;

/// Maximum relative error per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<(String, f64)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.groups.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.groups.iter().all(|(_, e)| *e < tolerance)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

fn total_loss(head: &Head, examples: &[(HeadInput, usize)]) -> Result<f64> {
    let mut loss = 0.0;
    for (input, gold) in examples {
        loss += cross_entropy(&head.predict(input)?, *gold);
    }
    Ok(loss)
}

/// Compares back-propagated gradients of the summed cross-entropy against central
/// differences for every parameter of `head`.
pub fn grad_check(head: &Head, examples: &[(HeadInput, usize)]) -> Result<GradCheckReport> {
    let mut analytic = head.zeros_like();
    for (input, gold) in examples {
        let trace = head.forward::<ChaCha8Rng>(input, None)?;
        head.backward(input, &trace, *gold, &mut analytic);
    }
    let names: Vec<String> = head.groups().into_iter().map(|(n, _)| n).collect();
    let analytic_groups: Vec<Vec<f64>> = analytic.groups().into_iter().map(|(_, g)| g.to_vec()).collect();
    let mut probe = head.clone();
    let mut report = GradCheckReport { groups: Vec::new(), checked: 0 };
    for (gi, name) in names.into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (i, &analytic_value) in analytic_groups[gi].iter().enumerate() {
            let original = probe.groups()[gi].1[i];
            probe.groups_mut()[gi].1[i] = original + STEP;
            let plus = total_loss(&probe, examples)?;
            probe.groups_mut()[gi].1[i] = original - STEP;
            let minus = total_loss(&probe, examples)?;
            probe.groups_mut()[gi].1[i] = original;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic_value, numeric));
            report.checked += 1;
        }
        report.groups.push((name, worst));
    }
    Ok(report)
}

/// Builds a randomly initialized full value head (previous belief, act indicators,
/// both match columns) with random inputs, and checks its gradients.
pub fn random_value_head_check(seed: u64, embedding_dim: usize, filters: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = HeadShape { embedding_dim, filters, belief_dim: 3, uses_acts: true, classes: 3 };
    let mut head = Head::init(shape, &mut rng);
    head.dot = [rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5)];
    for (_, g) in head.groups_mut() {
        // non-zero biases keep every unit away from exact ties
        if g.iter().all(|x| *x == 0.0) {
            g.iter_mut().for_each(|x| *x = rng.gen_range(-0.1..0.1));
        }
    }
    let act_patterns: [[f64; 6]; 4] = [
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
    ];
    let mut examples = Vec::new();
    for (i, acts) in act_patterns.iter().enumerate() {
        let rows = 2 + i * 2;
        let data: Vec<f64> = (0..rows * embedding_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let enc = UtteranceEncoding { rows, dim: embedding_dim, data, normalized: vec![String::new(); rows] };
        let dots: Vec<f64> = (0..rows).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let exact: Vec<f64> = (0..rows).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let a: f64 = rng.gen_range(0.0..1.0);
        let b: f64 = rng.gen_range(0.0..(1.0 - a));
        let input = HeadInput {
            utterance: Arc::new(enc),
            dots,
            exact,
            belief: Some(vec![a, b, 1.0 - a - b]),
            acts: Some(*acts),
            ablate: false,
        };
        examples.push((input, i % 3));
    }
    grad_check(&head, &examples)
}
