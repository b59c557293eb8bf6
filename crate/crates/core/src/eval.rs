//! Exact-match tracking metrics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::Dialog;
use crate::error::{Error, Result};
use crate::state::{Ontology, StateAssignment};
use crate::tracker::{track_dialog_trace, TrackerModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Only defined when per-turn predictions and turn-level gold labels both exist.
    pub turn_goal: Option<f64>,
    pub joint_goal: f64,
    pub request: f64,
    /// Fraction of turns whose accumulated labels for the slot are all correct.
    pub per_slot: BTreeMap<String, f64>,
    pub turns: usize,
}

/// Predictions for one dialog.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogPrediction {
    pub turn_level: Option<Vec<StateAssignment>>,
    /// Accumulated states; their `requested` sets are the turn's request predictions.
    pub states: Vec<StateAssignment>,
}

/// Scores predictions against gold labels.
pub fn score(ontology: &Ontology, dialogs: &[Dialog], predictions: &[DialogPrediction]) -> Result<Metrics> {
    if dialogs.len() != predictions.len() {
        return Err(Error::Argument("one prediction per dialog is required".into()));
    }
    let mut turns = 0usize;
    let mut joint = 0usize;
    let mut request = 0usize;
    let mut turn_hits = 0usize;
    let mut turn_goal_defined = true;
    let mut per_slot: BTreeMap<String, usize> = ontology.informable().iter().map(|s| (s.name.clone(), 0)).collect();
    for (dialog, pred) in dialogs.iter().zip(predictions) {
        let gold = dialog.gold_states(ontology)?;
        if pred.states.len() != gold.len() {
            return Err(Error::Argument(format!("dialog '{}': prediction length mismatch", dialog.id)));
        }
        for (t, (p, g)) in pred.states.iter().zip(&gold).enumerate() {
            turns += 1;
            joint += usize::from(p.goal_matches(g));
            request += usize::from(p.requested() == g.requested());
            for (slot, hits) in per_slot.iter_mut() {
                *hits += usize::from(p.slot_matches(g, slot));
            }
            match (&pred.turn_level, &dialog.turns[t].gold_turn) {
                (Some(pt), Some(gt)) => turn_hits += usize::from(pt[t].goal_matches(gt)),
                _ => turn_goal_defined = false,
            }
        }
    }
    if turns == 0 {
        return Err(Error::Data("no turns to evaluate".into()));
    }
    let n = turns as f64;
    Ok(Metrics {
        turn_goal: turn_goal_defined.then(|| turn_hits as f64 / n),
        joint_goal: joint as f64 / n,
        request: request as f64 / n,
        per_slot: per_slot.into_iter().map(|(s, h)| (s, h as f64 / n)).collect(),
        turns,
    })
}

/// Tracks every dialog with `model`.
pub fn predict(model: &TrackerModel, dialogs: &[Dialog], use_asr: bool) -> Result<Vec<DialogPrediction>> {
    dialogs
        .iter()
        .map(|d| {
            let trace = track_dialog_trace(model, &d.inputs(), use_asr)?;
            Ok(DialogPrediction { turn_level: trace.turn_level, states: trace.states })
        })
        .collect()
}

pub fn evaluate(model: &TrackerModel, dialogs: &[Dialog], use_asr: bool) -> Result<Metrics> {
    score(model.ontology(), dialogs, &predict(model, dialogs, use_asr)?)
}
