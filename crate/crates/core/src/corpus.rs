//! Dialog corpora, their decomposition into per-head training examples, ratio-controlled
//! minibatch sampling and dialog-level splitting.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{LabelScheme, Utterance};
use crate::state::{accumulate_turn, Ontology, StateAssignment, SystemAct, ValueLabel};
use crate::tracker::{HeadKind, TrackerMode, TurnInput};

/// One ASR hypothesis and its posterior weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Utterance,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Turn {
    pub system_acts: SystemAct,
    pub user: Utterance,
    pub asr: Option<Vec<Hypothesis>>,
    /// What this turn alone expressed.
    pub gold_turn: Option<StateAssignment>,
    /// The accumulated state after this turn.
    pub gold_state: Option<StateAssignment>,
    pub requested_gold: BTreeSet<String>,
}

impl Turn {
    pub fn input(&self) -> TurnInput {
        TurnInput {
            user: self.user.clone(),
            system_act: self.system_acts.clone(),
            asr: self.asr.as_ref().map(|h| h.iter().map(|x| (x.tokens.clone(), x.score)).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dialog {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Dialog {
    /// Checks every act and label against the ontology.
    pub fn check(&self, ontology: &Ontology) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Data("dialog with empty id".into()));
        }
        let at = |i: usize, e: Error| Error::Data(format!("dialog '{}' turn {i}: {e}", self.id));
        for (i, turn) in self.turns.iter().enumerate() {
            turn.system_acts.check(ontology).map_err(|e| at(i, e))?;
            for state in [&turn.gold_turn, &turn.gold_state].into_iter().flatten() {
                state.check(ontology).map_err(|e| at(i, e))?;
            }
            if let Some(r) = turn.requested_gold.iter().find(|r| !ontology.is_requestable(r)) {
                return Err(at(i, Error::Ontology(format!("unknown requestable slot '{r}'"))));
            }
            if let Some(hyps) = &turn.asr {
                if hyps.iter().any(|h| !h.score.is_finite() || h.score < 0.0) {
                    return Err(at(i, Error::Data("ASR scores must be finite and non-negative".into())));
                }
            }
        }
        Ok(())
    }

    /// Accumulated gold states, derived from turn-level labels where a turn lacks one.
    pub fn gold_states(&self, ontology: &Ontology) -> Result<Vec<StateAssignment>> {
        let mut running = StateAssignment::empty(ontology);
        let mut out = Vec::with_capacity(self.turns.len());
        for (i, turn) in self.turns.iter().enumerate() {
            running = match (&turn.gold_state, &turn.gold_turn) {
                (Some(state), _) => state.clone(),
                (None, Some(t)) => accumulate_turn(ontology, &running, t),
                (None, None) => {
                    return Err(Error::Data(format!("dialog '{}' turn {i}: no gold labels", self.id)));
                }
            };
            let mut state = running.clone();
            state.set_requested(turn.requested_gold.clone());
            out.push(state);
        }
        Ok(out)
    }

    pub fn inputs(&self) -> Vec<TurnInput> {
        self.turns.iter().map(Turn::input).collect()
    }
}

/// One supervised target for one head.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample<'a> {
    pub kind: HeadKind,
    /// Informable slot index (value and slot heads) or requestable slot index.
    pub slot: usize,
    /// Value index, value heads only.
    pub value: Option<usize>,
    pub turn: &'a Turn,
    /// One-hot previous gold labels, present when the previous belief is an input.
    pub prev: Option<Vec<f64>>,
    pub gold: usize,
}

fn one_hot(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn value_class(scheme: LabelScheme, label: ValueLabel) -> usize {
    match scheme {
        LabelScheme::Enriched3 => label.index(),
        LabelScheme::Mention2 => usize::from(!label.is_mentioned()),
    }
}

/// Splits every turn into value, slot and request examples. Value and slot targets come
/// from the accumulated state when the previous belief is an input and from the turn
/// labels otherwise.
pub fn decompose<'a>(dialog: &'a Dialog, ontology: &Ontology, mode: TrackerMode) -> Result<Vec<TrainingExample<'a>>> {
    let states = if mode.use_prev_belief { dialog.gold_states(ontology)? } else { Vec::new() };
    let empty = StateAssignment::empty(ontology);
    let scheme = mode.label_scheme;
    let mut out = Vec::new();
    for (i, turn) in dialog.turns.iter().enumerate() {
        let (gold, prev) = if mode.use_prev_belief {
            (&states[i], Some(if i == 0 { &empty } else { &states[i - 1] }))
        } else {
            let gold = turn
                .gold_turn
                .as_ref()
                .ok_or_else(|| Error::Data(format!("dialog '{}' turn {i}: no turn-level labels", dialog.id)))?;
            (gold, None)
        };
        for (s, slot) in ontology.informable().iter().enumerate() {
            let labels = gold.slot_values(&slot.name).ok_or_else(|| Error::Data(format!("missing slot '{}'", slot.name)))?;
            for (v, value) in slot.values.iter().enumerate() {
                let label = labels.get(value).copied().unwrap_or_default();
                let prev = prev.map(|p| {
                    one_hot(scheme.classes(), value_class(scheme, p.value_label(&slot.name, value).unwrap_or_default()))
                });
                out.push(TrainingExample {
                    kind: HeadKind::Value,
                    slot: s,
                    value: Some(v),
                    turn,
                    prev,
                    gold: value_class(scheme, label),
                });
            }
            let slot_label = gold.slot_label(&slot.name).unwrap_or_default();
            if let Some(free) = slot_label.free_index() {
                let prev = prev.map(|p| one_hot(3, p.slot_label(&slot.name).unwrap_or_default().index()));
                out.push(TrainingExample { kind: HeadKind::Slot, slot: s, value: None, turn, prev, gold: free });
            }
        }
        for (r, name) in ontology.requestable().iter().enumerate() {
            let gold = usize::from(!turn.requested_gold.contains(name));
            out.push(TrainingExample { kind: HeadKind::Request, slot: r, value: None, turn, prev: None, gold });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub batch_size: usize,
    /// Relative weight of every class, indexed by gold label.
    pub ratios: Vec<f64>,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be positive".into()));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Argument("class ratios must be finite and non-negative".into()));
        }
        if self.ratios.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Argument("class ratios sum to zero".into()));
        }
        Ok(())
    }
}

/// Integer shares of `total` proportional to `weights`: floors first, then one extra unit
/// per class in order of decreasing remainder, ties to the larger weight, then the
/// earlier class.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| libm::floor(*x) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(weights[b].total_cmp(&weights[a])).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Draws a batch of example indices whose class counts follow `cfg.ratios`. Classes with
/// fewer examples than their share are drawn with replacement.
pub fn sample_minibatch<R: Rng + ?Sized>(labels: &[usize], cfg: &SamplerConfig, rng: &mut R) -> Result<Vec<usize>> {
    cfg.check()?;
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); cfg.ratios.len()];
    for (i, &label) in labels.iter().enumerate() {
        let pool = pools
            .get_mut(label)
            .ok_or_else(|| Error::Sampling(format!("label {label} has no configured ratio")))?;
        pool.push(i);
    }
    let counts = largest_remainder(cfg.batch_size, &cfg.ratios);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for (class, (&count, pool)) in counts.iter().zip(&pools).enumerate() {
        if count == 0 {
            continue;
        }
        if pool.is_empty() {
            return Err(Error::Sampling(format!("class {class} has no examples")));
        }
        if pool.len() >= count {
            batch.extend(rand::seq::index::sample(rng, pool.len(), count).into_iter().map(|k| pool[k]));
        } else {
            batch.extend((0..count).map(|_| pool[rng.gen_range(0..pool.len())]));
        }
    }
    Ok(batch)
}

/// Dialog-level random split by the given proportions (e.g. 3:1:1). Each part keeps the
/// input order.
pub fn split_corpus(dialogs: &[Dialog], ratio: [usize; 3], seed: u64) -> Result<(Vec<Dialog>, Vec<Dialog>, Vec<Dialog>)> {
    let parts: usize = ratio.iter().sum();
    if parts == 0 {
        return Err(Error::Argument("split ratio sums to zero".into()));
    }
    if dialogs.len() < parts.max(5) {
        return Err(Error::Argument(format!("need at least {} dialogs to split, got {}", parts.max(5), dialogs.len())));
    }
    let mut order: Vec<usize> = (0..dialogs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let weights: Vec<f64> = ratio.iter().map(|r| *r as f64).collect();
    let sizes = largest_remainder(dialogs.len(), &weights);
    let mut out: [Vec<Dialog>; 3] = Default::default();
    let mut start = 0;
    for (k, size) in sizes.into_iter().enumerate() {
        let mut picked = order[start..start + size].to_vec();
        picked.sort_unstable();
        out[k] = picked.into_iter().map(|i| dialogs[i].clone()).collect();
        start += size;
    }
    let [a, b, c] = out;
    Ok((a, b, c))
}
