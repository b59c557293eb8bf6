//! Per-head minibatch training with dropout, gradient clipping, Adam and early stopping
//! on validation cross-entropy.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{decompose, sample_minibatch, Dialog, SamplerConfig, TrainingExample};
use crate::error::{Error, Result};
use crate::features::{LabelScheme, UtteranceEncoding};
use crate::nn::optim::{clip_global_norm, AdamConfig, AdamState};
use crate::nn::{Dropout, Head, HeadInput, Params};
use crate::tracker::{HeadId, HeadKind, TrackerModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub value_batch: usize,
    pub slot_batch: usize,
    pub request_batch: usize,
    /// Class ratios of three-way value heads, in label order.
    pub enriched_ratios: Vec<f64>,
    /// Class ratios of two-way heads, positive class first.
    pub binary_ratios: Vec<f64>,
    pub adam: AdamConfig,
    pub dropout: f64,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            value_batch: 256,
            slot_batch: 64,
            request_batch: 64,
            enriched_ratios: alloc::vec![0.7, 0.3, 7.0],
            binary_ratios: alloc::vec![1.0, 7.0],
            adam: AdamConfig::default(),
            dropout: 0.5,
            clip_norm: 5.0,
            max_epochs: 100,
            patience: 5,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.value_batch == 0 || self.slot_batch == 0 || self.request_batch == 0 {
            return Err(Error::Argument("batch sizes must be positive".into()));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Argument("patience and epoch limit must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Argument("dropout rate must lie in [0, 1)".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Argument("clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// Batch size, class ratios and seed for one head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSchedule {
    pub batch: usize,
    pub ratios: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub head: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSummary {
    pub head: String,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub heads: Vec<HeadSummary>,
}

fn mean_loss(head: &Head, examples: &[(HeadInput, usize)]) -> Result<f64> {
    let mut total = 0.0;
    for (input, gold) in examples {
        total += crate::nn::head::cross_entropy(&head.predict(input)?, *gold);
    }
    Ok(total / examples.len() as f64)
}

fn scale<P: Params + ?Sized>(p: &mut P, factor: f64) {
    for (_, g) in p.groups_mut() {
        g.iter_mut().for_each(|x| *x *= factor);
    }
}

/// Trains one head on its example stream. An epoch is `ceil(n / batch)` ratio-controlled
/// batches. Without validation examples the epoch's mean batch loss stands in for the
/// validation loss. The best-validation parameters are restored at the end.
pub fn train_head(
    head: &mut Head,
    name: &str,
    train: &[(HeadInput, usize)],
    valid: &[(HeadInput, usize)],
    schedule: &HeadSchedule,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(Vec<EpochRecord>, HeadSummary)> {
    cfg.check()?;
    if train.is_empty() {
        return Err(Error::Argument(format!("no training examples for {name}")));
    }
    let labels: Vec<usize> = train.iter().map(|(_, g)| *g).collect();
    // classes absent from the data are not sampled
    let mut ratios = schedule.ratios.clone();
    for (class, r) in ratios.iter_mut().enumerate() {
        if !labels.contains(&class) {
            *r = 0.0;
        }
    }
    let sampler = SamplerConfig { batch_size: schedule.batch, ratios, seed: schedule.seed };
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut adam = AdamState::new(cfg.adam, head);
    let batches = train.len().div_ceil(schedule.batch);
    let mut best = head.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut records = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let mut train_loss = 0.0;
        for _ in 0..batches {
            let batch = sample_minibatch(&labels, &sampler, &mut rng)?;
            let mut grads = head.zeros_like();
            let mut batch_loss = 0.0;
            for &i in &batch {
                let (input, gold) = &train[i];
                let mut dropout = Dropout { rate: cfg.dropout, rng: &mut rng };
                let trace = head.forward(input, Some(&mut dropout))?;
                batch_loss += Head::loss(&trace, *gold);
                head.backward(input, &trace, *gold, &mut grads);
            }
            scale(&mut grads, 1.0 / batch.len() as f64);
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam.step(head, &grads)?;
            train_loss += batch_loss / batch.len() as f64;
        }
        train_loss /= batches as f64;
        let valid_loss = if valid.is_empty() { train_loss } else { mean_loss(head, valid)? };
        if !valid_loss.is_finite() {
            return Err(Error::Argument(format!("{name}: validation loss is not finite at epoch {epoch}")));
        }
        let record = EpochRecord { head: name.into(), epoch, train_loss, valid_loss };
        on_epoch(&record);
        records.push(record);
        if valid_loss < best_loss {
            best_loss = valid_loss;
            best_epoch = epoch;
            best = head.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    *head = best;
    let summary = HeadSummary { head: name.into(), epochs: records.len(), best_epoch, best_valid_loss: best_loss };
    Ok((records, summary))
}

/// Head inputs and targets of a corpus, grouped by head.
pub struct ExampleSet {
    pub by_head: BTreeMap<HeadId, Vec<(HeadInput, usize)>>,
}

impl ExampleSet {
    pub fn build(model: &TrackerModel, dialogs: &[Dialog]) -> Result<Self> {
        let mut encodings: BTreeMap<*const crate::corpus::Turn, Arc<UtteranceEncoding>> = BTreeMap::new();
        let mut by_head: BTreeMap<HeadId, Vec<(HeadInput, usize)>> = BTreeMap::new();
        for dialog in dialogs {
            dialog.check(model.ontology())?;
            let examples: Vec<TrainingExample<'_>> = decompose(dialog, model.ontology(), model.mode())?;
            for ex in examples {
                let enc = encodings.entry(ex.turn as *const _).or_insert_with(|| model.encode(&ex.turn.user)).clone();
                let input = match ex.kind {
                    HeadKind::Value => {
                        model.value_input(ex.slot, ex.value.expect("value example"), &enc, &ex.turn.system_acts, ex.prev)
                    }
                    HeadKind::Slot => model.slot_input(ex.slot, &enc, &ex.turn.system_acts, ex.prev),
                    HeadKind::Request => model.request_input(ex.slot, &enc),
                };
                by_head.entry(HeadId { kind: ex.kind, slot: ex.slot }).or_default().push((input, ex.gold));
            }
            encodings.clear();
        }
        Ok(Self { by_head })
    }
}

/// Batch size, ratios and a per-head seed derived from the run seed.
pub fn schedule_for(model: &TrackerModel, id: HeadId, cfg: &TrainConfig) -> HeadSchedule {
    let (batch, ratios) = match (id.kind, model.mode().label_scheme) {
        (HeadKind::Value, LabelScheme::Enriched3) => (cfg.value_batch, cfg.enriched_ratios.clone()),
        (HeadKind::Value, LabelScheme::Mention2) => (cfg.value_batch, cfg.binary_ratios.clone()),
        (HeadKind::Slot, _) => (cfg.slot_batch, cfg.binary_ratios.clone()),
        (HeadKind::Request, _) => (cfg.request_batch, cfg.binary_ratios.clone()),
    };
    let ordinal = model.head_ids().iter().position(|h| *h == id).unwrap_or(0) as u64;
    let seed = cfg.seed ^ (ordinal + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    HeadSchedule { batch, ratios, seed }
}

/// Trains every head of `model`. Heads without training examples keep their initial
/// parameters.
pub fn train(
    model: TrackerModel,
    train: &[Dialog],
    valid: &[Dialog],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(TrackerModel, TrainLog)> {
    cfg.check()?;
    if train.iter().all(|d| d.turns.is_empty()) {
        return Err(Error::Argument("empty training set".into()));
    }
    let mut model = model;
    let train_set = ExampleSet::build(&model, train)?;
    let valid_set = ExampleSet::build(&model, valid)?;
    let mut log = TrainLog::default();
    for id in model.head_ids() {
        let Some(examples) = train_set.by_head.get(&id) else { continue };
        let name = model.head_name(id);
        let schedule = schedule_for(&model, id, cfg);
        let valid_examples = valid_set.by_head.get(&id).map_or(&[][..], Vec::as_slice);
        let (records, summary) =
            train_head(model.head_mut(id), &name, examples, valid_examples, &schedule, cfg, on_epoch)?;
        log.epochs.extend(records);
        log.heads.push(summary);
    }
    Ok((model, log))
}
