//! The full tracker: one value head and one slot head per informable slot, one head per
//! requestable slot, and the turn/dialog-level inference built on top of them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{
    act_feature_vector, embed_entity, entity_tokens, slot_act_feature_vector, EmbeddingTable, EntityPatterns,
    LabelScheme, SemanticDictionary, Utterance, UtteranceEncoding,
};
use crate::nn::{Head, HeadInput, HeadShape, Params};
use crate::state::{
    accumulate_turn, argmax, map_assignment, BeliefState, FreeBranch, Ontology, SlotConstraint,
    StateAssignment, SystemAct, ValueDist, ValueLabel,
};

/// Filters per window size used by default.
pub const DEFAULT_FILTERS: usize = 50;

/// Probability at or above which a requestable slot counts as requested.
pub const REQUEST_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrackerMode {
    pub label_scheme: LabelScheme,
    /// Feed the previous belief into the heads. When off, each turn is predicted on its
    /// own and turn predictions are accumulated.
    pub use_prev_belief: bool,
    /// Replace the soft and hard match columns with zeros.
    pub ablate_value_specific: bool,
}

impl TrackerMode {
    pub fn value_shape(&self, embedding_dim: usize, filters: usize) -> HeadShape {
        let classes = self.label_scheme.classes();
        HeadShape {
            embedding_dim,
            filters,
            belief_dim: if self.use_prev_belief { classes } else { 0 },
            uses_acts: true,
            classes,
        }
    }

    pub fn slot_shape(&self, embedding_dim: usize, filters: usize) -> HeadShape {
        HeadShape {
            embedding_dim,
            filters,
            belief_dim: if self.use_prev_belief { 3 } else { 0 },
            uses_acts: true,
            classes: 2,
        }
    }

    pub fn request_shape(&self, embedding_dim: usize, filters: usize) -> HeadShape {
        HeadShape { embedding_dim, filters, belief_dim: 0, uses_acts: false, classes: 2 }
    }
}

/// Which family a head belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HeadKind {
    Value,
    Slot,
    Request,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Value => "value",
            HeadKind::Slot => "slot",
            HeadKind::Request => "request",
        }
    }
}

/// A head: its family and the index of its slot (informable or requestable).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HeadId {
    pub kind: HeadKind,
    pub slot: usize,
}

/// One user turn as seen by the tracker.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TurnInput {
    pub user: Utterance,
    pub system_act: SystemAct,
    /// N-best hypotheses with their (unnormalized) posterior weights.
    pub asr: Option<Vec<(Utterance, f64)>>,
}

/// Belief after one turn plus the turn's request probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnBelief {
    pub belief: BeliefState,
    pub requested: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Entity {
    embedding: Vec<f64>,
    patterns: EntityPatterns,
}

impl Entity {
    fn new(name: &str, table: &EmbeddingTable, dict: Option<&SemanticDictionary>) -> Result<Self> {
        let tokens = entity_tokens(name);
        Ok(Self { embedding: embed_entity(table, &tokens)?, patterns: EntityPatterns::new(name, dict) })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entities {
    values: Vec<Vec<Entity>>,
    slots: Vec<Entity>,
    requests: Vec<Entity>,
}

impl Entities {
    fn build(ontology: &Ontology, table: &EmbeddingTable, dict: Option<&SemanticDictionary>) -> Result<Self> {
        let mut values = Vec::new();
        let mut slots = Vec::new();
        for slot in ontology.informable() {
            slots.push(Entity::new(&slot.name, table, dict)?);
            values.push(slot.values.iter().map(|v| Entity::new(v, table, dict)).collect::<Result<Vec<_>>>()?);
        }
        let requests = ontology.requestable().iter().map(|r| Entity::new(r, table, dict)).collect::<Result<_>>()?;
        Ok(Self { values, slots, requests })
    }
}

/// All learned parameters together with the resources they are evaluated against.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerModel {
    mode: TrackerMode,
    filters: usize,
    ontology: Arc<Ontology>,
    embeddings: Arc<EmbeddingTable>,
    dictionary: Option<Arc<SemanticDictionary>>,
    value_heads: Vec<Head>,
    slot_heads: Vec<Head>,
    request_heads: Vec<Head>,
    entities: Entities,
}

impl TrackerModel {
    /// A freshly initialized model.
    pub fn new<R: Rng + ?Sized>(
        mode: TrackerMode,
        filters: usize,
        ontology: Arc<Ontology>,
        embeddings: Arc<EmbeddingTable>,
        dictionary: Option<Arc<SemanticDictionary>>,
        rng: &mut R,
    ) -> Result<Self> {
        let d = embeddings.dim();
        let n = ontology.informable().len();
        let value_heads = (0..n).map(|_| Head::init(mode.value_shape(d, filters), rng)).collect();
        let slot_heads = (0..n).map(|_| Head::init(mode.slot_shape(d, filters), rng)).collect();
        let request_heads = (0..ontology.requestable().len())
            .map(|_| Head::init(mode.request_shape(d, filters), rng))
            .collect();
        Self::from_heads(mode, filters, ontology, embeddings, dictionary, value_heads, slot_heads, request_heads)
    }

    /// Assembles a model from existing heads, checking their shapes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_heads(
        mode: TrackerMode,
        filters: usize,
        ontology: Arc<Ontology>,
        embeddings: Arc<EmbeddingTable>,
        dictionary: Option<Arc<SemanticDictionary>>,
        value_heads: Vec<Head>,
        slot_heads: Vec<Head>,
        request_heads: Vec<Head>,
    ) -> Result<Self> {
        if filters == 0 {
            return Err(Error::Argument("filter count must be positive".into()));
        }
        let d = embeddings.dim();
        let n = ontology.informable().len();
        if value_heads.len() != n || slot_heads.len() != n || request_heads.len() != ontology.requestable().len() {
            return Err(Error::Shape("head count does not match the ontology".into()));
        }
        let check = |heads: &[Head], shape: HeadShape, what: &str| -> Result<()> {
            if heads.iter().any(|h| h.shape() != shape) {
                return Err(Error::Shape(format!("{what} head shape does not match the mode")));
            }
            Ok(())
        };
        check(&value_heads, mode.value_shape(d, filters), "value")?;
        check(&slot_heads, mode.slot_shape(d, filters), "slot")?;
        check(&request_heads, mode.request_shape(d, filters), "request")?;
        if let Some(dict) = &dictionary {
            dict.check(&ontology)?;
        }
        let entities = Entities::build(&ontology, &embeddings, dictionary.as_deref())?;
        Ok(Self { mode, filters, ontology, embeddings, dictionary, value_heads, slot_heads, request_heads, entities })
    }

    pub fn mode(&self) -> TrackerMode {
        self.mode
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn ontology(&self) -> &Arc<Ontology> {
        &self.ontology
    }

    pub fn embeddings(&self) -> &Arc<EmbeddingTable> {
        &self.embeddings
    }

    pub fn dictionary(&self) -> Option<&Arc<SemanticDictionary>> {
        self.dictionary.as_ref()
    }

    /// Swaps the semantic dictionary used for string matching.
    pub fn set_dictionary(&mut self, dictionary: Option<Arc<SemanticDictionary>>) -> Result<()> {
        if let Some(dict) = &dictionary {
            dict.check(&self.ontology)?;
        }
        self.entities = Entities::build(&self.ontology, &self.embeddings, dictionary.as_deref())?;
        self.dictionary = dictionary;
        Ok(())
    }

    /// Every head id in storage order.
    pub fn head_ids(&self) -> Vec<HeadId> {
        let mut ids = Vec::new();
        for (kind, n) in [
            (HeadKind::Value, self.value_heads.len()),
            (HeadKind::Slot, self.slot_heads.len()),
            (HeadKind::Request, self.request_heads.len()),
        ] {
            ids.extend((0..n).map(|slot| HeadId { kind, slot }));
        }
        ids
    }

    pub fn head(&self, id: HeadId) -> &Head {
        match id.kind {
            HeadKind::Value => &self.value_heads[id.slot],
            HeadKind::Slot => &self.slot_heads[id.slot],
            HeadKind::Request => &self.request_heads[id.slot],
        }
    }

    pub fn head_mut(&mut self, id: HeadId) -> &mut Head {
        match id.kind {
            HeadKind::Value => &mut self.value_heads[id.slot],
            HeadKind::Slot => &mut self.slot_heads[id.slot],
            HeadKind::Request => &mut self.request_heads[id.slot],
        }
    }

    /// Stable name of a head, e.g. `value/genre`.
    pub fn head_name(&self, id: HeadId) -> String {
        let slot = match id.kind {
            HeadKind::Value | HeadKind::Slot => &self.ontology.informable()[id.slot].name,
            HeadKind::Request => &self.ontology.requestable()[id.slot],
        };
        format!("{}/{}", id.kind.as_str(), slot)
    }

    fn slot_index(&self, slot: &str) -> Result<usize> {
        self.ontology.slot_index(slot).ok_or_else(|| Error::Argument(format!("unknown slot '{slot}'")))
    }

    fn value_index(&self, slot: &str, value: &str) -> Result<(usize, usize)> {
        let s = self.slot_index(slot)?;
        let v = self
            .ontology
            .value_index(slot, value)
            .ok_or_else(|| Error::Argument(format!("unknown value '{slot}={value}'")))?;
        Ok((s, v))
    }

    pub fn encode(&self, u: &Utterance) -> Arc<UtteranceEncoding> {
        Arc::new(UtteranceEncoding::new(u, &self.embeddings))
    }

    fn entity_input(&self, entity: &Entity, enc: &Arc<UtteranceEncoding>) -> HeadInput {
        HeadInput {
            utterance: enc.clone(),
            dots: enc.dots(&entity.embedding),
            exact: entity.patterns.match_vector(&enc.normalized),
            belief: None,
            acts: None,
            ablate: self.mode.ablate_value_specific,
        }
    }

    /// Input of the value head for value `value` of slot `slot` (both indices).
    pub fn value_input(
        &self,
        slot: usize,
        value: usize,
        enc: &Arc<UtteranceEncoding>,
        act: &SystemAct,
        belief: Option<Vec<f64>>,
    ) -> HeadInput {
        let s = &self.ontology.informable()[slot];
        let mut input = self.entity_input(&self.entities.values[slot][value], enc);
        input.acts = Some(act_feature_vector(&s.name, &s.values[value], act));
        input.belief = if self.mode.use_prev_belief { belief } else { None };
        input
    }

    pub fn slot_input(&self, slot: usize, enc: &Arc<UtteranceEncoding>, act: &SystemAct, belief: Option<Vec<f64>>) -> HeadInput {
        let name = &self.ontology.informable()[slot].name;
        let mut input = self.entity_input(&self.entities.slots[slot], enc);
        input.acts = Some(slot_act_feature_vector(name, act));
        input.belief = if self.mode.use_prev_belief { belief } else { None };
        input
    }

    pub fn request_input(&self, slot: usize, enc: &Arc<UtteranceEncoding>) -> HeadInput {
        self.entity_input(&self.entities.requests[slot], enc)
    }

    /// Maps head output classes onto `(LIKE, DISLIKE, NOT_MENTIONED)`.
    pub fn value_dist_from_output(&self, out: &[f64]) -> ValueDist {
        match self.mode.label_scheme {
            LabelScheme::Enriched3 => [out[0], out[1], out[2]],
            LabelScheme::Mention2 => [out[0], 0.0, out[1]],
        }
    }

    fn prev_value_vector(&self, slot: &str, value: &str, b: &BeliefState) -> Result<Option<Vec<f64>>> {
        if !self.mode.use_prev_belief {
            return Ok(None);
        }
        crate::features::value_belief_vector(slot, value, b, self.mode.label_scheme).map(Some)
    }

    fn prev_slot_vector(&self, slot: &str, b: &BeliefState) -> Result<Option<Vec<f64>>> {
        if !self.mode.use_prev_belief {
            return Ok(None);
        }
        crate::features::slot_belief_vector(slot, b).map(Some)
    }

    fn value_dist(&self, s: usize, v: usize, enc: &Arc<UtteranceEncoding>, act: &SystemAct, b: &BeliefState) -> Result<ValueDist> {
        let slot = &self.ontology.informable()[s];
        let prev = self.prev_value_vector(&slot.name, &slot.values[v], b)?;
        let out = self.value_heads[s].predict(&self.value_input(s, v, enc, act, prev))?;
        Ok(self.value_dist_from_output(&out))
    }

    fn free_branch(&self, s: usize, enc: &Arc<UtteranceEncoding>, act: &SystemAct, b: &BeliefState) -> Result<FreeBranch> {
        let prev = self.prev_slot_vector(&self.ontology.informable()[s].name, b)?;
        let out = self.slot_heads[s].predict(&self.slot_input(s, enc, act, prev))?;
        Ok([out[0], out[1]])
    }

    fn request_prob(&self, r: usize, enc: &Arc<UtteranceEncoding>) -> Result<f64> {
        Ok(self.request_heads[r].predict(&self.request_input(r, enc))?[0])
    }
}

/// `p(η_v)` after the current turn.
pub fn vst_update(model: &TrackerModel, slot: &str, value: &str, turn: &TurnInput, b: &BeliefState) -> Result<ValueDist> {
    let (s, v) = model.value_index(slot, value)?;
    let enc = model.encode(&turn.user);
    model.value_dist(s, v, &enc, &turn.system_act, b)
}

/// `p(ξ_s | η^s)` over `(DONT_CARE, MENTIONED, NOT_MENTIONED)` given decoded value labels.
pub fn sst_update(
    model: &TrackerModel,
    slot: &str,
    turn: &TurnInput,
    b: &BeliefState,
    eta: &BTreeMap<String, ValueLabel>,
) -> Result<[f64; 3]> {
    let s = model.slot_index(slot)?;
    if crate::state::slot_label_constraint(eta.values().copied()) == SlotConstraint::ForcedMentioned {
        return Ok([0.0, 1.0, 0.0]);
    }
    let enc = model.encode(&turn.user);
    let free = model.free_branch(s, &enc, &turn.system_act, b)?;
    Ok([free[0], 0.0, free[1]])
}

/// Probability that requestable slot `slot` is asked for in `u`.
pub fn requestable_update(model: &TrackerModel, slot: &str, u: &Utterance) -> Result<f64> {
    let r = model
        .ontology
        .requestable()
        .iter()
        .position(|x| x == slot)
        .ok_or_else(|| Error::Argument(format!("unknown requestable slot '{slot}'")))?;
    model.request_prob(r, &model.encode(u))
}

fn track_utterance(model: &TrackerModel, user: &Utterance, act: &SystemAct, b: &BeliefState) -> Result<TurnBelief> {
    let enc = model.encode(user);
    let ontology = &model.ontology;
    let mut belief = BeliefState::new(ontology);
    for (s, slot) in ontology.informable().iter().enumerate() {
        for (v, value) in slot.values.iter().enumerate() {
            let dist = model.value_dist(s, v, &enc, act, b)?;
            belief.set_value_dist(&slot.name, value, dist)?;
        }
        // The free branch is always evaluated so the belief stays a full factorized
        // distribution; it only matters when every value decodes to NOT_MENTIONED.
        let free = model.free_branch(s, &enc, act, b)?;
        belief.set_slot_cond(&slot.name, free)?;
    }
    let mut requested = BTreeMap::new();
    for (r, name) in ontology.requestable().iter().enumerate() {
        requested.insert(name.clone(), model.request_prob(r, &enc)?);
    }
    Ok(TurnBelief { belief, requested })
}

/// One belief update from the turn's transcript (`turn.user`).
pub fn track_turn(model: &TrackerModel, turn: &TurnInput, b: &BeliefState) -> Result<TurnBelief> {
    track_utterance(model, &turn.user, &turn.system_act, b)
}

/// Belief update marginalized over the N-best list: `p(·|ASR) = Σ_i P_i p(·|hyp_i)`,
/// applied to every stored marginal.
pub fn track_turn_asr(model: &TrackerModel, turn: &TurnInput, b: &BeliefState) -> Result<TurnBelief> {
    let hyps = turn.asr.as_deref().unwrap_or(&[]);
    if hyps.is_empty() {
        return Err(Error::Argument("no ASR hypotheses".into()));
    }
    if hyps.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
        return Err(Error::Argument("ASR weights must be finite and non-negative".into()));
    }
    let total: f64 = hyps.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::Argument("ASR weights sum to zero".into()));
    }
    let ontology = &model.ontology;
    let mut values: BTreeMap<(usize, usize), ValueDist> = BTreeMap::new();
    let mut frees: Vec<FreeBranch> = vec![[0.0; 2]; ontology.informable().len()];
    let mut requested: BTreeMap<String, f64> = ontology.requestable().iter().map(|r| (r.clone(), 0.0)).collect();
    for (utterance, weight) in hyps {
        let w = weight / total;
        let tb = track_utterance(model, utterance, &turn.system_act, b)?;
        for (s, slot) in ontology.informable().iter().enumerate() {
            for (v, value) in slot.values.iter().enumerate() {
                let d = tb.belief.value_dist(&slot.name, value).expect("tracked value");
                let acc = values.entry((s, v)).or_insert([0.0; 3]);
                for k in 0..3 {
                    acc[k] += w * d[k];
                }
            }
            let f = tb.belief.slot_cond(&slot.name).expect("tracked slot");
            frees[s][0] += w * f[0];
            frees[s][1] += w * f[1];
        }
        for (name, p) in &tb.requested {
            *requested.get_mut(name).expect("requestable") += w * p;
        }
    }
    let mut belief = BeliefState::new(ontology);
    for (s, slot) in ontology.informable().iter().enumerate() {
        for (v, value) in slot.values.iter().enumerate() {
            belief.set_value_dist(&slot.name, value, renormalize3(values[&(s, v)]))?;
        }
        belief.set_slot_cond(&slot.name, renormalize2(frees[s]))?;
    }
    Ok(TurnBelief { belief, requested })
}

// Mixture weights are normalized up front; these only absorb rounding drift so the
// stored distributions pass the 1e-9 check.
fn renormalize3(d: ValueDist) -> ValueDist {
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() <= 1e-12 {
        d
    } else {
        [d[0] / sum, d[1] / sum, d[2] / sum]
    }
}

fn renormalize2(d: FreeBranch) -> FreeBranch {
    let sum = d[0] + d[1];
    if (sum - 1.0).abs() <= 1e-12 {
        d
    } else {
        [d[0] / sum, d[1] / sum]
    }
}

/// Result of single-value decoding for one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SingleValue {
    Value(String),
    DontCare,
    None,
}

/// Picks at most one value: among values whose MAP label is `MENTIONED`, the one with the
/// highest `p(MENTIONED)` (earliest on ties); otherwise the free branch decides.
pub fn single_value_decode<'a, I>(mentioned: I, free: FreeBranch) -> SingleValue
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let mut best: Option<(&str, f64)> = None;
    for (value, p) in mentioned {
        let is_map_mentioned = argmax(&[p, 1.0 - p]) == 0;
        if is_map_mentioned && best.is_none_or(|(_, q)| p > q) {
            best = Some((value, p));
        }
    }
    match best {
        Some((v, _)) => SingleValue::Value(v.into()),
        None if argmax(&free) == 0 => SingleValue::DontCare,
        None => SingleValue::None,
    }
}

/// MAP state of a turn belief, with requests thresholded at [`REQUEST_THRESHOLD`].
pub fn decode(model: &TrackerModel, tb: &TurnBelief) -> StateAssignment {
    let ontology = &model.ontology;
    let mut state = match model.mode.label_scheme {
        LabelScheme::Enriched3 => map_assignment(&tb.belief, ontology),
        LabelScheme::Mention2 => {
            let mut state = StateAssignment::empty(ontology);
            for slot in ontology.informable() {
                let dists = &tb.belief.value_dists()[&slot.name];
                let candidates = slot.values.iter().map(|v| (v.as_str(), dists[v][0]));
                match single_value_decode(candidates, tb.belief.slot_conds()[&slot.name]) {
                    SingleValue::Value(v) => state.set_value_label(&slot.name, &v, ValueLabel::Like).expect("known value"),
                    SingleValue::DontCare => state.set_dont_care(&slot.name).expect("quiet slot"),
                    SingleValue::None => {}
                }
            }
            state
        }
    };
    let requested: BTreeSet<String> =
        tb.requested.iter().filter(|(_, p)| **p >= REQUEST_THRESHOLD).map(|(r, _)| r.clone()).collect();
    state.set_requested(requested);
    state
}

/// Per-turn outputs of dialog tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogTrace {
    /// Decoded per-turn predictions; only produced when turns are tracked independently.
    pub turn_level: Option<Vec<StateAssignment>>,
    /// Accumulated dialog states, one per turn.
    pub states: Vec<StateAssignment>,
}

fn step(model: &TrackerModel, turn: &TurnInput, b: &BeliefState, use_asr: bool) -> Result<TurnBelief> {
    if use_asr && turn.asr.as_ref().is_some_and(|h| !h.is_empty()) {
        track_turn_asr(model, turn, b)
    } else {
        track_turn(model, turn, b)
    }
}

/// Tracks a whole dialog. With previous-belief input the belief is threaded across turns
/// and decoded at every turn; otherwise every turn starts from the neutral prior and the
/// decoded turn predictions are folded with [`accumulate_turn`].
pub fn track_dialog_trace(model: &TrackerModel, turns: &[TurnInput], use_asr: bool) -> Result<DialogTrace> {
    let ontology = &model.ontology;
    let mut states = Vec::with_capacity(turns.len());
    if model.mode.use_prev_belief {
        let mut belief = BeliefState::new(ontology);
        for turn in turns {
            let tb = step(model, turn, &belief, use_asr)?;
            states.push(decode(model, &tb));
            belief = tb.belief;
        }
        Ok(DialogTrace { turn_level: None, states })
    } else {
        let prior = BeliefState::new(ontology);
        let mut turn_level = Vec::with_capacity(turns.len());
        let mut running = StateAssignment::empty(ontology);
        for turn in turns {
            let pred = decode(model, &step(model, turn, &prior, use_asr)?);
            running = accumulate_turn(ontology, &running, &pred);
            turn_level.push(pred);
            states.push(running.clone());
        }
        Ok(DialogTrace { turn_level: Some(turn_level), states })
    }
}

pub fn track_dialog(model: &TrackerModel, turns: &[TurnInput], use_asr: bool) -> Result<Vec<StateAssignment>> {
    track_dialog_trace(model, turns, use_asr).map(|t| t.states)
}

impl Params for TrackerModel {
    fn groups(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for id in self.head_ids() {
            let name = self.head_name(id);
            for (n, g) in self.head(id).groups() {
                out.push((format!("{name}/{n}"), g));
            }
        }
        out
    }

    fn groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let names: Vec<String> = self.head_ids().into_iter().map(|id| self.head_name(id)).collect();
        let mut out = Vec::new();
        let heads = self.value_heads.iter_mut().chain(self.slot_heads.iter_mut()).chain(self.request_heads.iter_mut());
        for (name, head) in names.into_iter().zip(heads) {
            for (n, g) in head.groups_mut() {
                out.push((format!("{name}/{n}"), g));
            }
        }
        out
    }
}
