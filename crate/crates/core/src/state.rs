//! Enriched dialog-state algebra.
//!
//! A dialog state assigns one [`ValueLabel`] to every value of every informable slot and
//! one [`SlotLabel`] to every informable slot. The belief over such states factorizes as
//!
//! ```text
//! p(ξ, η) = ∏_s p(ξ_s | η^s) ∏_{v ∈ V^s} p(η_v)
//! ```
//!
//! where `p(ξ_s = MENTIONED | η^s)` is deterministic: it is 1 whenever some value of the
//! slot carries a label other than `NOT_MENTIONED`, and 0 otherwise. Only the per-value
//! marginals and the two-way "free branch" (`DONT_CARE` vs `NOT_MENTIONED`) are stored.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Tolerance used when checking that stored distributions are normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Label of a single value `v ∈ V^s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum ValueLabel {
    Like,
    Dislike,
    #[default]
    NotMentioned,
}

impl ValueLabel {
    /// All labels in tie-break order.
    pub const ALL: [ValueLabel; 3] = [ValueLabel::Like, ValueLabel::Dislike, ValueLabel::NotMentioned];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ValueLabel::Like => "like",
            ValueLabel::Dislike => "dislike",
            ValueLabel::NotMentioned => "not_mentioned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }

    pub fn is_mentioned(self) -> bool {
        self != ValueLabel::NotMentioned
    }
}

impl fmt::Display for ValueLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label of an informable slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum SlotLabel {
    DontCare,
    Mentioned,
    #[default]
    NotMentioned,
}

impl SlotLabel {
    pub const ALL: [SlotLabel; 3] = [SlotLabel::DontCare, SlotLabel::Mentioned, SlotLabel::NotMentioned];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SlotLabel::DontCare => "dont_care",
            SlotLabel::Mentioned => "mentioned",
            SlotLabel::NotMentioned => "not_mentioned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }

    /// Position inside the two-way free branch `(DONT_CARE, NOT_MENTIONED)`.
    pub fn free_index(self) -> Option<usize> {
        match self {
            SlotLabel::DontCare => Some(0),
            SlotLabel::NotMentioned => Some(1),
            SlotLabel::Mentioned => None,
        }
    }

    pub fn from_free_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(SlotLabel::DontCare),
            1 => Some(SlotLabel::NotMentioned),
            _ => None,
        }
    }
}

impl fmt::Display for SlotLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Distribution over `(LIKE, DISLIKE, NOT_MENTIONED)`.
pub type ValueDist = [f64; 3];
/// Distribution over the free branch `(DONT_CARE, NOT_MENTIONED)`.
pub type FreeBranch = [f64; 2];

/// The neutral value distribution: certainly not mentioned.
pub const NEUTRAL_VALUE: ValueDist = [0.0, 0.0, 1.0];
/// The neutral free branch: certainly not mentioned.
pub const NEUTRAL_FREE: FreeBranch = [0.0, 1.0];

/// An informable slot and its value vocabulary `V^s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InformableSlot {
    pub name: String,
    pub values: Vec<String>,
}

/// Slot and value inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    informable: Vec<InformableSlot>,
    requestable: Vec<String>,
    single_value: BTreeSet<String>,
}

impl Ontology {
    pub fn new(
        informable: Vec<InformableSlot>,
        requestable: Vec<String>,
        single_value: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for slot in &informable {
            if slot.name.is_empty() {
                return Err(Error::Ontology("empty slot name".into()));
            }
            if !seen.insert(slot.name.as_str()) {
                return Err(Error::Ontology(format!("duplicate informable slot '{}'", slot.name)));
            }
            if slot.values.is_empty() {
                return Err(Error::Ontology(format!("slot '{}' has no values", slot.name)));
            }
            let mut values = BTreeSet::new();
            for v in &slot.values {
                if v.is_empty() {
                    return Err(Error::Ontology(format!("empty value in slot '{}'", slot.name)));
                }
                if !values.insert(v.as_str()) {
                    return Err(Error::Ontology(format!("duplicate value '{}' in slot '{}'", v, slot.name)));
                }
            }
        }
        let mut req = BTreeSet::new();
        for r in &requestable {
            if r.is_empty() {
                return Err(Error::Ontology("empty requestable slot name".into()));
            }
            if !req.insert(r.as_str()) {
                return Err(Error::Ontology(format!("duplicate requestable slot '{r}'")));
            }
        }
        let single_value: BTreeSet<String> = single_value.into_iter().collect();
        for s in &single_value {
            if !seen.contains(s.as_str()) {
                return Err(Error::Ontology(format!("single-value slot '{s}' is not informable")));
            }
        }
        Ok(Self { informable, requestable, single_value })
    }

    pub fn informable(&self) -> &[InformableSlot] {
        &self.informable
    }

    pub fn requestable(&self) -> &[String] {
        &self.requestable
    }

    pub fn single_value(&self) -> &BTreeSet<String> {
        &self.single_value
    }

    pub fn slot(&self, name: &str) -> Option<&InformableSlot> {
        self.informable.iter().find(|s| s.name == name)
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.informable.iter().position(|s| s.name == name)
    }

    pub fn value_index(&self, slot: &str, value: &str) -> Option<usize> {
        self.slot(slot)?.values.iter().position(|v| v == value)
    }

    pub fn is_requestable(&self, name: &str) -> bool {
        self.requestable.iter().any(|r| r == name)
    }

    pub fn is_single_value(&self, slot: &str) -> bool {
        self.single_value.contains(slot)
    }

    /// Total number of values across informable slots.
    pub fn value_count(&self) -> usize {
        self.informable.iter().map(|s| s.values.len()).sum()
    }

    /// A canonical textual rendering, stable across runs; used for fingerprints.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        for slot in &self.informable {
            out.push_str("i:");
            out.push_str(&slot.name);
            out.push('=');
            out.push_str(&slot.values.join("\u{1f}"));
            out.push('\u{1e}');
        }
        for r in &self.requestable {
            out.push_str("r:");
            out.push_str(r);
            out.push('\u{1e}');
        }
        for s in &self.single_value {
            out.push_str("s:");
            out.push_str(s);
            out.push('\u{1e}');
        }
        out
    }
}

/// Whether the slot label is forced by the value labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotConstraint {
    /// Some value carries a label; the slot must be `MENTIONED`.
    ForcedMentioned,
    /// All values are `NOT_MENTIONED`; the slot is `DONT_CARE` or `NOT_MENTIONED`.
    Free,
}

pub fn slot_label_constraint<I>(labels: I) -> SlotConstraint
where
    I: IntoIterator<Item = ValueLabel>,
{
    if labels.into_iter().any(ValueLabel::is_mentioned) {
        SlotConstraint::ForcedMentioned
    } else {
        SlotConstraint::Free
    }
}

/// A concrete enriched dialog state over one ontology.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StateAssignment {
    slot_labels: BTreeMap<String, SlotLabel>,
    value_labels: BTreeMap<String, BTreeMap<String, ValueLabel>>,
    requested: BTreeSet<String>,
}

impl StateAssignment {
    /// The all-`NOT_MENTIONED` state.
    pub fn empty(ontology: &Ontology) -> Self {
        let mut slot_labels = BTreeMap::new();
        let mut value_labels = BTreeMap::new();
        for slot in ontology.informable() {
            slot_labels.insert(slot.name.clone(), SlotLabel::NotMentioned);
            value_labels.insert(
                slot.name.clone(),
                slot.values.iter().map(|v| (v.clone(), ValueLabel::NotMentioned)).collect(),
            );
        }
        Self { slot_labels, value_labels, requested: BTreeSet::new() }
    }

    /// Builds a state from raw parts without checking any invariant; see [`Self::check`].
    pub fn from_parts(
        slot_labels: BTreeMap<String, SlotLabel>,
        value_labels: BTreeMap<String, BTreeMap<String, ValueLabel>>,
        requested: BTreeSet<String>,
    ) -> Self {
        Self { slot_labels, value_labels, requested }
    }

    pub fn slot_label(&self, slot: &str) -> Option<SlotLabel> {
        self.slot_labels.get(slot).copied()
    }

    pub fn value_label(&self, slot: &str, value: &str) -> Option<ValueLabel> {
        self.value_labels.get(slot)?.get(value).copied()
    }

    pub fn slot_labels(&self) -> &BTreeMap<String, SlotLabel> {
        &self.slot_labels
    }

    pub fn value_labels(&self) -> &BTreeMap<String, BTreeMap<String, ValueLabel>> {
        &self.value_labels
    }

    pub fn slot_values(&self, slot: &str) -> Option<&BTreeMap<String, ValueLabel>> {
        self.value_labels.get(slot)
    }

    pub fn requested(&self) -> &BTreeSet<String> {
        &self.requested
    }

    pub fn set_requested(&mut self, requested: BTreeSet<String>) {
        self.requested = requested;
    }

    /// Sets one value label and re-derives the slot label.
    pub fn set_value_label(&mut self, slot: &str, value: &str, label: ValueLabel) -> Result<()> {
        let values = self
            .value_labels
            .get_mut(slot)
            .ok_or_else(|| Error::Argument(format!("unknown slot '{slot}'")))?;
        let entry = values
            .get_mut(value)
            .ok_or_else(|| Error::Argument(format!("unknown value '{value}' for slot '{slot}'")))?;
        *entry = label;
        self.refresh_slot(slot);
        Ok(())
    }

    /// Marks a slot `DONT_CARE`. The slot must have no labeled values.
    pub fn set_dont_care(&mut self, slot: &str) -> Result<()> {
        let values = self
            .value_labels
            .get(slot)
            .ok_or_else(|| Error::Argument(format!("unknown slot '{slot}'")))?;
        if slot_label_constraint(values.values().copied()) == SlotConstraint::ForcedMentioned {
            return Err(Error::InconsistentAssignment(format!(
                "slot '{slot}' has labeled values and cannot be dont_care"
            )));
        }
        self.slot_labels.insert(slot.to_string(), SlotLabel::DontCare);
        Ok(())
    }

    fn refresh_slot(&mut self, slot: &str) {
        let Some(values) = self.value_labels.get(slot) else { return };
        let label = match slot_label_constraint(values.values().copied()) {
            SlotConstraint::ForcedMentioned => SlotLabel::Mentioned,
            SlotConstraint::Free => match self.slot_labels.get(slot) {
                Some(SlotLabel::DontCare) => SlotLabel::DontCare,
                _ => SlotLabel::NotMentioned,
            },
        };
        self.slot_labels.insert(slot.to_string(), label);
    }

    /// Checks coverage of the ontology, the slot/value consistency rule and the
    /// single-value rule.
    pub fn check(&self, ontology: &Ontology) -> Result<()> {
        self.check_coverage(ontology)?;
        for slot in ontology.informable() {
            let values = &self.value_labels[&slot.name];
            let label = self.slot_labels[&slot.name];
            match (slot_label_constraint(values.values().copied()), label) {
                (SlotConstraint::ForcedMentioned, SlotLabel::Mentioned) => {}
                (SlotConstraint::Free, SlotLabel::DontCare | SlotLabel::NotMentioned) => {}
                (SlotConstraint::ForcedMentioned, other) => {
                    return Err(Error::InconsistentAssignment(format!(
                        "slot '{}' has labeled values but slot label {other}",
                        slot.name
                    )))
                }
                (SlotConstraint::Free, _) => {
                    return Err(Error::InconsistentAssignment(format!(
                        "slot '{}' is mentioned but no value is labeled",
                        slot.name
                    )))
                }
            }
            if ontology.is_single_value(&slot.name) {
                let likes = values.values().filter(|l| **l == ValueLabel::Like).count();
                if likes > 1 {
                    return Err(Error::InconsistentAssignment(format!(
                        "single-value slot '{}' has {likes} liked values",
                        slot.name
                    )));
                }
            }
        }
        for r in &self.requested {
            if !ontology.is_requestable(r) {
                return Err(Error::InconsistentAssignment(format!("unknown requestable slot '{r}'")));
            }
        }
        Ok(())
    }

    fn check_coverage(&self, ontology: &Ontology) -> Result<()> {
        if self.slot_labels.len() != ontology.informable().len()
            || self.value_labels.len() != ontology.informable().len()
        {
            return Err(Error::InconsistentAssignment("assignment does not cover the ontology".into()));
        }
        for slot in ontology.informable() {
            let values = self.value_labels.get(&slot.name).ok_or_else(|| {
                Error::InconsistentAssignment(format!("missing slot '{}'", slot.name))
            })?;
            if !self.slot_labels.contains_key(&slot.name) {
                return Err(Error::InconsistentAssignment(format!("missing slot label '{}'", slot.name)));
            }
            if values.len() != slot.values.len() || slot.values.iter().any(|v| !values.contains_key(v)) {
                return Err(Error::InconsistentAssignment(format!(
                    "values of slot '{}' do not match the ontology",
                    slot.name
                )));
            }
        }
        Ok(())
    }

    /// Labels of one slot restricted to informable slot comparison (used by metrics).
    pub fn slot_matches(&self, other: &Self, slot: &str) -> bool {
        self.slot_labels.get(slot) == other.slot_labels.get(slot)
            && self.value_labels.get(slot) == other.value_labels.get(slot)
    }

    /// Whether all informable labels agree (requests are ignored).
    pub fn goal_matches(&self, other: &Self) -> bool {
        self.slot_labels == other.slot_labels && self.value_labels == other.value_labels
    }
}

/// Per-turn belief over enriched states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeliefState {
    value_dists: BTreeMap<String, BTreeMap<String, ValueDist>>,
    slot_conds: BTreeMap<String, FreeBranch>,
}

fn check_dist(dist: &[f64], what: &dyn fmt::Display) -> Result<()> {
    let sum: f64 = dist.iter().sum();
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("{what}: {dist:?}")));
    }
    Ok(())
}

impl BeliefState {
    /// The neutral prior: everything certainly not mentioned.
    pub fn new(ontology: &Ontology) -> Self {
        let mut value_dists = BTreeMap::new();
        let mut slot_conds = BTreeMap::new();
        for slot in ontology.informable() {
            value_dists.insert(
                slot.name.clone(),
                slot.values.iter().map(|v| (v.clone(), NEUTRAL_VALUE)).collect(),
            );
            slot_conds.insert(slot.name.clone(), NEUTRAL_FREE);
        }
        Self { value_dists, slot_conds }
    }

    pub fn value_dist(&self, slot: &str, value: &str) -> Option<&ValueDist> {
        self.value_dists.get(slot)?.get(value)
    }

    pub fn slot_cond(&self, slot: &str) -> Option<&FreeBranch> {
        self.slot_conds.get(slot)
    }

    pub fn value_dists(&self) -> &BTreeMap<String, BTreeMap<String, ValueDist>> {
        &self.value_dists
    }

    pub fn slot_conds(&self) -> &BTreeMap<String, FreeBranch> {
        &self.slot_conds
    }

    pub fn set_value_dist(&mut self, slot: &str, value: &str, dist: ValueDist) -> Result<()> {
        check_dist(&dist, &format_args!("{slot}={value}"))?;
        let entry = self
            .value_dists
            .get_mut(slot)
            .and_then(|m| m.get_mut(value))
            .ok_or_else(|| Error::Argument(format!("unknown value '{value}' for slot '{slot}'")))?;
        *entry = dist;
        Ok(())
    }

    pub fn set_slot_cond(&mut self, slot: &str, cond: FreeBranch) -> Result<()> {
        check_dist(&cond, &format_args!("slot {slot}"))?;
        let entry = self
            .slot_conds
            .get_mut(slot)
            .ok_or_else(|| Error::Argument(format!("unknown slot '{slot}'")))?;
        *entry = cond;
        Ok(())
    }

    /// Probability that every value of `slot` is `NOT_MENTIONED`.
    pub fn prob_all_unmentioned(&self, slot: &str) -> Option<f64> {
        Some(self.value_dists.get(slot)?.values().map(|d| d[2]).product())
    }

    /// Marginal `p(ξ_s)` over `(DONT_CARE, MENTIONED, NOT_MENTIONED)`.
    pub fn slot_marginal(&self, slot: &str) -> Option<[f64; 3]> {
        let quiet = self.prob_all_unmentioned(slot)?;
        let cond = self.slot_conds.get(slot)?;
        Some([quiet * cond[0], 1.0 - quiet, quiet * cond[1]])
    }

    /// Validates every stored distribution.
    pub fn check(&self) -> Result<()> {
        for (slot, values) in &self.value_dists {
            for (value, dist) in values {
                check_dist(dist, &format_args!("{slot}={value}"))?;
            }
        }
        for (slot, cond) in &self.slot_conds {
            check_dist(cond, &format_args!("slot {slot}"))?;
        }
        Ok(())
    }
}

/// `p(ξ = x_ξ, η = x_η)` under the factorized belief.
pub fn joint_probability(belief: &BeliefState, assignment: &StateAssignment) -> Result<f64> {
    if belief.value_dists.len() != assignment.value_labels.len() {
        return Err(Error::InconsistentAssignment("assignment does not cover the belief".into()));
    }
    let mut p = 1.0;
    for (slot, dists) in &belief.value_dists {
        let labels = assignment
            .value_labels
            .get(slot)
            .ok_or_else(|| Error::InconsistentAssignment(format!("missing slot '{slot}'")))?;
        if labels.len() != dists.len() {
            return Err(Error::InconsistentAssignment(format!("values of slot '{slot}' do not match")));
        }
        for (value, dist) in dists {
            let label = labels.get(value).ok_or_else(|| {
                Error::InconsistentAssignment(format!("missing value '{value}' of slot '{slot}'"))
            })?;
            p *= dist[label.index()];
        }
        let slot_label = assignment
            .slot_labels
            .get(slot)
            .copied()
            .ok_or_else(|| Error::InconsistentAssignment(format!("missing slot label '{slot}'")))?;
        match (slot_label_constraint(labels.values().copied()), slot_label.free_index()) {
            (SlotConstraint::ForcedMentioned, None) => {}
            (SlotConstraint::Free, Some(i)) => p *= belief.slot_conds[slot][i],
            (SlotConstraint::ForcedMentioned, Some(_)) => {
                return Err(Error::InconsistentAssignment(format!(
                    "slot '{slot}' has labeled values but is labeled {slot_label}"
                )))
            }
            (SlotConstraint::Free, None) => {
                return Err(Error::InconsistentAssignment(format!(
                    "slot '{slot}' is mentioned but no value is labeled"
                )))
            }
        }
    }
    Ok(p)
}

/// Index of the maximum; ties resolve to the earliest position.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Maximum a-posteriori decoding of a belief state.
///
/// Each value takes its most probable label. In single-value slots only the value with
/// the highest `p(LIKE)` among those decoded as `LIKE` keeps it; the others are demoted
/// to `NOT_MENTIONED`. Slot labels follow the consistency rule, with the free branch
/// decided by its own argmax.
pub fn map_assignment(belief: &BeliefState, ontology: &Ontology) -> StateAssignment {
    let mut out = StateAssignment::empty(ontology);
    for slot in ontology.informable() {
        let dists = &belief.value_dists[&slot.name];
        let mut best_like: Option<(&str, f64)> = None;
        let labels = out.value_labels.get_mut(&slot.name).expect("slot present");
        for value in &slot.values {
            let dist = &dists[value];
            let label = ValueLabel::from_index(argmax(dist)).expect("three labels");
            labels.insert(value.clone(), label);
            if label == ValueLabel::Like && best_like.is_none_or(|(_, p)| dist[0] > p) {
                best_like = Some((value.as_str(), dist[0]));
            }
        }
        if ontology.is_single_value(&slot.name) {
            if let Some((keep, _)) = best_like {
                for (value, label) in labels.iter_mut() {
                    if *label == ValueLabel::Like && value != keep {
                        *label = ValueLabel::NotMentioned;
                    }
                }
            }
        }
        let label = match slot_label_constraint(labels.values().copied()) {
            SlotConstraint::ForcedMentioned => SlotLabel::Mentioned,
            SlotConstraint::Free => {
                SlotLabel::from_free_index(argmax(&belief.slot_conds[&slot.name])).expect("two labels")
            }
        };
        out.slot_labels.insert(slot.name.clone(), label);
    }
    out
}

/// Folds a turn-level prediction into the running state.
///
/// Each value takes the turn's label unless that label is `NOT_MENTIONED`, in which case
/// the previous label is kept. In a single-value slot a newly liked value replaces any
/// previously liked one. Requests are per turn and come from `turn` alone.
pub fn accumulate_turn(ontology: &Ontology, prev: &StateAssignment, turn: &StateAssignment) -> StateAssignment {
    let mut out = StateAssignment::empty(ontology);
    for slot in ontology.informable() {
        let prev_values = prev.value_labels.get(&slot.name);
        let turn_values = turn.value_labels.get(&slot.name);
        let labels = out.value_labels.get_mut(&slot.name).expect("slot present");
        let mut turn_likes = false;
        for value in &slot.values {
            let p = prev_values.and_then(|m| m.get(value)).copied().unwrap_or_default();
            let t = turn_values.and_then(|m| m.get(value)).copied().unwrap_or_default();
            turn_likes |= t == ValueLabel::Like;
            labels.insert(value.clone(), if t.is_mentioned() { t } else { p });
        }
        if turn_likes && ontology.is_single_value(&slot.name) {
            for value in &slot.values {
                let t = turn_values.and_then(|m| m.get(value)).copied().unwrap_or_default();
                let label = labels.get_mut(value).expect("value present");
                if *label == ValueLabel::Like && t != ValueLabel::Like {
                    *label = ValueLabel::NotMentioned;
                }
            }
        }
        let label = match slot_label_constraint(labels.values().copied()) {
            SlotConstraint::ForcedMentioned => SlotLabel::Mentioned,
            SlotConstraint::Free => {
                if turn.slot_label(&slot.name) == Some(SlotLabel::DontCare) {
                    SlotLabel::DontCare
                } else {
                    match prev.slot_label(&slot.name) {
                        Some(SlotLabel::DontCare) => SlotLabel::DontCare,
                        _ => SlotLabel::NotMentioned,
                    }
                }
            }
        };
        out.slot_labels.insert(slot.name.clone(), label);
    }
    out.requested = turn.requested.clone();
    out
}

/// Polarity carried by a confirmation act.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Like,
    Dislike,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Like => "like",
            Polarity::Dislike => "dislike",
        }
    }
}

/// One act of the system's last turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActRecord {
    Request { slot: String },
    Confirm { slot: String, value: String, polarity: Polarity },
    ConfirmDontCare { slot: String },
    Inform { slot: String, value: String },
}

impl ActRecord {
    pub fn slot(&self) -> &str {
        match self {
            ActRecord::Request { slot }
            | ActRecord::Confirm { slot, .. }
            | ActRecord::ConfirmDontCare { slot }
            | ActRecord::Inform { slot, .. } => slot,
        }
    }
}

/// The system's acts at the previous turn.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SystemAct {
    pub acts: Vec<ActRecord>,
}

impl SystemAct {
    pub fn new(acts: Vec<ActRecord>) -> Self {
        Self { acts }
    }

    pub fn check(&self, ontology: &Ontology) -> Result<()> {
        for act in &self.acts {
            let slot = act.slot();
            let value = match act {
                ActRecord::Confirm { value, .. } | ActRecord::Inform { value, .. } => Some(value),
                _ => None,
            };
            match value {
                Some(value) => {
                    if ontology.value_index(slot, value).is_none() {
                        return Err(Error::Data(format!("system act names unknown value '{slot}={value}'")));
                    }
                }
                None => {
                    if ontology.slot(slot).is_none() && !ontology.is_requestable(slot) {
                        return Err(Error::Data(format!("system act names unknown slot '{slot}'")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ontology() -> Ontology {
        Ontology::new(
            vec![
                InformableSlot { name: "genre".into(), values: vec!["thriller".into(), "comedy".into()] },
                InformableSlot { name: "film".into(), values: vec!["a".into(), "b".into()] },
            ],
            vec!["length".into()],
            ["film".to_string()],
        )
        .unwrap()
    }

    #[test]
    fn neutral_prior() {
        let o = ontology();
        let b = BeliefState::new(&o);
        assert_eq!(b.value_dist("genre", "thriller"), Some(&[0.0, 0.0, 1.0]));
        assert_eq!(b.slot_cond("genre"), Some(&[0.0, 1.0]));
        let p = joint_probability(&b, &StateAssignment::empty(&o)).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn ontology_rejects_bad_input() {
        let dup = Ontology::new(
            vec![InformableSlot { name: "g".into(), values: vec!["x".into(), "x".into()] }],
            vec![],
            [],
        );
        assert!(dup.is_err());
        let empty = Ontology::new(vec![InformableSlot { name: "g".into(), values: vec![] }], vec![], []);
        assert!(empty.is_err());
        let single = Ontology::new(
            vec![InformableSlot { name: "g".into(), values: vec!["x".into()] }],
            vec![],
            ["h".to_string()],
        );
        assert!(single.is_err());
    }

    #[test]
    fn hand_product() {
        let o = Ontology::new(
            vec![InformableSlot { name: "s".into(), values: vec!["v".into()] }],
            vec![],
            [],
        )
        .unwrap();
        let mut b = BeliefState::new(&o);
        b.set_value_dist("s", "v", [0.5, 0.2, 0.3]).unwrap();
        b.set_slot_cond("s", [0.4, 0.6]).unwrap();
        let mut x = StateAssignment::empty(&o);
        x.set_value_label("s", "v", ValueLabel::Like).unwrap();
        assert_eq!(x.slot_label("s"), Some(SlotLabel::Mentioned));
        assert!((joint_probability(&b, &x).unwrap() - 0.5).abs() < 1e-15);

        let mut dc = StateAssignment::empty(&o);
        dc.set_dont_care("s").unwrap();
        assert!((joint_probability(&b, &dc).unwrap() - 0.3 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_assignment_is_rejected() {
        let o = ontology();
        let b = BeliefState::new(&o);
        let mut x = StateAssignment::empty(&o);
        x.set_value_label("genre", "thriller", ValueLabel::Like).unwrap();
        let mut slots = x.slot_labels().clone();
        slots.insert("genre".into(), SlotLabel::NotMentioned);
        let bad = StateAssignment::from_parts(slots, x.value_labels().clone(), BTreeSet::new());
        assert!(matches!(joint_probability(&b, &bad), Err(Error::InconsistentAssignment(_))));
        assert!(bad.check(&o).is_err());

        let mut slots = StateAssignment::empty(&o).slot_labels().clone();
        slots.insert("genre".into(), SlotLabel::Mentioned);
        let bad = StateAssignment::from_parts(slots, StateAssignment::empty(&o).value_labels().clone(), BTreeSet::new());
        assert!(matches!(joint_probability(&b, &bad), Err(Error::InconsistentAssignment(_))));
    }

    #[test]
    fn dont_care_requires_quiet_slot() {
        let o = ontology();
        let mut x = StateAssignment::empty(&o);
        x.set_value_label("genre", "comedy", ValueLabel::Dislike).unwrap();
        assert!(x.set_dont_care("genre").is_err());
    }

    #[test]
    fn constraint_examples() {
        use ValueLabel::*;
        assert_eq!(slot_label_constraint([Like, NotMentioned]), SlotConstraint::ForcedMentioned);
        assert_eq!(slot_label_constraint([NotMentioned, NotMentioned]), SlotConstraint::Free);
        assert_eq!(slot_label_constraint([Dislike]), SlotConstraint::ForcedMentioned);
    }

    #[test]
    fn map_argmax_and_ties() {
        let o = ontology();
        let mut b = BeliefState::new(&o);
        b.set_value_dist("genre", "thriller", [0.6, 0.1, 0.3]).unwrap();
        b.set_value_dist("genre", "comedy", [0.35, 0.35, 0.30]).unwrap();
        let x = map_assignment(&b, &o);
        assert_eq!(x.value_label("genre", "thriller"), Some(ValueLabel::Like));
        assert_eq!(x.value_label("genre", "comedy"), Some(ValueLabel::Like));
        assert_eq!(x.slot_label("genre"), Some(SlotLabel::Mentioned));
        assert_eq!(x.slot_label("film"), Some(SlotLabel::NotMentioned));
    }

    #[test]
    fn map_single_value_keeps_best_like() {
        let o = ontology();
        let mut b = BeliefState::new(&o);
        b.set_value_dist("film", "a", [0.7, 0.1, 0.2]).unwrap();
        b.set_value_dist("film", "b", [0.9, 0.05, 0.05]).unwrap();
        let x = map_assignment(&b, &o);
        assert_eq!(x.value_label("film", "a"), Some(ValueLabel::NotMentioned));
        assert_eq!(x.value_label("film", "b"), Some(ValueLabel::Like));
        x.check(&o).unwrap();
    }

    #[test]
    fn map_free_branch_tie_prefers_dont_care() {
        let o = ontology();
        let mut b = BeliefState::new(&o);
        b.set_slot_cond("genre", [0.5, 0.5]).unwrap();
        assert_eq!(map_assignment(&b, &o).slot_label("genre"), Some(SlotLabel::DontCare));
    }

    #[test]
    fn accumulate_examples() {
        let o = ontology();
        let mut prev = StateAssignment::empty(&o);
        prev.set_value_label("genre", "thriller", ValueLabel::Like).unwrap();
        let quiet = StateAssignment::empty(&o);
        let acc = accumulate_turn(&o, &prev, &quiet);
        assert_eq!(acc.value_label("genre", "thriller"), Some(ValueLabel::Like));

        let mut turn = StateAssignment::empty(&o);
        turn.set_value_label("genre", "comedy", ValueLabel::Like).unwrap();
        let acc = accumulate_turn(&o, &StateAssignment::empty(&o), &turn);
        assert_eq!(acc.value_label("genre", "comedy"), Some(ValueLabel::Like));

        let mut change = StateAssignment::empty(&o);
        change.set_value_label("genre", "thriller", ValueLabel::Dislike).unwrap();
        let acc = accumulate_turn(&o, &prev, &change);
        assert_eq!(acc.value_label("genre", "thriller"), Some(ValueLabel::Dislike));
    }

    #[test]
    fn accumulate_single_value_replaces_like() {
        let o = ontology();
        let mut prev = StateAssignment::empty(&o);
        prev.set_value_label("film", "a", ValueLabel::Like).unwrap();
        let mut turn = StateAssignment::empty(&o);
        turn.set_value_label("film", "b", ValueLabel::Like).unwrap();
        let acc = accumulate_turn(&o, &prev, &turn);
        assert_eq!(acc.value_label("film", "a"), Some(ValueLabel::NotMentioned));
        assert_eq!(acc.value_label("film", "b"), Some(ValueLabel::Like));
        acc.check(&o).unwrap();
    }

    #[test]
    fn accumulate_dont_care_and_requests() {
        let o = ontology();
        let mut prev = StateAssignment::empty(&o);
        prev.set_dont_care("genre").unwrap();
        prev.set_requested(["length".to_string()].into_iter().collect());
        let acc = accumulate_turn(&o, &prev, &StateAssignment::empty(&o));
        assert_eq!(acc.slot_label("genre"), Some(SlotLabel::DontCare));
        assert!(acc.requested().is_empty());

        let mut turn = StateAssignment::empty(&o);
        turn.set_value_label("genre", "comedy", ValueLabel::Like).unwrap();
        let acc = accumulate_turn(&o, &prev, &turn);
        assert_eq!(acc.slot_label("genre"), Some(SlotLabel::Mentioned));
    }

    #[test]
    fn slot_marginal_sums_to_one() {
        let o = ontology();
        let mut b = BeliefState::new(&o);
        b.set_value_dist("genre", "thriller", [0.2, 0.3, 0.5]).unwrap();
        b.set_value_dist("genre", "comedy", [0.1, 0.1, 0.8]).unwrap();
        b.set_slot_cond("genre", [0.25, 0.75]).unwrap();
        let m = b.slot_marginal("genre").unwrap();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((m[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn distributions_are_validated() {
        let o = ontology();
        let mut b = BeliefState::new(&o);
        assert!(b.set_value_dist("genre", "thriller", [0.5, 0.5, 0.5]).is_err());
        assert!(b.set_value_dist("genre", "thriller", [-0.1, 0.1, 1.0]).is_err());
        assert!(b.set_slot_cond("genre", [0.3, 0.3]).is_err());
        assert!(b.set_value_dist("genre", "nope", [0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn system_act_validation() {
        let o = ontology();
        let ok = SystemAct::new(vec![
            ActRecord::Request { slot: "genre".into() },
            ActRecord::Request { slot: "length".into() },
            ActRecord::Confirm { slot: "genre".into(), value: "comedy".into(), polarity: Polarity::Like },
        ]);
        ok.check(&o).unwrap();
        let bad = SystemAct::new(vec![ActRecord::Inform { slot: "genre".into(), value: "horror".into() }]);
        assert!(bad.check(&o).is_err());
    }
}
