//! JSON and text file formats: ontology, corpus, embeddings, dictionary and metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use edst_core::corpus::{Dialog, Hypothesis, Turn};
use edst_core::eval::Metrics;
use edst_core::features::{EmbeddingTable, SemanticDictionary, Utterance};
use edst_core::state::{ActRecord, InformableSlot, Ontology, Polarity, SlotLabel, StateAssignment, SystemAct, ValueLabel};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Ontology

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyRecord {
    /// Object keys keep file order, which fixes slot order.
    informable: Map<String, Value>,
    #[serde(default)]
    requestable: Vec<String>,
    #[serde(default)]
    single_value: Vec<String>,
}

pub fn parse_ontology(text: &str) -> Result<Ontology> {
    let record: OntologyRecord = serde_json::from_str(text).map_err(|e| Error::Format(format!("ontology: {e}")))?;
    let mut informable = Vec::with_capacity(record.informable.len());
    for (name, values) in record.informable {
        let values: Vec<String> = serde_json::from_value(values)
            .map_err(|e| Error::Format(format!("ontology: values of slot '{name}': {e}")))?;
        informable.push(InformableSlot { name, values });
    }
    Ok(Ontology::new(informable, record.requestable, record.single_value)?)
}

pub fn ontology_to_string(ontology: &Ontology) -> String {
    let record = OntologyRecord {
        informable: ontology
            .informable()
            .iter()
            .map(|s| (s.name.clone(), Value::from(s.values.clone())))
            .collect(),
        requestable: ontology.requestable().to_vec(),
        single_value: ontology.single_value().iter().cloned().collect(),
    };
    pretty(&record)
}

pub fn load_ontology(path: &Path) -> Result<Ontology> {
    parse_ontology(&read_text(path)?).map_err(|e| match e {
        Error::Format(m) => format_err(path, m),
        other => other,
    })
}

// ---------------------------------------------------------------------------
// Corpus

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "act", deny_unknown_fields)]
enum ActJson {
    #[serde(rename = "request")]
    Request { slot: String },
    #[serde(rename = "confirm")]
    Confirm { slot: String, value: String, polarity: PolarityJson },
    #[serde(rename = "confirm_dontcare")]
    ConfirmDontCare { slot: String },
    #[serde(rename = "inform")]
    Inform { slot: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PolarityJson {
    Like,
    Dislike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HypothesisJson {
    tokens: Vec<String>,
    score: f64,
}

type ValueLabels = BTreeMap<String, BTreeMap<String, String>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateJson {
    #[serde(default)]
    slots: BTreeMap<String, String>,
    #[serde(default)]
    values: ValueLabels,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelsJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    turn: Option<ValueLabels>,
    /// Turn-level slot labels; carries `dont_care` expressed by the turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    turn_slots: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<StateJson>,
    #[serde(default)]
    requested: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnJson {
    #[serde(default)]
    system_acts: Vec<ActJson>,
    user: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    asr: Option<Vec<HypothesisJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<LabelsJson>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDialog {
    id: String,
    turns: Vec<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    dialogs: Vec<RawDialog>,
}

#[derive(Serialize)]
struct DialogOut {
    id: String,
    turns: Vec<TurnJson>,
}

#[derive(Serialize)]
struct CorpusOut {
    dialogs: Vec<DialogOut>,
}

fn utterance(tokens: Vec<String>) -> Result<Utterance> {
    Utterance::new(tokens).map_err(|e| Error::Format(e.to_string()))
}

fn value_label(s: &str) -> Result<ValueLabel> {
    ValueLabel::parse(s).ok_or_else(|| Error::Format(format!("unknown value label '{s}'")))
}

fn slot_label(s: &str) -> Result<SlotLabel> {
    SlotLabel::parse(s).ok_or_else(|| Error::Format(format!("unknown slot label '{s}'")))
}

fn known_slot<'o>(ontology: &'o Ontology, slot: &str) -> Result<&'o InformableSlot> {
    ontology
        .slot(slot)
        .ok_or_else(|| Error::Core(edst_core::Error::Ontology(format!("unknown informable slot '{slot}'"))))
}

/// Builds an assignment from sparse labels; omitted labels stay `NOT_MENTIONED`.
fn assignment(
    ontology: &Ontology,
    values: &ValueLabels,
    slots: &BTreeMap<String, String>,
    requested: &BTreeSet<String>,
) -> Result<StateAssignment> {
    let mut state = StateAssignment::empty(ontology);
    for (slot, labels) in values {
        let informable = known_slot(ontology, slot)?;
        for (value, label) in labels {
            if !informable.values.contains(value) {
                return Err(Error::Core(edst_core::Error::Ontology(format!("unknown value '{value}' for slot '{slot}'"))));
            }
            state.set_value_label(slot, value, value_label(label)?)?;
        }
    }
    for (slot, label) in slots {
        known_slot(ontology, slot)?;
        match slot_label(label)? {
            SlotLabel::DontCare => state.set_dont_care(slot)?,
            expected => {
                if state.slot_label(slot) != Some(expected) {
                    return Err(Error::Core(edst_core::Error::InconsistentAssignment(format!(
                        "slot '{slot}' is labeled {expected} but its values say otherwise"
                    ))));
                }
            }
        }
    }
    state.set_requested(requested.clone());
    state.check(ontology)?;
    Ok(state)
}

fn parse_act(act: ActJson) -> ActRecord {
    match act {
        ActJson::Request { slot } => ActRecord::Request { slot },
        ActJson::Confirm { slot, value, polarity } => ActRecord::Confirm {
            slot,
            value,
            polarity: match polarity {
                PolarityJson::Like => Polarity::Like,
                PolarityJson::Dislike => Polarity::Dislike,
            },
        },
        ActJson::ConfirmDontCare { slot } => ActRecord::ConfirmDontCare { slot },
        ActJson::Inform { slot, value } => ActRecord::Inform { slot, value },
    }
}

fn act_json(act: &ActRecord) -> ActJson {
    match act.clone() {
        ActRecord::Request { slot } => ActJson::Request { slot },
        ActRecord::Confirm { slot, value, polarity } => ActJson::Confirm {
            slot,
            value,
            polarity: match polarity {
                Polarity::Like => PolarityJson::Like,
                Polarity::Dislike => PolarityJson::Dislike,
            },
        },
        ActRecord::ConfirmDontCare { slot } => ActJson::ConfirmDontCare { slot },
        ActRecord::Inform { slot, value } => ActJson::Inform { slot, value },
    }
}

fn turn_from_json(record: TurnJson, ontology: &Ontology) -> Result<Turn> {
    let system_acts = SystemAct::new(record.system_acts.into_iter().map(parse_act).collect());
    system_acts.check(ontology)?;
    let asr = record
        .asr
        .map(|hyps| {
            hyps.into_iter()
                .map(|h| Ok(Hypothesis { tokens: utterance(h.tokens)?, score: h.score }))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let mut turn = Turn { system_acts, user: utterance(record.user)?, asr, ..Turn::default() };
    if let Some(labels) = record.labels {
        let requested: BTreeSet<String> = labels.requested.iter().cloned().collect();
        if let Some(r) = requested.iter().find(|r| !ontology.is_requestable(r)) {
            return Err(Error::Core(edst_core::Error::Ontology(format!("unknown requestable slot '{r}'"))));
        }
        if labels.turn.is_some() || labels.turn_slots.is_some() {
            let values = labels.turn.unwrap_or_default();
            let slots = labels.turn_slots.unwrap_or_default();
            turn.gold_turn = Some(assignment(ontology, &values, &slots, &requested)?);
        }
        if let Some(state) = labels.state {
            turn.gold_state = Some(assignment(ontology, &state.values, &state.slots, &requested)?);
        }
        turn.requested_gold = requested;
    }
    Ok(turn)
}

/// Parses one turn record (the corpus turn schema; labels optional).
pub fn parse_turn(value: Value, ontology: &Ontology) -> Result<Turn> {
    let record: TurnJson = serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))?;
    turn_from_json(record, ontology)
}

fn sparse_values(state: &StateAssignment) -> ValueLabels {
    state
        .value_labels()
        .iter()
        .filter_map(|(slot, values)| {
            let labeled: BTreeMap<String, String> = values
                .iter()
                .filter(|(_, l)| l.is_mentioned())
                .map(|(v, l)| (v.clone(), l.as_str().to_string()))
                .collect();
            (!labeled.is_empty()).then(|| (slot.clone(), labeled))
        })
        .collect()
}

fn sparse_slots(state: &StateAssignment, keep: impl Fn(SlotLabel) -> bool) -> BTreeMap<String, String> {
    state
        .slot_labels()
        .iter()
        .filter(|(_, l)| keep(**l))
        .map(|(s, l)| (s.clone(), l.as_str().to_string()))
        .collect()
}

/// Serializable state in the corpus `state` schema, listing only non-default labels.
pub fn state_json(state: &StateAssignment) -> Value {
    let record = StateJson {
        slots: sparse_slots(state, |l| l != SlotLabel::NotMentioned),
        values: sparse_values(state),
    };
    serde_json::to_value(record).expect("serializable state")
}

fn turn_json(turn: &Turn) -> TurnJson {
    let has_labels = turn.gold_turn.is_some() || turn.gold_state.is_some() || !turn.requested_gold.is_empty();
    let labels = has_labels.then(|| LabelsJson {
        turn: turn.gold_turn.as_ref().map(sparse_values),
        turn_slots: turn.gold_turn.as_ref().and_then(|g| {
            let slots = sparse_slots(g, |l| l == SlotLabel::DontCare);
            (!slots.is_empty()).then_some(slots)
        }),
        state: turn.gold_state.as_ref().map(|g| StateJson {
            slots: sparse_slots(g, |l| l != SlotLabel::NotMentioned),
            values: sparse_values(g),
        }),
        requested: turn.requested_gold.iter().cloned().collect(),
    });
    TurnJson {
        system_acts: turn.system_acts.acts.iter().map(act_json).collect(),
        user: turn.user.tokens().to_vec(),
        asr: turn.asr.as_ref().map(|hyps| {
            hyps.iter().map(|h| HypothesisJson { tokens: h.tokens.tokens().to_vec(), score: h.score }).collect()
        }),
        labels,
    }
}

/// Parses and validates a corpus. Errors name the dialog and turn.
pub fn parse_corpus(text: &str, ontology: &Ontology) -> Result<Vec<Dialog>> {
    let raw: RawCorpus = serde_json::from_str(text).map_err(|e| Error::Format(format!("corpus: {e}")))?;
    let mut ids = BTreeSet::new();
    let mut dialogs = Vec::with_capacity(raw.dialogs.len());
    for (d, raw_dialog) in raw.dialogs.into_iter().enumerate() {
        if raw_dialog.id.is_empty() {
            return Err(Error::Format(format!("dialog #{d} has an empty id")));
        }
        if !ids.insert(raw_dialog.id.clone()) {
            return Err(Error::Format(format!("duplicate dialog id '{}'", raw_dialog.id)));
        }
        let mut turns = Vec::with_capacity(raw_dialog.turns.len());
        for (t, value) in raw_dialog.turns.into_iter().enumerate() {
            let at = |e: Error| match e {
                Error::Format(m) => Error::Format(format!("dialog '{}' turn {t}: {m}", raw_dialog.id)),
                Error::Core(c) => Error::Core(edst_core::Error::Data(format!("dialog '{}' turn {t}: {c}", raw_dialog.id))),
                other => other,
            };
            turns.push(parse_turn(value, ontology).map_err(at)?);
        }
        let dialog = Dialog { id: raw_dialog.id, turns };
        dialog.check(ontology)?;
        dialogs.push(dialog);
    }
    Ok(dialogs)
}

pub fn corpus_to_string(dialogs: &[Dialog]) -> String {
    let out = CorpusOut {
        dialogs: dialogs
            .iter()
            .map(|d| DialogOut { id: d.id.clone(), turns: d.turns.iter().map(turn_json).collect() })
            .collect(),
    };
    pretty(&out)
}

pub fn load_corpus(path: &Path, ontology: &Ontology) -> Result<Vec<Dialog>> {
    parse_corpus(&read_text(path)?, ontology).map_err(|e| match e {
        Error::Format(m) => format_err(path, m),
        other => other,
    })
}

pub fn save_corpus(path: &Path, dialogs: &[Dialog]) -> Result<()> {
    write_text(path, &corpus_to_string(dialogs))
}

// ---------------------------------------------------------------------------
// Embeddings

/// Parses `token v1 ... vd` lines. A leading `count dim` header line is skipped, blank
/// lines are ignored and duplicate tokens keep their first vector.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if i == 0 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        let vector = rest
            .iter()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Format(format!("embeddings line {}: {e}", i + 1)))?;
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("embeddings line {}: non-finite component", i + 1)));
        }
        let table = match &mut table {
            Some(t) => t,
            None => table.insert(
                EmbeddingTable::new(vector.len())
                    .map_err(|_| Error::Format(format!("embeddings line {}: no vector components", i + 1)))?,
            ),
        };
        if vector.len() != table.dim() {
            return Err(Error::Format(format!(
                "embeddings line {}: {} components, expected {}",
                i + 1,
                vector.len(),
                table.dim()
            )));
        }
        table.insert(token.to_string(), &vector)?;
    }
    table.ok_or_else(|| Error::Format("embeddings: no vectors".into()))
}

pub fn embeddings_to_string(table: &EmbeddingTable) -> String {
    let mut out = String::new();
    for token in table.tokens() {
        out.push_str(token);
        for x in table.lookup(token) {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    parse_embeddings(&read_text(path)?).map_err(|e| match e {
        Error::Format(m) => format_err(path, m),
        other => other,
    })
}

// ---------------------------------------------------------------------------
// Semantic dictionary

/// `{entity: ["synonym phrase", ...]}`; phrases split on whitespace.
pub fn parse_dictionary(text: &str) -> Result<SemanticDictionary> {
    let record: BTreeMap<String, Vec<String>> =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("dictionary: {e}")))?;
    let mut dict = SemanticDictionary::new();
    for (entity, phrases) in record {
        let synonyms: Vec<Vec<String>> =
            phrases.iter().map(|p| p.split_whitespace().map(String::from).collect::<Vec<_>>()).collect();
        if synonyms.iter().any(Vec::is_empty) {
            return Err(Error::Format(format!("dictionary: empty synonym for '{entity}'")));
        }
        dict.insert(entity, synonyms);
    }
    Ok(dict)
}

pub fn dictionary_json(dict: &SemanticDictionary) -> Value {
    let record: BTreeMap<&String, Vec<String>> =
        dict.entries().iter().map(|(k, syns)| (k, syns.iter().map(|s| s.join(" ")).collect())).collect();
    serde_json::to_value(record).expect("serializable dictionary")
}

pub fn dictionary_to_string(dict: &SemanticDictionary) -> String {
    pretty(&dictionary_json(dict))
}

pub fn load_dictionary(path: &Path) -> Result<SemanticDictionary> {
    parse_dictionary(&read_text(path)?).map_err(|e| match e {
        Error::Format(m) => format_err(path, m),
        other => other,
    })
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Serialize)]
struct MetricsJson<'a> {
    turn_goal: Option<f64>,
    joint_goal: f64,
    request: f64,
    per_slot: &'a BTreeMap<String, f64>,
    turns: usize,
}

pub fn metrics_json(m: &Metrics) -> Value {
    serde_json::to_value(MetricsJson {
        turn_goal: m.turn_goal,
        joint_goal: m.joint_goal,
        request: m.request,
        per_slot: &m.per_slot,
        turns: m.turns,
    })
    .expect("serializable metrics")
}
