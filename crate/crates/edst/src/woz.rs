//! Adapter for the WOZ 2.0 / DSTC2 JSON layout used by neural belief tracker releases.
//!
//! Input is a list of dialogues, each `{"dialogue_idx", "dialogue": [turn...]}` where a
//! turn carries `transcript`, optional `asr` (`[[text, score], ...]`), `system_acts`
//! (a bare slot name for a request, `[slot, value]` for a confirmation) and
//! `turn_label` (`[slot, value]` pairs; slot `request` lists requested slots).
//! A `dontcare` value becomes a turn-level `DONT_CARE` slot label.

use std::collections::BTreeSet;

use edst_core::corpus::{Dialog, Hypothesis, Turn};
use edst_core::features::Utterance;
use edst_core::state::{ActRecord, Ontology, Polarity, StateAssignment, SystemAct, ValueLabel};
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub const DONT_CARE_VALUE: &str = "dontcare";

#[derive(Debug, Clone, Copy, Default)]
pub struct ConvertOptions {
    /// Drop labels and acts naming values outside the ontology instead of failing.
    pub skip_unknown: bool,
}

/// Counts of items dropped under [`ConvertOptions::skip_unknown`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConvertReport {
    pub dialogs: usize,
    pub turns: usize,
    pub skipped_labels: usize,
    pub skipped_acts: usize,
}

#[derive(Deserialize)]
struct WozDialog {
    dialogue_idx: Value,
    dialogue: Vec<WozTurn>,
}

#[derive(Deserialize)]
struct WozTurn {
    #[serde(default)]
    transcript: String,
    #[serde(default)]
    asr: Vec<(String, f64)>,
    #[serde(default)]
    system_acts: Vec<Value>,
    #[serde(default)]
    turn_label: Vec<(String, String)>,
}

/// Lowercases and splits on whitespace, trimming punctuation around tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn id_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn convert(text: &str, ontology: &Ontology, options: ConvertOptions) -> Result<(Vec<Dialog>, ConvertReport)> {
    let raw: Vec<WozDialog> = serde_json::from_str(text).map_err(|e| Error::Format(format!("woz input: {e}")))?;
    let mut report = ConvertReport::default();
    let mut dialogs = Vec::with_capacity(raw.len());
    for d in raw {
        let id = id_string(&d.dialogue_idx);
        let mut turns = Vec::with_capacity(d.dialogue.len());
        for (t, w) in d.dialogue.into_iter().enumerate() {
            let at = |m: String| Error::Format(format!("woz dialog '{id}' turn {t}: {m}"));
            let mut acts = Vec::new();
            for act in &w.system_acts {
                let record = match act {
                    Value::String(slot) => ActRecord::Request { slot: slot.clone() },
                    Value::Array(pair) => match pair.as_slice() {
                        [Value::String(slot), Value::String(value)] if value == DONT_CARE_VALUE => {
                            ActRecord::ConfirmDontCare { slot: slot.clone() }
                        }
                        [Value::String(slot), Value::String(value)] => ActRecord::Confirm {
                            slot: slot.clone(),
                            value: value.clone(),
                            polarity: Polarity::Like,
                        },
                        _ => return Err(at(format!("unreadable system act {act}"))),
                    },
                    _ => return Err(at(format!("unreadable system act {act}"))),
                };
                let known = SystemAct::new(vec![record.clone()]).check(ontology).is_ok();
                match (known, options.skip_unknown) {
                    (true, _) => acts.push(record),
                    (false, true) => report.skipped_acts += 1,
                    (false, false) => return Err(at(format!("system act {act} is not in the ontology"))),
                }
            }
            let mut gold = StateAssignment::empty(ontology);
            let mut requested = BTreeSet::new();
            let mut dont_care = Vec::new();
            for (slot, value) in &w.turn_label {
                let ok = if slot == "request" {
                    let known = ontology.is_requestable(value);
                    if known {
                        requested.insert(value.clone());
                    }
                    known
                } else if value == DONT_CARE_VALUE {
                    let known = ontology.slot(slot).is_some();
                    if known {
                        dont_care.push(slot.clone());
                    }
                    known
                } else {
                    gold.set_value_label(slot, value, ValueLabel::Like).is_ok()
                };
                match (ok, options.skip_unknown) {
                    (true, _) => {}
                    (false, true) => report.skipped_labels += 1,
                    (false, false) => return Err(at(format!("label {slot}={value} is not in the ontology"))),
                }
            }
            for slot in dont_care {
                if gold.set_dont_care(&slot).is_err() {
                    return Err(at(format!("slot '{slot}' is both dontcare and valued")));
                }
            }
            gold.set_requested(requested.clone());
            let asr = (!w.asr.is_empty())
                .then(|| {
                    w.asr
                        .iter()
                        .map(|(text, score)| Ok(Hypothesis { tokens: Utterance::new(tokenize(text))?, score: *score }))
                        .collect::<std::result::Result<Vec<_>, edst_core::Error>>()
                })
                .transpose()?;
            turns.push(Turn {
                system_acts: SystemAct::new(acts),
                user: Utterance::new(tokenize(&w.transcript))?,
                asr,
                gold_turn: Some(gold),
                gold_state: None,
                requested_gold: requested,
            });
        }
        report.turns += turns.len();
        dialogs.push(Dialog { id, turns });
    }
    report.dialogs = dialogs.len();
    for dialog in &dialogs {
        dialog.check(ontology)?;
        dialog.gold_states(ontology)?;
    }
    Ok((dialogs, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::parse_ontology;
    use edst_core::state::SlotLabel;

    fn ontology() -> Ontology {
        parse_ontology(
            r#"{"informable": {"food": ["italian", "thai"], "area": ["north", "south"]},
                "requestable": ["phone", "address", "food", "area"], "single_value": ["food", "area"]}"#,
        )
        .unwrap()
    }

    const SAMPLE: &str = r#"[{"dialogue_idx": 0, "dialogue": [
        {"turn_idx": 0, "transcript": "Cheap Italian food, any area.", "system_transcript": "",
         "asr": [["cheap italian food any area", 0.9], ["cheap thai food", 0.1]],
         "system_acts": [], "turn_label": [["food", "italian"], ["area", "dontcare"]],
         "belief_state": []},
        {"turn_idx": 1, "transcript": "what is the phone number", "system_transcript": "",
         "system_acts": ["food", ["area", "north"]], "turn_label": [["request", "phone"]]}
    ]}]"#;

    #[test]
    fn converts_labels_requests_and_acts() {
        let o = ontology();
        let (dialogs, report) = convert(SAMPLE, &o, ConvertOptions::default()).unwrap();
        assert_eq!(report.turns, 2);
        let t0 = &dialogs[0].turns[0];
        assert_eq!(t0.user.tokens(), ["cheap", "italian", "food", "any", "area"]);
        let g = t0.gold_turn.as_ref().unwrap();
        assert_eq!(g.value_label("food", "italian"), Some(ValueLabel::Like));
        assert_eq!(g.slot_label("area"), Some(SlotLabel::DontCare));
        assert_eq!(t0.asr.as_ref().unwrap().len(), 2);
        let t1 = &dialogs[0].turns[1];
        assert!(t1.requested_gold.contains("phone"));
        assert_eq!(t1.system_acts.acts.len(), 2);
        let states = dialogs[0].gold_states(&o).unwrap();
        assert_eq!(states[1].value_label("food", "italian"), Some(ValueLabel::Like));
    }

    #[test]
    fn unknown_values_fail_or_are_skipped() {
        let o = ontology();
        let text = SAMPLE.replace(r#"["food", "italian"]"#, r#"["food", "korean"]"#);
        assert!(matches!(convert(&text, &o, ConvertOptions::default()), Err(Error::Format(_))));
        let (_, report) = convert(&text, &o, ConvertOptions { skip_unknown: true }).unwrap();
        assert_eq!(report.skipped_labels, 1);
    }
}
