//! Delexicalised template baseline: value mentions become slot placeholders, and an
//! incoming utterance takes the labels of the most similar stored pattern.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{Dialog, Turn};
use crate::eval::DialogPrediction;
use crate::features::{normalize_utterance, EntityPatterns, SemanticDictionary, Utterance};
use crate::state::{accumulate_turn, Ontology, SlotLabel, StateAssignment, ValueLabel};

/// Default similarity threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// A value mention found in an utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub slot: usize,
    pub value: usize,
}

/// Placeholder token of a slot, e.g. `<GENRE>`.
pub fn placeholder(slot: &str) -> String {
    format!("<{}>", slot.to_uppercase())
}

/// Matches value names and synonyms in utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct Delexicaliser {
    patterns: Vec<(usize, usize, EntityPatterns)>,
    placeholders: Vec<String>,
}

impl Delexicaliser {
    pub fn new(ontology: &Ontology, dict: Option<&SemanticDictionary>) -> Self {
        let mut patterns = Vec::new();
        for (s, slot) in ontology.informable().iter().enumerate() {
            for (v, value) in slot.values.iter().enumerate() {
                patterns.push((s, v, EntityPatterns::new(value, dict)));
            }
        }
        let placeholders = ontology.informable().iter().map(|s| placeholder(&s.name)).collect();
        Self { patterns, placeholders }
    }

    /// Replaces mentions left to right, longest match first, and returns the pattern
    /// together with the mentions in order of appearance.
    pub fn delexicalise(&self, u: &Utterance) -> (Vec<String>, Vec<Mention>) {
        let tokens = normalize_utterance(u);
        let mut spans: Vec<(usize, usize, usize, usize)> = Vec::new();
        for (s, v, p) in &self.patterns {
            for (start, end) in p.find(&tokens) {
                spans.push((start, end, *s, *v));
            }
        }
        // earliest start, then longest span, then ontology order
        spans.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then((a.2, a.3).cmp(&(b.2, b.3))));
        let mut out = Vec::new();
        let mut mentions = Vec::new();
        let mut i = 0;
        let mut next = spans.iter().peekable();
        while i < tokens.len() {
            while next.peek().is_some_and(|s| s.0 < i) {
                next.next();
            }
            match next.peek() {
                Some(&&(start, end, s, v)) if start == i => {
                    out.push(self.placeholders[s].clone());
                    mentions.push(Mention { slot: s, value: v });
                    i = end;
                }
                _ => {
                    out.push(tokens[i].clone());
                    i += 1;
                }
            }
        }
        (out, mentions)
    }
}

/// A stored pattern and the labels it implies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub pattern: Vec<String>,
    /// Slot and label of every placeholder, in order.
    pub placeholders: Vec<(usize, ValueLabel)>,
    pub dont_care: BTreeSet<String>,
    pub requested: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub templates: Vec<Template>,
    pub threshold: f64,
}

fn template_of(ontology: &Ontology, delex: &Delexicaliser, turn: &Turn) -> Option<Template> {
    let gold = turn.gold_turn.as_ref()?;
    let (pattern, mentions) = delex.delexicalise(&turn.user);
    let mut labeled: Vec<(usize, usize)> = Vec::new();
    for (s, slot) in ontology.informable().iter().enumerate() {
        for (v, value) in slot.values.iter().enumerate() {
            if gold.value_label(&slot.name, value).is_some_and(ValueLabel::is_mentioned) {
                labeled.push((s, v));
            }
        }
    }
    let dont_care: BTreeSet<String> = gold
        .slot_labels()
        .iter()
        .filter(|(_, l)| **l == SlotLabel::DontCare)
        .map(|(s, _)| s.clone())
        .collect();
    if labeled.is_empty() && dont_care.is_empty() && turn.requested_gold.is_empty() {
        return None;
    }
    if !labeled.iter().all(|&(s, v)| mentions.contains(&Mention { slot: s, value: v })) {
        return None;
    }
    let placeholders = mentions
        .iter()
        .map(|m| {
            let slot = &ontology.informable()[m.slot];
            (m.slot, gold.value_label(&slot.name, &slot.values[m.value]).unwrap_or_default())
        })
        .collect();
    Some(Template { pattern, placeholders, dont_care, requested: turn.requested_gold.clone() })
}

/// Collects deduplicated templates from turn-labeled dialogs. A turn contributes only if
/// it carries a label and every labeled value is found in its utterance.
pub fn extract_templates(dialogs: &[Dialog], ontology: &Ontology, dict: Option<&SemanticDictionary>) -> TemplateSet {
    let delex = Delexicaliser::new(ontology, dict);
    let mut templates: Vec<Template> = Vec::new();
    for turn in dialogs.iter().flat_map(|d| &d.turns) {
        if let Some(t) = template_of(ontology, &delex, turn) {
            if !templates.contains(&t) {
                templates.push(t);
            }
        }
    }
    TemplateSet { templates, threshold: DEFAULT_THRESHOLD }
}

/// Token-level Levenshtein distance.
pub fn edit_distance(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`; two empty sequences are identical.
pub fn similarity(a: &[String], b: &[String]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

/// Labels one utterance with the closest template (earliest on ties), or nothing when no
/// template reaches the threshold.
pub fn template_track(set: &TemplateSet, ontology: &Ontology, delex: &Delexicaliser, u: &Utterance) -> StateAssignment {
    let mut state = StateAssignment::empty(ontology);
    let (pattern, mentions) = delex.delexicalise(u);
    let mut best: Option<(&Template, f64)> = None;
    for t in &set.templates {
        let sim = similarity(&t.pattern, &pattern);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((t, sim));
        }
    }
    let Some((template, sim)) = best else { return state };
    if sim < set.threshold {
        return state;
    }
    // the k-th placeholder of a slot binds to the k-th mention of that slot
    let mut used = vec![0usize; ontology.informable().len()];
    for &(slot, label) in &template.placeholders {
        let k = used[slot];
        used[slot] += 1;
        if label == ValueLabel::NotMentioned {
            continue;
        }
        if let Some(m) = mentions.iter().filter(|m| m.slot == slot).nth(k) {
            let s = &ontology.informable()[slot];
            state.set_value_label(&s.name, &s.values[m.value], label).expect("known value");
        }
    }
    for slot in &template.dont_care {
        // a slot that picked up a value stays MENTIONED
        let _ = state.set_dont_care(slot);
    }
    state.set_requested(template.requested.clone());
    state
}

/// Per-turn template predictions folded into dialog states.
pub fn template_predict(
    set: &TemplateSet,
    ontology: &Ontology,
    dict: Option<&SemanticDictionary>,
    dialogs: &[Dialog],
) -> Vec<DialogPrediction> {
    let delex = Delexicaliser::new(ontology, dict);
    dialogs
        .iter()
        .map(|d| {
            let mut running = StateAssignment::empty(ontology);
            let mut turn_level = Vec::with_capacity(d.turns.len());
            let mut states = Vec::with_capacity(d.turns.len());
            for turn in &d.turns {
                let pred = template_track(set, ontology, &delex, &turn.user);
                running = accumulate_turn(ontology, &running, &pred);
                turn_level.push(pred);
                states.push(running.clone());
            }
            DialogPrediction { turn_level: Some(turn_level), states }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::InformableSlot;
    use alloc::string::ToString;

    fn ontology() -> Ontology {
        Ontology::new(
            vec![
                InformableSlot { name: "genre".into(), values: vec!["thriller".into(), "comedy".into()] },
                InformableSlot { name: "country".into(), values: vec!["france".into()] },
            ],
            vec!["length".into()],
            Vec::new(),
        )
        .unwrap()
    }

    fn turn(o: &Ontology, text: &str, labels: &[(&str, &str, ValueLabel)]) -> Turn {
        let mut g = StateAssignment::empty(o);
        for (s, v, l) in labels {
            g.set_value_label(s, v, *l).unwrap();
        }
        Turn { user: Utterance::from_text(text), gold_turn: Some(g), ..Turn::default() }
    }

    fn dialog(turns: Vec<Turn>) -> Dialog {
        Dialog { id: "d".into(), turns }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn extracts_delexicalised_pattern() {
        let o = ontology();
        let d = dialog(vec![turn(&o, "i want thriller movies", &[("genre", "thriller", ValueLabel::Like)])]);
        let set = extract_templates(&[d], &o, None);
        assert_eq!(set.templates.len(), 1);
        assert_eq!(set.templates[0].pattern, toks("i want <GENRE> movies"));
        assert_eq!(set.templates[0].placeholders, vec![(0, ValueLabel::Like)]);
    }

    #[test]
    fn identical_patterns_deduplicate() {
        let o = ontology();
        let a = dialog(vec![turn(&o, "i want thriller movies", &[("genre", "thriller", ValueLabel::Like)])]);
        let b = dialog(vec![turn(&o, "i want comedy movies", &[("genre", "comedy", ValueLabel::Like)])]);
        assert_eq!(extract_templates(&[a, b], &o, None).templates.len(), 1);
    }

    #[test]
    fn unmatchable_turns_contribute_nothing() {
        let o = ontology();
        let d = dialog(vec![
            turn(&o, "hello there", &[]),
            turn(&o, "something scary", &[("genre", "thriller", ValueLabel::Like)]),
        ]);
        assert!(extract_templates(&[d], &o, None).templates.is_empty());
    }

    #[test]
    fn exact_hit_returns_the_signature() {
        let o = ontology();
        let d = dialog(vec![turn(&o, "no thriller please", &[("genre", "thriller", ValueLabel::Dislike)])]);
        let set = extract_templates(&[d], &o, None);
        let delex = Delexicaliser::new(&o, None);
        let s = template_track(&set, &o, &delex, &Utterance::from_text("no comedy please"));
        assert_eq!(s.value_label("genre", "comedy"), Some(ValueLabel::Dislike));
        assert_eq!(s.slot_label("genre"), Some(SlotLabel::Mentioned));
    }

    #[test]
    fn below_threshold_gives_nothing() {
        let o = ontology();
        let set = TemplateSet {
            templates: vec![Template {
                pattern: toks("a b c d e f g h i <GENRE>"),
                placeholders: vec![(0, ValueLabel::Like)],
                dont_care: BTreeSet::new(),
                requested: BTreeSet::new(),
            }],
            threshold: 0.8,
        };
        let delex = Delexicaliser::new(&o, None);
        // three substitutions out of ten tokens: similarity 0.7
        let s = template_track(&set, &o, &delex, &Utterance::from_text("a b c d e f x y z thriller"));
        assert_eq!(s, StateAssignment::empty(&o));
        // two substitutions: exactly at the threshold
        let hit = template_track(&set, &o, &delex, &Utterance::from_text("a b c d e f g x y thriller"));
        assert_eq!(hit.value_label("genre", "thriller"), Some(ValueLabel::Like));
    }

    #[test]
    fn empty_set_gives_nothing() {
        let o = ontology();
        let set = TemplateSet { templates: Vec::new(), threshold: 0.8 };
        let delex = Delexicaliser::new(&o, None);
        assert_eq!(template_track(&set, &o, &delex, &Utterance::from_text("thriller")), StateAssignment::empty(&o));
    }

    #[test]
    fn dictionary_synonyms_are_delexicalised() {
        let o = ontology();
        let mut dict = SemanticDictionary::new();
        dict.insert("thriller".into(), vec![toks("scary movie")]);
        let delex = Delexicaliser::new(&o, Some(&dict));
        let (pattern, mentions) = delex.delexicalise(&Utterance::from_text("a scary movie from france"));
        assert_eq!(pattern, toks("a <GENRE> from <COUNTRY>"));
        assert_eq!(mentions, vec![Mention { slot: 0, value: 0 }, Mention { slot: 1, value: 0 }]);
    }

    #[test]
    fn similarity_values() {
        assert_eq!(similarity(&toks("a b c d e"), &toks("a b c d e")), 1.0);
        assert_eq!(similarity(&toks("a b c d e"), &toks("a b x d e")), 0.8);
        assert_eq!(similarity(&[], &[]), 1.0);
        assert_eq!(edit_distance(&toks("a b"), &toks("b a c")), 2);
    }
}
