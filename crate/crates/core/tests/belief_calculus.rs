//! Belief algebra checked against brute-force enumeration, N-best mixing and the
//! accumulation rule.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use edst_core::features::Utterance;
use edst_core::state::{
    accumulate_turn, joint_probability, BeliefState, InformableSlot, Ontology, SlotLabel, StateAssignment, SystemAct,
    ValueLabel,
};
use edst_core::synthetic::{generate_synthetic, SyntheticSpec};
use edst_core::tracker::{track_turn, track_turn_asr, TrackerMode, TrackerModel, TurnInput};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VALUE_LABELS: [ValueLabel; 3] = [ValueLabel::Like, ValueLabel::Dislike, ValueLabel::NotMentioned];
const SLOT_LABELS: [SlotLabel; 3] = [SlotLabel::DontCare, SlotLabel::Mentioned, SlotLabel::NotMentioned];

fn ontology(slots: usize, values: usize, single: &[usize]) -> Ontology {
    let informable: Vec<InformableSlot> = (0..slots)
        .map(|s| InformableSlot { name: format!("s{s}"), values: (0..values).map(|v| format!("v{v}")).collect() })
        .collect();
    let single = single.iter().map(|s| format!("s{s}"));
    Ontology::new(informable, vec!["r".to_string()], single).unwrap()
}

fn random_dist<const N: usize>(rng: &mut ChaCha8Rng) -> [f64; N] {
    let mut d = [0.0; N];
    for x in &mut d {
        *x = rng.gen_range(0.01..1.0);
    }
    let sum: f64 = d.iter().sum();
    d.map(|x| x / sum)
}

fn random_belief(o: &Ontology, rng: &mut ChaCha8Rng) -> BeliefState {
    let mut b = BeliefState::new(o);
    for slot in o.informable() {
        for value in &slot.values {
            b.set_value_dist(&slot.name, value, random_dist(rng)).unwrap();
        }
        b.set_slot_cond(&slot.name, random_dist(rng)).unwrap();
    }
    b
}

/// Every raw labeling of the ontology, consistent or not.
fn all_labelings(o: &Ontology) -> Vec<StateAssignment> {
    let mut cells: Vec<(String, Option<String>)> = Vec::new();
    for slot in o.informable() {
        cells.push((slot.name.clone(), None));
        cells.extend(slot.values.iter().map(|v| (slot.name.clone(), Some(v.clone()))));
    }
    let total = 3usize.pow(cells.len() as u32);
    (0..total)
        .map(|mut code| {
            let mut slots = BTreeMap::new();
            let mut values: BTreeMap<String, BTreeMap<String, ValueLabel>> = BTreeMap::new();
            for (slot, value) in &cells {
                let k = code % 3;
                code /= 3;
                match value {
                    None => {
                        slots.insert(slot.clone(), SLOT_LABELS[k]);
                    }
                    Some(v) => {
                        values.entry(slot.clone()).or_default().insert(v.clone(), VALUE_LABELS[k]);
                    }
                }
            }
            StateAssignment::from_parts(slots, values, BTreeSet::new())
        })
        .collect()
}

/// Product form written out directly from the label tables.
fn oracle_joint(b: &BeliefState, a: &StateAssignment) -> f64 {
    let mut p = 1.0;
    for (slot, labels) in a.value_labels() {
        let mut any = false;
        for (value, label) in labels {
            let dist = b.value_dist(slot, value).unwrap();
            p *= match label {
                ValueLabel::Like => dist[0],
                ValueLabel::Dislike => dist[1],
                ValueLabel::NotMentioned => dist[2],
            };
            any |= *label != ValueLabel::NotMentioned;
        }
        if !any {
            let cond = b.slot_cond(slot).unwrap();
            p *= if a.slot_label(slot) == Some(SlotLabel::DontCare) { cond[0] } else { cond[1] };
        }
    }
    p
}

#[test]
fn joint_over_consistent_assignments_sums_to_one() {
    let shapes = [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut beliefs = 0;
    for (i, &(slots, values)) in shapes.iter().cycle().take(100).enumerate() {
        let o = ontology(slots, values, &[]);
        let consistent: Vec<StateAssignment> = all_labelings(&o).into_iter().filter(|a| a.check(&o).is_ok()).collect();
        // per slot: 3^V - 1 mentioned labelings plus two free ones
        let per_slot = 3usize.pow(values as u32) - 1 + 2;
        assert_eq!(consistent.len(), per_slot.pow(slots as u32), "shape {slots}x{values}");
        let b = random_belief(&o, &mut rng);
        let mut total = 0.0;
        for a in &consistent {
            let p = joint_probability(&b, a).unwrap();
            assert!((p - oracle_joint(&b, a)).abs() <= 1e-15, "case {i}");
            total += p;
        }
        assert!((total - 1.0).abs() <= 1e-9, "case {i}: total {total}");
        beliefs += 1;
    }
    assert_eq!(beliefs, 100);
}

#[test]
fn inconsistent_assignments_are_rejected_by_the_joint() {
    let o = ontology(2, 2, &[]);
    let b = random_belief(&o, &mut ChaCha8Rng::seed_from_u64(1));
    let inconsistent = all_labelings(&o).into_iter().filter(|a| a.check(&o).is_err()).count();
    assert!(inconsistent > 0);
    for a in all_labelings(&o).into_iter().filter(|a| a.check(&o).is_err()) {
        assert!(joint_probability(&b, &a).is_err());
    }
}

fn asr_model(seed: u64, use_prev_belief: bool) -> (TrackerModel, Vec<Vec<String>>) {
    let (world, dialogs) = generate_synthetic(SyntheticSpec::default(), 6, seed).unwrap();
    let mode = TrackerMode { use_prev_belief, ..TrackerMode::default() };
    let model = TrackerModel::new(
        mode,
        4,
        Arc::new(world.ontology.clone()),
        Arc::new(world.embeddings.clone()),
        Some(Arc::new(world.dictionary.clone())),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap();
    let utterances = dialogs.iter().flat_map(|d| &d.turns).map(|t| t.user.tokens().to_vec()).collect();
    (model, utterances)
}

fn belief_pairs(b: &BeliefState) -> Vec<f64> {
    let mut out = Vec::new();
    for dists in b.value_dists().values() {
        for d in dists.values() {
            out.extend_from_slice(d);
        }
    }
    for c in b.slot_conds().values() {
        out.extend_from_slice(c);
    }
    out
}

#[test]
fn single_hypothesis_mixture_is_plain_tracking() {
    for (seed, prev) in [(1, true), (2, false), (3, true)] {
        let (model, utterances) = asr_model(seed, prev);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for words in utterances.iter().take(10) {
            let user = Utterance::new(words.clone()).unwrap();
            let prior = random_belief(model.ontology(), &mut rng);
            let plain = TurnInput { user: user.clone(), system_act: SystemAct::default(), asr: None };
            let weight = rng.gen_range(0.1..3.0);
            let nbest = TurnInput { asr: Some(vec![(user, weight)]), ..plain.clone() };
            let a = track_turn(&model, &plain, &prior).unwrap();
            let b = track_turn_asr(&model, &nbest, &prior).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn symmetric_pair_mixture_is_the_mean() {
    for (seed, prev) in [(4, true), (5, false), (6, true)] {
        let (model, utterances) = asr_model(seed, prev);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for pair in utterances.chunks(2).take(10) {
            let [x, y] = pair else { continue };
            let (ux, uy) = (Utterance::new(x.clone()).unwrap(), Utterance::new(y.clone()).unwrap());
            let prior = random_belief(model.ontology(), &mut rng);
            let single = |u: &Utterance| {
                track_turn(&model, &TurnInput { user: u.clone(), system_act: SystemAct::default(), asr: None }, &prior)
                    .unwrap()
            };
            let (bx, by) = (single(&ux), single(&uy));
            let w = rng.gen_range(0.1..3.0);
            let mixed = track_turn_asr(
                &model,
                &TurnInput { user: ux.clone(), system_act: SystemAct::default(), asr: Some(vec![(ux, w), (uy, w)]) },
                &prior,
            )
            .unwrap();
            let (px, py, pm) = (belief_pairs(&bx.belief), belief_pairs(&by.belief), belief_pairs(&mixed.belief));
            assert_eq!(pm.len(), px.len());
            for ((a, b), m) in px.iter().zip(&py).zip(&pm) {
                assert!((m - (a + b) / 2.0).abs() <= 1e-12, "{m} vs {a}, {b}");
            }
            for (name, m) in &mixed.requested {
                let mean = (bx.requested[name] + by.requested[name]) / 2.0;
                assert!((m - mean).abs() <= 1e-12);
            }
        }
    }
}

/// A consistent random assignment from a compact code: per value a label index, per
/// slot a dont-care coin.
fn assignment_from(o: &Ontology, labels: &[u8], dont_care: &[bool], requested: bool) -> StateAssignment {
    let mut a = StateAssignment::empty(o);
    let mut k = 0;
    for (s, slot) in o.informable().iter().enumerate() {
        let mut liked = false;
        for value in &slot.values {
            let mut label = VALUE_LABELS[labels[k] as usize % 3];
            k += 1;
            if label == ValueLabel::Like && o.is_single_value(&slot.name) {
                if liked {
                    label = ValueLabel::NotMentioned;
                }
                liked = true;
            }
            a.set_value_label(&slot.name, value, label).unwrap();
        }
        if dont_care[s] && a.slot_label(&slot.name) == Some(SlotLabel::NotMentioned) {
            a.set_dont_care(&slot.name).unwrap();
        }
    }
    if requested {
        a.set_requested(BTreeSet::from(["r".to_string()]));
    }
    a.check(o).unwrap();
    a
}

fn codes() -> impl Strategy<Value = (Vec<u8>, Vec<bool>, bool, Vec<u8>, Vec<bool>, bool)> {
    let n = 3 * 3;
    (
        prop::collection::vec(0u8..3, n),
        prop::collection::vec(any::<bool>(), 3),
        any::<bool>(),
        prop::collection::vec(0u8..3, n),
        prop::collection::vec(any::<bool>(), 3),
        any::<bool>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn accumulation_substitutes_mentioned_labels((pl, pd, pr, tl, td, tr) in codes()) {
        // slot s0 admits a single liked value
        let o = ontology(3, 3, &[0]);
        let prev = assignment_from(&o, &pl, &pd, pr);
        let turn = assignment_from(&o, &tl, &td, tr);
        let out = accumulate_turn(&o, &prev, &turn);
        out.check(&o).unwrap();
        for slot in o.informable() {
            let turn_likes = slot.values.iter().any(|v| turn.value_label(&slot.name, v) == Some(ValueLabel::Like));
            for value in &slot.values {
                let p = prev.value_label(&slot.name, value).unwrap();
                let t = turn.value_label(&slot.name, value).unwrap();
                let expected = if t.is_mentioned() {
                    t
                } else if p == ValueLabel::Like && turn_likes && o.is_single_value(&slot.name) {
                    ValueLabel::NotMentioned
                } else {
                    p
                };
                prop_assert_eq!(out.value_label(&slot.name, value), Some(expected), "{}={}", slot.name, value);
            }
            let any = slot.values.iter().any(|v| out.value_label(&slot.name, v).unwrap().is_mentioned());
            let expected_slot = if any {
                SlotLabel::Mentioned
            } else if turn.slot_label(&slot.name) == Some(SlotLabel::DontCare)
                || prev.slot_label(&slot.name) == Some(SlotLabel::DontCare)
            {
                SlotLabel::DontCare
            } else {
                SlotLabel::NotMentioned
            };
            prop_assert_eq!(out.slot_label(&slot.name), Some(expected_slot));
        }
        prop_assert_eq!(out.requested(), turn.requested());
    }

    #[test]
    fn accumulation_is_idempotent_in_the_turn((pl, pd, pr, tl, td, tr) in codes()) {
        let o = ontology(3, 3, &[0]);
        let prev = assignment_from(&o, &pl, &pd, pr);
        let turn = assignment_from(&o, &tl, &td, tr);
        let once = accumulate_turn(&o, &prev, &turn);
        prop_assert_eq!(accumulate_turn(&o, &once, &turn), once);
    }

    #[test]
    fn accumulating_an_empty_turn_keeps_the_goal((pl, pd, pr, _tl, _td, _tr) in codes()) {
        let o = ontology(3, 3, &[0]);
        let prev = assignment_from(&o, &pl, &pd, pr);
        let out = accumulate_turn(&o, &prev, &StateAssignment::empty(&o));
        prop_assert!(out.goal_matches(&prev));
    }
}
