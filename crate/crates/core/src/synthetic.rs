//! Seeded synthetic movie-search corpora with matching ontology, synonym dictionary and
//! word embeddings.
//!
//! Values are pseudo-words. Each has a canonical name, a synonym listed in the dictionary
//! and a paraphrase that is not listed; all three share an embedding direction, so the
//! paraphrase is only reachable through embedding similarity.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialog, Hypothesis, Turn};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, SemanticDictionary, Utterance};
use crate::nn::math::{l2_norm_sq, sqrt};
use crate::state::{accumulate_turn, ActRecord, InformableSlot, Ontology, Polarity, StateAssignment, SystemAct, ValueLabel};

const SLOT_NAMES: [&str; 8] = ["genre", "country", "era", "director", "language", "studio", "rating", "mood"];
const REQUEST_NAMES: [&str; 6] = ["length", "plot", "release", "critics", "budget", "cast"];
const SYLLABLES: [&str; 20] =
    ["ka", "lo", "mi", "ru", "te", "sa", "no", "vi", "pe", "zu", "ba", "do", "fi", "go", "ha", "je", "ku", "ma", "ri", "to"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub slots: usize,
    pub values_per_slot: usize,
    pub requestable: usize,
    /// The first this many informable slots admit a single LIKE value.
    pub single_value: usize,
    pub embedding_dim: usize,
    pub min_turns: usize,
    pub max_turns: usize,
    /// Attach a two-entry N-best list to every turn.
    pub asr: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            slots: 3,
            values_per_slot: 4,
            requestable: 2,
            single_value: 0,
            embedding_dim: 25,
            min_turns: 5,
            max_turns: 10,
            asr: false,
        }
    }
}

impl SyntheticSpec {
    fn check(&self) -> Result<()> {
        if self.slots == 0 || self.slots > SLOT_NAMES.len() {
            return Err(Error::Argument(format!("informable slot count must be in 1..={}", SLOT_NAMES.len())));
        }
        if self.requestable > REQUEST_NAMES.len() {
            return Err(Error::Argument(format!("at most {} requestable slots", REQUEST_NAMES.len())));
        }
        if self.values_per_slot < 2 {
            return Err(Error::Argument("need at least two values per slot".into()));
        }
        if self.single_value > self.slots {
            return Err(Error::Argument("more single-value slots than slots".into()));
        }
        if self.embedding_dim == 0 || self.min_turns == 0 || self.min_turns > self.max_turns {
            return Err(Error::Argument("invalid embedding size or turn range".into()));
        }
        Ok(())
    }
}

/// Surface forms of one ontology entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexeme {
    pub canonical: String,
    pub synonym: String,
    pub paraphrase: String,
}

/// Ontology, resources and grammar of one synthetic domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub spec: SyntheticSpec,
    pub ontology: Ontology,
    pub dictionary: SemanticDictionary,
    pub embeddings: EmbeddingTable,
    values: Vec<Vec<Lexeme>>,
    slots: Vec<Lexeme>,
    requests: Vec<Lexeme>,
}

const FILLER: [&str; 41] = [
    "i", "want", "please", "how", "about", "something", "would", "be", "nice", "show", "me", "movies", "like", "or",
    "and", "is", "fine", "no", "do", "not", "anything", "but", "instead", "any", "care", "the", "whatever", "what",
    "tell", "its", "yes", "right", "thanks", "hello", "ok", "um", "well", "a", "film", "with", "really",
];

fn pseudo_word<R: Rng>(rng: &mut R, used: &mut BTreeSet<String>) -> String {
    loop {
        let n = rng.gen_range(2..=3);
        let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("syllables")).collect();
        if !FILLER.contains(&w.as_str()) && used.insert(w.clone()) {
            return w;
        }
    }
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = sqrt(l2_norm_sq(&v));
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// A random unit vector orthogonal to the orthonormal `basis`, which must hold fewer
/// than `dim` vectors.
fn orthogonal_unit<R: Rng>(rng: &mut R, dim: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v = random_unit(rng, dim);
        for b in basis {
            let p = crate::nn::math::dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = sqrt(l2_norm_sq(&v));
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn scaled(v: &[f64], norm: f64) -> Vec<f64> {
    let n = sqrt(l2_norm_sq(v));
    v.iter().map(|x| x * norm / n).collect()
}

impl SyntheticWorld {
    pub fn new(spec: SyntheticSpec, seed: u64) -> Result<Self> {
        spec.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut used: BTreeSet<String> = SLOT_NAMES.iter().chain(REQUEST_NAMES.iter()).map(|s| s.to_string()).collect();
        let mut lexeme = |canonical: Option<&str>, rng: &mut ChaCha8Rng| Lexeme {
            canonical: canonical.map_or_else(|| pseudo_word(rng, &mut used), str::to_string),
            synonym: pseudo_word(rng, &mut used),
            paraphrase: pseudo_word(rng, &mut used),
        };
        let slots: Vec<Lexeme> = SLOT_NAMES[..spec.slots].iter().map(|s| lexeme(Some(s), &mut rng)).collect();
        let values: Vec<Vec<Lexeme>> = (0..spec.slots)
            .map(|_| (0..spec.values_per_slot).map(|_| lexeme(None, &mut rng)).collect())
            .collect();
        let requests: Vec<Lexeme> = REQUEST_NAMES[..spec.requestable].iter().map(|s| lexeme(Some(s), &mut rng)).collect();

        let informable = slots
            .iter()
            .zip(&values)
            .map(|(s, vs)| InformableSlot { name: s.canonical.clone(), values: vs.iter().map(|v| v.canonical.clone()).collect() })
            .collect();
        let single: Vec<String> = slots[..spec.single_value].iter().map(|s| s.canonical.clone()).collect();
        let ontology = Ontology::new(informable, requests.iter().map(|r| r.canonical.clone()).collect(), single)?;

        let mut dictionary = SemanticDictionary::new();
        let mut embeddings = EmbeddingTable::new(spec.embedding_dim)?;
        let d = spec.embedding_dim;
        let all = slots.iter().chain(values.iter().flatten()).chain(&requests);
        let mut bases: Vec<Vec<f64>> = Vec::new();
        for lex in all {
            dictionary.insert(lex.canonical.clone(), vec![vec![lex.synonym.clone()]]);
            let base = if bases.len() < d { orthogonal_unit(&mut rng, d, &bases) } else { random_unit(&mut rng, d) };
            bases.push(base.clone());
            for word in [&lex.canonical, &lex.synonym, &lex.paraphrase] {
                let noise = random_unit(&mut rng, d);
                let v: Vec<f64> = base.iter().zip(&noise).map(|(b, n)| b + 0.25 * n).collect();
                embeddings.insert(word.clone(), &scaled(&v, 2.0))?;
            }
        }
        for word in FILLER {
            embeddings.insert(word.to_string(), &random_unit(&mut rng, d))?;
        }
        Ok(Self { spec, ontology, dictionary, embeddings, values, slots, requests })
    }

    pub fn value_lexeme(&self, slot: usize, value: usize) -> &Lexeme {
        &self.values[slot][value]
    }

    /// `n` dialogs with ids `syn-0000`, `syn-0001`, ...
    pub fn generate<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Dialog> {
        (0..n).map(|i| self.dialog(format!("syn-{i:04}"), rng)).collect()
    }

    fn surface<R: Rng>(lex: &Lexeme, rng: &mut R) -> String {
        match rng.gen_range(0..3) {
            0 => lex.canonical.clone(),
            1 => lex.synonym.clone(),
            _ => lex.paraphrase.clone(),
        }
    }

    fn dialog<R: Rng>(&self, id: String, rng: &mut R) -> Dialog {
        let o = &self.ontology;
        let turns_n = rng.gen_range(self.spec.min_turns..=self.spec.max_turns);
        let mut state = StateAssignment::empty(o);
        let mut turns = Vec::with_capacity(turns_n);
        for t in 0..turns_n {
            let (system_acts, words, gold, requested) = self.turn(&state, t == 0, rng);
            let mut gold = gold;
            gold.set_requested(requested.clone());
            state = accumulate_turn(o, &state, &gold);
            let user = Utterance::new(words.clone()).expect("non-empty tokens");
            let asr = self.spec.asr.then(|| {
                let mut noisy = words.clone();
                if noisy.len() > 1 {
                    noisy.remove(rng.gen_range(0..noisy.len()));
                }
                vec![
                    Hypothesis { tokens: user.clone(), score: 0.7 },
                    Hypothesis { tokens: Utterance::new(noisy).expect("non-empty tokens"), score: 0.3 },
                ]
            });
            turns.push(Turn {
                system_acts,
                user,
                asr,
                gold_turn: Some(gold),
                gold_state: Some(state.clone()),
                requested_gold: requested,
            });
        }
        Dialog { id, turns }
    }

    fn words(template: &[&str], fill: &[String]) -> Vec<String> {
        let mut k = 0;
        template
            .iter()
            .map(|w| {
                if *w == "_" {
                    k += 1;
                    fill[k - 1].clone()
                } else {
                    w.to_string()
                }
            })
            .collect()
    }

    fn quiet_slots(&self, state: &StateAssignment) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&s| state.slot_label(&self.ontology.informable()[s].name) == Some(crate::state::SlotLabel::NotMentioned))
            .collect()
    }

    fn liked(&self, state: &StateAssignment) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (s, slot) in self.ontology.informable().iter().enumerate() {
            for (v, value) in slot.values.iter().enumerate() {
                if state.value_label(&slot.name, value) == Some(ValueLabel::Like) {
                    out.push((s, v));
                }
            }
        }
        out
    }

    #[allow(clippy::type_complexity)]
    fn turn<R: Rng>(
        &self,
        state: &StateAssignment,
        first: bool,
        rng: &mut R,
    ) -> (SystemAct, Vec<String>, StateAssignment, BTreeSet<String>) {
        let o = &self.ontology;
        let mut gold = StateAssignment::empty(o);
        let mut requested = BTreeSet::new();
        let mut acts = Vec::new();
        let name = |s: usize| o.informable()[s].name.clone();
        let value = |s: usize, v: usize| o.informable()[s].values[v].clone();
        let n_slots = self.slots.len();
        let n_values = self.spec.values_per_slot;
        let pick = |rng: &mut R| (rng.gen_range(0..n_slots), rng.gen_range(0..n_values));
        let mut words: Vec<String>;
        let roll = if first { rng.gen_range(0..55) } else { rng.gen_range(0..100) };
        let label = |gold: &mut StateAssignment, s: usize, v: usize, l: ValueLabel| {
            gold.set_value_label(&name(s), &value(s, v), l).expect("known value");
        };
        if roll < 30 {
            let (s, v) = pick(rng);
            let a = Self::surface(&self.values[s][v], rng);
            label(&mut gold, s, v, ValueLabel::Like);
            let extra = rng.gen_range(0..10);
            if extra < 2 && !o.is_single_value(&name(s)) {
                let v2 = (v + rng.gen_range(1..n_values)) % n_values;
                let b = Self::surface(&self.values[s][v2], rng);
                label(&mut gold, s, v2, ValueLabel::Like);
                words = Self::words([&["_", "or", "_", "is", "fine"][..], &["_", "and", "_"][..]].choose(rng).unwrap(), &[a, b]);
            } else if extra < 4 && n_slots > 1 {
                let s2 = (s + rng.gen_range(1..n_slots)) % n_slots;
                let v2 = rng.gen_range(0..n_values);
                let b = Self::surface(&self.values[s2][v2], rng);
                label(&mut gold, s2, v2, ValueLabel::Like);
                words = Self::words(&["i", "want", "_", "and", "_"], &[a, b]);
            } else {
                let templates: [&[&str]; 6] = [
                    &["i", "want", "_"],
                    &["_", "please"],
                    &["how", "about", "_"],
                    &["something", "_", "would", "be", "nice"],
                    &["show", "me", "_", "movies"],
                    &["i", "like", "_"],
                ];
                words = Self::words(templates.choose(rng).unwrap(), &[a]);
            }
        } else if roll < 45 {
            let (s, v) = pick(rng);
            let a = Self::surface(&self.values[s][v], rng);
            label(&mut gold, s, v, ValueLabel::Dislike);
            let templates: [&[&str]; 4] =
                [&["no", "_"], &["i", "do", "not", "like", "_"], &["anything", "but", "_"], &["not", "_", "please"]];
            words = Self::words(templates.choose(rng).unwrap(), &[a]);
        } else if roll < 55 {
            let quiet = self.quiet_slots(state);
            if let Some(&s) = quiet.choose(rng) {
                gold.set_dont_care(&name(s)).expect("quiet slot");
                let a = Self::surface(&self.slots[s], rng);
                let templates: [&[&str]; 3] =
                    [&["any", "_", "is", "fine"], &["i", "do", "not", "care", "about", "the", "_"], &["whatever", "_"]];
                words = Self::words(templates.choose(rng).unwrap(), &[a]);
            } else {
                words = vec!["ok".into()];
            }
        } else if roll < 65 {
            let liked = self.liked(state);
            if let Some(&(s, old)) = liked.choose(rng) {
                let new = (old + rng.gen_range(1..n_values)) % n_values;
                label(&mut gold, s, old, ValueLabel::Dislike);
                label(&mut gold, s, new, ValueLabel::Like);
                let a = Self::surface(&self.values[s][old], rng);
                let b = Self::surface(&self.values[s][new], rng);
                words = Self::words(&["not", "_", "_", "instead"], &[a, b]);
            } else {
                words = vec!["hello".into()];
            }
        } else if roll < 75 {
            let (s, v) = pick(rng);
            let polarity = if rng.gen_bool(0.5) { Polarity::Like } else { Polarity::Dislike };
            acts.push(ActRecord::Confirm { slot: name(s), value: value(s, v), polarity });
            let yes = rng.gen_bool(0.5);
            let l = match (polarity, yes) {
                (Polarity::Like, true) | (Polarity::Dislike, false) => ValueLabel::Like,
                _ => ValueLabel::Dislike,
            };
            label(&mut gold, s, v, l);
            let templates: [&[&str]; 3] =
                if yes { [&["yes"], &["yes", "please"], &["right"]] } else { [&["no"], &["no", "thanks"], &["not", "really"]] };
            words = Self::words(templates.choose(rng).unwrap(), &[]);
        } else if roll < 85 {
            let (s, v) = pick(rng);
            acts.push(ActRecord::Request { slot: name(s) });
            label(&mut gold, s, v, ValueLabel::Like);
            let a = Self::surface(&self.values[s][v], rng);
            let templates: [&[&str]; 3] = [&["_"], &["_", "please"], &["um", "_"]];
            words = Self::words(templates.choose(rng).unwrap(), &[a]);
        } else {
            words = Self::words([&["thanks"][..], &["ok"][..], &["well"][..]].choose(rng).unwrap(), &[]);
        }
        if !self.requests.is_empty() && (roll >= 85 || rng.gen_bool(0.2)) {
            let r = rng.gen_range(0..self.requests.len());
            requested.insert(self.ontology.requestable()[r].clone());
            let a = Self::surface(&self.requests[r], rng);
            let templates: [&[&str]; 3] = [&["what", "is", "the", "_"], &["tell", "me", "the", "_"], &["and", "its", "_"]];
            words.extend(Self::words(templates.choose(rng).unwrap(), &[a]));
        }
        if acts.is_empty() && !first && rng.gen_bool(0.3) {
            let (s, v) = pick(rng);
            acts.push(ActRecord::Inform { slot: name(s), value: value(s, v) });
        }
        (SystemAct::new(acts), words, gold, requested)
    }
}

/// Builds a world and `n` dialogs from one seed.
pub fn generate_synthetic(spec: SyntheticSpec, n: usize, seed: u64) -> Result<(SyntheticWorld, Vec<Dialog>)> {
    if n == 0 {
        return Err(Error::Argument("need at least one dialog".into()));
    }
    let world = SyntheticWorld::new(spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let dialogs = world.generate(n, &mut rng);
    Ok((world, dialogs))
}

/// Label histogram of a corpus, keyed by label name; handy for sanity checks.
pub fn label_counts(dialogs: &[Dialog]) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for turn in dialogs.iter().flat_map(|d| &d.turns) {
        if let Some(g) = &turn.gold_turn {
            for labels in g.value_labels().values() {
                for l in labels.values().filter(|l| l.is_mentioned()) {
                    *out.entry(l.as_str()).or_insert(0) += 1;
                }
            }
            for l in g.slot_labels().values() {
                if *l == crate::state::SlotLabel::DontCare {
                    *out.entry(l.as_str()).or_insert(0) += 1;
                }
            }
        }
        *out.entry("requested").or_insert(0) += turn.requested_gold.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(seed: u64) -> (SyntheticWorld, Vec<Dialog>) {
        generate_synthetic(SyntheticSpec { single_value: 1, asr: true, ..SyntheticSpec::default() }, 60, seed).unwrap()
    }

    #[test]
    fn labels_are_consistent() {
        let (world, dialogs) = corpus(1);
        for d in &dialogs {
            d.check(&world.ontology).unwrap();
            let derived = d.gold_states(&world.ontology).unwrap();
            let mut running = StateAssignment::empty(&world.ontology);
            for (turn, state) in d.turns.iter().zip(&derived) {
                running = accumulate_turn(&world.ontology, &running, turn.gold_turn.as_ref().unwrap());
                assert!(running.goal_matches(state));
                turn.gold_state.as_ref().unwrap().check(&world.ontology).unwrap();
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(corpus(5), corpus(5));
        assert_ne!(corpus(5).1, corpus(6).1);
    }

    #[test]
    fn every_label_kind_occurs() {
        let (_, dialogs) = corpus(2);
        let counts = label_counts(&dialogs);
        for key in ["like", "dislike", "dont_care", "requested"] {
            assert!(counts.get(key).copied().unwrap_or(0) > 0, "{key} missing: {counts:?}");
        }
    }

    #[test]
    fn deny_turns_yield_dislike() {
        let (world, dialogs) = corpus(3);
        let mut seen = 0;
        for turn in dialogs.iter().flat_map(|d| &d.turns) {
            let t = turn.user.tokens();
            let deny = (t.len() == 2 && t[0] == "no" && t[1] != "thanks" && t[1] != "no")
                || t.starts_with(&["i".into(), "do".into(), "not".into(), "like".into()])
                || t.starts_with(&["anything".into(), "but".into()]);
            if deny {
                let gold = turn.gold_turn.as_ref().unwrap();
                let dislikes =
                    gold.value_labels().values().flat_map(|m| m.values()).filter(|l| **l == ValueLabel::Dislike).count();
                assert_eq!(dislikes, 1, "{t:?}");
                seen += 1;
            }
        }
        assert!(seen > 0);
        assert_eq!(world.ontology.informable().len(), 3);
    }

    #[test]
    fn paraphrases_are_outside_the_dictionary_but_close_in_embedding() {
        let (world, _) = corpus(4);
        let lex = world.value_lexeme(0, 0);
        let syn = world.dictionary.synonyms(&lex.canonical);
        assert!(syn.iter().any(|s| s == core::slice::from_ref(&lex.synonym)));
        assert!(!syn.iter().any(|s| s == core::slice::from_ref(&lex.paraphrase)));
        let dot = |a: &str, b: &str| crate::nn::math::dot(world.embeddings.lookup(a), world.embeddings.lookup(b));
        let other = &world.value_lexeme(0, 1).canonical;
        assert!(dot(&lex.canonical, &lex.paraphrase) > dot(&lex.canonical, other) + 1.0);
        world.dictionary.check(&world.ontology).unwrap();
    }
}
