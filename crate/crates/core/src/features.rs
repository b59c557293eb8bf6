//! Value-specific input features.
//!
//! For an entity `v` (a value, or a slot name for slot-level heads) the tracker reads
//! three things: the previous belief about `v`, six indicators derived from the last
//! system act, and the user utterance rendered as a `k × (d + 2)` matrix made of the
//! word embeddings, a soft dot-product match column and a hard string-match column.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::nn::math::sigmoid;
use crate::nn::Matrix;
use crate::state::{ActRecord, BeliefState, Polarity, SystemAct};

/// Minimum number of rows fed to the CNN, so that every window size fits once.
pub const MIN_ROWS: usize = 3;

/// Number of act indicators.
pub const ACT_FEATURES: usize = 6;

/// NFC-normalized, lower-cased form used for all string matching.
pub fn normalize_token(token: &str) -> String {
    token.nfc().collect::<String>().to_lowercase()
}

/// Splits an ontology entity name into tokens (whitespace and `_` separate tokens).
pub fn entity_tokens(name: &str) -> Vec<String> {
    name.split(|c: char| c.is_whitespace() || c == '_')
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// A tokenized user utterance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Utterance {
    tokens: Vec<String>,
}

impl Utterance {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::Argument("utterance contains an empty token".into()));
        }
        Ok(Self { tokens })
    }

    /// Splits on whitespace.
    pub fn from_text(text: &str) -> Self {
        Self { tokens: text.split_whitespace().map(String::from).collect() }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Pre-trained word vectors. Unknown tokens embed to zeros.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    index: BTreeMap<String, usize>,
    data: Vec<f64>,
    zeros: Vec<f64>,
}

/// Tables are equal when they map the same tokens to the same vectors, whatever the
/// insertion order.
impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.index.len() == other.index.len()
            && self.index.iter().all(|(token, &row)| {
                other.index.get(token).is_some_and(|&o| {
                    self.data[row * self.dim..(row + 1) * self.dim] == other.data[o * self.dim..(o + 1) * self.dim]
                })
            })
    }
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dimension must be positive".into()));
        }
        Ok(Self { dim, index: BTreeMap::new(), data: Vec::new(), zeros: vec![0.0; dim] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Adds an entry. Returns `false` (and keeps the stored vector) for duplicates.
    pub fn insert(&mut self, token: String, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding for '{token}' has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if self.index.contains_key(&token) {
            return Ok(false);
        }
        self.index.insert(token, self.data.len() / self.dim);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Exact lookup, then a case/normalization-insensitive retry, then zeros.
    pub fn lookup(&self, token: &str) -> &[f64] {
        let row = self.index.get(token).or_else(|| self.index.get(&normalize_token(token)));
        match row {
            Some(&i) => &self.data[i * self.dim..(i + 1) * self.dim],
            None => &self.zeros,
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

/// Entity embedding `e(v)`: the mean of its token vectors (unknown tokens count as zeros).
pub fn embed_entity(table: &EmbeddingTable, name: &[String]) -> Result<Vec<f64>> {
    if name.is_empty() {
        return Err(Error::Argument("cannot embed an empty entity name".into()));
    }
    let mut out = vec![0.0; table.dim()];
    for token in name {
        for (o, x) in out.iter_mut().zip(table.lookup(token)) {
            *o += x;
        }
    }
    let n = name.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Hand-written synonym lists keyed by canonical entity name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SemanticDictionary {
    entries: BTreeMap<String, Vec<Vec<String>>>,
}

impl SemanticDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entity: String, synonyms: Vec<Vec<String>>) {
        self.entries.entry(entity).or_default().extend(synonyms);
    }

    pub fn synonyms(&self, entity: &str) -> &[Vec<String>] {
        self.entries.get(entity).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<Vec<String>>> {
        &self.entries
    }

    /// Every key must name an ontology value or slot.
    pub fn check(&self, ontology: &crate::state::Ontology) -> Result<()> {
        for key in self.entries.keys() {
            let known = ontology
                .informable()
                .iter()
                .any(|s| &s.name == key || s.values.iter().any(|v| v == key))
                || ontology.is_requestable(key);
            if !known {
                return Err(Error::Data(format!("dictionary entry '{key}' is not in the ontology")));
            }
        }
        Ok(())
    }
}

/// Normalized surface forms of one entity: its own name plus any dictionary synonyms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityPatterns {
    patterns: Vec<Vec<String>>,
}

impl EntityPatterns {
    pub fn new(entity: &str, dict: Option<&SemanticDictionary>) -> Self {
        let mut patterns = vec![entity_tokens(entity).iter().map(|t| normalize_token(t)).collect::<Vec<_>>()];
        if let Some(dict) = dict {
            for syn in dict.synonyms(entity) {
                let p: Vec<String> = syn.iter().map(|t| normalize_token(t)).collect();
                if !p.is_empty() && !patterns.contains(&p) {
                    patterns.push(p);
                }
            }
        }
        patterns.retain(|p| !p.is_empty());
        Self { patterns }
    }

    pub fn patterns(&self) -> &[Vec<String>] {
        &self.patterns
    }

    /// Spans `[start, end)` of every contiguous occurrence in the normalized tokens.
    pub fn find(&self, normalized: &[String]) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        for p in &self.patterns {
            if p.len() > normalized.len() {
                continue;
            }
            for start in 0..=normalized.len() - p.len() {
                if normalized[start..start + p.len()] == p[..] {
                    spans.push((start, start + p.len()));
                }
            }
        }
        spans.sort_unstable();
        spans.dedup();
        spans
    }

    /// The binary string-match vector `x_str`.
    pub fn match_vector(&self, normalized: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; normalized.len()];
        for (s, e) in self.find(normalized) {
            out[s..e].iter_mut().for_each(|x| *x = 1.0);
        }
        out
    }
}

pub fn normalize_utterance(u: &Utterance) -> Vec<String> {
    u.tokens().iter().map(|t| normalize_token(t)).collect()
}

/// `x_str(v, u)`: 1 at every token covered by a match of `v` or one of its synonyms.
pub fn string_match_vector(entity: &str, u: &Utterance, dict: Option<&SemanticDictionary>) -> Vec<f64> {
    EntityPatterns::new(entity, dict).match_vector(&normalize_utterance(u))
}

/// Trainable scalars of the soft match column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotMatchParams {
    pub w1: f64,
    pub b1: f64,
}

impl Default for DotMatchParams {
    fn default() -> Self {
        Self { w1: 1.0, b1: 0.0 }
    }
}

/// Word embedding rows of an utterance (`k × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceEncoding {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub normalized: Vec<String>,
}

impl UtteranceEncoding {
    pub fn new(u: &Utterance, table: &EmbeddingTable) -> Self {
        let dim = table.dim();
        let mut data = Vec::with_capacity(u.len() * dim);
        for t in u.tokens() {
            data.extend_from_slice(table.lookup(t));
        }
        Self { rows: u.len(), dim, data, normalized: normalize_utterance(u) }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Raw dot products `X e(v)`.
    pub fn dots(&self, entity: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().zip(entity).map(|(a, b)| a * b).sum()).collect()
    }
}

/// `x_dot(v, u) = σ(w1 · X e(v) + b1)`.
pub fn dot_match_vector(entity: &[String], u: &Utterance, table: &EmbeddingTable, p: DotMatchParams) -> Result<Vec<f64>> {
    let ev = embed_entity(table, entity)?;
    let enc = UtteranceEncoding::new(u, table);
    Ok(enc.dots(&ev).into_iter().map(|x| sigmoid(p.w1 * x + p.b1)).collect())
}

/// Assembles `X ⊕ x_dot ⊕ x_str` from precomputed parts, padding with zero rows up to
/// [`MIN_ROWS`]. When `ablate` is set the two match columns are zero.
pub fn assemble_matrix(enc: &UtteranceEncoding, dots: &[f64], exact: &[f64], p: DotMatchParams, ablate: bool) -> Matrix {
    let d = enc.dim;
    let rows = enc.rows.max(MIN_ROWS);
    let mut m = Matrix::zeros(rows, d + 2);
    for i in 0..enc.rows {
        let row = m.row_mut(i);
        row[..d].copy_from_slice(enc.row(i));
        if !ablate {
            row[d] = sigmoid(p.w1 * dots[i] + p.b1);
            row[d + 1] = exact[i];
        }
    }
    m
}

/// The value-specific embedding matrix `f3(v, u)`, `max(k, 3) × (d + 2)`.
pub fn value_specific_matrix(
    entity: &str,
    u: &Utterance,
    table: &EmbeddingTable,
    p: DotMatchParams,
    dict: Option<&SemanticDictionary>,
) -> Result<Matrix> {
    let tokens = entity_tokens(entity);
    let ev = embed_entity(table, &tokens)?;
    let enc = UtteranceEncoding::new(u, table);
    let dots = enc.dots(&ev);
    let exact = EntityPatterns::new(entity, dict).match_vector(&enc.normalized);
    Ok(assemble_matrix(&enc, &dots, &exact, p, false))
}

/// Label scheme of the value heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LabelScheme {
    /// `LIKE / DISLIKE / NOT_MENTIONED`.
    #[default]
    Enriched3,
    /// `MENTIONED / NOT_MENTIONED`.
    Mention2,
}

impl LabelScheme {
    pub fn classes(self) -> usize {
        match self {
            LabelScheme::Enriched3 => 3,
            LabelScheme::Mention2 => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelScheme::Enriched3 => "enriched3",
            LabelScheme::Mention2 => "mention2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "enriched3" => Some(LabelScheme::Enriched3),
            "mention2" => Some(LabelScheme::Mention2),
            _ => None,
        }
    }
}

/// `f1(v, b)`: the previous-turn distribution of `v`.
pub fn value_belief_vector(slot: &str, value: &str, b: &BeliefState, scheme: LabelScheme) -> Result<Vec<f64>> {
    let d = b
        .value_dist(slot, value)
        .ok_or_else(|| Error::Argument(format!("unknown value '{slot}={value}'")))?;
    Ok(match scheme {
        LabelScheme::Enriched3 => d.to_vec(),
        LabelScheme::Mention2 => vec![d[0] + d[1], d[2]],
    })
}

/// Previous-turn slot-label marginal, used as `f1` by slot-level heads.
pub fn slot_belief_vector(slot: &str, b: &BeliefState) -> Result<Vec<f64>> {
    b.slot_marginal(slot)
        .map(|m| m.to_vec())
        .ok_or_else(|| Error::Argument(format!("unknown slot '{slot}'")))
}

/// `f2(v, a)`: six act indicators for value `v` of `slot`.
pub fn act_feature_vector(slot: &str, value: &str, a: &SystemAct) -> [f64; ACT_FEATURES] {
    let mut f = [0.0; ACT_FEATURES];
    for act in &a.acts {
        match act {
            ActRecord::Request { slot: s } if s == slot => f[0] = 1.0,
            ActRecord::Confirm { slot: s, value: v, polarity } if s == slot => {
                if v == value {
                    match polarity {
                        Polarity::Like => f[1] = 1.0,
                        Polarity::Dislike => f[2] = 1.0,
                    }
                } else {
                    f[3] = 1.0;
                }
            }
            ActRecord::Inform { slot: s, value: v } if s == slot && v == value => f[4] = 1.0,
            _ => {}
        }
    }
    if f[..5].iter().all(|x| *x == 0.0) {
        f[5] = 1.0;
    }
    f
}

/// Slot-level analogue of [`act_feature_vector`]: request, any confirm-like, any
/// confirm-dislike, confirm-dontcare, any inform, none.
pub fn slot_act_feature_vector(slot: &str, a: &SystemAct) -> [f64; ACT_FEATURES] {
    let mut f = [0.0; ACT_FEATURES];
    for act in &a.acts {
        if act.slot() != slot {
            continue;
        }
        match act {
            ActRecord::Request { .. } => f[0] = 1.0,
            ActRecord::Confirm { polarity: Polarity::Like, .. } => f[1] = 1.0,
            ActRecord::Confirm { polarity: Polarity::Dislike, .. } => f[2] = 1.0,
            ActRecord::ConfirmDontCare { .. } => f[3] = 1.0,
            ActRecord::Inform { .. } => f[4] = 1.0,
        }
    }
    if f[..5].iter().all(|x| *x == 0.0) {
        f[5] = 1.0;
    }
    f
}
