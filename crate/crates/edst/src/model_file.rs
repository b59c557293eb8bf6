//! Binary model file.
//!
//! Layout: the line `EDST-MODEL 1`, one line of JSON manifest, then every parameter
//! array as little-endian `f64`, in the order the manifest lists them.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use edst_core::features::{EmbeddingTable, LabelScheme};
use edst_core::nn::Params;
use edst_core::tracker::{TrackerMode, TrackerModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::{dictionary_json, ontology_to_string, parse_dictionary, parse_ontology};

pub const MAGIC: &str = "EDST-MODEL 1\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeRecord {
    label_scheme: String,
    use_prev_belief: bool,
    ablate_value_specific: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayRecord {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    mode: ModeRecord,
    filters: usize,
    embedding_dim: usize,
    /// SHA-256 of the embedding table the model was trained against.
    embeddings_sha256: String,
    ontology: Value,
    dictionary: Option<Value>,
    arrays: Vec<ArrayRecord>,
}

/// Hex SHA-256 over tokens (sorted) and their vectors.
pub fn embeddings_fingerprint(table: &EmbeddingTable) -> String {
    let mut hasher = Sha256::new();
    hasher.update((table.dim() as u64).to_le_bytes());
    for token in table.tokens() {
        hasher.update((token.len() as u64).to_le_bytes());
        hasher.update(token.as_bytes());
        for x in table.lookup(token) {
            hasher.update(x.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

pub fn model_to_bytes(model: &TrackerModel) -> Vec<u8> {
    let mode = model.mode();
    let groups = model.groups();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        mode: ModeRecord {
            label_scheme: mode.label_scheme.as_str().into(),
            use_prev_belief: mode.use_prev_belief,
            ablate_value_specific: mode.ablate_value_specific,
        },
        filters: model.filters(),
        embedding_dim: model.embeddings().dim(),
        embeddings_sha256: embeddings_fingerprint(model.embeddings()),
        ontology: serde_json::from_str(&ontology_to_string(model.ontology())).expect("ontology JSON"),
        dictionary: model.dictionary().map(|d| dictionary_json(d)),
        arrays: groups.iter().map(|(name, g)| ArrayRecord { name: name.clone(), len: g.len() }).collect(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.extend_from_slice(serde_json::to_string(&manifest).expect("manifest JSON").as_bytes());
    out.push(b'\n');
    for (_, g) in &groups {
        for x in g.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(format!("model file: {}", msg.into()))
}

/// Rebuilds a model. `embeddings` must be the table the model was trained with.
pub fn model_from_bytes(bytes: &[u8], embeddings: Arc<EmbeddingTable>) -> Result<TrackerModel> {
    let body = bytes.strip_prefix(MAGIC.as_bytes()).ok_or_else(|| bad("missing header"))?;
    let newline = body.iter().position(|b| *b == b'\n').ok_or_else(|| bad("missing manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&body[..newline]).map_err(|e| bad(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", manifest.format_version)));
    }
    if manifest.embedding_dim != embeddings.dim() {
        return Err(bad(format!(
            "trained with {}-dimensional embeddings, got {}",
            manifest.embedding_dim,
            embeddings.dim()
        )));
    }
    if manifest.embeddings_sha256 != embeddings_fingerprint(&embeddings) {
        return Err(bad("embedding table differs from the one used in training"));
    }
    let label_scheme = LabelScheme::parse(&manifest.mode.label_scheme)
        .ok_or_else(|| bad(format!("unknown label scheme '{}'", manifest.mode.label_scheme)))?;
    let mode = TrackerMode {
        label_scheme,
        use_prev_belief: manifest.mode.use_prev_belief,
        ablate_value_specific: manifest.mode.ablate_value_specific,
    };
    let ontology = parse_ontology(&manifest.ontology.to_string())?;
    let dictionary = manifest.dictionary.map(|d| parse_dictionary(&d.to_string())).transpose()?;
    // Initial values are overwritten below; the generator only fixes the shapes.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = TrackerModel::new(
        mode,
        manifest.filters,
        Arc::new(ontology),
        embeddings,
        dictionary.map(Arc::new),
        &mut rng,
    )?;
    let mut data = &body[newline + 1..];
    let mut groups = model.groups_mut();
    if groups.len() != manifest.arrays.len() {
        return Err(bad(format!("{} arrays listed, model has {}", manifest.arrays.len(), groups.len())));
    }
    for ((name, g), record) in groups.iter_mut().zip(&manifest.arrays) {
        if *name != record.name || g.len() != record.len {
            return Err(bad(format!("array '{}' ({}) does not match '{name}' ({})", record.name, record.len, g.len())));
        }
        let bytes = 8 * g.len();
        if data.len() < bytes {
            return Err(bad(format!("truncated in array '{name}'")));
        }
        for (x, chunk) in g.iter_mut().zip(data[..bytes].chunks_exact(8)) {
            *x = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        data = &data[bytes..];
    }
    if !data.is_empty() {
        return Err(bad(format!("{} trailing bytes", data.len())));
    }
    drop(groups);
    Ok(model)
}

pub fn save_model(path: &Path, model: &TrackerModel) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path, embeddings: Arc<EmbeddingTable>) -> Result<TrackerModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes, embeddings).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
