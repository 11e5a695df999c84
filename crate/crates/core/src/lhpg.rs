//! Maps an arbitrary test vocabulary onto hierarchy synsets by embedding
//! similarity and emits a prompt from the matched lemma.
//!
//! Text encoders are out of the loop: embeddings come from a precomputed
//! table (`<surface><TAB><v1> ... <vD>` per line) or from a deterministic
//! hash-seeded mock. All vectors are unit-normalized, so cosine similarity is
//! a dot product.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hierarchy::{HierarchyGraph, SynsetId};
use crate::matrix_io::format_value;

pub const DEFAULT_TEMPLATE: &str = "a photo of a {}";

/// Norm tolerance for stored vectors.
pub const NORM_TOLERANCE: f64 = 1e-6;

fn normalize(name: &str, mut v: Vec<f64>) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector(name.to_string()));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit vectors keyed by surface string, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimensionMismatch {
                context: "embedding dimension (minimum)",
                expected: 2,
                actual: dim,
            });
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    /// Normalizes and stores `vector`. Returns `false` if `name` was present.
    pub fn insert(&mut self, name: impl Into<String>, vector: Vec<f64>) -> Result<bool> {
        let name = name.into();
        Error::check_dim("embedding", self.dim, vector.len())?;
        let v = normalize(&name, vector)?;
        Ok(self.entries.insert(name, v).is_none())
    }

    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        let mut table: Option<Self> = None;
        for (i, line) in source.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let Some((name, values)) = line.split_once('\t') else {
                return Err(Error::parse(lineno, "expected <surface><TAB><values>"));
            };
            if name.is_empty() {
                return Err(Error::parse(lineno, "empty surface string"));
            }
            let vector = values
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(lineno, format!("bad number {tok:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let table = match &mut table {
                Some(t) => t,
                None => table.insert(Self::new(vector.len())?),
            };
            if !table.insert(name, vector)? {
                return Err(Error::parse(lineno, format!("duplicate entry {name:?}")));
            }
        }
        table.ok_or_else(|| Error::parse(0, "embedding file has no entries"))
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::load(text.as_bytes())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Deterministic unit vector for `(name, seed)`: SHA-256 of the seed and the
/// name seeds a ChaCha stream of standard normals, which is then normalized.
pub fn mock_embedding(name: &str, dim: usize, seed: u64) -> Vec<f64> {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(name.as_bytes())
        .finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Ok(unit) = normalize(name, v) {
            return unit;
        }
    }
}

/// Where vectors come from: a table, a mock generator, or a table that
/// falls back to the mock for missing strings.
#[derive(Debug, Clone)]
pub struct Embedder {
    table: Option<EmbeddingTable>,
    dim: usize,
    mock_seed: Option<u64>,
}

impl Embedder {
    pub fn from_table(table: EmbeddingTable) -> Self {
        Self {
            dim: table.dim(),
            table: Some(table),
            mock_seed: None,
        }
    }

    pub fn mock(dim: usize, seed: u64) -> Result<Self> {
        EmbeddingTable::new(dim)?;
        Ok(Self {
            table: None,
            dim,
            mock_seed: Some(seed),
        })
    }

    /// Uses the mock generator (at the table's dimension) for strings the
    /// table lacks.
    pub fn with_mock_fallback(mut self, seed: u64) -> Self {
        self.mock_seed = Some(seed);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, name: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.table.as_ref().and_then(|t| t.get(name)) {
            return Ok(v.to_vec());
        }
        match self.mock_seed {
            Some(seed) => Ok(mock_embedding(name, self.dim, seed)),
            None => Err(Error::MissingEmbedding(name.to_string())),
        }
    }
}

/// Substitutes `lemma` into the single `{}` of `template`.
pub fn emit_prompt(lemma: &str, template: &str) -> Result<String> {
    if template.matches("{}").count() != 1 {
        return Err(Error::BadTemplate(template.to_string()));
    }
    Ok(template.replacen("{}", lemma, 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeMatch {
    pub test_name: String,
    pub synset: SynsetId,
    pub lemma: String,
    pub similarity: f64,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeResult {
    pub matches: Vec<BridgeMatch>,
}

impl BridgeResult {
    /// One tab-separated row per test name, under a `#` header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# test_name\tsynset\tlemma\tsimilarity\tprompt\n");
        for m in &self.matches {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                m.test_name,
                m.synset,
                m.lemma,
                format_value(m.similarity),
                m.prompt
            ));
        }
        out
    }
}

/// For each test name, the synset whose best lemma is most similar. Ties
/// go to the lexicographically smallest synset id (graph order), then to the
/// earlier lemma.
pub fn bridge_vocabulary(
    v_test: &[String],
    graph: &HierarchyGraph,
    embedder: &Embedder,
    template: &str,
) -> Result<BridgeResult> {
    emit_prompt("", template)?;
    if graph.node_count() == 0 {
        return Err(Error::Invariant("hierarchy has no synsets to match against".into()));
    }
    let lemma_vectors = graph
        .synsets()
        .iter()
        .map(|s| s.lemmas.iter().map(|l| embedder.embed(l)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let mut matches = Vec::with_capacity(v_test.len());
    for name in v_test {
        let query = embedder.embed(name)?;
        let mut best: Option<(usize, usize, f64)> = None;
        for (s, lemmas) in lemma_vectors.iter().enumerate() {
            for (l, v) in lemmas.iter().enumerate() {
                let sim = dot(&query, v);
                if best.is_none_or(|(_, _, b)| sim > b) {
                    best = Some((s, l, sim));
                }
            }
        }
        let (s, l, similarity) = best.expect("graph is non-empty");
        let synset = graph.synset(s);
        let lemma = synset.lemmas[l].clone();
        matches.push(BridgeMatch {
            test_name: name.clone(),
            synset: synset.id.clone(),
            prompt: emit_prompt(&lemma, template)?,
            lemma,
            similarity,
        });
    }
    Ok(BridgeResult { matches })
}
