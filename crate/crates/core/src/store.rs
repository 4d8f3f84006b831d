//! Embedding stores and task datasets.
//!
//! Vectors are L2-normalized on insertion, so cosine similarity between two
//! stored vectors is a plain dot product.
//!
//! Binary embedding layout (all integers little-endian):
//!
//! ```text
//! magic  b"VWEB"
//! dim    u32
//! count  u64
//! count × { id_len u32, id UTF-8 bytes, dim × f32 }
//! ```
//!
//! The TSV alternative holds one record per line: `id<TAB>v1 v2 ... vd`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"VWEB";

/// Number of candidate images in every sample.
pub const CANDIDATES: usize = 10;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit length. Returns `false` (leaving `v` untouched) for a
/// zero vector.
pub fn normalize(v: &mut [f64]) -> bool {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Cosine similarity of two arbitrary (not necessarily unit) vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::VectorLength(a.len(), b.len()));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    Tsv,
}

impl EmbeddingFormat {
    /// `.tsv` and `.txt` files are text, everything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => EmbeddingFormat::Tsv,
            _ => EmbeddingFormat::Binary,
        }
    }
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" => Ok(EmbeddingFormat::Binary),
            "tsv" => Ok(EmbeddingFormat::Tsv),
            other => Err(Error::Config(format!("unknown embedding format '{other}'"))),
        }
    }
}

/// Id-keyed table of unit vectors sharing one dimensionality.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Ids in insertion order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim.max(1)))
            .map(|(id, v)| (id.as_str(), v))
    }

    /// Adds a vector, normalizing it. The first insertion into a store
    /// created with `dim == 0` fixes the dimensionality.
    pub fn insert(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<()> {
        let id = id.into();
        if self.dim == 0 && self.ids.is_empty() {
            self.dim = vector.len();
        }
        if vector.len() != self.dim || self.dim == 0 {
            return Err(Error::DimensionMismatch {
                id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { id });
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId { id });
        }
        let mut v = vector.to_vec();
        if !normalize(&mut v) {
            return Err(Error::ZeroVector { id });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&v);
        Ok(())
    }

    /// Cosine similarity between two stored vectors, `None` if either id is
    /// absent.
    pub fn similarity(&self, a: &str, other: &EmbeddingStore, b: &str) -> Option<f64> {
        Some(dot(self.get(a)?, other.get(b)?))
    }

    pub fn load(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        match format {
            EmbeddingFormat::Binary => Self::read_binary(reader, path),
            EmbeddingFormat::Tsv => Self::read_tsv(reader, path),
        }
    }

    /// Loads with the format inferred from the file extension.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::load(path, EmbeddingFormat::from_path(path))
    }

    fn read_binary(mut r: impl Read, path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != EMBEDDING_MAGIC {
            return Err(Error::format(
                path,
                "bad magic, not a binary embedding file",
            ));
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u32buf).map_err(io)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u64buf).map_err(io)?;
        let count = u64::from_le_bytes(u64buf);
        if dim == 0 {
            return Err(Error::format(path, "dimension is zero"));
        }
        let mut store = EmbeddingStore::new(dim);
        let mut raw = vec![0u8; dim * 4];
        let mut v = vec![0f64; dim];
        for _ in 0..count {
            r.read_exact(&mut u32buf).map_err(io)?;
            let len = u32::from_le_bytes(u32buf) as usize;
            let mut idb = vec![0u8; len];
            r.read_exact(&mut idb).map_err(io)?;
            let id = String::from_utf8(idb)
                .map_err(|_| Error::format(path, "record id is not valid UTF-8"))?;
            r.read_exact(&mut raw).map_err(io)?;
            for (slot, chunk) in v.iter_mut().zip(raw.chunks_exact(4)) {
                *slot = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            }
            store.insert(id, &v)?;
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe).map_err(io)? != 0 {
            return Err(Error::format(path, "trailing bytes after last record"));
        }
        Ok(store)
    }

    fn read_tsv(r: impl BufRead, path: &Path) -> Result<Self> {
        let mut store = EmbeddingStore::new(0);
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, lineno + 1, "expected id<TAB>values"))?;
            let values = rest
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, lineno + 1, format!("record '{id}': {e}")))?;
            store.insert(id, &values)?;
        }
        Ok(store)
    }

    pub fn write(&self, path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let res = match format {
            EmbeddingFormat::Binary => self.write_binary(&mut w),
            EmbeddingFormat::Tsv => self.write_tsv(&mut w),
        };
        res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    /// Writes with the format inferred from the file extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write(path, EmbeddingFormat::from_path(path))
    }

    fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(EMBEDDING_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (id, v) in self.iter() {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            for x in v {
                w.write_all(&(*x as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    fn write_tsv(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (id, v) in self.iter() {
            write!(w, "{id}\t")?;
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{x}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// One disambiguation task: a phrase and its ten candidate images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "id")]
    pub sample_id: String,
    #[serde(rename = "target")]
    pub target_word: String,
    pub context: String,
    #[serde(rename = "images")]
    pub image_ids: Vec<String>,
    #[serde(rename = "gold", default, skip_serializing_if = "Option::is_none")]
    pub gold_image_id: Option<String>,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidSample {
            id: self.sample_id.clone(),
            reason,
        };
        if self.image_ids.len() != CANDIDATES {
            return Err(invalid(format!(
                "expected {CANDIDATES} images, found {}",
                self.image_ids.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &self.image_ids {
            if !seen.insert(id) {
                return Err(invalid(format!("image '{id}' listed twice")));
            }
        }
        if let Some(gold) = &self.gold_image_id {
            if !seen.contains(gold) {
                return Err(invalid(format!("gold image '{gold}' is not a candidate")));
            }
        }
        Ok(())
    }

    /// Candidate position of the gold image.
    pub fn gold_index(&self) -> Option<usize> {
        let gold = self.gold_image_id.as_ref()?;
        self.image_ids.iter().position(|id| id == gold)
    }
}

/// Samples plus the corpus statistics derived from them.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
    image_card: HashMap<String, u64>,
    word_card: HashMap<String, u64>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut image_card: HashMap<String, u64> = HashMap::new();
        let mut word_card: HashMap<String, u64> = HashMap::new();
        let mut ids = HashSet::new();
        for sample in &samples {
            sample.validate()?;
            if !ids.insert(sample.sample_id.as_str()) {
                return Err(Error::DuplicateId {
                    id: sample.sample_id.clone(),
                });
            }
            for image in &sample.image_ids {
                *image_card.entry(image.clone()).or_default() += 1;
            }
            for token in tokenize(&sample.context) {
                *word_card.entry(token).or_default() += 1;
            }
        }
        Ok(Dataset {
            samples,
            image_card,
            word_card,
        })
    }

    /// Reads a JSONL file with one sample per line, keeping file order.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let samples = crate::io::read_jsonl(path.as_ref())?;
        Self::new(samples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_jsonl(path.as_ref(), &self.samples)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of samples in which `image` appears (zero if unknown).
    pub fn image_card(&self, image: &str) -> u64 {
        self.image_card.get(image).copied().unwrap_or(0)
    }

    pub fn image_cards(&self) -> &HashMap<String, u64> {
        &self.image_card
    }

    pub fn max_image_card(&self) -> u64 {
        self.image_card.values().copied().max().unwrap_or(0)
    }

    /// Occurrences of a normalized token across all contexts.
    pub fn word_card(&self, token: &str) -> u64 {
        self.word_card.get(token).copied().unwrap_or(0)
    }

    pub fn word_cards(&self) -> &HashMap<String, u64> {
        &self.word_card
    }

    /// Distinct candidate image ids in first-seen order.
    pub fn image_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .flat_map(|s| s.image_ids.iter())
            .filter(|id| seen.insert(id.as_str()))
            .map(String::as_str)
            .collect()
    }

    /// Candidate image ids that have no vector in `store`, sorted.
    pub fn missing_images(&self, store: &EmbeddingStore) -> BTreeSet<String> {
        self.image_card
            .keys()
            .filter(|id| !store.contains(id))
            .cloned()
            .collect()
    }

    /// Sample ids that have no context vector in `store`, sorted.
    pub fn missing_contexts(&self, store: &EmbeddingStore) -> BTreeSet<String> {
        self.samples
            .iter()
            .filter(|s| !store.contains(&s.sample_id))
            .map(|s| s.sample_id.clone())
            .collect()
    }

    /// Fails with the exact set of missing ids unless every context and
    /// candidate image has an embedding.
    pub fn require_embeddings(
        &self,
        contexts: &EmbeddingStore,
        images: &EmbeddingStore,
    ) -> Result<()> {
        let mut missing: BTreeSet<String> = self.missing_contexts(contexts);
        missing.extend(self.missing_images(images));
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingEmbeddings {
                ids: missing.into_iter().collect(),
            })
        }
    }
}
