//! BM25 article index with per-article image payloads, and image scoring
//! through retrieved articles.
//!
//! Articles are indexed on `title + " " + text` using the shared tokenizer.
//! A query scores document `d` as
//!
//! ```text
//! sum over distinct query terms t present in d:
//!     idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avg_len))
//! idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```
//!
//! # Index file layout
//!
//! Little-endian; strings are `u32` byte length followed by UTF-8 bytes.
//!
//! ```text
//! magic     b"VWBM"
//! version   u32 (= 1)
//! k1, b     f64, f64
//! doc table u32 count, then per doc: id string, length u32,
//!           image count u32, image id strings
//! postings  u32 term count, then per term (sorted): term string,
//!           u32 posting count, postings as (doc u32, tf u32)
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{dot, EmbeddingStore, Sample};
use crate::text::tokenize;

pub const INDEX_MAGIC: &[u8; 4] = b"VWBM";
const INDEX_VERSION: u32 = 1;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    #[serde(rename = "id")]
    pub article_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
    #[serde(rename = "images", default)]
    pub image_ids: Vec<String>,
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Article>> {
    crate::io::read_jsonl(path.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocEntry {
    pub article_id: String,
    pub length: u32,
    pub image_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArticleIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    docs: Vec<DocEntry>,
    avg_doc_length: f64,
    k1: f64,
    b: f64,
}

impl ArticleIndex {
    pub fn build<I>(articles: I, k1: f64, b: f64) -> Result<Self>
    where
        I: IntoIterator<Item = Article>,
    {
        if !(k1 >= 0.0 && k1.is_finite()) || !(0.0..=1.0).contains(&b) {
            return Err(Error::Config(format!(
                "invalid BM25 parameters k1={k1} b={b}"
            )));
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut docs = Vec::new();
        let mut seen = HashSet::new();
        for article in articles {
            if !seen.insert(article.article_id.clone()) {
                return Err(Error::DuplicateId {
                    id: article.article_id,
                });
            }
            let doc = docs.len() as u32;
            let tokens = tokenize(&format!("{} {}", article.title, article.text));
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings
                    .entry(term)
                    .or_default()
                    .push(Posting { doc, tf: count });
            }
            docs.push(DocEntry {
                article_id: article.article_id,
                length: tokens.len() as u32,
                image_ids: article.image_ids,
            });
        }
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        // docs are appended in ordinal order, so each list is already sorted
        let avg_doc_length = docs.iter().map(|d| d.length as f64).sum::<f64>() / docs.len() as f64;
        Ok(ArticleIndex {
            postings,
            docs,
            avg_doc_length,
            k1,
            b,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn doc(&self, ordinal: usize) -> &DocEntry {
        &self.docs[ordinal]
    }

    pub fn docs(&self) -> &[DocEntry] {
        &self.docs
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 scores of all documents matching at least one query term, as
    /// `(ordinal, score)` in ascending ordinal order.
    pub fn score_query(&self, query: &str) -> Vec<(usize, f64)> {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for p in list {
                let tf = p.tf as f64;
                let len = self.docs[p.doc as usize].length as f64;
                let norm = self.k1 * (1.0 - self.b + self.b * len / self.avg_doc_length);
                *acc.entry(p.doc).or_default() += idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        let mut scored: Vec<(usize, f64)> = acc.into_iter().map(|(d, s)| (d as usize, s)).collect();
        scored.sort_by_key(|&(d, _)| d);
        scored
    }

    /// Up to `top_k` documents with positive score, best first, ties by
    /// ordinal.
    pub fn search(&self, query: &str, top_k: usize) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = self
            .score_query(query)
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(top_k);
        scored
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())
        }
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&self.k1.to_le_bytes())?;
        w.write_all(&self.b.to_le_bytes())?;
        w.write_all(&(self.docs.len() as u32).to_le_bytes())?;
        for doc in &self.docs {
            put_str(w, &doc.article_id)?;
            w.write_all(&doc.length.to_le_bytes())?;
            w.write_all(&(doc.image_ids.len() as u32).to_le_bytes())?;
            for img in &doc.image_ids {
                put_str(w, img)?;
            }
        }
        w.write_all(&(self.postings.len() as u32).to_le_bytes())?;
        for (term, list) in &self.postings {
            put_str(w, term)?;
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for p in list {
                w.write_all(&p.doc.to_le_bytes())?;
                w.write_all(&p.tf.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = IndexReader {
            inner: BufReader::new(file),
            path,
        };
        let mut magic = [0u8; 4];
        r.bytes(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(Error::format(path, "bad magic, not an index file"));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported index version {version}"),
            ));
        }
        let k1 = r.f64()?;
        let b = r.f64()?;
        let n_docs = r.u32()? as usize;
        let mut docs = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let article_id = r.string()?;
            let length = r.u32()?;
            let n_images = r.u32()? as usize;
            let image_ids = (0..n_images).map(|_| r.string()).collect::<Result<_>>()?;
            docs.push(DocEntry {
                article_id,
                length,
                image_ids,
            });
        }
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let n_terms = r.u32()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = r.string()?;
            let n = r.u32()? as usize;
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= docs.len() || list.last().is_some_and(|p: &Posting| p.doc >= doc)
                {
                    return Err(Error::format(
                        path,
                        format!("corrupt postings for '{term}'"),
                    ));
                }
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        let avg_doc_length = docs.iter().map(|d| d.length as f64).sum::<f64>() / docs.len() as f64;
        Ok(ArticleIndex {
            postings,
            docs,
            avg_doc_length,
            k1,
            b,
        })
    }
}

struct IndexReader<'a, R> {
    inner: R,
    path: &'a Path,
}

impl<R: Read> IndexReader<'_, R> {
    fn bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| Error::io(self.path, e))
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.bytes(&mut buf)?;
        String::from_utf8(buf).map_err(|_| Error::format(self.path, "string is not valid UTF-8"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    /// `(ordinal, score)` best first.
    pub hits: Vec<(usize, f64)>,
    pub used_fallback: bool,
}

impl Retrieval {
    pub fn ordinals(&self) -> Vec<usize> {
        self.hits.iter().map(|&(d, _)| d).collect()
    }
}

/// Queries with the full context; when nothing scores above zero, retries
/// with the target word alone.
pub fn retrieve(index: &ArticleIndex, context: &str, target_word: &str, top_k: usize) -> Retrieval {
    let hits = index.search(context, top_k);
    if !hits.is_empty() {
        return Retrieval {
            hits,
            used_fallback: false,
        };
    }
    Retrieval {
        hits: index.search(target_word, top_k),
        used_fallback: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image: String,
    pub score: f64,
}

/// Per-candidate retrieval scores for one sample, in candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub sample: String,
    pub scores: Vec<ImageScore>,
    #[serde(rename = "articles")]
    pub retrieved_article_ids: Vec<String>,
    #[serde(rename = "fallback")]
    pub used_fallback: bool,
}

impl RetrievalScores {
    pub fn values(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.score).collect()
    }
}

/// Scores each candidate by its highest cosine to any image attached to the
/// retrieved articles. Article images without an embedding are skipped; a
/// candidate scores 0 when no article image is available.
pub fn score_images(
    sample: &Sample,
    retrieval: &Retrieval,
    index: &ArticleIndex,
    images: &EmbeddingStore,
    article_images: &EmbeddingStore,
) -> Result<RetrievalScores> {
    let ordinals = retrieval.ordinals();
    let mut seen = HashSet::new();
    let pool: Vec<&[f64]> = ordinals
        .iter()
        .flat_map(|&d| index.doc(d).image_ids.iter())
        .filter(|id| seen.insert(id.as_str()))
        .filter_map(|id| article_images.get(id))
        .collect();
    let scores = sample
        .image_ids
        .iter()
        .map(|image| {
            let x = images.get(image).ok_or_else(|| Error::MissingEmbeddings {
                ids: vec![image.clone()],
            })?;
            let score = pool
                .iter()
                .map(|a| dot(a, x).clamp(-1.0, 1.0))
                .reduce(f64::max)
                .unwrap_or(0.0);
            Ok(ImageScore {
                image: image.clone(),
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrievalScores {
        sample: sample.sample_id.clone(),
        scores,
        retrieved_article_ids: ordinals
            .iter()
            .map(|&d| index.doc(d).article_id.clone())
            .collect(),
        used_fallback: retrieval.used_fallback,
    })
}

pub fn write_retrieval(path: impl AsRef<Path>, rows: &[RetrievalScores]) -> Result<()> {
    crate::io::write_jsonl(path.as_ref(), rows)
}

pub fn read_retrieval(path: impl AsRef<Path>) -> Result<Vec<RetrievalScores>> {
    crate::io::read_jsonl(path.as_ref())
}
