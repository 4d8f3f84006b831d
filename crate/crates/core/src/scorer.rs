//! Penalty-adjusted image scoring.
//!
//! Each candidate image `x` is scored against a sample's context `c` as
//! `sim(c, x) - p(x)`. The penalty `p(x)` is the mean similarity of `x` to
//! every context in the dataset, scaled by `card(x) / max card`, where
//! `card(x)` is the number of samples listing `x` as a candidate. Images
//! that look like everything and show up often get pushed down.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank::rank_descending;
use crate::store::{dot, Dataset, EmbeddingStore, Sample};

#[derive(Debug, Clone, Default)]
pub struct PenaltyTable {
    penalties: HashMap<String, f64>,
    max_card: u64,
}

impl PenaltyTable {
    /// A table assigning zero penalty to every candidate image of `dataset`.
    pub fn zeros(dataset: &Dataset) -> Self {
        PenaltyTable {
            penalties: dataset
                .image_cards()
                .keys()
                .map(|id| (id.clone(), 0.0))
                .collect(),
            max_card: dataset.max_image_card(),
        }
    }

    pub fn get(&self, image: &str) -> Option<f64> {
        self.penalties.get(image).copied()
    }

    pub fn max_card(&self) -> u64 {
        self.max_card
    }

    pub fn len(&self) -> usize {
        self.penalties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.penalties.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.penalties.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Computes `p(x)` for every candidate image in `dataset`.
///
/// `contexts` is keyed by sample id. Every sample contributes its context
/// once, so repeated context strings are counted repeatedly.
pub fn compute_penalties(
    dataset: &Dataset,
    contexts: &EmbeddingStore,
    images: &EmbeddingStore,
) -> Result<PenaltyTable> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    dataset.require_embeddings(contexts, images)?;
    if contexts.dim() != images.dim() {
        return Err(Error::VectorLength(contexts.dim(), images.dim()));
    }

    // Mean similarity to all contexts equals similarity to the context
    // centroid, since every vector is unit length and dot is linear.
    let mut centroid = vec![0.0; contexts.dim()];
    for sample in dataset.samples() {
        let c = contexts.get(&sample.sample_id).expect("checked above");
        centroid.iter_mut().zip(c).for_each(|(acc, x)| *acc += x);
    }
    let n = dataset.len() as f64;
    centroid.iter_mut().for_each(|x| *x /= n);

    let max_card = dataset.max_image_card();
    let penalties = dataset
        .image_cards()
        .par_iter()
        .map(|(id, &card)| {
            let x = images.get(id).expect("checked above");
            let mean_sim = dot(&centroid, x);
            let p = if card == max_card {
                mean_sim
            } else {
                mean_sim * card as f64 / max_card as f64
            };
            (id.clone(), p)
        })
        .collect();
    Ok(PenaltyTable {
        penalties,
        max_card,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub image: String,
    pub sim: f64,
    pub penalty: f64,
    pub score: f64,
}

/// Score rows for one sample, in candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub sample: String,
    pub scores: Vec<ScoreRow>,
}

impl SampleScores {
    pub fn values(&self) -> Vec<f64> {
        self.scores.iter().map(|r| r.score).collect()
    }

    /// Candidate indices best first; ties keep candidate order.
    pub fn ranking(&self) -> Vec<usize> {
        rank_descending(&self.values())
    }

    pub fn argmax(&self) -> usize {
        self.ranking()[0]
    }
}

/// Scores the ten candidates of `sample` against its context vector, which
/// is looked up in `contexts` by sample id.
pub fn score_sample(
    sample: &Sample,
    contexts: &EmbeddingStore,
    images: &EmbeddingStore,
    penalties: &PenaltyTable,
) -> Result<SampleScores> {
    let c = contexts
        .get(&sample.sample_id)
        .ok_or_else(|| Error::MissingEmbeddings {
            ids: vec![sample.sample_id.clone()],
        })?;
    let scores = sample
        .image_ids
        .iter()
        .map(|image| {
            let x = images.get(image).ok_or_else(|| Error::MissingEmbeddings {
                ids: vec![image.clone()],
            })?;
            let penalty = penalties.get(image).ok_or_else(|| Error::MissingScore {
                feature: "penalty".into(),
                image: image.clone(),
            })?;
            let sim = dot(c, x);
            Ok(ScoreRow {
                image: image.clone(),
                sim,
                penalty,
                score: sim - penalty,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleScores {
        sample: sample.sample_id.clone(),
        scores,
    })
}

/// Scores every sample; output order follows the dataset.
pub fn score_dataset(
    dataset: &Dataset,
    contexts: &EmbeddingStore,
    images: &EmbeddingStore,
    penalties: &PenaltyTable,
) -> Result<Vec<SampleScores>> {
    dataset
        .samples()
        .par_iter()
        .map(|s| score_sample(s, contexts, images, penalties))
        .collect()
}

pub fn write_scores(path: impl AsRef<Path>, table: &[SampleScores]) -> Result<()> {
    crate::io::write_jsonl(path.as_ref(), table)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<SampleScores>> {
    crate::io::read_jsonl(path.as_ref())
}
