//! Accuracy and MRR, the retrieval-override heuristic used when the ranking
//! model is disabled, and the component-ablation harness.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{self, PipelineInputs, WikiMode};
use crate::rank::rank_descending;
use crate::scorer::SampleScores;
use crate::store::Dataset;
use crate::wikindex::RetrievalScores;

/// Candidate ids of one sample, best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub sample: String,
    pub config: String,
    pub ranking: Vec<String>,
}

pub fn write_rankings(path: impl AsRef<Path>, rankings: &[Ranking]) -> Result<()> {
    crate::io::write_jsonl(path.as_ref(), rankings)
}

pub fn read_rankings(path: impl AsRef<Path>) -> Result<Vec<Ranking>> {
    crate::io::read_jsonl(path.as_ref())
}

/// Sample id → gold image id. Fails if any sample lacks gold.
pub fn gold_map(dataset: &Dataset) -> Result<HashMap<String, String>> {
    dataset
        .samples()
        .iter()
        .map(|s| {
            let gold = s
                .gold_image_id
                .clone()
                .ok_or_else(|| Error::InvalidSample {
                    id: s.sample_id.clone(),
                    reason: "no gold image".into(),
                })?;
            Ok((s.sample_id.clone(), gold))
        })
        .collect()
}

/// 1-based positions of the gold image in each ranking.
fn gold_ranks(results: &[Ranking], gold: &HashMap<String, String>) -> Result<Vec<usize>> {
    if results.is_empty() {
        return Err(Error::EmptyDataset);
    }
    results
        .iter()
        .map(|r| {
            let g = gold.get(&r.sample).ok_or_else(|| Error::InvalidSample {
                id: r.sample.clone(),
                reason: "no gold image".into(),
            })?;
            r.ranking
                .iter()
                .position(|id| id == g)
                .map(|p| p + 1)
                .ok_or_else(|| Error::InvalidSample {
                    id: r.sample.clone(),
                    reason: format!("gold image '{g}' missing from ranking"),
                })
        })
        .collect()
}

/// Fraction of samples whose top-ranked image is gold.
pub fn accuracy(results: &[Ranking], gold: &HashMap<String, String>) -> Result<f64> {
    let ranks = gold_ranks(results, gold)?;
    Ok(ranks.iter().filter(|&&r| r == 1).count() as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank of the gold image.
pub fn mrr(results: &[Ranking], gold: &HashMap<String, String>) -> Result<f64> {
    let ranks = gold_ranks(results, gold)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub n_samples: usize,
    pub accuracy: f64,
    pub mrr: f64,
}

pub fn evaluate(results: &[Ranking], dataset: &Dataset) -> Result<Metrics> {
    let gold = gold_map(dataset)?;
    Ok(Metrics {
        n_samples: results.len(),
        accuracy: accuracy(results, &gold)?,
        mrr: mrr(results, &gold)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub hi: f64,
    pub lo: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { hi: 0.9, lo: 0.8 }
    }
}

/// Puts the retrieval favourite first when exactly one candidate scores
/// above `hi` and all others score below `lo`; otherwise, and for the rest
/// of the list, orders by classifier score.
pub fn heuristic_select(
    clip: &SampleScores,
    wiki: Option<&RetrievalScores>,
    thresholds: Thresholds,
) -> Vec<usize> {
    let clip_order = rank_descending(&clip.values());
    let Some(wiki) = wiki else {
        return clip_order;
    };
    let w = wiki.values();
    let above: Vec<usize> = (0..w.len()).filter(|&i| w[i] > thresholds.hi).collect();
    if let [pick] = above[..] {
        let others_low = w
            .iter()
            .enumerate()
            .all(|(i, &v)| i == pick || v < thresholds.lo);
        if others_low {
            let mut order = vec![pick];
            order.extend(clip_order.into_iter().filter(|&i| i != pick));
            return order;
        }
    }
    clip_order
}

/// Which pipeline components are switched on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub name: String,
    pub penalties: bool,
    pub ltr: bool,
    pub expansion: bool,
    pub wikipedia: bool,
}

impl AblationConfig {
    fn preset(name: &str, penalties: bool, ltr: bool, expansion: bool, wikipedia: bool) -> Self {
        AblationConfig {
            name: name.into(),
            penalties,
            ltr,
            expansion,
            wikipedia,
        }
    }

    pub fn original() -> Self {
        Self::preset("original", true, true, true, true)
    }

    /// The six standard configurations, full system first.
    pub fn presets() -> Vec<Self> {
        vec![
            Self::original(),
            Self::preset("no_penalties", false, true, true, true),
            Self::preset("no_ltr", true, false, true, true),
            Self::preset("no_expansion", true, true, false, true),
            Self::preset("no_wikipedia", true, true, true, false),
            Self::preset("clip_only", false, false, false, false),
        ]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::presets().into_iter().find(|c| c.name == name)
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub config: String,
    pub language: String,
    pub outcome: std::result::Result<Metrics, String>,
    pub wiki_mode: WikiMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.is_ok())
    }

    pub fn get(&self, config: &str) -> Option<&Metrics> {
        self.rows
            .iter()
            .find(|r| r.config == config)
            .and_then(|r| r.outcome.as_ref().ok())
    }

    /// Tab-separated rows of successful configurations.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("config\tlanguage\tn_samples\taccuracy\tmrr\n");
        for row in &self.rows {
            if let Ok(m) = &row.outcome {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{:.6}\t{:.6}",
                    row.config, row.language, m.n_samples, m.accuracy, m.mrr
                )
                .unwrap();
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<14} {:>5} {:>6} {:>8} {:>8}  {}\n",
            "method", "lang", "n", "ACC", "MRR", "wikipedia"
        );
        for row in &self.rows {
            match &row.outcome {
                Ok(m) => writeln!(
                    out,
                    "{:<14} {:>5} {:>6} {:>8.2} {:>8.2}  {}",
                    row.config,
                    row.language,
                    m.n_samples,
                    m.accuracy * 100.0,
                    m.mrr * 100.0,
                    row.wiki_mode
                ),
                Err(e) => writeln!(out, "{:<14} {:>5}  failed: {e}", row.config, row.language),
            }
            .unwrap();
        }
        out
    }
}

/// Runs every configuration over the same inputs and scores it against the
/// dataset's gold labels. A failing configuration is recorded, not fatal.
pub fn run_ablation(
    inputs: &PipelineInputs<'_>,
    language: &str,
    configs: &[AblationConfig],
) -> AblationReport {
    let rows = configs
        .iter()
        .map(|cfg| {
            let result = pipeline::run(inputs, cfg)
                .and_then(|run| Ok((evaluate(&run.rankings, inputs.dataset)?, run.wiki_mode)));
            let (outcome, wiki_mode) = match result {
                Ok((m, mode)) => (Ok(m), mode),
                Err(e) => (Err(e.to_string()), WikiMode::Off),
            };
            AblationRow {
                config: cfg.name.clone(),
                language: language.into(),
                outcome,
                wiki_mode,
            }
        })
        .collect();
    AblationReport { rows }
}
