//! The end-to-end ranking flow: expand, score, retrieve, extract features,
//! then rank with the model or the retrieval heuristic.
//!
//! Every stage is exposed separately so callers can persist intermediate
//! results and resume; [`run`] chains them in memory.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{heuristic_select, AblationConfig, Ranking, Thresholds};
use crate::features::{
    self, select_columns, FeatureMatrix, GroupFeatures, FEATURE_COUNT, WIKI_FEATURES,
};
use crate::gbrank::RankModel;
use crate::lexicon::{expand_context, select_sense, Lexicon, MatchPolicy};
use crate::rank::rank_descending_by;
use crate::scorer::{compute_penalties, score_dataset, PenaltyTable, SampleScores};
use crate::store::{Dataset, EmbeddingStore, Sample};
use crate::wikindex::{retrieve, score_images, ArticleIndex, RetrievalScores};

/// Expanded context of one sample and the sense that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expansion {
    pub id: String,
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sense: Option<String>,
}

/// Expands one sample's context; unchanged when no sense matches.
pub fn expand_sample(
    sample: &Sample,
    lexicon: &Lexicon,
    policy: MatchPolicy,
    vectors: Option<&EmbeddingStore>,
) -> Expansion {
    let word = features::context_word(sample);
    match select_sense(lexicon, &sample.target_word, &word, policy, vectors) {
        Some(choice) => Expansion {
            id: sample.sample_id.clone(),
            context: expand_context(&sample.context, choice.sense, lexicon),
            sense: Some(choice.sense.sense_id.clone()),
        },
        None => Expansion {
            id: sample.sample_id.clone(),
            context: sample.context.clone(),
            sense: None,
        },
    }
}

pub fn expand_dataset(
    dataset: &Dataset,
    lexicon: &Lexicon,
    policy: MatchPolicy,
    vectors: Option<&EmbeddingStore>,
) -> Vec<Expansion> {
    dataset
        .samples()
        .par_iter()
        .map(|s| expand_sample(s, lexicon, policy, vectors))
        .collect()
}

pub fn write_expansions(path: impl AsRef<Path>, rows: &[Expansion]) -> Result<()> {
    crate::io::write_jsonl(path.as_ref(), rows)
}

pub fn read_expansions(path: impl AsRef<Path>) -> Result<Vec<Expansion>> {
    crate::io::read_jsonl(path.as_ref())
}

/// How the retrieval features entered a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WikiMode {
    /// Retrieval scores computed and used.
    Used,
    /// Retrieval disabled; columns G–K zero-filled for the full model.
    ZeroFilled,
    /// Retrieval disabled; ranked by a model trained without G–K.
    Retrained,
    /// Retrieval disabled and no model involved.
    Off,
}

impl fmt::Display for WikiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WikiMode::Used => "used",
            WikiMode::ZeroFilled => "zero-filled",
            WikiMode::Retrained => "retrained",
            WikiMode::Off => "off",
        })
    }
}

/// Everything a run may need. Optional parts are only required by the
/// configurations that use them.
#[derive(Clone, Copy)]
pub struct PipelineInputs<'a> {
    pub dataset: &'a Dataset,
    /// Raw context embeddings keyed by sample id.
    pub contexts: &'a EmbeddingStore,
    /// Expanded context embeddings keyed by sample id.
    pub expanded_contexts: Option<&'a EmbeddingStore>,
    pub expansions: Option<&'a [Expansion]>,
    pub images: &'a EmbeddingStore,
    /// Single-word embeddings for features L and M.
    pub words: Option<&'a EmbeddingStore>,
    pub article_images: Option<&'a EmbeddingStore>,
    pub index: Option<&'a ArticleIndex>,
    pub model: Option<&'a RankModel>,
    /// Model trained without columns G–K, used when retrieval is disabled.
    pub model_no_wiki: Option<&'a RankModel>,
    pub top_k: usize,
    pub thresholds: Thresholds,
}

impl<'a> PipelineInputs<'a> {
    pub fn new(
        dataset: &'a Dataset,
        contexts: &'a EmbeddingStore,
        images: &'a EmbeddingStore,
    ) -> Self {
        PipelineInputs {
            dataset,
            contexts,
            expanded_contexts: None,
            expansions: None,
            images,
            words: None,
            article_images: None,
            index: None,
            model: None,
            model_no_wiki: None,
            top_k: crate::wikindex::DEFAULT_TOP_K,
            thresholds: Thresholds::default(),
        }
    }
}

fn missing(what: &str, config: &AblationConfig) -> Error {
    Error::Config(format!("configuration '{}' requires {what}", config.name))
}

/// Context store for the configuration: expanded or raw.
pub fn context_store<'a>(
    inputs: &PipelineInputs<'a>,
    config: &AblationConfig,
) -> Result<&'a EmbeddingStore> {
    if config.expansion {
        inputs
            .expanded_contexts
            .ok_or_else(|| missing("expanded context embeddings", config))
    } else {
        Ok(inputs.contexts)
    }
}

pub fn penalties(inputs: &PipelineInputs<'_>, config: &AblationConfig) -> Result<PenaltyTable> {
    if config.penalties {
        compute_penalties(
            inputs.dataset,
            context_store(inputs, config)?,
            inputs.images,
        )
    } else {
        Ok(PenaltyTable::zeros(inputs.dataset))
    }
}

pub fn compute_scores(
    inputs: &PipelineInputs<'_>,
    config: &AblationConfig,
) -> Result<Vec<SampleScores>> {
    let table = penalties(inputs, config)?;
    score_dataset(
        inputs.dataset,
        context_store(inputs, config)?,
        inputs.images,
        &table,
    )
}

/// Retrieval scores for every sample. The query is the expanded context
/// when expansion is on, the raw context otherwise.
pub fn compute_retrieval(
    inputs: &PipelineInputs<'_>,
    config: &AblationConfig,
) -> Result<Vec<RetrievalScores>> {
    let index = inputs
        .index
        .ok_or_else(|| missing("an article index", config))?;
    let article_images = inputs
        .article_images
        .ok_or_else(|| missing("article image embeddings", config))?;
    let expanded: Option<HashMap<&str, &str>> = if config.expansion {
        let rows = inputs
            .expansions
            .ok_or_else(|| missing("expanded contexts", config))?;
        Some(
            rows.iter()
                .map(|e| (e.id.as_str(), e.context.as_str()))
                .collect(),
        )
    } else {
        None
    };
    inputs
        .dataset
        .samples()
        .par_iter()
        .map(|s| {
            let query = match &expanded {
                Some(map) => {
                    *map.get(s.sample_id.as_str())
                        .ok_or_else(|| Error::InvalidSample {
                            id: s.sample_id.clone(),
                            reason: "no expanded context".into(),
                        })?
                }
                None => s.context.as_str(),
            };
            let r = retrieve(index, query, &s.target_word, inputs.top_k);
            score_images(s, &r, index, inputs.images, article_images)
        })
        .collect()
}

fn check_alignment<'a>(
    dataset: &Dataset,
    stage: &str,
    ids: impl ExactSizeIterator<Item = &'a str>,
) -> Result<()> {
    if ids.len() != dataset.len() {
        return Err(Error::Config(format!(
            "{stage} rows cover {} samples, dataset has {}",
            ids.len(),
            dataset.len()
        )));
    }
    for (s, id) in dataset.samples().iter().zip(ids) {
        if s.sample_id != id {
            return Err(Error::InvalidSample {
                id: s.sample_id.clone(),
                reason: format!("{stage} row is for sample '{id}'"),
            });
        }
    }
    Ok(())
}

/// Feature vectors for every sample. `retrieval = None` zero-fills G–K.
pub fn compute_features(
    inputs: &PipelineInputs<'_>,
    scores: &[SampleScores],
    retrieval: Option<&[RetrievalScores]>,
) -> Result<FeatureMatrix> {
    let words = inputs
        .words
        .ok_or_else(|| Error::Config("feature extraction requires word embeddings".into()))?;
    check_alignment(
        inputs.dataset,
        "score",
        scores.iter().map(|s| s.sample.as_str()),
    )?;
    if let Some(r) = retrieval {
        check_alignment(
            inputs.dataset,
            "retrieval",
            r.iter().map(|s| s.sample.as_str()),
        )?;
    }
    let groups = inputs
        .dataset
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let sims = features::word_level_sims(s, inputs.images, words)?;
            let vectors = features::extract(
                s,
                &scores[i],
                retrieval.map(|r| &r[i]),
                &sims,
                inputs.dataset,
            )?;
            Ok(GroupFeatures::new(s, vectors))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix { groups })
}

fn to_ranking(config: &str, group: &GroupFeatures, order: &[usize]) -> Ranking {
    Ranking {
        sample: group.sample_id.clone(),
        config: config.into(),
        ranking: order.iter().map(|&i| group.image_ids[i].clone()).collect(),
    }
}

/// Ranks each group by model score; ties fall back to the classifier score
/// (feature A), then candidate order.
pub fn rank_with_model(
    config: &str,
    model: &RankModel,
    matrix: &FeatureMatrix,
    drop_wiki: bool,
) -> Result<Vec<Ranking>> {
    matrix
        .groups
        .par_iter()
        .map(|g| {
            let rows: Vec<Vec<f64>> = g
                .vectors
                .iter()
                .map(|v| select_columns(v, drop_wiki))
                .collect();
            let predicted = model.predict(&rows)?;
            let clip: Vec<f64> = g.vectors.iter().map(|v| v.0[0]).collect();
            Ok(to_ranking(
                config,
                g,
                &rank_descending_by(&predicted, &clip),
            ))
        })
        .collect()
}

pub fn rank_with_heuristic(
    config: &str,
    scores: &[SampleScores],
    retrieval: Option<&[RetrievalScores]>,
    thresholds: Thresholds,
) -> Vec<Ranking> {
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let order = heuristic_select(s, retrieval.map(|r| &r[i]), thresholds);
            Ranking {
                sample: s.sample.clone(),
                config: config.into(),
                ranking: order.iter().map(|&k| s.scores[k].image.clone()).collect(),
            }
        })
        .collect()
}

fn expect_features(model: &RankModel, expected: usize) -> Result<()> {
    if model.feature_count == expected {
        Ok(())
    } else {
        Err(Error::FeatureCountMismatch {
            expected,
            found: model.feature_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub scores: Vec<SampleScores>,
    pub retrieval: Option<Vec<RetrievalScores>>,
    pub features: Option<FeatureMatrix>,
    pub rankings: Vec<Ranking>,
    pub wiki_mode: WikiMode,
}

/// Finishes a run from precomputed scores and, if retrieval is enabled,
/// retrieval scores.
pub fn finish(
    inputs: &PipelineInputs<'_>,
    config: &AblationConfig,
    scores: Vec<SampleScores>,
    retrieval: Option<Vec<RetrievalScores>>,
) -> Result<PipelineRun> {
    check_alignment(
        inputs.dataset,
        "score",
        scores.iter().map(|s| s.sample.as_str()),
    )?;
    if config.wikipedia && retrieval.is_none() {
        return Err(missing("retrieval scores", config));
    }
    let retrieval = if config.wikipedia { retrieval } else { None };
    if let Some(r) = &retrieval {
        check_alignment(
            inputs.dataset,
            "retrieval",
            r.iter().map(|s| s.sample.as_str()),
        )?;
    }

    if !config.ltr {
        let rankings = rank_with_heuristic(
            &config.name,
            &scores,
            retrieval.as_deref(),
            inputs.thresholds,
        );
        let wiki_mode = if retrieval.is_some() {
            WikiMode::Used
        } else {
            WikiMode::Off
        };
        return Ok(PipelineRun {
            scores,
            retrieval,
            features: None,
            rankings,
            wiki_mode,
        });
    }

    let (model, drop_wiki, wiki_mode) = match (config.wikipedia, inputs.model_no_wiki) {
        (true, _) => (inputs.model, false, WikiMode::Used),
        (false, Some(m)) => (Some(m), true, WikiMode::Retrained),
        (false, None) => (inputs.model, false, WikiMode::ZeroFilled),
    };
    let model = model.ok_or_else(|| missing("a trained model", config))?;
    let width = if drop_wiki {
        FEATURE_COUNT - WIKI_FEATURES.len()
    } else {
        FEATURE_COUNT
    };
    expect_features(model, width)?;
    let matrix = compute_features(inputs, &scores, retrieval.as_deref())?;
    let rankings = rank_with_model(&config.name, model, &matrix, drop_wiki)?;
    Ok(PipelineRun {
        scores,
        retrieval,
        features: Some(matrix),
        rankings,
        wiki_mode,
    })
}

/// Runs the whole flow for one configuration.
pub fn run(inputs: &PipelineInputs<'_>, config: &AblationConfig) -> Result<PipelineRun> {
    if config.ltr
        && inputs.model.is_none()
        && !(inputs.model_no_wiki.is_some() && !config.wikipedia)
    {
        return Err(missing("a trained model", config));
    }
    let scores = compute_scores(inputs, config)?;
    let retrieval = if config.wikipedia {
        Some(compute_retrieval(inputs, config)?)
    } else {
        None
    };
    finish(inputs, config, scores, retrieval)
}
