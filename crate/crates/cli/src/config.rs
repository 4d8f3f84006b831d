//! Run configuration: a TOML file merged with command-line overrides.
//! Flags win over the file. Relative paths in the file resolve against the
//! file's directory.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use vwsd::gbrank::TrainConfig;
use vwsd::lexicon::MatchPolicy;
use vwsd::wikindex::{DEFAULT_B, DEFAULT_K1, DEFAULT_TOP_K};
use vwsd::Thresholds;

use crate::Failure;

pub const LANGUAGES: [&str; 4] = ["en", "it", "fa", "other"];

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub language: Option<String>,
    pub dataset: Option<PathBuf>,
    pub contexts: Option<PathBuf>,
    pub expanded_contexts: Option<PathBuf>,
    pub expansions: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub words: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub article_images: Option<PathBuf>,
    pub lexicon: Vec<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub model_no_wiki: Option<PathBuf>,
    pub policy: Option<MatchPolicy>,
    pub seed: Option<u64>,
    pub bm25: Bm25Section,
    pub heuristic: HeuristicSection,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Section {
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub top_k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicSection {
    pub hi: Option<f64>,
    pub lo: Option<f64>,
}

/// Inputs shared by all subcommands; each overrides the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Language tag: en, it, fa or other
    #[arg(long, global = true)]
    pub language: Option<String>,
    /// Samples (JSONL)
    #[arg(long, global = true, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Raw context embeddings keyed by sample id
    #[arg(long, global = true, value_name = "FILE")]
    pub contexts: Option<PathBuf>,
    /// Expanded context embeddings keyed by sample id
    #[arg(long, global = true, value_name = "FILE")]
    pub expanded_contexts: Option<PathBuf>,
    /// Expanded contexts (JSONL) as written by `expand`
    #[arg(long, global = true, value_name = "FILE")]
    pub expansions: Option<PathBuf>,
    /// Candidate image embeddings
    #[arg(long, global = true, value_name = "FILE")]
    pub images: Option<PathBuf>,
    /// Single-word text embeddings for the word-level features
    #[arg(long, global = true, value_name = "FILE")]
    pub words: Option<PathBuf>,
    /// Word vectors for similarity-based sense matching
    #[arg(long, global = true, value_name = "FILE")]
    pub word_vectors: Option<PathBuf>,
    /// Embeddings of article images
    #[arg(long, global = true, value_name = "FILE")]
    pub article_images: Option<PathBuf>,
    /// Lexicon file (JSONL); repeat to concatenate several
    #[arg(long, global = true, value_name = "FILE")]
    pub lexicon: Vec<PathBuf>,
    /// Article corpus (JSONL)
    #[arg(long, global = true, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Article index built by `build-index`
    #[arg(long, global = true, value_name = "FILE")]
    pub index: Option<PathBuf>,
    /// Ranking model (JSON)
    #[arg(long, global = true, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Ranking model trained without retrieval features
    #[arg(long, global = true, value_name = "FILE")]
    pub model_no_wiki: Option<PathBuf>,
    /// Sense matching policy; defaults by language
    #[arg(long, global = true)]
    pub policy: Option<MatchPolicy>,
    /// Seed for every stochastic step
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub k1: Option<f64>,
    #[arg(long, global = true)]
    pub b: Option<f64>,
    /// Articles retrieved per sample
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Retrieval score a single image must exceed for the heuristic override
    #[arg(long, global = true)]
    pub hi: Option<f64>,
    /// Retrieval score all other images must stay below
    #[arg(long, global = true)]
    pub lo: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Effective settings after merging.
#[derive(Debug, Clone)]
pub struct Settings {
    pub language: String,
    pub dataset: Option<PathBuf>,
    pub contexts: Option<PathBuf>,
    pub expanded_contexts: Option<PathBuf>,
    pub expansions: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub words: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub article_images: Option<PathBuf>,
    pub lexicon: Vec<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub model_no_wiki: Option<PathBuf>,
    pub policy: MatchPolicy,
    pub k1: f64,
    pub b: f64,
    pub top_k: usize,
    pub thresholds: Thresholds,
    pub train: TrainConfig,
    pub seed: Option<u64>,
}

fn rebase(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_relative() { base.join(p) } else { p })
}

impl Settings {
    pub fn resolve(flags: &Overrides) -> Result<Self, Failure> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::input("io", format!("{}: {e}", path.display())))?;
                let cfg: FileConfig = toml::from_str(&text).map_err(|e| {
                    Failure::input("config", format!("{}: {}", path.display(), e.message()))
                })?;
                let base = path.parent().unwrap_or(Path::new("."));
                FileConfig {
                    dataset: rebase(base, cfg.dataset),
                    contexts: rebase(base, cfg.contexts),
                    expanded_contexts: rebase(base, cfg.expanded_contexts),
                    expansions: rebase(base, cfg.expansions),
                    images: rebase(base, cfg.images),
                    words: rebase(base, cfg.words),
                    word_vectors: rebase(base, cfg.word_vectors),
                    article_images: rebase(base, cfg.article_images),
                    lexicon: cfg
                        .lexicon
                        .into_iter()
                        .filter_map(|p| rebase(base, Some(p)))
                        .collect(),
                    corpus: rebase(base, cfg.corpus),
                    index: rebase(base, cfg.index),
                    model: rebase(base, cfg.model),
                    model_no_wiki: rebase(base, cfg.model_no_wiki),
                    ..cfg
                }
            }
            None => FileConfig::default(),
        };

        let language = flags
            .language
            .clone()
            .or(file.language)
            .unwrap_or_else(|| "en".into());
        if !LANGUAGES.contains(&language.as_str()) {
            return Err(Failure::input(
                "config",
                format!(
                    "unknown language '{language}', expected one of {}",
                    LANGUAGES.join(", ")
                ),
            ));
        }
        let policy = flags
            .policy
            .or(file.policy)
            .unwrap_or_else(|| MatchPolicy::for_language(&language));
        let mut train = file.train.unwrap_or_default();
        let seed = flags.seed.or(file.seed);
        if let Some(seed) = seed {
            train.seed = seed;
        }
        let defaults = Thresholds::default();
        let lexicon = if flags.lexicon.is_empty() {
            file.lexicon
        } else {
            flags.lexicon.clone()
        };
        let pick = |flag: &Option<PathBuf>, file: Option<PathBuf>| flag.clone().or(file);
        Ok(Settings {
            dataset: pick(&flags.dataset, file.dataset),
            contexts: pick(&flags.contexts, file.contexts),
            expanded_contexts: pick(&flags.expanded_contexts, file.expanded_contexts),
            expansions: pick(&flags.expansions, file.expansions),
            images: pick(&flags.images, file.images),
            words: pick(&flags.words, file.words),
            word_vectors: pick(&flags.word_vectors, file.word_vectors),
            article_images: pick(&flags.article_images, file.article_images),
            lexicon,
            corpus: pick(&flags.corpus, file.corpus),
            index: pick(&flags.index, file.index),
            model: pick(&flags.model, file.model),
            model_no_wiki: pick(&flags.model_no_wiki, file.model_no_wiki),
            policy,
            k1: flags.k1.or(file.bm25.k1).unwrap_or(DEFAULT_K1),
            b: flags.b.or(file.bm25.b).unwrap_or(DEFAULT_B),
            top_k: flags.top_k.or(file.bm25.top_k).unwrap_or(DEFAULT_TOP_K),
            thresholds: Thresholds {
                hi: flags.hi.or(file.heuristic.hi).unwrap_or(defaults.hi),
                lo: flags.lo.or(file.heuristic.lo).unwrap_or(defaults.lo),
            },
            train,
            seed,
            language,
        })
    }
}

/// The path if configured and present on disk.
pub fn require(path: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    let path = path.clone().ok_or_else(|| {
        Failure::input(
            "missing_input",
            format!("--{name} is required (flag or config key)"),
        )
    })?;
    if !path.exists() {
        return Err(Failure::input(
            "missing_input",
            format!("--{name} path does not exist: {}", path.display()),
        ));
    }
    Ok(path)
}

/// The path if configured; an error if configured but absent.
pub fn optional(path: &Option<PathBuf>, name: &str) -> Result<Option<PathBuf>, Failure> {
    match path {
        Some(_) => require(path, name).map(Some),
        None => Ok(None),
    }
}
