use std::io::Write as _;
use std::path::{Path, PathBuf};

use vwsd::eval::{self, run_ablation, AblationConfig};
use vwsd::features::FeatureMatrix;
use vwsd::gbrank::{fit, RankModel};
use vwsd::lexicon::Lexicon;
use vwsd::pipeline::{self, Expansion, PipelineInputs};
use vwsd::scorer::{read_scores, write_scores};
use vwsd::store::{Dataset, EmbeddingStore};
use vwsd::synthetic::{World, WorldConfig};
use vwsd::wikindex::{read_corpus, read_retrieval, write_retrieval, ArticleIndex};
use vwsd::FEATURE_COUNT;

use crate::config::{optional, require, Settings};
use crate::Failure;

type Outcome = Result<(), Failure>;

fn preset(name: &str) -> Result<AblationConfig, Failure> {
    AblationConfig::by_name(name).ok_or_else(|| {
        let names: Vec<String> = AblationConfig::presets()
            .into_iter()
            .map(|c| c.name)
            .collect();
        Failure::input(
            "config",
            format!(
                "unknown preset '{name}', expected one of {}",
                names.join(", ")
            ),
        )
    })
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::input("io", format!("{}: {e}", path.display())))
}

/// Everything the configuration points at, loaded once.
struct Loaded {
    dataset: Dataset,
    contexts: EmbeddingStore,
    expanded_contexts: Option<EmbeddingStore>,
    expansions: Option<Vec<Expansion>>,
    images: EmbeddingStore,
    words: Option<EmbeddingStore>,
    article_images: Option<EmbeddingStore>,
    index: Option<ArticleIndex>,
    model: Option<RankModel>,
    model_no_wiki: Option<RankModel>,
}

fn load_store(path: &Option<PathBuf>, name: &str) -> Result<Option<EmbeddingStore>, Failure> {
    Ok(optional(path, name)?
        .map(EmbeddingStore::open)
        .transpose()?)
}

fn load_model(path: &Option<PathBuf>, name: &str) -> Result<Option<RankModel>, Failure> {
    Ok(optional(path, name)?.map(RankModel::load).transpose()?)
}

fn expansions_for(
    settings: &Settings,
    dataset: &Dataset,
) -> Result<Option<Vec<Expansion>>, Failure> {
    if let Some(path) = optional(&settings.expansions, "expansions")? {
        return Ok(Some(pipeline::read_expansions(path)?));
    }
    if settings.lexicon.is_empty() {
        return Ok(None);
    }
    let lexicon = load_lexicon(settings)?;
    let vectors = load_store(&settings.word_vectors, "word-vectors")?;
    Ok(Some(pipeline::expand_dataset(
        dataset,
        &lexicon,
        settings.policy,
        vectors.as_ref(),
    )))
}

fn load_lexicon(settings: &Settings) -> Result<Lexicon, Failure> {
    for path in &settings.lexicon {
        require(&Some(path.clone()), "lexicon")?;
    }
    Ok(Lexicon::load(&settings.lexicon)?)
}

fn load_index(settings: &Settings) -> Result<Option<ArticleIndex>, Failure> {
    if let Some(path) = optional(&settings.index, "index")? {
        return Ok(Some(ArticleIndex::load(path)?));
    }
    match optional(&settings.corpus, "corpus")? {
        Some(corpus) => Ok(Some(ArticleIndex::build(
            read_corpus(corpus)?,
            settings.k1,
            settings.b,
        )?)),
        None => Ok(None),
    }
}

fn load(settings: &Settings, configs: &[AblationConfig]) -> Result<Loaded, Failure> {
    let dataset = Dataset::load(require(&settings.dataset, "dataset")?)?;
    let images = EmbeddingStore::open(require(&settings.images, "images")?)?;
    let raw_needed = configs.iter().any(|c| !c.expansion);
    let contexts = if raw_needed {
        EmbeddingStore::open(require(&settings.contexts, "contexts")?)?
    } else {
        load_store(&settings.contexts, "contexts")?
            .unwrap_or_else(|| EmbeddingStore::new(images.dim()))
    };
    let wiki_needed = configs.iter().any(|c| c.wikipedia);
    Ok(Loaded {
        expanded_contexts: load_store(&settings.expanded_contexts, "expanded-contexts")?,
        expansions: if configs.iter().any(|c| c.expansion) && wiki_needed {
            expansions_for(settings, &dataset)?
        } else {
            None
        },
        words: load_store(&settings.words, "words")?,
        article_images: if wiki_needed {
            load_store(&settings.article_images, "article-images")?
        } else {
            None
        },
        index: if wiki_needed {
            load_index(settings)?
        } else {
            None
        },
        model: if configs.iter().any(|c| c.ltr) {
            load_model(&settings.model, "model")?
        } else {
            None
        },
        model_no_wiki: if configs.iter().any(|c| c.ltr && !c.wikipedia) {
            load_model(&settings.model_no_wiki, "model-no-wiki")?
        } else {
            None
        },
        dataset,
        contexts,
        images,
    })
}

impl Loaded {
    fn inputs(&self, settings: &Settings) -> PipelineInputs<'_> {
        PipelineInputs {
            dataset: &self.dataset,
            contexts: &self.contexts,
            expanded_contexts: self.expanded_contexts.as_ref(),
            expansions: self.expansions.as_deref(),
            images: &self.images,
            words: self.words.as_ref(),
            article_images: self.article_images.as_ref(),
            index: self.index.as_ref(),
            model: self.model.as_ref(),
            model_no_wiki: self.model_no_wiki.as_ref(),
            top_k: settings.top_k,
            thresholds: settings.thresholds,
        }
    }
}

pub fn build_index(settings: &Settings, out: Option<PathBuf>) -> Outcome {
    let corpus = read_corpus(require(&settings.corpus, "corpus")?)?;
    let out = out
        .or_else(|| settings.index.clone())
        .ok_or_else(|| Failure::input("missing_input", "--out or --index is required"))?;
    let index = ArticleIndex::build(corpus, settings.k1, settings.b)?;
    index.save(&out)?;
    println!(
        "indexed {} articles, {} terms -> {}",
        index.doc_count(),
        index.vocabulary_size(),
        out.display()
    );
    Ok(())
}

pub fn expand(settings: &Settings, out: Option<PathBuf>, text: bool) -> Outcome {
    let dataset = Dataset::load(require(&settings.dataset, "dataset")?)?;
    if settings.lexicon.is_empty() {
        return Err(Failure::input(
            "missing_input",
            "--lexicon is required (flag or config key)",
        ));
    }
    let lexicon = load_lexicon(settings)?;
    let vectors = load_store(&settings.word_vectors, "word-vectors")?;
    let rows = pipeline::expand_dataset(&dataset, &lexicon, settings.policy, vectors.as_ref());
    match (out, text) {
        (Some(path), false) => pipeline::write_expansions(path, &rows)?,
        (Some(path), true) => {
            let body: String = rows.iter().map(|r| format!("{}\n", r.context)).collect();
            write_text(&path, &body)?;
        }
        (None, text) => {
            let mut stdout = std::io::stdout().lock();
            for r in &rows {
                let line = if text {
                    r.context.clone()
                } else {
                    serde_json::to_string(r)
                        .map_err(|e| Failure::internal("serialize", e.to_string()))?
                };
                writeln!(stdout, "{line}").map_err(|e| Failure::input("io", e.to_string()))?;
            }
        }
    }
    Ok(())
}

pub fn score(settings: &Settings, name: &str, out: &Path) -> Outcome {
    let cfg = AblationConfig {
        ltr: false,
        wikipedia: false,
        ..preset(name)?
    };
    let loaded = load(settings, std::slice::from_ref(&cfg))?;
    let scores = pipeline::compute_scores(&loaded.inputs(settings), &cfg)?;
    write_scores(out, &scores)?;
    Ok(())
}

pub fn retrieve(settings: &Settings, name: &str, out: &Path) -> Outcome {
    let cfg = AblationConfig {
        ltr: false,
        wikipedia: true,
        ..preset(name)?
    };
    let loaded = load(settings, std::slice::from_ref(&cfg))?;
    let rows = pipeline::compute_retrieval(&loaded.inputs(settings), &cfg)?;
    write_retrieval(out, &rows)?;
    Ok(())
}

pub fn extract_features(
    settings: &Settings,
    scores: &Path,
    retrieval: Option<&Path>,
    out: &Path,
) -> Outcome {
    let dataset = Dataset::load(require(&settings.dataset, "dataset")?)?;
    let images = EmbeddingStore::open(require(&settings.images, "images")?)?;
    let words = EmbeddingStore::open(require(&settings.words, "words")?)?;
    let contexts = EmbeddingStore::new(images.dim());
    let inputs = PipelineInputs {
        words: Some(&words),
        ..PipelineInputs::new(&dataset, &contexts, &images)
    };
    let scores = read_scores(scores)?;
    let retrieval = retrieval.map(read_retrieval).transpose()?;
    let matrix = pipeline::compute_features(&inputs, &scores, retrieval.as_deref())?;
    matrix.write_tsv(out)?;
    Ok(())
}

pub fn train(
    settings: &Settings,
    features: &Path,
    out: &Path,
    drop_wiki: bool,
    trees: Option<usize>,
) -> Outcome {
    let matrix = FeatureMatrix::read_tsv(features)?;
    let groups = matrix.to_query_groups(drop_wiki);
    let mut config = settings.train.clone();
    if let Some(n) = trees {
        config.n_trees = n;
    }
    let width = if drop_wiki {
        FEATURE_COUNT - 5
    } else {
        FEATURE_COUNT
    };
    let model = if config.n_trees == 0 {
        RankModel::empty(width)
    } else {
        fit(&groups, width, &config)?
    };
    model.save(out)?;
    println!(
        "trained {} trees on {} groups -> {}",
        model.trees.len(),
        groups.len(),
        out.display()
    );
    Ok(())
}

pub fn rank(
    settings: &Settings,
    name: &str,
    out: &Path,
    scores: Option<&Path>,
    retrieval: Option<&Path>,
) -> Outcome {
    let cfg = preset(name)?;
    let loaded = load(settings, std::slice::from_ref(&cfg))?;
    let inputs = loaded.inputs(settings);
    let scores = match scores {
        Some(path) => read_scores(path)?,
        None => pipeline::compute_scores(&inputs, &cfg)?,
    };
    let retrieval = match (cfg.wikipedia, retrieval) {
        (false, _) => None,
        (true, Some(path)) => Some(read_retrieval(path)?),
        (true, None) => Some(pipeline::compute_retrieval(&inputs, &cfg)?),
    };
    let run = pipeline::finish(&inputs, &cfg, scores, retrieval)?;
    eval::write_rankings(out, &run.rankings)?;
    Ok(())
}

pub fn evaluate(settings: &Settings, rankings: &Path) -> Outcome {
    let dataset = Dataset::load(require(&settings.dataset, "dataset")?)?;
    let rows = eval::read_rankings(rankings)?;
    let m = eval::evaluate(&rows, &dataset)?;
    let config = rows.first().map(|r| r.config.as_str()).unwrap_or("-");
    println!("config\tlanguage\tn_samples\taccuracy\tmrr");
    println!(
        "{config}\t{}\t{}\t{:.6}\t{:.6}",
        settings.language, m.n_samples, m.accuracy, m.mrr
    );
    Ok(())
}

pub fn ablate(settings: &Settings, names: &[String], out: Option<&Path>) -> Outcome {
    let configs = if names.is_empty() {
        AblationConfig::presets()
    } else {
        names.iter().map(|n| preset(n)).collect::<Result<_, _>>()?
    };
    let loaded = load(settings, &configs)?;
    let report = run_ablation(&loaded.inputs(settings), &settings.language, &configs);
    print!("{}", report.to_text());
    if let Some(path) = out {
        write_text(path, &report.to_tsv())?;
    }
    let failed: Vec<&str> = report
        .rows
        .iter()
        .filter(|r| r.outcome.is_err())
        .map(|r| r.config.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::input(
            "ablation",
            format!("configurations failed: {}", failed.join(", ")),
        ))
    }
}

const FIXTURE_CONFIG: &str = r#"language = "en"
dataset = "dataset.jsonl"
contexts = "contexts.vec"
expanded_contexts = "contexts_expanded.vec"
images = "images.vec"
words = "words.vec"
article_images = "article_images.vec"
lexicon = ["lexicon.jsonl"]
corpus = "corpus.jsonl"
index = "index.bin"
model = "model.json"
"#;

pub fn gen_fixture(settings: &Settings, dir: &Path, samples: usize) -> Outcome {
    let defaults = WorldConfig::default();
    let world = World::generate(&WorldConfig {
        samples,
        seed: settings.seed.unwrap_or(defaults.seed),
        ..defaults
    })?;
    let files = world.write_to(dir)?;
    write_text(&dir.join("run.toml"), FIXTURE_CONFIG)?;
    println!(
        "wrote {} samples and {} articles to {}",
        world.dataset.len(),
        world.corpus.len(),
        files.dataset.parent().unwrap_or(dir).display()
    );
    Ok(())
}
