//! Synthetic worlds with known structure, for tests, benchmarks and demos.
//!
//! Each sample lives in its own 12-dimensional block of the embedding
//! space: ten orthonormal candidate images plus two auxiliary axes. Contexts
//! mix candidate axes with fixed weights, so classifier accuracy, the reach
//! of retrieval, and the informativeness of word features are set exactly
//! by construction.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::features::{context_word, target_key};
use crate::gbrank::QueryGroup;
use crate::lexicon::{write_senses, Lexicon, MatchPolicy, Relation, RelationKind, Sense};
use crate::pipeline::{expand_dataset, write_expansions, Expansion, PipelineInputs};
use crate::store::{Dataset, EmbeddingStore, Sample, CANDIDATES};
use crate::wikindex::{Article, ArticleIndex, DEFAULT_B, DEFAULT_K1};

const BLOCK: usize = CANDIDATES + 2;
const AUX_WIKI: usize = CANDIDATES;
const AUX_WORD: usize = CANDIDATES + 1;

const EXPANSION_NUDGE: f64 = 0.01;
const STRONG_WIKI: f64 = 0.97;
const SOFT_WIKI: f64 = 0.85;

/// What decides a sample's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// The classifier ranks gold first.
    Correct,
    /// Classifier error; one retrieved image matches gold at 0.97.
    StrongWiki,
    /// Classifier error; retrieval points at gold at 0.85, below the heuristic threshold.
    SoftWiki,
    /// Classifier error with no retrieval evidence.
    Unaided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub samples: usize,
    pub seed: u64,
    /// Fraction of samples the classifier gets right.
    pub clip_correct: f64,
    /// Fraction of errors with strong retrieval evidence.
    pub strong_share: f64,
    /// Fraction of the remaining errors with soft retrieval evidence.
    pub soft_share: f64,
    /// Fraction of samples whose context word embedding points at gold.
    pub informative_words: f64,
    pub filler_articles: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            samples: 50,
            seed: 7,
            clip_correct: 0.6,
            strong_share: 0.5,
            soft_share: 0.5,
            informative_words: 0.5,
            filler_articles: 60,
        }
    }
}

/// A complete set of engine inputs.
#[derive(Debug, Clone)]
pub struct World {
    pub dataset: Dataset,
    pub categories: Vec<Category>,
    pub contexts: EmbeddingStore,
    pub expanded_contexts: EmbeddingStore,
    pub expansions: Vec<Expansion>,
    pub images: EmbeddingStore,
    pub words: EmbeddingStore,
    pub article_images: EmbeddingStore,
    pub corpus: Vec<Article>,
    pub lexicon: Lexicon,
    pub index: ArticleIndex,
}

/// File locations written by [`World::write_to`].
#[derive(Debug, Clone)]
pub struct WorldFiles {
    pub dataset: PathBuf,
    pub contexts: PathBuf,
    pub expanded_contexts: PathBuf,
    pub expansions: PathBuf,
    pub images: PathBuf,
    pub words: PathBuf,
    pub article_images: PathBuf,
    pub corpus: PathBuf,
    pub lexicon: PathBuf,
}

struct WordPool {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl WordPool {
    const ONSETS: [&'static str; 16] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr",
    ];
    const VOWELS: [&'static str; 5] = ["a", "e", "i", "o", "u"];

    fn fresh(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=4);
            let word: String = (0..syllables)
                .map(|_| {
                    let o = Self::ONSETS[self.rng.random_range(0..Self::ONSETS.len())];
                    let v = Self::VOWELS[self.rng.random_range(0..Self::VOWELS.len())];
                    format!("{o}{v}")
                })
                .collect();
            if self.used.insert(word.clone()) {
                return word;
            }
        }
    }
}

fn axis(dim: usize, base: usize, weights: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for &(k, w) in weights {
        v[base + k] += w;
    }
    v
}

impl World {
    pub fn generate(config: &WorldConfig) -> Result<Self> {
        let n = config.samples;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut pool = WordPool {
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed),
            used: HashSet::new(),
        };

        let n_correct = (config.clip_correct * n as f64).round() as usize;
        let errors = n - n_correct.min(n);
        let n_strong = (config.strong_share * errors as f64).round() as usize;
        let n_soft = (config.soft_share * (errors - n_strong) as f64).round() as usize;
        let mut categories: Vec<Category> = (0..n)
            .map(|i| match i {
                i if i < n_correct => Category::Correct,
                i if i < n_correct + n_strong => Category::StrongWiki,
                i if i < n_correct + n_strong + n_soft => Category::SoftWiki,
                _ => Category::Unaided,
            })
            .collect();
        categories.shuffle(&mut rng);

        let dim = BLOCK * n;
        let mut samples = Vec::with_capacity(n);
        let mut contexts = EmbeddingStore::new(dim);
        let mut expanded_contexts = EmbeddingStore::new(dim);
        let mut images = EmbeddingStore::new(dim);
        let mut words = EmbeddingStore::new(dim);
        let mut article_images = EmbeddingStore::new(dim);
        let mut corpus = Vec::new();
        let mut senses = Vec::new();

        for (s, &category) in categories.iter().enumerate() {
            let base = BLOCK * s;
            let target = pool.fresh();
            let cue = pool.fresh();
            let alias = pool.fresh();
            let kind = pool.fresh();
            let other_gloss = pool.fresh();
            let sample_id = format!("s{s:04}");

            let mut order: Vec<usize> = (0..CANDIDATES).collect();
            order.shuffle(&mut rng);
            let gold = order[0];
            let rival = order[1];
            let image_ids: Vec<String> =
                (0..CANDIDATES).map(|k| format!("s{s:04}-img{k}")).collect();
            for (k, id) in image_ids.iter().enumerate() {
                images.insert(id.clone(), &axis(dim, base, &[(k, 1.0)]))?;
            }

            let top = rng.random_range(0.5..0.6);
            let second = top - rng.random_range(2.0 * EXPANSION_NUDGE..0.15);
            let (g_w, r_w) = if category == Category::Correct {
                (top, second)
            } else {
                (second, top)
            };
            let mut weights = vec![(gold, g_w), (rival, r_w)];
            for &k in &order[2..] {
                weights.push((k, rng.random_range(0.05..0.3)));
            }
            contexts.insert(sample_id.clone(), &axis(dim, base, &weights))?;
            weights.push((gold, EXPANSION_NUDGE));
            expanded_contexts.insert(sample_id.clone(), &axis(dim, base, &weights))?;

            let evidence = match category {
                Category::Correct if rng.random_bool(0.5) => Some(STRONG_WIKI),
                Category::StrongWiki => Some(STRONG_WIKI),
                Category::SoftWiki => Some(SOFT_WIKI),
                _ => None,
            };
            if let Some(q) = evidence {
                let image = format!("a{s:04}-img");
                let rest = (1.0 - q * q).sqrt();
                article_images.insert(
                    image.clone(),
                    &axis(dim, base, &[(gold, q), (AUX_WIKI, rest)]),
                )?;
                let filler: Vec<String> =
                    (0..rng.random_range(3..8)).map(|_| pool.fresh()).collect();
                corpus.push(Article {
                    article_id: format!("a{s:04}"),
                    title: target.clone(),
                    text: format!("The {target} is a {cue} {}.", filler.join(" ")),
                    image_ids: vec![image],
                });
            }

            let sample = Sample {
                sample_id: sample_id.clone(),
                target_word: target.clone(),
                context: format!("{target} {cue}"),
                image_ids,
                gold_image_id: None,
            };
            let word_vec = if rng.random_bool(config.informative_words) {
                axis(dim, base, &[(gold, 0.6), (AUX_WORD, 0.8)])
            } else {
                axis(dim, base, &[(AUX_WORD, 1.0)])
            };
            words.insert(context_word(&sample), &word_vec)?;
            words.insert(target_key(&sample), &axis(dim, base, &[(AUX_WIKI, 1.0)]))?;
            samples.push(Sample {
                gold_image_id: Some(sample.image_ids[gold].clone()),
                ..sample
            });

            let right = Sense {
                sense_id: format!("{target}.n.01"),
                lemmas: vec![target.clone(), alias],
                definitions: vec![format!("a kind of {cue}")],
                examples: vec![],
                relations: vec![Relation {
                    kind: RelationKind::Hypernym,
                    target: format!("{kind}.n.01"),
                }],
            };
            let wrong = Sense {
                sense_id: format!("{target}.n.02"),
                lemmas: vec![target.clone()],
                definitions: vec![format!("a distant {other_gloss}")],
                examples: vec![],
                relations: vec![],
            };
            let hyper = Sense {
                sense_id: format!("{kind}.n.01"),
                lemmas: vec![kind],
                definitions: vec![],
                examples: vec![],
                relations: vec![],
            };
            if rng.random_bool(0.5) {
                senses.extend([right, wrong, hyper]);
            } else {
                senses.extend([wrong, right, hyper]);
            }
        }

        let filler_vocab: Vec<String> = (0..200).map(|_| pool.fresh()).collect();
        for f in 0..config.filler_articles {
            let len = rng.random_range(5..40);
            let text: Vec<&str> = (0..len)
                .map(|_| filler_vocab[rng.random_range(0..filler_vocab.len())].as_str())
                .collect();
            corpus.push(Article {
                article_id: format!("f{f:04}"),
                title: filler_vocab[f % filler_vocab.len()].clone(),
                text: text.join(" "),
                image_ids: vec![],
            });
        }
        corpus.shuffle(&mut rng);

        let dataset = Dataset::new(samples)?;
        let lexicon = Lexicon::from_senses(senses)?;
        let expansions = expand_dataset(&dataset, &lexicon, MatchPolicy::ExactOnly, None);
        let index = ArticleIndex::build(corpus.clone(), DEFAULT_K1, DEFAULT_B)?;
        let world = World {
            dataset,
            categories,
            contexts,
            expanded_contexts,
            expansions,
            images,
            words,
            article_images,
            corpus,
            lexicon,
            index,
        };
        world.verify()?;
        Ok(world)
    }

    /// Checks that raw and expanded classifier correctness follow the
    /// assigned categories.
    fn verify(&self) -> Result<()> {
        for (sample, &category) in self.dataset.samples().iter().zip(&self.categories) {
            let gold = sample.gold_index().expect("generated with gold");
            for store in [&self.contexts, &self.expanded_contexts] {
                let c = store.get(&sample.sample_id).expect("generated");
                let sims: Vec<f64> = sample
                    .image_ids
                    .iter()
                    .map(|id| crate::store::dot(c, self.images.get(id).expect("generated")))
                    .collect();
                let top = crate::rank::rank_descending(&sims)[0];
                if (top == gold) != (category == Category::Correct) {
                    return Err(Error::InvalidSample {
                        id: sample.sample_id.clone(),
                        reason: format!("generated sample does not match category {category:?}"),
                    });
                }
            }
        }
        if self.expansions.iter().any(|e| e.sense.is_none()) {
            return Err(Error::Config(
                "generated lexicon failed to expand every sample".into(),
            ));
        }
        Ok(())
    }

    /// Pipeline inputs with every optional store filled in and no models.
    pub fn inputs(&self) -> PipelineInputs<'_> {
        PipelineInputs {
            expanded_contexts: Some(&self.expanded_contexts),
            expansions: Some(&self.expansions),
            words: Some(&self.words),
            article_images: Some(&self.article_images),
            index: Some(&self.index),
            ..PipelineInputs::new(&self.dataset, &self.contexts, &self.images)
        }
    }

    pub fn count(&self, category: Category) -> usize {
        self.categories.iter().filter(|&&c| c == category).count()
    }

    /// Writes every input as files under `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<WorldFiles> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = WorldFiles {
            dataset: dir.join("dataset.jsonl"),
            contexts: dir.join("contexts.vec"),
            expanded_contexts: dir.join("contexts_expanded.vec"),
            expansions: dir.join("expansions.jsonl"),
            images: dir.join("images.vec"),
            words: dir.join("words.vec"),
            article_images: dir.join("article_images.vec"),
            corpus: dir.join("corpus.jsonl"),
            lexicon: dir.join("lexicon.jsonl"),
        };
        self.dataset.save(&files.dataset)?;
        self.contexts.save(&files.contexts)?;
        self.expanded_contexts.save(&files.expanded_contexts)?;
        write_expansions(&files.expansions, &self.expansions)?;
        self.images.save(&files.images)?;
        self.words.save(&files.words)?;
        self.article_images.save(&files.article_images)?;
        crate::io::write_jsonl(&files.corpus, &self.corpus)?;
        write_senses(&files.lexicon, self.lexicon.senses())?;
        Ok(files)
    }
}

/// Weights of the relevance utility over features A–O.
pub const LINEAR_WEIGHTS: [f64; 15] = [
    1.0, 0.0, 0.0, 0.5, 0.3, -0.5, 0.8, 0.0, 0.0, 0.4, 0.2, 0.1, 0.2, -0.2, 0.1,
];

/// Ranking groups of ten candidates whose fifteen features are laid out
/// like real A–O vectors: A–E and G–K summarize per-candidate base scores
/// within the group. The relevant candidate is the argmax of
/// [`LINEAR_WEIGHTS`] · x plus Gaussian noise of scale `noise`.
pub fn linear_groups(groups: usize, noise: f64, seed: u64) -> Vec<QueryGroup> {
    linear_groups_with(&LINEAR_WEIGHTS, groups, noise, seed)
}

/// [`linear_groups`] with caller-chosen utility weights.
pub fn linear_groups_with(
    weights: &[f64; 15],
    groups: usize,
    noise: f64,
    seed: u64,
) -> Vec<QueryGroup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    (0..groups)
        .map(|_| {
            let clip: Vec<f64> = (0..CANDIDATES).map(|_| normal(&mut rng)).collect();
            let wiki: Vec<f64> = (0..CANDIDATES).map(|_| normal(&mut rng)).collect();
            let context_log = (rng.random_range(1..50) as f64).log10();
            let features: Vec<Vec<f64>> = (0..CANDIDATES)
                .map(|i| {
                    let mut x = Vec::with_capacity(15);
                    x.extend(crate::features::score_block(&clip, i));
                    x.push(rng.random_range(0.0..0.3));
                    x.extend(crate::features::score_block(&wiki, i));
                    x.push(normal(&mut rng));
                    x.push(normal(&mut rng));
                    x.push((rng.random_range(1..6) as f64).log10());
                    x.push(context_log);
                    x
                })
                .collect();
            let utility: Vec<f64> = features
                .iter()
                .map(|x| crate::store::dot(x, weights) + noise * normal(&mut rng))
                .collect();
            let best = crate::rank::rank_descending(&utility)[0];
            let labels = (0..CANDIDATES).map(|i| u8::from(i == best)).collect();
            QueryGroup { features, labels }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_counts() {
        let w = World::generate(&WorldConfig::default()).unwrap();
        assert_eq!(w.count(Category::Correct), 30);
        assert_eq!(w.count(Category::StrongWiki), 10);
        assert_eq!(w.count(Category::SoftWiki), 5);
        assert_eq!(w.count(Category::Unaided), 5);
    }

    #[test]
    fn same_seed_same_world() {
        let a = World::generate(&WorldConfig::default()).unwrap();
        let b = World::generate(&WorldConfig::default()).unwrap();
        assert_eq!(a.dataset.samples(), b.dataset.samples());
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.expansions, b.expansions);
    }

    #[test]
    fn linear_groups_have_one_relevant_item() {
        for g in linear_groups(20, 0.1, 3) {
            assert_eq!(g.labels.iter().map(|&l| l as usize).sum::<usize>(), 1);
            assert_eq!(g.features.len(), CANDIDATES);
        }
    }
}
