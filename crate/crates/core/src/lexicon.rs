//! Lexical databases: sense lookup, sense selection against a context word,
//! and context expansion with the alternative names of the chosen sense.
//!
//! Lexicon files are JSONL, one sense per line:
//!
//! ```json
//! {"id":"pieris.n.01","lemmas":["Japanese andromeda"],"defs":["..."],"examples":[],"rels":[["hypernym","shrub.n.01"]]}
//! ```
//!
//! Several files may be loaded together; senses keep file order, then line
//! order.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{dot, EmbeddingStore};
use crate::text::{normalize_phrase, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationKind {
    Hypernym,
    InstanceHypernym,
    MemberMeronym,
    SubstanceMeronym,
    Other,
}

impl RelationKind {
    pub fn parse(s: &str) -> Self {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "hypernym" => RelationKind::Hypernym,
            "instance_hypernym" => RelationKind::InstanceHypernym,
            "member_meronym" => RelationKind::MemberMeronym,
            "substance_meronym" => RelationKind::SubstanceMeronym,
            _ => RelationKind::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Hypernym => "hypernym",
            RelationKind::InstanceHypernym => "instance_hypernym",
            RelationKind::MemberMeronym => "member_meronym",
            RelationKind::SubstanceMeronym => "substance_meronym",
            RelationKind::Other => "other",
        }
    }

    /// Relations whose lemmas are appended during expansion.
    pub fn expands(self) -> bool {
        !matches!(self, RelationKind::Other)
    }

    /// Relations whose sense text joins the matching description.
    pub fn describes(self) -> bool {
        matches!(
            self,
            RelationKind::Hypernym | RelationKind::InstanceHypernym
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub kind: RelationKind,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sense {
    pub sense_id: String,
    pub lemmas: Vec<String>,
    pub definitions: Vec<String>,
    pub examples: Vec<String>,
    pub relations: Vec<Relation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SenseRecord {
    id: String,
    lemmas: Vec<String>,
    #[serde(default)]
    defs: Vec<String>,
    #[serde(default)]
    examples: Vec<String>,
    #[serde(default)]
    rels: Vec<(String, String)>,
}

/// Writes senses in the JSONL lexicon layout.
pub fn write_senses(path: impl AsRef<Path>, senses: &[Sense]) -> Result<()> {
    let records: Vec<SenseRecord> = senses
        .iter()
        .map(|s| SenseRecord {
            id: s.sense_id.clone(),
            lemmas: s.lemmas.clone(),
            defs: s.definitions.clone(),
            examples: s.examples.clone(),
            rels: s
                .relations
                .iter()
                .map(|r| (r.kind.as_str().to_string(), r.target.clone()))
                .collect(),
        })
        .collect();
    crate::io::write_jsonl(path.as_ref(), &records)
}

/// Sense inventory indexed by normalized lemma.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    senses: Vec<Sense>,
    by_id: HashMap<String, usize>,
    by_lemma: HashMap<String, Vec<usize>>,
    dangling_dropped: usize,
}

impl Lexicon {
    /// Builds a lexicon, dropping relations whose target is not defined.
    pub fn from_senses(senses: Vec<Sense>) -> Result<Self> {
        let mut by_id = HashMap::new();
        for (i, s) in senses.iter().enumerate() {
            if s.lemmas.is_empty() {
                return Err(Error::Config(format!(
                    "sense '{}' has no lemmas",
                    s.sense_id
                )));
            }
            if by_id.insert(s.sense_id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    id: s.sense_id.clone(),
                });
            }
        }
        let mut dangling_dropped = 0;
        let mut senses = senses;
        for s in &mut senses {
            let before = s.relations.len();
            s.relations.retain(|r| by_id.contains_key(&r.target));
            dangling_dropped += before - s.relations.len();
        }
        let mut by_lemma: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, s) in senses.iter().enumerate() {
            let mut keys: Vec<String> = s.lemmas.iter().map(|l| normalize_phrase(l)).collect();
            keys.dedup();
            for key in keys {
                let slot = by_lemma.entry(key).or_default();
                if slot.last() != Some(&i) {
                    slot.push(i);
                }
            }
        }
        Ok(Lexicon {
            senses,
            by_id,
            by_lemma,
            dangling_dropped,
        })
    }

    /// Loads and concatenates JSONL lexicon files in the given order.
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut senses = Vec::new();
        for path in paths {
            let records: Vec<SenseRecord> = crate::io::read_jsonl(path.as_ref())?;
            senses.extend(records.into_iter().map(|r| {
                Sense {
                    sense_id: r.id,
                    lemmas: r.lemmas,
                    definitions: r.defs,
                    examples: r.examples,
                    relations: r
                        .rels
                        .into_iter()
                        .map(|(kind, target)| Relation {
                            kind: RelationKind::parse(&kind),
                            target,
                        })
                        .collect(),
                }
            }));
        }
        Self::from_senses(senses)
    }

    pub fn senses(&self) -> &[Sense] {
        &self.senses
    }

    pub fn len(&self) -> usize {
        self.senses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }

    /// Relations removed at load because their target was unknown.
    pub fn dangling_dropped(&self) -> usize {
        self.dangling_dropped
    }

    pub fn sense(&self, id: &str) -> Option<&Sense> {
        self.by_id.get(id).map(|&i| &self.senses[i])
    }

    /// Every sense listing `word` among its lemmas, in database order.
    pub fn lookup_senses(&self, word: &str) -> Vec<&Sense> {
        self.by_lemma
            .get(&normalize_phrase(word))
            .map(|ix| ix.iter().map(|&i| &self.senses[i]).collect())
            .unwrap_or_default()
    }

    fn related<'a>(
        &'a self,
        sense: &'a Sense,
        keep: impl Fn(RelationKind) -> bool + 'a,
    ) -> impl Iterator<Item = &'a Sense> + 'a {
        sense
            .relations
            .iter()
            .filter(move |r| keep(r.kind))
            .filter_map(|r| self.sense(&r.target))
    }

    /// Tokens of the sense description: own lemmas, definitions and
    /// examples, then lemmas and definitions of direct hypernyms and
    /// instance hypernyms.
    pub fn describe(&self, sense: &Sense) -> SenseDescription {
        let mut tokens = Vec::new();
        let texts = sense
            .lemmas
            .iter()
            .chain(&sense.definitions)
            .chain(&sense.examples);
        for text in texts {
            tokens.extend(tokenize(text));
        }
        for parent in self.related(sense, RelationKind::describes) {
            for text in parent.lemmas.iter().chain(&parent.definitions) {
                tokens.extend(tokenize(text));
            }
        }
        SenseDescription { tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenseDescription {
    pub tokens: Vec<String>,
}

impl SenseDescription {
    pub fn from_text(text: &str) -> Self {
        SenseDescription {
            tokens: tokenize(text),
        }
    }
}

/// Fraction of description tokens equal to a context token.
///
/// A multiword `context_word` contributes the occurrences of each of its
/// distinct tokens.
pub fn exact_match_score(description: &SenseDescription, context_word: &str) -> f64 {
    if description.tokens.is_empty() {
        return 0.0;
    }
    let wanted: HashSet<String> = tokenize(context_word).into_iter().collect();
    let hits = description
        .tokens
        .iter()
        .filter(|t| wanted.contains(*t))
        .count();
    hits as f64 / description.tokens.len() as f64
}

/// Highest cosine between a context token and a description token, over
/// tokens that have word vectors. Zero when nothing can be compared.
pub fn similarity_match_score(
    description: &SenseDescription,
    context_word: &str,
    vectors: &EmbeddingStore,
) -> f64 {
    let context: Vec<&[f64]> = tokenize(context_word)
        .iter()
        .filter_map(|t| vectors.get(t))
        .collect();
    let mut best: Option<f64> = None;
    for token in &description.tokens {
        let Some(v) = vectors.get(token) else {
            continue;
        };
        for c in &context {
            let sim = dot(c, v).clamp(-1.0, 1.0);
            best = Some(best.map_or(sim, |b: f64| b.max(sim)));
        }
    }
    best.unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPolicy {
    ExactOnly,
    ExactThenSimilarity,
}

impl MatchPolicy {
    /// English uses exact matching only; other languages fall back to word
    /// vector similarity.
    pub fn for_language(tag: &str) -> Self {
        if tag.eq_ignore_ascii_case("en") {
            MatchPolicy::ExactOnly
        } else {
            MatchPolicy::ExactThenSimilarity
        }
    }
}

impl FromStr for MatchPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_only" | "exact" => Ok(MatchPolicy::ExactOnly),
            "exact_then_similarity" | "similarity" => Ok(MatchPolicy::ExactThenSimilarity),
            other => Err(Error::Config(format!("unknown match policy '{other}'"))),
        }
    }
}

impl fmt::Display for MatchPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchPolicy::ExactOnly => "exact_only",
            MatchPolicy::ExactThenSimilarity => "exact_then_similarity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMethod {
    Exact,
    Similarity,
}

#[derive(Debug, Clone, Copy)]
pub struct SenseChoice<'a> {
    pub sense: &'a Sense,
    pub score: f64,
    pub method: MatchMethod,
}

fn argmax_positive(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 && best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Picks the sense of `target_word` whose description best matches
/// `context_word`. Returns `None` when no sense scores above zero.
pub fn select_sense<'a>(
    lexicon: &'a Lexicon,
    target_word: &str,
    context_word: &str,
    policy: MatchPolicy,
    vectors: Option<&EmbeddingStore>,
) -> Option<SenseChoice<'a>> {
    let senses = lexicon.lookup_senses(target_word);
    if senses.is_empty() {
        return None;
    }
    let descriptions: Vec<SenseDescription> = senses.iter().map(|s| lexicon.describe(s)).collect();
    let exact: Vec<f64> = descriptions
        .iter()
        .map(|d| exact_match_score(d, context_word))
        .collect();
    if let Some(i) = argmax_positive(&exact) {
        return Some(SenseChoice {
            sense: senses[i],
            score: exact[i],
            method: MatchMethod::Exact,
        });
    }
    let vectors = match (policy, vectors) {
        (MatchPolicy::ExactThenSimilarity, Some(v)) => v,
        _ => return None,
    };
    let similar: Vec<f64> = descriptions
        .iter()
        .map(|d| similarity_match_score(d, context_word, vectors))
        .collect();
    argmax_positive(&similar).map(|i| SenseChoice {
        sense: senses[i],
        score: similar[i],
        method: MatchMethod::Similarity,
    })
}

/// Lemma rendered for expansion: lowercase tokens joined by spaces.
fn display_name(lemma: &str) -> String {
    normalize_phrase(lemma)
}

/// Appends the names of `sense` and of its hypernyms, instance hypernyms,
/// member meronyms and substance meronyms to `context`.
///
/// Names equal to the whole context, to any comma-separated segment of it,
/// or to a name already appended are skipped, which makes expansion
/// idempotent.
pub fn expand_context(context: &str, sense: &Sense, lexicon: &Lexicon) -> String {
    let mut seen: HashSet<String> = context.split(',').map(normalize_phrase).collect();
    seen.insert(normalize_phrase(context));
    let mut out = context.to_string();
    let names = sense.lemmas.iter().chain(
        lexicon
            .related(sense, RelationKind::expands)
            .flat_map(|s| s.lemmas.iter()),
    );
    for lemma in names {
        let name = display_name(lemma);
        if name.is_empty() || !seen.insert(name.clone()) {
            continue;
        }
        out.push_str(", ");
        out.push_str(&name);
    }
    out
}
