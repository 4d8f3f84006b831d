//! Per-candidate feature vectors for the ranking model.
//!
//! | code | feature |
//! |------|---------|
//! | A | penalty-adjusted image score |
//! | B | max score of the other nine candidates |
//! | C | mean score of the other nine candidates |
//! | D | A − B |
//! | E | A − C |
//! | F | image penalty `p(x)` |
//! | G–K | same as A–E over retrieval scores |
//! | L | similarity of the image to the target word |
//! | M | similarity of the image to the context word |
//! | N | `log10(card(image))` |
//! | O | `log10(card(context word))` |

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gbrank::QueryGroup;
use crate::scorer::SampleScores;
use crate::store::{dot, Dataset, EmbeddingStore, Sample, CANDIDATES};
use crate::text::{normalize_phrase, tokenize};
use crate::wikindex::RetrievalScores;

pub const FEATURE_COUNT: usize = 15;
pub const FEATURE_CODES: [&str; FEATURE_COUNT] = [
    "A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "M", "N", "O",
];
/// Columns G–K, the retrieval-derived block.
pub const WIKI_FEATURES: std::ops::Range<usize> = 6..11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn get(&self, code: char) -> f64 {
        self.0[(code as u8 - b'A') as usize]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Target word with its first occurrence removed from the context; the
/// target itself when nothing else remains.
pub fn context_word(sample: &Sample) -> String {
    let tokens = tokenize(&sample.context);
    let target = tokenize(&sample.target_word);
    let mut rest = tokens.clone();
    if !target.is_empty() {
        if let Some(pos) = tokens
            .windows(target.len())
            .position(|w| w == target.as_slice())
        {
            rest.drain(pos..pos + target.len());
        }
    }
    if rest.is_empty() {
        target.join(" ")
    } else {
        rest.join(" ")
    }
}

/// Key of the target word in the word-embedding store.
pub fn target_key(sample: &Sample) -> String {
    normalize_phrase(&sample.target_word)
}

/// Occurrence count of the context word across all dataset contexts. For a
/// multiword context word this is the count of its rarest token.
pub fn context_card(dataset: &Dataset, context_word: &str) -> u64 {
    tokenize(context_word)
        .iter()
        .map(|t| dataset.word_card(t))
        .min()
        .unwrap_or(0)
        .max(1)
}

/// `(L, M)` for each candidate: similarity of the image to the embedding of
/// the target word and of the context word.
pub fn word_level_sims(
    sample: &Sample,
    images: &EmbeddingStore,
    words: &EmbeddingStore,
) -> Result<Vec<(f64, f64)>> {
    let lookup = |key: String| {
        words
            .get(&key)
            .ok_or(Error::MissingEmbeddings { ids: vec![key] })
    };
    let target = lookup(target_key(sample))?;
    let context = lookup(context_word(sample))?;
    sample
        .image_ids
        .iter()
        .map(|id| {
            let x = images.get(id).ok_or_else(|| Error::MissingEmbeddings {
                ids: vec![id.clone()],
            })?;
            Ok((dot(x, target), dot(x, context)))
        })
        .collect()
}

/// Score, max of others, mean of others, and the two differences.
pub(crate) fn score_block(values: &[f64], i: usize) -> [f64; 5] {
    let a = values[i];
    let others = values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, v)| *v);
    let (mut max, mut sum, mut n) = (f64::NEG_INFINITY, 0.0, 0usize);
    for v in others {
        max = max.max(v);
        sum += v;
        n += 1;
    }
    let (b, c) = if n == 0 {
        (a, a)
    } else {
        (max, sum / n as f64)
    };
    [a, b, c, a - b, a - c]
}

fn check_order<'a>(
    sample: &Sample,
    feature: &str,
    ids: impl Iterator<Item = &'a str>,
) -> Result<()> {
    let got: Vec<&str> = ids.collect();
    for (k, expected) in sample.image_ids.iter().enumerate() {
        if got.get(k) != Some(&expected.as_str()) {
            return Err(Error::MissingScore {
                feature: feature.into(),
                image: expected.clone(),
            });
        }
    }
    if got.len() != sample.image_ids.len() {
        return Err(Error::MissingScore {
            feature: feature.into(),
            image: got[sample.image_ids.len()].to_string(),
        });
    }
    Ok(())
}

/// Builds the ten feature vectors of `sample` in candidate order.
///
/// `wiki = None` zero-fills columns G–K.
pub fn extract(
    sample: &Sample,
    scores: &SampleScores,
    wiki: Option<&RetrievalScores>,
    word_sims: &[(f64, f64)],
    dataset: &Dataset,
) -> Result<Vec<FeatureVector>> {
    check_order(sample, "A", scores.scores.iter().map(|r| r.image.as_str()))?;
    if let Some(w) = wiki {
        check_order(sample, "G", w.scores.iter().map(|r| r.image.as_str()))?;
    }
    if word_sims.len() != sample.image_ids.len() {
        let k = word_sims
            .len()
            .min(sample.image_ids.len().saturating_sub(1));
        return Err(Error::MissingScore {
            feature: "L".into(),
            image: sample.image_ids[k].clone(),
        });
    }
    let clip = scores.values();
    let wiki_values = wiki.map(RetrievalScores::values);
    let context_log = (context_card(dataset, &context_word(sample)) as f64).log10();

    let mut out = Vec::with_capacity(CANDIDATES);
    for (i, image) in sample.image_ids.iter().enumerate() {
        let mut f = [0.0; FEATURE_COUNT];
        f[0..5].copy_from_slice(&score_block(&clip, i));
        f[5] = scores.scores[i].penalty;
        if let Some(w) = &wiki_values {
            f[WIKI_FEATURES].copy_from_slice(&score_block(w, i));
        }
        f[11] = word_sims[i].0;
        f[12] = word_sims[i].1;
        f[13] = (dataset.image_card(image).max(1) as f64).log10();
        f[14] = context_log;
        out.push(FeatureVector(f));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupFeatures {
    pub sample_id: String,
    pub image_ids: Vec<String>,
    pub vectors: Vec<FeatureVector>,
    /// 1 for the gold image, 0 otherwise; `None` when gold is unknown.
    pub labels: Option<Vec<u8>>,
}

impl GroupFeatures {
    pub fn new(sample: &Sample, vectors: Vec<FeatureVector>) -> Self {
        let labels = sample.gold_index().map(|g| {
            (0..sample.image_ids.len())
                .map(|i| u8::from(i == g))
                .collect()
        });
        GroupFeatures {
            sample_id: sample.sample_id.clone(),
            image_ids: sample.image_ids.clone(),
            vectors,
            labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub groups: Vec<GroupFeatures>,
}

impl FeatureMatrix {
    /// Labeled groups as ranking-model input. With `drop_wiki`, columns G–K
    /// are removed, leaving ten features.
    pub fn to_query_groups(&self, drop_wiki: bool) -> Vec<QueryGroup> {
        self.groups
            .iter()
            .filter_map(|g| {
                let labels = g.labels.clone()?;
                let features = g
                    .vectors
                    .iter()
                    .map(|v| select_columns(v, drop_wiki))
                    .collect();
                Some(QueryGroup { features, labels })
            })
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("sample_id\timage_id");
        for code in FEATURE_CODES {
            out.push('\t');
            out.push_str(code);
        }
        out.push_str("\tlabel\n");
        for g in &self.groups {
            for (i, (image, v)) in g.image_ids.iter().zip(&g.vectors).enumerate() {
                write!(out, "{}\t{}", g.sample_id, image).unwrap();
                for x in v.0 {
                    write!(out, "\t{x}").unwrap();
                }
                match &g.labels {
                    Some(l) => writeln!(out, "\t{}", l[i]).unwrap(),
                    None => out.push_str("\t-\n"),
                }
            }
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Parses the TSV layout written by [`FeatureMatrix::write_tsv`]; rows of
    /// one sample must be contiguous.
    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut groups: Vec<GroupFeatures> = Vec::new();
        let mut partial_labels: Vec<Option<u8>> = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.starts_with("sample_id\timage_id") => {}
            _ => return Err(Error::format(path, "missing feature TSV header")),
        }
        let finish = |g: &mut GroupFeatures, labels: &mut Vec<Option<u8>>| {
            g.labels = labels.iter().copied().collect::<Option<Vec<u8>>>();
            labels.clear();
        };
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != FEATURE_COUNT + 3 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {} columns", FEATURE_COUNT + 3),
                ));
            }
            let mut f = [0.0; FEATURE_COUNT];
            for (slot, col) in f.iter_mut().zip(&cols[2..2 + FEATURE_COUNT]) {
                *slot = col.parse().map_err(|e| Error::parse(path, i + 1, e))?;
            }
            let label = match cols[FEATURE_COUNT + 2] {
                "-" => None,
                s => Some(s.parse::<u8>().map_err(|e| Error::parse(path, i + 1, e))?),
            };
            if groups.last().is_none_or(|g| g.sample_id != cols[0]) {
                if let Some(g) = groups.last_mut() {
                    finish(g, &mut partial_labels);
                }
                groups.push(GroupFeatures {
                    sample_id: cols[0].to_string(),
                    image_ids: vec![],
                    vectors: vec![],
                    labels: None,
                });
            }
            let g = groups.last_mut().unwrap();
            g.image_ids.push(cols[1].to_string());
            g.vectors.push(FeatureVector(f));
            partial_labels.push(label);
        }
        if let Some(g) = groups.last_mut() {
            finish(g, &mut partial_labels);
        }
        Ok(FeatureMatrix { groups })
    }
}

pub fn select_columns(v: &FeatureVector, drop_wiki: bool) -> Vec<f64> {
    if drop_wiki {
        v.0.iter()
            .enumerate()
            .filter(|(i, _)| !WIKI_FEATURES.contains(i))
            .map(|(_, x)| *x)
            .collect()
    } else {
        v.0.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::ScoreRow;
    use crate::wikindex::ImageScore;
    use approx::assert_abs_diff_eq;

    fn sample() -> Sample {
        Sample {
            sample_id: "s1".into(),
            target_word: "andromeda".into(),
            context: "andromeda tree".into(),
            image_ids: (0..10).map(|i| format!("i{i}")).collect(),
            gold_image_id: Some("i0".into()),
        }
    }

    fn scores_from(values: &[f64], s: &Sample) -> SampleScores {
        SampleScores {
            sample: s.sample_id.clone(),
            scores: values
                .iter()
                .zip(&s.image_ids)
                .map(|(&v, id)| ScoreRow {
                    image: id.clone(),
                    sim: v + 0.1,
                    penalty: 0.1,
                    score: v,
                })
                .collect(),
        }
    }

    #[test]
    fn context_word_rules() {
        let mut s = sample();
        assert_eq!(context_word(&s), "tree");
        s.context = "the andromeda galaxy andromeda".into();
        assert_eq!(context_word(&s), "the galaxy andromeda");
        s.context = "Andromeda".into();
        assert_eq!(context_word(&s), "andromeda");
        s.target_word = "lily of the valley".into();
        s.context = "lily of the valley bush".into();
        assert_eq!(context_word(&s), "bush");
    }

    #[test]
    fn equal_scores_give_zero_differences() {
        let s = sample();
        let ds = Dataset::new(vec![s.clone()]).unwrap();
        let fv = extract(
            &s,
            &scores_from(&[0.3; 10], &s),
            None,
            &[(0.0, 0.0); 10],
            &ds,
        )
        .unwrap();
        for v in &fv {
            assert_eq!(v.get('B'), 0.3);
            assert_abs_diff_eq!(v.get('C'), 0.3, epsilon = 1e-15);
            assert_eq!(v.get('D'), 0.0);
            assert_abs_diff_eq!(v.get('E'), 0.0, epsilon = 1e-15);
            assert_eq!(v.get('G'), 0.0);
            assert_eq!(v.get('N'), 0.0);
        }
    }

    #[test]
    fn hand_computed_blocks() {
        let s = sample();
        let ds = Dataset::new(vec![s.clone()]).unwrap();
        let clip = [0.9, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0, -0.1, -0.2, -0.3];
        let wiki = RetrievalScores {
            sample: "s1".into(),
            scores: s
                .image_ids
                .iter()
                .enumerate()
                .map(|(i, id)| ImageScore {
                    image: id.clone(),
                    score: if i == 2 { 0.95 } else { 0.1 },
                })
                .collect(),
            retrieved_article_ids: vec![],
            used_fallback: false,
        };
        let sims: Vec<(f64, f64)> = (0..10)
            .map(|i| (i as f64 / 10.0, -(i as f64) / 10.0))
            .collect();
        let fv = extract(&s, &scores_from(&clip, &s), Some(&wiki), &sims, &ds).unwrap();
        let v0 = fv[0];
        // others: 0.5+0.4+0.3+0.2+0.1+0-0.1-0.2-0.3 = 0.9, mean 0.1
        assert_eq!(v0.get('A'), 0.9);
        assert_eq!(v0.get('B'), 0.5);
        assert_abs_diff_eq!(v0.get('C'), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(v0.get('D'), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(v0.get('E'), 0.8, epsilon = 1e-12);
        assert_eq!(v0.get('F'), 0.1);
        assert_eq!(v0.get('G'), 0.1);
        assert_eq!(v0.get('H'), 0.95);
        assert_abs_diff_eq!(v0.get('J'), -0.85, epsilon = 1e-12);
        let v2 = fv[2];
        assert_eq!(v2.get('H'), 0.1);
        assert_abs_diff_eq!(v2.get('K'), 0.85, epsilon = 1e-12);
        assert_eq!(fv[3].get('L'), 0.3);
        assert_eq!(fv[3].get('M'), -0.3);
        for v in &fv {
            assert_abs_diff_eq!(v.get('D'), v.get('A') - v.get('B'), epsilon = 1e-9);
            assert_abs_diff_eq!(v.get('K'), v.get('G') - v.get('I'), epsilon = 1e-9);
        }
    }

    #[test]
    fn card_features_use_log10() {
        let base = sample();
        let mut samples = Vec::new();
        for k in 0..10 {
            let mut s = base.clone();
            s.sample_id = format!("s{k}");
            s.image_ids[0] = "common".into();
            s.image_ids[1..]
                .iter_mut()
                .for_each(|id| *id = format!("{k}{id}"));
            s.gold_image_id = None;
            samples.push(s);
        }
        let ds = Dataset::new(samples).unwrap();
        let s = &ds.samples()[0];
        let fv = extract(s, &scores_from(&[0.0; 10], s), None, &[(0.0, 0.0); 10], &ds).unwrap();
        assert_eq!(fv[0].get('N'), 1.0);
        assert_eq!(fv[1].get('N'), 0.0);
        // "tree" occurs in all ten contexts
        assert_eq!(fv[0].get('O'), 1.0);
    }

    #[test]
    fn mismatched_inputs_name_feature_and_image() {
        let s = sample();
        let ds = Dataset::new(vec![s.clone()]).unwrap();
        let mut sc = scores_from(&[0.0; 10], &s);
        sc.scores[4].image = "other".into();
        match extract(&s, &sc, None, &[(0.0, 0.0); 10], &ds).unwrap_err() {
            Error::MissingScore { feature, image } => {
                assert_eq!(feature, "A");
                assert_eq!(image, "i4");
            }
            e => panic!("unexpected {e}"),
        }
        let sc = scores_from(&[0.0; 10], &s);
        assert!(matches!(
            extract(&s, &sc, None, &[(0.0, 0.0); 3], &ds),
            Err(Error::MissingScore { ref feature, .. }) if feature == "L"
        ));
    }

    #[test]
    fn word_sims_lookup() {
        let s = sample();
        let mut images = EmbeddingStore::new(0);
        for (i, id) in s.image_ids.iter().enumerate() {
            let v = if i == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            images.insert(id.as_str(), &v).unwrap();
        }
        let mut words = EmbeddingStore::new(0);
        words.insert("andromeda", &[1.0, 0.0]).unwrap();
        words.insert("tree", &[0.0, 1.0]).unwrap();
        let sims = word_level_sims(&s, &images, &words).unwrap();
        assert_eq!(sims[0], (1.0, 0.0));
        assert_eq!(sims[1], (0.0, 1.0));

        let mut only_target = EmbeddingStore::new(0);
        only_target.insert("andromeda", &[1.0, 0.0]).unwrap();
        match word_level_sims(&s, &images, &only_target).unwrap_err() {
            Error::MissingEmbeddings { ids } => assert_eq!(ids, ["tree"]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn tsv_round_trip() {
        let s = sample();
        let ds = Dataset::new(vec![s.clone()]).unwrap();
        let clip = [0.91, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0, -0.1, -0.2, 1.0 / 3.0];
        let fv = extract(&s, &scores_from(&clip, &s), None, &[(0.25, 0.5); 10], &ds).unwrap();
        let mut unlabeled = s.clone();
        unlabeled.sample_id = "s2".into();
        unlabeled.gold_image_id = None;
        let m = FeatureMatrix {
            groups: vec![
                GroupFeatures::new(&s, fv.clone()),
                GroupFeatures::new(&unlabeled, fv),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.tsv");
        m.write_tsv(&path).unwrap();
        let back = FeatureMatrix::read_tsv(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_query_groups(false).len(), 1);
        assert_eq!(back.to_query_groups(true)[0].features[0].len(), 10);
    }
}
