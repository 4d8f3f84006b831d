mod common;

use std::collections::HashMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::index::sample as pick;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vwsd::eval::{accuracy, mrr, run_ablation, AblationConfig, Ranking};
use vwsd::gbrank::{fit, lambda_gradients, QueryGroup, RankModel, TrainConfig};
use vwsd::pipeline;
use vwsd::scorer::{compute_penalties, score_dataset};
use vwsd::store::{Dataset, EmbeddingStore, Sample};
use vwsd::synthetic::{linear_groups, World, WorldConfig};
use vwsd::wikindex::{retrieve, Article, ArticleIndex, DEFAULT_B, DEFAULT_K1};

use common::{andromeda_dataset, fixture_dir, ok, prepared_world, ANDROMEDA};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn penalty_oracle() -> Check {
    const DIM: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let image_vecs: Vec<Vec<f64>> = (0..40).map(|_| vec(&mut rng)).collect();
    let mut images = EmbeddingStore::new(DIM);
    for (i, v) in image_vecs.iter().enumerate() {
        images
            .insert(format!("img{i}"), v)
            .map_err(|e| e.to_string())?;
    }
    let mut contexts = EmbeddingStore::new(DIM);
    let mut context_vecs = Vec::new();
    let mut samples = Vec::new();
    for s in 0..20 {
        let chosen = pick(&mut rng, 40, 10).into_vec();
        let v = vec(&mut rng);
        contexts
            .insert(format!("s{s}"), &v)
            .map_err(|e| e.to_string())?;
        context_vecs.push(v);
        samples.push((s, chosen));
    }
    let dataset = Dataset::new(
        samples
            .iter()
            .map(|(s, chosen)| Sample {
                sample_id: format!("s{s}"),
                target_word: "word".into(),
                context: format!("word context{s}"),
                image_ids: chosen.iter().map(|i| format!("img{i}")).collect(),
                gold_image_id: None,
            })
            .collect(),
    )
    .map_err(|e| e.to_string())?;

    let start = Instant::now();
    let penalties = compute_penalties(&dataset, &contexts, &images).map_err(|e| e.to_string())?;
    let table =
        score_dataset(&dataset, &contexts, &images, &penalties).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut card = vec![0.0f64; 40];
    for (_, chosen) in &samples {
        for &i in chosen {
            card[i] += 1.0;
        }
    }
    let max_card = card.iter().cloned().fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for ((s, chosen), row) in samples.iter().zip(&table) {
        for (&x, r) in chosen.iter().zip(&row.scores) {
            let mean = context_vecs
                .iter()
                .map(|c| cos(c, &image_vecs[x]))
                .sum::<f64>()
                / 20.0;
            let expected = cos(&context_vecs[*s], &image_vecs[x]) - mean * card[x] / max_card;
            worst = worst.max((r.score - expected).abs());
        }
    }
    ensure(worst < 1e-6, || format!("max |delta| {worst:e}"))?;
    ensure(elapsed < 1.0, || format!("took {elapsed:.3}s"))?;
    Ok(format!(
        "200 scores, max |delta| {worst:.1e}, {elapsed:.3}s"
    ))
}

fn corpus(docs: usize, rng: &mut ChaCha8Rng) -> Vec<Article> {
    (0..docs)
        .map(|d| {
            let len = rng.random_range(1..60);
            let text: Vec<String> = (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    format!("w{}", ((u * u) * 300.0) as usize)
                })
                .collect();
            Article {
                article_id: format!("d{d}"),
                title: format!("w{}", rng.random_range(0..300)),
                text: text.join(" "),
                image_ids: vec![],
            }
        })
        .collect()
}

fn naive_bm25(docs: &[Article], query: &str) -> Vec<f64> {
    let tokens: Vec<Vec<String>> = docs
        .iter()
        .map(|a| {
            format!("{} {}", a.title, a.text)
                .split_whitespace()
                .map(str::to_lowercase)
                .collect()
        })
        .collect();
    let n = docs.len() as f64;
    let avg = tokens.iter().map(|t| t.len() as f64).sum::<f64>() / n;
    let mut terms: Vec<String> = query.split_whitespace().map(str::to_lowercase).collect();
    terms.sort();
    terms.dedup();
    let mut scores = vec![0.0; docs.len()];
    for term in &terms {
        let df = tokens.iter().filter(|t| t.contains(term)).count() as f64;
        for (d, t) in tokens.iter().enumerate() {
            let tf = t.iter().filter(|w| *w == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = DEFAULT_K1 * (1.0 - DEFAULT_B + DEFAULT_B * t.len() as f64 / avg);
            scores[d] += idf * tf * (DEFAULT_K1 + 1.0) / (tf + norm);
        }
    }
    scores
}

fn random_query(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..6);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.15) {
                format!("absent{}", rng.random_range(0..5))
            } else {
                format!("w{}", rng.random_range(0..300))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn bm25_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let docs = corpus(200, &mut rng);
    let index =
        ArticleIndex::build(docs.clone(), DEFAULT_K1, DEFAULT_B).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let q = random_query(&mut rng);
        let expected = naive_bm25(&docs, &q);
        let mut got = vec![0.0; docs.len()];
        for (d, s) in index.score_query(&q) {
            got[d] = s;
        }
        for d in 0..docs.len() {
            worst = worst.max((got[d] - expected[d]).abs());
        }
    }
    ensure(worst < 1e-9, || format!("max |delta| {worst:e}"))?;

    let mut fallbacks = 0;
    for i in 0..100 {
        let context = if i % 4 == 0 {
            format!("absent{i} missing{i}")
        } else {
            random_query(&mut rng)
        };
        let all_zero = naive_bm25(&docs, &context).iter().all(|&s| s == 0.0);
        let r = retrieve(&index, &context, "w3", 10);
        ensure(r.used_fallback == all_zero, || {
            format!("fallback mismatch on '{context}'")
        })?;
        fallbacks += usize::from(r.used_fallback);
    }
    Ok(format!(
        "50 queries, max |delta| {worst:.1e}; fallback on {fallbacks}/100 contexts, all exact"
    ))
}

fn expansion_fidelity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dataset = andromeda_dataset(dir.path());
    let lexicon = fixture_dir().join("andromeda.jsonl");
    let out = ok(
        dir.path(),
        &[
            "--dataset",
            dataset.to_str().unwrap(),
            "--lexicon",
            lexicon.to_str().unwrap(),
            "expand",
            "--text",
        ],
    );
    let got = out.strip_suffix('\n').unwrap_or(&out);
    ensure(got == ANDROMEDA, || format!("got {got:?}"))?;
    Ok(format!("{got:?}"))
}

fn pairwise_loss(scores: &[f64], labels: &[u8]) -> f64 {
    let mut total = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] > labels[j] {
                total += (1.0 + (-(scores[i] - scores[j])).exp()).ln();
            }
        }
    }
    total
}

fn lambda_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for _ in 0..100 {
        let scores: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut labels: Vec<u8> = (0..10).map(|_| rng.random_range(0..3)).collect();
        labels[0] = 2;
        labels[1] = 0;
        let grads = lambda_gradients(&scores, &labels, 1.0);
        worst_sum = worst_sum.max(grads.iter().map(|g| g.grad).sum::<f64>().abs());
        for k in 0..scores.len() {
            let mut up = scores.clone();
            let mut down = scores.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (pairwise_loss(&up, &labels) - pairwise_loss(&down, &labels)) / (2.0 * h);
            worst_rel = worst_rel.max((grads[k].grad - fd).abs() / fd.abs().max(1e-6));
        }
    }
    ensure(worst_rel < 1e-4, || format!("relative error {worst_rel:e}"))?;
    ensure(worst_sum < 1e-9, || format!("gradient sum {worst_sum:e}"))?;
    Ok(format!(
        "100 groups, max rel err {worst_rel:.1e}, max |sum g| {worst_sum:.1e}"
    ))
}

fn top1(model: &RankModel, groups: &[QueryGroup]) -> f64 {
    let hits = groups
        .iter()
        .filter(|g| {
            model
                .rank(&g.features)
                .map(|o| g.labels[o[0]] == 1)
                .unwrap_or(false)
        })
        .count();
    hits as f64 / groups.len() as f64
}

fn learnability() -> Check {
    let train = linear_groups(200, 0.1, 11);
    let held_out = linear_groups(1000, 0.1, 12);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let model = pool
        .install(|| fit(&train, 15, &TrainConfig::default()))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let (tr, te) = (top1(&model, &train), top1(&model, &held_out));
    let summary = format!("train {tr:.3}, held-out {te:.3}, {elapsed:.1}s single-threaded");
    ensure(tr >= 0.95 && te >= 0.85 && elapsed < 60.0, || {
        summary.clone()
    })?;
    Ok(summary)
}

fn uplift() -> Check {
    let world = |samples, seed| {
        World::generate(&WorldConfig {
            samples,
            seed,
            ..WorldConfig::default()
        })
        .map_err(|e| e.to_string())
    };
    let train_world = world(200, 101)?;
    let inputs = train_world.inputs();
    let cfg = AblationConfig::original();
    let scores = pipeline::compute_scores(&inputs, &cfg).map_err(|e| e.to_string())?;
    let retrieval = pipeline::compute_retrieval(&inputs, &cfg).map_err(|e| e.to_string())?;
    let matrix = pipeline::compute_features(&inputs, &scores, Some(&retrieval))
        .map_err(|e| e.to_string())?;
    let model = fit(&matrix.to_query_groups(false), 15, &TrainConfig::default())
        .map_err(|e| e.to_string())?;

    let test_world = world(100, 202)?;
    let mut inputs = test_world.inputs();
    inputs.model = Some(&model);
    let configs: Vec<AblationConfig> = ["original", "no_ltr", "clip_only"]
        .iter()
        .filter_map(|n| AblationConfig::by_name(n))
        .collect();
    let report = run_ablation(&inputs, "en", &configs);
    let acc = |n: &str| report.get(n).map(|m| m.accuracy).unwrap_or(f64::NAN);
    let (orig, heur, clip) = (acc("original"), acc("no_ltr"), acc("clip_only"));
    let summary = format!("clip_only {clip:.2}, no_ltr {heur:.2}, original {orig:.2}");
    ensure(
        clip == 0.6 && heur >= 0.75 && orig >= 0.75 && orig > heur && heur > clip,
        || summary.clone(),
    )?;
    Ok(summary)
}

fn metrics() -> Check {
    let ranking = |sample: usize, gold_at: usize| {
        let mut ids: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
        ids.swap(0, gold_at);
        Ranking {
            sample: format!("s{sample}"),
            config: "crafted".into(),
            ranking: ids,
        }
    };
    let gold = |n: usize| -> HashMap<String, String> {
        (0..n)
            .map(|i| (format!("s{i}"), "x0".to_string()))
            .collect()
    };
    let positions = [0, 0, 1, 3, 0, 9, 2, 0, 4, 1];
    let crafted: Vec<Ranking> = positions
        .iter()
        .enumerate()
        .map(|(i, &p)| ranking(i, p))
        .collect();
    let acc = accuracy(&crafted, &gold(10)).map_err(|e| e.to_string())?;
    let m = mrr(&crafted, &gold(10)).map_err(|e| e.to_string())?;
    let expected = (1.0 + 1.0 + 0.5 + 0.25 + 1.0 + 0.1 + 1.0 / 3.0 + 1.0 + 0.2 + 0.5) / 10.0;
    ensure(acc == 0.4 && m == expected, || {
        format!("acc {acc}, mrr {m} vs {expected}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for trial in 0..1000 {
        let n = rng.random_range(1..40);
        let rows: Vec<Ranking> = (0..n)
            .map(|i| ranking(i, rng.random_range(0..10)))
            .collect();
        let a = accuracy(&rows, &gold(n)).map_err(|e| e.to_string())?;
        let r = mrr(&rows, &gold(n)).map_err(|e| e.to_string())?;
        ensure(a <= r, || format!("trial {trial}: accuracy {a} > mrr {r}"))?;
    }
    Ok(format!(
        "crafted acc {acc} mrr {m:.4}; accuracy <= mrr on 1000 random rankings"
    ))
}

fn one_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    prepared_world(dir, 40);
    let rank_out = ok(
        dir,
        &[
            "--config",
            "run.toml",
            "--seed",
            "5",
            "rank",
            "--out",
            "rankings.jsonl",
        ],
    );
    let ablate_out = ok(
        dir,
        &[
            "--config",
            "run.toml",
            "--seed",
            "5",
            "ablate",
            "--out",
            "ablation.tsv",
        ],
    );
    let mut files = vec![
        ("rank stdout".to_string(), rank_out.into_bytes()),
        ("ablate stdout".to_string(), ablate_out.into_bytes()),
    ];
    for name in [
        "model.json",
        "rankings.jsonl",
        "ablation.tsv",
        "features.tsv",
        "index.bin",
    ] {
        files.push((
            name.into(),
            std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?,
        ));
    }
    Ok(files)
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = one_run(a.path())?;
    let second = one_run(b.path())?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "{} outputs byte-identical across two runs",
        first.len()
    ))
}

fn main() -> ExitCode {
    let checks: [Criterion; 8] = [
        ("penalty oracle", penalty_oracle),
        ("bm25 oracle", bm25_oracle),
        ("expansion fidelity", expansion_fidelity),
        ("lambda gradients", lambda_check),
        ("ranker learnability", learnability),
        ("pipeline uplift", uplift),
        ("metric hand-checks", metrics),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} acceptance criteria met",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
