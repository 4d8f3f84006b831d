use vwsd::eval::{run_ablation, AblationConfig};
use vwsd::gbrank::{fit, RankModel, TrainConfig};
use vwsd::pipeline::{self, WikiMode};
use vwsd::synthetic::{Category, World, WorldConfig};

fn train_world() -> World {
    World::generate(&WorldConfig {
        samples: 200,
        seed: 101,
        ..WorldConfig::default()
    })
    .unwrap()
}

fn test_world() -> World {
    World::generate(&WorldConfig {
        samples: 100,
        seed: 202,
        ..WorldConfig::default()
    })
    .unwrap()
}

fn train(world: &World, drop_wiki: bool) -> RankModel {
    let inputs = world.inputs();
    let cfg = AblationConfig::original();
    let scores = pipeline::compute_scores(&inputs, &cfg).unwrap();
    let retrieval = pipeline::compute_retrieval(&inputs, &cfg).unwrap();
    let matrix = pipeline::compute_features(&inputs, &scores, Some(&retrieval)).unwrap();
    let groups = matrix.to_query_groups(drop_wiki);
    fit(
        &groups,
        groups[0].features[0].len(),
        &TrainConfig::default(),
    )
    .unwrap()
}

#[test]
fn components_improve_on_the_classifier() {
    let model = train(&train_world(), false);
    let world = test_world();
    assert_eq!(world.count(Category::Correct), 60);
    let mut inputs = world.inputs();
    inputs.model = Some(&model);
    let report = run_ablation(&inputs, "en", &AblationConfig::presets());
    print!("{}", report.to_text());
    assert!(report.all_ok());

    let acc = |name: &str| report.get(name).unwrap().accuracy;
    assert_eq!(acc("clip_only"), 0.6);
    assert!(acc("no_ltr") >= 0.75);
    assert!(acc("original") >= 0.75);
    assert!(acc("original") > acc("no_ltr"));
    assert!(acc("no_ltr") > acc("clip_only"));
    for row in &report.rows {
        let m = row.outcome.as_ref().unwrap();
        assert!(m.accuracy <= m.mrr);
    }
}

#[test]
fn report_lists_presets_in_order_and_is_deterministic() {
    let model = train(&train_world(), false);
    let world = test_world();
    let mut inputs = world.inputs();
    inputs.model = Some(&model);
    let a = run_ablation(&inputs, "en", &AblationConfig::presets());
    let b = run_ablation(&inputs, "en", &AblationConfig::presets());
    assert_eq!(a.to_tsv(), b.to_tsv());
    assert_eq!(a.to_text(), b.to_text());
    let tsv = a.to_tsv();
    let configs: Vec<&str> = tsv
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(
        configs,
        [
            "original",
            "no_penalties",
            "no_ltr",
            "no_expansion",
            "no_wikipedia",
            "clip_only"
        ]
    );
}

#[test]
fn no_wikipedia_reports_its_mode() {
    let train_w = train_world();
    let full = train(&train_w, false);
    let reduced = train(&train_w, true);
    assert_eq!(reduced.feature_count, 10);
    let world = test_world();
    let cfg = AblationConfig::by_name("no_wikipedia").unwrap();

    let mut inputs = world.inputs();
    inputs.model = Some(&full);
    let zero_filled = pipeline::run(&inputs, &cfg).unwrap();
    assert_eq!(zero_filled.wiki_mode, WikiMode::ZeroFilled);
    for g in &zero_filled.features.unwrap().groups {
        for v in &g.vectors {
            assert!(v.0[6..11].iter().all(|&x| x == 0.0));
        }
    }

    inputs.model_no_wiki = Some(&reduced);
    let retrained = pipeline::run(&inputs, &cfg).unwrap();
    assert_eq!(retrained.wiki_mode, WikiMode::Retrained);
    let report = run_ablation(&inputs, "en", &[cfg]);
    assert!(report.to_text().contains("retrained"));
}

#[test]
fn clip_only_is_perfect_when_cosine_already_is() {
    let world = World::generate(&WorldConfig {
        samples: 30,
        clip_correct: 1.0,
        ..WorldConfig::default()
    })
    .unwrap();
    let inputs = world.inputs();
    let report = run_ablation(
        &inputs,
        "en",
        &[AblationConfig::by_name("clip_only").unwrap()],
    );
    assert_eq!(report.get("clip_only").unwrap().accuracy, 1.0);
}

#[test]
fn missing_model_fails_only_the_model_rows() {
    let world = test_world();
    let inputs = world.inputs();
    let report = run_ablation(&inputs, "en", &AblationConfig::presets());
    assert!(!report.all_ok());
    for row in &report.rows {
        let needs_model = AblationConfig::by_name(&row.config).unwrap().ltr;
        assert_eq!(row.outcome.is_err(), needs_model, "{}", row.config);
    }
}
