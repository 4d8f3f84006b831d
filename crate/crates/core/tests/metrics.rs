use std::collections::HashMap;

use proptest::prelude::*;
use vwsd::eval::{accuracy, mrr, Ranking};

fn ranking(sample: usize, gold_at: usize) -> Ranking {
    let mut ids: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
    ids.swap(0, gold_at);
    Ranking {
        sample: format!("s{sample}"),
        config: "crafted".into(),
        ranking: ids,
    }
}

fn gold(n: usize) -> HashMap<String, String> {
    (0..n)
        .map(|i| (format!("s{i}"), "x0".to_string()))
        .collect()
}

#[test]
fn crafted_rankings() {
    let positions = [0, 0, 1, 3, 0, 9, 2, 0, 4, 1];
    let results: Vec<Ranking> = positions
        .iter()
        .enumerate()
        .map(|(i, &p)| ranking(i, p))
        .collect();
    let g = gold(10);
    assert_eq!(accuracy(&results, &g).unwrap(), 0.4);
    let expected_mrr = (1.0 + 1.0 + 0.5 + 0.25 + 1.0 + 0.1 + 1.0 / 3.0 + 1.0 + 0.2 + 0.5) / 10.0;
    assert_eq!(mrr(&results, &g).unwrap(), expected_mrr);

    let four_of_five: Vec<Ranking> = [0, 0, 0, 0, 1]
        .iter()
        .enumerate()
        .map(|(i, &p)| ranking(i, p))
        .collect();
    assert_eq!(accuracy(&four_of_five, &gold(5)).unwrap(), 0.8);
    let fourth: Vec<Ranking> = (0..3).map(|i| ranking(i, 3)).collect();
    assert_eq!(mrr(&fourth, &gold(3)).unwrap(), 0.25);
}

#[test]
fn missing_gold_is_an_error() {
    let results = vec![ranking(0, 0), ranking(1, 0)];
    assert!(accuracy(&results, &gold(1)).is_err());
    assert!(mrr(&results, &gold(1)).is_err());
}

proptest! {
    #[test]
    fn accuracy_never_exceeds_mrr(positions in proptest::collection::vec(0usize..10, 1..50)) {
        let results: Vec<Ranking> = positions.iter().enumerate().map(|(i, &p)| ranking(i, p)).collect();
        let g = gold(positions.len());
        let acc = accuracy(&results, &g).unwrap();
        let m = mrr(&results, &g).unwrap();
        prop_assert!(acc <= m);
        prop_assert!((0.0..=1.0).contains(&acc));
        prop_assert!(m > 0.0 && m <= 1.0);
    }
}
