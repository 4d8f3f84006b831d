use std::cmp::Ordering;

/// Indices of `scores` sorted best first. Ties keep their original order.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Like [`rank_descending`] but ties on `primary` are broken by
/// `secondary` (higher first) before falling back to original order.
pub fn rank_descending_by(primary: &[f64], secondary: &[f64]) -> Vec<usize> {
    debug_assert_eq!(primary.len(), secondary.len());
    let mut order: Vec<usize> = (0..primary.len()).collect();
    order.sort_by(|&a, &b| match primary[b].total_cmp(&primary[a]) {
        Ordering::Equal => secondary[b].total_cmp(&secondary[a]),
        other => other,
    });
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_on_ties() {
        assert_eq!(rank_descending(&[0.1, 0.5, 0.5, 0.2]), [1, 2, 3, 0]);
        assert_eq!(rank_descending(&[0.0; 4]), [0, 1, 2, 3]);
        assert_eq!(
            rank_descending_by(&[0.0, 0.0, 1.0, 0.0], &[0.1, 0.3, 0.0, 0.3]),
            [2, 1, 3, 0]
        );
    }
}
