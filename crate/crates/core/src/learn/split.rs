use rand::seq::SliceRandom;

use super::LearnError;
use crate::seed;

/// Number of held-out members for a class of size `n`.
pub(crate) fn held_out_count(n: usize, test_fraction: f64) -> usize {
    if n < 2 {
        return 0;
    }
    ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1)
}

/// Stratified shuffle split over class labels. Each class contributes
/// `round(n_c * test_fraction)` members to the test part (at least one and at
/// most `n_c - 1` when it has two or more members, none when it is a
/// singleton). Both index lists are returned sorted.
pub fn stratified_partition(labels: &[usize], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for (c, mut members) in by_class.into_iter().enumerate() {
        let mut rng = seed::rng_at(seed, &[c as u64]);
        members.shuffle(&mut rng);
        let k = held_out_count(members.len(), test_fraction);
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Like [`stratified_partition`] but refuses classes with fewer than two
/// members, which cannot appear on both sides.
pub fn stratified_shuffle_split(
    labels: &[usize],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), LearnError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(LearnError::InvalidParameter(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    if labels.len() < 2 {
        return Err(LearnError::StratificationImpossible(format!(
            "{} samples",
            labels.len()
        )));
    }
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        counts[y] += 1;
    }
    if let Some((c, n)) = counts.iter().enumerate().find(|(_, &n)| n == 1) {
        return Err(LearnError::StratificationImpossible(format!(
            "class {c} has {n} member"
        )));
    }
    Ok(stratified_partition(labels, test_fraction, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_per_class_at_twenty_percent() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let (train, test) = stratified_shuffle_split(&labels, 0.2, 1).unwrap();
        assert_eq!(test.len(), 2);
        assert_eq!(train.len(), 8);
        assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 1);
    }

    #[test]
    fn singleton_class_rejected() {
        assert!(matches!(
            stratified_shuffle_split(&[0, 0, 1], 0.2, 0),
            Err(LearnError::StratificationImpossible(_))
        ));
    }

    proptest! {
        #[test]
        fn proportions_hold(labels in prop::collection::vec(0usize..3, 2..200), seed in any::<u64>(), f in 0.05f64..0.95) {
            let (train, test) = stratified_partition(&labels, f, seed);
            let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for c in 0..3 {
                let n = labels.iter().filter(|&&y| y == c).count();
                let t = test.iter().filter(|&&i| labels[i] == c).count();
                if n >= 2 {
                    prop_assert!((t as f64 - n as f64 * f).abs() <= 1.0);
                }
            }
            prop_assert_eq!(stratified_partition(&labels, f, seed), (train, test));
        }
    }
}
