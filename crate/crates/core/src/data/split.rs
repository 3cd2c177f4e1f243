use serde::{Deserialize, Serialize};

use super::DataError;
use crate::learn::split::stratified_partition;

/// Unit of assignment for the analysis/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitGranularity {
    /// Window slices are assigned independently.
    #[default]
    Slice,
    /// All slices of one trial land on the same side.
    Trial,
}

impl std::str::FromStr for SplitGranularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slice" => Ok(Self::Slice),
            "trial" => Ok(Self::Trial),
            other => Err(format!("unknown split granularity {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub analysis: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified analysis/test partition of labeled items.
///
/// `groups[i]` is the trial index of item `i`; it is only consulted for
/// [`SplitGranularity::Trial`], where each trial is stratified by the label of
/// its first item. Index sets are disjoint, exhaustive and sorted.
pub fn split_analysis_test(
    labels: &[usize],
    groups: &[usize],
    test_fraction: f64,
    seed: u64,
    granularity: SplitGranularity,
) -> Result<SplitIndices, DataError> {
    if labels.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(DataError::SingleClass);
    }
    match granularity {
        SplitGranularity::Slice => {
            let (analysis, test) = stratified_partition(labels, test_fraction, seed);
            Ok(SplitIndices { analysis, test })
        }
        SplitGranularity::Trial => {
            if groups.len() != labels.len() {
                return Err(DataError::InvalidArgument(format!(
                    "{} group ids for {} items",
                    groups.len(),
                    labels.len()
                )));
            }
            let n_groups = groups.iter().copied().max().map_or(0, |m| m + 1);
            let mut group_label: Vec<Option<usize>> = vec![None; n_groups];
            for (&g, &y) in groups.iter().zip(labels) {
                group_label[g].get_or_insert(y);
            }
            // Only groups that actually occur take part.
            let present: Vec<usize> = (0..n_groups).filter(|&g| group_label[g].is_some()).collect();
            let present_labels: Vec<usize> = present.iter().map(|&g| group_label[g].unwrap()).collect();
            let (_, test_groups) = stratified_partition(&present_labels, test_fraction, seed);
            let mut in_test = vec![false; n_groups];
            for gi in test_groups {
                in_test[present[gi]] = true;
            }
            let (test, analysis): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| in_test[groups[i]]);
            Ok(SplitIndices { analysis, test })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_items_one_test_item_per_class() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let groups: Vec<usize> = (0..10).collect();
        let s = split_analysis_test(&labels, &groups, 0.2, 42, SplitGranularity::Slice).unwrap();
        assert_eq!(s.test.len(), 2);
        assert_eq!(s.test.iter().filter(|&&i| labels[i] == 1).count(), 1);
        let again = split_analysis_test(&labels, &groups, 0.2, 42, SplitGranularity::Slice).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn trial_granularity_keeps_trials_together() {
        // 10 trials of 4 slices, alternating labels
        let groups: Vec<usize> = (0..40).map(|i| i / 4).collect();
        let labels: Vec<usize> = groups.iter().map(|g| g % 2).collect();
        let s = split_analysis_test(&labels, &groups, 0.2, 3, SplitGranularity::Trial).unwrap();
        assert_eq!(s.test.len(), 8);
        for g in 0..10 {
            let in_test = s.test.iter().filter(|&&i| groups[i] == g).count();
            assert!(in_test == 0 || in_test == 4);
        }
        assert_eq!(s.analysis.len() + s.test.len(), 40);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            split_analysis_test(&[], &[], 0.2, 0, SplitGranularity::Slice),
            Err(DataError::EmptyDataset)
        ));
        assert!(matches!(
            split_analysis_test(&[1, 1, 1], &[0, 1, 2], 0.2, 0, SplitGranularity::Slice),
            Err(DataError::SingleClass)
        ));
        assert_eq!("trial".parse::<SplitGranularity>(), Ok(SplitGranularity::Trial));
    }
}
