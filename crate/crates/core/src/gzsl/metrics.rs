use std::collections::{BTreeMap, BTreeSet};

use crate::dataio::MetricsRow;
use crate::error::{Error, Result};
use crate::mvae::LossComponents;

/// `2 S N / (S + N)`, zero when both are zero. Works on any consistent
/// scale (fractions or percent).
pub fn harmonic_mean(seen: f64, novel: f64) -> Result<f64> {
    if !(seen >= 0.0 && novel >= 0.0) {
        return Err(Error::Domain(format!(
            "accuracies must be non-negative, got S={seen} N={novel}"
        )));
    }
    if seen + novel == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * seen * novel / (seen + novel))
}

/// Top-1 accuracy of every class that occurs in `truth`.
pub fn per_class_accuracy(truth: &[u32], predicted: &[u32]) -> BTreeMap<u32, f64> {
    let mut counts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        let e = counts.entry(t).or_default();
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(c, (hit, n))| (c, hit as f64 / n as f64))
        .collect()
}

/// Unweighted mean of the accuracies of `classes` present in `per_class`.
pub fn mean_class_accuracy(per_class: &BTreeMap<u32, f64>, classes: &BTreeSet<u32>) -> f64 {
    let accs: Vec<f64> = per_class
        .iter()
        .filter(|(c, _)| classes.contains(c))
        .map(|(_, &a)| a)
        .collect();
    if accs.is_empty() {
        0.0
    } else {
        accs.iter().sum::<f64>() / accs.len() as f64
    }
}

/// Final evaluation of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct GzslMetrics {
    pub run_id: String,
    pub variant: String,
    pub epoch: usize,
    pub losses: LossComponents,
    pub per_class_accuracy: BTreeMap<u32, f64>,
    pub seen_acc: f64,
    pub novel_acc: f64,
    pub harmonic: f64,
}

impl GzslMetrics {
    /// Seen/novel/H from per-class accuracies.
    pub fn from_per_class(
        per_class_accuracy: BTreeMap<u32, f64>,
        seen: &BTreeSet<u32>,
        novel: &BTreeSet<u32>,
    ) -> Result<Self> {
        let seen_acc = mean_class_accuracy(&per_class_accuracy, seen);
        let novel_acc = mean_class_accuracy(&per_class_accuracy, novel);
        Ok(GzslMetrics {
            run_id: String::new(),
            variant: String::new(),
            epoch: 0,
            losses: LossComponents::default(),
            harmonic: harmonic_mean(seen_acc, novel_acc)?,
            per_class_accuracy,
            seen_acc,
            novel_acc,
        })
    }

    pub fn to_row(&self) -> MetricsRow {
        MetricsRow {
            run_id: self.run_id.clone(),
            variant: self.variant.clone(),
            epoch: self.epoch,
            loss_total: self.losses.total,
            loss_recon: self.losses.recon,
            loss_kl: self.losses.kl,
            loss_wass: self.losses.wass,
            seen_acc: Some(self.seen_acc),
            novel_acc: Some(self.novel_acc),
            harmonic_mean: Some(self.harmonic),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_rows() {
        let h = harmonic_mean(62.9, 57.1).unwrap();
        assert!((h - 59.85).abs() < 0.01, "{h}");
        let h = harmonic_mean(78.3, 62.1).unwrap();
        assert!((h - 69.26).abs() < 0.01, "{h}");
    }

    #[test]
    fn edge_cases() {
        assert_eq!(harmonic_mean(0.37, 0.37).unwrap(), 0.37);
        assert_eq!(harmonic_mean(0.0, 40.0).unwrap(), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(harmonic_mean(-1.0, 3.0), Err(Error::Domain(_))));
    }

    #[test]
    fn seen_accuracy_is_class_mean() {
        let per_class = BTreeMap::from([(0, 1.0), (1, 0.5), (2, 0.0)]);
        let seen = BTreeSet::from([0, 1]);
        let novel = BTreeSet::from([2]);
        let m = GzslMetrics::from_per_class(per_class, &seen, &novel).unwrap();
        assert_eq!(m.seen_acc, 0.75);
        assert_eq!(m.novel_acc, 0.0);
        assert_eq!(m.harmonic, 0.0);
    }

    #[test]
    fn duplicating_a_class_does_not_change_its_weight() {
        let truth = [0, 0, 1, 1, 1];
        let pred = [0, 1, 1, 1, 0];
        let a = per_class_accuracy(&truth, &pred);
        let truth2: Vec<u32> = truth.iter().chain(&[0, 0]).copied().collect();
        let pred2: Vec<u32> = pred.iter().chain(&[0, 1]).copied().collect();
        let b = per_class_accuracy(&truth2, &pred2);
        let seen = BTreeSet::from([0, 1]);
        assert_eq!(mean_class_accuracy(&a, &seen), mean_class_accuracy(&b, &seen));
    }

    proptest! {
        #[test]
        fn harmonic_bounds(s in 0.0f64..1.0, n in 0.0f64..1.0) {
            let h = harmonic_mean(s, n).unwrap();
            prop_assert!(h <= 2.0 * s.min(n) + 1e-12);
            prop_assert!(h <= s.max(n) + 1e-12);
            prop_assert_eq!(h == 0.0, s == 0.0 || n == 0.0);
        }
    }
}
