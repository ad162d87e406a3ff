use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::dataio::format::{
    load_feature_matrix, load_labels, read_id_list, write_feature_matrix, write_id_list,
    write_labels,
};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const FEATURES_FILE: &str = "features.mvf";
pub const LABELS_FILE: &str = "labels.mvl";
pub const ATTRIBUTES_FILE: &str = "attributes.mvf";
pub const SEEN_FILE: &str = "seen_classes.txt";
pub const NOVEL_FILE: &str = "novel_classes.txt";
pub const TRAIN_INDEX_FILE: &str = "train_indices.txt";
pub const TEST_SEEN_INDEX_FILE: &str = "test_seen_indices.txt";
pub const TEST_NOVEL_INDEX_FILE: &str = "test_novel_indices.txt";

/// Sample indices for the three protocol splits.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train_seen: Vec<usize>,
    pub test_seen: Vec<usize>,
    pub test_novel: Vec<usize>,
}

/// Image features, labels, class attributes and the seen/novel protocol.
///
/// Only constructible through [`FeatureDataset::new`], which enforces every
/// invariant, so a value of this type is always valid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Matrix,
    labels: Vec<u32>,
    attributes: Matrix,
    seen_classes: BTreeSet<u32>,
    novel_classes: BTreeSet<u32>,
    splits: Splits,
}

impl FeatureDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<u32>,
        attributes: Matrix,
        seen_classes: BTreeSet<u32>,
        novel_classes: BTreeSet<u32>,
        splits: Option<Splits>,
    ) -> Result<Self> {
        let splits = match splits {
            Some(s) => s,
            None => default_splits(&labels, &seen_classes, &novel_classes),
        };
        let ds = FeatureDataset {
            features,
            labels,
            attributes,
            seen_classes,
            novel_classes,
            splits,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        let n = self.features.rows();
        if n == 0 {
            return fail("dataset has no samples".into());
        }
        if self.labels.len() != n {
            return fail(format!(
                "label count {} does not match feature rows {n}",
                self.labels.len()
            ));
        }
        if let Some(c) = self.seen_classes.intersection(&self.novel_classes).next() {
            return fail(format!("class {c} is listed as both seen and novel"));
        }
        let n_attr = self.attributes.rows();
        for &c in self.seen_classes.iter().chain(&self.novel_classes) {
            if c as usize >= n_attr {
                return fail(format!(
                    "class id {c} has no attribute row ({n_attr} rows)"
                ));
            }
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if l as usize >= n_attr {
                return fail(format!(
                    "sample {i} has label {l} beyond attribute rows ({n_attr})"
                ));
            }
            if !self.seen_classes.contains(&l) && !self.novel_classes.contains(&l) {
                return fail(format!("sample {i} has label {l} in neither seen nor novel set"));
            }
        }
        if !self.attributes.is_finite() {
            return fail("attribute matrix has non-finite entries".into());
        }
        if !self.features.is_finite() {
            return fail("feature matrix has non-finite entries".into());
        }
        let check = |name: &str, idx: &[usize], classes: &BTreeSet<u32>| -> Result<()> {
            for &i in idx {
                if i >= n {
                    return fail(format!("{name} index {i} out of range ({n} samples)"));
                }
                if !classes.contains(&self.labels[i]) {
                    return fail(format!(
                        "{name} sample {i} has class {} outside its split's class set",
                        self.labels[i]
                    ));
                }
            }
            Ok(())
        };
        check("train_seen", &self.splits.train_seen, &self.seen_classes)?;
        check("test_seen", &self.splits.test_seen, &self.seen_classes)?;
        check("test_novel", &self.splits.test_novel, &self.novel_classes)?;
        let train: BTreeSet<_> = self.splits.train_seen.iter().collect();
        if let Some(i) = self.splits.test_seen.iter().find(|i| train.contains(i)) {
            return fail(format!("sample {i} is in both train_seen and test_seen"));
        }
        Ok(())
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn attributes(&self) -> &Matrix {
        &self.attributes
    }

    pub fn seen_classes(&self) -> &BTreeSet<u32> {
        &self.seen_classes
    }

    pub fn novel_classes(&self) -> &BTreeSet<u32> {
        &self.novel_classes
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn d_img(&self) -> usize {
        self.features.cols()
    }

    pub fn d_attr(&self) -> usize {
        self.attributes.cols()
    }

    /// Sorted union of seen and novel class ids: the classifier's label space.
    pub fn label_space(&self) -> Vec<u32> {
        self.seen_classes
            .union(&self.novel_classes)
            .copied()
            .collect()
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<u32> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Default protocol split: per seen class, the first `ceil(0.8 n)` samples in
/// index order train and the rest test; every novel sample is a novel test.
pub fn default_splits(
    labels: &[u32],
    seen: &BTreeSet<u32>,
    novel: &BTreeSet<u32>,
) -> Splits {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut splits = Splits::default();
    for (class, idx) in &by_class {
        if seen.contains(class) {
            let n_train = (idx.len() * 4).div_ceil(5);
            splits.train_seen.extend_from_slice(&idx[..n_train]);
            splits.test_seen.extend_from_slice(&idx[n_train..]);
        } else if novel.contains(class) {
            splits.test_novel.extend_from_slice(idx);
        }
    }
    splits.train_seen.sort_unstable();
    splits.test_seen.sort_unstable();
    splits.test_novel.sort_unstable();
    splits
}

fn class_set(path: &Path) -> Result<BTreeSet<u32>> {
    read_id_list(path)?
        .into_iter()
        .map(|c| {
            u32::try_from(c).map_err(|_| Error::Validation(format!(
                "{}: class id {c} exceeds u32",
                path.display()
            )))
        })
        .collect()
}

fn require(dir: &Path, name: &str) -> Result<std::path::PathBuf> {
    let p = dir.join(name);
    if !p.is_file() {
        return Err(Error::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("missing {name}")),
        ));
    }
    Ok(p)
}

/// Loads `features.mvf`, `labels.mvl`, `attributes.mvf`, the class split
/// files and any index files present in `dir`.
pub fn load_gzsl_dataset(dir: impl AsRef<Path>) -> Result<FeatureDataset> {
    let dir = dir.as_ref();
    let features = load_feature_matrix(require(dir, FEATURES_FILE)?)?;
    let labels = load_labels(require(dir, LABELS_FILE)?)?;
    let attributes = load_feature_matrix(require(dir, ATTRIBUTES_FILE)?)?;
    let seen = class_set(&require(dir, SEEN_FILE)?)?;
    let novel = class_set(&require(dir, NOVEL_FILE)?)?;

    let defaults = default_splits(&labels, &seen, &novel);
    let optional = |name: &str, fallback: Vec<usize>| -> Result<Vec<usize>> {
        let p = dir.join(name);
        if p.is_file() {
            read_id_list(&p)
        } else {
            Ok(fallback)
        }
    };
    let splits = Splits {
        train_seen: optional(TRAIN_INDEX_FILE, defaults.train_seen)?,
        test_seen: optional(TEST_SEEN_INDEX_FILE, defaults.test_seen)?,
        test_novel: optional(TEST_NOVEL_INDEX_FILE, defaults.test_novel)?,
    };
    FeatureDataset::new(features, labels, attributes, seen, novel, Some(splits))
}

/// Writes every file `load_gzsl_dataset` reads, including explicit index files.
pub fn write_gzsl_dataset(dir: impl AsRef<Path>, ds: &FeatureDataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_feature_matrix(dir.join(FEATURES_FILE), &ds.features)?;
    write_labels(dir.join(LABELS_FILE), &ds.labels)?;
    write_feature_matrix(dir.join(ATTRIBUTES_FILE), &ds.attributes)?;
    write_id_list(dir.join(SEEN_FILE), ds.seen_classes.iter().map(|&c| c as usize))?;
    write_id_list(dir.join(NOVEL_FILE), ds.novel_classes.iter().map(|&c| c as usize))?;
    write_id_list(dir.join(TRAIN_INDEX_FILE), ds.splits.train_seen.iter().copied())?;
    write_id_list(dir.join(TEST_SEEN_INDEX_FILE), ds.splits.test_seen.iter().copied())?;
    write_id_list(dir.join(TEST_NOVEL_INDEX_FILE), ds.splits.test_novel.iter().copied())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[u32]) -> BTreeSet<u32> {
        ids.iter().copied().collect()
    }

    fn tiny(labels: Vec<u32>, seen: &[u32], novel: &[u32], attr_rows: usize) -> Result<FeatureDataset> {
        let n = labels.len();
        FeatureDataset::new(
            Matrix::filled(n, 2, 1.0),
            labels,
            Matrix::zeros(attr_rows, 3),
            set(seen),
            set(novel),
            None,
        )
    }

    #[test]
    fn default_split_is_eighty_twenty() {
        let labels: Vec<u32> = (0..10).map(|_| 0).chain((0..5).map(|_| 1)).collect();
        let s = default_splits(&labels, &set(&[0]), &set(&[1]));
        assert_eq!(s.train_seen, (0..8).collect::<Vec<_>>());
        assert_eq!(s.test_seen, vec![8, 9]);
        assert_eq!(s.test_novel, (10..15).collect::<Vec<_>>());
    }

    #[test]
    fn label_beyond_attributes_is_rejected() {
        let err = tiny(vec![0, 1, 5], &[0, 5], &[1], 3).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains('5'));
    }

    #[test]
    fn overlapping_class_sets_are_rejected() {
        let err = tiny(vec![0, 1], &[0, 1], &[1], 3).unwrap_err();
        assert!(err.to_string().contains("both seen and novel"), "{err}");
    }

    #[test]
    fn unassigned_label_is_rejected() {
        assert!(tiny(vec![0, 2], &[0], &[1], 3).is_err());
    }

    #[test]
    fn novel_sample_in_train_split_is_rejected() {
        let err = FeatureDataset::new(
            Matrix::zeros(2, 1),
            vec![0, 1],
            Matrix::zeros(2, 1),
            set(&[0]),
            set(&[1]),
            Some(Splits {
                train_seen: vec![0, 1],
                test_seen: vec![],
                test_novel: vec![1],
            }),
        )
        .unwrap_err();
        assert!(err.to_string().contains("train_seen"), "{err}");
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let msg = load_gzsl_dataset(dir.path()).unwrap_err().to_string();
        assert!(msg.contains(FEATURES_FILE), "{msg}");
    }
}
