//! Softmax MLP used as the final GZSL classifier.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mvae::checkpoint::{read_container, write_container};
use crate::numcore::{relu, relu_backward, AffineLayer, Matrix, Optimizer, OptimizerKind, SeededRng};

/// Training hyperparameters of the classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierParams {
    pub hidden1: usize,
    pub hidden2: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

/// Features paired with class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSet {
    pub inputs: Matrix,
    pub labels: Vec<u32>,
}

impl ClassifierSet {
    pub fn new(inputs: Matrix, labels: Vec<u32>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(
                "ClassifierSet::new",
                format!("{} rows", inputs.rows()),
                format!("{} labels", labels.len()),
            ));
        }
        Ok(ClassifierSet { inputs, labels })
    }
}

/// Three affine layers with ReLU between them; logits index into
/// `label_space`, which is sorted ascending. Inputs are standardized with the
/// per-feature mean and scale of the training set first.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    mean: Matrix,
    inv_scale: Matrix,
    layers: [AffineLayer; 3],
    label_space: Vec<u32>,
}

/// Per-column mean and reciprocal standard deviation (1 for constant
/// columns).
fn standardizer(x: &Matrix) -> (Matrix, Matrix) {
    let n = x.rows().max(1) as f64;
    let mean = x.sum_rows().scaled(1.0 / n);
    let mut var = Matrix::zeros(1, x.cols());
    for r in 0..x.rows() {
        for (j, v) in x.row(r).iter().enumerate() {
            let d = v - mean.get(0, j);
            var.as_mut_slice()[j] += d * d / n;
        }
    }
    let inv = var.map(|v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 });
    (mean, inv)
}

const KIND_HEADER: &str = "kind = mlp-classifier";

impl MlpClassifier {
    pub fn init(input: usize, params: &ClassifierParams, label_space: Vec<u32>, rng: &mut SeededRng) -> Self {
        let out = label_space.len();
        MlpClassifier {
            mean: Matrix::zeros(1, input),
            inv_scale: Matrix::filled(1, input, 1.0),
            layers: [
                AffineLayer::glorot(input, params.hidden1, rng),
                AffineLayer::glorot(params.hidden1, params.hidden2, rng),
                AffineLayer::glorot(params.hidden2, out, rng),
            ],
            label_space,
        }
    }

    pub fn label_space(&self) -> &[u32] {
        &self.label_space
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn block_names() -> Vec<String> {
        (1..=3)
            .flat_map(|i| [format!("classifier.layer{i}.weight"), format!("classifier.layer{i}.bias")])
            .collect()
    }

    fn standardize(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.cols() {
            return Err(Error::shape(
                "MlpClassifier",
                format!("features {}", x.shape_str()),
                format!("input width {}", self.mean.cols()),
            ));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean.get(0, j)) * self.inv_scale.get(0, j);
            }
        }
        Ok(out)
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let h1 = relu(&self.layers[0].infer(&self.standardize(x)?)?);
        let h2 = relu(&self.layers[1].infer(&h1)?);
        self.layers[2].infer(&h2)
    }

    /// Predicted class id per row; ties go to the lowest id.
    pub fn classify(&self, x: &Matrix) -> Result<Vec<u32>> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                self.label_space[best]
            })
            .collect())
    }

    /// Mean softmax cross-entropy of a batch and its parameter gradients.
    fn loss_and_grads(&mut self, x: &Matrix, targets: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        let pre1 = self.layers[0].forward(&self.standardize(x)?)?;
        let h1 = relu(&pre1);
        let pre2 = self.layers[1].forward(&h1)?;
        let h2 = relu(&pre2);
        let logits = self.layers[2].forward(&h2)?;
        let n = x.rows() as f64;
        let mut d = logits.clone();
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = d.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            loss += z.ln() - (logits.get(r, t) - max);
            for v in row.iter_mut() {
                *v /= z * n;
            }
            row[t] -= 1.0 / n;
        }
        let g3 = self.layers[2].backward(&d)?;
        let g2 = self.layers[1].backward(&relu_backward(&pre2, &g3.input)?)?;
        let g1 = self.layers[0].backward(&relu_backward(&pre1, &g2.input)?)?;
        Ok((loss / n, vec![g1.weight, g1.bias, g2.weight, g2.bias, g3.weight, g3.bias]))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let labels: Vec<String> = self.label_space.iter().map(|c| c.to_string()).collect();
        let header = format!("{KIND_HEADER}\nlabels = {}\n", labels.join(","));
        let mut blocks = vec![&self.mean, &self.inv_scale];
        blocks.extend(self.params());
        write_container(path, &header, &blocks)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let format_err = |msg: String| Error::Format {
            path: path.to_owned(),
            msg,
        };
        let (header, blocks) = read_container(path)?;
        if !header.lines().any(|l| l.trim() == KIND_HEADER) {
            return Err(format_err("not a classifier container".into()));
        }
        let labels = header
            .lines()
            .find_map(|l| l.trim().strip_prefix("labels = "))
            .ok_or_else(|| format_err("missing labels line".into()))?;
        let label_space = labels
            .split(',')
            .map(|s| s.parse::<u32>().map_err(|_| format_err(format!("bad label {s:?}"))))
            .collect::<Result<Vec<u32>>>()?;
        if blocks.len() != 8 {
            return Err(format_err(format!("expected 8 blocks, found {}", blocks.len())));
        }
        let mut it = blocks.into_iter();
        let mean = it.next().expect("8 blocks");
        let inv_scale = it.next().expect("8 blocks");
        let mut layer = || -> Result<AffineLayer> {
            AffineLayer::new(it.next().expect("8 blocks"), it.next().expect("8 blocks"))
        };
        let layers = [layer()?, layer()?, layer()?];
        if mean.shape() != (1, layers[0].input_dim())
            || inv_scale.shape() != mean.shape()
            || layers[2].output_dim() != label_space.len()
            || layers[1].output_dim() != layers[2].input_dim()
            || layers[0].output_dim() != layers[1].input_dim()
        {
            return Err(format_err("layer shapes do not chain".into()));
        }
        Ok(MlpClassifier {
            mean,
            inv_scale,
            layers,
            label_space,
        })
    }
}

/// Fits a fresh classifier on `set` with shuffled minibatch Adam.
///
/// The label space is the sorted set of ids in `set.labels`; fewer than two
/// classes is an error.
pub fn train_classifier(set: &ClassifierSet, params: &ClassifierParams, rng: &mut SeededRng) -> Result<MlpClassifier> {
    let mut space = set.labels.clone();
    space.sort_unstable();
    space.dedup();
    if space.len() < 2 {
        return Err(Error::Degenerate(format!(
            "classifier needs at least two classes, training set has {}",
            space.len()
        )));
    }
    let targets: Vec<usize> = set
        .labels
        .iter()
        .map(|l| space.binary_search(l).expect("label in space"))
        .collect();
    let mut clf = MlpClassifier::init(set.inputs.cols(), params, space, rng);
    (clf.mean, clf.inv_scale) = standardizer(&set.inputs);
    let mut opt = Optimizer::new(OptimizerKind::Adam, &clf.params(), params.lr);
    let names = MlpClassifier::block_names();
    let mut order: Vec<usize> = (0..set.labels.len()).collect();
    for _ in 0..params.epochs {
        rng.shuffle(&mut order);
        for idx in order.chunks(params.batch.max(1)) {
            let x = set.inputs.select_rows(idx)?;
            let t: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let (_, grads) = clf.loss_and_grads(&x, &t)?;
            opt.step(clf.params_mut(), &grads, &names)?;
        }
    }
    for l in clf.layers.iter_mut() {
        l.clear_cache();
    }
    Ok(clf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gradient_check, Differentiable};

    fn params() -> ClassifierParams {
        ClassifierParams {
            hidden1: 16,
            hidden2: 8,
            epochs: 40,
            batch: 10,
            lr: 1e-2,
        }
    }

    fn blobs(rng: &mut SeededRng) -> ClassifierSet {
        let centers = [[3.0, 0.0], [0.0, 3.0], [-3.0, -3.0]];
        let ids = [4u32, 7, 9];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &id) in centers.iter().zip(&ids) {
            for _ in 0..30 {
                rows.push(vec![c[0] + 0.3 * rng.standard_normal(), c[1] + 0.3 * rng.standard_normal()]);
                labels.push(id);
            }
        }
        ClassifierSet::new(Matrix::from_rows(&rows), labels).unwrap()
    }

    #[test]
    fn separable_blobs_are_learned() {
        let mut rng = SeededRng::new(3);
        let set = blobs(&mut rng);
        let clf = train_classifier(&set, &params(), &mut rng).unwrap();
        assert_eq!(clf.label_space(), &[4, 7, 9]);
        let pred = clf.classify(&set.inputs).unwrap();
        let hits = pred.iter().zip(&set.labels).filter(|(a, b)| a == b).count();
        assert_eq!(hits, set.labels.len());
    }

    #[test]
    fn single_class_is_degenerate() {
        let set = ClassifierSet::new(Matrix::zeros(3, 2), vec![1, 1, 1]).unwrap();
        let err = train_classifier(&set, &params(), &mut SeededRng::new(0)).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let mut clf = MlpClassifier::init(2, &params(), vec![2, 5, 8], &mut SeededRng::new(0));
        for l in clf.layers.iter_mut() {
            for p in l.params_mut() {
                p.as_mut_slice().fill(0.0);
            }
        }
        assert_eq!(clf.classify(&Matrix::filled(3, 2, 1.0)).unwrap(), vec![2, 2, 2]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.mvm");
        let clf = MlpClassifier::init(3, &params(), vec![0, 3], &mut SeededRng::new(1));
        clf.save(&p).unwrap();
        let back = MlpClassifier::load(&p).unwrap();
        assert_eq!(back.label_space(), clf.label_space());
        let x = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.1);
        assert_eq!(back.classify(&x).unwrap(), clf.classify(&x).unwrap());
    }

    struct Probe {
        clf: MlpClassifier,
        targets: Vec<usize>,
    }

    impl Differentiable for Probe {
        fn block_names(&self) -> Vec<String> {
            MlpClassifier::block_names()
        }
        fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
            self.clf.params_mut()
        }
        fn loss(&mut self, x: &Matrix) -> Result<f64> {
            Ok(self.clf.loss_and_grads(x, &self.targets)?.0)
        }
        fn loss_and_grads(&mut self, x: &Matrix) -> Result<(f64, Vec<Matrix>)> {
            self.clf.loss_and_grads(x, &self.targets)
        }
    }

    #[test]
    fn cross_entropy_gradients() {
        let mut rng = SeededRng::new(8);
        let p = ClassifierParams { hidden1: 5, hidden2: 4, ..params() };
        let mut probe = Probe {
            clf: MlpClassifier::init(3, &p, vec![0, 1, 2], &mut rng),
            targets: vec![0, 2, 1, 2],
        };
        let x = rng.gaussian_matrix(4, 3);
        let report = gradient_check(&mut probe, &x, 1e-4).unwrap();
        assert!(report.passed(), "{report}");
    }
}
