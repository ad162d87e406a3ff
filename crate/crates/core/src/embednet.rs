//! Deep embedding network: class attributes to semantic embedding.

use crate::error::{Error, Result};
use crate::numcore::{relu, relu_backward, AffineLayer, Matrix, SeededRng};

/// Two affine layers with a ReLU after each.
///
/// Maps an attribute vector `c(y)` to the semantic embedding `φ(c(y))` that
/// is concatenated with image features. With `final_relu` off the second
/// layer is left linear.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepEmbeddingNet {
    layer1: AffineLayer,
    layer2: AffineLayer,
    final_relu: bool,
    cache: Option<(Matrix, Matrix)>,
}

/// Gradients of one backward pass, parameter blocks in checkpoint order.
#[derive(Debug, Clone)]
pub struct EmbedGrads {
    pub input: Matrix,
    pub params: Vec<Matrix>,
}

impl DeepEmbeddingNet {
    pub fn new(layer1: AffineLayer, layer2: AffineLayer, final_relu: bool) -> Result<Self> {
        if layer1.output_dim() != layer2.input_dim() {
            return Err(Error::shape(
                "DeepEmbeddingNet::new",
                layer1.weight().shape_str(),
                layer2.weight().shape_str(),
            ));
        }
        Ok(DeepEmbeddingNet {
            layer1,
            layer2,
            final_relu,
            cache: None,
        })
    }

    pub fn init(
        d_attr: usize,
        hidden: usize,
        d_out: usize,
        final_relu: bool,
        rng: &mut SeededRng,
    ) -> Self {
        DeepEmbeddingNet {
            layer1: AffineLayer::glorot(d_attr, hidden, rng),
            layer2: AffineLayer::glorot(hidden, d_out, rng),
            final_relu,
            cache: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layer2.output_dim()
    }

    pub fn layers(&self) -> [&AffineLayer; 2] {
        [&self.layer1, &self.layer2]
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut v = self.layer1.params().to_vec();
        v.extend(self.layer2.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = self.layer1.params_mut().into();
        v.extend(self.layer2.params_mut());
        v
    }

    pub fn block_names(prefix: &str) -> Vec<String> {
        ["layer1.weight", "layer1.bias", "layer2.weight", "layer2.bias"]
            .iter()
            .map(|n| format!("{prefix}{n}"))
            .collect()
    }

    fn out_act(&self, pre: &Matrix) -> Matrix {
        if self.final_relu {
            relu(pre)
        } else {
            pre.clone()
        }
    }

    /// Forward pass without caching.
    pub fn infer(&self, attrs: &Matrix) -> Result<Matrix> {
        let h = relu(&self.layer1.infer(attrs)?);
        Ok(self.out_act(&self.layer2.infer(&h)?))
    }

    /// `ReLU(layer2(ReLU(layer1(attrs))))`, caching for [`backward`](Self::backward).
    pub fn forward(&mut self, attrs: &Matrix) -> Result<Matrix> {
        let pre1 = self.layer1.forward(attrs)?;
        let pre2 = self.layer2.forward(&relu(&pre1))?;
        let out = self.out_act(&pre2);
        self.cache = Some((pre1, pre2));
        Ok(out)
    }

    /// Embeds the attribute row of every label: row `i` of the result is the
    /// embedding of `attributes[labels[i]]`.
    pub fn embed_rows_for_labels(&mut self, attributes: &Matrix, labels: &[u32]) -> Result<Matrix> {
        let idx: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        if let Some(&bad) = idx.iter().find(|&&i| i >= attributes.rows()) {
            return Err(Error::Index {
                what: "attribute rows",
                index: bad,
                len: attributes.rows(),
            });
        }
        self.forward(&attributes.select_rows(&idx)?)
    }

    pub fn backward(&self, upstream: &Matrix) -> Result<EmbedGrads> {
        let (pre1, pre2) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("embedding backward called before forward".into()))?;
        let d_pre2 = if self.final_relu {
            relu_backward(pre2, upstream)?
        } else {
            upstream.clone()
        };
        let g2 = self.layer2.backward(&d_pre2)?;
        let g1 = self.layer1.backward(&relu_backward(pre1, &g2.input)?)?;
        Ok(EmbedGrads {
            input: g1.input,
            params: vec![g1.weight, g1.bias, g2.weight, g2.bias],
        })
    }
}

/// Free-function form of [`DeepEmbeddingNet::forward`].
pub fn embed_forward(net: &mut DeepEmbeddingNet, attrs: &Matrix) -> Result<Matrix> {
    net.forward(attrs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gradient_check, Differentiable};
    use proptest::prelude::*;

    struct SumLoss(DeepEmbeddingNet);

    impl Differentiable for SumLoss {
        fn block_names(&self) -> Vec<String> {
            DeepEmbeddingNet::block_names("")
        }
        fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
            self.0.params_mut()
        }
        fn loss(&mut self, x: &Matrix) -> Result<f64> {
            Ok(self.0.infer(x)?.sum())
        }
        fn loss_and_grads(&mut self, x: &Matrix) -> Result<(f64, Vec<Matrix>)> {
            let y = self.0.forward(x)?;
            let g = self.0.backward(&Matrix::filled(y.rows(), y.cols(), 1.0))?;
            Ok((y.sum(), g.params))
        }
    }

    fn random_net(seed: u64, final_relu: bool) -> DeepEmbeddingNet {
        let mut rng = SeededRng::new(seed);
        let l1 = AffineLayer::new(rng.gaussian_matrix(7, 4), rng.gaussian_matrix(1, 7)).unwrap();
        let l2 = AffineLayer::new(rng.gaussian_matrix(5, 7), rng.gaussian_matrix(1, 5)).unwrap();
        DeepEmbeddingNet::new(l1, l2, final_relu).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut net = DeepEmbeddingNet::new(AffineLayer::zeros(3, 4), AffineLayer::zeros(4, 2), true)
            .unwrap();
        let y = net.forward(&SeededRng::new(1).gaussian_matrix(6, 3)).unwrap();
        assert_eq!(y.shape(), (6, 2));
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for final_relu in [true, false] {
            let mut net = SumLoss(random_net(21, final_relu));
            let x = SeededRng::new(22).gaussian_matrix(6, 4);
            let report = gradient_check(&mut net, &x, 1e-4).unwrap();
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn label_lookup_examples() {
        let mut net = random_net(3, true);
        let attrs = SeededRng::new(4).gaussian_matrix(4, 4);

        let rep = net.embed_rows_for_labels(&attrs, &[2, 2, 2]).unwrap();
        assert_eq!(rep.row(0), rep.row(1));
        assert_eq!(rep.row(1), rep.row(2));

        let single = net.embed_rows_for_labels(&attrs, &[1]).unwrap();
        assert_eq!(single, net.infer(&attrs.select_rows(&[1]).unwrap()).unwrap());

        let fwd = net.embed_rows_for_labels(&attrs, &[0, 1, 3]).unwrap();
        let perm = net.embed_rows_for_labels(&attrs, &[3, 0, 1]).unwrap();
        assert_eq!(perm.row(0), fwd.row(2));
        assert_eq!(perm.row(1), fwd.row(0));
        assert_eq!(perm.row(2), fwd.row(1));

        assert!(matches!(
            net.embed_rows_for_labels(&attrs, &[4]),
            Err(Error::Index { index: 4, .. })
        ));
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        let net = random_net(1, true);
        assert!(matches!(net.infer(&Matrix::zeros(2, 3)), Err(Error::Shape { .. })));
    }

    proptest! {
        #[test]
        fn outputs_are_non_negative(seed in 0u64..500, rows in 1usize..8) {
            let net = random_net(seed, true);
            let x = SeededRng::new(seed + 1000).gaussian_matrix(rows, 4).scaled(3.0);
            let y = net.infer(&x).unwrap();
            prop_assert_eq!(y.shape(), (rows, 5));
            prop_assert!(y.as_slice().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn zero_bias_net_is_positively_homogeneous(seed in 0u64..200, t in 0.1f64..10.0) {
            let mut rng = SeededRng::new(seed);
            let l1 = AffineLayer::new(rng.gaussian_matrix(6, 3), Matrix::zeros(1, 6)).unwrap();
            let l2 = AffineLayer::new(rng.gaussian_matrix(2, 6), Matrix::zeros(1, 2)).unwrap();
            let net = DeepEmbeddingNet::new(l1, l2, true).unwrap();
            let x = rng.gaussian_matrix(3, 3);
            let y = net.infer(&x).unwrap();
            let yt = net.infer(&x.scaled(t)).unwrap();
            for (a, b) in y.as_slice().iter().zip(yt.as_slice()) {
                prop_assert!((a * t - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}
