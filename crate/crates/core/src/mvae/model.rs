use crate::dataio::{ModelConfig, Variant};
use crate::embednet::DeepEmbeddingNet;
use crate::error::{Error, Result};
use crate::mvae::loss::{
    build_combined, kl_divergence, kl_grads, reconstruction_grad, reconstruction_loss,
    LossComponents, LossWeights,
};
use crate::mvae::wasserstein::wasserstein2_with_grad;
use crate::numcore::{relu, relu_backward, AffineLayer, Matrix, SeededRng, Stream};

/// Log-variances are clamped to `±LOGVAR_CLAMP` before exponentiation.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// Diagonal Gaussian posterior over the latent space, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution {
    pub mu: Matrix,
    pub logvar: Matrix,
}

impl LatentDistribution {
    pub fn new(mu: Matrix, logvar: Matrix) -> Result<Self> {
        if mu.shape() != logvar.shape() {
            return Err(Error::shape("LatentDistribution", mu.shape_str(), logvar.shape_str()));
        }
        if let Some(i) = logvar.first_non_finite() {
            return Err(Error::Numeric(format!("logvar entry {i}")));
        }
        Ok(LatentDistribution { mu, logvar })
    }

    pub fn std(&self) -> Matrix {
        self.logvar.map(|lv| (0.5 * lv).exp())
    }
}

/// `z = mu + exp(logvar / 2) ⊙ eps`.
pub fn reparameterize(dist: &LatentDistribution, eps: &Matrix) -> Result<Matrix> {
    if eps.shape() != dist.mu.shape() {
        return Err(Error::shape("reparameterize", dist.mu.shape_str(), eps.shape_str()));
    }
    let mut z = dist.std().zip_map(eps, |s, e| s * e)?;
    z.add_assign(&dist.mu)?;
    Ok(z)
}

#[derive(Debug, Clone, PartialEq, Default)]
struct PairCache {
    trunk_pre: Option<Matrix>,
    logvar_raw: Option<Matrix>,
    dec_pre: Option<Matrix>,
}

/// One encoder–decoder pair: a shared ReLU trunk with `mu` and `logvar`
/// heads, and a one-hidden-layer ReLU decoder back to the input width.
#[derive(Debug, Clone, PartialEq)]
pub struct VaePair {
    trunk: AffineLayer,
    mu_head: AffineLayer,
    logvar_head: AffineLayer,
    dec_hidden: AffineLayer,
    dec_out: AffineLayer,
    cache: PairCache,
}

pub const PAIR_BLOCKS: [&str; 10] = [
    "encoder.weight",
    "encoder.bias",
    "mu_head.weight",
    "mu_head.bias",
    "logvar_head.weight",
    "logvar_head.bias",
    "decoder.hidden.weight",
    "decoder.hidden.bias",
    "decoder.out.weight",
    "decoder.out.bias",
];

impl VaePair {
    pub fn init(input: usize, hidden: usize, latent: usize, rng: &mut SeededRng) -> Self {
        VaePair {
            trunk: AffineLayer::glorot(input, hidden, rng),
            mu_head: AffineLayer::glorot(hidden, latent, rng),
            logvar_head: AffineLayer::glorot(hidden, latent, rng),
            dec_hidden: AffineLayer::glorot(latent, hidden, rng),
            dec_out: AffineLayer::glorot(hidden, input, rng),
            cache: PairCache::default(),
        }
    }

    /// Builds a pair from its ten parameter blocks in [`PAIR_BLOCKS`] order.
    pub fn from_blocks(blocks: Vec<Matrix>) -> Result<Self> {
        if blocks.len() != PAIR_BLOCKS.len() {
            return Err(Error::State(format!(
                "encoder-decoder pair needs 10 parameter blocks, got {}",
                blocks.len()
            )));
        }
        let mut it = blocks.into_iter();
        let mut next = || AffineLayer::new(it.next().unwrap(), it.next().unwrap());
        let pair = VaePair {
            trunk: next()?,
            mu_head: next()?,
            logvar_head: next()?,
            dec_hidden: next()?,
            dec_out: next()?,
            cache: PairCache::default(),
        };
        let h = pair.trunk.output_dim();
        let l = pair.mu_head.output_dim();
        let consistent = pair.mu_head.input_dim() == h
            && pair.logvar_head.input_dim() == h
            && pair.logvar_head.output_dim() == l
            && pair.dec_hidden.input_dim() == l
            && pair.dec_out.input_dim() == pair.dec_hidden.output_dim()
            && pair.dec_out.output_dim() == pair.trunk.input_dim();
        if !consistent {
            return Err(Error::State("inconsistent encoder-decoder block shapes".into()));
        }
        Ok(pair)
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.trunk.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu_head.output_dim()
    }

    fn layers(&self) -> [&AffineLayer; 5] {
        [&self.trunk, &self.mu_head, &self.logvar_head, &self.dec_hidden, &self.dec_out]
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers().into_iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = Vec::with_capacity(10);
        for l in [
            &mut self.trunk,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.dec_hidden,
            &mut self.dec_out,
        ] {
            v.extend(l.params_mut());
        }
        v
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(
                "encode",
                format!("input {}", input.shape_str()),
                format!("encoder width {}", self.input_dim()),
            ));
        }
        Ok(())
    }

    pub fn encode_infer(&self, input: &Matrix) -> Result<LatentDistribution> {
        self.check_input(input)?;
        let h = relu(&self.trunk.infer(input)?);
        let mu = self.mu_head.infer(&h)?;
        let logvar = self
            .logvar_head
            .infer(&h)?
            .map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        LatentDistribution::new(mu, logvar)
    }

    pub fn encode(&mut self, input: &Matrix) -> Result<LatentDistribution> {
        self.check_input(input)?;
        let pre = self.trunk.forward(input)?;
        let h = relu(&pre);
        let mu = self.mu_head.forward(&h)?;
        let raw = self.logvar_head.forward(&h)?;
        let logvar = raw.map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        self.cache.trunk_pre = Some(pre);
        self.cache.logvar_raw = Some(raw);
        LatentDistribution::new(mu, logvar)
    }

    fn check_latent(&self, z: &Matrix) -> Result<()> {
        if z.cols() != self.latent_dim() {
            return Err(Error::shape(
                "decode",
                format!("latent {}", z.shape_str()),
                format!("latent width {}", self.latent_dim()),
            ));
        }
        Ok(())
    }

    pub fn decode_infer(&self, z: &Matrix) -> Result<Matrix> {
        self.check_latent(z)?;
        self.dec_out.infer(&relu(&self.dec_hidden.infer(z)?))
    }

    pub fn decode(&mut self, z: &Matrix) -> Result<Matrix> {
        self.check_latent(z)?;
        let pre = self.dec_hidden.forward(z)?;
        let out = self.dec_out.forward(&relu(&pre))?;
        self.cache.dec_pre = Some(pre);
        Ok(out)
    }

    /// Returns `d loss / d z` and the four decoder gradients.
    fn backward_decoder(&self, d_recon: &Matrix) -> Result<(Matrix, [Matrix; 4])> {
        let pre = self
            .cache
            .dec_pre
            .as_ref()
            .ok_or_else(|| Error::State("decoder backward before forward".into()))?;
        let g_out = self.dec_out.backward(d_recon)?;
        let g_hid = self.dec_hidden.backward(&relu_backward(pre, &g_out.input)?)?;
        Ok((
            g_hid.input,
            [g_hid.weight, g_hid.bias, g_out.weight, g_out.bias],
        ))
    }

    /// Backward through the heads and trunk given gradients with respect to
    /// `mu` and the clamped `logvar`. Returns the input gradient and the six
    /// encoder gradients.
    fn backward_encoder(&self, d_mu: &Matrix, d_logvar: &Matrix) -> Result<(Matrix, [Matrix; 6])> {
        let (pre, raw) = match (&self.cache.trunk_pre, &self.cache.logvar_raw) {
            (Some(p), Some(r)) => (p, r),
            _ => return Err(Error::State("encoder backward before forward".into())),
        };
        let d_raw = raw.zip_map(d_logvar, |r, g| {
            if r > -LOGVAR_CLAMP && r < LOGVAR_CLAMP {
                g
            } else {
                0.0
            }
        })?;
        let g_mu = self.mu_head.backward(d_mu)?;
        let g_lv = self.logvar_head.backward(&d_raw)?;
        let mut d_h = g_mu.input;
        d_h.add_assign(&g_lv.input)?;
        let g_trunk = self.trunk.backward(&relu_backward(pre, &d_h)?)?;
        Ok((
            g_trunk.input,
            [
                g_trunk.weight,
                g_trunk.bias,
                g_mu.weight,
                g_mu.bias,
                g_lv.weight,
                g_lv.bias,
            ],
        ))
    }

    /// Full VAE pass encoding `input` with noise `eps` and reconstructing
    /// `target`, returning what backward needs.
    fn run(&mut self, input: &Matrix, target: &Matrix, eps: &Matrix) -> Result<PairPass> {
        let dist = self.encode(input)?;
        let z = reparameterize(&dist, eps)?;
        let recon = self.decode(&z)?;
        Ok(PairPass {
            recon_loss: reconstruction_loss(target, &recon)?,
            kl: kl_divergence(&dist),
            dist,
            recon,
        })
    }

    /// Backward of `alpha * recon + beta * kl` for a pass made by `run`.
    /// Returns `(d encoder input, d reconstruction target, ten parameter
    /// gradients)`.
    fn backward(
        &self,
        target: &Matrix,
        pass: &PairPass,
        eps: &Matrix,
        alpha: f64,
        beta: f64,
    ) -> Result<(Matrix, Matrix, Vec<Matrix>)> {
        let g_recon = reconstruction_grad(target, &pass.recon)?.scaled(alpha);
        let d_target = g_recon.scaled(-1.0);
        let (dz, dec_grads) = self.backward_decoder(&g_recon)?;
        let (kl_mu, kl_lv) = kl_grads(&pass.dist);
        let mut d_mu = dz.clone();
        d_mu.add_assign(&kl_mu.scaled(beta))?;
        let half_std = pass.dist.std().scaled(0.5);
        let mut d_lv = dz.zip_map(eps, |g, e| g * e)?.zip_map(&half_std, |a, s| a * s)?;
        d_lv.add_assign(&kl_lv.scaled(beta))?;
        let (d_input, enc_grads) = self.backward_encoder(&d_mu, &d_lv)?;
        let mut grads: Vec<Matrix> = enc_grads.into();
        grads.extend(dec_grads);
        Ok((d_input, d_target, grads))
    }
}

/// Which block of a combined row the encoder sees during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputMask {
    #[default]
    Full,
    DropImage,
    DropSemantic,
}

/// Zeroes the masked block of each row; `split` is the image width.
fn apply_mask(m: &Matrix, masks: &[InputMask], split: usize) -> Matrix {
    let mut out = m.clone();
    for (r, mask) in masks.iter().enumerate() {
        let row = out.row_mut(r);
        match mask {
            InputMask::Full => {}
            InputMask::DropImage => row[..split].fill(0.0),
            InputMask::DropSemantic => row[split..].fill(0.0),
        }
    }
    out
}

struct PairPass {
    recon_loss: f64,
    kl: f64,
    dist: LatentDistribution,
    recon: Matrix,
}

/// Deep embedding network plus one encoder–decoder pair over the
/// concatenated embedding, or two modality-specific pairs under
/// [`Variant::Baseline2`].
#[derive(Debug, Clone, PartialEq)]
pub struct MvaeModel {
    config: ModelConfig,
    embed: DeepEmbeddingNet,
    pairs: Vec<VaePair>,
}

impl MvaeModel {
    /// Fresh model with seeded scaled-uniform initialization.
    /// `config.d_img` must already match the data.
    pub fn new(config: &ModelConfig, d_attr: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::for_stream(config.seed, Stream::Init);
        let embed = DeepEmbeddingNet::init(
            d_attr,
            config.embed_hidden,
            config.d_attr_embed,
            config.embed_final_relu,
            &mut rng,
        );
        let pairs = match config.variant {
            Variant::Mvae | Variant::Baseline1 => vec![VaePair::init(
                config.combined_width(),
                config.vae_hidden,
                config.latent,
                &mut rng,
            )],
            Variant::Baseline2 => vec![
                VaePair::init(config.d_img, config.vae_hidden, config.latent, &mut rng),
                VaePair::init(config.d_attr_embed, config.vae_hidden, config.latent, &mut rng),
            ],
        };
        Ok(MvaeModel {
            config: config.clone(),
            embed,
            pairs,
        })
    }

    /// Reassembles a model from parameter blocks in [`MvaeModel::block_names`]
    /// order.
    pub fn from_blocks(config: &ModelConfig, blocks: Vec<Matrix>) -> Result<Self> {
        let expected = Self::block_count(config.variant);
        if blocks.len() != expected {
            return Err(Error::State(format!(
                "{} model needs {expected} parameter blocks, got {}",
                config.variant,
                blocks.len()
            )));
        }
        let mut it = blocks.into_iter();
        let mut take = |n: usize| -> Vec<Matrix> { it.by_ref().take(n).collect() };
        let e = take(4);
        let mut e = e.into_iter();
        let l1 = AffineLayer::new(e.next().unwrap(), e.next().unwrap())?;
        let l2 = AffineLayer::new(e.next().unwrap(), e.next().unwrap())?;
        let embed = DeepEmbeddingNet::new(l1, l2, config.embed_final_relu)?;
        let n_pairs = if config.variant == Variant::Baseline2 { 2 } else { 1 };
        let pairs = (0..n_pairs)
            .map(|_| VaePair::from_blocks(take(10)))
            .collect::<Result<Vec<_>>>()?;
        let model = MvaeModel {
            config: config.clone(),
            embed,
            pairs,
        };
        model.check_dims()?;
        Ok(model)
    }

    fn check_dims(&self) -> Result<()> {
        let c = &self.config;
        let bad = |what: &str| Err(Error::State(format!("parameter shapes disagree with config: {what}")));
        if self.embed.output_dim() != c.d_attr_embed {
            return bad("d_attr_embed");
        }
        match c.variant {
            Variant::Baseline2 => {
                if self.pairs[0].input_dim() != c.d_img || self.pairs[1].input_dim() != c.d_attr_embed {
                    return bad("encoder widths");
                }
            }
            _ => {
                if self.pairs[0].input_dim() != c.combined_width() {
                    return bad("combined width");
                }
            }
        }
        if self.pairs.iter().any(|p| p.latent_dim() != c.latent) {
            return bad("latent");
        }
        Ok(())
    }

    pub fn block_count(variant: Variant) -> usize {
        match variant {
            Variant::Baseline2 => 24,
            _ => 14,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn d_img(&self) -> usize {
        self.config.d_img
    }

    pub fn d_attr(&self) -> usize {
        self.embed.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent
    }

    /// Width of decoded features: the combined embedding width.
    pub fn combined_width(&self) -> usize {
        self.config.combined_width()
    }

    pub fn embed_net(&self) -> &DeepEmbeddingNet {
        &self.embed
    }

    pub fn embed_net_mut(&mut self) -> &mut DeepEmbeddingNet {
        &mut self.embed
    }

    pub fn pairs(&self) -> &[VaePair] {
        &self.pairs
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.config.alpha,
            gamma: self.config.effective_gamma(),
            beta: self.config.beta,
        }
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut names = DeepEmbeddingNet::block_names("embed.");
        let prefixes: &[&str] = match self.config.variant {
            Variant::Baseline2 => &["image.", "semantic."],
            _ => &[""],
        };
        for p in prefixes {
            names.extend(PAIR_BLOCKS.iter().map(|b| format!("{p}{b}")));
        }
        names
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut v = self.embed.params();
        for p in &self.pairs {
            v.extend(p.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.embed.params_mut();
        for p in &mut self.pairs {
            v.extend(p.params_mut());
        }
        v
    }

    /// Encodes a combined `[x, sem]` batch with the single pair.
    pub fn encode(&self, combined: &Matrix) -> Result<LatentDistribution> {
        match self.config.variant {
            Variant::Baseline2 => Err(Error::State(
                "baseline2 has no combined encoder; use latent_from_image/semantic".into(),
            )),
            _ => self.pairs[0].encode_infer(combined),
        }
    }

    /// Decodes latent codes to the combined width. Under baseline2 this is
    /// the concatenation of both decoders' outputs.
    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        match self.config.variant {
            Variant::Baseline2 => {
                build_combined(&self.pairs[0].decode_infer(z)?, &self.pairs[1].decode_infer(z)?)
            }
            _ => self.pairs[0].decode_infer(z),
        }
    }

    /// Semantic embeddings for a batch of labels, without caching.
    pub fn semantic_for_labels(&self, attributes: &Matrix, labels: &[u32]) -> Result<Matrix> {
        let idx: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        self.embed.infer(&attributes.select_rows(&idx)?)
    }

    /// Posterior from image features alone, the semantic slot zero-masked.
    pub fn latent_from_image(&self, x: &Matrix) -> Result<LatentDistribution> {
        match self.config.variant {
            Variant::Baseline2 => self.pairs[0].encode_infer(x),
            _ => {
                let masked = build_combined(x, &Matrix::zeros(x.rows(), self.config.d_attr_embed))?;
                self.pairs[0].encode_infer(&masked)
            }
        }
    }

    /// Posterior from semantic embeddings alone, the image slot zero-masked.
    pub fn latent_from_semantic(&self, sem: &Matrix) -> Result<LatentDistribution> {
        match self.config.variant {
            Variant::Baseline2 => self.pairs[1].encode_infer(sem),
            _ => {
                let masked = build_combined(&Matrix::zeros(sem.rows(), self.config.d_img), sem)?;
                self.pairs[0].encode_infer(&masked)
            }
        }
    }

    /// Posterior from both modalities (the training-time input).
    pub fn latent_from_both(&self, x: &Matrix, sem: &Matrix) -> Result<LatentDistribution> {
        match self.config.variant {
            Variant::Baseline2 => self.pairs[0].encode_infer(x),
            _ => self.pairs[0].encode_infer(&build_combined(x, sem)?),
        }
    }

    /// Number of noise matrices a training step consumes.
    pub fn noise_blocks(&self) -> usize {
        self.pairs.len()
    }

    /// Loss of one batch and the gradient of its total with respect to every
    /// parameter block, in [`block_names`](Self::block_names) order.
    ///
    /// `eps` holds one `batch × latent` standard-normal matrix per
    /// encoder–decoder pair.
    pub fn loss_and_grads(
        &mut self,
        x: &Matrix,
        attributes: &Matrix,
        labels: &[u32],
        eps: &[Matrix],
    ) -> Result<(LossComponents, Vec<Matrix>)> {
        self.loss_and_grads_masked(x, attributes, labels, eps, &[])
    }

    /// As [`loss_and_grads`](Self::loss_and_grads), with one [`InputMask`]
    /// per row applied to the encoder input of the combined pair. An empty
    /// slice masks nothing; baseline2 ignores masks.
    pub fn loss_and_grads_masked(
        &mut self,
        x: &Matrix,
        attributes: &Matrix,
        labels: &[u32],
        eps: &[Matrix],
        masks: &[InputMask],
    ) -> Result<(LossComponents, Vec<Matrix>)> {
        if !masks.is_empty() && masks.len() != x.rows() {
            return Err(Error::shape(
                "loss_and_grads_masked",
                format!("{} image rows", x.rows()),
                format!("{} masks", masks.len()),
            ));
        }
        if x.cols() != self.config.d_img {
            return Err(Error::shape(
                "loss_and_grads",
                format!("image batch {}", x.shape_str()),
                format!("d_img {}", self.config.d_img),
            ));
        }
        if x.rows() != labels.len() {
            return Err(Error::shape(
                "loss_and_grads",
                format!("{} image rows", x.rows()),
                format!("{} labels", labels.len()),
            ));
        }
        if eps.len() != self.pairs.len() {
            return Err(Error::State(format!(
                "expected {} noise blocks, got {}",
                self.pairs.len(),
                eps.len()
            )));
        }
        let w = self.weights();
        let mode = self.config.wasserstein_mode;
        let sem = self.embed.embed_rows_for_labels(attributes, labels)?;

        let wass = if w.gamma != 0.0 {
            Some(wasserstein2_with_grad(x, &sem, mode)?)
        } else {
            None
        };
        let wass_value = wass.as_ref().map_or(0.0, |g| g.value);

        let (components, mut d_sem, pair_grads) = match self.config.variant {
            Variant::Baseline2 => {
                let pass_i = self.pairs[0].run(x, x, &eps[0])?;
                let pass_s = self.pairs[1].run(&sem, &sem, &eps[1])?;
                let c = LossComponents::combine(
                    &w,
                    pass_i.recon_loss + pass_s.recon_loss,
                    pass_i.kl + pass_s.kl,
                    wass_value,
                );
                let (_, _, gi) = self.pairs[0].backward(x, &pass_i, &eps[0], w.alpha, w.beta)?;
                let (d_in, d_tgt, gs) =
                    self.pairs[1].backward(&sem, &pass_s, &eps[1], w.alpha, w.beta)?;
                let mut d_sem = d_in;
                d_sem.add_assign(&d_tgt)?;
                let mut grads = gi;
                grads.extend(gs);
                (c, d_sem, grads)
            }
            _ => {
                let combined = build_combined(x, &sem)?;
                let input = apply_mask(&combined, masks, self.config.d_img);
                let pass = self.pairs[0].run(&input, &combined, &eps[0])?;
                let c = LossComponents::combine(&w, pass.recon_loss, pass.kl, wass_value);
                let (d_in, d_tgt, grads) =
                    self.pairs[0].backward(&combined, &pass, &eps[0], w.alpha, w.beta)?;
                let mut d_comb = apply_mask(&d_in, masks, self.config.d_img);
                d_comb.add_assign(&d_tgt)?;
                let (_, d_sem) = d_comb.split_cols(self.config.d_img)?;
                (c, d_sem, grads)
            }
        };
        if let Some(g) = wass {
            d_sem.add_assign(&g.grad_b.scaled(w.gamma))?;
        }
        let embed_grads = self.embed.backward(&d_sem)?;
        let mut grads = embed_grads.params;
        grads.extend(pair_grads);
        if !components.total.is_finite() {
            return Err(Error::Numeric("batch loss".into()));
        }
        Ok((components, grads))
    }
}
