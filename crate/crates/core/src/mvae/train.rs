use crate::dataio::FeatureDataset;
use crate::error::{Error, Result};
use crate::mvae::{InputMask, LossComponents, MvaeModel};
use crate::numcore::{Matrix, Optimizer, SeededRng, Stream};

/// A model together with its optimizer state and random streams.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: MvaeModel,
    optimizer: Optimizer,
    shuffle_rng: SeededRng,
    noise_rng: SeededRng,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(model: MvaeModel) -> Self {
        let cfg = model.config();
        let optimizer = Optimizer::new(cfg.optimizer, &model.params(), cfg.lr);
        let shuffle_rng = SeededRng::for_stream(cfg.seed, Stream::Shuffle);
        let noise_rng = SeededRng::for_stream(cfg.seed, Stream::Noise);
        Trainer {
            model,
            optimizer,
            shuffle_rng,
            noise_rng,
            epochs_done: 0,
        }
    }

    pub fn model(&self) -> &MvaeModel {
        &self.model
    }

    pub fn into_model(self) -> MvaeModel {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// Per-row encoder masks for one batch; none unless `modality_dropout`
    /// is positive, so the noise stream is untouched by default.
    fn draw_masks(&mut self, rows: usize) -> Vec<InputMask> {
        let p = self.model.config().modality_dropout;
        if p <= 0.0 {
            return Vec::new();
        }
        (0..rows)
            .map(|_| {
                let u = self.noise_rng.uniform(0.0, 1.0);
                if u < 0.5 * p {
                    InputMask::DropImage
                } else if u < p {
                    InputMask::DropSemantic
                } else {
                    InputMask::Full
                }
            })
            .collect()
    }

    /// One shuffled pass over `train_seen`, returning the mean of the
    /// per-batch loss components.
    pub fn train_epoch(&mut self, ds: &FeatureDataset) -> Result<LossComponents> {
        if ds.d_img() != self.model.d_img() || ds.d_attr() != self.model.d_attr() {
            return Err(Error::Dimension(format!(
                "model expects d_img={} d_attr={}, dataset has d_img={} d_attr={}",
                self.model.d_img(),
                self.model.d_attr(),
                ds.d_img(),
                ds.d_attr()
            )));
        }
        let mut order = ds.splits().train_seen.clone();
        if order.is_empty() {
            return Err(Error::Validation("train_seen split is empty".into()));
        }
        self.shuffle_rng.shuffle(&mut order);
        let names = self.model.block_names();
        let latent = self.model.latent_dim();
        let mut sum = LossComponents::default();
        let mut batches = 0usize;
        for (b, idx) in order.chunks(self.model.config().batch).enumerate() {
            let x = ds.features().select_rows(idx)?;
            let labels = ds.labels_at(idx);
            let eps: Vec<Matrix> = (0..self.model.noise_blocks())
                .map(|_| self.noise_rng.gaussian_matrix(idx.len(), latent))
                .collect();
            let masks = self.draw_masks(idx.len());
            let epoch = self.epochs_done + 1;
            let locate = |e: Error| match e {
                Error::Numeric(what) => Error::Numeric(format!("{what} at epoch {epoch} batch {b}")),
                other => other,
            };
            let (c, grads) = self
                .model
                .loss_and_grads_masked(&x, ds.attributes(), &labels, &eps, &masks)
                .map_err(locate)?;
            self.optimizer
                .step(self.model.params_mut(), &grads, &names)
                .map_err(locate)?;
            sum.total += c.total;
            sum.recon += c.recon;
            sum.kl += c.kl;
            sum.wass += c.wass;
            batches += 1;
        }
        self.epochs_done += 1;
        let n = batches as f64;
        Ok(LossComponents {
            total: sum.total / n,
            recon: sum.recon / n,
            kl: sum.kl / n,
            wass: sum.wass / n,
        })
    }

    /// Runs `epochs` epochs, calling `on_epoch(epoch, losses)` after each
    /// (epochs count from 1). Returns every epoch's losses.
    pub fn fit(
        &mut self,
        ds: &FeatureDataset,
        epochs: usize,
        mut on_epoch: impl FnMut(usize, &LossComponents),
    ) -> Result<Vec<LossComponents>> {
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let c = self.train_epoch(ds)?;
            on_epoch(self.epochs_done, &c);
            history.push(c);
        }
        Ok(history)
    }
}

/// Builds and trains a model for `config.epochs` epochs on `ds`.
pub fn train_model(
    config: &crate::dataio::ModelConfig,
    ds: &FeatureDataset,
    on_epoch: impl FnMut(usize, &LossComponents),
) -> Result<(MvaeModel, Vec<LossComponents>)> {
    let mut cfg = config.clone();
    if cfg.d_img != ds.d_img() {
        log::warn!(
            "config d_img={} differs from dataset d_img={}; using the dataset width",
            cfg.d_img,
            ds.d_img()
        );
        cfg.d_img = ds.d_img();
    }
    let mut trainer = Trainer::new(MvaeModel::new(&cfg, ds.d_attr())?);
    let history = trainer.fit(ds, cfg.epochs, on_epoch)?;
    Ok((trainer.into_model(), history))
}

/// Mean batch loss over `train_seen` in index order without updating the
/// model, using noise from the config seed.
pub fn dataset_loss(model: &MvaeModel, ds: &FeatureDataset) -> Result<LossComponents> {
    let mut model = model.clone();
    let train = &ds.splits().train_seen;
    if train.is_empty() {
        return Err(Error::Validation("train_seen split is empty".into()));
    }
    let mut rng = SeededRng::for_stream(model.config().seed, Stream::Noise);
    let latent = model.latent_dim();
    let mut sum = LossComponents::default();
    let mut batches = 0usize;
    for idx in train.chunks(model.config().batch) {
        let x = ds.features().select_rows(idx)?;
        let eps: Vec<Matrix> = (0..model.noise_blocks())
            .map(|_| rng.gaussian_matrix(idx.len(), latent))
            .collect();
        let (c, _) = model.loss_and_grads(&x, ds.attributes(), &ds.labels_at(idx), &eps)?;
        sum.total += c.total;
        sum.recon += c.recon;
        sum.kl += c.kl;
        sum.wass += c.wass;
        batches += 1;
    }
    let n = batches as f64;
    Ok(LossComponents {
        total: sum.total / n,
        recon: sum.recon / n,
        kl: sum.kl / n,
        wass: sum.wass / n,
    })
}
