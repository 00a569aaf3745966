use serde::{Deserialize, Serialize};

use super::arch::ArchConfig;
use super::model::Model;
use crate::dataset::{epoch_iterator, load_batch, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::synth::ForgeryKind;
use crate::tensor::{bce_with_logit, BnMode, RmsProp, RmsPropConfig, Tensor4};

/// The three training scenarios: inpainting only, copy-move only, and both
/// kinds in one joint split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "model1_inpaint")]
    Model1Inpaint,
    #[serde(rename = "model2_copymove")]
    Model2CopyMove,
    #[serde(rename = "model3_combined")]
    Model3Combined,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Self::Model1Inpaint, Self::Model2CopyMove, Self::Model3Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Model1Inpaint => "model1_inpaint",
            Self::Model2CopyMove => "model2_copymove",
            Self::Model3Combined => "model3_combined",
        }
    }

    /// Forgery kinds a manifest for this scenario may contain.
    pub fn allows(self, kind: ForgeryKind) -> bool {
        match (self, kind) {
            (_, ForgeryKind::None) | (Self::Model3Combined, _) => true,
            (Self::Model1Inpaint, k) => k == ForgeryKind::Inpaint,
            (Self::Model2CopyMove, k) => k == ForgeryKind::CopyMove,
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub scenario: Scenario,
    pub arch: ArchConfig,
    /// Where the training data came from; informational.
    #[serde(default)]
    pub manifests: Vec<String>,
}

impl TrainConfig {
    pub fn new(scenario: Scenario, arch: ArchConfig) -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            optimizer: RmsPropConfig::default(),
            init_seed: 1,
            shuffle_seed: 2,
            scenario,
            arch,
            manifests: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be at least 2 for batch normalization".into()));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && 0.0 < o.rho && o.rho < 1.0 && o.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch.
    pub train_loss: f64,
    pub val_acc: f64,
}

/// A split decoded once into memory.
#[derive(Clone, Debug)]
pub struct Preloaded {
    pub images: Tensor4<f32>,
    pub labels: Vec<f32>,
    pub record_ids: Vec<usize>,
}

impl Preloaded {
    pub fn load(manifest: &DatasetManifest, split: Split, size: usize) -> Result<Self> {
        let ids = manifest.ids(split);
        if ids.is_empty() {
            return Err(Error::Manifest(format!("the {split:?} split is empty")));
        }
        let batch = load_batch(manifest, &ids, size)?;
        Ok(Self {
            images: batch.images,
            labels: batch.labels,
            record_ids: ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Gathers rows (positions within this split) into a batch.
    pub fn gather(&self, rows: &[usize]) -> Result<(Tensor4<f32>, Vec<f32>)> {
        let [_, c, h, w] = self.images.shape();
        let len = c * h * w;
        let mut data = Vec::with_capacity(rows.len() * len);
        for &r in rows {
            data.extend_from_slice(&self.images.data()[r * len..(r + 1) * len]);
        }
        Ok((Tensor4::from_vec([rows.len(), c, h, w], data)?, rows.iter().map(|&r| self.labels[r]).collect()))
    }
}

/// Model, optimizer state and history after training.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model<f32>,
    pub optimizer: RmsProp<f32>,
    pub history: Vec<EpochMetrics>,
}

/// Infer-mode logits for every preloaded sample, in row order.
pub fn predict_all(model: &Model<f32>, data: &Preloaded, chunk: usize) -> Result<Vec<f32>> {
    let mut logits = Vec::with_capacity(data.len());
    let rows: Vec<usize> = (0..data.len()).collect();
    for part in rows.chunks(chunk.max(1)) {
        let (x, _) = data.gather(part)?;
        logits.extend(model.predict(&x)?);
    }
    Ok(logits)
}

fn accuracy(logits: &[f32], labels: &[f32]) -> f64 {
    let hits = logits.iter().zip(labels).filter(|(&z, &y)| (z > 0.0) == (y > 0.5)).count();
    hits as f64 / labels.len() as f64
}

/// Checks that the manifest fits the scenario and has both splits.
pub fn check_manifest(scenario: Scenario, manifest: &DatasetManifest) -> Result<()> {
    if let Some(r) = manifest.records.iter().find(|r| !scenario.allows(r.forgery_kind)) {
        return Err(Error::Manifest(format!(
            "scenario {scenario} does not accept {} forgeries ({})",
            r.forgery_kind, r.image_path
        )));
    }
    for split in [Split::Train, Split::Val] {
        if manifest.ids(split).is_empty() {
            return Err(Error::Manifest(format!("the {split:?} split is empty")));
        }
    }
    Ok(())
}

/// Trains from scratch: per epoch, shuffle, then for every batch a train-mode
/// forward, BCE, full backward and an RMSProp step on every parameter;
/// afterwards record mean train loss and validation accuracy. Deterministic
/// for fixed config and manifest.
pub fn train(cfg: &TrainConfig, manifest: &DatasetManifest, on_epoch: impl FnMut(&EpochMetrics)) -> Result<Trained> {
    cfg.validate()?;
    cfg.arch.validate()?;
    check_manifest(cfg.scenario, manifest)?;
    let size = cfg.arch.input_size;
    let train_set = Preloaded::load(manifest, Split::Train, size)?;
    let val_set = Preloaded::load(manifest, Split::Val, size)?;
    let model = Model::init(&cfg.arch, cfg.init_seed)?;
    let optimizer = RmsProp::new(cfg.optimizer, model.params().iter().map(|p| p.len()));
    let trained = Trained {
        model,
        optimizer,
        history: Vec::new(),
    };
    train_preloaded(cfg, manifest, &train_set, &val_set, trained, on_epoch)
}

/// Continues training `state` on already decoded splits.
pub fn train_preloaded(
    cfg: &TrainConfig,
    manifest: &DatasetManifest,
    train_set: &Preloaded,
    val_set: &Preloaded,
    mut state: Trained,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Trained> {
    cfg.validate()?;
    // Record id → row within the preloaded training split.
    let mut row_of = vec![usize::MAX; manifest.records.len()];
    for (row, &id) in train_set.record_ids.iter().enumerate() {
        row_of[id] = row;
    }
    let first = state.history.len();
    for epoch in first..first + cfg.epochs {
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        for (b, ids) in epoch_iterator(manifest, Split::Train, cfg.batch_size, cfg.shuffle_seed, epoch)?
            .into_iter()
            .enumerate()
        {
            let rows: Vec<usize> = ids.iter().map(|&id| row_of[id]).collect();
            if rows.contains(&usize::MAX) {
                return Err(Error::Manifest("training split changed after preloading".into()));
            }
            let (x, y) = train_set.gather(&rows)?;
            let cache = state.model.forward(&x, BnMode::Train)?;
            let loss = bce_with_logit(&cache.logits, &y)?;
            if !loss.value.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch: epoch + 1,
                    batch: b + 1,
                });
            }
            let grads = state.model.backward(&cache, &loss.grad_wrt_logit, false)?;
            state.optimizer.step(state.model.params_mut(), grads.slices())?;
            loss_sum += loss.value as f64 * rows.len() as f64;
            seen += rows.len();
        }
        let val_logits = predict_all(&state.model, val_set, 64)?;
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / seen as f64,
            val_acc: accuracy(&val_logits, &val_set.labels),
        };
        on_epoch(&m);
        state.history.push(m);
    }
    Ok(state)
}
