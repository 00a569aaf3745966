use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::json;

use forgelens::classifier::{train, ArchConfig, Checkpoint, EpochMetrics, TrainConfig};
use forgelens::dataset::DatasetManifest;
use forgelens::tensor::RmsPropConfig;

use crate::run_config::create_out_dir;
use crate::{RunConfig, TrainArgs, CHECKPOINT_FILE, COMBINED_MANIFEST_FILE, METRICS_FILE};

/// Loads a manifest through its canonical path, so relative image paths
/// stay valid after merging.
pub(crate) fn load_manifest(path: &Path) -> anyhow::Result<DatasetManifest> {
    let full = std::fs::canonicalize(path).with_context(|| format!("manifest {}", path.display()))?;
    Ok(DatasetManifest::load(&full)?)
}

#[derive(Serialize)]
struct MetricsRow {
    epoch: usize,
    train_loss: f64,
    val_acc: f64,
}

pub fn run<'a>(args: &TrainArgs, rc: impl FnOnce(serde_json::Value) -> RunConfig<'a>) -> anyhow::Result<()> {
    let mut cfg = TrainConfig::new(args.scenario, ArchConfig::standard(args.input_size));
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch_size;
    cfg.optimizer = RmsPropConfig {
        learning_rate: args.lr,
        rho: args.rho,
        epsilon: args.epsilon,
    };
    cfg.init_seed = args.seed;
    cfg.shuffle_seed = args.shuffle_seed;
    cfg.manifests = args.manifests.iter().map(|p| p.to_string_lossy().into_owned()).collect();
    cfg.validate()?;
    cfg.arch.validate()?;

    create_out_dir(&args.out)?;
    let parts = args.manifests.iter().map(|p| load_manifest(p)).collect::<anyhow::Result<Vec<_>>>()?;
    let mut combined_path: Option<PathBuf> = None;
    let manifest = if parts.len() == 1 {
        parts.into_iter().next().expect("one manifest")
    } else {
        let merged = DatasetManifest::combine(&parts, args.split_seed)?;
        let path = args.out.join(COMBINED_MANIFEST_FILE);
        merged.clone().relative_to(&std::fs::canonicalize(&args.out)?).save(&path)?;
        combined_path = Some(path);
        merged
    };
    rc(json!({ "train_config": cfg, "combined_manifest": combined_path, "split_seed": args.split_seed })).write(&args.out)?;

    let metrics_path = args.out.join(METRICS_FILE);
    let mut csv = csv::Writer::from_path(&metrics_path).with_context(|| format!("writing {}", metrics_path.display()))?;
    let mut csv_err: Option<anyhow::Error> = None;
    let trained = train(&cfg, &manifest, |m: &EpochMetrics| {
        println!("epoch {}: train_loss {} val_acc {}", m.epoch, m.train_loss, m.val_acc);
        let row = MetricsRow {
            epoch: m.epoch,
            train_loss: m.train_loss,
            val_acc: m.val_acc,
        };
        if let Err(e) = csv.serialize(row).and_then(|_| csv.flush().map_err(Into::into)) {
            csv_err.get_or_insert(e.into());
        }
    })?;
    if let Some(e) = csv_err {
        return Err(e.context(format!("writing {}", metrics_path.display())));
    }
    let ckpt_path = args.out.join(CHECKPOINT_FILE);
    Checkpoint::from_trained(trained, &cfg).save(&ckpt_path)?;
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}
