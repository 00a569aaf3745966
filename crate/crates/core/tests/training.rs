//! Training-level checks on small procedural datasets.

use std::path::Path;

use forgelens::classifier::{evaluate, train, ArchConfig, Model, Scenario, TrainConfig};
use forgelens::dataset::{DatasetManifest, ManifestRecord, Split};
use forgelens::synth::{make_procedural_image, synth_copy_move, ForgeryKind, ProceduralConfig, SynthConfig};

const SIZE: usize = 32;

/// Writes `authentic` + `forged` copy-move images into `dir`; the first
/// `train_per_label` of each label go to the training split.
fn dataset(dir: &Path, per_label: usize, train_per_label: usize, seed: u64) -> DatasetManifest {
    let pcfg = ProceduralConfig {
        width: SIZE,
        height: SIZE,
        ..ProceduralConfig::default()
    };
    let split = |i: usize| if i < train_per_label { Split::Train } else { Split::Val };
    let mut records = Vec::new();
    for i in 0..per_label {
        let (img, _) = make_procedural_image(seed * 10_000 + i as u64, &pcfg);
        let path = format!("a{i}.png");
        img.save_png(&dir.join(&path)).unwrap();
        records.push(ManifestRecord {
            image_path: path,
            label: 0,
            forgery_kind: ForgeryKind::None,
            mask_path: None,
            split: split(i),
        });
    }
    let mut c = 0u64;
    let mut forged = 0;
    while forged < per_label {
        let (img, masks) = make_procedural_image(seed * 10_000 + 5_000 + c, &pcfg);
        c += 1;
        let Ok(rec) = synth_copy_move(&img, &masks, c, &SynthConfig::easy()) else {
            continue;
        };
        let (path, mask) = (format!("f{forged}.png"), format!("m{forged}.png"));
        rec.forged_image.save_png(&dir.join(&path)).unwrap();
        rec.truth_mask.save_png(&dir.join(&mask)).unwrap();
        records.push(ManifestRecord {
            image_path: path,
            label: 1,
            forgery_kind: ForgeryKind::CopyMove,
            mask_path: Some(mask),
            split: split(forged),
        });
        forged += 1;
    }
    DatasetManifest {
        records,
        split_seed: seed,
        root: dir.to_path_buf(),
    }
}

#[test]
fn memorizes_eight_images() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 6, 4, 1);
    assert_eq!(manifest.ids(Split::Train).len(), 8);
    let mut cfg = TrainConfig::new(Scenario::Model2CopyMove, ArchConfig::standard(SIZE));
    cfg.epochs = 200;
    cfg.batch_size = 8;
    let trained = train(&cfg, &manifest, |_| {}).unwrap();
    let last = trained.history.last().unwrap().train_loss;
    assert!(last < 0.01, "final train loss {last}");
    let report = evaluate(&trained.model, &manifest, Split::Train).unwrap();
    assert_eq!(report.accuracy, 1.0);
}

#[test]
fn untrained_models_sit_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 40, 0, 2);
    for seed in 0..20 {
        let model = Model::<f32>::init(&ArchConfig::standard(SIZE), seed).unwrap();
        let acc = evaluate(&model, &manifest, Split::Val).unwrap().accuracy;
        assert!((0.35..=0.65).contains(&acc), "seed {seed}: accuracy {acc}");
    }
}
