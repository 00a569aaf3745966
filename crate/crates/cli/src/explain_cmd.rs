use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::json;

use forgelens::classifier::{Checkpoint, Model};
use forgelens::dataset::image_to_chw;
use forgelens::gradcam::{explain, localization_score, render_overlay, ClassId, LocalizationScore};
use forgelens::raster::{resize_bilinear, save_gray_png, BinaryMask, ImageRGB};
use forgelens::Tensor;

use crate::run_config::create_out_dir;
use crate::train_cmd::load_manifest;
use crate::{ExplainArgs, RunConfig, SUMMARY_FILE};

struct Item {
    stem: String,
    image: PathBuf,
    mask: Option<PathBuf>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    image: &'a Path,
    mask: Option<&'a Path>,
    predicted_label: u8,
    logit: f32,
    class_explained: ClassId,
    localization_score: Option<LocalizationScore>,
    degenerate_flag: bool,
}

#[derive(Serialize)]
struct Summary {
    explained: usize,
    skipped: usize,
    scored: usize,
    mean_concentration_ratio: Option<f64>,
}

/// Masks are brought to the model resolution with the image resampler and
/// re-binarized at one half.
fn fit_mask(mask: BinaryMask, size: usize) -> BinaryMask {
    if mask.dims() == (size, size) {
        return mask;
    }
    let (w, h) = mask.dims();
    let plane = resize_bilinear(&mask.as_plane(), w, h, size, size);
    BinaryMask::from_fn(size, size, |x, y| plane[y * size + x] >= 0.5)
}

fn items(args: &ExplainArgs) -> anyhow::Result<Vec<Item>> {
    if let Some(mpath) = &args.manifest {
        let m = load_manifest(mpath)?;
        return Ok(m
            .ids(args.split)
            .into_iter()
            .map(|id| {
                let rel = Path::new(&m.records[id].image_path).with_extension("");
                let stem: String = rel
                    .to_string_lossy()
                    .chars()
                    .map(|c| if matches!(c, '/' | '\\' | ':') { '_' } else { c })
                    .collect();
                Item {
                    stem: stem.trim_start_matches('_').to_owned(),
                    image: m.image_path(id),
                    mask: m.mask_path(id),
                }
            })
            .collect());
    }
    if args.images.is_empty() {
        bail!("nothing to explain: pass --manifest or --images");
    }
    let mut seen = HashSet::new();
    args.images
        .iter()
        .map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            if !seen.insert(stem.clone()) {
                bail!("two inputs share the file stem {stem:?}");
            }
            let mask = args.masks.as_ref().map(|d| d.join(p.file_name().unwrap_or_default()));
            Ok(Item {
                stem,
                image: p.clone(),
                mask,
            })
        })
        .collect()
}

fn explain_one(model: &Model<f32>, item: &Item, args: &ExplainArgs) -> anyhow::Result<Option<Option<LocalizationScore>>> {
    let size = model.arch.input_size;
    let img = ImageRGB::load_png(&item.image)?;
    let x = Tensor::from_vec([1, 3, size, size], image_to_chw(&img, size))?;
    let logit = model.predict(&x)?[0];
    if logit <= 0.0 && !args.force {
        println!("skip {}: predicted authentic (logit {logit})", item.image.display());
        return Ok(None);
    }
    let e = explain(model, &x, ClassId::Forged)?;
    let score = match &item.mask {
        Some(p) => {
            let mask = fit_mask(BinaryMask::load_png(p)?, size);
            Some(localization_score(&e.heatmap, &mask, args.top_fraction)?)
        }
        None => None,
    };
    let base = args.out.join(&item.stem);
    let with = |suffix: &str| {
        let mut s = base.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    save_gray_png(&with(".cam.png"), size, size, &e.heatmap.to_gray())?;
    render_overlay(&img.resize(size, size), &e.heatmap, args.blend)?.save_png(&with(".overlay.png"))?;
    let sidecar = Sidecar {
        image: &item.image,
        mask: item.mask.as_deref(),
        predicted_label: (logit > 0.0) as u8,
        logit,
        class_explained: ClassId::Forged,
        localization_score: score,
        degenerate_flag: e.heatmap.degenerate,
    };
    let path = with(".json");
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    println!(
        "explained {}: logit {logit}{}",
        item.image.display(),
        score.map(|s| format!(", concentration_ratio {}", s.concentration_ratio)).unwrap_or_default()
    );
    Ok(Some(score))
}

pub fn run<'a>(args: &ExplainArgs, rc: impl FnOnce(serde_json::Value) -> RunConfig<'a>) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&args.blend) {
        bail!("--blend must lie in [0, 1]");
    }
    if !(args.top_fraction > 0.0 && args.top_fraction <= 1.0) {
        bail!("--top-fraction must lie in (0, 1]");
    }
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let items = items(args)?;
    create_out_dir(&args.out)?;
    rc(json!({ "arch": ckpt.model.arch, "class_explained": ClassId::Forged })).write(&args.out)?;
    let (mut explained, mut skipped) = (0, 0);
    let mut ratios = Vec::new();
    for item in &items {
        match explain_one(&ckpt.model, item, args).with_context(|| format!("explaining {}", item.image.display()))? {
            Some(score) => {
                explained += 1;
                ratios.extend(score.map(|s| s.concentration_ratio));
            }
            None => skipped += 1,
        }
    }
    let mean = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
    let summary = Summary {
        explained,
        skipped,
        scored: ratios.len(),
        mean_concentration_ratio: mean,
    };
    let path = args.out.join(SUMMARY_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    println!("explained: {explained}, skipped: {skipped}");
    match mean {
        Some(m) => println!("mean concentration_ratio: {m} over {} masked images", ratios.len()),
        None => println!("mean concentration_ratio: n/a (no masks)"),
    }
    Ok(())
}
