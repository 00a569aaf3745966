use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde_json::json;

use forgelens::dataset::{build_manifest, scan_png_dir, Entry, Split};
use forgelens::raster::{BinaryMask, ImageRGB};
use forgelens::rng::derive_seed;
use forgelens::synth::{make_procedural_image, synth_copy_move, synth_inpaint, ForgeryKind, ProceduralConfig, SynthConfig, SynthRecord};
use forgelens::Error;

use crate::run_config::create_out_dir;
use crate::{RunConfig, SynthArgs, MANIFEST_FILE, PROVENANCE_FILE};

const AUTHENTIC_TAG: u64 = 0xA7;
const SOURCE_TAG: u64 = 0x50;
const FORGE_TAG: u64 = 0xF0;

/// Procedural sources tried per requested forgery before giving up.
const MAX_CANDIDATES_PER_IMAGE: usize = 50;

fn synth_config(args: &SynthArgs) -> anyhow::Result<SynthConfig> {
    let cfg = match &args.synth_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None if args.easy => SynthConfig::easy(),
        None => SynthConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn forge(kind: ForgeryKind, image: &ImageRGB, masks: &[BinaryMask], seed: u64, cfg: &SynthConfig) -> forgelens::Result<SynthRecord> {
    match kind {
        ForgeryKind::CopyMove => synth_copy_move(image, masks, seed, cfg),
        ForgeryKind::Inpaint => synth_inpaint(image, masks, seed, cfg),
        ForgeryKind::None => Err(Error::InvalidArgument("cannot synthesize an authentic forgery".into())),
    }
}

/// Accumulates output files and manifest entries.
struct Writer<'a> {
    out: &'a Path,
    entries: Vec<Entry>,
    provenance: Vec<String>,
    authentic: usize,
    forged: usize,
}

impl Writer<'_> {
    fn authentic(&mut self, image: &ImageRGB) -> anyhow::Result<()> {
        let rel = format!("authentic/{:05}.png", self.authentic);
        image.save_png(&self.out.join(&rel))?;
        self.entries.push(Entry::authentic(rel));
        self.authentic += 1;
        Ok(())
    }

    fn forged(&mut self, mut rec: SynthRecord, source_id: String) -> anyhow::Result<()> {
        let rel = format!("forged/{:05}.png", self.forged);
        let mask = format!("masks/{:05}.png", self.forged);
        rec.forged_image.save_png(&self.out.join(&rel))?;
        rec.truth_mask.save_png(&self.out.join(&mask))?;
        rec.provenance.source_id = source_id;
        rec.provenance.mask_path = Some(mask.clone());
        self.provenance.push(serde_json::to_string(&json!({ "image_path": rel, "provenance": rec.provenance }))?);
        self.entries.push(Entry::forged(rel, rec.forgery_kind, mask));
        self.forged += 1;
        Ok(())
    }
}

/// Masks for `stem` in a directory: `stem.png` or `stem_*.png`.
fn masks_for(all: &[PathBuf], stem: &str) -> anyhow::Result<Vec<BinaryMask>> {
    let prefix = format!("{stem}_");
    all.iter()
        .filter(|p| p.file_stem().and_then(|s| s.to_str()).is_some_and(|s| s == stem || s.starts_with(&prefix)))
        .map(|p| Ok(BinaryMask::load_png(p)?))
        .collect()
}

pub fn run<'a>(args: &SynthArgs, rc: impl FnOnce(serde_json::Value) -> RunConfig<'a>) -> anyhow::Result<()> {
    let cfg = synth_config(args)?;
    if args.count == 0 {
        bail!("--count must be at least 1");
    }
    create_out_dir(&args.out)?;
    let mut w = Writer {
        out: &args.out,
        entries: Vec::new(),
        provenance: Vec::new(),
        authentic: 0,
        forged: 0,
    };
    let mut skipped = 0usize;
    let source;
    if args.procedural {
        if args.size < 16 {
            bail!("--size must be at least 16");
        }
        let pcfg = ProceduralConfig {
            width: args.size,
            height: args.size,
            ..ProceduralConfig::default()
        };
        for i in 0..args.count {
            let (img, _) = make_procedural_image(derive_seed(args.seed, i as u64, AUTHENTIC_TAG), &pcfg);
            w.authentic(&img)?;
        }
        let mut c = 0usize;
        while w.forged < args.count && c < args.count * MAX_CANDIDATES_PER_IMAGE {
            let source_seed = derive_seed(args.seed, c as u64, SOURCE_TAG);
            let (img, masks) = make_procedural_image(source_seed, &pcfg);
            match forge(args.kind, &img, &masks, derive_seed(args.seed, c as u64, FORGE_TAG), &cfg) {
                Ok(rec) => w.forged(rec, format!("procedural:{source_seed}"))?,
                Err(Error::Skipped(_)) => skipped += 1,
                Err(e) => return Err(e.into()),
            }
            c += 1;
        }
        if w.forged < args.count {
            bail!("only {} of {} forgeries after {c} procedural sources", w.forged, args.count);
        }
        source = json!({ "procedural": pcfg });
    } else if let (Some(images), Some(masks)) = (&args.images, &args.masks) {
        let sources = scan_png_dir(images)?;
        let mask_files = scan_png_dir(masks)?;
        for (i, path) in sources.iter().take(args.count).enumerate() {
            let img = ImageRGB::load_png(path)?;
            w.authentic(&img)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let m = masks_for(&mask_files, stem)?;
            match forge(args.kind, &img, &m, derive_seed(args.seed, i as u64, FORGE_TAG), &cfg) {
                Ok(rec) => w.forged(rec, path.to_string_lossy().into_owned())?,
                Err(Error::Skipped(why)) => {
                    println!("skip {}: {why}", path.display());
                    skipped += 1;
                }
                Err(Error::ShapeMismatch { .. }) => {
                    println!("skip {}: mask size differs from the image", path.display());
                    skipped += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if w.authentic == 0 {
            bail!("no PNG images in {}", images.display());
        }
        if w.forged == 0 {
            bail!("zero admissible sources: no image in {} has a usable mask in {}", images.display(), masks.display());
        }
        source = json!({ "images": images, "masks": masks });
    } else {
        bail!("choose a source: --procedural, or --images with --masks");
    }

    let manifest = build_manifest(std::mem::take(&mut w.entries), args.split_seed)?;
    manifest.save(&args.out.join(MANIFEST_FILE))?;
    let prov_path = args.out.join(PROVENANCE_FILE);
    let mut f = std::fs::File::create(&prov_path).with_context(|| format!("writing {}", prov_path.display()))?;
    for line in &w.provenance {
        writeln!(f, "{line}")?;
    }
    rc(json!({ "synth_config": cfg, "source": source, "seed": args.seed, "split_seed": args.split_seed })).write(&args.out)?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &manifest.records {
        *counts.entry(r.forgery_kind.as_str()).or_default() += 1;
    }
    for (k, n) in &counts {
        println!("{k}: {n}");
    }
    println!("total: {}", manifest.records.len());
    println!(
        "split: {} train, {} val; skipped sources: {skipped}",
        manifest.ids(Split::Train).len(),
        manifest.ids(Split::Val).len()
    );
    println!("manifest: {}", args.out.join(MANIFEST_FILE).display());
    Ok(())
}
