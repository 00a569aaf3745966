//! Forgery synthesis: copy-move and inpainting forgeries with ground-truth
//! masks, plus a procedural scene generator to feed them.

mod affine;
mod blend;
mod inpaint;
mod procedural;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageRGB};

pub use affine::{apply_affine, AffineTransform, SCALE_BOUNDS};
pub use blend::{blend_paste, feather_mask};
pub use inpaint::{inpaint_diffusion, inpaint_field, InpaintField, DEFAULT_MAX_ITERS, DEFAULT_TOL};
pub use procedural::{make_procedural_image, ProceduralConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeryKind {
    None,
    CopyMove,
    Inpaint,
}

impl ForgeryKind {
    pub const ALL: [ForgeryKind; 3] = [Self::None, Self::CopyMove, Self::Inpaint];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::CopyMove => "copy_move",
            Self::Inpaint => "inpaint",
        }
    }
}

impl std::fmt::Display for ForgeryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ForgeryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown forgery kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub rotation_deg: (f64, f64),
    pub scale: (f64, f64),
    /// Minimum centroid displacement as a fraction of the image diagonal.
    pub min_shift_fraction: f64,
    pub max_attempts: usize,
    /// Admissible truth-mask area as a fraction of the image.
    pub area_fraction: (f64, f64),
    pub alpha_interior: f64,
    pub feather_px: usize,
    /// Use this transform instead of sampling one.
    pub fixed_transform: Option<AffineTransform>,
    pub inpaint_dilation: usize,
    pub inpaint_tol: f64,
    pub inpaint_max_iters: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rotation_deg: (-30.0, 30.0),
            scale: (0.7, 1.3),
            min_shift_fraction: 0.15,
            max_attempts: 10,
            area_fraction: (0.01, 0.30),
            alpha_interior: 0.95,
            feather_px: 2,
            fixed_transform: None,
            inpaint_dilation: 2,
            inpaint_tol: DEFAULT_TOL,
            inpaint_max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

impl SynthConfig {
    /// Hard paste (α = 1, no feathering) of masks covering at least 5% of
    /// the image.
    pub fn easy() -> Self {
        Self {
            alpha_interior: 1.0,
            feather_px: 0,
            area_fraction: (0.05, 0.30),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.area_fraction;
        let ok = self.rotation_deg.0 <= self.rotation_deg.1
            && SCALE_BOUNDS.0 <= self.scale.0
            && self.scale.0 <= self.scale.1
            && self.scale.1 <= SCALE_BOUNDS.1
            && (0.0..1.0).contains(&self.min_shift_fraction)
            && self.max_attempts >= 1
            && 0.0 < lo
            && lo <= hi
            && hi < 1.0
            && (0.0..=1.0).contains(&self.alpha_interior)
            && self.inpaint_tol > 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("inconsistent synthesis config {self:?}")));
        }
        Ok(())
    }

    fn admits(&self, mask: &BinaryMask) -> bool {
        let f = mask.area_fraction();
        !mask.is_empty() && self.area_fraction.0 <= f && f <= self.area_fraction.1
    }
}

/// How a forged image was made; serialized one JSON object per record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub kind: ForgeryKind,
    pub seed: u64,
    pub transform: Option<AffineTransform>,
    pub alpha_interior: Option<f64>,
    pub mask_path: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRecord {
    pub forged_image: ImageRGB,
    /// Forged region at its destination.
    pub truth_mask: BinaryMask,
    pub forgery_kind: ForgeryKind,
    /// `source_id` and `mask_path` are left empty for the caller to fill in.
    pub provenance: Provenance,
}

/// The mask with the most foreground pixels; ties go to the lowest index.
pub fn select_largest_mask(masks: &[BinaryMask]) -> Result<(usize, &BinaryMask)> {
    let first = masks.first().ok_or_else(|| Error::InvalidArgument("no masks to choose from".into()))?;
    if let Some(m) = masks.iter().find(|m| m.dims() != first.dims()) {
        return Err(crate::error::shape_err(
            "select_largest_mask",
            format!("{:?}", first.dims()),
            format!("{:?}", m.dims()),
        ));
    }
    let mut best = (0, 0);
    for (i, m) in masks.iter().enumerate() {
        let a = m.area();
        if a > best.1 {
            best = (i, a);
        }
    }
    if best.1 == 0 {
        return Err(Error::InvalidArgument("every mask is empty".into()));
    }
    Ok((best.0, &masks[best.0]))
}

fn check_dims(image: &ImageRGB, masks: &[BinaryMask]) -> Result<()> {
    match masks.iter().find(|m| m.dims() != image.dims()) {
        Some(m) => Err(crate::error::shape_err(
            "synthesis",
            format!("masks of {:?}", image.dims()),
            format!("{:?}", m.dims()),
        )),
        None => Ok(()),
    }
}

/// Draws rotation and scale, then a translation that keeps every mask pixel
/// inside the image and moves the centroid by at least the configured
/// fraction of the diagonal. `None` when no such translation was found.
fn sample_transform(rng: &mut ChaCha8Rng, mask: &BinaryMask, cfg: &SynthConfig) -> Option<AffineTransform> {
    let (w, h) = mask.dims();
    let sample = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let mut t = AffineTransform {
        rotation_deg: sample(rng, cfg.rotation_deg),
        scale: sample(rng, cfg.scale),
        dx: 0.0,
        dy: 0.0,
    };
    let center = mask.centroid()?;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let (px, py) = t.forward(center, (x as f64, y as f64));
                (x0, y0, x1, y1) = (x0.min(px), y0.min(py), x1.max(px), y1.max(py));
            }
        }
    }
    // Keep a small margin from the half-pixel edge used by `apply_affine`.
    let dx_range = (-0.49 - x0, w as f64 - 0.51 - x1);
    let dy_range = (-0.49 - y0, h as f64 - 0.51 - y1);
    if dx_range.0 > dx_range.1 || dy_range.0 > dy_range.1 {
        return None;
    }
    let min_shift = cfg.min_shift_fraction * (w as f64).hypot(h as f64);
    for _ in 0..64 {
        let (dx, dy) = (sample(rng, dx_range), sample(rng, dy_range));
        if dx.hypot(dy) >= min_shift {
            (t.dx, t.dy) = (dx, dy);
            return Some(t);
        }
    }
    None
}

/// Copies the largest admissible object elsewhere in the same image: select
/// → affine warp → feather → alpha blend. Deterministic in
/// (image, masks, seed, config).
pub fn synth_copy_move(image: &ImageRGB, masks: &[BinaryMask], seed: u64, cfg: &SynthConfig) -> Result<SynthRecord> {
    cfg.validate()?;
    check_dims(image, masks)?;
    let admissible: Vec<usize> = (0..masks.len()).filter(|&i| cfg.admits(&masks[i])).collect();
    if admissible.is_empty() {
        return Err(Error::Skipped(format!("none of {} masks within the area bounds {:?}", masks.len(), cfg.area_fraction)));
    }
    let candidates: Vec<BinaryMask> = admissible.iter().map(|&i| masks[i].clone()).collect();
    let (_, source) = select_largest_mask(&candidates)?;

    let mut rng = crate::rng::seeded(seed);
    let attempts = if cfg.fixed_transform.is_some() { 1 } else { cfg.max_attempts };
    let mut found = None;
    for _ in 0..attempts {
        let Some(t) = cfg.fixed_transform.or_else(|| sample_transform(&mut rng, source, cfg)) else {
            continue;
        };
        match apply_affine(image, source, &t) {
            Ok((patch, warped)) if cfg.admits(&warped) => {
                found = Some((t, patch, warped));
                break;
            }
            Ok(_) | Err(Error::OutOfBounds) => continue,
            Err(e) => return Err(e),
        }
    }
    let Some((transform, patch, warped)) = found else {
        return Err(Error::Skipped(format!("{attempts} consecutive transforms rejected")));
    };
    let alpha = feather_mask(&warped, cfg.feather_px, cfg.alpha_interior as f32);
    let forged = blend_paste(image, &patch, &alpha)?;
    Ok(SynthRecord {
        forged_image: forged,
        truth_mask: warped,
        forgery_kind: ForgeryKind::CopyMove,
        provenance: Provenance {
            source_id: String::new(),
            kind: ForgeryKind::CopyMove,
            seed,
            transform: Some(transform),
            alpha_interior: Some(cfg.alpha_interior),
            mask_path: None,
        },
    })
}

/// Removes a uniformly chosen admissible object: dilate its mask, then fill
/// by diffusion. Admissibility is judged on the dilated mask, which is also
/// the truth mask.
pub fn synth_inpaint(image: &ImageRGB, masks: &[BinaryMask], seed: u64, cfg: &SynthConfig) -> Result<SynthRecord> {
    cfg.validate()?;
    check_dims(image, masks)?;
    let dilated: Vec<BinaryMask> = masks
        .iter()
        .map(|m| m.dilate(cfg.inpaint_dilation))
        .filter(|m| cfg.admits(m))
        .collect();
    if dilated.is_empty() {
        return Err(Error::Skipped(format!("none of {} masks within the area bounds {:?}", masks.len(), cfg.area_fraction)));
    }
    let mut rng = crate::rng::seeded(seed);
    let truth = dilated[rng.random_range(0..dilated.len())].clone();
    let forged = inpaint_diffusion(image, &truth, cfg.inpaint_max_iters, cfg.inpaint_tol)?;
    Ok(SynthRecord {
        forged_image: forged,
        truth_mask: truth,
        forgery_kind: ForgeryKind::Inpaint,
        provenance: Provenance {
            source_id: String::new(),
            kind: ForgeryKind::Inpaint,
            seed,
            transform: None,
            alpha_interior: None,
            mask_path: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rng;
    use proptest::prelude::{prop_assert_eq, prop_assume, proptest};

    fn blob(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
    }

    fn mask_of_area(area: usize) -> BinaryMask {
        BinaryMask::from_fn(20, 20, |x, y| y * 20 + x < area)
    }

    #[test]
    fn largest_mask_examples() {
        let masks = [mask_of_area(10), mask_of_area(200), mask_of_area(50)];
        assert_eq!(select_largest_mask(&masks).unwrap().0, 1);
        let tie = [blob(20, 20, 0, 0, 5, 5), blob(20, 20, 10, 10, 15, 15)];
        assert_eq!(select_largest_mask(&tie).unwrap().0, 0);
        assert!(select_largest_mask(&[]).is_err());
        assert!(select_largest_mask(&[BinaryMask::new(4, 4)]).is_err());
        assert!(select_largest_mask(&[BinaryMask::new(4, 4), BinaryMask::new(5, 4)]).is_err());
    }

    proptest! {
        #[test]
        fn largest_mask_agrees_with_brute_force(seed in 0u64..100_000) {
            let mut r = rng(seed);
            let masks: Vec<BinaryMask> = (0..20)
                .map(|_| {
                    let p: f64 = r.random_range(0.0..0.6);
                    BinaryMask::from_fn(9, 7, |_, _| r.random_bool(p))
                })
                .collect();
            prop_assume!(masks.iter().any(|m| !m.is_empty()));
            let mut best = 0;
            for i in 0..masks.len() {
                let n = masks[i].bits().iter().filter(|&&b| b).count();
                let nb = masks[best].bits().iter().filter(|&&b| b).count();
                if n > nb {
                    best = i;
                }
            }
            prop_assert_eq!(select_largest_mask(&masks).unwrap().0, best);
        }
    }

    fn scene(seed: u64) -> (ImageRGB, Vec<BinaryMask>) {
        make_procedural_image(seed, &ProceduralConfig::default())
    }

    #[test]
    fn copy_move_is_deterministic() {
        let (img, masks) = scene(3);
        let cfg = SynthConfig::default();
        let a = synth_copy_move(&img, &masks, 11, &cfg).unwrap();
        let b = synth_copy_move(&img, &masks, 11, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.provenance.kind, ForgeryKind::CopyMove);
        assert!(a.provenance.transform.is_some());
    }

    #[test]
    fn forced_translation_copies_object_pixel_exactly() {
        let img = ImageRGB::from_fn(64, 48, |x, y| [(x * 4) as u8, (y * 5) as u8, ((x ^ y) * 3) as u8]);
        let masks = vec![blob(64, 48, 4, 10, 20, 26), blob(64, 48, 50, 40, 52, 42)];
        let cfg = SynthConfig {
            fixed_transform: Some(AffineTransform::translation(32.0, 0.0)),
            alpha_interior: 1.0,
            feather_px: 0,
            ..SynthConfig::default()
        };
        let rec = synth_copy_move(&img, &masks, 0, &cfg).unwrap();
        assert_eq!(rec.truth_mask, blob(64, 48, 36, 10, 52, 26));
        for y in 0..48 {
            for x in 0..64 {
                let want = if rec.truth_mask.get(x, y) { img.pixel(x - 32, y) } else { img.pixel(x, y) };
                assert_eq!(rec.forged_image.pixel(x, y), want, "({x},{y})");
            }
        }
    }

    #[test]
    fn copy_move_sweep_respects_bounds_and_alpha_support() {
        let cfg = SynthConfig::default();
        let mut made = 0;
        for run in 0..500u64 {
            let (img, masks) = scene(run % 50);
            let rec = match synth_copy_move(&img, &masks, run, &cfg) {
                Ok(r) => r,
                Err(Error::Skipped(_)) => continue,
                Err(e) => panic!("run {run}: {e}"),
            };
            made += 1;
            let f = rec.truth_mask.area_fraction();
            assert!(!rec.truth_mask.is_empty());
            assert!((cfg.area_fraction.0..=cfg.area_fraction.1).contains(&f), "run {run}: {f}");
            let t = rec.provenance.transform.unwrap();
            let diag = 64f64.hypot(64.0);
            assert!(t.dx.hypot(t.dy) >= cfg.min_shift_fraction * diag);
            assert!((-30.0..=30.0).contains(&t.rotation_deg) && (0.7..=1.3).contains(&t.scale));
            let alpha = feather_mask(&rec.truth_mask, cfg.feather_px, cfg.alpha_interior as f32);
            for (i, &a) in alpha.iter().enumerate() {
                if a == 0.0 {
                    assert_eq!(&rec.forged_image.raw()[3 * i..3 * i + 3], &img.raw()[3 * i..3 * i + 3]);
                }
            }
        }
        assert!(made > 400, "only {made} of 500 runs produced a record");
    }

    #[test]
    fn no_admissible_mask_is_a_skip() {
        let img = ImageRGB::new(64, 64);
        let tiny = vec![blob(64, 64, 0, 0, 2, 2)];
        assert!(matches!(synth_copy_move(&img, &tiny, 0, &SynthConfig::default()), Err(Error::Skipped(_))));
        assert!(matches!(synth_inpaint(&img, &tiny, 0, &SynthConfig::default()), Err(Error::Skipped(_))));
    }

    #[test]
    fn impossible_transforms_are_skipped() {
        let img = ImageRGB::new(32, 32);
        let big = vec![blob(32, 32, 2, 2, 19, 19)];
        let cfg = SynthConfig {
            fixed_transform: Some(AffineTransform::translation(20.0, 0.0)),
            ..SynthConfig::default()
        };
        assert!(matches!(synth_copy_move(&img, &big, 0, &cfg), Err(Error::Skipped(_))));
    }

    #[test]
    fn inpaint_is_deterministic_and_keeps_the_rest() {
        let (img, masks) = scene(9);
        let cfg = SynthConfig::default();
        let a = synth_inpaint(&img, &masks, 5, &cfg).unwrap();
        assert_eq!(a, synth_inpaint(&img, &masks, 5, &cfg).unwrap());
        assert_eq!(a.forgery_kind, ForgeryKind::Inpaint);
        for (i, &b) in a.truth_mask.bits().iter().enumerate() {
            if !b {
                assert_eq!(&a.forged_image.raw()[3 * i..3 * i + 3], &img.raw()[3 * i..3 * i + 3]);
            }
        }
        let f = a.truth_mask.area_fraction();
        assert!((0.01..=0.30).contains(&f));
    }

    #[test]
    fn inpaint_picks_admissible_masks_uniformly() {
        let img = ImageRGB::from_fn(40, 40, |x, y| [(x * 6) as u8, (y * 6) as u8, 90]);
        let masks = vec![blob(40, 40, 3, 3, 9, 9), blob(40, 40, 20, 4, 27, 10), blob(40, 40, 10, 25, 18, 33)];
        let cfg = SynthConfig {
            inpaint_max_iters: 50,
            ..SynthConfig::default()
        };
        let dilated: Vec<BinaryMask> = masks.iter().map(|m| m.dilate(2)).collect();
        let mut counts = [0usize; 3];
        for seed in 0..500 {
            let rec = synth_inpaint(&img, &masks, seed, &cfg).unwrap();
            counts[dilated.iter().position(|d| *d == rec.truth_mask).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / 500.0;
            assert!((f - 1.0 / 3.0).abs() <= 0.05, "{counts:?}");
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ForgeryKind::ALL {
            assert_eq!(k.as_str().parse::<ForgeryKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("splice".parse::<ForgeryKind>().is_err());
    }

    #[test]
    fn provenance_json_fields() {
        let p = Provenance {
            source_id: "scene_0001".into(),
            kind: ForgeryKind::CopyMove,
            seed: 4,
            transform: Some(AffineTransform::translation(3.0, -1.0)),
            alpha_interior: Some(0.95),
            mask_path: Some("masks/0001.png".into()),
        };
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in ["source_id", "kind", "seed", "transform", "alpha_interior", "mask_path"] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(v["transform"]["rotation_deg"], 0.0);
        assert_eq!(v["kind"], "copy_move");
    }
}
