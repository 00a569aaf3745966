use crate::error::{shape_err, Error, Result};
use crate::raster::{to_u8, BinaryMask, ImageRGB};

/// Alpha compositing `round(α·F + (1−α)·B)` per pixel and channel. Pixels
/// with α = 0 come back bit-identical to the background, α = 1 to the patch.
pub fn blend_paste(background: &ImageRGB, patch: &ImageRGB, alpha: &[f32]) -> Result<ImageRGB> {
    let (w, h) = background.dims();
    if patch.dims() != (w, h) || alpha.len() != w * h {
        return Err(shape_err(
            "blend_paste",
            format!("{w}×{h} patch and {} alphas", w * h),
            format!("{}×{} patch and {} alphas", patch.width(), patch.height(), alpha.len()),
        ));
    }
    if let Some(bad) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::InvalidArgument(format!("blend alpha {bad} outside [0, 1]")));
    }
    let mut px = Vec::with_capacity(w * h * 3);
    for ((b, f), &a) in background.raw().chunks_exact(3).zip(patch.raw().chunks_exact(3)).zip(alpha) {
        for (&bv, &fv) in b.iter().zip(f) {
            px.push(to_u8(a * fv as f32 + (1.0 - a) * bv as f32));
        }
    }
    ImageRGB::from_raw(w, h, px)
}

/// Soft paste mask: `interior · min(1, d / (feather + 1))`, where `d` is the
/// Euclidean distance from a foreground pixel to the nearest background
/// pixel (1 on the boundary). Zero outside the mask; `feather = 0` gives a
/// hard mask scaled by `interior`.
pub fn feather_mask(mask: &BinaryMask, feather: usize, interior: f32) -> Vec<f32> {
    let (w, h) = mask.dims();
    let reach = feather as isize + 1;
    let mut alpha = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut d2 = (reach * reach) as f64;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    let inside = nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h;
                    if inside && !mask.get(nx as usize, ny as usize) {
                        d2 = d2.min((dx * dx + dy * dy) as f64);
                    }
                }
            }
            alpha[y * w + x] = interior * (d2.sqrt() / reach as f64).min(1.0) as f32;
        }
    }
    alpha
}
