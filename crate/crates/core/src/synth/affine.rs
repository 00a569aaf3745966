use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{sample_bilinear, BinaryMask, Border, ImageRGB};

/// Allowed range of [`AffineTransform::scale`].
pub const SCALE_BOUNDS: (f64, f64) = (0.5, 2.0);

/// Rotation, uniform scale and translation, applied about the centroid of
/// the mask being warped: `p' = c + s·R(θ)(p − c) + (dx, dy)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub rotation_deg: f64,
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
}

impl AffineTransform {
    pub const IDENTITY: Self = Self {
        rotation_deg: 0.0,
        scale: 1.0,
        dx: 0.0,
        dy: 0.0,
    };

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self { dx, dy, ..Self::IDENTITY }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.rotation_deg, self.scale, self.dx, self.dy].iter().all(|v| v.is_finite());
        if !finite || !(SCALE_BOUNDS.0..=SCALE_BOUNDS.1).contains(&self.scale) {
            return Err(Error::InvalidArgument(format!(
                "affine transform {self:?} needs finite values and scale in [{}, {}]",
                SCALE_BOUNDS.0, SCALE_BOUNDS.1
            )));
        }
        Ok(())
    }

    /// Source position → destination position, about `center`.
    pub fn forward(&self, center: (f64, f64), p: (f64, f64)) -> (f64, f64) {
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        let (x, y) = (p.0 - center.0, p.1 - center.1);
        (
            center.0 + self.scale * (cos * x - sin * y) + self.dx,
            center.1 + self.scale * (sin * x + cos * y) + self.dy,
        )
    }

    /// Destination position → source position; exact inverse of `forward`.
    pub fn inverse(&self, center: (f64, f64), q: (f64, f64)) -> (f64, f64) {
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        let (x, y) = ((q.0 - center.0 - self.dx) / self.scale, (q.1 - center.1 - self.dy) / self.scale);
        (center.0 + cos * x + sin * y, center.1 - sin * x + cos * y)
    }
}

/// Whether a forward-mapped pixel center still rounds to a pixel inside a
/// `w`×`h` image.
pub(crate) fn lands_inside(p: (f64, f64), w: usize, h: usize) -> bool {
    p.0 >= -0.5 && p.1 >= -0.5 && p.0 < w as f64 - 0.5 && p.1 < h as f64 - 0.5
}

/// Warps the masked region of `image` by `t` about the mask centroid.
///
/// Pixels are pulled back through the inverse map and sampled bilinearly;
/// the mask goes through the same map and is re-binarized at 0.5. The patch
/// is zero outside the warped mask. Returns [`Error::OutOfBounds`] when any
/// mask pixel would land outside the image (the caller should resample).
pub fn apply_affine(image: &ImageRGB, mask: &BinaryMask, t: &AffineTransform) -> Result<(ImageRGB, BinaryMask)> {
    t.validate()?;
    let (w, h) = image.dims();
    if mask.dims() != (w, h) {
        return Err(crate::error::shape_err(
            "apply_affine",
            format!("mask {w}×{h}"),
            format!("mask {}×{}", mask.width(), mask.height()),
        ));
    }
    let center = mask
        .centroid()
        .ok_or_else(|| Error::InvalidArgument("apply_affine needs a nonempty mask".into()))?;
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) && !lands_inside(t.forward(center, (x as f64, y as f64)), w, h) {
                return Err(Error::OutOfBounds);
            }
        }
    }

    let mask_plane = mask.as_plane();
    let planes = [0, 1, 2].map(|c| image.channel_plane(c));
    let mut warped_mask = BinaryMask::new(w, h);
    let mut out = [vec![0.0f32; w * h], vec![0.0f32; w * h], vec![0.0f32; w * h]];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = t.inverse(center, (x as f64, y as f64));
            if sample_bilinear(&mask_plane, w, h, u, v, Border::Zero) < 0.5 {
                continue;
            }
            warped_mask.set(x, y, true);
            for (o, p) in out.iter_mut().zip(&planes) {
                o[y * w + x] = sample_bilinear(p, w, h, u, v, Border::Clamp);
            }
        }
    }
    if warped_mask.is_empty() {
        return Err(Error::OutOfBounds);
    }
    Ok((ImageRGB::from_planes(w, h, &out), warped_mask))
}
