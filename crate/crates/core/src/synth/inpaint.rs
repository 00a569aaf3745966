use crate::error::{shape_err, Error, Result};
use crate::raster::{BinaryMask, ImageRGB};

/// Default stopping threshold on the largest per-pixel change, in
/// intensity levels.
pub const DEFAULT_TOL: f64 = 0.05;
pub const DEFAULT_MAX_ITERS: usize = 5000;

/// Unrounded result of the diffusion fill.
#[derive(Clone, Debug)]
pub struct InpaintField {
    /// Full-image planes; unmasked entries are the original intensities.
    pub planes: [Vec<f64>; 3],
    pub iterations: usize,
    pub converged: bool,
}

/// The hole's pixels and, for each, its in-image 4-neighbours.
struct Stencil {
    hole: Vec<usize>,
    neighbours: Vec<Vec<usize>>,
}

fn stencil(mask: &BinaryMask) -> Stencil {
    let (w, h) = mask.dims();
    let mut hole = Vec::new();
    let mut neighbours = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut nb = Vec::with_capacity(4);
            if x > 0 {
                nb.push(y * w + x - 1);
            }
            if x + 1 < w {
                nb.push(y * w + x + 1);
            }
            if y > 0 {
                nb.push((y - 1) * w + x);
            }
            if y + 1 < h {
                nb.push((y + 1) * w + x);
            }
            hole.push(y * w + x);
            neighbours.push(nb);
        }
    }
    Stencil { hole, neighbours }
}

/// Jacobi iteration of the discrete Laplace equation over the masked
/// pixels, with the unmasked pixels as fixed boundary values. Stops once
/// the largest change in a sweep drops below `tol` or after `max_iters`
/// sweeps.
pub fn inpaint_field(image: &ImageRGB, mask: &BinaryMask, max_iters: usize, tol: f64) -> Result<InpaintField> {
    let (w, h) = image.dims();
    if mask.dims() != (w, h) {
        return Err(shape_err("inpaint_diffusion", format!("mask {w}×{h}"), format!("mask {}×{}", mask.width(), mask.height())));
    }
    let area = mask.area();
    if area == 0 {
        return Err(Error::InvalidArgument("inpainting mask is empty".into()));
    }
    if area == w * h {
        return Err(Error::InvalidArgument("inpainting mask covers the whole image; no boundary data".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("inpainting tolerance must be positive, got {tol}")));
    }
    let st = stencil(mask);
    let bits = mask.bits();
    let mut planes = [0, 1, 2].map(|c| image.channel_plane(c).into_iter().map(f64::from).collect::<Vec<_>>());
    let mut iterations = 0;
    let mut converged = false;

    // Start from the mean of the boundary ring; this keeps every iterate
    // inside the boundary's value range.
    for plane in planes.iter_mut() {
        let (mut sum, mut n) = (0.0, 0usize);
        for nb in &st.neighbours {
            for &q in nb.iter().filter(|&&q| !bits[q]) {
                sum += plane[q];
                n += 1;
            }
        }
        let start = sum / n as f64;
        for &p in &st.hole {
            plane[p] = start;
        }
    }

    let mut next = vec![0.0f64; st.hole.len()];
    while iterations < max_iters {
        iterations += 1;
        let mut change = 0.0f64;
        for plane in planes.iter_mut() {
            for (v, nb) in next.iter_mut().zip(&st.neighbours) {
                *v = nb.iter().map(|&q| plane[q]).sum::<f64>() / nb.len() as f64;
            }
            for (&p, &v) in st.hole.iter().zip(&next) {
                change = change.max((v - plane[p]).abs());
                plane[p] = v;
            }
        }
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(InpaintField {
        planes,
        iterations,
        converged,
    })
}

/// Fills the masked region by harmonic diffusion from its surroundings.
/// Unmasked pixels are returned untouched.
pub fn inpaint_diffusion(image: &ImageRGB, mask: &BinaryMask, max_iters: usize, tol: f64) -> Result<ImageRGB> {
    let field = inpaint_field(image, mask, max_iters, tol)?;
    let mut px = image.raw().to_vec();
    for (i, _) in mask.bits().iter().enumerate().filter(|(_, &b)| b) {
        for c in 0..3 {
            px[3 * i + c] = field.planes[c][i].round().clamp(0.0, 255.0) as u8;
        }
    }
    ImageRGB::from_raw(image.width(), image.height(), px)
}
