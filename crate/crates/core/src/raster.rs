//! 8-bit RGB images, binary masks, PNG I/O and bilinear resampling.

use std::path::Path;

use crate::error::{io_err, shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRGB {
    width: usize,
    height: usize,
    /// Interleaved RGB, row-major.
    pixels: Vec<u8>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 || width == 0 || height == 0 {
            return Err(shape_err(
                "ImageRGB::from_raw",
                format!("{} bytes for {width}x{height}", width * height * 3),
                format!("{} bytes", pixels.len()),
            ));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn raw(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, v: [u8; 3]) {
        let o = (y * self.width + x) * 3;
        self.pixels[o..o + 3].copy_from_slice(&v);
    }

    /// One channel as floats in 0..=255.
    pub fn channel_plane(&self, ch: usize) -> Vec<f32> {
        self.pixels.iter().skip(ch).step_by(3).map(|&v| v as f32).collect()
    }

    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f32>; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for i in 0..width * height {
            for p in planes {
                pixels.push(to_u8(p[i]));
            }
        }
        Self { width, height, pixels }
    }

    pub fn resize(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let planes = [0, 1, 2].map(|c| resize_bilinear(&self.channel_plane(c), self.width, self.height, width, height));
        Self::from_planes(width, height, &planes)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_raw(w as usize, h as usize, rgb.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Per-pixel {0, 1} mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(shape_err("BinaryMask::from_bits", format!("{} bits", width * height), format!("{}", bits.len())));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Foreground pixel count.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn area_fraction(&self) -> f64 {
        self.area() as f64 / self.bits.len() as f64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect(),
        }
    }

    /// Mean (x, y) of foreground pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Dilation by a Euclidean disk of the given radius.
    pub fn dilate(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as isize;
        let r2 = r * r;
        let mut out = Self::new(self.width, self.height);
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                if !self.get(x as usize, y as usize) {
                    continue;
                }
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (nx, ny) = (x + dx, y + dy);
                        if dx * dx + dy * dy <= r2 && nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                            out.set(nx as usize, ny as usize, true);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn as_plane(&self) -> Vec<f32> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Any nonzero gray value counts as foreground.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            bits: gray.into_raw().into_iter().map(|v| v > 0).collect(),
        })
    }

    /// Grayscale PNG with 0 / 255.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        save_gray_png(path, self.width, self.height, &bytes)
    }
}

pub fn save_gray_png(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    image::save_buffer_with_format(
        path,
        bytes,
        width as u32,
        height as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(())
}

#[inline]
pub(crate) fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Behaviour of [`sample_bilinear`] outside the plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Border {
    Clamp,
    Zero,
}

/// Bilinear sample at continuous pixel coordinates, where integer
/// coordinates hit pixel centers exactly.
pub fn sample_bilinear<T: Scalar>(plane: &[T], width: usize, height: usize, x: f64, y: f64, border: Border) -> T {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = T::lit(x - x0);
    let fy = T::lit(y - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |xi: isize, yi: isize| -> T {
        match border {
            Border::Clamp => {
                let xc = xi.clamp(0, width as isize - 1) as usize;
                let yc = yi.clamp(0, height as isize - 1) as usize;
                plane[yc * width + xc]
            }
            Border::Zero => {
                if xi < 0 || yi < 0 || xi >= width as isize || yi >= height as isize {
                    T::zero()
                } else {
                    plane[yi as usize * width + xi as usize]
                }
            }
        }
    };
    let one = T::one();
    let top = at(x0, y0) * (one - fx) + at(x0 + 1, y0) * fx;
    let bottom = at(x0, y0 + 1) * (one - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (one - fy) + bottom * fy
}

/// Resizes a single-channel plane with half-pixel-center alignment and edge
/// clamping: output pixel `i` samples source coordinate
/// `(i + 0.5)·src/dst − 0.5`.
pub fn resize_bilinear<T: Scalar>(src: &[T], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<T> {
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        for x in 0..dw {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            out.push(sample_bilinear(src, sw, sh, fx, fy, Border::Clamp));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkerboard_to_single_pixel_is_the_average() {
        let plane = [0.0f32, 255.0, 255.0, 0.0];
        assert_eq!(resize_bilinear(&plane, 2, 2, 1, 1), vec![127.5]);
    }

    #[test]
    fn upsample_two_by_two_by_hand() {
        let plane = [0.0f64, 1.0, 2.0, 3.0];
        let up = resize_bilinear(&plane, 2, 2, 4, 4);
        // source coordinates per output index: 0, 0.25, 0.75, 1
        let axis = [0.0, 0.25, 0.75, 1.0];
        for (yi, &sy) in axis.iter().enumerate() {
            for (xi, &sx) in axis.iter().enumerate() {
                let expect = sx * 1.0 + sy * 2.0;
                assert!((up[yi * 4 + xi] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = ImageRGB::from_fn(5, 4, |x, y| [(x * 40) as u8, (y * 50) as u8, 7]);
        assert_eq!(img.resize(5, 4), img);
        let plane: Vec<f32> = img.channel_plane(0);
        assert_eq!(resize_bilinear(&plane, 5, 4, 5, 4), plane);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageRGB::from_fn(7, 3, |x, y| [(x * 30) as u8, (y * 70) as u8, ((x + y) * 11) as u8]);
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        assert_eq!(ImageRGB::load_png(&p).unwrap(), img);
        let mask = BinaryMask::from_fn(7, 3, |x, y| (x + y) % 3 == 0);
        let mp = dir.path().join("m.png");
        mask.save_png(&mp).unwrap();
        assert_eq!(BinaryMask::load_png(&mp).unwrap(), mask);
    }

    #[test]
    fn corrupt_png_error_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"\x89PNG not really").unwrap();
        let err = ImageRGB::load_png(&p).unwrap_err().to_string();
        assert!(err.contains("bad.png"), "{err}");
    }

    #[test]
    fn dilation_and_centroid() {
        let mut m = BinaryMask::new(9, 9);
        m.set(4, 4, true);
        assert_eq!(m.centroid(), Some((4.0, 4.0)));
        assert_eq!(m.dilate(1).area(), 5);
        assert_eq!(m.dilate(2).area(), 13);
        assert!(BinaryMask::new(3, 3).centroid().is_none());
    }
}
