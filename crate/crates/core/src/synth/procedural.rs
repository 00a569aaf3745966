use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, ImageRGB};

/// Settings for the built-in textured-scene generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProceduralConfig {
    pub width: usize,
    pub height: usize,
    pub max_shapes: usize,
    /// Target shape area as a fraction of the image, sampled uniformly.
    pub shape_fraction: (f64, f64),
    /// Amplitude of the per-pixel uniform grain added everywhere.
    pub grain: f32,
    /// Amplitude of a fixed ±1 checkerboard added everywhere, a stand-in
    /// for the periodic sensor traces of a camera pipeline. Any resampling
    /// or synthesized fill destroys it locally.
    #[serde(default)]
    pub mosaic: f32,
}

impl Default for ProceduralConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            max_shapes: 4,
            shape_fraction: (0.03, 0.2),
            grain: 4.0,
            mosaic: 20.0,
        }
    }
}

/// Smoothly interpolated lattice noise, one RGB color per lattice point.
struct ValueNoise {
    cell: f64,
    cols: usize,
    lattice: Vec<[f32; 3]>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, w: usize, h: usize, cell: f64, base: [f32; 3], spread: f32) -> Self {
        let cols = (w as f64 / cell).ceil() as usize + 2;
        let rows = (h as f64 / cell).ceil() as usize + 2;
        let lattice = (0..cols * rows)
            .map(|_| base.map(|b| b + rng.random_range(-spread..=spread)))
            .collect();
        Self { cell, cols, lattice }
    }

    fn at(&self, x: f64, y: f64) -> [f32; 3] {
        let (gx, gy) = (x / self.cell, y / self.cell);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| (t * t * (3.0 - 2.0 * t)) as f32;
        let (tx, ty) = (smooth(gx.fract()), smooth(gy.fract()));
        let p = |i: usize, j: usize| self.lattice[j * self.cols + i];
        let (a, b, c, d) = (p(ix, iy), p(ix + 1, iy), p(ix, iy + 1), p(ix + 1, iy + 1));
        std::array::from_fn(|k| {
            let top = a[k] + (b[k] - a[k]) * tx;
            let bottom = c[k] + (d[k] - c[k]) * tx;
            top + (bottom - top) * ty
        })
    }
}

fn random_color(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> [f32; 3] {
    [(); 3].map(|_| rng.random_range(lo..hi))
}

enum Outline {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, angle: f64 },
    Polygon(Vec<(f64, f64)>),
}

impl Outline {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Self::Ellipse { cx, cy, rx, ry, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Self::Polygon(pts) => {
                let mut inside = false;
                let mut j = pts.len() - 1;
                for i in 0..pts.len() {
                    let ((xi, yi), (xj, yj)) = (pts[i], pts[j]);
                    if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                        inside = !inside;
                    }
                    j = i;
                }
                inside
            }
        }
    }
}

enum Pattern {
    Stripes { dir: (f64, f64), freq: f64 },
    Checker { cell: f64, angle: f64 },
    Blotches(ValueNoise),
}

struct Shape {
    outline: Outline,
    pattern: Pattern,
    colors: [[f32; 3]; 2],
}

impl Shape {
    fn color(&self, x: f64, y: f64) -> [f32; 3] {
        let t = match &self.pattern {
            Pattern::Stripes { dir, freq } => 0.5 + 0.5 * ((x * dir.0 + y * dir.1) * freq).sin(),
            Pattern::Checker { cell, angle } => {
                let (s, c) = angle.sin_cos();
                let (u, v) = ((c * x + s * y) / cell, (-s * x + c * y) / cell);
                ((u.floor() + v.floor()).rem_euclid(2.0) == 0.0) as u8 as f64
            }
            Pattern::Blotches(noise) => return noise.at(x, y),
        } as f32;
        let [a, b] = self.colors;
        std::array::from_fn(|k| a[k] + (b[k] - a[k]) * t)
    }
}

fn random_shape(rng: &mut ChaCha8Rng, cfg: &ProceduralConfig) -> Shape {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let area = rng.random_range(cfg.shape_fraction.0..=cfg.shape_fraction.1) * w * h;
    let ellipse = rng.random_bool(0.5);
    let (outline_radius, make): (f64, Box<dyn Fn(f64, f64) -> Outline>) = if ellipse {
        let aspect = rng.random_range(0.45..1.0);
        let rx = (area / (std::f64::consts::PI * aspect)).sqrt();
        let ry = rx * aspect;
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        (rx, Box::new(move |cx, cy| Outline::Ellipse { cx, cy, rx, ry, angle }))
    } else {
        let n = rng.random_range(3..=7);
        let sector = std::f64::consts::TAU / n as f64;
        // Area of a regular n-gon of circumradius r is n/2·r²·sin(2π/n).
        let r = (2.0 * area / (n as f64 * sector.sin())).sqrt();
        let offset = rng.random_range(0.0..sector);
        let jitter: Vec<(f64, f64)> = (0..n)
            .map(|i| (offset + sector * (i as f64 + rng.random_range(-0.3..0.3)), r * rng.random_range(0.75..1.0)))
            .collect();
        (
            r,
            Box::new(move |cx, cy| Outline::Polygon(jitter.iter().map(|&(a, rr)| (cx + rr * a.cos(), cy + rr * a.sin())).collect())),
        )
    };
    let radius = outline_radius.min(w / 2.0 - 1.5).min(h / 2.0 - 1.5).max(1.0);
    let cx = rng.random_range(radius + 0.5..=(w - radius - 1.5).max(radius + 0.5));
    let cy = rng.random_range(radius + 0.5..=(h - radius - 1.5).max(radius + 0.5));
    let outline = make(cx, cy);
    let pattern = match rng.random_range(0..3) {
        0 => {
            let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
            Pattern::Stripes {
                dir: (a.cos(), a.sin()),
                freq: rng.random_range(0.4..1.4),
            }
        }
        1 => Pattern::Checker {
            cell: rng.random_range(2.0..5.0),
            angle: rng.random_range(0.0..std::f64::consts::FRAC_PI_2),
        },
        _ => {
            let base = random_color(rng, 50.0, 205.0);
            let cell = rng.random_range(2.5..6.0);
            Pattern::Blotches(ValueNoise::new(rng, cfg.width, cfg.height, cell, base, 50.0))
        }
    };
    let colors = [random_color(rng, 10.0, 245.0), random_color(rng, 10.0, 245.0)];
    Shape { outline, pattern, colors }
}

/// Renders a value-noise background with 1..=`max_shapes` disjoint textured
/// shapes and returns the image with one mask per shape. Deterministic in
/// the seed.
pub fn make_procedural_image(seed: u64, cfg: &ProceduralConfig) -> (ImageRGB, Vec<BinaryMask>) {
    let mut rng = crate::rng::seeded(seed);
    let (w, h) = (cfg.width, cfg.height);
    let base = random_color(&mut rng, 60.0, 196.0);
    let cell = (w.min(h) as f64 / rng.random_range(2.0..5.0)).max(2.0);
    let background = ValueNoise::new(&mut rng, w, h, cell, base, 60.0);

    let wanted = rng.random_range(1..=cfg.max_shapes.max(1));
    let mut shapes: Vec<(Shape, BinaryMask)> = Vec::new();
    let mut occupied = BinaryMask::new(w, h);
    let mut attempts = 0;
    while shapes.len() < wanted && attempts < 40 {
        attempts += 1;
        let shape = random_shape(&mut rng, cfg);
        let mask = BinaryMask::from_fn(w, h, |x, y| shape.outline.contains(x as f64, y as f64));
        // One free pixel between shapes so masks never touch.
        if mask.is_empty() || mask.intersects(&occupied) {
            continue;
        }
        occupied = occupied.union(&mask.dilate(1));
        shapes.push((shape, mask));
    }
    if shapes.is_empty() {
        // Unreachable for sane configs; keeps the "at least one shape" contract.
        let r = (w.min(h) as f64 / 4.0).max(1.0);
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let shape = Shape {
            outline: Outline::Ellipse { cx, cy, rx: r, ry: r, angle: 0.0 },
            pattern: Pattern::Stripes { dir: (1.0, 0.0), freq: 1.0 },
            colors: [[30.0; 3], [220.0; 3]],
        };
        let mask = BinaryMask::from_fn(w, h, |x, y| shape.outline.contains(x as f64, y as f64));
        shapes.push((shape, mask));
    }

    let grain = cfg.grain.max(0.0);
    // Base colors are squeezed into the headroom so clamping never eats the
    // mosaic or the grain.
    let margin = (grain + cfg.mosaic.abs()).min(127.0);
    let squeeze = (255.0 - 2.0 * margin) / 255.0;
    let image = ImageRGB::from_fn(w, h, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let c = shapes
            .iter()
            .find(|(_, m)| m.get(x, y))
            .map_or_else(|| background.at(fx, fy), |(s, _)| s.color(fx, fy));
        let m = if (x + y) % 2 == 0 { cfg.mosaic } else { -cfg.mosaic };
        c.map(|v| {
            let g = if grain > 0.0 { rng.random_range(-grain..=grain) } else { 0.0 };
            (margin + v.clamp(0.0, 255.0) * squeeze + m + g).round().clamp(0.0, 255.0) as u8
        })
    });
    (image, shapes.into_iter().map(|(_, m)| m).collect())
}
