//! Grad-CAM for the single-logit classifier. The two class scores are
//! y_forged = z and y_authentic = −z, where z is the logit.

mod render;
mod score;

use serde::{Deserialize, Serialize};

use crate::classifier::Model;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{BnMode, Tensor4};

pub use render::{colormap_lut, render_colormap, render_overlay, upsample_and_normalize, HeatMap, DEFAULT_BLEND};
pub use score::{localization_score, LocalizationScore, DEFAULT_TOP_FRACTION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassId {
    Forged,
    Authentic,
}

impl ClassId {
    /// dy_c / dz.
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Self::Forged => T::one(),
            Self::Authentic => -T::one(),
        }
    }
}

/// Final-block feature maps A (post-ReLU, pre-pool) and ∂y_c/∂A for one
/// image.
#[derive(Clone, Debug)]
pub struct FeatureGradients<T> {
    pub features: Tensor4<T>,
    pub gradients: Tensor4<T>,
    pub logit: T,
}

/// Infer-mode forward, then backpropagation of the class score (not the
/// loss) down to the final block's activation.
pub fn feature_gradients<T: Scalar>(model: &Model<T>, image: &Tensor4<T>, class: ClassId) -> Result<FeatureGradients<T>> {
    if image.shape()[0] != 1 {
        return Err(shape_err("feature_gradients", "a single image (n = 1)", format!("{:?}", image.shape())));
    }
    let cache = model.forward_cached(image, BnMode::Infer)?;
    let gradients = model.feature_gradient(&cache, &[class.sign::<T>()])?;
    Ok(FeatureGradients {
        features: cache.final_features().clone(),
        gradients,
        logit: cache.logits[0],
    })
}

/// One importance weight per feature map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamWeights<T> {
    pub alpha: Vec<T>,
    pub class_id: ClassId,
}

/// Global average pool of the gradients: α_k = (1/Z) Σ_ij ∂y_c/∂A^k_ij with
/// Z = H_f·W_f.
pub fn compute_weights<T: Scalar>(gradients: &Tensor4<T>, class_id: ClassId) -> Result<CamWeights<T>> {
    let [n, k, h, w] = gradients.shape();
    if n != 1 {
        return Err(shape_err("compute_weights", "n = 1", format!("{:?}", gradients.shape())));
    }
    let z = T::lit((h * w) as f64);
    let plane = h * w;
    let alpha = (0..k)
        .map(|c| gradients.data()[c * plane..(c + 1) * plane].iter().copied().sum::<T>() / z)
        .collect();
    Ok(CamWeights { alpha, class_id })
}

/// ReLU of the α-weighted sum of feature maps, at feature-map resolution.
pub fn compute_cam<T: Scalar>(weights: &CamWeights<T>, features: &Tensor4<T>) -> Result<Vec<T>> {
    let [n, k, h, w] = features.shape();
    if n != 1 || k != weights.alpha.len() {
        return Err(shape_err(
            "compute_cam",
            format!("(1, {}, h, w)", weights.alpha.len()),
            format!("{:?}", features.shape()),
        ));
    }
    let plane = h * w;
    let mut raw = vec![T::zero(); plane];
    for (c, &a) in weights.alpha.iter().enumerate() {
        crate::scalar::axpy(a, &features.data()[c * plane..(c + 1) * plane], &mut raw);
    }
    for v in raw.iter_mut() {
        *v = v.max(T::zero());
    }
    Ok(raw)
}

/// Result of explaining one image.
#[derive(Clone, Debug)]
pub struct Explanation {
    pub logit: f32,
    pub weights: CamWeights<f32>,
    pub heatmap: HeatMap,
}

/// Full pipeline for a (1, 3, H, W) input: gradients, weights, CAM,
/// upsampling to H×W and normalization.
pub fn explain(model: &Model<f32>, image: &Tensor4<f32>, class: ClassId) -> Result<Explanation> {
    let fg = feature_gradients(model, image, class)?;
    let weights = compute_weights(&fg.gradients, class)?;
    let raw = compute_cam(&weights, &fg.features)?;
    let [_, _, hf, wf] = fg.features.shape();
    let [_, _, h, w] = image.shape();
    let heatmap = upsample_and_normalize(&raw, wf, hf, w, h)?;
    if !heatmap.normalized.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite heatmap".into()));
    }
    Ok(Explanation {
        logit: fg.logit,
        weights,
        heatmap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ArchConfig;
    use crate::testutil::{rand_tensor, rng};
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng;

    fn toy_arch() -> ArchConfig {
        ArchConfig {
            input_size: 8,
            in_channels: 3,
            channels: vec![4, 5],
            fc_hidden: 6,
        }
    }

    /// Toy model whose last-block shift keeps the tapped features well
    /// away from the ReLU kink.
    fn toy_model(seed: u64) -> Model<f64> {
        let mut m = Model::<f64>::init(&toy_arch(), seed).unwrap();
        let mut r = rng(seed + 1);
        for b in &mut m.blocks {
            for (mean, var) in b.bn.running_mean.iter_mut().zip(b.bn.running_var.iter_mut()) {
                *mean = r.random_range(-0.1..0.1);
                *var = r.random_range(0.5..1.5);
            }
        }
        for beta in m.blocks.last_mut().unwrap().bn.beta.iter_mut() {
            *beta = 2.0;
        }
        m
    }

    #[test]
    fn class_gradients_are_negatives() {
        let m = toy_model(1);
        let x = rand_tensor::<f64>(&mut rng(2), [1, 3, 8, 8]);
        let f = feature_gradients(&m, &x, ClassId::Forged).unwrap();
        let a = feature_gradients(&m, &x, ClassId::Authentic).unwrap();
        for (g, h) in f.gradients.data().iter().zip(a.gradients.data()) {
            assert_eq!(*g, -*h);
        }
        assert!(f.features.data().iter().all(|&v| v >= 0.0));
        assert_eq!(f.features.shape(), [1, 5, 4, 4]);
        assert!(feature_gradients(&m, &rand_tensor::<f64>(&mut rng(3), [2, 3, 8, 8]), ClassId::Forged).is_err());
    }

    #[test]
    fn feature_gradients_match_finite_differences() {
        for seed in 0..5 {
            let m = toy_model(seed * 10);
            let x = rand_tensor::<f64>(&mut rng(seed), [1, 3, 8, 8]);
            let fg = feature_gradients(&m, &x, ClassId::Forged).unwrap();
            let f = |a: &[f64]| m.logits_from_features(&Tensor4::from_vec(fg.features.shape(), a.to_vec()).unwrap()).unwrap()[0];
            let err = crate::tensor::gradient_check(f, fg.features.data(), fg.gradients.data(), 1e-4).unwrap();
            assert!(err < 1e-2, "seed {seed}: {err}");
        }
    }

    #[test]
    fn cam_from_finite_difference_gradients_matches_backprop() {
        for seed in 0..5 {
            let m = toy_model(seed * 7 + 3);
            let x = rand_tensor::<f64>(&mut rng(seed + 100), [1, 3, 8, 8]);
            for class in [ClassId::Forged, ClassId::Authentic] {
                let fg = feature_gradients(&m, &x, class).unwrap();
                let score = |a: &[f64]| {
                    class.sign::<f64>() * m.logits_from_features(&Tensor4::from_vec(fg.features.shape(), a.to_vec()).unwrap()).unwrap()[0]
                };
                let fd = crate::tensor::numeric_gradient(score, fg.features.data(), 1e-4).unwrap();
                let fd = Tensor4::from_vec(fg.features.shape(), fd).unwrap();
                let cam = compute_cam(&compute_weights(&fg.gradients, class).unwrap(), &fg.features).unwrap();
                let oracle = compute_cam(&compute_weights(&fd, class).unwrap(), &fg.features).unwrap();
                let max = cam.iter().copied().fold(0.0, f64::max);
                for (a, b) in cam.iter().zip(&oracle) {
                    if max > 0.0 && *a / max > 0.05 {
                        assert!((a - b).abs() <= 1e-2 * a.abs(), "seed {seed} {class:?}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn weight_examples() {
        let ones = Tensor4::<f64>::filled([1, 2, 3, 3], 1.0);
        assert_eq!(compute_weights(&ones, ClassId::Forged).unwrap().alpha, vec![1.0, 1.0]);
        let zero_sum = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, -1.0, 2.0, -2.0]).unwrap();
        assert_eq!(compute_weights(&zero_sum, ClassId::Forged).unwrap().alpha, vec![0.0]);
        assert!(compute_weights(&Tensor4::<f64>::zeros([2, 1, 2, 2]), ClassId::Forged).is_err());
    }

    #[test]
    fn weights_match_scalar_mean_oracle() {
        let g = rand_tensor::<f64>(&mut rng(4), [1, 4, 3, 3]);
        let w = compute_weights(&g, ClassId::Authentic).unwrap();
        for k in 0..4 {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += g.get([0, k, i, j]);
                }
            }
            assert!((w.alpha[k] - s / 9.0).abs() < 1e-6);
        }
        assert_eq!(w.class_id, ClassId::Authentic);
    }

    #[test]
    fn cam_examples() {
        let a = Tensor4::from_vec([1, 1, 2, 2], vec![0.0, 1.5, 2.0, 0.25]).unwrap();
        let one = CamWeights { alpha: vec![1.0], class_id: ClassId::Forged };
        assert_eq!(compute_cam(&one, &a).unwrap(), a.data().to_vec());
        let neg = CamWeights { alpha: vec![-0.5], class_id: ClassId::Forged };
        assert_eq!(compute_cam(&neg, &a).unwrap(), vec![0.0; 4]);
        assert!(compute_cam(&CamWeights { alpha: vec![1.0, 2.0], class_id: ClassId::Forged }, &a).is_err());
    }

    #[test]
    fn cam_matches_naive_loop() {
        let mut r = rng(6);
        let a = rand_tensor::<f64>(&mut r, [1, 4, 5, 3]).map(f64::abs);
        let w = CamWeights { alpha: (0..4).map(|_| r.random_range(-1.0..1.0)).collect(), class_id: ClassId::Forged };
        let cam = compute_cam(&w, &a).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += w.alpha[k] * a.get([0, k, i, j]);
                }
                assert!((cam[i * 3 + j] - s.max(0.0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn explain_produces_normalized_map_at_input_resolution() {
        let arch = ArchConfig::standard(32);
        let m = Model::<f32>::init(&arch, 3).unwrap();
        let x = rand_tensor::<f32>(&mut rng(8), [1, 3, 32, 32]).map(|v| v.abs());
        let e = explain(&m, &x, ClassId::Forged).unwrap();
        assert_eq!((e.heatmap.width, e.heatmap.height), (32, 32));
        assert_eq!((e.heatmap.raw_width, e.heatmap.raw_height), (arch.cam_size(), arch.cam_size()));
        assert!(e.heatmap.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(e.logit, m.predict(&x).unwrap()[0]);
    }

    proptest! {
        #[test]
        fn cam_scaling_properties(seed in 0u64..10_000, c in 0.1f64..10.0) {
            let mut r = rng(seed);
            let a = rand_tensor::<f64>(&mut r, [1, 3, 4, 4]).map(f64::abs);
            let g = rand_tensor::<f64>(&mut r, [1, 3, 4, 4]);
            let w = compute_weights(&g, ClassId::Forged).unwrap();
            let raw = compute_cam(&w, &a).unwrap();
            // Linear in A before the ReLU.
            let scaled_a = compute_cam(&w, &a.map(|v| v * c)).unwrap();
            // Scaling gradients scales α and the raw map.
            let wc = compute_weights(&g.map(|v| v * c), ClassId::Forged).unwrap();
            let scaled_g = compute_cam(&wc, &a).unwrap();
            for i in 0..16 {
                prop_assert!((scaled_a[i] - c * raw[i]).abs() <= 1e-9 * (1.0 + raw[i].abs() * c));
                prop_assert!((scaled_g[i] - c * raw[i]).abs() <= 1e-9 * (1.0 + raw[i].abs() * c));
            }
            for (k, &al) in w.alpha.iter().enumerate() {
                prop_assert!((wc.alpha[k] - c * al).abs() <= 1e-9 * (1.0 + al.abs() * c));
            }
            // The other class's pre-ReLU map is the negation.
            let neg = compute_weights(&g.map(|v| -v), ClassId::Authentic).unwrap();
            let other = compute_cam(&neg, &a).unwrap();
            for i in 0..16 {
                prop_assert!(raw[i] == 0.0 || other[i] == 0.0);
            }
            let h1 = upsample_and_normalize(&raw.iter().map(|&v| v as f32).collect::<Vec<_>>(), 4, 4, 8, 8).unwrap();
            let h2 = upsample_and_normalize(&scaled_g.iter().map(|&v| v as f32).collect::<Vec<_>>(), 4, 4, 8, 8).unwrap();
            for (x, y) in h1.normalized.iter().zip(&h2.normalized) {
                prop_assert!((x - y).abs() < 1e-4);
            }
        }
    }
}
