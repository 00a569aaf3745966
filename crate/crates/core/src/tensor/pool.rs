use super::Tensor4;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Flat input offsets that won each 2×2 window, paired with the shape of the
/// pooled input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: [usize; 4],
    pub argmax: Vec<usize>,
}

/// 2×2 non-overlapping max pooling. Ties go to the first position in
/// row-major window order.
pub fn maxpool2<T: Scalar>(input: &Tensor4<T>) -> Result<(Tensor4<T>, PoolIndices)> {
    let [n, c, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err("maxpool2", "even spatial dimensions", format!("{:?}", input.shape())));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let src = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let top = base + 2 * y * w + 2 * x;
                let cands = [top, top + 1, top + w, top + w + 1];
                let mut best = cands[0];
                for &i in &cands[1..] {
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor4::from_vec([n, c, oh, ow], out)?,
        PoolIndices {
            input_shape: input.shape(),
            argmax,
        },
    ))
}

/// Routes each upstream value to its recorded argmax; everything else is 0.
pub fn maxpool2_backward<T: Scalar>(indices: &PoolIndices, upstream: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = indices.input_shape;
    let expected = [n, c, h / 2, w / 2];
    if upstream.shape() != expected || indices.argmax.len() != upstream.len() {
        return Err(shape_err("maxpool2_backward", format!("{expected:?}"), format!("{:?}", upstream.shape())));
    }
    let mut grad = Tensor4::zeros(indices.input_shape);
    let total = grad.len();
    let g = grad.data_mut();
    for (&i, &u) in indices.argmax.iter().zip(upstream.data()) {
        if i >= total {
            return Err(Error::InvalidArgument(format!(
                "pool index {i} out of bounds for input of {total} values"
            )));
        }
        g[i] += u;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradient_check;
    use crate::testutil::{rand_tensor, rng};

    #[test]
    fn window_max_and_argmax() {
        let t = Tensor4::from_vec([1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (o, idx) = maxpool2(&t).unwrap();
        assert_eq!(o.data(), &[4.0]);
        assert_eq!(idx.argmax, vec![3]);
    }

    #[test]
    fn tie_goes_to_first_position() {
        let t = Tensor4::filled([1, 1, 2, 2], 5.0f32);
        let (o, idx) = maxpool2(&t).unwrap();
        assert_eq!(o.data(), &[5.0]);
        assert_eq!(idx.argmax, vec![0]);
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(maxpool2(&Tensor4::<f32>::zeros([1, 1, 3, 4])).is_err());
        assert!(maxpool2(&Tensor4::<f32>::zeros([1, 1, 4, 5])).is_err());
    }

    #[test]
    fn matches_naive_scan() {
        let mut r = rng(1);
        let t = rand_tensor::<f32>(&mut r, [1, 3, 8, 8]);
        let (o, _) = maxpool2(&t).unwrap();
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    let mut m = f32::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(t.get([0, c, 2 * y + dy, 2 * x + dx]));
                        }
                    }
                    assert_eq!(o.get([0, c, y, x]), m);
                }
            }
        }
    }

    #[test]
    fn backward_routes_to_argmax() {
        let mut r = rng(2);
        let t = rand_tensor::<f32>(&mut r, [2, 2, 4, 4]);
        let (o, idx) = maxpool2(&t).unwrap();
        let g = maxpool2_backward(&idx, &Tensor4::filled(o.shape(), 1.0)).unwrap();
        assert_eq!(g.data().iter().filter(|&&v| v == 1.0).count(), o.len());
        assert_eq!(g.sum(), o.len() as f32);
        let z = maxpool2_backward(&idx, &Tensor4::<f32>::zeros(o.shape())).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_corrupt_indices() {
        let idx = PoolIndices {
            input_shape: [1, 1, 2, 2],
            argmax: vec![9],
        };
        assert!(maxpool2_backward(&idx, &Tensor4::<f32>::zeros([1, 1, 1, 1])).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng(3);
        let t = rand_tensor::<f64>(&mut r, [2, 3, 4, 6]);
        let (o, idx) = maxpool2(&t).unwrap();
        let up = rand_tensor::<f64>(&mut r, o.shape());
        let g = maxpool2_backward(&idx, &up).unwrap();
        let f = |x: &[f64]| {
            let tt = Tensor4::from_vec(t.shape(), x.to_vec()).unwrap();
            maxpool2(&tt).unwrap().0.dot(&up)
        };
        assert!(gradient_check(f, t.data(), g.data(), 1e-3).unwrap() < 1e-3);
    }

    #[test]
    fn outputs_come_from_their_window() {
        let mut r = rng(4);
        let t = rand_tensor::<f32>(&mut r, [2, 2, 6, 6]);
        let (o, idx) = maxpool2(&t).unwrap();
        let g = maxpool2_backward(&idx, &Tensor4::filled(o.shape(), 1.0)).unwrap();
        assert!(g.data().iter().filter(|&&v| v != 0.0).count() <= o.len());
        for (k, &i) in idx.argmax.iter().enumerate() {
            assert_eq!(t.data()[i], o.data()[k]);
        }
    }
}
