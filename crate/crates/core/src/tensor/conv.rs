use super::Tensor4;
use crate::error::{shape_err, Error, Result};
use crate::scalar::{axpy, dot, Scalar};

/// Weights and geometry of a 2-D convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    /// (out_c, in_c, kh, kw)
    pub weights: Tensor4<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weights: Tensor4<T>,
    pub bias: Vec<T>,
}

/// `⌊(input + 2·padding − kernel) / stride⌋ + 1`, or `None` when the kernel
/// does not fit the padded input.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct Geometry {
    n: usize,
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }
}

fn geometry<T: Scalar>(input: &Tensor4<T>, params: &ConvParams<T>) -> Result<Geometry> {
    let [n, in_c, h, w] = input.shape();
    let [out_c, w_in_c, kh, kw] = params.weights.shape();
    if w_in_c != in_c {
        return Err(shape_err(
            "conv2d",
            format!("input with {w_in_c} channels to match weights {:?}", params.weights.shape()),
            format!("input {:?}", input.shape()),
        ));
    }
    if params.bias.len() != out_c {
        return Err(shape_err("conv2d", format!("bias of length {out_c}"), format!("length {}", params.bias.len())));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel must have odd size, got {kh}x{kw}")));
    }
    let (Some(oh), Some(ow)) = (
        conv_output_size(h, kh, params.stride, params.padding),
        conv_output_size(w, kw, params.stride, params.padding),
    ) else {
        return Err(shape_err(
            "conv2d",
            format!(
                "spatial size compatible with kernel {kh}x{kw}, stride {}, padding {}",
                params.stride, params.padding
            ),
            format!("input {:?}", input.shape()),
        ));
    };
    Ok(Geometry {
        n,
        in_c,
        h,
        w,
        out_c,
        kh,
        kw,
        oh,
        ow,
        stride: params.stride,
        pad: params.padding,
    })
}

/// Unfolds one sample into a (in_c·kh·kw) × (oh·ow) matrix, zero padded.
fn im2col<T: Scalar>(g: &Geometry, sample: &[T], col: &mut [T]) {
    let p = g.p();
    for c in 0..g.in_c {
        let plane = &sample[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &mut col[((c * g.kh + ky) * g.kw + kx) * p..][..p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Folds a column matrix back, accumulating into the sample's gradient.
fn col2im<T: Scalar>(g: &Geometry, col: &[T], sample: &mut [T]) {
    let p = g.p();
    for c in 0..g.in_c {
        let plane = &mut sample[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &col[((c * g.kh + ky) * g.kw + kx) * p..][..p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += row[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `input` with `params.weights`, plus bias.
pub fn conv2d<T: Scalar>(input: &Tensor4<T>, params: &ConvParams<T>) -> Result<Tensor4<T>> {
    let g = geometry(input, params)?;
    let (k, p) = (g.k(), g.p());
    let mut out = Tensor4::zeros([g.n, g.out_c, g.oh, g.ow]);
    let mut col = vec![T::zero(); k * p];
    let wts = params.weights.data();
    for s in 0..g.n {
        im2col(&g, input.sample(s), &mut col);
        let dst = &mut out.data_mut()[s * g.out_c * p..(s + 1) * g.out_c * p];
        for oc in 0..g.out_c {
            let row = &mut dst[oc * p..(oc + 1) * p];
            row.fill(params.bias[oc]);
            let wrow = &wts[oc * k..(oc + 1) * k];
            for (ki, &wv) in wrow.iter().enumerate() {
                axpy(wv, &col[ki * p..(ki + 1) * p], row);
            }
        }
    }
    Ok(out)
}

/// Gradients of `sum(conv2d(input) ⊙ upstream)` with respect to the input,
/// the weights and the bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    params: &ConvParams<T>,
    upstream: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let (gi, weights, bias) = backward_impl(input, params, upstream, true)?;
    Ok(ConvGrads {
        input: gi.expect("input gradient requested"),
        weights,
        bias,
    })
}

/// Weight and bias gradients only; skips the input gradient, which nothing
/// consumes for a network's first layer.
pub fn conv2d_backward_params<T: Scalar>(
    input: &Tensor4<T>,
    params: &ConvParams<T>,
    upstream: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<T>)> {
    let (_, weights, bias) = backward_impl(input, params, upstream, false)?;
    Ok((weights, bias))
}

type BackwardParts<T> = (Option<Tensor4<T>>, Tensor4<T>, Vec<T>);

fn backward_impl<T: Scalar>(
    input: &Tensor4<T>,
    params: &ConvParams<T>,
    upstream: &Tensor4<T>,
    want_input: bool,
) -> Result<BackwardParts<T>> {
    let g = geometry(input, params)?;
    let expected = [g.n, g.out_c, g.oh, g.ow];
    if upstream.shape() != expected {
        return Err(shape_err("conv2d_backward", format!("upstream {expected:?}"), format!("{:?}", upstream.shape())));
    }
    let (k, p) = (g.k(), g.p());
    let wts = params.weights.data();
    let mut grad_input = want_input.then(|| Tensor4::zeros(input.shape()));
    let mut grad_w = Tensor4::zeros(params.weights.shape());
    let mut grad_b = vec![T::zero(); g.out_c];
    let mut col = vec![T::zero(); k * p];
    let mut gcol = vec![T::zero(); if want_input { k * p } else { 0 }];
    let sample_len = input.sample_len();
    for s in 0..g.n {
        im2col(&g, input.sample(s), &mut col);
        gcol.fill(T::zero());
        let up = upstream.sample(s);
        for oc in 0..g.out_c {
            let grow = &up[oc * p..(oc + 1) * p];
            grad_b[oc] += grow.iter().copied().sum();
            let gw = &mut grad_w.data_mut()[oc * k..(oc + 1) * k];
            for (ki, gwv) in gw.iter_mut().enumerate() {
                *gwv += dot(grow, &col[ki * p..(ki + 1) * p]);
            }
            if want_input {
                let wrow = &wts[oc * k..(oc + 1) * k];
                for (ki, &wv) in wrow.iter().enumerate() {
                    axpy(wv, grow, &mut gcol[ki * p..(ki + 1) * p]);
                }
            }
        }
        if let Some(gi) = grad_input.as_mut() {
            col2im(&g, &gcol, &mut gi.data_mut()[s * sample_len..(s + 1) * sample_len]);
        }
    }
    Ok((grad_input, grad_w, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradient_check;
    use crate::testutil::{rand_tensor, rand_vec, rng};
    use proptest::prelude::*;

    fn naive_conv(input: &Tensor4<f64>, p: &ConvParams<f64>) -> Tensor4<f64> {
        let [n, ic, h, w] = input.shape();
        let [oc, _, kh, kw] = p.weights.shape();
        let oh = (h + 2 * p.padding - kh) / p.stride + 1;
        let ow = (w + 2 * p.padding - kw) / p.stride + 1;
        let mut out = Tensor4::zeros([n, oc, oh, ow]);
        for b in 0..n {
            for o in 0..oc {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = p.bias[o];
                        for c in 0..ic {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (y * p.stride + ky) as isize - p.padding as isize;
                                    let ix = (x * p.stride + kx) as isize - p.padding as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += p.weights.get([o, c, ky, kx]) * input.get([b, c, iy as usize, ix as usize]);
                                    }
                                }
                            }
                        }
                        out.set([b, o, y, x], acc);
                    }
                }
            }
        }
        out
    }

    fn identity_kernel() -> ConvParams<f32> {
        let mut weights = Tensor4::zeros([1, 1, 3, 3]);
        weights.set([0, 0, 1, 1], 1.0);
        ConvParams {
            weights,
            bias: vec![0.0],
            stride: 1,
            padding: 1,
        }
    }

    #[test]
    fn identity_kernel_is_passthrough() {
        let input = Tensor4::from_vec([1, 1, 3, 3], (1..=9).map(|v| v as f32).collect()).unwrap();
        let out = conv2d(&input, &identity_kernel()).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn constant_input_all_ones_kernel() {
        let input = Tensor4::filled([1, 1, 5, 5], 2.0f32);
        let p = ConvParams {
            weights: Tensor4::filled([1, 1, 3, 3], 1.0),
            bias: vec![0.5],
            stride: 1,
            padding: 0,
        };
        let out = conv2d(&input, &p).unwrap();
        assert_eq!(out.shape(), [1, 1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 18.5));
    }

    #[test]
    fn matches_naive_loops() {
        let mut r = rng(11);
        for _ in 0..5 {
            let input = rand_tensor(&mut r, [2, 4, 8, 8]);
            let p = ConvParams {
                weights: rand_tensor(&mut r, [6, 4, 3, 3]),
                bias: rand_vec(&mut r, 6),
                stride: 2,
                padding: 1,
            };
            let fast = conv2d(&input, &p).unwrap();
            let slow = naive_conv(&input, &p);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let input = Tensor4::<f32>::zeros([1, 2, 4, 4]);
        let err = conv2d(&input, &identity_kernel()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 1, 3, 3]"), "{msg}");
    }

    #[test]
    fn rejects_kernel_larger_than_input() {
        let input = Tensor4::<f32>::zeros([1, 1, 2, 2]);
        let mut p = identity_kernel();
        p.padding = 0;
        assert!(conv2d(&input, &p).is_err());
    }

    #[test]
    fn backward_zero_upstream() {
        let mut r = rng(3);
        let input = rand_tensor::<f32>(&mut r, [1, 2, 5, 5]);
        let p = ConvParams {
            weights: rand_tensor(&mut r, [3, 2, 3, 3]),
            bias: rand_vec(&mut r, 3),
            stride: 1,
            padding: 1,
        };
        let g = conv2d_backward(&input, &p, &Tensor4::zeros([1, 3, 5, 5])).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_identity_passthrough() {
        let mut r = rng(4);
        let input = rand_tensor::<f32>(&mut r, [1, 1, 6, 6]);
        let up = rand_tensor::<f32>(&mut r, [1, 1, 6, 6]);
        let g = conv2d_backward(&input, &identity_kernel(), &up).unwrap();
        assert_eq!(g.input, up);
    }

    #[test]
    fn backward_rejects_bad_upstream() {
        let input = Tensor4::<f32>::zeros([1, 1, 6, 6]);
        assert!(conv2d_backward(&input, &identity_kernel(), &Tensor4::zeros([1, 1, 5, 5])).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng(5);
        for (stride, padding) in [(1, 1), (2, 1), (1, 0)] {
            let input = rand_tensor::<f64>(&mut r, [2, 2, 5, 5]);
            let p = ConvParams {
                weights: rand_tensor(&mut r, [3, 2, 3, 3]),
                bias: rand_vec(&mut r, 3),
                stride,
                padding,
            };
            let out_shape = conv2d(&input, &p).unwrap().shape();
            let up = rand_tensor::<f64>(&mut r, out_shape);
            let g = conv2d_backward(&input, &p, &up).unwrap();

            let f_in = |x: &[f64]| {
                let t = Tensor4::from_vec(input.shape(), x.to_vec()).unwrap();
                conv2d(&t, &p).unwrap().dot(&up)
            };
            assert!(gradient_check(f_in, input.data(), g.input.data(), 1e-3).unwrap() < 1e-3);

            let f_w = |x: &[f64]| {
                let mut q = p.clone();
                q.weights = Tensor4::from_vec(p.weights.shape(), x.to_vec()).unwrap();
                conv2d(&input, &q).unwrap().dot(&up)
            };
            assert!(gradient_check(f_w, p.weights.data(), g.weights.data(), 1e-3).unwrap() < 1e-3);

            let f_b = |x: &[f64]| {
                let mut q = p.clone();
                q.bias = x.to_vec();
                conv2d(&input, &q).unwrap().dot(&up)
            };
            assert!(gradient_check(f_b, &p.bias, &g.bias, 1e-3).unwrap() < 1e-3);
        }
    }

    proptest! {
        #[test]
        fn output_shape_formula(h in 1usize..12, w in 1usize..12, pad in 0usize..3, stride in 1usize..4, k in prop::sample::select(vec![1usize, 3, 5])) {
            let input = Tensor4::<f32>::zeros([1, 1, h, w]);
            let p = ConvParams { weights: Tensor4::zeros([2, 1, k, k]), bias: vec![0.0; 2], stride, padding: pad };
            match (conv_output_size(h, k, stride, pad), conv_output_size(w, k, stride, pad)) {
                (Some(oh), Some(ow)) => {
                    prop_assert_eq!(oh, (h + 2 * pad - k) / stride + 1);
                    prop_assert_eq!(conv2d(&input, &p).unwrap().shape(), [1, 2, oh, ow]);
                }
                _ => prop_assert!(conv2d(&input, &p).is_err()),
            }
        }
    }
}
