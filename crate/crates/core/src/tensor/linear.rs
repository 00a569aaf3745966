use crate::error::{shape_err, Result};
use crate::scalar::{axpy, dot, Scalar};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err("Matrix::from_vec", format!("{} values", rows * cols), format!("{}", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}

/// Fully connected layer: `y = x·W + b`, with `W` of shape d × m.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LinearGrads<T> {
    pub input: Matrix<T>,
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

fn check<T: Scalar>(input: &Matrix<T>, p: &LinearParams<T>) -> Result<()> {
    if input.cols != p.weights.rows || p.bias.len() != p.weights.cols {
        return Err(shape_err(
            "linear",
            format!(
                "input n×{} and bias of length {} for weights {}×{}",
                p.weights.rows, p.weights.cols, p.weights.rows, p.weights.cols
            ),
            format!("input {}×{}, bias {}", input.rows, input.cols, p.bias.len()),
        ));
    }
    Ok(())
}

pub fn linear<T: Scalar>(input: &Matrix<T>, p: &LinearParams<T>) -> Result<Matrix<T>> {
    check(input, p)?;
    let m = p.weights.cols;
    let mut out = Matrix::zeros(input.rows, m);
    for r in 0..input.rows {
        let dst = &mut out.data[r * m..(r + 1) * m];
        dst.copy_from_slice(&p.bias);
        for (k, &x) in input.row(r).iter().enumerate() {
            axpy(x, p.weights.row(k), dst);
        }
    }
    Ok(out)
}

pub fn linear_backward<T: Scalar>(input: &Matrix<T>, p: &LinearParams<T>, upstream: &Matrix<T>) -> Result<LinearGrads<T>> {
    check(input, p)?;
    let (n, d, m) = (input.rows, input.cols, p.weights.cols);
    if upstream.rows != n || upstream.cols != m {
        return Err(shape_err("linear_backward", format!("upstream {n}×{m}"), format!("{}×{}", upstream.rows, upstream.cols)));
    }
    let mut gi = Matrix::zeros(n, d);
    let mut gw = Matrix::zeros(d, m);
    let mut gb = vec![T::zero(); m];
    for r in 0..n {
        let g = upstream.row(r);
        for (b, &v) in gb.iter_mut().zip(g) {
            *b += v;
        }
        let x = input.row(r);
        for k in 0..d {
            gi.data[r * d + k] = dot(p.weights.row(k), g);
            axpy(x[k], g, &mut gw.data[k * m..(k + 1) * m]);
        }
    }
    Ok(LinearGrads {
        input: gi,
        weights: gw,
        bias: gb,
    })
}
