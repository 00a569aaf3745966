use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Central differences `(f(x+ε·e_i) − f(x−ε·e_i)) / 2ε` for every coordinate.
pub fn numeric_gradient<T: Scalar>(mut f: impl FnMut(&[T]) -> T, x: &[T], epsilon: T) -> Result<Vec<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut probe = x.to_vec();
    let two_eps = epsilon + epsilon;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + epsilon;
        let up = f(&probe);
        probe[i] = x[i] - epsilon;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        out.push((up - down) / two_eps);
    }
    Ok(out)
}

/// `|a − b| / max(|a|, |b|, 1e-8)`
pub fn relative_error<T: Scalar>(a: T, b: T) -> T {
    let denom = a.abs().max(b.abs()).max(T::lit(1e-8));
    (a - b).abs() / denom
}

/// Largest relative error between `analytic` and the central-difference
/// gradient of `f` at `x`.
pub fn gradient_check<T: Scalar>(f: impl FnMut(&[T]) -> T, x: &[T], analytic: &[T], epsilon: T) -> Result<T> {
    if analytic.len() != x.len() {
        return Err(shape_err("gradient_check", format!("{} gradient values", x.len()), format!("{}", analytic.len())));
    }
    let numeric = numeric_gradient(f, x, epsilon)?;
    Ok(numeric
        .iter()
        .zip(analytic)
        .map(|(&n, &a)| relative_error(a, n))
        .fold(T::zero(), T::max))
}
