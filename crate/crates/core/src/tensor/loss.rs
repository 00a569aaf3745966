use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<T> {
    pub value: T,
    pub grad_wrt_logit: Vec<T>,
}

/// Mean binary cross entropy on raw logits, in the log-sum-exp form
/// `max(z, 0) − z·y + ln(1 + e^{−|z|})`.
pub fn bce_with_logit<T: Scalar>(logits: &[T], labels: &[T]) -> Result<LossValue<T>> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(shape_err(
            "bce_with_logit",
            format!("{} labels", logits.len()),
            format!("{} labels", labels.len()),
        ));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != T::zero() && y != T::one()) {
        return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {bad}")));
    }
    let n = T::lit(logits.len() as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        total += z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - y) / n);
    }
    Ok(LossValue {
        value: total / n,
        grad_wrt_logit: grad,
    })
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
