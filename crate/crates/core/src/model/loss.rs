use ndarray::NdFloat;

/// Mean binary cross-entropy on logits in the stable form
/// `max(x, 0) − x·y + ln(1 + e^{−|x|})`.
pub fn bce_loss<F: NdFloat>(logits: &[F], labels: &[F]) -> F {
    assert_eq!(logits.len(), labels.len(), "logits and labels differ in length");
    if logits.is_empty() {
        return F::zero();
    }
    let total = logits
        .iter()
        .zip(labels)
        .fold(F::zero(), |acc, (&x, &y)| acc + bce_term(x, y));
    total / F::from(logits.len()).unwrap()
}

pub(crate) fn bce_term<F: NdFloat>(x: F, y: F) -> F {
    x.max(F::zero()) - x * y + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<F: NdFloat>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}
