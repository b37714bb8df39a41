use crate::scalar::Real;
use crate::tensor::Tensor;

pub const SCORE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over all `B x classes` entries and its gradient
/// with respect to the scores. Scores are clamped to `[1e-7, 1 - 1e-7]`;
/// the gradient is zero where the clamp is active.
pub fn bce_loss<T: Real>(scores: &Tensor<T>, targets: &Tensor<T>) -> (f64, Tensor<T>) {
    assert_eq!(scores.shape(), targets.shape(), "bce_loss: shape mismatch");
    let n = scores.len() as f64;
    let mut grad = Tensor::zeros(scores.shape());
    let mut total = 0.0f64;
    for ((g, s), t) in grad
        .data_mut()
        .iter_mut()
        .zip(scores.data())
        .zip(targets.data())
    {
        let raw = s.as_f64();
        let s = raw.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
        let t = t.as_f64();
        total -= t * s.ln() + (1.0 - t) * (1.0 - s).ln();
        if raw == s {
            *g = T::lit((-(t / s) + (1.0 - t) / (1.0 - s)) / n);
        }
    }
    (total / n, grad)
}
