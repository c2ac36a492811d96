//! Scalar loss primitives shared by training and distillation.

const EPS: f64 = 1e-12;

/// Numerically stable tempered softmax: softmax(z / temperature) with
/// max-subtraction.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "temperature must be > 0");
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// -ln p\[true\], with p clamped at 1e-12.
pub fn cross_entropy(probs: &[f64], true_class: usize) -> f64 {
    -probs[true_class].max(EPS).ln()
}

/// KL(target || model) = sum t ln(t/m), with 0 ln 0 = 0 and m clamped.
pub fn kl_divergence(target: &[f64], model: &[f64]) -> f64 {
    target
        .iter()
        .zip(model)
        .map(|(&t, &m)| if t > 0.0 { t * (t / m.max(EPS)).ln() } else { 0.0 })
        .sum()
}

/// Squared Euclidean distance between two logit rows.
pub fn l2_logit_loss(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}
