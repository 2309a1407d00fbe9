//! Numerically stable scalar primitives.
//!
//! Everything that touches probabilities goes through log-space with
//! max-subtraction so that values like `exp(r / beta)` at `beta = 1e-3`
//! never overflow.

/// Log-sum-exp with max-subtraction.
///
/// Returns `NEG_INFINITY` for an empty slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Normalized log-probabilities of a logit vector: `v - logsumexp(v)`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp(logits);
    logits.iter().map(|v| v - lse).collect()
}

/// Stable logistic function. Uses the branch form so that `exp` is only
/// ever taken of a non-positive argument.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stable `log(sigmoid(z))`.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Kahan compensated accumulator for order-fixed deterministic sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}
