//! Categorical action distribution over logits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// log softmax, numerically stabilized.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() + m;
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).iter().map(|l| l.exp()).collect()
}

pub fn sample_action(logits: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let probs = softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn log_prob(logits: &[f64], action: usize) -> f64 {
    log_softmax(logits)[action]
}

pub fn entropy(logits: &[f64]) -> f64 {
    log_softmax(logits)
        .iter()
        .map(|lp| -lp.exp() * lp)
        .sum()
}

/// d log_prob(action) / d logits.
pub fn dlogits_log_prob(logits: &[f64], action: usize) -> Vec<f64> {
    let probs = softmax(logits);
    (0..logits.len())
        .map(|j| if j == action { 1.0 - probs[j] } else { -probs[j] })
        .collect()
}

/// d entropy / d logits.
pub fn dlogits_entropy(logits: &[f64]) -> Vec<f64> {
    let lp = log_softmax(logits);
    let h: f64 = lp.iter().map(|l| -l.exp() * l).sum();
    lp.iter().map(|l| -l.exp() * (l + h)).collect()
}
