//! Central finite-difference utilities for verifying analytic gradients.
//! Used by the test suites; independent of any backward-pass code path.

use crate::nn::params::FlatParams;

/// Central finite differences of a scalar loss over one parameter block.
pub fn finite_diff_block(
    p: &mut FlatParams,
    block: usize,
    loss: &mut dyn FnMut(&FlatParams) -> f64,
    eps: f64,
) -> Vec<f64> {
    let range = {
        let b = &p.layout.blocks[block];
        b.offset..b.offset + b.len()
    };
    let mut out = Vec::with_capacity(range.len());
    for i in range {
        let orig = p.data[i];
        p.data[i] = orig + eps;
        let up = loss(p);
        p.data[i] = orig - eps;
        let down = loss(p);
        p.data[i] = orig;
        out.push((up - down) / (2.0 * eps));
    }
    out
}

/// Worst-case relative error between analytic and numeric gradients.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let denom = a.abs().max(n.abs()).max(1e-6);
            (a - n).abs() / denom
        })
        .fold(0.0, f64::max)
}
