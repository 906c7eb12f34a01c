//! Flat parameter storage with a named block layout.
//!
//! All weights of a network live in one contiguous `Vec<f64>`; layers
//! hold block ids resolving to slices. Optimizer state, gradient
//! clipping, checkpointing, and per-block finite-difference checks all
//! operate on the flat vector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl BlockSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamLayout {
    pub blocks: Vec<BlockSpec>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a matrix block (cols = 1 for vectors).
    pub fn add(&mut self, name: &str, rows: usize, cols: usize) -> BlockId {
        let id = BlockId(self.blocks.len());
        self.blocks.push(BlockSpec {
            name: name.to_string(),
            rows,
            cols,
            offset: self.total,
        });
        self.total += rows * cols;
        id
    }

    pub fn range(&self, id: BlockId) -> std::ops::Range<usize> {
        let b = &self.blocks[id.0];
        b.offset..b.offset + b.len()
    }

    /// Canonical description of the layout; hashed into checkpoints.
    pub fn arch_string(&self) -> String {
        self.blocks
            .iter()
            .map(|b| format!("{}:{}x{}", b.name, b.rows, b.cols))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Parameters (or a congruent gradient buffer) over a layout.
#[derive(Debug, Clone)]
pub struct FlatParams {
    pub layout: std::sync::Arc<ParamLayout>,
    pub data: Vec<f64>,
}

impl FlatParams {
    pub fn zeros(layout: std::sync::Arc<ParamLayout>) -> Self {
        let data = vec![0.0; layout.total];
        FlatParams { layout, data }
    }

    pub fn block(&self, id: BlockId) -> &[f64] {
        &self.data[self.layout.range(id)]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut [f64] {
        let r = self.layout.range(id);
        &mut self.data[r]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn assert_finite(&self, location: &str) -> crate::error::Result<()> {
        for b in &self.layout.blocks {
            if self.data[b.offset..b.offset + b.len()]
                .iter()
                .any(|x| !x.is_finite())
            {
                return Err(crate::error::UleeError::Numerical {
                    location: location.to_string(),
                    detail: format!("non-finite values in block {}", b.name),
                });
            }
        }
        Ok(())
    }

    /// Name of the first block containing a non-finite gradient, if any.
    pub fn first_nonfinite_block(&self) -> Option<&str> {
        self.layout
            .blocks
            .iter()
            .find(|b| {
                self.data[b.offset..b.offset + b.len()]
                    .iter()
                    .any(|x| !x.is_finite())
            })
            .map(|b| b.name.as_str())
    }

    pub fn global_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }
}

/// Fills a matrix block with a (semi-)orthogonal matrix scaled by `gain`,
/// via modified Gram-Schmidt on Gaussian columns.
pub fn orthogonal_init(params: &mut FlatParams, id: BlockId, gain: f64, rng: &mut ChaCha8Rng) {
    let (rows, cols) = {
        let b = &params.layout.blocks[id.0];
        (b.rows, b.cols)
    };
    let (m, n, transpose) = if rows >= cols {
        (rows, cols, false)
    } else {
        (cols, rows, true)
    };
    // m x n Gaussian, m >= n; orthonormalize the n columns.
    let mut a: Vec<f64> = (0..m * n)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = (0..m).map(|i| a[i * n + j] * a[i * n + k]).sum();
            for i in 0..m {
                a[i * n + j] -= dot * a[i * n + k];
            }
        }
        let norm: f64 = (0..m).map(|i| a[i * n + j] * a[i * n + j]).sum::<f64>().sqrt();
        let inv = if norm > 1e-12 { 1.0 / norm } else { 0.0 };
        for i in 0..m {
            a[i * n + j] *= inv;
        }
    }
    let block = params.block_mut(id);
    for r in 0..rows {
        for c in 0..cols {
            let v = if transpose { a[c * n + r] } else { a[r * n + c] };
            block[r * cols + c] = gain * v;
        }
    }
}

/// Gaussian init with the given standard deviation.
pub fn normal_init(params: &mut FlatParams, id: BlockId, std: f64, rng: &mut ChaCha8Rng) {
    let r = params.layout.range(id);
    for x in &mut params.data[r] {
        let g: f64 = StandardNormal.sample(rng);
        *x = g * std;
    }
}

/// Uniform init in [-bound, bound].
pub fn uniform_init(params: &mut FlatParams, id: BlockId, bound: f64, rng: &mut ChaCha8Rng) {
    let r = params.layout.range(id);
    for x in &mut params.data[r] {
        *x = rng.gen_range(-bound..bound);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::sync::Arc;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut layout = ParamLayout::new();
        let id = layout.add("w", 8, 4);
        let mut p = FlatParams::zeros(Arc::new(layout));
        orthogonal_init(&mut p, id, 1.0, &mut stream(1, "init", 0));
        let w = p.block(id);
        for j in 0..4 {
            for k in 0..4 {
                let dot: f64 = (0..8).map(|i| w[i * 4 + j] * w[i * 4 + k]).sum();
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "col {j}x{k}: {dot}");
            }
        }
    }

    #[test]
    fn wide_matrix_rows_are_orthonormal() {
        let mut layout = ParamLayout::new();
        let id = layout.add("w", 3, 9);
        let mut p = FlatParams::zeros(Arc::new(layout));
        orthogonal_init(&mut p, id, 2.0, &mut stream(2, "init", 0));
        let w = p.block(id);
        for j in 0..3 {
            let dot: f64 = (0..9).map(|i| w[j * 9 + i] * w[j * 9 + i]).sum();
            assert!((dot - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn layout_offsets_are_disjoint() {
        let mut layout = ParamLayout::new();
        let a = layout.add("a", 2, 3);
        let b = layout.add("b", 4, 1);
        assert_eq!(layout.range(a), 0..6);
        assert_eq!(layout.range(b), 6..10);
        assert_eq!(layout.total, 10);
        assert_eq!(layout.arch_string(), "a:2x3;b:4x1");
    }
}
