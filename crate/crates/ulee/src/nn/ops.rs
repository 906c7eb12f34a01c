//! Layer primitives with explicit forward and backward passes.
//!
//! Everything operates on the flat parameter vector; gradients accumulate
//! into a congruent flat buffer. All math is f64.

use crate::nn::params::{BlockId, FlatParams, ParamLayout};

#[inline]
pub fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(y.len(), rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        y[r] = acc;
    }
}

/// dx += W^T dy
#[inline]
pub fn matvec_transpose_acc(w: &[f64], rows: usize, cols: usize, dy: &[f64], dx: &mut [f64]) {
    for r in 0..rows {
        let g = dy[r];
        if g == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            dx[c] += row[c] * g;
        }
    }
}

/// dW += dy x^T
#[inline]
pub fn outer_acc(dw: &mut [f64], rows: usize, cols: usize, dy: &[f64], x: &[f64]) {
    for r in 0..rows {
        let g = dy[r];
        if g == 0.0 {
            continue;
        }
        let drow = &mut dw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            drow[c] += g * x[c];
        }
    }
}

#[inline]
pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// dx = dy where the forward output was positive, else 0. `y` is the
/// post-activation value.
#[inline]
pub fn relu_backward(y: &[f64], dy: &mut [f64]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fully connected layer.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: BlockId,
    pub b: BlockId,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, name: &str, inp: usize, out: usize) -> Self {
        let w = layout.add(&format!("{name}.w"), out, inp);
        let b = layout.add(&format!("{name}.b"), out, 1);
        Linear { w, b, inp, out }
    }

    pub fn forward(&self, p: &FlatParams, x: &[f64], y: &mut [f64]) {
        matvec(p.block(self.w), self.out, self.inp, x, y);
        let b = p.block(self.b);
        for (v, bv) in y.iter_mut().zip(b) {
            *v += bv;
        }
    }

    /// Accumulates weight/bias grads and input grad.
    pub fn backward(
        &self,
        p: &FlatParams,
        g: &mut FlatParams,
        x: &[f64],
        dy: &[f64],
        dx: &mut [f64],
    ) {
        outer_acc(g.block_mut(self.w), self.out, self.inp, dy, x);
        for (db, d) in g.block_mut(self.b).iter_mut().zip(dy) {
            *db += d;
        }
        matvec_transpose_acc(p.block(self.w), self.out, self.inp, dy, dx);
    }
}

/// Lookup table producing `dim`-vectors.
#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: BlockId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(layout: &mut ParamLayout, name: &str, vocab: usize, dim: usize) -> Self {
        let table = layout.add(&format!("{name}.emb"), vocab, dim);
        Embedding { table, vocab, dim }
    }

    pub fn forward(&self, p: &FlatParams, index: usize, out: &mut [f64]) {
        debug_assert!(index < self.vocab);
        out.copy_from_slice(&p.block(self.table)[index * self.dim..(index + 1) * self.dim]);
    }

    pub fn backward(&self, g: &mut FlatParams, index: usize, dout: &[f64]) {
        let row = &mut g.block_mut(self.table)[index * self.dim..(index + 1) * self.dim];
        for (gv, d) in row.iter_mut().zip(dout) {
            *gv += d;
        }
    }
}

/// 3x3 same-padding convolution over a square grid. Activations are laid
/// out cell-major: value(cell r*g+c, channel k) = x[(r*g+c)*ch + k].
#[derive(Debug, Clone, Copy)]
pub struct Conv3x3 {
    pub w: BlockId,
    pub b: BlockId,
    pub grid: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv3x3 {
    pub fn new(layout: &mut ParamLayout, name: &str, grid: usize, c_in: usize, c_out: usize) -> Self {
        let w = layout.add(&format!("{name}.w"), c_out, 9 * c_in);
        let b = layout.add(&format!("{name}.b"), c_out, 1);
        Conv3x3 {
            w,
            b,
            grid,
            c_in,
            c_out,
        }
    }

    pub fn in_len(&self) -> usize {
        self.grid * self.grid * self.c_in
    }

    pub fn out_len(&self) -> usize {
        self.grid * self.grid * self.c_out
    }

    fn gather(&self, x: &[f64], r: usize, c: usize, patch: &mut [f64]) {
        let g = self.grid as i32;
        let mut i = 0;
        for dr in -1..=1i32 {
            for dc in -1..=1i32 {
                let rr = r as i32 + dr;
                let cc = c as i32 + dc;
                let dst = &mut patch[i * self.c_in..(i + 1) * self.c_in];
                if rr >= 0 && rr < g && cc >= 0 && cc < g {
                    let base = (rr as usize * self.grid + cc as usize) * self.c_in;
                    dst.copy_from_slice(&x[base..base + self.c_in]);
                } else {
                    dst.fill(0.0);
                }
                i += 1;
            }
        }
    }

    pub fn forward(&self, p: &FlatParams, x: &[f64], y: &mut [f64], patch: &mut [f64]) {
        debug_assert_eq!(patch.len(), 9 * self.c_in);
        let w = p.block(self.w);
        let b = p.block(self.b);
        for r in 0..self.grid {
            for c in 0..self.grid {
                self.gather(x, r, c, patch);
                let out = &mut y[(r * self.grid + c) * self.c_out..][..self.c_out];
                matvec(w, self.c_out, 9 * self.c_in, patch, out);
                for (v, bv) in out.iter_mut().zip(b) {
                    *v += bv;
                }
            }
        }
    }

    pub fn backward(
        &self,
        p: &FlatParams,
        g: &mut FlatParams,
        x: &[f64],
        dy: &[f64],
        dx: &mut [f64],
        patch: &mut [f64],
    ) {
        let grid = self.grid;
        let gi = grid as i32;
        for r in 0..grid {
            for c in 0..grid {
                let dout = &dy[(r * grid + c) * self.c_out..][..self.c_out];
                self.gather(x, r, c, patch);
                outer_acc(g.block_mut(self.w), self.c_out, 9 * self.c_in, dout, patch);
                for (db, d) in g.block_mut(self.b).iter_mut().zip(dout) {
                    *db += d;
                }
                // Scatter W^T dout back to the neighborhood.
                let w = p.block(self.w);
                let mut i = 0;
                for dr in -1..=1i32 {
                    for dc in -1..=1i32 {
                        let rr = r as i32 + dr;
                        let cc = c as i32 + dc;
                        if rr >= 0 && rr < gi && cc >= 0 && cc < gi {
                            let base = (rr as usize * grid + cc as usize) * self.c_in;
                            for k in 0..self.c_out {
                                let gk = dout[k];
                                if gk == 0.0 {
                                    continue;
                                }
                                let wrow = &w[k * 9 * self.c_in + i * self.c_in..][..self.c_in];
                                for ch in 0..self.c_in {
                                    dx[base + ch] += gk * wrow[ch];
                                }
                            }
                        }
                        i += 1;
                    }
                }
            }
        }
    }
}

/// Gated recurrent cell.
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub wz: BlockId,
    pub uz: BlockId,
    pub bz: BlockId,
    pub wr: BlockId,
    pub ur: BlockId,
    pub br: BlockId,
    pub wh: BlockId,
    pub uh: BlockId,
    pub bh: BlockId,
    pub inp: usize,
    pub hidden: usize,
}

/// Saved activations from one cell application, needed for backward.
#[derive(Debug, Clone, Default)]
pub struct GruCache {
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub hh: Vec<f64>,
}

impl GruCell {
    pub fn new(layout: &mut ParamLayout, name: &str, inp: usize, hidden: usize) -> Self {
        GruCell {
            wz: layout.add(&format!("{name}.wz"), hidden, inp),
            uz: layout.add(&format!("{name}.uz"), hidden, hidden),
            bz: layout.add(&format!("{name}.bz"), hidden, 1),
            wr: layout.add(&format!("{name}.wr"), hidden, inp),
            ur: layout.add(&format!("{name}.ur"), hidden, hidden),
            br: layout.add(&format!("{name}.br"), hidden, 1),
            wh: layout.add(&format!("{name}.wh"), hidden, inp),
            uh: layout.add(&format!("{name}.uh"), hidden, hidden),
            bh: layout.add(&format!("{name}.bh"), hidden, 1),
            inp,
            hidden,
        }
    }

    /// h <- GRU(x, h). When `cache` is given, saves what backward needs.
    pub fn forward(
        &self,
        p: &FlatParams,
        x: &[f64],
        h: &mut Vec<f64>,
        mut cache: Option<&mut GruCache>,
    ) {
        let n = self.hidden;
        let mut z = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut hh = vec![0.0; n];
        let mut tmp = vec![0.0; n];

        matvec(p.block(self.wz), n, self.inp, x, &mut z);
        matvec(p.block(self.uz), n, n, h, &mut tmp);
        for i in 0..n {
            z[i] = sigmoid(z[i] + tmp[i] + p.block(self.bz)[i]);
        }
        matvec(p.block(self.wr), n, self.inp, x, &mut r);
        matvec(p.block(self.ur), n, n, h, &mut tmp);
        for i in 0..n {
            r[i] = sigmoid(r[i] + tmp[i] + p.block(self.br)[i]);
        }
        let rh: Vec<f64> = (0..n).map(|i| r[i] * h[i]).collect();
        matvec(p.block(self.wh), n, self.inp, x, &mut hh);
        matvec(p.block(self.uh), n, n, &rh, &mut tmp);
        for i in 0..n {
            hh[i] = (hh[i] + tmp[i] + p.block(self.bh)[i]).tanh();
        }
        if let Some(c) = cache.as_deref_mut() {
            c.h_prev.clear();
            c.h_prev.extend_from_slice(h);
            c.z = z.clone();
            c.r = r.clone();
            c.hh = hh.clone();
        }
        for i in 0..n {
            h[i] = (1.0 - z[i]) * h[i] + z[i] * hh[i];
        }
    }

    /// Backward through one application. `dh_new` is the gradient on the
    /// updated state; accumulates into dx and returns the gradient on the
    /// previous state in `dh_prev` (overwritten).
    pub fn backward(
        &self,
        p: &FlatParams,
        g: &mut FlatParams,
        x: &[f64],
        cache: &GruCache,
        dh_new: &[f64],
        dx: &mut [f64],
        dh_prev: &mut [f64],
    ) {
        let n = self.hidden;
        let (h, z, r, hh) = (&cache.h_prev, &cache.z, &cache.r, &cache.hh);

        let mut da_h = vec![0.0; n]; // pre-tanh candidate grad
        let mut da_z = vec![0.0; n];
        let mut da_r = vec![0.0; n];
        let mut drh = vec![0.0; n];
        for i in 0..n {
            dh_prev[i] = dh_new[i] * (1.0 - z[i]);
            let dz = dh_new[i] * (hh[i] - h[i]);
            da_z[i] = dz * z[i] * (1.0 - z[i]);
            let dhh = dh_new[i] * z[i];
            da_h[i] = dhh * (1.0 - hh[i] * hh[i]);
        }
        matvec_transpose_acc(p.block(self.uh), n, n, &da_h, &mut drh);
        for i in 0..n {
            dh_prev[i] += drh[i] * r[i];
            da_r[i] = drh[i] * h[i] * r[i] * (1.0 - r[i]);
        }
        matvec_transpose_acc(p.block(self.uz), n, n, &da_z, dh_prev);
        matvec_transpose_acc(p.block(self.ur), n, n, &da_r, dh_prev);
        matvec_transpose_acc(p.block(self.wz), n, self.inp, &da_z, dx);
        matvec_transpose_acc(p.block(self.wr), n, self.inp, &da_r, dx);
        matvec_transpose_acc(p.block(self.wh), n, self.inp, &da_h, dx);

        let rh: Vec<f64> = (0..n).map(|i| r[i] * h[i]).collect();
        outer_acc(g.block_mut(self.wz), n, self.inp, &da_z, x);
        outer_acc(g.block_mut(self.uz), n, n, &da_z, h);
        outer_acc(g.block_mut(self.wr), n, self.inp, &da_r, x);
        outer_acc(g.block_mut(self.ur), n, n, &da_r, h);
        outer_acc(g.block_mut(self.wh), n, self.inp, &da_h, x);
        outer_acc(g.block_mut(self.uh), n, n, &da_h, &rh);
        for i in 0..n {
            g.block_mut(self.bz)[i] += da_z[i];
            g.block_mut(self.br)[i] += da_r[i];
            g.block_mut(self.bh)[i] += da_h[i];
        }
    }
}

/// Two-hidden-layer ReLU MLP head.
#[derive(Debug, Clone, Copy)]
pub struct MlpHead {
    pub l1: Linear,
    pub l2: Linear,
    pub out: Linear,
}

/// Hidden activations of one head application.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

impl MlpHead {
    pub fn new(layout: &mut ParamLayout, name: &str, inp: usize, width: usize, out: usize) -> Self {
        MlpHead {
            l1: Linear::new(layout, &format!("{name}.l1"), inp, width),
            l2: Linear::new(layout, &format!("{name}.l2"), width, width),
            out: Linear::new(layout, &format!("{name}.out"), width, out),
        }
    }

    pub fn forward(&self, p: &FlatParams, x: &[f64], y: &mut [f64], cache: Option<&mut MlpCache>) {
        let mut a1 = vec![0.0; self.l1.out];
        let mut a2 = vec![0.0; self.l2.out];
        self.l1.forward(p, x, &mut a1);
        relu_inplace(&mut a1);
        self.l2.forward(p, &a1, &mut a2);
        relu_inplace(&mut a2);
        self.out.forward(p, &a2, y);
        if let Some(c) = cache {
            c.a1 = a1;
            c.a2 = a2;
        }
    }

    pub fn backward(
        &self,
        p: &FlatParams,
        g: &mut FlatParams,
        x: &[f64],
        cache: &MlpCache,
        dy: &[f64],
        dx: &mut [f64],
    ) {
        let mut da2 = vec![0.0; self.l2.out];
        let mut da1 = vec![0.0; self.l1.out];
        self.out.backward(p, g, &cache.a2, dy, &mut da2);
        relu_backward(&cache.a2, &mut da2);
        self.l2.backward(p, g, &cache.a1, &da2, &mut da1);
        relu_backward(&cache.a1, &mut da1);
        self.l1.backward(p, g, x, &da1, dx);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{normal_init, FlatParams, ParamLayout};
    use crate::rng::stream;
    use std::sync::Arc;

    use crate::nn::gradcheck::{finite_diff_block, max_rel_err};

    #[test]
    fn linear_gradcheck() {
        let mut layout = ParamLayout::new();
        let lin = Linear::new(&mut layout, "lin", 5, 3);
        let layout = Arc::new(layout);
        let mut p = FlatParams::zeros(layout.clone());
        let mut rng = stream(1, "gc", 0);
        normal_init(&mut p, lin.w, 0.5, &mut rng);
        normal_init(&mut p, lin.b, 0.5, &mut rng);
        let x: Vec<f64> = (0..5).map(|i| (i as f64) * 0.3 - 0.7).collect();
        // loss = sum of squares of outputs
        let mut loss = |p: &FlatParams| {
            let mut y = vec![0.0; 3];
            lin.forward(p, &x, &mut y);
            y.iter().map(|v| v * v).sum::<f64>()
        };
        let mut g = FlatParams::zeros(layout.clone());
        let mut y = vec![0.0; 3];
        lin.forward(&p, &x, &mut y);
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let mut dx = vec![0.0; 5];
        lin.backward(&p, &mut g, &x, &dy, &mut dx);
        for b in 0..2 {
            let num = finite_diff_block(&mut p, b, &mut loss, 1e-6);
            let r = layout.range(crate::nn::params::BlockId(b));
            assert!(max_rel_err(&g.data[r], &num) < 1e-7);
        }
    }

    #[test]
    fn gru_gradcheck_multi_step() {
        let mut layout = ParamLayout::new();
        let cell = GruCell::new(&mut layout, "gru", 3, 4);
        let layout = Arc::new(layout);
        let mut p = FlatParams::zeros(layout.clone());
        let mut rng = stream(2, "gc", 0);
        for b in 0..layout.blocks.len() {
            normal_init(&mut p, crate::nn::params::BlockId(b), 0.4, &mut rng);
        }
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|t| (0..3).map(|i| ((t * 3 + i) as f64 * 0.37).sin()).collect())
            .collect();
        let run = |p: &FlatParams| {
            let mut h = vec![0.0; 4];
            for x in &xs {
                cell.forward(p, x, &mut h, None);
            }
            h.iter().map(|v| v * v).sum::<f64>()
        };
        // Analytic: forward with caches, then BPTT.
        let mut h = vec![0.0; 4];
        let mut caches = Vec::new();
        for x in &xs {
            let mut c = GruCache::default();
            cell.forward(&p, x, &mut h, Some(&mut c));
            caches.push(c);
        }
        let mut g = FlatParams::zeros(layout.clone());
        let mut dh: Vec<f64> = h.iter().map(|v| 2.0 * v).collect();
        for t in (0..3).rev() {
            let mut dx = vec![0.0; 3];
            let mut dh_prev = vec![0.0; 4];
            cell.backward(&p, &mut g, &xs[t], &caches[t], &dh, &mut dx, &mut dh_prev);
            dh = dh_prev;
        }
        let mut loss = |p: &FlatParams| run(p);
        for b in 0..layout.blocks.len() {
            let num = finite_diff_block(&mut p, b, &mut loss, 1e-6);
            let r = layout.range(crate::nn::params::BlockId(b));
            let err = max_rel_err(&g.data[r], &num);
            assert!(err < 1e-6, "block {b} rel err {err}");
        }
    }

    #[test]
    fn conv_gradcheck() {
        let mut layout = ParamLayout::new();
        let conv = Conv3x3::new(&mut layout, "conv", 4, 2, 3);
        let layout = Arc::new(layout);
        let mut p = FlatParams::zeros(layout.clone());
        let mut rng = stream(3, "gc", 0);
        normal_init(&mut p, conv.w, 0.4, &mut rng);
        normal_init(&mut p, conv.b, 0.4, &mut rng);
        let x: Vec<f64> = (0..conv.in_len()).map(|i| ((i as f64) * 0.11).cos()).collect();
        let mut loss = |p: &FlatParams| {
            let mut y = vec![0.0; conv.out_len()];
            let mut patch = vec![0.0; 18];
            conv.forward(p, &x, &mut y, &mut patch);
            y.iter().map(|v| v * v).sum::<f64>()
        };
        let mut y = vec![0.0; conv.out_len()];
        let mut patch = vec![0.0; 18];
        conv.forward(&p, &x, &mut y, &mut patch);
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let mut g = FlatParams::zeros(layout.clone());
        let mut dx = vec![0.0; conv.in_len()];
        conv.backward(&p, &mut g, &x, &dy, &mut dx, &mut patch);
        for b in 0..2 {
            let num = finite_diff_block(&mut p, b, &mut loss, 1e-6);
            let r = layout.range(crate::nn::params::BlockId(b));
            assert!(max_rel_err(&g.data[r], &num) < 1e-6);
        }
        // dx check against finite differences on the input.
        for i in [0, 7, 13] {
            let orig = x[i];
            let mut xp = x.clone();
            xp[i] = orig + 1e-6;
            let mut xm = x.clone();
            xm[i] = orig - 1e-6;
            let f = |xx: &[f64]| {
                let mut y = vec![0.0; conv.out_len()];
                let mut patch = vec![0.0; 18];
                conv.forward(&p, xx, &mut y, &mut patch);
                y.iter().map(|v| v * v).sum::<f64>()
            };
            let num = (f(&xp) - f(&xm)) / 2e-6;
            assert!((num - dx[i]).abs() / num.abs().max(1e-6) < 1e-6);
        }
    }

    #[test]
    fn mlp_head_gradcheck() {
        let mut layout = ParamLayout::new();
        let head = MlpHead::new(&mut layout, "head", 4, 5, 2);
        let layout = Arc::new(layout);
        let mut p = FlatParams::zeros(layout.clone());
        let mut rng = stream(4, "gc", 0);
        for b in 0..layout.blocks.len() {
            normal_init(&mut p, crate::nn::params::BlockId(b), 0.5, &mut rng);
        }
        let x: Vec<f64> = vec![0.3, -0.2, 0.8, -0.5];
        let mut loss = |p: &FlatParams| {
            let mut y = vec![0.0; 2];
            head.forward(p, &x, &mut y, None);
            y[0] * y[0] + 3.0 * y[1]
        };
        let mut y = vec![0.0; 2];
        let mut cache = MlpCache::default();
        head.forward(&p, &x, &mut y, Some(&mut cache));
        let dy = vec![2.0 * y[0], 3.0];
        let mut g = FlatParams::zeros(layout.clone());
        let mut dx = vec![0.0; 4];
        head.backward(&p, &mut g, &x, &cache, &dy, &mut dx);
        for b in 0..layout.blocks.len() {
            let num = finite_diff_block(&mut p, b, &mut loss, 1e-6);
            let r = layout.range(crate::nn::params::BlockId(b));
            assert!(max_rel_err(&g.data[r], &num) < 1e-6, "block {b}");
        }
    }
}
