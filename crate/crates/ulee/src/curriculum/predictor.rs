//! The difficulty predictor: a small convolutional regressor mapping a
//! (goal snapshot, lifetime-initial snapshot) pair to a difficulty
//! estimate in [0, 1].
//!
//! Per-cell features for both snapshots (kind embeddings plus an
//! agent-position marker) are stacked channel-wise, mixed by a 3x3
//! convolution, mean-pooled, and regressed by a two-hidden-layer head.
//! The output is squashed by a logistic so estimates always land in
//! [0, 1], matching the range of the empirical targets.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::KindTable;
use crate::error::{Result, UleeError};
use crate::goals::GridSnapshot;
use crate::nn::ops::{relu_backward, relu_inplace, sigmoid};
use crate::nn::params::{normal_init, orthogonal_init};
use crate::nn::{Conv3x3, Embedding, FlatParams, MlpCache, MlpHead, ParamLayout};
use crate::rl::AdamState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorArch {
    pub grid_size: usize,
    pub emb_dim: usize,
    pub conv_channels: usize,
    pub head_width: usize,
}

impl PredictorArch {
    pub fn desk_default(grid_size: usize) -> Self {
        PredictorArch {
            grid_size,
            emb_dim: 8,
            conv_channels: 16,
            head_width: 128,
        }
    }

    pub fn mid(grid_size: usize) -> Self {
        PredictorArch {
            grid_size,
            emb_dim: 4,
            conv_channels: 8,
            head_width: 32,
        }
    }

    pub fn tiny(grid_size: usize) -> Self {
        PredictorArch {
            grid_size,
            emb_dim: 3,
            conv_channels: 4,
            head_width: 8,
        }
    }

    /// Channels per cell: two snapshots of (shape, color, agent marker).
    fn cell_channels(&self) -> usize {
        2 * (2 * self.emb_dim + 1)
    }

    fn n_cells(&self) -> usize {
        self.grid_size * self.grid_size
    }
}

/// Cached activations from one predictor forward pass.
#[derive(Debug, Clone, Default)]
pub struct PredictorCache {
    cell_feat: Vec<f64>,
    conv_out: Vec<f64>,
    pooled: Vec<f64>,
    head_cache: MlpCache,
    logit: f64,
    pub output: f64,
}

#[derive(Debug, Clone)]
pub struct DifficultyPredictor {
    pub arch: PredictorArch,
    pub layout: Arc<ParamLayout>,
    kinds: KindTable,
    pub shape_emb: Embedding,
    pub color_emb: Embedding,
    pub conv: Conv3x3,
    pub head: MlpHead,
}

impl DifficultyPredictor {
    pub fn new(arch: PredictorArch, kinds: KindTable) -> Result<Self> {
        if arch.grid_size < 3 {
            return Err(UleeError::Config("predictor grid_size must be >= 3".into()));
        }
        let mut layout = ParamLayout::new();
        let shape_emb = Embedding::new(&mut layout, "dp.shape", kinds.shape_vocab(), arch.emb_dim);
        let color_emb = Embedding::new(&mut layout, "dp.color", kinds.color_vocab(), arch.emb_dim);
        let conv = Conv3x3::new(
            &mut layout,
            "dp.conv",
            arch.grid_size,
            arch.cell_channels(),
            arch.conv_channels,
        );
        let head = MlpHead::new(&mut layout, "dp.head", arch.conv_channels, arch.head_width, 1);
        Ok(DifficultyPredictor {
            arch,
            layout: Arc::new(layout),
            kinds,
            shape_emb,
            color_emb,
            conv,
            head,
        })
    }

    pub fn kinds(&self) -> &KindTable {
        &self.kinds
    }

    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> FlatParams {
        let mut p = FlatParams::zeros(self.layout.clone());
        normal_init(&mut p, self.shape_emb.table, 0.1, rng);
        normal_init(&mut p, self.color_emb.table, 0.1, rng);
        orthogonal_init(&mut p, self.conv.w, 2f64.sqrt(), rng);
        orthogonal_init(&mut p, self.head.l1.w, 2f64.sqrt(), rng);
        orthogonal_init(&mut p, self.head.l2.w, 2f64.sqrt(), rng);
        // Zero output layer: the untrained predictor answers 0.5.
        p
    }

    fn check_geometry(&self, s: &GridSnapshot) -> Result<()> {
        if s.grid_size != self.arch.grid_size || s.cells.len() != self.arch.n_cells() {
            return Err(UleeError::Contract(format!(
                "predictor expects {0}x{0} snapshots, got {1}x{1}",
                self.arch.grid_size, s.grid_size
            )));
        }
        Ok(())
    }

    /// Builds the per-cell feature plane for one snapshot into the given
    /// channel offset of `feat`.
    fn encode_snapshot(
        &self,
        p: &FlatParams,
        s: &GridSnapshot,
        feat: &mut [f64],
        channel_offset: usize,
    ) {
        let e = self.arch.emb_dim;
        let ch = self.arch.cell_channels();
        for (i, &k) in s.cells.iter().enumerate() {
            let base = i * ch + channel_offset;
            self.shape_emb
                .forward(p, self.kinds.shape_index(k), &mut feat[base..base + e]);
            self.color_emb
                .forward(p, self.kinds.color_index(k), &mut feat[base + e..base + 2 * e]);
        }
        let agent_cell = s.agent_row * s.grid_size + s.agent_col;
        feat[agent_cell * ch + channel_offset + 2 * e] = 1.0;
    }

    /// d̂(goal, ξ_M) with optional cache for backward.
    pub fn forward(
        &self,
        p: &FlatParams,
        goal: &GridSnapshot,
        env_info: &GridSnapshot,
        mut cache: Option<&mut PredictorCache>,
    ) -> Result<f64> {
        self.check_geometry(goal)?;
        self.check_geometry(env_info)?;
        let ch = self.arch.cell_channels();
        let n_cells = self.arch.n_cells();
        let mut feat = vec![0.0; n_cells * ch];
        self.encode_snapshot(p, goal, &mut feat, 0);
        self.encode_snapshot(p, env_info, &mut feat, ch / 2);

        let mut conv_out = vec![0.0; n_cells * self.arch.conv_channels];
        let mut patch = vec![0.0; 9 * ch];
        self.conv.forward(p, &feat, &mut conv_out, &mut patch);
        relu_inplace(&mut conv_out);
        let mut pooled = vec![0.0; self.arch.conv_channels];
        for i in 0..n_cells {
            for c in 0..self.arch.conv_channels {
                pooled[c] += conv_out[i * self.arch.conv_channels + c];
            }
        }
        let inv = 1.0 / n_cells as f64;
        pooled.iter_mut().for_each(|v| *v *= inv);

        let mut out = vec![0.0];
        let mut head_cache = cache.as_deref_mut().map(|_| MlpCache::default());
        self.head.forward(p, &pooled, &mut out, head_cache.as_mut());
        let logit = out[0];
        if !logit.is_finite() {
            return Err(UleeError::Numerical {
                location: "difficulty predictor".into(),
                detail: "non-finite logit".into(),
            });
        }
        let y = sigmoid(logit);
        if let Some(c) = cache {
            c.cell_feat = feat;
            c.conv_out = conv_out;
            c.pooled = pooled;
            c.head_cache = head_cache.unwrap();
            c.logit = logit;
            c.output = y;
        }
        Ok(y)
    }

    pub fn predict(
        &self,
        p: &FlatParams,
        goal: &GridSnapshot,
        env_info: &GridSnapshot,
    ) -> Result<f64> {
        self.forward(p, goal, env_info, None)
    }

    /// Backward given dL/d(output). Accumulates into `g`. The snapshots
    /// must be the ones used for the cached forward.
    pub fn backward(
        &self,
        p: &FlatParams,
        g: &mut FlatParams,
        goal: &GridSnapshot,
        env_info: &GridSnapshot,
        cache: &PredictorCache,
        dout: f64,
    ) {
        let e = self.arch.emb_dim;
        let ch = self.arch.cell_channels();
        let n_cells = self.arch.n_cells();
        let dlogit = dout * cache.output * (1.0 - cache.output);
        let mut dpooled = vec![0.0; self.arch.conv_channels];
        self.head.backward(
            p,
            g,
            &cache.pooled,
            &cache.head_cache,
            &[dlogit],
            &mut dpooled,
        );
        let inv = 1.0 / n_cells as f64;
        let mut dconv = vec![0.0; n_cells * self.arch.conv_channels];
        for i in 0..n_cells {
            for c in 0..self.arch.conv_channels {
                dconv[i * self.arch.conv_channels + c] = dpooled[c] * inv;
            }
        }
        relu_backward(&cache.conv_out, &mut dconv);
        let mut dfeat = vec![0.0; n_cells * ch];
        let mut patch = vec![0.0; 9 * ch];
        self.conv
            .backward(p, g, &cache.cell_feat, &dconv, &mut dfeat, &mut patch);
        for (snapshot, off) in [(goal, 0), (env_info, ch / 2)] {
            for (i, &k) in snapshot.cells.iter().enumerate() {
                let base = i * ch + off;
                self.shape_emb
                    .backward(g, self.kinds.shape_index(k), &dfeat[base..base + e]);
                self.color_emb
                    .backward(g, self.kinds.color_index(k), &dfeat[base + e..base + 2 * e]);
            }
        }
    }
}

/// Training schedule for the predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorTrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub adam_eps: f64,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        PredictorTrainConfig {
            epochs: 2,
            minibatch: 256,
            lr: 1e-4,
            adam_eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorTrainStats {
    pub update_steps: usize,
    /// Mean squared error over the buffer before training.
    pub loss_before: f64,
    /// Mean squared error over the buffer after training.
    pub loss_after: f64,
    pub skipped: bool,
}

/// Mean of (d̂ − d̃)² over records.
pub fn predictor_loss(
    dp: &DifficultyPredictor,
    p: &FlatParams,
    records: &[crate::curriculum::DifficultyRecord],
) -> Result<f64> {
    let mut total = 0.0;
    for r in records {
        let y = dp.predict(p, &r.goal_snapshot, &r.env_info)?;
        total += (y - r.empirical_difficulty).powi(2);
    }
    Ok(total / records.len().max(1) as f64)
}

/// L2 regression of the predictor on the buffer contents: `epochs`
/// shuffled passes in minibatches, one Adam step each. An empty buffer is
/// skipped (reported in the stats, not an error).
pub fn train_difficulty_predictor(
    dp: &DifficultyPredictor,
    params: &mut FlatParams,
    adam: &mut AdamState,
    records: &[crate::curriculum::DifficultyRecord],
    cfg: &PredictorTrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PredictorTrainStats> {
    if records.is_empty() {
        return Ok(PredictorTrainStats {
            update_steps: 0,
            loss_before: f64::NAN,
            loss_after: f64::NAN,
            skipped: true,
        });
    }
    if cfg.epochs == 0 || cfg.minibatch == 0 || !(cfg.lr > 0.0) {
        return Err(UleeError::Config("predictor train config invalid".into()));
    }
    let loss_before = predictor_loss(dp, params, records)?;
    let mut steps = 0;
    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let mut grad = FlatParams::zeros(dp.layout.clone());
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let r = &records[i];
                let mut cache = PredictorCache::default();
                let y = dp.forward(params, &r.goal_snapshot, &r.env_info, Some(&mut cache))?;
                let dout = 2.0 * (y - r.empirical_difficulty) * scale;
                dp.backward(params, &mut grad, &r.goal_snapshot, &r.env_info, &cache, dout);
            }
            if grad.first_nonfinite_block().is_some() {
                return Err(UleeError::Numerical {
                    location: "train_difficulty_predictor".into(),
                    detail: "non-finite gradient".into(),
                });
            }
            adam.apply(params, &grad, cfg.lr, cfg.adam_eps)?;
            steps += 1;
        }
    }
    let loss_after = predictor_loss(dp, params, records)?;
    Ok(PredictorTrainStats {
        update_steps: steps,
        loss_before,
        loss_after,
        skipped: false,
    })
}
