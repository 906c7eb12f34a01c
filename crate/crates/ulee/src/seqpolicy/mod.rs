//! The in-context sequence policy: an actor-critic over per-step inputs
//! {observation, episode-start bit, previous action, previous reward}.
//!
//! The sequence core is a gated recurrent cell with a hard context
//! window: two staggered recurrent chains are maintained and the older
//! one is retired every half-window, so outputs depend on at most the
//! last `window` inputs and at least the last `window / 2`. Gradients
//! are additionally truncated every `bptt` steps during updates.
//!
//! Memory is reset only at lifetime starts; the staggered chain restarts
//! inside a lifetime are part of the windowing, not a memory reset.

pub mod checkpoint;
pub mod distr;

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::kinds::KindTable;
use crate::env::rules::Action;
use crate::env::world::{Observation, OBS_CELLS};
use crate::error::{Result, UleeError};
use crate::nn::ops::{relu_backward, relu_inplace};
use crate::nn::params::{normal_init, orthogonal_init};
use crate::nn::{Conv3x3, Embedding, FlatParams, GruCache, GruCell, Linear, MlpCache, MlpHead, ParamLayout};

/// Architecture hyperparameters of a sequence policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub shape_vocab: usize,
    pub color_vocab: usize,
    pub emb_dim: usize,
    pub conv_channels: usize,
    pub proj_dim: usize,
    pub hidden: usize,
    pub head_width: usize,
    pub n_actions: usize,
    /// Memory horizon: outputs never depend on inputs older than this.
    pub window: usize,
    /// Gradient truncation length during updates.
    pub bptt: usize,
}

impl PolicyArch {
    pub fn desk_default(kinds: &KindTable) -> Self {
        PolicyArch {
            shape_vocab: kinds.shape_vocab(),
            color_vocab: kinds.color_vocab(),
            emb_dim: 16,
            conv_channels: 8,
            proj_dim: 64,
            hidden: 64,
            head_width: 128,
            n_actions: crate::env::NUM_ACTIONS,
            window: 128,
            bptt: 64,
        }
    }

    /// Mid-size instance for CPU-budget directional experiments: smaller
    /// trunk than the desk default but a memory window spanning several
    /// episodes (the window costs nothing per step).
    pub fn mid(kinds: &KindTable) -> Self {
        PolicyArch {
            emb_dim: 8,
            conv_channels: 4,
            proj_dim: 32,
            hidden: 32,
            head_width: 32,
            window: 512,
            ..Self::desk_default(kinds)
        }
    }

    /// Small instance for gradient checks and fast tests.
    pub fn tiny(kinds: &KindTable) -> Self {
        PolicyArch {
            shape_vocab: kinds.shape_vocab(),
            color_vocab: kinds.color_vocab(),
            emb_dim: 3,
            conv_channels: 2,
            proj_dim: 6,
            hidden: 5,
            head_width: 7,
            n_actions: crate::env::NUM_ACTIONS,
            window: 8,
            bptt: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || self.window % 2 != 0 {
            return Err(UleeError::Config(format!(
                "window must be even and >= 2, got {}",
                self.window
            )));
        }
        if self.bptt == 0 {
            return Err(UleeError::Config("bptt must be positive".into()));
        }
        Ok(())
    }

    fn conv_len(&self) -> usize {
        OBS_CELLS * self.conv_channels
    }

    /// conv features ++ action embedding ++ done embedding ++ reward.
    pub fn feat_dim(&self) -> usize {
        self.conv_len() + 2 * self.emb_dim + 1
    }

    pub fn arch_desc(&self) -> String {
        format!(
            "seqpolicy-v1 sv{} cv{} e{} c{} p{} h{} w{} a{} win{} bptt{}",
            self.shape_vocab,
            self.color_vocab,
            self.emb_dim,
            self.conv_channels,
            self.proj_dim,
            self.hidden,
            self.head_width,
            self.n_actions,
            self.window,
            self.bptt
        )
    }
}

/// Per-step policy input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    pub obs: Observation,
    /// d_t: set on the first step of every episode.
    pub episode_start: bool,
    /// None only at the start of a lifetime (dummy embedding).
    pub prev_action: Option<Action>,
    pub prev_reward: f64,
}

/// Recurrent state: two staggered chains plus their ages.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory {
    h0: Vec<f64>,
    h1: Vec<f64>,
    steps0: usize,
    steps1: usize,
}

impl Memory {
    pub fn zeros(hidden: usize) -> Self {
        Memory {
            h0: vec![0.0; hidden],
            h1: vec![0.0; hidden],
            steps0: 0,
            steps1: 0,
        }
    }

    pub fn reset(&mut self) {
        self.h0.iter_mut().for_each(|v| *v = 0.0);
        self.h1.iter_mut().for_each(|v| *v = 0.0);
        self.steps0 = 0;
        self.steps1 = 0;
    }

    pub fn is_fresh(&self) -> bool {
        self.steps0 == 0 && self.h0.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub value: f64,
}

/// Everything backward needs about one forward step.
#[derive(Debug, Clone, Default)]
pub struct StepCache {
    shape_idx: [usize; OBS_CELLS],
    color_idx: [usize; OBS_CELLS],
    act_idx: usize,
    done_idx: usize,
    cell_emb: Vec<f64>,
    feat: Vec<f64>,
    proj_out: Vec<f64>,
    gru0: GruCache,
    gru1: Option<GruCache>,
    h_out: Vec<f64>,
    actor_cache: MlpCache,
    critic_cache: MlpCache,
    swap_after: bool,
    /// Memory was reset to zeros immediately before this step (lifetime
    /// start); recurrent gradients must not flow past it.
    reset_before: bool,
}

/// The network: embeddings, local-mixing conv encoder, projection,
/// windowed recurrent core, and separate actor/critic MLP heads.
#[derive(Debug, Clone)]
pub struct SeqPolicy {
    pub arch: PolicyArch,
    pub layout: Arc<ParamLayout>,
    kinds: KindTable,
    shape_emb: Embedding,
    color_emb: Embedding,
    act_emb: Embedding,
    done_emb: Embedding,
    conv: Conv3x3,
    proj: Linear,
    gru: GruCell,
    actor: MlpHead,
    critic: MlpHead,
}

impl SeqPolicy {
    pub fn new(arch: PolicyArch, kinds: KindTable) -> Result<Self> {
        arch.validate()?;
        let mut layout = ParamLayout::new();
        let shape_emb = Embedding::new(&mut layout, "shape", arch.shape_vocab, arch.emb_dim);
        let color_emb = Embedding::new(&mut layout, "color", arch.color_vocab, arch.emb_dim);
        // +1 slot: the dummy previous action at lifetime start.
        let act_emb = Embedding::new(&mut layout, "action", arch.n_actions + 1, arch.emb_dim);
        let done_emb = Embedding::new(&mut layout, "done", 2, arch.emb_dim);
        let conv = Conv3x3::new(&mut layout, "conv", 5, 2 * arch.emb_dim, arch.conv_channels);
        let proj = Linear::new(&mut layout, "proj", arch.feat_dim(), arch.proj_dim);
        let gru = GruCell::new(&mut layout, "core", arch.proj_dim, arch.hidden);
        let actor = MlpHead::new(&mut layout, "actor", arch.hidden, arch.head_width, arch.n_actions);
        let critic = MlpHead::new(&mut layout, "critic", arch.hidden, arch.head_width, 1);
        Ok(SeqPolicy {
            arch,
            layout: Arc::new(layout),
            kinds,
            shape_emb,
            color_emb,
            act_emb,
            done_emb,
            conv,
            proj,
            gru,
            actor,
            critic,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn kinds(&self) -> &KindTable {
        &self.kinds
    }

    /// Orthogonal weights, zero biases, small embeddings; the actor's
    /// final layer is scaled down so initial logits are near uniform.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> FlatParams {
        let mut p = FlatParams::zeros(self.layout.clone());
        normal_init(&mut p, self.shape_emb.table, 0.1, rng);
        normal_init(&mut p, self.color_emb.table, 0.1, rng);
        normal_init(&mut p, self.act_emb.table, 0.1, rng);
        normal_init(&mut p, self.done_emb.table, 0.1, rng);
        orthogonal_init(&mut p, self.conv.w, 2f64.sqrt(), rng);
        orthogonal_init(&mut p, self.proj.w, 2f64.sqrt(), rng);
        for w in [
            self.gru.wz, self.gru.uz, self.gru.wr, self.gru.ur, self.gru.wh, self.gru.uh,
        ] {
            orthogonal_init(&mut p, w, 1.0, rng);
        }
        for head in [&self.actor, &self.critic] {
            orthogonal_init(&mut p, head.l1.w, 2f64.sqrt(), rng);
            orthogonal_init(&mut p, head.l2.w, 2f64.sqrt(), rng);
        }
        orthogonal_init(&mut p, self.actor.out.w, 0.01, rng);
        orthogonal_init(&mut p, self.critic.out.w, 1.0, rng);
        p
    }

    pub fn memory(&self) -> Memory {
        Memory::zeros(self.arch.hidden)
    }

    fn dummy_action_index(&self) -> usize {
        self.arch.n_actions
    }

    /// Encodes one step input into the feature vector. With a cache,
    /// stores what the encoder backward needs.
    pub fn encode_step(
        &self,
        p: &FlatParams,
        input: &StepInput,
        feat: &mut Vec<f64>,
        mut cache: Option<&mut StepCache>,
    ) {
        let e = self.arch.emb_dim;
        let mut cell_emb = vec![0.0; OBS_CELLS * 2 * e];
        let mut shape_idx = [0usize; OBS_CELLS];
        let mut color_idx = [0usize; OBS_CELLS];
        for (i, &k) in input.obs.0.iter().enumerate() {
            shape_idx[i] = self.kinds.shape_index(k);
            color_idx[i] = self.kinds.color_index(k);
            self.shape_emb
                .forward(p, shape_idx[i], &mut cell_emb[i * 2 * e..i * 2 * e + e]);
            self.color_emb
                .forward(p, color_idx[i], &mut cell_emb[i * 2 * e + e..(i + 1) * 2 * e]);
        }
        feat.clear();
        feat.resize(self.arch.feat_dim(), 0.0);
        let conv_len = self.arch.conv_len();
        let mut patch = vec![0.0; 9 * 2 * e];
        self.conv
            .forward(p, &cell_emb, &mut feat[..conv_len], &mut patch);
        relu_inplace(&mut feat[..conv_len]);
        let act_idx = input
            .prev_action
            .map(|a| a.index())
            .unwrap_or_else(|| self.dummy_action_index());
        let done_idx = input.episode_start as usize;
        self.act_emb
            .forward(p, act_idx, &mut feat[conv_len..conv_len + e]);
        self.done_emb
            .forward(p, done_idx, &mut feat[conv_len + e..conv_len + 2 * e]);
        feat[conv_len + 2 * e] = input.prev_reward;
        if let Some(c) = cache.as_deref_mut() {
            c.shape_idx = shape_idx;
            c.color_idx = color_idx;
            c.act_idx = act_idx;
            c.done_idx = done_idx;
            c.cell_emb = cell_emb;
        }
    }

    /// One policy step: encode, advance the windowed core, evaluate heads.
    pub fn policy_step(
        &self,
        p: &FlatParams,
        mem: &mut Memory,
        input: &StepInput,
        mut cache: Option<&mut StepCache>,
    ) -> Result<PolicyOutput> {
        let half = self.arch.window / 2;
        let mut feat = Vec::new();
        self.encode_step(p, input, &mut feat, cache.as_deref_mut());
        let mut x = vec![0.0; self.arch.proj_dim];
        self.proj.forward(p, &feat, &mut x);
        relu_inplace(&mut x);

        // The younger chain runs half a window behind the older one.
        let mut gru1_cache = None;
        if mem.steps0 >= half {
            let mut c1 = cache.as_deref_mut().map(|_| GruCache::default());
            self.gru.forward(p, &x, &mut mem.h1, c1.as_mut());
            mem.steps1 += 1;
            gru1_cache = c1;
        }
        let mut c0 = cache.as_deref_mut().map(|_| GruCache::default());
        self.gru.forward(p, &x, &mut mem.h0, c0.as_mut());
        mem.steps0 += 1;

        let mut logits = vec![0.0; self.arch.n_actions];
        let mut value = vec![0.0];
        let mut actor_cache = cache.as_deref_mut().map(|_| MlpCache::default());
        let mut critic_cache = cache.as_deref_mut().map(|_| MlpCache::default());
        self.actor
            .forward(p, &mem.h0, &mut logits, actor_cache.as_mut());
        self.critic
            .forward(p, &mem.h0, &mut value, critic_cache.as_mut());
        if logits.iter().any(|v| !v.is_finite()) || !value[0].is_finite() {
            return Err(UleeError::Numerical {
                location: "policy_step".into(),
                detail: "non-finite logits or value".into(),
            });
        }

        let h_out = mem.h0.clone();
        // Retire the older chain once it has covered a full window.
        let swap_after = mem.steps0 == self.arch.window;
        if let Some(c) = cache.as_deref_mut() {
            c.feat = feat;
            c.proj_out = x;
            c.gru0 = c0.unwrap();
            c.gru1 = gru1_cache;
            c.h_out = h_out;
            c.actor_cache = actor_cache.unwrap();
            c.critic_cache = critic_cache.unwrap();
            c.swap_after = swap_after;
        }
        if swap_after {
            std::mem::swap(&mut mem.h0, &mut mem.h1);
            mem.h1.iter_mut().for_each(|v| *v = 0.0);
            mem.steps0 = mem.steps1;
            mem.steps1 = 0;
        }
        Ok(PolicyOutput {
            logits,
            value: value[0],
        })
    }

    /// Training-mode forward over a contiguous segment: replays the steps
    /// from a memory snapshot, collecting caches for backward. `resets[t]`
    /// zeroes the memory before step t (a lifetime start inside the
    /// segment); pass all-false for an uninterrupted segment.
    pub fn forward_segment(
        &self,
        p: &FlatParams,
        mem: &mut Memory,
        inputs: &[StepInput],
        resets: &[bool],
    ) -> Result<(Vec<StepCache>, Vec<PolicyOutput>)> {
        if resets.len() != inputs.len() {
            return Err(UleeError::Contract(format!(
                "forward_segment: {} inputs but {} reset flags",
                inputs.len(),
                resets.len()
            )));
        }
        let mut caches = Vec::with_capacity(inputs.len());
        let mut outs = Vec::with_capacity(inputs.len());
        for (input, &reset) in inputs.iter().zip(resets) {
            if reset {
                mem.reset();
            }
            let mut c = StepCache {
                reset_before: reset,
                ..StepCache::default()
            };
            let o = self.policy_step(p, mem, input, Some(&mut c))?;
            caches.push(c);
            outs.push(o);
        }
        Ok((caches, outs))
    }

    /// Backward over a segment. `dlogits[t]` and `dvalues[t]` are the loss
    /// gradients on that step's outputs. Gradients accumulate into `g`;
    /// recurrent gradient flow is cut every `bptt` steps and at chain
    /// retirements.
    pub fn backward_segment(
        &self,
        p: &FlatParams,
        g: &mut FlatParams,
        caches: &[StepCache],
        dlogits: &[Vec<f64>],
        dvalues: &[f64],
    ) {
        let h = self.arch.hidden;
        let e = self.arch.emb_dim;
        let conv_len = self.arch.conv_len();
        let n = caches.len();
        assert_eq!(dlogits.len(), n);
        assert_eq!(dvalues.len(), n);

        let mut d_next0 = vec![0.0; h];
        let mut d_next1 = vec![0.0; h];
        let mut patch = vec![0.0; 9 * 2 * e];
        for t in (0..n).rev() {
            let c = &caches[t];
            // Map gradients across the end-of-step swap, if any.
            let (mut dh0, d_after1) = if c.swap_after {
                (vec![0.0; h], std::mem::take(&mut d_next0))
            } else {
                (std::mem::take(&mut d_next0), std::mem::take(&mut d_next1))
            };
            self.actor
                .backward(p, g, &c.h_out, &c.actor_cache, &dlogits[t], &mut dh0);
            self.critic
                .backward(p, g, &c.h_out, &c.critic_cache, &[dvalues[t]], &mut dh0);

            let mut dx = vec![0.0; self.arch.proj_dim];
            let mut d_prev0 = vec![0.0; h];
            self.gru
                .backward(p, g, &c.proj_out, &c.gru0, &dh0, &mut dx, &mut d_prev0);
            let mut d_prev1 = vec![0.0; h];
            match &c.gru1 {
                Some(c1) => {
                    self.gru
                        .backward(p, g, &c.proj_out, c1, &d_after1, &mut dx, &mut d_prev1);
                }
                None => d_prev1 = d_after1, // chain idle: state passed through
            }

            // Encoder backward.
            relu_backward(&c.proj_out, &mut dx);
            let mut dfeat = vec![0.0; self.arch.feat_dim()];
            self.proj.backward(p, g, &c.feat, &dx, &mut dfeat);
            let mut dconv = dfeat[..conv_len].to_vec();
            relu_backward(&c.feat[..conv_len], &mut dconv);
            let mut dcell = vec![0.0; OBS_CELLS * 2 * e];
            self.conv
                .backward(p, g, &c.cell_emb, &dconv, &mut dcell, &mut patch);
            for i in 0..OBS_CELLS {
                self.shape_emb
                    .backward(g, c.shape_idx[i], &dcell[i * 2 * e..i * 2 * e + e]);
                self.color_emb
                    .backward(g, c.color_idx[i], &dcell[i * 2 * e + e..(i + 1) * 2 * e]);
            }
            self.act_emb
                .backward(g, c.act_idx, &dfeat[conv_len..conv_len + e]);
            self.done_emb
                .backward(g, c.done_idx, &dfeat[conv_len + e..conv_len + 2 * e]);

            // Truncate recurrent gradient flow at chunk boundaries and
            // at memory resets (the pre-reset state is unreachable).
            if t % self.arch.bptt == 0 || c.reset_before {
                d_prev0.iter_mut().for_each(|v| *v = 0.0);
                d_prev1.iter_mut().for_each(|v| *v = 0.0);
            }
            d_next0 = d_prev0;
            d_next1 = d_prev1;
        }
    }
}
