//! Clipped-surrogate policy optimization over recurrent rollouts.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UleeError};
use crate::nn::FlatParams;
use crate::rl::adam::{clip_global_norm, AdamState};
use crate::rl::gae::compute_gae;
use crate::seqpolicy::distr::{dlogits_entropy, dlogits_log_prob, entropy, log_prob};
use crate::seqpolicy::{Memory, SeqPolicy, StepInput};

/// Optimizer hyperparameters. `entropy_coeff` differs by role: 0.01 for
/// the goal-search policy, 0.005 for the pre-trained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub lr: f64,
    pub adam_eps: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub clip: f64,
    pub gae_lambda: f64,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    pub max_grad_norm: f64,
    /// Cut GAE/bootstrapping at intra-lifetime episode boundaries too,
    /// instead of treating the lifetime as one continuous stream.
    pub episode_cuts: bool,
}

impl PpoConfig {
    fn base(entropy_coeff: f64) -> Self {
        PpoConfig {
            lr: 2e-4,
            adam_eps: 1e-5,
            gamma: 0.99,
            epochs: 1,
            minibatches: 16,
            clip: 0.2,
            gae_lambda: 0.95,
            value_coeff: 0.5,
            entropy_coeff,
            max_grad_norm: 0.5,
            episode_cuts: false,
        }
    }

    pub fn pretrain() -> Self {
        Self::base(0.005)
    }

    pub fn goal_search() -> Self {
        Self::base(0.01)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("adam_eps", self.adam_eps),
            ("gamma", self.gamma),
            ("clip", self.clip),
            ("gae_lambda", self.gae_lambda),
            ("value_coeff", self.value_coeff),
            ("max_grad_norm", self.max_grad_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(UleeError::Config(format!("ppo: {name} must be positive")));
            }
        }
        if self.entropy_coeff < 0.0 {
            return Err(UleeError::Config("ppo: entropy_coeff must be >= 0".into()));
        }
        if self.clip >= 1.0 {
            return Err(UleeError::Config("ppo: clip must be < 1".into()));
        }
        if self.epochs == 0 || self.minibatches == 0 {
            return Err(UleeError::Config(
                "ppo: epochs and minibatches must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Rectangular on-policy batch: `n_envs` sequences of `n_steps` each,
/// collected with the behavior parameters.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub n_steps: usize,
    pub inputs: Vec<Vec<StepInput>>,
    pub actions: Vec<Vec<usize>>,
    pub behavior_logp: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    /// Episode ended after this step.
    pub episode_done: Vec<Vec<bool>>,
    /// Lifetime ended after this step (memory was reset before the next).
    pub lifetime_cut: Vec<Vec<bool>>,
    /// Value of the state following the last step, per env (ignored when
    /// the stream is cut at the segment end).
    pub bootstrap: Vec<f64>,
    /// Recurrent state at the start of each env's segment.
    pub start_memory: Vec<Memory>,
}

impl Rollout {
    pub fn with_capacity(n_envs: usize, n_steps: usize) -> Self {
        Rollout {
            n_steps,
            inputs: vec![Vec::with_capacity(n_steps); n_envs],
            actions: vec![Vec::with_capacity(n_steps); n_envs],
            behavior_logp: vec![Vec::with_capacity(n_steps); n_envs],
            rewards: vec![Vec::with_capacity(n_steps); n_envs],
            values: vec![Vec::with_capacity(n_steps); n_envs],
            episode_done: vec![Vec::with_capacity(n_steps); n_envs],
            lifetime_cut: vec![Vec::with_capacity(n_steps); n_envs],
            bootstrap: vec![0.0; n_envs],
            start_memory: Vec::with_capacity(n_envs),
        }
    }

    pub fn n_envs(&self) -> usize {
        self.inputs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_envs();
        if self.start_memory.len() != n || self.bootstrap.len() != n {
            return Err(UleeError::Contract(
                "rollout: per-env metadata length mismatch".into(),
            ));
        }
        for e in 0..n {
            let lens = [
                self.inputs[e].len(),
                self.actions[e].len(),
                self.behavior_logp[e].len(),
                self.rewards[e].len(),
                self.values[e].len(),
                self.episode_done[e].len(),
                self.lifetime_cut[e].len(),
            ];
            if lens.iter().any(|&l| l != self.n_steps) {
                return Err(UleeError::Contract(format!(
                    "rollout: env {e} is not rectangular ({lens:?} vs {})",
                    self.n_steps
                )));
            }
            for t in 0..self.n_steps.saturating_sub(1) {
                if self.lifetime_cut[e][t] {
                    let next = &self.inputs[e][t + 1];
                    if next.prev_action.is_some() || !next.episode_start {
                        return Err(UleeError::Contract(format!(
                            "rollout: env {e} step {} follows a lifetime cut but \
                             carries history",
                            t + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Memory-reset flags for replay: a reset precedes every step that
    /// follows a lifetime cut.
    fn resets(&self, env: usize) -> Vec<bool> {
        let mut r = vec![false; self.n_steps];
        for t in 1..self.n_steps {
            r[t] = self.lifetime_cut[env][t - 1];
        }
        r
    }
}

/// Per-update statistics (means over all minibatch samples).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub n_samples: usize,
    pub n_minibatches: usize,
}

/// Per-sample loss pieces and output gradients; exposed so tests can
/// check the surrogate against an independent implementation.
#[derive(Debug, Clone)]
pub struct SampleLoss {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clipped: bool,
    pub dlogits: Vec<f64>,
    pub dvalue: f64,
}

/// Loss and gradient for one (state, action) sample. The returned
/// gradients are for the *summed* objective policy + c_v*value − c_e*H,
/// unscaled by batch size.
pub fn sample_loss(
    logits: &[f64],
    value: f64,
    action: usize,
    behavior_logp: f64,
    advantage: f64,
    ret: f64,
    cfg: &PpoConfig,
) -> SampleLoss {
    let lp = log_prob(logits, action);
    let ratio = (lp - behavior_logp).exp();
    let clamped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
    let surr1 = ratio * advantage;
    let surr2 = clamped * advantage;
    let policy_loss = -surr1.min(surr2);
    let value_loss = (value - ret) * (value - ret);
    let ent = entropy(logits);

    let dlp = dlogits_log_prob(logits, action);
    let dent = dlogits_entropy(logits);
    // min picks surr1 unless clipping improves the objective; through
    // surr2 the gradient dies whenever the clamp is active.
    let coeff = if surr1 <= surr2 { -advantage * ratio } else { 0.0 };
    let dlogits: Vec<f64> = dlp
        .iter()
        .zip(&dent)
        .map(|(dl, de)| coeff * dl - cfg.entropy_coeff * de)
        .collect();
    SampleLoss {
        policy_loss,
        value_loss,
        entropy: ent,
        clipped: (ratio - 1.0).abs() > cfg.clip,
        dlogits,
        dvalue: cfg.value_coeff * 2.0 * (value - ret),
    }
}

/// One PPO update over a rollout. Advantages are GAE-normalized over the
/// whole batch; environments are shuffled and split into minibatches of
/// whole sequences; each minibatch replays its segments, accumulates
/// gradients, clips the global norm, and takes one Adam step.
pub fn ppo_update(
    policy: &SeqPolicy,
    params: &mut FlatParams,
    adam: &mut AdamState,
    rollout: &Rollout,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    cfg.validate()?;
    rollout.validate()?;
    let n_envs = rollout.n_envs();
    let n_steps = rollout.n_steps;
    if n_envs == 0 || n_steps == 0 {
        return Err(UleeError::Contract("ppo_update: empty rollout".into()));
    }

    // GAE per environment, cut at lifetime (or optionally episode) ends.
    let mut advantages = Vec::with_capacity(n_envs);
    let mut returns = Vec::with_capacity(n_envs);
    for e in 0..n_envs {
        let cuts: Vec<bool> = (0..n_steps)
            .map(|t| {
                rollout.lifetime_cut[e][t] || (cfg.episode_cuts && rollout.episode_done[e][t])
            })
            .collect();
        let (a, r) = compute_gae(
            &rollout.rewards[e],
            &rollout.values[e],
            &cuts,
            rollout.bootstrap[e],
            cfg.gamma,
            cfg.gae_lambda,
        )?;
        advantages.push(a);
        returns.push(r);
    }

    // Normalize advantages over the update batch.
    let count = (n_envs * n_steps) as f64;
    let mean: f64 = advantages.iter().flatten().sum::<f64>() / count;
    let var: f64 = advantages
        .iter()
        .flatten()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / count;
    let inv_std = 1.0 / (var.sqrt() + 1e-8);
    for a in advantages.iter_mut().flatten() {
        *a = (*a - mean) * inv_std;
    }

    let n_shards = cfg.minibatches.min(n_envs);
    let mut sums = (0.0, 0.0, 0.0); // policy, value, entropy
    let mut clip_hits = 0usize;
    let mut grad_norm_sum = 0.0;
    let mut n_minibatches = 0usize;

    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n_envs).collect();
        order.shuffle(rng);
        // Near-equal contiguous shards of whole environments.
        let base = n_envs / n_shards;
        let extra = n_envs % n_shards;
        let mut cursor = 0;
        for shard in 0..n_shards {
            let size = base + usize::from(shard < extra);
            let envs = &order[cursor..cursor + size];
            cursor += size;
            let scale = 1.0 / (size * n_steps) as f64;

            let mut grad = FlatParams::zeros(policy.layout.clone());
            for &e in envs {
                let mut mem = rollout.start_memory[e].clone();
                let resets = rollout.resets(e);
                let (caches, outs) =
                    policy.forward_segment(params, &mut mem, &rollout.inputs[e], &resets)?;
                let mut dlogits = Vec::with_capacity(n_steps);
                let mut dvalues = Vec::with_capacity(n_steps);
                for t in 0..n_steps {
                    let s = sample_loss(
                        &outs[t].logits,
                        outs[t].value,
                        rollout.actions[e][t],
                        rollout.behavior_logp[e][t],
                        advantages[e][t],
                        returns[e][t],
                        cfg,
                    );
                    sums.0 += s.policy_loss;
                    sums.1 += s.value_loss;
                    sums.2 += s.entropy;
                    clip_hits += usize::from(s.clipped);
                    dlogits.push(s.dlogits.iter().map(|d| d * scale).collect());
                    dvalues.push(s.dvalue * scale);
                }
                policy.backward_segment(params, &mut grad, &caches, &dlogits, &dvalues);
            }
            if let Some(block) = grad.first_nonfinite_block() {
                return Err(UleeError::Numerical {
                    location: "ppo_update".into(),
                    detail: format!(
                        "non-finite gradient in block {block} (minibatch {shard}, envs {envs:?})"
                    ),
                });
            }
            grad_norm_sum += clip_global_norm(&mut grad, cfg.max_grad_norm);
            adam.apply(params, &grad, cfg.lr, cfg.adam_eps)?;
            n_minibatches += 1;
        }
    }

    let n_samples = n_envs * n_steps * cfg.epochs;
    let denom = n_samples as f64;
    let stats = PpoStats {
        policy_loss: sums.0 / denom,
        value_loss: sums.1 / denom,
        entropy: sums.2 / denom,
        clip_fraction: clip_hits as f64 / denom,
        grad_norm: grad_norm_sum / n_minibatches as f64,
        n_samples,
        n_minibatches,
    };
    if !(stats.policy_loss.is_finite() && stats.value_loss.is_finite()) {
        return Err(UleeError::Numerical {
            location: "ppo_update".into(),
            detail: "non-finite loss over update batch".into(),
        });
    }
    Ok(stats)
}
