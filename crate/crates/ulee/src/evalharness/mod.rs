//! Evaluation protocols: zero-shot exploration, in-context adaptation,
//! fixed-pool fine-tuning, and meta fine-tuning, plus percentile
//! reporting and the uniform-random baseline.
//!
//! Every aggregate is recomputable from the raw per-task records kept in
//! the reports, and all evaluation environment steps are booked to the
//! `eval` ledger class, never to `pretrain`.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::pool::{load_pool, pool_hash};
use crate::env::world::reset_lifetime;
use crate::env::{EnvSpec, WorldState};
use crate::error::{Result, UleeError};
use crate::nn::FlatParams;
use crate::orchestrator::{
    collect_segment, run_lifetime, sample_specs, EnvRunner, StepClass, StepLedger, TaskKind,
};
use crate::rl::{ppo_update, AdamState, PpoConfig};
use crate::rng::stream;
use crate::seqpolicy::SeqPolicy;

/// Zero parameters give uniform logits, i.e. a uniform-random policy
/// with the same interface as a trained one.
pub fn uniform_random_params(policy: &SeqPolicy) -> FlatParams {
    FlatParams::zeros(policy.layout.clone())
}

/// Nearest-rank percentile: the value below-or-at which `p` percent of
/// the sorted scores fall. `p` in (0, 100].
pub fn nearest_rank(scores: &[f64], p: f64) -> f64 {
    assert!(!scores.is_empty() && p > 0.0 && p <= 100.0);
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

/// Mean / 40th / 20th percentile summary of per-task scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileTable {
    pub mean: f64,
    pub p40: f64,
    pub p20: f64,
}

impl PercentileTable {
    pub fn from_scores(scores: &[f64]) -> Self {
        PercentileTable {
            mean: scores.iter().sum::<f64>() / scores.len() as f64,
            p40: nearest_rank(scores, 40.0),
            p20: nearest_rank(scores, 20.0),
        }
    }
}

/// Zero-shot exploration: fraction of extrinsic goals reached within a
/// cumulative episode budget (a goal counts as reached at episode j if
/// it was achieved in any episode ≤ j).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub n_tasks: usize,
    pub budget: usize,
    pub seed: u64,
    /// Raw per-task record: cumulative reached-by-episode flags.
    pub per_task_reached_by: Vec<Vec<bool>>,
    /// Aggregate curve, one entry per episode budget 1..=budget.
    pub frac_reached_by: Vec<f64>,
    /// Hash of the evaluation pool file, when evaluated from a file.
    pub pool_hash: Option<String>,
}

/// Recomputes the exploration curve from raw per-task flags.
pub fn aggregate_exploration(per_task: &[Vec<bool>], budget: usize) -> Vec<f64> {
    (0..budget)
        .map(|j| {
            per_task.iter().filter(|flags| flags[j]).count() as f64 / per_task.len() as f64
        })
        .collect()
}

impl ExplorationReport {
    pub fn validate(&self) -> Result<()> {
        let c = &self.frac_reached_by;
        if c.len() != self.budget
            || c.iter().any(|&f| !(0.0..=1.0).contains(&f))
            || c.windows(2).any(|w| w[1] < w[0])
        {
            return Err(UleeError::Contract(
                "exploration curve must be a monotone fraction curve".into(),
            ));
        }
        if aggregate_exploration(&self.per_task_reached_by, self.budget) != *c {
            return Err(UleeError::Contract(
                "exploration aggregate does not match raw records".into(),
            ));
        }
        Ok(())
    }
}

/// In-context adaptation: per-episode return curve over H-episode
/// lifetimes and per-task post-adaptation scores (mean of the last K
/// episodes), with a percentile table over tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub n_tasks: usize,
    pub h: usize,
    pub last_k: usize,
    pub seed: u64,
    /// Raw per-task record: return of each of the H episodes.
    pub per_task_returns: Vec<Vec<f64>>,
    pub mean_return_by_episode: Vec<f64>,
    pub per_task_score: Vec<f64>,
    pub percentiles: PercentileTable,
}

/// Recomputes the adaptation aggregates from raw per-task returns.
pub fn aggregate_adaptation(
    per_task_returns: &[Vec<f64>],
    h: usize,
    last_k: usize,
) -> (Vec<f64>, Vec<f64>, PercentileTable) {
    let n = per_task_returns.len() as f64;
    let curve: Vec<f64> = (0..h)
        .map(|j| per_task_returns.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let scores: Vec<f64> = per_task_returns
        .iter()
        .map(|r| r[h - last_k..].iter().sum::<f64>() / last_k as f64)
        .collect();
    let table = PercentileTable::from_scores(&scores);
    (curve, scores, table)
}

/// Runs `budget`-episode extrinsic-goal lifetimes on `n_tasks` tasks
/// drawn from the pool and reports the cumulative goal-reached curve.
pub fn eval_exploration(
    policy: &SeqPolicy,
    params: &FlatParams,
    pool: &[EnvSpec],
    n_tasks: usize,
    budget: usize,
    seed: u64,
    ledger: &mut StepLedger,
) -> Result<ExplorationReport> {
    if budget == 0 || n_tasks == 0 {
        return Err(UleeError::Config("eval_exploration: empty protocol".into()));
    }
    let tasks = sample_specs(pool, n_tasks, seed, "eval-explore");
    let mut per_task = Vec::with_capacity(tasks.len());
    for (i, spec) in tasks.iter().enumerate() {
        let s0 = reset_lifetime(spec, &mut stream(seed, "eval-reset", i as u64))?;
        let tr = run_lifetime(
            policy,
            params,
            spec,
            &s0,
            TaskKind::EnvGoal,
            budget,
            stream(seed, "eval-act", i as u64),
        )?;
        ledger.add(StepClass::Eval, tr.steps as u64);
        let mut reached = false;
        let flags: Vec<bool> = tr
            .episode_success
            .iter()
            .map(|&s| {
                reached |= s;
                reached
            })
            .collect();
        per_task.push(flags);
    }
    let report = ExplorationReport {
        n_tasks: per_task.len(),
        budget,
        seed,
        frac_reached_by: aggregate_exploration(&per_task, budget),
        per_task_reached_by: per_task,
        pool_hash: None,
    };
    report.validate()?;
    Ok(report)
}

/// Runs H-episode extrinsic-goal lifetimes and reports per-episode mean
/// returns and post-adaptation percentiles (mean of the last K episodes
/// per task).
pub fn eval_adaptation(
    policy: &SeqPolicy,
    params: &FlatParams,
    pool: &[EnvSpec],
    n_tasks: usize,
    h: usize,
    last_k: usize,
    seed: u64,
    ledger: &mut StepLedger,
) -> Result<AdaptationReport> {
    if n_tasks == 0 || last_k == 0 || last_k > h {
        return Err(UleeError::Config("eval_adaptation: bad protocol".into()));
    }
    let tasks = sample_specs(pool, n_tasks, seed, "eval-adapt");
    let mut per_task_returns = Vec::with_capacity(tasks.len());
    for (i, spec) in tasks.iter().enumerate() {
        let s0 = reset_lifetime(spec, &mut stream(seed, "eval-reset", i as u64))?;
        let tr = run_lifetime(
            policy,
            params,
            spec,
            &s0,
            TaskKind::EnvGoal,
            h,
            stream(seed, "eval-act", i as u64),
        )?;
        ledger.add(StepClass::Eval, tr.steps as u64);
        per_task_returns.push(tr.episode_returns());
    }
    let (curve, scores, table) = aggregate_adaptation(&per_task_returns, h, last_k);
    Ok(AdaptationReport {
        n_tasks: per_task_returns.len(),
        h,
        last_k,
        seed,
        per_task_returns,
        mean_return_by_episode: curve,
        per_task_score: scores,
        percentiles: table,
    })
}

/// Extrinsic-reward training schedule shared by the two fine-tuning
/// protocols. A "batch" is one lifetime per environment slot, trained
/// with the same segmented PPO machinery as pre-training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub n_envs: usize,
    /// Lifetime step budget per environment per batch.
    pub steps_per_env: usize,
    pub update_interval: usize,
    pub n_batches: usize,
    pub eval_tasks: usize,
    /// Evaluation lifetime length and last-K window (30/10 for the
    /// fixed-pool protocol, 25/5 for the meta protocol).
    pub eval_h: usize,
    pub eval_last_k: usize,
    /// Resample the evaluation task set at every evaluation point
    /// (meta protocol); the fixed protocol keeps one frozen set.
    pub resample_eval: bool,
    pub seed: u64,
}

impl FinetuneConfig {
    /// Fixed-pool protocol at desk scale.
    pub fn fixed_desk(max_steps: usize) -> Self {
        FinetuneConfig {
            n_envs: 64,
            steps_per_env: 10 * max_steps,
            update_interval: 256,
            n_batches: 10,
            eval_tasks: 64,
            eval_h: 30,
            eval_last_k: 10,
            resample_eval: false,
            seed: 0,
        }
    }

    /// Meta protocol at desk scale.
    pub fn meta_desk(max_steps: usize) -> Self {
        FinetuneConfig {
            eval_h: 25,
            eval_last_k: 5,
            resample_eval: true,
            ..FinetuneConfig::fixed_desk(max_steps)
        }
    }

    /// Tiny instance for tests.
    pub fn tiny(max_steps: usize) -> Self {
        FinetuneConfig {
            n_envs: 2,
            steps_per_env: max_steps,
            update_interval: max_steps,
            n_batches: 1,
            eval_tasks: 2,
            eval_h: 3,
            eval_last_k: 2,
            resample_eval: false,
            seed: 11,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_envs == 0
            || self.update_interval == 0
            || self.steps_per_env % self.update_interval != 0
        {
            return Err(UleeError::Config(
                "finetune: steps_per_env must be a positive multiple of update_interval"
                    .into(),
            ));
        }
        if self.eval_tasks == 0 || self.eval_last_k == 0 || self.eval_last_k > self.eval_h {
            return Err(UleeError::Config("finetune: bad eval protocol".into()));
        }
        Ok(())
    }
}

/// One evaluation point along a fine-tuning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetunePoint {
    pub batch: usize,
    /// Extrinsic training steps consumed so far.
    pub extrinsic_steps: u64,
    pub adaptation: AdaptationReport,
}

/// Fine-tunes `params` with extrinsic rewards on lifetimes drawn from
/// `train_pool`, evaluating on `eval_pool` before training and after
/// every batch. The two spec protocols are instances of this driver:
/// the fixed protocol passes the frozen pool as both arguments; the meta
/// protocol passes the training split and resamples evaluation tasks.
/// Training steps are booked to `pretrain`, evaluation steps to `eval`.
pub fn run_finetune(
    policy: &SeqPolicy,
    params: &mut FlatParams,
    cfg: &FinetuneConfig,
    train_pool: &[EnvSpec],
    eval_pool: &[EnvSpec],
    ledger: &mut StepLedger,
) -> Result<Vec<FinetunePoint>> {
    cfg.validate()?;
    if train_pool.is_empty() || eval_pool.is_empty() {
        return Err(UleeError::Pool("run_finetune: empty pool".into()));
    }
    let mut adam = AdamState::new(params.data.len());
    let ppo = PpoConfig::pretrain();
    let mut points = Vec::with_capacity(cfg.n_batches + 1);
    let mut extrinsic_steps = 0u64;
    let eval_point = |batch: usize,
                          extrinsic_steps: u64,
                          params: &FlatParams,
                          ledger: &mut StepLedger|
     -> Result<FinetunePoint> {
        let eval_seed = if cfg.resample_eval {
            cfg.seed.wrapping_add(1 + batch as u64)
        } else {
            cfg.seed
        };
        Ok(FinetunePoint {
            batch,
            extrinsic_steps,
            adaptation: eval_adaptation(
                policy,
                params,
                eval_pool,
                cfg.eval_tasks,
                cfg.eval_h,
                cfg.eval_last_k,
                eval_seed,
                ledger,
            )?,
        })
    };
    points.push(eval_point(0, 0, params, ledger)?);
    for batch in 0..cfg.n_batches {
        let mut env_rng = stream(cfg.seed, "ft-envs", batch as u64);
        let mut runners = Vec::with_capacity(cfg.n_envs);
        for i in 0..cfg.n_envs {
            let spec = train_pool[env_rng.gen_range(0..train_pool.len())].clone();
            let idx = (batch * cfg.n_envs + i) as u64;
            let s0: WorldState = reset_lifetime(&spec, &mut stream(cfg.seed, "ft-reset", idx))?;
            runners.push(EnvRunner::new(
                spec,
                s0,
                TaskKind::EnvGoal,
                policy,
                stream(cfg.seed, "ft-act", idx),
            ));
        }
        let segments = cfg.steps_per_env / cfg.update_interval;
        for seg in 0..segments {
            let ro = collect_segment(
                policy,
                params,
                &mut runners,
                cfg.update_interval,
                seg + 1 == segments,
            )?;
            extrinsic_steps += (cfg.n_envs * cfg.update_interval) as u64;
            ledger.add(StepClass::Pretrain, (cfg.n_envs * cfg.update_interval) as u64);
            ppo_update(
                policy,
                params,
                &mut adam,
                &ro,
                &ppo,
                &mut stream(cfg.seed, "ft-ppo", (batch * segments + seg) as u64),
            )?;
        }
        points.push(eval_point(batch + 1, extrinsic_steps, params, ledger)?);
    }
    Ok(points)
}

/// Verifies that two pool files are disjoint: different content hashes
/// and no shared specs.
pub fn ensure_disjoint_pools(train: &Path, eval: &Path) -> Result<()> {
    if pool_hash(train)? == pool_hash(eval)? {
        return Err(UleeError::Pool(format!(
            "train and eval pools are identical: {} / {}",
            train.display(),
            eval.display()
        )));
    }
    let train_set: HashSet<String> =
        load_pool(train)?.iter().map(|s| s.to_line()).collect();
    for spec in load_pool(eval)? {
        if train_set.contains(&spec.to_line()) {
            return Err(UleeError::Pool(format!(
                "spec seed {} appears in both train and eval pools",
                spec.seed
            )));
        }
    }
    Ok(())
}

/// CSV renderings of the reports (one table per protocol, axes matching
/// the aggregate curves).
pub fn exploration_csv(r: &ExplorationReport) -> String {
    let mut s = String::from("episode_budget,frac_goals_reached\n");
    for (j, f) in r.frac_reached_by.iter().enumerate() {
        s.push_str(&format!("{},{f}\n", j + 1));
    }
    s
}

pub fn adaptation_csv(r: &AdaptationReport) -> String {
    let mut s = String::from("episode,mean_return\n");
    for (j, m) in r.mean_return_by_episode.iter().enumerate() {
        s.push_str(&format!("{},{m}\n", j + 1));
    }
    s.push_str("percentile,score\n");
    s.push_str(&format!("mean,{}\n", r.percentiles.mean));
    s.push_str(&format!("p40,{}\n", r.percentiles.p40));
    s.push_str(&format!("p20,{}\n", r.percentiles.p20));
    s
}

pub fn finetune_csv(points: &[FinetunePoint]) -> String {
    let mut s = String::from("batch,extrinsic_steps,mean,p40,p20\n");
    for p in points {
        let t = &p.adaptation.percentiles;
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            p.batch, p.extrinsic_steps, t.mean, t.p40, t.p20
        ));
    }
    s
}
