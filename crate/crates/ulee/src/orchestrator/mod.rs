//! The outer training loop: environment batching, goal assignment,
//! lifetime execution with interleaved PPO updates, difficulty-predictor
//! training, and goal-search-policy training, plus the ablation variants.
//!
//! All randomness is drawn from per-purpose named streams of the run
//! seed, so a single-threaded run is bit-reproducible and any stage can
//! be replayed in isolation from (seed, label, index).

pub mod config;
pub mod ledger;
pub mod lifetime;
pub mod metrics;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::{
    collect_candidates, collect_candidates_random, empirical_difficulty, goal_search_rewards,
    learning_progress_post, sample_goal, single_episode_difficulty, CandidateGoalSet,
    DifficultyPredictor, DifficultyRecord, GoalBuffer, PredictorArch, SampledGoal, SearchState,
};
use crate::env::world::reset_lifetime;
use crate::env::{EnvSpec, WorldState};
use crate::error::{Result, UleeError};
use crate::nn::FlatParams;
use crate::rl::{ppo_update, AdamState, PpoStats, Rollout};
use crate::rng::stream;
use crate::seqpolicy::checkpoint::{self, RngState};
use crate::seqpolicy::{PolicyArch, SeqPolicy};

pub use config::{
    DifficultyVariant, GoalSearchVariant, SamplingVariant, ScorerVariant, SearchConfig,
    TrainConfig, Variant,
};
pub use ledger::{StepClass, StepLedger};
pub use lifetime::{
    collect_segment, run_lifetime, EnvRunner, LifetimeTranscript, StepOutcome, TaskKind,
};
pub use metrics::{mean_ppo_stats, BatchRecord, CurriculumStats, MetricsWriter};

/// Checkpoint-bundle file names.
const PI_FILE: &str = "pi.ckpt";
const GS_FILE: &str = "gs.ckpt";
const DP_FILE: &str = "dp.ckpt";
const MANIFEST_FILE: &str = "manifest.json";

/// Architecture labels baked into the per-component checkpoint headers.
const PI_LABEL: &str = "policy";
const GS_LABEL: &str = "goal-search";
const DP_LABEL: &str = "difficulty-predictor";

/// Everything that evolves across pre-training batches.
pub struct PretrainState {
    pub cfg: TrainConfig,
    pub policy: SeqPolicy,
    pub pi_params: FlatParams,
    pub pi_adam: AdamState,
    /// The goal-search policy shares the architecture of the pre-trained
    /// policy but has independent parameters.
    pub gs_params: FlatParams,
    pub gs_adam: AdamState,
    pub dp: DifficultyPredictor,
    pub dp_params: FlatParams,
    pub dp_adam: AdamState,
    pub buffer: GoalBuffer,
    pub ledger: StepLedger,
    pub metrics: MetricsWriter,
    pub batches_done: usize,
    /// Index into `cfg.checkpoint_milestones` of the next unwritten one.
    next_milestone: usize,
}

impl PretrainState {
    /// Desk-scale architectures derived from the benchmark config.
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        let kinds = cfg.bench.kinds;
        let parch = PolicyArch::desk_default(&kinds);
        let darch = PredictorArch::desk_default(cfg.bench.grid_size);
        Self::with_arch(cfg, parch, darch)
    }

    /// Mid-size architectures for CPU-budget directional experiments.
    pub fn mid(cfg: TrainConfig) -> Result<Self> {
        let kinds = cfg.bench.kinds;
        let parch = PolicyArch::mid(&kinds);
        let darch = PredictorArch::mid(cfg.bench.grid_size);
        Self::with_arch(cfg, parch, darch)
    }

    /// Tiny architectures for tests.
    pub fn tiny(cfg: TrainConfig) -> Result<Self> {
        let kinds = cfg.bench.kinds;
        let parch = PolicyArch::tiny(&kinds);
        let darch = PredictorArch::tiny(cfg.bench.grid_size);
        Self::with_arch(cfg, parch, darch)
    }

    pub fn with_arch(cfg: TrainConfig, parch: PolicyArch, darch: PredictorArch) -> Result<Self> {
        cfg.validate()?;
        let kinds = cfg.bench.kinds;
        let policy = SeqPolicy::new(parch, kinds)?;
        let dp = DifficultyPredictor::new(darch, kinds)?;
        let pi_params = policy.init_params(&mut stream(cfg.seed, "init-pi", 0));
        let gs_params = policy.init_params(&mut stream(cfg.seed, "init-gs", 0));
        let dp_params = dp.init_params(&mut stream(cfg.seed, "init-dp", 0));
        let pi_adam = AdamState::new(pi_params.data.len());
        let gs_adam = AdamState::new(gs_params.data.len());
        let dp_adam = AdamState::new(dp_params.data.len());
        let buffer = GoalBuffer::new(cfg.buffer_batches, cfg.n_envs);
        Ok(PretrainState {
            cfg,
            policy,
            pi_params,
            pi_adam,
            gs_params,
            gs_adam,
            dp,
            dp_params,
            dp_adam,
            buffer,
            ledger: StepLedger::default(),
            metrics: MetricsWriter::new(),
            batches_done: 0,
            next_milestone: 0,
        })
    }
}

/// Checkpoint-bundle manifest: enough to validate a reload and to place
/// the bundle on the training timeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub pretrain_steps: u64,
    pub batches_done: usize,
    pub ledger: StepLedger,
    pub variant: Variant,
    pub seed: u64,
    pub policy_arch: String,
    pub predictor_arch: String,
}

/// Writes π, π_gs, and the difficulty predictor into `dir` with a
/// manifest. The bundle is self-describing: each component checkpoint
/// carries an architecture hash, and the manifest records the run state.
pub fn save_bundle(dir: &Path, st: &PretrainState) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rng = RngState::capture(&stream(st.cfg.seed, "ckpt", st.ledger.pretrain));
    checkpoint::save(&dir.join(PI_FILE), &st.pi_params, PI_LABEL, &rng)?;
    checkpoint::save(&dir.join(GS_FILE), &st.gs_params, GS_LABEL, &rng)?;
    checkpoint::save(&dir.join(DP_FILE), &st.dp_params, DP_LABEL, &rng)?;
    let manifest = BundleManifest {
        pretrain_steps: st.ledger.pretrain,
        batches_done: st.batches_done,
        ledger: st.ledger,
        variant: st.cfg.variant,
        seed: st.cfg.seed,
        policy_arch: st.policy.layout.arch_string(),
        predictor_arch: st.dp.layout.arch_string(),
    };
    std::fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

/// Loads a bundle written by [`save_bundle`] against the given
/// architectures. Returns (π, π_gs, dp) parameters and the manifest.
pub fn load_bundle(
    dir: &Path,
    policy: &SeqPolicy,
    dp: &DifficultyPredictor,
) -> Result<(FlatParams, FlatParams, FlatParams, BundleManifest)> {
    let (pi, _) = checkpoint::load(&dir.join(PI_FILE), policy.layout.clone(), PI_LABEL)?;
    let (gs, _) = checkpoint::load(&dir.join(GS_FILE), policy.layout.clone(), GS_LABEL)?;
    let (dpp, _) = checkpoint::load(&dir.join(DP_FILE), dp.layout.clone(), DP_LABEL)?;
    let manifest: BundleManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.policy_arch != policy.layout.arch_string()
        || manifest.predictor_arch != dp.layout.arch_string()
    {
        return Err(UleeError::Checkpoint(format!(
            "{}: manifest architecture mismatch",
            dir.display()
        )));
    }
    Ok((pi, gs, dpp, manifest))
}

/// Per-environment batch assignment: the sampled world, the chosen goal,
/// and the curriculum bookkeeping attached to it.
pub struct Assignment {
    spec: EnvSpec,
    s0: WorldState,
    candidates: CandidateGoalSet,
    sampled: SampledGoal,
    /// Carried goal-search state (adversarial variant only).
    search: Option<SearchState>,
}

/// Goal selection for one environment under the configured variant.
#[allow(clippy::too_many_arguments)]
fn assign_goal(
    st: &mut PretrainState,
    spec: EnvSpec,
    s0: WorldState,
    idx: u64,
) -> Result<Assignment> {
    let cfg = &st.cfg;
    let sc = &cfg.search;
    let mut rng = stream(cfg.seed, "search", idx);
    let (candidates, search) = match cfg.variant.goal_search {
        GoalSearchVariant::Adversarial => {
            let mut search = SearchState::fresh(&st.policy);
            let (set, traj) = collect_candidates(
                &st.policy,
                &st.gs_params,
                &mut search,
                &spec,
                &s0,
                cfg.goal_mapping,
                sc.k_episodes,
                sc.spacing,
                &mut rng,
            )?;
            st.ledger.add(StepClass::GoalSearch, traj.len() as u64);
            (set, Some(search))
        }
        GoalSearchVariant::Random => {
            let (set, steps) = collect_candidates_random(
                &spec,
                &s0,
                cfg.goal_mapping,
                sc.k_episodes,
                sc.spacing,
                &mut rng,
            )?;
            st.ledger.add(StepClass::GoalSearch, steps as u64);
            (set, None)
        }
    };
    // The uniform-sampling ablation draws over all candidates; the full
    // [0, 1] band admits every sigmoid prediction, so no fallback fires.
    let (lb, ub) = match cfg.variant.sampling {
        SamplingVariant::Bounded => (sc.lb, sc.ub),
        SamplingVariant::Uniform => (0.0, 1.0),
    };
    let mut sample_rng = stream(cfg.seed, "goal-sample", idx);
    let sampled = sample_goal(&candidates, &st.dp, &st.dp_params, lb, ub, &mut sample_rng)?;
    Ok(Assignment {
        spec,
        s0,
        candidates,
        sampled,
        search,
    })
}

/// One round of goal-search-policy training over the batch: every
/// environment runs `train_episodes` more search episodes continuing
/// from its carried search state, rewards are labeled by the freshly
/// updated predictor, and one PPO update is taken.
pub fn run_goal_search_training(
    st: &mut PretrainState,
    assignments: &mut [Assignment],
    batch: usize,
    round: usize,
) -> Result<PpoStats> {
    let cfg = st.cfg.clone();
    let sc = &cfg.search;
    let t_len = cfg.bench.max_steps;
    let n_steps = sc.train_episodes * t_len;
    let mut ro = Rollout::with_capacity(assignments.len(), n_steps);
    for (e, asg) in assignments.iter_mut().enumerate() {
        let search = asg
            .search
            .as_mut()
            .expect("goal-search training requires the adversarial variant");
        ro.start_memory.push(search.mem.clone());
        let mut rng = stream(
            cfg.seed,
            "gs-train",
            ((batch * sc.num_gs_updates + round) * cfg.n_envs + e) as u64,
        );
        let traj = crate::curriculum::run_search_episodes(
            &st.policy,
            &st.gs_params,
            search,
            &asg.spec,
            &asg.s0,
            cfg.goal_mapping,
            sc.train_episodes,
            &mut rng,
        )?;
        let rewards = goal_search_rewards(&traj, &st.dp, &st.dp_params, &asg.candidates.env_info)?;
        st.ledger.add(StepClass::GoalSearch, traj.len() as u64);
        ro.inputs[e] = traj.inputs;
        ro.actions[e] = traj.actions;
        ro.behavior_logp[e] = traj.behavior_logp;
        ro.values[e] = traj.values;
        ro.episode_done[e] = traj.episode_done;
        ro.rewards[e] = rewards;
        // Each training round is optimized as its own finite horizon.
        ro.lifetime_cut[e] = (0..n_steps).map(|t| t + 1 == n_steps).collect();
        ro.bootstrap[e] = 0.0;
    }
    ppo_update(
        &st.policy,
        &mut st.gs_params,
        &mut st.gs_adam,
        &ro,
        &cfg.ppo_goal_search(),
        &mut stream(cfg.seed, "gs-ppo", (batch * sc.num_gs_updates + round) as u64),
    )
}

fn with_batch(e: UleeError, batch: usize, env_seed: u64) -> UleeError {
    UleeError::Batch {
        batch,
        env_seed,
        source: Box::new(e),
    }
}

/// Runs `cfg.n_batches` batches of Algorithm-1 pre-training over
/// environments drawn from `pool`, mutating `st` in place. Checkpoint
/// bundles are written under `out_dir` at the configured pretrain-step
/// milestones (directories `ckpt_<steps>`) when `out_dir` is given.
pub fn run_pretraining(
    st: &mut PretrainState,
    pool: &[EnvSpec],
    out_dir: Option<&Path>,
) -> Result<()> {
    if pool.is_empty() {
        return Err(UleeError::Pool("run_pretraining: empty pool".into()));
    }
    let cfg = st.cfg.clone();
    let first_batch = st.batches_done;
    for batch in first_batch..first_batch + cfg.n_batches {
        run_batch(st, pool, batch, out_dir)?;
    }
    if let Some(dir) = out_dir {
        save_bundle(&dir.join("ckpt_final"), st)?;
    }
    Ok(())
}

fn run_batch(
    st: &mut PretrainState,
    pool: &[EnvSpec],
    batch: usize,
    out_dir: Option<&Path>,
) -> Result<()> {
    let cfg = st.cfg.clone();

    // 1. Sample this batch's environments and lifetime-initial states.
    let mut env_rng = stream(cfg.seed, "batch-envs", batch as u64);
    let mut worlds: Vec<(EnvSpec, WorldState)> = Vec::with_capacity(cfg.n_envs);
    for i in 0..cfg.n_envs {
        let spec = pool[env_rng.gen_range(0..pool.len())].clone();
        let idx = (batch * cfg.n_envs + i) as u64;
        let s0 = reset_lifetime(&spec, &mut stream(cfg.seed, "reset", idx))
            .map_err(|e| with_batch(e, batch, spec.seed))?;
        worlds.push((spec, s0));
    }

    // 2. Candidate search and goal sampling per environment.
    let mut assignments = Vec::with_capacity(cfg.n_envs);
    for (i, (spec, s0)) in worlds.into_iter().enumerate() {
        let idx = (batch * cfg.n_envs + i) as u64;
        let env_seed = spec.seed;
        let asg =
            assign_goal(st, spec, s0, idx).map_err(|e| with_batch(e, batch, env_seed))?;
        assignments.push(asg);
    }
    let frac_fallback =
        assignments.iter().filter(|a| a.sampled.fallback).count() as f64 / cfg.n_envs as f64;
    let mean_sampled_difficulty = assignments
        .iter()
        .map(|a| a.sampled.predicted_difficulty)
        .sum::<f64>()
        / cfg.n_envs as f64;

    // 3. Lifetime training of π with periodic PPO updates.
    let mut runners: Vec<EnvRunner> = assignments
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let idx = (batch * cfg.n_envs + i) as u64;
            EnvRunner::new(
                a.spec.clone(),
                a.s0.clone(),
                TaskKind::SelfGoal(a.sampled.goal.clone()),
                &st.policy,
                stream(cfg.seed, "act", idx),
            )
        })
        .collect();
    let segments = cfg.steps_per_env_before_resample / cfg.update_interval;
    let mut seg_stats = Vec::with_capacity(segments);
    for seg in 0..segments {
        let final_segment = seg + 1 == segments;
        let ro = collect_segment(
            &st.policy,
            &st.pi_params,
            &mut runners,
            cfg.update_interval,
            final_segment,
        )
        .map_err(|e| with_batch(e, batch, 0))?;
        st.ledger.add(
            StepClass::Pretrain,
            (cfg.n_envs * cfg.update_interval) as u64,
        );
        let stats = ppo_update(
            &st.policy,
            &mut st.pi_params,
            &mut st.pi_adam,
            &ro,
            &cfg.ppo_pretrain(),
            &mut stream(cfg.seed, "pi-ppo", (batch * segments + seg) as u64),
        )
        .map_err(|e| with_batch(e, batch, 0))?;
        seg_stats.push(stats);
        if let Some(dir) = out_dir {
            while st.next_milestone < cfg.checkpoint_milestones.len()
                && st.ledger.pretrain >= cfg.checkpoint_milestones[st.next_milestone]
            {
                let m = cfg.checkpoint_milestones[st.next_milestone];
                save_bundle(&dir.join(format!("ckpt_{m}")), st)?;
                st.next_milestone += 1;
            }
        }
    }

    // 4.-5. Empirical difficulties and buffer pushes.
    let mut emp_sum = 0.0;
    let mut success_sum = 0.0;
    for (i, (asg, runner)) in assignments.iter().zip(&runners).enumerate() {
        let idx = (batch * cfg.n_envs + i) as u64;
        let emp = match cfg.variant.difficulty {
            DifficultyVariant::PostAdaptation => {
                empirical_difficulty(&runner.episode_success, cfg.last_k)
                    .map_err(|e| with_batch(e, batch, asg.spec.seed))?
            }
            DifficultyVariant::Sed => {
                let (d, steps) = single_episode_difficulty(
                    &st.policy,
                    &st.pi_params,
                    &asg.spec,
                    &asg.s0,
                    &asg.sampled.goal,
                    cfg.last_k,
                    &mut stream(cfg.seed, "sed", idx),
                )
                .map_err(|e| with_batch(e, batch, asg.spec.seed))?;
                st.ledger.add(StepClass::SedExtra, steps as u64);
                d
            }
        };
        emp_sum += emp;
        let n_ep = runner.episode_success.len().max(1);
        success_sum +=
            runner.episode_success.iter().filter(|&&s| s).count() as f64 / n_ep as f64;
        let target = match cfg.variant.scorer {
            ScorerVariant::Difficulty => emp,
            // Post-hoc learning progress against the predictor's own
            // pre-update estimate of the sampled goal.
            ScorerVariant::LpPost => {
                learning_progress_post(emp, asg.sampled.predicted_difficulty)
            }
        };
        st.buffer.push(DifficultyRecord {
            goal_snapshot: asg.candidates.source_states[asg.sampled.index].clone(),
            env_info: asg.candidates.env_info.clone(),
            empirical_difficulty: target,
        });
    }

    // 6. Predictor training on the buffer.
    let records = st.buffer.records();
    let predictor = crate::curriculum::train_difficulty_predictor(
        &st.dp,
        &mut st.dp_params,
        &mut st.dp_adam,
        &records,
        &cfg.predictor_train,
        &mut stream(cfg.seed, "dp-train", batch as u64),
    )
    .map_err(|e| with_batch(e, batch, 0))?;

    // 7. Goal-search-policy training (adversarial variant only).
    let mut gs_stats = Vec::new();
    if cfg.variant.goal_search == GoalSearchVariant::Adversarial {
        for round in 0..cfg.search.num_gs_updates {
            let stats = run_goal_search_training(st, &mut assignments, batch, round)
                .map_err(|e| with_batch(e, batch, 0))?;
            gs_stats.push(stats);
        }
    }

    st.batches_done = batch + 1;
    st.metrics.push(&BatchRecord {
        batch,
        ledger: st.ledger,
        curriculum: CurriculumStats {
            frac_fallback,
            mean_sampled_difficulty,
            mean_empirical_difficulty: emp_sum / cfg.n_envs as f64,
            buffer_len: st.buffer.len(),
        },
        predictor,
        policy: mean_ppo_stats(&seg_stats),
        goal_search: if gs_stats.is_empty() {
            None
        } else {
            Some(mean_ppo_stats(&gs_stats))
        },
        mean_success_rate: success_sum / cfg.n_envs as f64,
    });
    Ok(())
}

/// Draws a deterministic sample of `n` specs from a pool (used by eval
/// drivers that need a fixed environment subset).
pub fn sample_specs<'a>(
    pool: &'a [EnvSpec],
    n: usize,
    seed: u64,
    label: &str,
) -> Vec<&'a EnvSpec> {
    let mut rng = stream(seed, label, 0);
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut rng);
    idx.into_iter().take(n).map(|i| &pool[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_env_spec, BenchConfig};

    fn tiny_pool(n: usize) -> Vec<EnvSpec> {
        let bench = BenchConfig::desk_trivial();
        (0..n)
            .map(|i| sample_env_spec(&mut stream(90, "pool", i as u64), &bench).unwrap())
            .collect()
    }

    fn tiny_cfg() -> TrainConfig {
        let mut cfg = TrainConfig::tiny(BenchConfig::desk_trivial());
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn ledger_accounts_every_step_class() {
        let cfg = tiny_cfg();
        let mut st = PretrainState::tiny(cfg.clone()).unwrap();
        run_pretraining(&mut st, &tiny_pool(4), None).unwrap();
        let t = cfg.bench.max_steps as u64;
        let n = cfg.n_envs as u64;
        assert_eq!(
            st.ledger.pretrain,
            n * cfg.steps_per_env_before_resample as u64
        );
        // Collection (k·T) plus one training round (3·T) per env.
        assert_eq!(
            st.ledger.goal_search,
            n * t * (cfg.search.k_episodes + cfg.search.train_episodes) as u64
        );
        assert_eq!(st.ledger.sed_extra, 0);
        assert_eq!(st.ledger.eval, 0);
        assert_eq!(st.buffer.len(), cfg.n_envs);
        assert_eq!(st.metrics.lines().len(), 1);
        let rec: BatchRecord = serde_json::from_str(&st.metrics.lines()[0]).unwrap();
        assert!(rec.goal_search.is_some());
        assert!((0.0..=1.0).contains(&rec.curriculum.mean_empirical_difficulty));
    }

    #[test]
    fn same_seed_gives_identical_metric_streams() {
        let pool = tiny_pool(4);
        let run = || {
            let mut st = PretrainState::tiny(tiny_cfg()).unwrap();
            run_pretraining(&mut st, &pool, None).unwrap();
            (st.metrics.to_string(), st.pi_params.data.clone())
        };
        let (m1, p1) = run();
        let (m2, p2) = run();
        assert_eq!(m1, m2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn explicit_default_variant_matches_the_main_pipeline() {
        // Ablation flags set to the ULEE defaults must be a no-op.
        let pool = tiny_pool(4);
        let run = |variant: Variant| {
            let mut cfg = tiny_cfg();
            cfg.variant = variant;
            let mut st = PretrainState::tiny(cfg).unwrap();
            run_pretraining(&mut st, &pool, None).unwrap();
            st.metrics.to_string()
        };
        let main = run(Variant::default());
        let explicit =
            run(Variant::parse("adversarial_bounded_postadaptation_difficulty").unwrap());
        assert_eq!(main, explicit);
    }

    #[test]
    fn random_variant_skips_search_training() {
        let mut cfg = tiny_cfg();
        cfg.variant = Variant::parse("random_uniform").unwrap();
        let mut st = PretrainState::tiny(cfg.clone()).unwrap();
        run_pretraining(&mut st, &tiny_pool(4), None).unwrap();
        let t = cfg.bench.max_steps as u64;
        // Only the k collection episodes are booked; no training rounds.
        assert_eq!(
            st.ledger.goal_search,
            cfg.n_envs as u64 * t * cfg.search.k_episodes as u64
        );
        let rec: BatchRecord = serde_json::from_str(&st.metrics.lines()[0]).unwrap();
        assert!(rec.goal_search.is_none());
        // The [0, 1] band admits everything, so no fallback draws.
        assert_eq!(rec.curriculum.frac_fallback, 0.0);
    }

    #[test]
    fn sed_variant_books_extra_steps_separately() {
        let mut cfg = tiny_cfg();
        cfg.variant = Variant::parse("sed").unwrap();
        let mut st = PretrainState::tiny(cfg.clone()).unwrap();
        run_pretraining(&mut st, &tiny_pool(4), None).unwrap();
        assert!(st.ledger.sed_extra > 0);
        assert!(
            st.ledger.sed_extra
                <= (cfg.n_envs * cfg.last_k * cfg.bench.max_steps) as u64
        );
        // Pre-training accounting is unaffected by the extra episodes.
        assert_eq!(
            st.ledger.pretrain,
            (cfg.n_envs * cfg.steps_per_env_before_resample) as u64
        );
    }

    #[test]
    fn milestone_bundles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg();
        // First milestone crosses after the first update segment.
        cfg.checkpoint_milestones = vec![(cfg.n_envs * cfg.update_interval) as u64];
        let mut st = PretrainState::tiny(cfg.clone()).unwrap();
        run_pretraining(&mut st, &tiny_pool(4), Some(dir.path())).unwrap();
        let m = cfg.checkpoint_milestones[0];
        let bundle = dir.path().join(format!("ckpt_{m}"));
        assert!(bundle.join(MANIFEST_FILE).exists());
        let (_pi, gs, dpp, manifest) = load_bundle(&bundle, &st.policy, &st.dp).unwrap();
        assert_eq!(manifest.pretrain_steps, m);
        // The final bundle matches the in-memory end state (f32 precision).
        let (pi_f, _, _, mf) =
            load_bundle(&dir.path().join("ckpt_final"), &st.policy, &st.dp).unwrap();
        assert_eq!(mf.pretrain_steps, st.ledger.pretrain);
        for (a, b) in pi_f.data.iter().zip(&st.pi_params.data) {
            assert!((a - b).abs() <= (*b as f32).abs() as f64 * 1e-6 + 1e-7);
        }
        // Mid-run snapshots differ from the end state.
        assert!(gs.data != st.gs_params.data || dpp.data != st.dp_params.data);
    }
}
