//! Training configuration: the outer-loop schedule, curriculum settings,
//! and ablation variant switches.

use serde::{Deserialize, Serialize};

use crate::curriculum::PredictorTrainConfig;
use crate::env::BenchConfig;
use crate::error::{Result, UleeError};
use crate::goals::GoalMapping;
use crate::rl::PpoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSearchVariant {
    /// The trained goal-search policy (the full method).
    Adversarial,
    /// Uniform-random actions; no search-policy training.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingVariant {
    /// Uniform over candidates with predicted difficulty in [lb, ub].
    Bounded,
    /// Uniform over all candidates, ignoring predictions.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyVariant {
    /// Eq. 2: complement of the success rate over the lifetime's last K
    /// episodes.
    PostAdaptation,
    /// Single-episode difficulty from K extra fresh-memory episodes.
    Sed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerVariant {
    /// Predictor targets are the empirical difficulties.
    Difficulty,
    /// Experimental: targets are |d̃ − d̂_prev|, a post-hoc learning
    /// progress proxy using the predictor's pre-update estimate as the
    /// earlier-time difficulty.
    LpPost,
}

/// Ablation switch block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub goal_search: GoalSearchVariant,
    pub sampling: SamplingVariant,
    pub difficulty: DifficultyVariant,
    pub scorer: ScorerVariant,
}

impl Default for Variant {
    fn default() -> Self {
        Variant {
            goal_search: GoalSearchVariant::Adversarial,
            sampling: SamplingVariant::Bounded,
            difficulty: DifficultyVariant::PostAdaptation,
            scorer: ScorerVariant::Difficulty,
        }
    }
}

impl Variant {
    /// Parses "adversarial_bounded", "random_uniform", etc.
    pub fn parse(s: &str) -> Result<Self> {
        let mut v = Variant::default();
        for part in s.split('_') {
            match part {
                "adversarial" => v.goal_search = GoalSearchVariant::Adversarial,
                "random" => v.goal_search = GoalSearchVariant::Random,
                "bounded" => v.sampling = SamplingVariant::Bounded,
                "uniform" => v.sampling = SamplingVariant::Uniform,
                "postadaptation" => v.difficulty = DifficultyVariant::PostAdaptation,
                "sed" => v.difficulty = DifficultyVariant::Sed,
                "difficulty" => v.scorer = ScorerVariant::Difficulty,
                "lppost" => v.scorer = ScorerVariant::LpPost,
                other => {
                    return Err(UleeError::Config(format!("unknown variant token '{other}'")))
                }
            }
        }
        Ok(v)
    }
}

/// Goal-search schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Candidate-collection episodes per environment (k).
    pub k_episodes: usize,
    /// Candidate spacing in steps (n).
    pub spacing: usize,
    /// Training episodes per goal-search update round.
    pub train_episodes: usize,
    /// Search-policy PPO rounds per batch.
    pub num_gs_updates: usize,
    /// Bounded-sampling band.
    pub lb: f64,
    pub ub: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k_episodes: 2,
            spacing: 15,
            train_episodes: 3,
            num_gs_updates: 1,
            lb: 0.1,
            ub: 0.9,
        }
    }
}

/// Full pre-training configuration. Desk defaults are scaled down from
/// the paper's (n_envs 2048, 5120 steps per env per batch) to fit a
/// single CPU core; every scale knob is settable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub bench: BenchConfig,
    pub goal_mapping: GoalMapping,
    pub n_envs: usize,
    /// Pre-training steps per environment before the batch is resampled.
    pub steps_per_env_before_resample: usize,
    /// PPO update cadence in steps per environment.
    pub update_interval: usize,
    /// Number of batches to run.
    pub n_batches: usize,
    /// Last-K window for empirical difficulty (Eq. 2).
    pub last_k: usize,
    pub search: SearchConfig,
    /// Predictor optimization schedule. The paper-default epoch count
    /// assumes a buffer of ~10k records (40 minibatches per epoch);
    /// small desk buffers should scale epochs up to keep the number of
    /// optimizer steps per batch comparable.
    #[serde(default)]
    pub predictor_train: PredictorTrainConfig,
    pub variant: Variant,
    /// Goal-buffer capacity in batches of `n_envs` records.
    pub buffer_batches: usize,
    pub seed: u64,
    /// Checkpoint milestones in cumulative pretrain steps.
    pub checkpoint_milestones: Vec<u64>,
}

impl TrainConfig {
    pub fn desk_default(bench: BenchConfig) -> Self {
        TrainConfig {
            bench,
            goal_mapping: GoalMapping::Counts,
            n_envs: 256,
            steps_per_env_before_resample: 2560,
            update_interval: 256,
            n_batches: 10,
            last_k: 5,
            search: SearchConfig::default(),
            predictor_train: PredictorTrainConfig::default(),
            variant: Variant::default(),
            buffer_batches: 5,
            seed: 0,
            checkpoint_milestones: vec![1_000_000, 3_000_000, 10_000_000, 30_000_000],
        }
    }

    /// Tiny instance for tests.
    pub fn tiny(bench: BenchConfig) -> Self {
        TrainConfig {
            n_envs: 2,
            steps_per_env_before_resample: 2 * bench.max_steps,
            update_interval: bench.max_steps,
            n_batches: 1,
            last_k: 2,
            ..TrainConfig::desk_default(bench)
        }
    }

    pub fn episodes_per_lifetime(&self) -> usize {
        self.steps_per_env_before_resample / self.bench.max_steps
    }

    pub fn validate(&self) -> Result<()> {
        self.bench.validate()?;
        if self.n_envs == 0 || self.n_batches == 0 {
            return Err(UleeError::Config("n_envs and n_batches must be positive".into()));
        }
        if self.update_interval == 0
            || self.steps_per_env_before_resample % self.update_interval != 0
        {
            return Err(UleeError::Config(format!(
                "steps_per_env_before_resample ({}) must be a positive multiple of \
                 update_interval ({})",
                self.steps_per_env_before_resample, self.update_interval
            )));
        }
        if self.steps_per_env_before_resample % self.bench.max_steps != 0 {
            return Err(UleeError::Config(format!(
                "steps_per_env_before_resample ({}) must be a multiple of the episode \
                 length ({})",
                self.steps_per_env_before_resample, self.bench.max_steps
            )));
        }
        if self.last_k == 0 || self.episodes_per_lifetime() < self.last_k {
            return Err(UleeError::Config(format!(
                "lifetime holds {} full episodes, fewer than last_k = {}",
                self.episodes_per_lifetime(),
                self.last_k
            )));
        }
        let s = &self.search;
        if s.k_episodes == 0 || s.spacing == 0 || s.train_episodes == 0 {
            return Err(UleeError::Config("search schedule must be positive".into()));
        }
        if !(0.0..=1.0).contains(&s.lb) || !(0.0..=1.0).contains(&s.ub) || s.lb > s.ub {
            return Err(UleeError::Config(format!(
                "invalid sampling band [{}, {}]",
                s.lb, s.ub
            )));
        }
        if self.buffer_batches == 0 {
            return Err(UleeError::Config("buffer_batches must be positive".into()));
        }
        Ok(())
    }

    /// Table 2 PPO settings for the pre-trained policy.
    pub fn ppo_pretrain(&self) -> PpoConfig {
        PpoConfig::pretrain()
    }

    /// Table 2 PPO settings for the goal-search policy.
    pub fn ppo_goal_search(&self) -> PpoConfig {
        PpoConfig::goal_search()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(s).map_err(|e| UleeError::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
