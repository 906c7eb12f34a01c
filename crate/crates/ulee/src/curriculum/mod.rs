//! Goal generation: candidate collection by the goal-search policy,
//! difficulty prediction, bounded sampling, empirical difficulty, and the
//! goal buffer.

pub mod predictor;

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::world::{advance, observe, WorldState};
use crate::env::EnvSpec;
use crate::error::{Result, UleeError};
use crate::goals::{apply_mapping, goal_reached, grid_snapshot, Goal, GoalMapping, GridSnapshot};
use crate::nn::FlatParams;
use crate::seqpolicy::distr::{log_prob, sample_action};
use crate::seqpolicy::{Memory, SeqPolicy, StepInput};

pub use predictor::{
    predictor_loss, train_difficulty_predictor, DifficultyPredictor, PredictorArch,
    PredictorCache, PredictorTrainConfig, PredictorTrainStats,
};

/// Candidate goals gathered by the goal-search policy in one environment,
/// with the grid snapshots the predictor scores them by.
#[derive(Debug, Clone)]
pub struct CandidateGoalSet {
    /// Multiset: duplicates weight the draw proportionally.
    pub goals: Vec<Goal>,
    /// f_grid of the goal-defining states, index-aligned with `goals`.
    pub source_states: Vec<GridSnapshot>,
    /// ξ_M: f_grid of the lifetime-initial state.
    pub env_info: GridSnapshot,
}

/// One goal with its one-sample empirical difficulty, as stored in the
/// goal buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRecord {
    pub goal_snapshot: GridSnapshot,
    pub env_info: GridSnapshot,
    pub empirical_difficulty: f64,
}

impl DifficultyRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

/// FIFO buffer of difficulty records; eviction is strictly oldest-first.
#[derive(Debug, Clone)]
pub struct GoalBuffer {
    records: VecDeque<DifficultyRecord>,
    capacity: usize,
}

impl GoalBuffer {
    /// Default capacity: the last `batches_retained` batches of pushes.
    pub fn new(batches_retained: usize, batch_size: usize) -> Self {
        GoalBuffer {
            records: VecDeque::new(),
            capacity: batches_retained * batch_size,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: DifficultyRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    /// Insertion-ordered view, oldest first.
    pub fn records(&self) -> Vec<DifficultyRecord> {
        self.records.iter().cloned().collect()
    }

    pub fn export_lines(&self) -> Vec<String> {
        self.records.iter().map(|r| r.to_line()).collect()
    }
}

/// Everything recorded while the goal-search policy acts in one
/// environment: replayable step inputs plus the visited-state snapshots
/// rewards are labeled from.
#[derive(Debug, Clone)]
pub struct SearchTrajectory {
    pub inputs: Vec<StepInput>,
    pub actions: Vec<usize>,
    pub behavior_logp: Vec<f64>,
    pub values: Vec<f64>,
    /// Episode ended after this step.
    pub episode_done: Vec<bool>,
    /// f_grid of the state each action was taken in.
    pub snapshots: Vec<GridSnapshot>,
    /// Goal-mapping image of those same states.
    pub goals: Vec<Goal>,
}

impl SearchTrajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Carried goal-search state for one environment: memory and the
/// previous action persist across the k collection episodes and the
/// subsequent training episodes, and reset between environments.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub mem: Memory,
    pub prev_action: Option<crate::env::Action>,
}

impl SearchState {
    pub fn fresh(policy: &SeqPolicy) -> Self {
        SearchState {
            mem: policy.memory(),
            prev_action: None,
        }
    }
}

/// Runs the goal-search policy for `episodes` full episodes from the
/// lifetime-initial state, recording every visited state. The search
/// episodes are rewardless while acting (rewards are labeled afterwards
/// by the predictor), so the policy sees previous-reward 0; memory
/// persists across the episodes within this environment.
pub fn run_search_episodes(
    policy: &SeqPolicy,
    params: &FlatParams,
    search: &mut SearchState,
    spec: &EnvSpec,
    s0: &WorldState,
    mapping: GoalMapping,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SearchTrajectory> {
    let t_len = spec.max_steps;
    let total = episodes * t_len;
    let mut traj = SearchTrajectory {
        inputs: Vec::with_capacity(total),
        actions: Vec::with_capacity(total),
        behavior_logp: Vec::with_capacity(total),
        values: Vec::with_capacity(total),
        episode_done: Vec::with_capacity(total),
        snapshots: Vec::with_capacity(total),
        goals: Vec::with_capacity(total),
    };
    for _ep in 0..episodes {
        let mut state = s0.clone();
        state.t = 0;
        state.goal_achieved = false;
        for t in 0..t_len {
            let input = StepInput {
                obs: observe(&state),
                episode_start: t == 0,
                prev_action: search.prev_action,
                prev_reward: 0.0,
            };
            traj.snapshots.push(grid_snapshot(&state));
            traj.goals
                .push(apply_mapping(mapping, &state, &spec.bench.kinds));
            let out = policy.policy_step(params, &mut search.mem, &input, None)?;
            let a = sample_action(&out.logits, rng);
            traj.inputs.push(input);
            traj.actions.push(a);
            traj.behavior_logp.push(log_prob(&out.logits, a));
            traj.values.push(out.value);
            traj.episode_done.push(t + 1 == t_len);
            let action = crate::env::Action::from_index(a);
            advance(spec, &mut state, action);
            search.prev_action = Some(action);
        }
    }
    Ok(traj)
}

/// Candidate collection: the goal-search policy runs `k` episodes and
/// every `n`-th visited state (t = 0, n, 2n, ... over the concatenated
/// stream) contributes its goal-mapping image as a candidate.
#[allow(clippy::too_many_arguments)]
pub fn collect_candidates(
    policy: &SeqPolicy,
    params: &FlatParams,
    search: &mut SearchState,
    spec: &EnvSpec,
    s0: &WorldState,
    mapping: GoalMapping,
    k: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(CandidateGoalSet, SearchTrajectory)> {
    if k == 0 || n == 0 {
        return Err(UleeError::Config(
            "collect_candidates: k and n must be positive".into(),
        ));
    }
    let traj = run_search_episodes(policy, params, search, spec, s0, mapping, k, rng)?;
    let mut goals = Vec::new();
    let mut source_states = Vec::new();
    for t in (0..traj.len()).step_by(n) {
        goals.push(traj.goals[t].clone());
        source_states.push(traj.snapshots[t].clone());
    }
    let set = CandidateGoalSet {
        goals,
        source_states,
        env_info: grid_snapshot(s0),
    };
    Ok((set, traj))
}

/// Random-search ablation of candidate collection: `k` episodes of
/// uniform-random actions, candidates at the same `n`-step spacing.
/// Returns the candidate set and the environment steps consumed.
pub fn collect_candidates_random(
    spec: &EnvSpec,
    s0: &WorldState,
    mapping: GoalMapping,
    k: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(CandidateGoalSet, usize)> {
    if k == 0 || n == 0 {
        return Err(UleeError::Config(
            "collect_candidates_random: k and n must be positive".into(),
        ));
    }
    let mut goals = Vec::new();
    let mut source_states = Vec::new();
    let mut steps = 0usize;
    let mut t_global = 0usize;
    for _ in 0..k {
        let mut state = s0.clone();
        state.t = 0;
        state.goal_achieved = false;
        for _ in 0..spec.max_steps {
            if t_global % n == 0 {
                goals.push(apply_mapping(mapping, &state, &spec.bench.kinds));
                source_states.push(grid_snapshot(&state));
            }
            let a = rng.gen_range(0..crate::env::NUM_ACTIONS);
            advance(spec, &mut state, crate::env::Action::from_index(a));
            steps += 1;
            t_global += 1;
        }
    }
    Ok((
        CandidateGoalSet {
            goals,
            source_states,
            env_info: grid_snapshot(s0),
        },
        steps,
    ))
}

/// Outcome of bounded goal sampling.
#[derive(Debug, Clone)]
pub struct SampledGoal {
    pub index: usize,
    pub goal: Goal,
    pub predicted_difficulty: f64,
    /// No candidate fell inside [LB, UB]; the draw was uniform over all.
    pub fallback: bool,
}

/// Uniform draw over the indices whose prediction lies in [lb, ub],
/// falling back to a uniform draw over everything when the band is empty.
pub fn sample_goal_from_predictions(
    predictions: &[f64],
    lb: f64,
    ub: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, bool)> {
    if predictions.is_empty() {
        return Err(UleeError::Contract("sample_goal: no candidates".into()));
    }
    if !(0.0..=1.0).contains(&lb) || !(0.0..=1.0).contains(&ub) || lb > ub {
        return Err(UleeError::Config(format!(
            "sample_goal: invalid bounds [{lb}, {ub}]"
        )));
    }
    let in_band: Vec<usize> = (0..predictions.len())
        .filter(|&i| predictions[i] >= lb && predictions[i] <= ub)
        .collect();
    use rand::seq::SliceRandom;
    match in_band.choose(rng) {
        Some(&i) => Ok((i, false)),
        None => {
            let i = rng.gen_range(0..predictions.len());
            Ok((i, true))
        }
    }
}

/// Bounded difficulty sampling over a candidate set (Eq. 4 semantics).
pub fn sample_goal(
    candidates: &CandidateGoalSet,
    dp: &DifficultyPredictor,
    dp_params: &FlatParams,
    lb: f64,
    ub: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SampledGoal> {
    let predictions = candidates
        .source_states
        .iter()
        .map(|s| dp.predict(dp_params, s, &candidates.env_info))
        .collect::<Result<Vec<f64>>>()?;
    let (index, fallback) = sample_goal_from_predictions(&predictions, lb, ub, rng)?;
    Ok(SampledGoal {
        index,
        goal: candidates.goals[index].clone(),
        predicted_difficulty: predictions[index],
        fallback,
    })
}

/// Complement of the success rate over the last `k` of the lifetime's
/// episodes; earlier episodes are ignored.
pub fn empirical_difficulty(per_episode_success: &[bool], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(UleeError::Config("empirical_difficulty: k must be > 0".into()));
    }
    if per_episode_success.len() < k {
        return Err(UleeError::Contract(format!(
            "empirical_difficulty: {} episodes < k = {k}",
            per_episode_success.len()
        )));
    }
    let last = &per_episode_success[per_episode_success.len() - k..];
    let successes = last.iter().filter(|&&s| s).count();
    Ok(1.0 - successes as f64 / k as f64)
}

/// Single-episode difficulty: `k` extra episodes, each run as if it were
/// a first episode (memory reset beforehand), on the already-trained
/// policy. Returns the difficulty and the environment steps consumed, so
/// the caller can account them separately from training steps.
#[allow(clippy::too_many_arguments)]
pub fn single_episode_difficulty(
    policy: &SeqPolicy,
    params: &FlatParams,
    spec: &EnvSpec,
    s0: &WorldState,
    goal: &Goal,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize)> {
    let mut successes = 0usize;
    let mut steps = 0usize;
    for _ in 0..k {
        let mut mem = policy.memory();
        let mut state = s0.clone();
        state.t = 0;
        state.goal_achieved = false;
        let mut prev_action = None;
        let mut prev_reward = 0.0;
        for t in 0..spec.max_steps {
            let input = StepInput {
                obs: observe(&state),
                episode_start: t == 0,
                prev_action,
                prev_reward,
            };
            let out = policy.policy_step(params, &mut mem, &input, None)?;
            let a = sample_action(&out.logits, rng);
            let action = crate::env::Action::from_index(a);
            advance(spec, &mut state, action);
            steps += 1;
            if goal_reached(&state, goal, &spec.bench.kinds)? {
                successes += 1;
                break;
            }
            prev_action = Some(action);
            prev_reward = 0.0;
        }
    }
    Ok((1.0 - successes as f64 / k as f64, steps))
}

/// Labels a search trajectory with Eq. 3 rewards: the predicted
/// difficulty of each visited state's goal image.
pub fn goal_search_rewards(
    traj: &SearchTrajectory,
    dp: &DifficultyPredictor,
    dp_params: &FlatParams,
    env_info: &GridSnapshot,
) -> Result<Vec<f64>> {
    traj.snapshots
        .iter()
        .map(|s| dp.predict(dp_params, s, env_info))
        .collect()
}

/// Post-hoc learning progress |d̃_now − d̃_prev| (optional alternative
/// goal-desirability scorer).
pub fn learning_progress_post(d_now: f64, d_prev: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&d_now) && (0.0..=1.0).contains(&d_prev));
    (d_now - d_prev).abs()
}
