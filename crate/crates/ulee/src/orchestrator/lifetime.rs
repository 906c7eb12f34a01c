//! Lifetime execution: contiguous episodes in one environment with
//! persistent policy memory, for both self-imposed and extrinsic goals.

use rand_chacha::ChaCha8Rng;

use crate::env::world::{advance, observe, step, WorldState};
use crate::env::{Action, EnvSpec};
use crate::error::Result;
use crate::goals::{goal_reached, intrinsic_reward, Goal};
use crate::nn::FlatParams;
use crate::rl::Rollout;
use crate::seqpolicy::distr::{log_prob, sample_action};
use crate::seqpolicy::{SeqPolicy, StepInput};

/// What the agent is rewarded for during a lifetime.
#[derive(Debug, Clone)]
pub enum TaskKind {
    /// A self-imposed goal under the goal mapping; reward on first reach,
    /// episode terminates there.
    SelfGoal(Goal),
    /// The environment's own extrinsic goal.
    EnvGoal,
}

/// One step's record, as produced by [`EnvRunner::step_once`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub input: StepInput,
    pub action: usize,
    pub logp: f64,
    pub value: f64,
    pub reward: f64,
    pub episode_done: bool,
    pub success: bool,
}

/// Incremental per-environment lifetime state: world, recurrent memory,
/// carried previous action/reward, and per-episode success flags.
#[derive(Debug, Clone)]
pub struct EnvRunner {
    pub spec: EnvSpec,
    pub s0: WorldState,
    pub state: WorldState,
    pub task: TaskKind,
    pub mem: crate::seqpolicy::Memory,
    pub rng: ChaCha8Rng,
    pub episode_success: Vec<bool>,
    pub steps: usize,
    prev_action: Option<Action>,
    prev_reward: f64,
    episode_start: bool,
}

impl EnvRunner {
    /// Fresh lifetime: memory zeroed, environment at its initial state.
    pub fn new(
        spec: EnvSpec,
        s0: WorldState,
        task: TaskKind,
        policy: &SeqPolicy,
        rng: ChaCha8Rng,
    ) -> Self {
        let state = s0.clone();
        EnvRunner {
            spec,
            s0,
            state,
            task,
            mem: policy.memory(),
            rng,
            episode_success: Vec::new(),
            steps: 0,
            prev_action: None,
            prev_reward: 0.0,
            episode_start: true,
        }
    }

    /// Replaces the task mid-run is not supported; a lifetime has one goal.
    pub fn completed_episodes(&self) -> usize {
        self.episode_success.len()
    }

    /// The input the next step will consume (used for value bootstraps).
    pub fn pending_input(&self) -> StepInput {
        StepInput {
            obs: observe(&self.state),
            episode_start: self.episode_start,
            prev_action: self.prev_action,
            prev_reward: self.prev_reward,
        }
    }

    /// Value estimate for the pending state without advancing anything.
    pub fn peek_value(&self, policy: &SeqPolicy, params: &FlatParams) -> Result<f64> {
        let mut mem = self.mem.clone();
        let out = policy.policy_step(params, &mut mem, &self.pending_input(), None)?;
        Ok(out.value)
    }

    /// Acts once: policy forward, action sample, environment transition,
    /// episode bookkeeping (reset to s0 on termination; memory persists).
    pub fn step_once(&mut self, policy: &SeqPolicy, params: &FlatParams) -> Result<StepOutcome> {
        let input = self.pending_input();
        let out = policy.policy_step(params, &mut self.mem, &input, None)?;
        let a = sample_action(&out.logits, &mut self.rng);
        let action = Action::from_index(a);
        let t_before = self.state.t;
        let (reward, episode_done, success) = match &self.task {
            TaskKind::EnvGoal => {
                let r = step(&self.spec, &mut self.state, action);
                (r.reward, r.done, r.success)
            }
            TaskKind::SelfGoal(goal) => {
                advance(&self.spec, &mut self.state, action);
                let reached = goal_reached(&self.state, goal, &self.spec.bench.kinds)?;
                let done = reached || self.state.t >= self.spec.max_steps;
                (
                    intrinsic_reward(reached, t_before, self.spec.max_steps),
                    done,
                    reached,
                )
            }
        };
        self.steps += 1;
        if episode_done {
            self.episode_success.push(success);
            self.state = self.s0.clone();
            self.episode_start = true;
        } else {
            self.episode_start = false;
        }
        self.prev_action = Some(action);
        self.prev_reward = reward;
        Ok(StepOutcome {
            input,
            action: a,
            logp: log_prob(&out.logits, a),
            value: out.value,
            reward,
            episode_done,
            success,
        })
    }
}

/// Full record of one lifetime, step-level and episode-level.
#[derive(Debug, Clone)]
pub struct LifetimeTranscript {
    pub goal: TaskKind,
    pub inputs: Vec<StepInput>,
    pub actions: Vec<usize>,
    pub logps: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub episode_done: Vec<bool>,
    /// Success flag per completed episode, in order.
    pub episode_success: Vec<bool>,
    pub steps: usize,
}

impl LifetimeTranscript {
    /// Sum of rewards per completed episode.
    pub fn episode_returns(&self) -> Vec<f64> {
        let mut returns = Vec::new();
        let mut acc = 0.0;
        for t in 0..self.rewards.len() {
            acc += self.rewards[t];
            if self.episode_done[t] {
                returns.push(acc);
                acc = 0.0;
            }
        }
        returns
    }
}

/// Runs `episodes` back-to-back episodes from a fresh lifetime start and
/// records everything. Episodes may terminate early; the transcript's
/// step count is the realized total.
pub fn run_lifetime(
    policy: &SeqPolicy,
    params: &FlatParams,
    spec: &EnvSpec,
    s0: &WorldState,
    task: TaskKind,
    episodes: usize,
    rng: ChaCha8Rng,
) -> Result<LifetimeTranscript> {
    let mut runner = EnvRunner::new(spec.clone(), s0.clone(), task.clone(), policy, rng);
    let mut tr = LifetimeTranscript {
        goal: task,
        inputs: Vec::new(),
        actions: Vec::new(),
        logps: Vec::new(),
        values: Vec::new(),
        rewards: Vec::new(),
        episode_done: Vec::new(),
        episode_success: Vec::new(),
        steps: 0,
    };
    while runner.completed_episodes() < episodes {
        let o = runner.step_once(policy, params)?;
        tr.inputs.push(o.input);
        tr.actions.push(o.action);
        tr.logps.push(o.logp);
        tr.values.push(o.value);
        tr.rewards.push(o.reward);
        tr.episode_done.push(o.episode_done);
        tr.steps += 1;
    }
    tr.episode_success = runner.episode_success.clone();
    Ok(tr)
}

/// Steps every runner `n_steps` times in fixed order and assembles the
/// on-policy rollout for one PPO update. `final_segment` marks the
/// lifetime's last segment: its streams are cut at the end instead of
/// bootstrapped.
pub fn collect_segment(
    policy: &SeqPolicy,
    params: &FlatParams,
    runners: &mut [EnvRunner],
    n_steps: usize,
    final_segment: bool,
) -> Result<Rollout> {
    let mut ro = Rollout::with_capacity(runners.len(), n_steps);
    for (e, runner) in runners.iter_mut().enumerate() {
        ro.start_memory.push(runner.mem.clone());
        for t in 0..n_steps {
            let o = runner.step_once(policy, params)?;
            ro.inputs[e].push(o.input);
            ro.actions[e].push(o.action);
            ro.behavior_logp[e].push(o.logp);
            ro.rewards[e].push(o.reward);
            ro.values[e].push(o.value);
            ro.episode_done[e].push(o.episode_done);
            ro.lifetime_cut[e].push(final_segment && t + 1 == n_steps);
        }
        ro.bootstrap[e] = if final_segment {
            0.0
        } else {
            runner.peek_value(policy, params)?
        };
    }
    Ok(ro)
}
