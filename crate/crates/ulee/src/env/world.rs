//! Grid world state, dynamics, and egocentric observations.
//!
//! Dynamics per step: the action's movement/pick/put/toggle semantics are
//! applied first, then every rule whose trigger holds fires once (sites
//! scanned top-to-bottom, left-to-right; rules in spec order), then the
//! extrinsic goal is checked.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::kinds::{KIND_DOOR_CLOSED, KIND_DOOR_OPEN, KIND_FLOOR, KIND_OOB};
use crate::env::rules::{Action, ExtrinsicGoal, Orientation, Rule};
use crate::env::spec::{EnvSpec, Placement};
use crate::error::{Result, UleeError};

/// Full underlying state of one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub grid_size: usize,
    pub cells: Vec<u16>,
    pub agent_row: usize,
    pub agent_col: usize,
    pub orientation: Orientation,
    pub pocket: Option<u16>,
    pub t: usize,
    pub goal_achieved: bool,
}

impl WorldState {
    #[inline]
    pub fn cell(&self, r: usize, c: usize) -> u16 {
        self.cells[r * self.grid_size + c]
    }

    #[inline]
    pub fn set_cell(&mut self, r: usize, c: usize, k: u16) {
        self.cells[r * self.grid_size + c] = k;
    }

    fn in_bounds(&self, r: i32, c: i32) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.grid_size && (c as usize) < self.grid_size
    }

    /// Cell the agent is facing, if inside the grid.
    fn front(&self) -> Option<(usize, usize)> {
        let (dr, dc) = self.orientation.forward();
        let r = self.agent_row as i32 + dr;
        let c = self.agent_col as i32 + dc;
        self.in_bounds(r, c).then(|| (r as usize, c as usize))
    }
}

/// Egocentric 5x5 window, row-major. The agent sits at window cell
/// (4, 2) facing "up"; off-grid cells carry the out-of-bounds kind.
/// Not occluded by walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation(pub [u16; 25]);

pub const OBS_SIZE: usize = 5;
pub const OBS_CELLS: usize = OBS_SIZE * OBS_SIZE;
/// Window coordinates of the agent's own cell.
pub const OBS_AGENT_ROW: usize = 4;
pub const OBS_AGENT_COL: usize = 2;

pub fn observe(state: &WorldState) -> Observation {
    let (fdr, fdc) = state.orientation.forward();
    let (rdr, rdc) = state.orientation.right();
    let mut window = [KIND_OOB; OBS_CELLS];
    for wr in 0..OBS_SIZE {
        for wc in 0..OBS_SIZE {
            let fwd = (OBS_AGENT_ROW as i32) - wr as i32;
            let lat = wc as i32 - OBS_AGENT_COL as i32;
            let r = state.agent_row as i32 + fwd * fdr + lat * rdr;
            let c = state.agent_col as i32 + fwd * fdc + lat * rdc;
            if state.in_bounds(r, c) {
                window[wr * OBS_SIZE + wc] = state.cell(r as usize, c as usize);
            }
        }
    }
    Observation(window)
}

/// Places objects and the agent, producing the lifetime's initial state s0.
pub fn reset_lifetime(spec: &EnvSpec, rng: &mut ChaCha8Rng) -> Result<WorldState> {
    let n = spec.layout.grid_size;
    let mut cells = spec.layout.base_cells();
    let mut free: Vec<(usize, usize)> = spec.layout.floor_cells();

    // Fixed placements first; they claim their cells outright.
    for (kind, placement) in &spec.initial_objects {
        if let Placement::Fixed { row, col } = placement {
            let pos = (*row as usize, *col as usize);
            let slot = free.iter().position(|p| *p == pos).ok_or(UleeError::Placement {
                seed: spec.seed,
                attempts: 1,
            })?;
            free.remove(slot);
            cells[pos.0 * n + pos.1] = *kind;
        }
    }
    let n_random = spec
        .initial_objects
        .iter()
        .filter(|(_, p)| matches!(p, Placement::Random))
        .count();
    if free.len() < n_random + 1 {
        return Err(UleeError::Placement {
            seed: spec.seed,
            attempts: 1,
        });
    }
    free.shuffle(rng);
    for (kind, placement) in &spec.initial_objects {
        if matches!(placement, Placement::Random) {
            let (r, c) = free.pop().unwrap();
            cells[r * n + c] = *kind;
        }
    }
    let (agent_row, agent_col) = free.pop().unwrap();
    let orientation = Orientation::ALL[rng.gen_range(0..4)];

    Ok(WorldState {
        grid_size: n,
        cells,
        agent_row,
        agent_col,
        orientation,
        pocket: None,
        t: 0,
        goal_achieved: false,
    })
}

fn is_walkable(kind: u16) -> bool {
    kind == KIND_FLOOR || kind == KIND_DOOR_OPEN
}

fn apply_action(spec: &EnvSpec, state: &mut WorldState, action: Action) {
    let kinds = spec.bench.kinds;
    match action {
        Action::Forward => {
            if let Some((r, c)) = state.front() {
                if is_walkable(state.cell(r, c)) {
                    state.agent_row = r;
                    state.agent_col = c;
                }
            }
        }
        Action::TurnLeft => state.orientation = state.orientation.turn_left(),
        Action::TurnRight => state.orientation = state.orientation.turn_right(),
        Action::PickUp => {
            if state.pocket.is_none() {
                if let Some((r, c)) = state.front() {
                    let k = state.cell(r, c);
                    if kinds.is_object(k) {
                        state.pocket = Some(k);
                        state.set_cell(r, c, KIND_FLOOR);
                    }
                }
            }
        }
        Action::PutDown => {
            if let (Some(obj), Some((r, c))) = (state.pocket, state.front()) {
                if state.cell(r, c) == KIND_FLOOR {
                    state.set_cell(r, c, obj);
                    state.pocket = None;
                }
            }
        }
        Action::Toggle => {
            if let Some((r, c)) = state.front() {
                match state.cell(r, c) {
                    KIND_DOOR_CLOSED => state.set_cell(r, c, KIND_DOOR_OPEN),
                    KIND_DOOR_OPEN => state.set_cell(r, c, KIND_DOOR_CLOSED),
                    _ => {}
                }
            }
        }
    }
}

/// Fires each rule at most once, at the first matching site in scan order.
fn apply_rules(spec: &EnvSpec, state: &mut WorldState) {
    let n = state.grid_size;
    for rule in spec
        .prerequisite_rules
        .iter()
        .chain(spec.distractor_rules.iter())
    {
        match *rule {
            Rule::AgentHold { a, out } => {
                if state.pocket == Some(a) {
                    state.pocket = Some(out);
                }
            }
            Rule::TileNear { a, b, near, out } => {
                'scan: for r in 0..n {
                    for c in 0..n {
                        if state.cell(r, c) != a {
                            continue;
                        }
                        for (dr, dc) in near.offsets() {
                            let br = r as i32 + dr;
                            let bc = c as i32 + dc;
                            if state.in_bounds(br, bc)
                                && state.cell(br as usize, bc as usize) == b
                            {
                                state.set_cell(r, c, out);
                                state.set_cell(br as usize, bc as usize, KIND_FLOOR);
                                break 'scan;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn goal_satisfied(state: &WorldState, goal: &ExtrinsicGoal) -> bool {
    let n = state.grid_size;
    match *goal {
        ExtrinsicGoal::AgentHold { a } => state.pocket == Some(a),
        ExtrinsicGoal::TileOnPosition { a, row, col } => state.cell(row as usize, col as usize) == a,
        ExtrinsicGoal::TileNear { a, b, near } => {
            for r in 0..n {
                for c in 0..n {
                    if state.cell(r, c) != a {
                        continue;
                    }
                    for (dr, dc) in near.offsets() {
                        let br = r as i32 + dr;
                        let bc = c as i32 + dc;
                        if state.in_bounds(br, bc) && state.cell(br as usize, bc as usize) == b {
                            return true;
                        }
                    }
                }
            }
            false
        }
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    /// The extrinsic goal first became satisfied on this step.
    pub success: bool,
}

/// Reward on success after taking the action indexed by step counter `t`.
pub fn success_reward(t: usize, max_steps: usize) -> f64 {
    1.0 - 0.9 * (t as f64 / max_steps as f64)
}

/// Applies dynamics only (action semantics + rules + step counter), with
/// no reward or goal logic. Intrinsic-goal training drives this directly.
pub fn advance(spec: &EnvSpec, state: &mut WorldState, action: Action) {
    debug_assert!(state.t < spec.max_steps, "step called on finished episode");
    apply_action(spec, state, action);
    apply_rules(spec, state);
    state.t += 1;
}

/// Full extrinsic-task step.
pub fn step(spec: &EnvSpec, state: &mut WorldState, action: Action) -> StepResult {
    let t_before = state.t;
    advance(spec, state, action);
    let mut reward = 0.0;
    let mut success = false;
    if !state.goal_achieved && goal_satisfied(state, &spec.goal) {
        state.goal_achieved = true;
        success = true;
        reward = success_reward(t_before, spec.max_steps);
    }
    let done = state.goal_achieved || state.t >= spec.max_steps;
    StepResult {
        reward,
        done,
        success,
    }
}
