//! Goal mappings f: S -> G, the goal-success predicate, and intrinsic
//! reward shaping for self-imposed goals.
//!
//! Two mappings are supported: per-kind cell counts over the grid, and an
//! exact grid snapshot plus agent position (orientation and pocket
//! stripped). Goal equality is exact; goals are discrete structures.

use serde::{Deserialize, Serialize};

use crate::env::kinds::KindTable;
use crate::env::world::WorldState;
use crate::error::{Result, UleeError};

/// Which goal mapping a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMapping {
    Counts,
    Grid,
}

/// Grid cells plus agent position; no orientation, no pocket.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSnapshot {
    pub grid_size: usize,
    pub cells: Vec<u16>,
    pub agent_row: usize,
    pub agent_col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Goal {
    /// Occurrence count of every kind id over grid cells.
    Counts(Vec<u32>),
    Grid(GridSnapshot),
}

impl Goal {
    pub fn mapping(&self) -> GoalMapping {
        match self {
            Goal::Counts(_) => GoalMapping::Counts,
            Goal::Grid(_) => GoalMapping::Grid,
        }
    }

    /// Canonical one-line text form, matching the spec record format.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("goal serializes")
    }
}

/// Per-kind occurrence counts over grid cells. The pocket is excluded;
/// the agent's cell contributes whatever kind the cell holds.
pub fn f_counts(state: &WorldState, kinds: &KindTable) -> Goal {
    let mut counts = vec![0u32; kinds.n_kinds()];
    for &k in &state.cells {
        counts[k as usize] += 1;
    }
    Goal::Counts(counts)
}

pub fn f_grid(state: &WorldState) -> Goal {
    Goal::Grid(grid_snapshot(state))
}

pub fn grid_snapshot(state: &WorldState) -> GridSnapshot {
    GridSnapshot {
        grid_size: state.grid_size,
        cells: state.cells.clone(),
        agent_row: state.agent_row,
        agent_col: state.agent_col,
    }
}

pub fn apply_mapping(mapping: GoalMapping, state: &WorldState, kinds: &KindTable) -> Goal {
    match mapping {
        GoalMapping::Counts => f_counts(state, kinds),
        GoalMapping::Grid => f_grid(state),
    }
}

/// True iff f(next_state) equals the goal under exact equality.
pub fn goal_reached(next_state: &WorldState, goal: &Goal, kinds: &KindTable) -> Result<bool> {
    let current = apply_mapping(goal.mapping(), next_state, kinds);
    if let (Goal::Grid(a), Goal::Grid(b)) = (&current, goal) {
        if a.grid_size != b.grid_size {
            return Err(UleeError::Contract(format!(
                "goal grid geometry mismatch: {} vs {}",
                a.grid_size, b.grid_size
            )));
        }
    }
    Ok(current == *goal)
}

/// Reward for a self-imposed goal; nonzero only on first success, and the
/// episode terminates at that step.
pub fn intrinsic_reward(reached_first_time: bool, t: usize, max_steps: usize) -> f64 {
    debug_assert!(t <= max_steps);
    if reached_first_time {
        1.0 - 0.9 * (t as f64 / max_steps as f64)
    } else {
        0.0
    }
}
