//! Rules, extrinsic goals, actions, and orientations.

use serde::{Deserialize, Serialize};

/// The six primitive actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Forward = 0,
    TurnLeft = 1,
    TurnRight = 2,
    PickUp = 3,
    PutDown = 4,
    Toggle = 5,
}

pub const NUM_ACTIONS: usize = 6;

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Forward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::PickUp,
        Action::PutDown,
        Action::Toggle,
    ];

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Orientation {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::North,
        Orientation::East,
        Orientation::South,
        Orientation::West,
    ];

    /// (row delta, col delta) for one step forward.
    pub fn forward(self) -> (i32, i32) {
        match self {
            Orientation::North => (-1, 0),
            Orientation::East => (0, 1),
            Orientation::South => (1, 0),
            Orientation::West => (0, -1),
        }
    }

    /// (row delta, col delta) one step to the agent's right.
    pub fn right(self) -> (i32, i32) {
        self.turn_right().forward()
    }

    pub fn turn_left(self) -> Orientation {
        Orientation::ALL[(self as usize + 3) % 4]
    }

    pub fn turn_right(self) -> Orientation {
        Orientation::ALL[(self as usize + 1) % 4]
    }
}

/// Relative placement used by near-style rules and goals: where `b`
/// sits relative to `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Near {
    /// Any of the four cardinal neighbors.
    Any,
    Left,
    Right,
    Up,
    Down,
}

impl Near {
    /// Offsets (row, col) from `a`'s cell at which `b` may sit.
    pub fn offsets(self) -> &'static [(i32, i32)] {
        match self {
            Near::Any => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Near::Left => &[(0, -1)],
            Near::Right => &[(0, 1)],
            Near::Up => &[(-1, 0)],
            Near::Down => &[(1, 0)],
        }
    }
}

/// A production rule of the environment. Operands are object kind ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// If the agent's pocket holds `a`, it is replaced by `out`.
    AgentHold { a: u16, out: u16 },
    /// If `b` sits `near` of `a` on the grid, `a`'s cell becomes `out`
    /// and `b`'s cell is emptied.
    TileNear { a: u16, b: u16, near: Near, out: u16 },
}

impl Rule {
    pub fn operands(&self) -> Vec<u16> {
        match *self {
            Rule::AgentHold { a, out } => vec![a, out],
            Rule::TileNear { a, b, out, .. } => vec![a, b, out],
        }
    }

    pub fn inputs(&self) -> Vec<u16> {
        match *self {
            Rule::AgentHold { a, .. } => vec![a],
            Rule::TileNear { a, b, .. } => vec![a, b],
        }
    }

    pub fn output(&self) -> u16 {
        match *self {
            Rule::AgentHold { out, .. } | Rule::TileNear { out, .. } => out,
        }
    }
}

/// The extrinsic task attached to an environment spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtrinsicGoal {
    /// Pocket holds `a`.
    AgentHold { a: u16 },
    /// `a` sits at grid position (row, col).
    TileOnPosition { a: u16, row: u8, col: u8 },
    /// `b` sits `near` of `a`.
    TileNear { a: u16, b: u16, near: Near },
}

impl ExtrinsicGoal {
    pub fn operands(&self) -> Vec<u16> {
        match *self {
            ExtrinsicGoal::AgentHold { a } => vec![a],
            ExtrinsicGoal::TileOnPosition { a, .. } => vec![a],
            ExtrinsicGoal::TileNear { a, b, .. } => vec![a, b],
        }
    }
}
