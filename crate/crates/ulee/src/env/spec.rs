//! Benchmark configuration, environment specs, and the solvability-by-
//! construction task sampler.
//!
//! A spec is one pre-sampled {goal, rules, initial objects, layout}
//! combination. The sampler builds the prerequisite chain backwards from
//! the goal, so every spec is solvable by construction.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::kinds::{KindTable, KIND_DOOR_CLOSED, KIND_DOOR_OPEN, KIND_FLOOR, KIND_WALL};
use crate::env::rules::{ExtrinsicGoal, Near, Rule};
use crate::error::{Result, UleeError};

pub const SPEC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchKind {
    /// No prerequisite rules; three distractor objects.
    Trivial,
    /// 0-2 prerequisite rules; two distractor objects; 0-2 distractor rules.
    Small,
}

/// Parameters of one benchmark family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub kind: BenchKind,
    pub grid_size: usize,
    pub room_count: usize,
    pub kinds: KindTable,
    pub max_steps: usize,
}

impl BenchConfig {
    pub fn desk_trivial() -> Self {
        BenchConfig {
            kind: BenchKind::Trivial,
            grid_size: 9,
            room_count: 1,
            kinds: KindTable::desk_default(),
            max_steps: 128,
        }
    }

    pub fn desk_small() -> Self {
        BenchConfig {
            kind: BenchKind::Small,
            grid_size: 9,
            room_count: 1,
            kinds: KindTable::desk_default(),
            max_steps: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 7 || self.grid_size % 2 == 0 {
            return Err(UleeError::Config(format!(
                "grid_size must be odd and >= 7, got {}",
                self.grid_size
            )));
        }
        if ![1, 2, 4, 6].contains(&self.room_count) {
            return Err(UleeError::Config(format!(
                "room_count must be one of 1,2,4,6, got {}",
                self.room_count
            )));
        }
        if self.room_count == 6 && self.grid_size < 13 {
            return Err(UleeError::Config(
                "six-room layouts need grid_size >= 13".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(UleeError::Config("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn n_distractor_objects(&self) -> usize {
        match self.kind {
            BenchKind::Trivial => 3,
            BenchKind::Small => 2,
        }
    }
}

/// A door in an interior wall. `open` is its state at lifetime start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Door {
    pub row: u8,
    pub col: u8,
    pub open: bool,
}

/// Grid geometry: size, room partition, and doors. Interior wall
/// positions are a deterministic function of (grid_size, room_count).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub grid_size: usize,
    pub room_count: usize,
    pub doors: Vec<Door>,
}

impl Layout {
    /// Column indices of vertical interior walls.
    pub fn vertical_walls(grid_size: usize, room_count: usize) -> Vec<usize> {
        match room_count {
            1 => vec![],
            2 | 4 => vec![grid_size / 2],
            6 => vec![(grid_size - 1) / 3, 2 * (grid_size - 1) / 3],
            _ => unreachable!(),
        }
    }

    /// Row indices of horizontal interior walls.
    pub fn horizontal_walls(grid_size: usize, room_count: usize) -> Vec<usize> {
        match room_count {
            1 | 2 => vec![],
            4 | 6 => vec![grid_size / 2],
            _ => unreachable!(),
        }
    }

    /// Base grid with walls, doors, and floor; no objects, no agent.
    pub fn base_cells(&self) -> Vec<u16> {
        let n = self.grid_size;
        let mut cells = vec![KIND_FLOOR; n * n];
        for i in 0..n {
            cells[i] = KIND_WALL;
            cells[(n - 1) * n + i] = KIND_WALL;
            cells[i * n] = KIND_WALL;
            cells[i * n + n - 1] = KIND_WALL;
        }
        for c in Self::vertical_walls(n, self.room_count) {
            for r in 1..n - 1 {
                cells[r * n + c] = KIND_WALL;
            }
        }
        for r in Self::horizontal_walls(n, self.room_count) {
            for c in 1..n - 1 {
                cells[r * n + c] = KIND_WALL;
            }
        }
        for d in &self.doors {
            let idx = d.row as usize * n + d.col as usize;
            cells[idx] = if d.open { KIND_DOOR_OPEN } else { KIND_DOOR_CLOSED };
        }
        cells
    }

    /// All plain-floor positions (no walls, no doors).
    pub fn floor_cells(&self) -> Vec<(usize, usize)> {
        let n = self.grid_size;
        let cells = self.base_cells();
        let mut out = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if cells[r * n + c] == KIND_FLOOR {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Wall segments that may carry a door, as (fixed axis, range) pairs.
    /// Each segment separates two adjacent rooms and gets exactly one door.
    fn door_segments(grid_size: usize, room_count: usize) -> Vec<Vec<(usize, usize)>> {
        let vws = Self::vertical_walls(grid_size, room_count);
        let hws = Self::horizontal_walls(grid_size, room_count);
        let mut segments: Vec<Vec<(usize, usize)>> = Vec::new();
        // Row breakpoints partition each vertical wall into segments.
        let mut row_bounds = vec![0];
        row_bounds.extend(hws.iter().copied());
        row_bounds.push(grid_size - 1);
        for &wc in &vws {
            for w in row_bounds.windows(2) {
                let seg: Vec<(usize, usize)> =
                    (w[0] + 1..w[1]).map(|r| (r, wc)).collect();
                if !seg.is_empty() {
                    segments.push(seg);
                }
            }
        }
        let mut col_bounds = vec![0];
        col_bounds.extend(vws.iter().copied());
        col_bounds.push(grid_size - 1);
        for &wr in &hws {
            for w in col_bounds.windows(2) {
                let seg: Vec<(usize, usize)> =
                    (w[0] + 1..w[1]).map(|c| (wr, c)).collect();
                if !seg.is_empty() {
                    segments.push(seg);
                }
            }
        }
        segments
    }

    pub fn sample(grid_size: usize, room_count: usize, rng: &mut ChaCha8Rng) -> Layout {
        let doors = Self::door_segments(grid_size, room_count)
            .into_iter()
            .map(|seg| {
                let (r, c) = seg[rng.gen_range(0..seg.len())];
                Door {
                    row: r as u8,
                    col: c as u8,
                    open: rng.gen_bool(0.5),
                }
            })
            .collect();
        Layout {
            grid_size,
            room_count,
            doors,
        }
    }
}

/// Where an initial object sits: a fixed cell or resolved at lifetime reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    Random,
    Fixed { row: u8, col: u8 },
}

/// One sampled task description: a reward-free POMDP plus an extrinsic goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub version: u32,
    pub bench: BenchConfig,
    pub layout: Layout,
    pub goal: ExtrinsicGoal,
    pub prerequisite_rules: Vec<Rule>,
    pub distractor_rules: Vec<Rule>,
    pub initial_objects: Vec<(u16, Placement)>,
    pub max_steps: usize,
    pub seed: u64,
}

impl EnvSpec {
    /// Canonical one-line text record.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn from_line(line: &str) -> Result<EnvSpec> {
        let spec: EnvSpec = serde_json::from_str(line)?;
        if spec.version != SPEC_FORMAT_VERSION {
            return Err(UleeError::Serde(format!(
                "unsupported spec version {}",
                spec.version
            )));
        }
        Ok(spec)
    }
}

/// Draws `n` distinct object kinds, removing them from `pool`.
fn take_kinds(pool: &mut Vec<u16>, n: usize) -> Vec<u16> {
    assert!(pool.len() >= n, "object kind pool exhausted");
    pool.split_off(pool.len() - n)
}

/// Samples one task spec. Deterministic in (rng state, bench).
pub fn sample_env_spec(rng: &mut ChaCha8Rng, bench: &BenchConfig) -> Result<EnvSpec> {
    bench.validate()?;
    let seed = rng.gen::<u64>();
    let layout = Layout::sample(bench.grid_size, bench.room_count, rng);
    let floor = layout.floor_cells();

    let kinds = bench.kinds;
    let mut pool: Vec<u16> = (0..kinds.n_object_kinds())
        .map(|o| crate::env::kinds::OBJECT_BASE + o)
        .collect();
    pool.shuffle(rng);

    // Goal first; operands come out of the shared kind pool so nothing
    // collides with chain or distractor kinds.
    let goal_variant = rng.gen_range(0..7usize);
    let goal = match goal_variant {
        0 => ExtrinsicGoal::AgentHold {
            a: take_kinds(&mut pool, 1)[0],
        },
        1 => {
            let (row, col) = floor[rng.gen_range(0..floor.len())];
            ExtrinsicGoal::TileOnPosition {
                a: take_kinds(&mut pool, 1)[0],
                row: row as u8,
                col: col as u8,
            }
        }
        v => {
            let ks = take_kinds(&mut pool, 2);
            let near = match v {
                2 => Near::Any,
                3 => Near::Left,
                4 => Near::Right,
                5 => Near::Up,
                _ => Near::Down,
            };
            ExtrinsicGoal::TileNear {
                a: ks[0],
                b: ks[1],
                near,
            }
        }
    };

    // Prerequisite chain, built backwards: the first goal operand is
    // produced by rule 1, whose first input is produced by rule 2, etc.
    // Chain leaves become initial objects.
    let depth = match bench.kind {
        BenchKind::Trivial => 0,
        BenchKind::Small => rng.gen_range(0..=2usize),
    };
    let mut prerequisite_rules = Vec::new();
    let mut placed: Vec<u16> = Vec::new();
    let goal_ops = goal.operands();
    let mut target = goal_ops[0];
    for _ in 0..depth {
        let rule = if rng.gen_bool(0.5) {
            let a = take_kinds(&mut pool, 1)[0];
            Rule::AgentHold { a, out: target }
        } else {
            let ks = take_kinds(&mut pool, 2);
            let near = match rng.gen_range(0..5usize) {
                0 => Near::Any,
                1 => Near::Left,
                2 => Near::Right,
                3 => Near::Up,
                _ => Near::Down,
            };
            Rule::TileNear {
                a: ks[0],
                b: ks[1],
                near,
                out: target,
            }
        };
        // Non-first inputs are placed directly; the first input becomes
        // the next level's production target.
        let inputs = rule.inputs();
        placed.extend(inputs.iter().skip(1));
        target = inputs[0];
        prerequisite_rules.push(rule);
    }
    // Deepest target and any goal operands not produced by the chain.
    placed.push(target);
    placed.extend(goal_ops.iter().skip(1));
    // Rules fire in chain order: deepest first.
    prerequisite_rules.reverse();

    // Distractors: objects uninvolved in the goal, and (for small) rules
    // whose outputs are dead-end kinds that appear nowhere else.
    let distractor_objects = take_kinds(&mut pool, bench.n_distractor_objects());
    placed.extend(&distractor_objects);
    let mut distractor_rules = Vec::new();
    if bench.kind == BenchKind::Small {
        for _ in 0..rng.gen_range(0..=2usize) {
            if pool.is_empty() {
                break;
            }
            let out = take_kinds(&mut pool, 1)[0];
            let rule = if distractor_objects.len() >= 2 && rng.gen_bool(0.5) {
                let near = match rng.gen_range(0..5usize) {
                    0 => Near::Any,
                    1 => Near::Left,
                    2 => Near::Right,
                    3 => Near::Up,
                    _ => Near::Down,
                };
                Rule::TileNear {
                    a: distractor_objects[0],
                    b: distractor_objects[1],
                    near,
                    out,
                }
            } else {
                Rule::AgentHold {
                    a: distractor_objects[rng.gen_range(0..distractor_objects.len())],
                    out,
                }
            };
            distractor_rules.push(rule);
        }
    }

    // +1 for the agent itself.
    if floor.len() < placed.len() + 1 {
        return Err(UleeError::Config(format!(
            "grid too small: {} floor cells for {} objects",
            floor.len(),
            placed.len()
        )));
    }

    let initial_objects = placed.into_iter().map(|k| (k, Placement::Random)).collect();

    Ok(EnvSpec {
        version: SPEC_FORMAT_VERSION,
        bench: *bench,
        layout,
        goal,
        prerequisite_rules,
        distractor_rules,
        initial_objects,
        max_steps: bench.max_steps,
        seed,
    })
}
