//! Cell-kind encoding.
//!
//! Every grid cell holds a single `u16` kind id. The first five ids are
//! structural (floor, wall, closed/open door, out-of-bounds marker); the
//! remainder enumerate object kinds as shape x color.

use serde::{Deserialize, Serialize};

pub const KIND_FLOOR: u16 = 0;
pub const KIND_WALL: u16 = 1;
pub const KIND_DOOR_CLOSED: u16 = 2;
pub const KIND_DOOR_OPEN: u16 = 3;
/// Only ever appears in observations, never on the grid itself.
pub const KIND_OOB: u16 = 4;

pub const OBJECT_BASE: u16 = 5;
pub const NUM_SPECIAL_KINDS: u16 = 5;

pub const SHAPE_NAMES: [&str; 8] = [
    "key", "ball", "pyramid", "square", "star", "hex", "goal", "crate",
];
pub const COLOR_NAMES: [&str; 6] = ["red", "green", "blue", "yellow", "purple", "grey"];

/// The kind vocabulary for one benchmark: how many shapes and colors exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindTable {
    pub n_shapes: u16,
    pub n_colors: u16,
}

impl KindTable {
    pub fn new(n_shapes: u16, n_colors: u16) -> Self {
        assert!(n_shapes >= 1 && n_shapes as usize <= SHAPE_NAMES.len());
        assert!(n_colors >= 1 && n_colors as usize <= COLOR_NAMES.len());
        KindTable { n_shapes, n_colors }
    }

    /// 30 object kinds: 5 shapes x 6 colors.
    pub fn desk_default() -> Self {
        KindTable::new(5, 6)
    }

    pub fn n_object_kinds(&self) -> u16 {
        self.n_shapes * self.n_colors
    }

    /// Total distinct kind ids, including the special kinds.
    pub fn n_kinds(&self) -> usize {
        NUM_SPECIAL_KINDS as usize + self.n_object_kinds() as usize
    }

    pub fn object_kind(&self, shape: u16, color: u16) -> u16 {
        assert!(shape < self.n_shapes && color < self.n_colors);
        OBJECT_BASE + shape * self.n_colors + color
    }

    pub fn is_object(&self, kind: u16) -> bool {
        kind >= OBJECT_BASE && kind < OBJECT_BASE + self.n_object_kinds()
    }

    pub fn shape_color(&self, kind: u16) -> Option<(u16, u16)> {
        if self.is_object(kind) {
            let o = kind - OBJECT_BASE;
            Some((o / self.n_colors, o % self.n_colors))
        } else {
            None
        }
    }

    /// Embedding index for the shape table. Special kinds get their own
    /// reserved slots ahead of the object shapes.
    pub fn shape_index(&self, kind: u16) -> usize {
        match self.shape_color(kind) {
            Some((s, _)) => NUM_SPECIAL_KINDS as usize + s as usize,
            None => kind as usize,
        }
    }

    pub fn shape_vocab(&self) -> usize {
        NUM_SPECIAL_KINDS as usize + self.n_shapes as usize
    }

    /// Embedding index for the color table; 0 is reserved for kinds
    /// without a color.
    pub fn color_index(&self, kind: u16) -> usize {
        match self.shape_color(kind) {
            Some((_, c)) => 1 + c as usize,
            None => 0,
        }
    }

    pub fn color_vocab(&self) -> usize {
        1 + self.n_colors as usize
    }

    pub fn kind_name(&self, kind: u16) -> String {
        match kind {
            KIND_FLOOR => "floor".into(),
            KIND_WALL => "wall".into(),
            KIND_DOOR_CLOSED => "door_closed".into(),
            KIND_DOOR_OPEN => "door_open".into(),
            KIND_OOB => "oob".into(),
            k => match self.shape_color(k) {
                Some((s, c)) => format!("{}_{}", COLOR_NAMES[c as usize], SHAPE_NAMES[s as usize]),
                None => format!("kind_{k}"),
            },
        }
    }
}
