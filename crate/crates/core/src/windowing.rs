//! Spatial windows, temporal blocks, temporal shift, and the per-block
//! spatio-temporal adjacency masks that restrict attention.
//!
//! A 16-slot window is laid out as
//! `[nose, left_eye, right_eye, shoulder, elbow, arm_wrist, hand x 10]` where
//! the hand block starts with its own wrist. The arm's third slot carries a
//! copy of the window hand's wrist coordinate, which keeps both the 27 unique
//! keypoints and the 3 + 3 + 10 window size. Within a block, nodes are ordered
//! frame-major: local index `t * w_k + slot`.

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::schema::{Side, SkeletonSchema, NOSE, NUM_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum WindowMode {
    /// Whole 27-node skeleton as a single window.
    One,
    /// Face with left arm and hand, face with right arm and hand.
    Two,
    /// Every arm/hand combination.
    Four,
}

impl WindowMode {
    pub fn count(self) -> usize {
        match self {
            WindowMode::One => 1,
            WindowMode::Two => 2,
            WindowMode::Four => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowMode::One => "one",
            WindowMode::Two => "two",
            WindowMode::Four => "four",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one" | "1" => Ok(WindowMode::One),
            "two" | "2" => Ok(WindowMode::Two),
            "four" | "4" => Ok(WindowMode::Four),
            _ => Err(Error::Config(format!("unknown window mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    /// Schema node feeding each slot.
    pub slots: Vec<usize>,
    /// Undirected spatial edges between slots, smaller slot first.
    pub edges: Vec<(usize, usize)>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }
}

/// Slot positions in a 16-node window.
pub mod slot {
    pub const NOSE: usize = 0;
    pub const LEFT_EYE: usize = 1;
    pub const RIGHT_EYE: usize = 2;
    pub const SHOULDER: usize = 3;
    pub const ELBOW: usize = 4;
    pub const ARM_WRIST: usize = 5;
    pub const HAND: usize = 6;
    pub const WINDOW_LEN: usize = 16;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowLayout {
    pub mode: WindowMode,
    pub windows: Vec<Window>,
}

impl WindowLayout {
    /// Number of spatial windows `S`.
    pub fn num_windows(&self) -> usize {
        self.windows.len()
    }

    /// Nodes per window `w_k`.
    pub fn window_len(&self) -> usize {
        self.windows[0].len()
    }

    /// `K' = S * w_k`.
    pub fn total_nodes(&self) -> usize {
        self.num_windows() * self.window_len()
    }

    /// Concatenated slot-to-schema map of length `K'`.
    pub fn gather_index(&self) -> Vec<usize> {
        self.windows.iter().flat_map(|w| w.slots.iter().copied()).collect()
    }

    pub fn describe(&self) -> String {
        let mut out = format!(
            "# hwgat window layout v1\nmode {}\nwindows {}\nwindow_len {}\ntotal_nodes {}\n",
            self.mode.name(),
            self.num_windows(),
            self.window_len(),
            self.total_nodes()
        );
        for (i, w) in self.windows.iter().enumerate() {
            let slots: Vec<String> = w.slots.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!("window {i} {}\n", slots.join(" ")));
        }
        out
    }
}

fn part_window(schema: &SkeletonSchema, arm: Side, hand: Side) -> Window {
    let (shoulder, elbow) = schema.arm(arm);
    let hand_nodes = schema.hand(hand);
    let mut slots = vec![NOSE, crate::schema::LEFT_EYE, crate::schema::RIGHT_EYE, shoulder, elbow];
    slots.push(hand_nodes[0]);
    slots.extend(&hand_nodes);

    let mut edges = vec![
        (slot::NOSE, slot::LEFT_EYE),
        (slot::NOSE, slot::RIGHT_EYE),
        (slot::NOSE, slot::SHOULDER),
        (slot::SHOULDER, slot::ELBOW),
        (slot::ELBOW, slot::ARM_WRIST),
        (slot::ARM_WRIST, slot::HAND),
    ];
    // hand edges carried over from the schema, re-indexed to slots
    let base = hand_nodes[0];
    for &(a, b) in schema.edges() {
        if hand_nodes.contains(&a) && hand_nodes.contains(&b) {
            edges.push((slot::HAND + a - base, slot::HAND + b - base));
        }
    }
    for e in &mut edges {
        *e = (e.0.min(e.1), e.0.max(e.1));
    }
    Window { slots, edges }
}

pub fn build_window_layout(schema: &SkeletonSchema, mode: WindowMode) -> WindowLayout {
    let windows = match mode {
        WindowMode::One => vec![Window {
            slots: (0..NUM_NODES).collect(),
            edges: schema.edges().to_vec(),
        }],
        WindowMode::Two => vec![
            part_window(schema, Side::Left, Side::Left),
            part_window(schema, Side::Right, Side::Right),
        ],
        WindowMode::Four => vec![
            part_window(schema, Side::Left, Side::Left),
            part_window(schema, Side::Left, Side::Right),
            part_window(schema, Side::Right, Side::Left),
            part_window(schema, Side::Right, Side::Right),
        ],
    };
    WindowLayout { mode, windows }
}

/// Gathers `F x 27 x 2` frames into the stacked `F x K' x 2` window layout.
pub fn apply_windows(frames: &Array3<f32>, layout: &WindowLayout) -> Array3<f32> {
    frames.select(Axis(1), &layout.gather_index())
}

/// Temporal block partition of `frames` frames into blocks of `block_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalBlocking {
    pub block_len: usize,
    pub frames: usize,
}

impl TemporalBlocking {
    pub fn new(frames: usize, block_len: usize) -> Result<Self> {
        if block_len == 0 || frames % block_len != 0 {
            return Err(Error::Config(format!(
                "{frames} frames cannot be split into blocks of {block_len}"
            )));
        }
        Ok(TemporalBlocking { block_len, frames })
    }

    pub fn num_blocks(&self) -> usize {
        self.frames / self.block_len
    }
}

/// Rolls frames so the output order is `f_{s+1}, ..., f_F, f_1, ..., f_s`.
/// Returns the rolled tensor and a per-frame flag marking the `s` frames that
/// were moved to the end.
pub fn shift_frames<A: Clone>(x: &Array3<A>, s: usize) -> (Array3<A>, Vec<bool>) {
    let f = x.len_of(Axis(0));
    assert!(s < f.max(1), "shift {s} must be smaller than frame count {f}");
    let order: Vec<usize> = (0..f).map(|p| (p + s) % f).collect();
    let rolled = (0..f).map(|p| p >= f - s).collect();
    (x.select(Axis(0), &order), rolled)
}

/// Shift used on odd attention blocks of a layer.
pub fn shift_amount(block_len: usize) -> usize {
    block_len / 2
}

/// The 0/1 adjacency of one spatio-temporal block plus the rolled-frame
/// marker of each node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockAdjacency {
    pub mask: Array2<bool>,
    /// `true` for nodes of frames that were rolled to the end by a shift.
    pub rolled: Vec<bool>,
}

impl BlockAdjacency {
    pub fn n(&self) -> usize {
        self.rolled.len()
    }

    /// Whether `a` and `b` may exchange information at all; rolled and
    /// non-rolled frames never do.
    pub fn reachable(&self, a: usize, b: usize) -> bool {
        self.rolled[a] == self.rolled[b]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.mask.rows() {
            let line: Vec<&str> = row.iter().map(|&v| if v { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Adjacency of one window over `block_len` frames. `rolled` flags local
/// frames that came from the head of the sequence after a shift.
pub fn build_block_adjacency(window: &Window, block_len: usize, rolled: &[bool]) -> BlockAdjacency {
    assert_eq!(rolled.len(), block_len);
    let wk = window.len();
    let n = block_len * wk;
    let mut mask = Array2::from_elem((n, n), false);
    for t in 0..block_len {
        for a in 0..wk {
            let i = t * wk + a;
            mask[[i, i]] = true;
            if t + 1 < block_len {
                let j = (t + 1) * wk + a;
                mask[[i, j]] = true;
                mask[[j, i]] = true;
            }
        }
        for &(a, b) in &window.edges {
            mask[[t * wk + a, t * wk + b]] = true;
            mask[[t * wk + b, t * wk + a]] = true;
        }
    }
    let node_rolled: Vec<bool> = (0..n).map(|i| rolled[i / wk]).collect();
    for i in 0..n {
        for j in 0..n {
            if node_rolled[i] != node_rolled[j] {
                mask[[i, j]] = false;
            }
        }
    }
    BlockAdjacency {
        mask,
        rolled: node_rolled,
    }
}

/// Block masks needed by one network configuration. Only the last temporal
/// block of a shifted pass differs from the regular mask.
#[derive(Debug, Clone)]
pub struct MaskSet {
    pub block_len: usize,
    pub shift: usize,
    pub regular: Vec<BlockAdjacency>,
    pub shifted_last: Vec<BlockAdjacency>,
}

impl MaskSet {
    pub fn new(layout: &WindowLayout, block_len: usize) -> Self {
        let shift = shift_amount(block_len);
        let plain = vec![false; block_len];
        let rolled: Vec<bool> = (0..block_len).map(|t| t >= block_len - shift).collect();
        MaskSet {
            block_len,
            shift,
            regular: layout
                .windows
                .iter()
                .map(|w| build_block_adjacency(w, block_len, &plain))
                .collect(),
            shifted_last: layout
                .windows
                .iter()
                .map(|w| build_block_adjacency(w, block_len, &rolled))
                .collect(),
        }
    }

    /// Mask for `window` in temporal block `block` of `num_blocks`.
    pub fn get(&self, window: usize, block: usize, num_blocks: usize, shifted: bool) -> &BlockAdjacency {
        if shifted && self.shift > 0 && block + 1 == num_blocks {
            &self.shifted_last[window]
        } else {
            &self.regular[window]
        }
    }
}

/// Assembles per-window masks of one temporal block into the `T * K'`
/// block-diagonal mask over all windows, frame-major (`t * K' + node`).
pub fn stack_block_adjacency(per_window: &[&BlockAdjacency], window_len: usize, block_len: usize) -> BlockAdjacency {
    let s = per_window.len();
    let kp = s * window_len;
    let n = block_len * kp;
    let mut mask = Array2::from_elem((n, n), false);
    let mut rolled = vec![false; n];
    let global = |w: usize, local: usize| {
        let (t, a) = (local / window_len, local % window_len);
        t * kp + w * window_len + a
    };
    for (w, adj) in per_window.iter().enumerate() {
        for i in 0..adj.n() {
            rolled[global(w, i)] = adj.rolled[i];
            for j in 0..adj.n() {
                mask[[global(w, i), global(w, j)]] = adj.mask[[i, j]];
            }
        }
    }
    BlockAdjacency { mask, rolled }
}
