//! The 27-keypoint skeleton used as network input.
//!
//! Node order is fixed:
//!
//! | index | node |
//! |-------|------|
//! | 0 | nose |
//! | 1, 2 | left eye, right eye |
//! | 3, 4 | left shoulder, right shoulder |
//! | 5, 6 | left elbow, right elbow |
//! | 7..=16 | left hand (wrist first) |
//! | 17..=26 | right hand (wrist first) |
//!
//! Each hand keeps ten of the 21 hand-model landmarks: the wrist, the thumb
//! tip, and the MCP knuckle plus tip of the four fingers. The pose block is the
//! 33-landmark body model, hands are the 21-landmark hand model.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const NUM_NODES: usize = 27;
pub const POSE_LANDMARKS: usize = 33;
pub const HAND_LANDMARKS: usize = 21;
/// Landmarks per frame in the full pose-estimator layout (pose, left, right).
pub const FULL_FRAME_LANDMARKS: usize = POSE_LANDMARKS + 2 * HAND_LANDMARKS;

pub const NOSE: usize = 0;
pub const LEFT_EYE: usize = 1;
pub const RIGHT_EYE: usize = 2;
pub const LEFT_SHOULDER: usize = 3;
pub const RIGHT_SHOULDER: usize = 4;
pub const LEFT_ELBOW: usize = 5;
pub const RIGHT_ELBOW: usize = 6;
pub const LEFT_HAND_START: usize = 7;
pub const RIGHT_HAND_START: usize = 17;
pub const HAND_NODES: usize = 10;

/// Pose-model indices of nose, left eye, right eye, shoulders and elbows,
/// in schema order 0..=6.
pub const POSE_SOURCES: [usize; 7] = [0, 2, 5, 11, 12, 13, 14];

/// Hand-model indices kept per hand, in schema order: wrist, thumb tip,
/// index MCP, index tip, middle MCP, middle tip, ring MCP, ring tip,
/// pinky MCP, pinky tip.
pub const HAND_SOURCES: [usize; HAND_NODES] = [0, 4, 5, 8, 9, 12, 13, 16, 17, 20];

const HAND_NAMES: [&str; HAND_NODES] = [
    "wrist",
    "thumb_tip",
    "index_mcp",
    "index_tip",
    "middle_mcp",
    "middle_tip",
    "ring_mcp",
    "ring_tip",
    "pinky_mcp",
    "pinky_tip",
];

/// Offsets of hand-local edges, relative to the hand's wrist node.
const HAND_EDGES: [(usize, usize); 9] = [
    (0, 1),
    (0, 2),
    (2, 3),
    (0, 4),
    (4, 5),
    (0, 6),
    (6, 7),
    (0, 8),
    (8, 9),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BodyPart {
    Face,
    LeftArm,
    LeftHand,
    RightArm,
    RightHand,
}

impl BodyPart {
    pub const ALL: [BodyPart; 5] = [
        BodyPart::Face,
        BodyPart::LeftArm,
        BodyPart::LeftHand,
        BodyPart::RightArm,
        BodyPart::RightHand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BodyPart::Face => "face",
            BodyPart::LeftArm => "left_arm",
            BodyPart::LeftHand => "left_hand",
            BodyPart::RightArm => "right_arm",
            BodyPart::RightHand => "right_hand",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub index: usize,
    pub name: String,
    pub part: BodyPart,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonSchema {
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
}

impl SkeletonSchema {
    /// Validates and builds a schema. Edges are stored with the smaller index
    /// first.
    pub fn new(nodes: Vec<Node>, edges: Vec<(usize, usize)>) -> Result<Self> {
        if nodes.len() != NUM_NODES {
            return Err(Error::Config(format!(
                "schema must have {NUM_NODES} nodes, got {}",
                nodes.len()
            )));
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.index != i {
                return Err(Error::Config(format!(
                    "schema node at position {i} has index {}",
                    n.index
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= NUM_NODES || b >= NUM_NODES {
                return Err(Error::Config(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::Config(format!("self-edge on node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::Config(format!("duplicate edge ({a}, {b})")));
            }
            norm.push(e);
        }
        let schema = SkeletonSchema { nodes, edges: norm };
        let expected = [
            (BodyPart::Face, 3),
            (BodyPart::LeftArm, 2),
            (BodyPart::LeftHand, HAND_NODES),
            (BodyPart::RightArm, 2),
            (BodyPart::RightHand, HAND_NODES),
        ];
        for (part, size) in expected {
            let got = schema.part_nodes(part).len();
            if got != size {
                return Err(Error::Config(format!(
                    "part {} has {got} nodes, expected {size}",
                    part.name()
                )));
            }
        }
        Ok(schema)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn part_nodes(&self, part: BodyPart) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.part == part)
            .map(|n| n.index)
            .collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let e = (a.min(b), a.max(b));
        self.edges.contains(&e)
    }

    /// Indices of both hands' nodes (the ones affected by hand masking).
    pub fn hand_nodes(&self) -> Vec<usize> {
        let mut v = self.part_nodes(BodyPart::LeftHand);
        v.extend(self.part_nodes(BodyPart::RightHand));
        v
    }

    /// `(shoulder, elbow)` of one arm.
    pub fn arm(&self, side: Side) -> (usize, usize) {
        match side {
            Side::Left => (LEFT_SHOULDER, LEFT_ELBOW),
            Side::Right => (RIGHT_SHOULDER, RIGHT_ELBOW),
        }
    }

    /// The ten nodes of one hand, wrist first.
    pub fn hand(&self, side: Side) -> Vec<usize> {
        let start = match side {
            Side::Left => LEFT_HAND_START,
            Side::Right => RIGHT_HAND_START,
        };
        (start..start + HAND_NODES).collect()
    }

    /// Plain-text description: node table then edge list.
    pub fn describe(&self, map: &SelectionMap) -> String {
        let mut out = String::from("# hwgat skeleton schema v1\n");
        out.push_str(&format!("nodes {}\n", self.nodes.len()));
        for n in &self.nodes {
            let src = map
                .entries()
                .iter()
                .find(|e| e.target == n.index)
                .map(|e| format!("{}:{}", e.group.name(), e.source))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "node {} {} {} {}\n",
                n.index,
                n.name,
                n.part.name(),
                src
            ));
        }
        out.push_str(&format!("edges {}\n", self.edges.len()));
        for (a, b) in &self.edges {
            out.push_str(&format!("edge {a} {b}\n"));
        }
        out
    }
}

pub fn build_default_schema() -> SkeletonSchema {
    let mut nodes = Vec::with_capacity(NUM_NODES);
    let mut push = |name: String, part| {
        let index = nodes.len();
        nodes.push(Node { index, name, part });
    };
    push("nose".into(), BodyPart::Face);
    push("left_eye".into(), BodyPart::Face);
    push("right_eye".into(), BodyPart::Face);
    push("left_shoulder".into(), BodyPart::LeftArm);
    push("right_shoulder".into(), BodyPart::RightArm);
    push("left_elbow".into(), BodyPart::LeftArm);
    push("right_elbow".into(), BodyPart::RightArm);
    for n in HAND_NAMES {
        push(format!("left_{n}"), BodyPart::LeftHand);
    }
    for n in HAND_NAMES {
        push(format!("right_{n}"), BodyPart::RightHand);
    }

    let mut edges = vec![
        (NOSE, LEFT_EYE),
        (NOSE, RIGHT_EYE),
        (LEFT_SHOULDER, RIGHT_SHOULDER),
        (NOSE, LEFT_SHOULDER),
        (NOSE, RIGHT_SHOULDER),
        (LEFT_SHOULDER, LEFT_ELBOW),
        (LEFT_ELBOW, LEFT_HAND_START),
        (RIGHT_SHOULDER, RIGHT_ELBOW),
        (RIGHT_ELBOW, RIGHT_HAND_START),
    ];
    for start in [LEFT_HAND_START, RIGHT_HAND_START] {
        edges.extend(HAND_EDGES.iter().map(|&(a, b)| (start + a, start + b)));
    }
    SkeletonSchema::new(nodes, edges).expect("default schema is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceGroup {
    Pose,
    LeftHand,
    RightHand,
}

impl SourceGroup {
    pub fn name(self) -> &'static str {
        match self {
            SourceGroup::Pose => "pose",
            SourceGroup::LeftHand => "left_hand",
            SourceGroup::RightHand => "right_hand",
        }
    }

    pub fn len(self) -> usize {
        match self {
            SourceGroup::Pose => POSE_LANDMARKS,
            SourceGroup::LeftHand | SourceGroup::RightHand => HAND_LANDMARKS,
        }
    }

    /// Offset of this group's first landmark in the concatenated full frame.
    pub fn offset(self) -> usize {
        match self {
            SourceGroup::Pose => 0,
            SourceGroup::LeftHand => POSE_LANDMARKS,
            SourceGroup::RightHand => POSE_LANDMARKS + HAND_LANDMARKS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionEntry {
    pub source: usize,
    pub target: usize,
    pub group: SourceGroup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMap {
    entries: Vec<SelectionEntry>,
}

impl SelectionMap {
    pub fn new(entries: Vec<SelectionEntry>) -> Result<Self> {
        if entries.len() != NUM_NODES {
            return Err(Error::Config(format!(
                "selection map needs {NUM_NODES} entries, got {}",
                entries.len()
            )));
        }
        let mut hit = [false; NUM_NODES];
        for e in &entries {
            if e.target >= NUM_NODES || hit[e.target] {
                return Err(Error::Config(format!(
                    "selection targets must be a permutation of 0..{NUM_NODES}, bad target {}",
                    e.target
                )));
            }
            hit[e.target] = true;
            if e.source >= e.group.len() {
                return Err(Error::Config(format!(
                    "source {} out of range for group {}",
                    e.source,
                    e.group.name()
                )));
            }
        }
        Ok(SelectionMap { entries })
    }

    pub fn entries(&self) -> &[SelectionEntry] {
        &self.entries
    }
}

pub fn build_default_selection_map() -> SelectionMap {
    let mut entries = Vec::with_capacity(NUM_NODES);
    for (target, &source) in POSE_SOURCES.iter().enumerate() {
        entries.push(SelectionEntry {
            source,
            target,
            group: SourceGroup::Pose,
        });
    }
    for (group, start) in [
        (SourceGroup::LeftHand, LEFT_HAND_START),
        (SourceGroup::RightHand, RIGHT_HAND_START),
    ] {
        for (i, &source) in HAND_SOURCES.iter().enumerate() {
            entries.push(SelectionEntry {
                source,
                target: start + i,
                group,
            });
        }
    }
    SelectionMap::new(entries).expect("default selection map is valid")
}

/// How missing source landmarks are handled by [`select_keypoints`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Copy the sentinel through; infill happens during preprocessing.
    #[default]
    Propagate,
    /// Refuse frames with missing selected landmarks.
    Reject,
}

/// Gathers the 27 schema keypoints from one full frame of
/// `FULL_FRAME_LANDMARKS x 2` coordinates (pose, then left hand, then right
/// hand). Missing landmarks are NaN pairs.
pub fn select_keypoints(
    full_frame: ArrayView2<'_, f32>,
    map: &SelectionMap,
    policy: MissingPolicy,
) -> Result<Array2<f32>> {
    if full_frame.dim() != (FULL_FRAME_LANDMARKS, 2) {
        return Err(Error::InputFormat(format!(
            "full frame must be {FULL_FRAME_LANDMARKS}x2, got {:?}",
            full_frame.dim()
        )));
    }
    let mut out = Array2::from_elem((NUM_NODES, 2), f32::NAN);
    for e in map.entries() {
        let row = e.group.offset() + e.source;
        let (x, y) = (full_frame[[row, 0]], full_frame[[row, 1]]);
        if (x.is_nan() || y.is_nan()) && policy == MissingPolicy::Reject {
            return Err(Error::Data(format!(
                "missing {} landmark {}",
                e.group.name(),
                e.source
            )));
        }
        out[[e.target, 0]] = x;
        out[[e.target, 1]] = y;
    }
    Ok(out)
}
