//! Skeleton topology, per-frame preprocessing and sliding-window assembly.
//!
//! The skeleton follows the 17-segment layout of an inertial motion-capture
//! suit: pelvis, chest and head along the spine, four joints per arm and
//! three per leg. Bones are directed away from the pelvis, so the topology is
//! a tree rooted there and every other joint has exactly one incoming bone.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Nominal frame rate of skeleton tracking and of the prediction loop.
pub const FRAME_RATE_HZ: f64 = 100.0;
/// Default window length: 0.5 s at 100 Hz.
pub const DEFAULT_WINDOW_LENGTH: usize = 50;
/// Largest accepted gap between consecutive frames of a window.
pub const MAX_FRAME_GAP_S: f64 = 0.020;
/// Regulariser added to incidence row degrees before normalisation.
pub const INCIDENCE_EPSILON: f64 = 1e-6;

pub const JOINT_NAMES: [&str; 17] = [
    "pelvis",
    "chest",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "l_hand",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "r_hand",
    "l_hip",
    "l_knee",
    "l_foot",
    "r_hip",
    "r_knee",
    "r_foot",
];

/// Joint indices of the default topology.
pub mod joint {
    pub const PELVIS: usize = 0;
    pub const CHEST: usize = 1;
    pub const HEAD: usize = 2;
    pub const L_SHOULDER: usize = 3;
    pub const L_ELBOW: usize = 4;
    pub const L_WRIST: usize = 5;
    pub const L_HAND: usize = 6;
    pub const R_SHOULDER: usize = 7;
    pub const R_ELBOW: usize = 8;
    pub const R_WRIST: usize = 9;
    pub const R_HAND: usize = 10;
    pub const L_HIP: usize = 11;
    pub const L_KNEE: usize = 12;
    pub const L_FOOT: usize = 13;
    pub const R_HIP: usize = 14;
    pub const R_KNEE: usize = 15;
    pub const R_FOOT: usize = 16;
}

const DEFAULT_BONES: [(usize, usize); 16] = {
    use joint::*;
    [
        (PELVIS, CHEST),
        (CHEST, HEAD),
        (CHEST, L_SHOULDER),
        (L_SHOULDER, L_ELBOW),
        (L_ELBOW, L_WRIST),
        (L_WRIST, L_HAND),
        (CHEST, R_SHOULDER),
        (R_SHOULDER, R_ELBOW),
        (R_ELBOW, R_WRIST),
        (R_WRIST, R_HAND),
        (PELVIS, L_HIP),
        (L_HIP, L_KNEE),
        (L_KNEE, L_FOOT),
        (PELVIS, R_HIP),
        (R_HIP, R_KNEE),
        (R_KNEE, R_FOOT),
    ]
};

/// Directed joint/bone tree rooted at the pelvis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedSkeletonGraph {
    joint_count: usize,
    root: usize,
    bones: Vec<(usize, usize)>,
}

impl DirectedSkeletonGraph {
    /// Builds a graph from an explicit bone list, checking that it is a
    /// spanning tree directed away from `root`.
    pub fn new(joint_count: usize, root: usize, bones: Vec<(usize, usize)>) -> Result<Self> {
        if joint_count == 0 || root >= joint_count {
            return Err(Error::Validation(format!(
                "root {root} outside {joint_count} joints"
            )));
        }
        if bones.len() + 1 != joint_count {
            return Err(Error::Validation(format!(
                "a tree over {joint_count} joints needs {} bones, got {}",
                joint_count - 1,
                bones.len()
            )));
        }
        let mut parent = vec![None; joint_count];
        for &(s, t) in &bones {
            if s >= joint_count || t >= joint_count || s == t {
                return Err(Error::Validation(format!("invalid bone ({s}, {t})")));
            }
            if t == root {
                return Err(Error::Validation("root has an incoming bone".into()));
            }
            if parent[t].replace(s).is_some() {
                return Err(Error::Validation(format!("joint {t} has two incoming bones")));
            }
        }
        let graph = DirectedSkeletonGraph {
            joint_count,
            root,
            bones,
        };
        if graph.reachable_from_root(None).iter().any(|r| !r) {
            return Err(Error::Validation("bones do not connect every joint".into()));
        }
        Ok(graph)
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn bone_count(&self) -> usize {
        self.bones.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    /// Index of the bone ending at `joint`, if any.
    pub fn incoming_bone(&self, joint: usize) -> Option<usize> {
        self.bones.iter().position(|&(_, t)| t == joint)
    }

    /// Joints on the path from the root to `joint`, both ends included.
    pub fn path_from_root(&self, joint: usize) -> Vec<usize> {
        let mut path = vec![joint];
        let mut current = joint;
        while let Some(b) = self.incoming_bone(current) {
            current = self.bones[b].0;
            path.push(current);
        }
        path.reverse();
        path
    }

    /// Undirected reachability from the root, optionally ignoring one bone.
    pub fn reachable_from_root(&self, removed_bone: Option<usize>) -> Vec<bool> {
        let mut seen = vec![false; self.joint_count];
        let mut queue = VecDeque::from([self.root]);
        seen[self.root] = true;
        while let Some(j) = queue.pop_front() {
            for (b, &(s, t)) in self.bones.iter().enumerate() {
                if Some(b) == removed_bone {
                    continue;
                }
                let next = if s == j {
                    t
                } else if t == j {
                    s
                } else {
                    continue;
                };
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    /// Returns the same graph with joints relabelled: old joint `j` becomes
    /// `perm[j]`. Bone order is kept.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.joint_count {
            return Err(Error::Dimension("permutation length".into()));
        }
        let bones = self
            .bones
            .iter()
            .map(|&(s, t)| (perm[s], perm[t]))
            .collect();
        DirectedSkeletonGraph::new(self.joint_count, perm[self.root], bones)
    }
}

/// The fixed 17-joint, 16-bone topology used throughout.
pub fn build_topology() -> DirectedSkeletonGraph {
    DirectedSkeletonGraph::new(JOINT_NAMES.len(), joint::PELVIS, DEFAULT_BONES.to_vec())
        .expect("default topology is a tree")
}

/// One tracked skeleton sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub timestamp: f64,
    pub joints: Vec<Vec3>,
}

impl SkeletonFrame {
    pub fn validate(&self, graph: &DirectedSkeletonGraph) -> Result<()> {
        if self.joints.len() != graph.joint_count() {
            return Err(Error::Validation(format!(
                "frame has {} joints, graph has {}",
                self.joints.len(),
                graph.joint_count()
            )));
        }
        if !self.timestamp.is_finite() {
            return Err(Error::Validation("non-finite timestamp".into()));
        }
        if self.joints.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite joint coordinate at t = {}",
                self.timestamp
            )));
        }
        Ok(())
    }

    pub fn translated(&self, offset: Vec3) -> SkeletonFrame {
        SkeletonFrame {
            timestamp: self.timestamp,
            joints: self
                .joints
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
                .collect(),
        }
    }
}

/// Expresses every joint relative to the pelvis (root) position.
pub fn to_pelvis_frame(frame: &SkeletonFrame, graph: &DirectedSkeletonGraph) -> Result<SkeletonFrame> {
    frame.validate(graph)?;
    let origin = frame.joints[graph.root()];
    Ok(SkeletonFrame {
        timestamp: frame.timestamp,
        joints: frame
            .joints
            .iter()
            .map(|p| [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]])
            .collect(),
    })
}

/// Bone vectors `target - source` for every bone of the graph.
pub fn bones_from_joints(frame: &SkeletonFrame, graph: &DirectedSkeletonGraph) -> Result<Vec<Vec3>> {
    frame.validate(graph)?;
    Ok(graph
        .bones()
        .iter()
        .map(|&(s, t)| {
            let (a, b) = (frame.joints[s], frame.joints[t]);
            [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
        })
        .collect())
}

/// Network input: `T` frames of pelvis-relative joints and bone vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    /// `T x J` pelvis-relative joint positions, frame-major.
    pub joints: Vec<Vec3>,
    /// `T x B` bone vectors, frame-major.
    pub bones: Vec<Vec3>,
    pub window_length: usize,
    pub joint_count: usize,
    pub bone_count: usize,
    pub end_timestamp: f64,
}

impl FeatureWindow {
    pub fn joint(&self, t: usize, j: usize) -> Vec3 {
        self.joints[t * self.joint_count + j]
    }

    pub fn bone(&self, t: usize, b: usize) -> Vec3 {
        self.bones[t * self.bone_count + b]
    }

    /// An all-zero window of the given shape.
    pub fn zeros(window_length: usize, joint_count: usize, bone_count: usize) -> Self {
        FeatureWindow {
            joints: vec![[0.0; 3]; window_length * joint_count],
            bones: vec![[0.0; 3]; window_length * bone_count],
            window_length,
            joint_count,
            bone_count,
            end_timestamp: 0.0,
        }
    }
}

/// Assembles a window from exactly `window_length` consecutive frames.
pub fn make_window<'a, I>(
    frames: I,
    graph: &DirectedSkeletonGraph,
    window_length: usize,
) -> Result<FeatureWindow>
where
    I: IntoIterator<Item = &'a SkeletonFrame>,
{
    let (j_count, b_count) = (graph.joint_count(), graph.bone_count());
    let mut joints = Vec::with_capacity(window_length * j_count);
    let mut bones = Vec::with_capacity(window_length * b_count);
    let mut previous: Option<f64> = None;
    let mut count = 0;
    for frame in frames {
        count += 1;
        if count > window_length {
            break;
        }
        if let Some(prev) = previous {
            let gap = frame.timestamp - prev;
            if gap <= 0.0 {
                return Err(Error::Window(format!(
                    "timestamps not increasing at t = {}",
                    frame.timestamp
                )));
            }
            if gap > MAX_FRAME_GAP_S {
                return Err(Error::Window(format!(
                    "gap of {:.1} ms before t = {}",
                    gap * 1e3,
                    frame.timestamp
                )));
            }
        }
        previous = Some(frame.timestamp);
        let local = to_pelvis_frame(frame, graph)?;
        bones.extend(bones_from_joints(&local, graph)?);
        joints.extend(local.joints);
    }
    if count != window_length {
        return Err(Error::Window(format!(
            "expected {window_length} frames, got {}",
            if count > window_length { "more".to_string() } else { count.to_string() }
        )));
    }
    Ok(FeatureWindow {
        joints,
        bones,
        window_length,
        joint_count: j_count,
        bone_count: b_count,
        end_timestamp: previous.unwrap_or(0.0),
    })
}

/// Per-axis human intention. Only the x axis is predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntentionClass {
    Pull,
    Idle,
    Push,
}

impl IntentionClass {
    pub const ALL: [IntentionClass; 3] = [IntentionClass::Pull, IntentionClass::Idle, IntentionClass::Push];

    /// Label code: pull = -1, idle = 0, push = +1.
    pub fn code(self) -> i8 {
        match self {
            IntentionClass::Pull => -1,
            IntentionClass::Idle => 0,
            IntentionClass::Push => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(IntentionClass::Pull),
            0 => Some(IntentionClass::Idle),
            1 => Some(IntentionClass::Push),
            _ => None,
        }
    }

    /// Position in the network output vector `(pull, idle, push)`.
    pub fn index(self) -> usize {
        (self.code() + 1) as usize
    }

    pub fn from_index(index: usize) -> Self {
        IntentionClass::ALL[index]
    }

    /// Direction of object motion along x: pushing moves the object towards
    /// -x, pulling towards +x.
    pub fn motion_sign(self) -> f64 {
        match self {
            IntentionClass::Pull => 1.0,
            IntentionClass::Idle => 0.0,
            IntentionClass::Push => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IntentionClass::Pull => "pull",
            IntentionClass::Idle => "idle",
            IntentionClass::Push => "push",
        }
    }
}

impl Serialize for IntentionClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_i8(self.code())
    }
}

impl<'de> Deserialize<'de> for IntentionClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let code = i64::deserialize(deserializer)?;
        IntentionClass::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid intention code {code}")))
    }
}

/// Joint-by-bone incidence operators consumed by the graph blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidencePair {
    pub joint_count: usize,
    pub bone_count: usize,
    /// Row-major `J x B`.
    pub source: Vec<f64>,
    /// Row-major `J x B`.
    pub target: Vec<f64>,
}

/// Unnormalised 0/1 incidence matrices.
pub fn raw_incidence(graph: &DirectedSkeletonGraph) -> IncidencePair {
    let (j, b) = (graph.joint_count(), graph.bone_count());
    let mut source = vec![0.0; j * b];
    let mut target = vec![0.0; j * b];
    for (bone, &(s, t)) in graph.bones().iter().enumerate() {
        source[s * b + bone] = 1.0;
        target[t * b + bone] = 1.0;
    }
    IncidencePair {
        joint_count: j,
        bone_count: b,
        source,
        target,
    }
}

/// Incidence matrices with each row scaled by `1 / (degree + eps)`.
pub fn incidence_matrices(graph: &DirectedSkeletonGraph) -> IncidencePair {
    let mut pair = raw_incidence(graph);
    let b = pair.bone_count;
    for m in [&mut pair.source, &mut pair.target] {
        for row in m.chunks_mut(b) {
            let degree: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= degree + INCIDENCE_EPSILON;
            }
        }
    }
    pair
}

/// One line of a sequence file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    pub joints: Vec<Vec3>,
    pub box_x: f64,
    pub box_v: f64,
    pub f_h: Vec3,
    pub label: IntentionClass,
}

pub fn write_records<W: Write>(mut out: W, records: &[FrameRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<FrameRecord>> {
    let mut records = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<sequence>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FrameRecord = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("sequence line {}", n + 1), e))?;
        records.push(record);
    }
    Ok(records)
}
