//! Trajectory, primitive and segment data model.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::mcr::{CanonicalInstruction, LabelGrid};

/// Proprioceptive end-effector state: position (m), axis-angle orientation
/// (rad) and gripper closure in `[0, 1]` (1 = fully closed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProprioState {
    pub pos: Vector3<f64>,
    pub orient: Vector3<f64>,
    pub grip: f64,
}

impl ProprioState {
    pub fn new(pos: [f64; 3], orient: [f64; 3], grip: f64) -> Self {
        Self {
            pos: Vector3::from(pos),
            orient: Vector3::from(orient),
            grip,
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.pos.x,
            self.pos.y,
            self.pos.z,
            self.orient.x,
            self.orient.y,
            self.orient.z,
            self.grip,
        ]
    }
}

/// Delta-pose action with a binary gripper command (1 = close, 0 = open).
///
/// `grip_cmd` is stored as a float so that malformed logs can be loaded and
/// reported by [`validate_trajectory`] instead of failing at parse time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDelta {
    pub dpos: Vector3<f64>,
    pub dorient: Vector3<f64>,
    pub grip_cmd: f64,
}

impl ActionDelta {
    pub fn new(dpos: [f64; 3], dorient: [f64; 3], grip_cmd: f64) -> Self {
        Self {
            dpos: Vector3::from(dpos),
            dorient: Vector3::from(dorient),
            grip_cmd,
        }
    }

    pub fn is_close(&self) -> bool {
        self.grip_cmd >= 0.5
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.dpos.x,
            self.dpos.y,
            self.dpos.z,
            self.dorient.x,
            self.dorient.y,
            self.dorient.z,
            self.grip_cmd,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub state: ProprioState,
    pub action: ActionDelta,
}

impl Frame {
    /// Builds a frame from the 14-number on-disk layout (state then action).
    pub fn from_row(row: &[f64; 14]) -> Self {
        Self {
            state: ProprioState::new([row[0], row[1], row[2]], [row[3], row[4], row[5]], row[6]),
            action: ActionDelta::new([row[7], row[8], row[9]], [row[10], row[11], row[12]], row[13]),
        }
    }

    pub fn to_row(&self) -> [f64; 14] {
        let s = self.state.to_array();
        let a = self.action.to_array();
        let mut row = [0.0; 14];
        row[..7].copy_from_slice(&s);
        row[7..].copy_from_slice(&a);
        row
    }
}

/// A demonstration: instruction plus uniformly sampled frames. The frame
/// index is the only time coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub source_id: String,
    pub instruction: String,
    pub frames: Vec<Frame>,
    pub masks: Option<Vec<LabelGrid>>,
}

impl Trajectory {
    pub fn new(source_id: impl Into<String>, instruction: impl Into<String>, frames: Vec<Frame>) -> Self {
        Self {
            source_id: source_id.into(),
            instruction: instruction.into(),
            frames,
            masks: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// The closed alphabet of reusable manipulation primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveType {
    Grasp,
    Place,
    Lift,
    Move,
    Push,
    Pull,
    Insert,
    Press,
    Twist,
    Tilt,
    Rotate,
}

impl PrimitiveType {
    pub const ALL: [PrimitiveType; 11] = [
        PrimitiveType::Grasp,
        PrimitiveType::Place,
        PrimitiveType::Lift,
        PrimitiveType::Move,
        PrimitiveType::Push,
        PrimitiveType::Pull,
        PrimitiveType::Insert,
        PrimitiveType::Press,
        PrimitiveType::Twist,
        PrimitiveType::Tilt,
        PrimitiveType::Rotate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveType::Grasp => "grasp",
            PrimitiveType::Place => "place",
            PrimitiveType::Lift => "lift",
            PrimitiveType::Move => "move",
            PrimitiveType::Push => "push",
            PrimitiveType::Pull => "pull",
            PrimitiveType::Insert => "insert",
            PrimitiveType::Press => "press",
            PrimitiveType::Twist => "twist",
            PrimitiveType::Tilt => "tilt",
            PrimitiveType::Rotate => "rotate",
        }
    }

    /// Kinematic one-line definition, as handed to an external planner.
    pub fn definition(self) -> &'static str {
        match self {
            PrimitiveType::Grasp => "Approach an object, close the gripper on it and lift slightly.",
            PrimitiveType::Place => "Descend to release an object at the target location and lift away.",
            PrimitiveType::Lift => "Vertical translation (+z) while holding an object.",
            PrimitiveType::Move => "Planar translation (xy) maintaining the object grasp.",
            PrimitiveType::Push => "Slide an object on a surface to a target without grasping.",
            PrimitiveType::Pull => "Drag or retract an object towards a target position.",
            PrimitiveType::Insert => "Align and insert into a constrained slot.",
            PrimitiveType::Press => "Apply downward force on an object or surface.",
            PrimitiveType::Twist => "Rotate the gripper about its roll axis to operate a rotary mechanism.",
            PrimitiveType::Tilt => "Reorient the effector in pitch or yaw to alter the pose.",
            PrimitiveType::Rotate => "Follow an articulation trajectory, e.g. a lid or door.",
        }
    }
}

impl fmt::Display for PrimitiveType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrimitiveType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_primitive(s)
    }
}

/// Case-insensitive, whitespace-trimmed lookup into the primitive alphabet.
pub fn parse_primitive(name: &str) -> Result<PrimitiveType, ModelError> {
    let needle = name.trim().to_ascii_lowercase();
    PrimitiveType::ALL
        .iter()
        .copied()
        .find(|p| p.name() == needle)
        .ok_or_else(|| ModelError::UnknownPrimitive(name.to_string()))
}

/// One step of a plan. `role_hint` keeps a numbered label such as `grasp_2`
/// that disambiguates repeated primitives; it is metadata only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceItem {
    pub primitive: PrimitiveType,
    pub role_hint: Option<String>,
}

impl SequenceItem {
    pub fn new(primitive: PrimitiveType) -> Self {
        Self {
            primitive,
            role_hint: None,
        }
    }

    /// Parses `grasp` or a suffixed label like `grasp_2`.
    pub fn parse(label: &str) -> Result<Self, ModelError> {
        let trimmed = label.trim();
        if let Ok(primitive) = parse_primitive(trimmed) {
            return Ok(Self::new(primitive));
        }
        if let Some((head, tail)) = trimmed.rsplit_once('_') {
            if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) {
                let primitive = parse_primitive(head)?;
                return Ok(Self {
                    primitive,
                    role_hint: Some(trimmed.to_ascii_lowercase()),
                });
            }
        }
        Err(ModelError::UnknownPrimitive(label.to_string()))
    }

    /// Numeric suffix of the role hint (`grasp_2` -> 2), if any.
    pub fn suffix_index(&self) -> Option<usize> {
        self.role_hint
            .as_deref()
            .and_then(|h| h.rsplit_once('_'))
            .and_then(|(_, n)| n.parse().ok())
    }

    pub fn label(&self) -> String {
        self.role_hint
            .clone()
            .unwrap_or_else(|| self.primitive.name().to_string())
    }
}

/// Ordered, non-empty plan over the primitive alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimitiveSequence {
    items: Vec<SequenceItem>,
}

impl PrimitiveSequence {
    pub fn new(items: Vec<SequenceItem>) -> Result<Self, ModelError> {
        if items.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        Ok(Self { items })
    }

    pub fn from_primitives(prims: &[PrimitiveType]) -> Result<Self, ModelError> {
        Self::new(prims.iter().copied().map(SequenceItem::new).collect())
    }

    /// Parses labels such as `["grasp", "move_1", "Place"]`.
    pub fn parse<S: AsRef<str>>(labels: &[S]) -> Result<Self, ModelError> {
        let items = labels
            .iter()
            .map(|l| SequenceItem::parse(l.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(items)
    }

    /// Parses a comma separated list, e.g. `grasp,move,place`.
    pub fn parse_csv(text: &str) -> Result<Self, ModelError> {
        let labels: Vec<&str> = text.split(',').filter(|s| !s.trim().is_empty()).collect();
        Self::parse(&labels)
    }

    pub fn items(&self) -> &[SequenceItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn primitive(&self, index: usize) -> PrimitiveType {
        self.items[index].primitive
    }

    pub fn primitives(&self) -> Vec<PrimitiveType> {
        self.items.iter().map(|i| i.primitive).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.items.iter().map(|i| i.primitive.name().to_string()).collect()
    }

    /// Labels including role hints, suitable for serialization.
    pub fn labels(&self) -> Vec<String> {
        self.items.iter().map(SequenceItem::label).collect()
    }
}

impl fmt::Display for PrimitiveSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&item.label())?;
        }
        f.write_str("]")
    }
}

/// Half-open frame interval `[t_start, t_end)` labelled with a primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub primitive: PrimitiveType,
    pub t_start: usize,
    pub t_end: usize,
    pub canonical: CanonicalInstruction,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.t_end - self.t_start
    }

    pub fn is_empty(&self) -> bool {
        self.t_end == self.t_start
    }
}

/// True when `segments` tile `[0, n)` contiguously with non-empty pieces.
pub fn is_partition(segments: &[Segment], n: usize) -> bool {
    let mut cursor = 0;
    for s in segments {
        if s.t_start != cursor || s.t_end <= s.t_start {
            return false;
        }
        cursor = s.t_end;
    }
    cursor == n && !segments.is_empty()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyTrajectory,
    NonFinite { frame: usize, field: &'static str },
    GripOutOfRange { frame: usize, value: f64 },
    GripCommandNotBinary { frame: usize, value: f64 },
    MaskLengthMismatch { frames: usize, masks: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

const STATE_FIELDS: [&str; 7] = ["x", "y", "z", "rx", "ry", "rz", "grip"];
const ACTION_FIELDS: [&str; 7] = ["dx", "dy", "dz", "drx", "dry", "drz", "grip_cmd"];

/// Lists every invariant violation in `traj`. An empty report means valid.
pub fn validate_trajectory(traj: &Trajectory) -> ValidationReport {
    let mut violations = Vec::new();
    if traj.frames.is_empty() {
        violations.push(Violation::EmptyTrajectory);
    }
    for (i, frame) in traj.frames.iter().enumerate() {
        let state = frame.state.to_array();
        let action = frame.action.to_array();
        for (value, field) in state.iter().zip(STATE_FIELDS).chain(action.iter().zip(ACTION_FIELDS)) {
            if !value.is_finite() {
                violations.push(Violation::NonFinite { frame: i, field });
            }
        }
        let grip = frame.state.grip;
        if grip.is_finite() && !(0.0..=1.0).contains(&grip) {
            violations.push(Violation::GripOutOfRange { frame: i, value: grip });
        }
        let cmd = frame.action.grip_cmd;
        if cmd.is_finite() && cmd != 0.0 && cmd != 1.0 {
            violations.push(Violation::GripCommandNotBinary { frame: i, value: cmd });
        }
    }
    if let Some(masks) = &traj.masks {
        if masks.len() != traj.frames.len() {
            violations.push(Violation::MaskLengthMismatch {
                frames: traj.frames.len(),
                masks: masks.len(),
            });
        }
    }
    ValidationReport { violations }
}
