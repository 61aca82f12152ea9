//! Offline disassembly of demonstrations into primitive segments.
//!
//! Each primitive has a termination criterion evaluated on a symmetric window
//! `[t - k_past, t + k_future]`. The scan for primitive `i` starts at
//! `t_start + min_offset` and the first hit becomes the boundary.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SegmentError;
use crate::kinematics::MotionSummary;
use crate::mcr::{assign_roles, canonicalize, episode_indices, CanonicalInstruction, ObjectPair};
use crate::model::{validate_trajectory, Frame, PrimitiveSequence, PrimitiveType, Segment, Trajectory};

pub const DEFAULT_MIN_OFFSET: usize = 10;
pub const DEFAULT_K_PAST: usize = 5;
pub const DEFAULT_K_FUTURE: usize = 5;

/// Physical thresholds shared by the offline and online criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSet {
    /// Motion-stop tolerance (m per window).
    pub eps_static: f64,
    /// Significant planar displacement (m per window).
    pub thr_move: f64,
    /// Significant vertical displacement (m per window).
    pub thr_z: f64,
    /// Significant rotation (rad per window).
    pub thr_rot: f64,
    /// Gripper constancy tolerance.
    pub grip_eps: f64,
}

impl Default for ThresholdSet {
    fn default() -> Self {
        Self {
            eps_static: 0.005,
            thr_move: 0.02,
            thr_z: 0.02,
            thr_rot: 0.08,
            grip_eps: 0.05,
        }
    }
}

impl ThresholdSet {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("eps_static", self.eps_static),
            ("thr_move", self.thr_move),
            ("thr_z", self.thr_z),
            ("thr_rot", self.thr_rot),
            ("grip_eps", self.grip_eps),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(format!("{name} must be finite and > 0, got {v}"));
        }
        if self.eps_static >= self.thr_move {
            return Err(format!(
                "eps_static ({}) must be below thr_move ({})",
                self.eps_static, self.thr_move
            ));
        }
        Ok(())
    }

    /// Rotation below which an orientation ramp counts as stalled: the
    /// angular analogue of `eps_static`, scaled by `thr_rot / thr_move`.
    pub fn rot_stall(&self) -> f64 {
        self.thr_rot * self.eps_static / self.thr_move
    }
}

/// Motion facts a criterion may inspect: the lead-in ("past"), the
/// look-ahead ("future", or the most recent tail when online) and the whole
/// window for gripper constancy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CriterionInput {
    pub past: MotionSummary,
    pub future: MotionSummary,
    pub whole: MotionSummary,
}

/// Termination criterion of `primitive`. Total over the alphabet.
pub fn criterion(primitive: PrimitiveType, w: &CriterionInput, thr: &ThresholdSet) -> bool {
    let (p, f) = (&w.past.disp, &w.future.disp);
    let eps = thr.eps_static;
    let stall = thr.rot_stall();
    match primitive {
        PrimitiveType::Grasp => {
            w.whole.grip_range() < thr.grip_eps
                && w.whole.all_close
                && (f.dxy() > thr.thr_move || f.dz().abs() > thr.thr_z || f.rot() > thr.thr_rot)
        }
        PrimitiveType::Lift => p.dz() > thr.thr_z && (f.dz() < eps || (p.dxy() > thr.thr_move && f.dxy() < eps)),
        PrimitiveType::Move => p.dxy() > thr.thr_move && (f.dxy() < eps || f.dz() < -thr.thr_z),
        PrimitiveType::Place => w.past.all_open && f.dz() > thr.thr_z,
        PrimitiveType::Push => p.dxy() > thr.thr_move && p.dz().abs() < eps && f.dxy() < eps,
        PrimitiveType::Pull => p.dx() < -thr.thr_move && p.dz().abs() < eps && f.dxy() < eps,
        PrimitiveType::Press => p.dz() < -thr.thr_z && p.dxy() < eps && f.dz() > -eps,
        PrimitiveType::Insert => p.dxy() + p.dz().abs() > thr.thr_move && w.past.min_progress >= -eps && f.dxyz() < eps,
        PrimitiveType::Twist => p.roll().abs() > thr.thr_rot && f.rot() < stall,
        PrimitiveType::Tilt => p.pitch().abs() + p.yaw().abs() > thr.thr_rot && f.rot() < stall,
        PrimitiveType::Rotate => p.rot() > thr.thr_rot && w.past.all_close && f.rot() < stall,
    }
}

/// Window and offset parameters for one primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationRule {
    pub primitive: PrimitiveType,
    pub min_offset: usize,
    pub k_past: usize,
    pub k_future: usize,
    pub thresholds: ThresholdSet,
}

impl TerminationRule {
    pub fn new(primitive: PrimitiveType) -> Self {
        Self {
            primitive,
            min_offset: DEFAULT_MIN_OFFSET,
            k_past: DEFAULT_K_PAST,
            k_future: DEFAULT_K_FUTURE,
            thresholds: ThresholdSet::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        let invalid = |reason: String| SegmentError::InvalidRule {
            primitive: self.primitive,
            reason,
        };
        if self.min_offset < 1 || self.k_past < 1 || self.k_future < 1 {
            return Err(invalid("min_offset, k_past and k_future must be >= 1".into()));
        }
        self.thresholds.validate().map_err(invalid)
    }
}

/// Per-primitive overrides in a rule-table file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleOverride {
    pub min_offset: Option<usize>,
    pub k_past: Option<usize>,
    pub k_future: Option<usize>,
    pub thresholds: Option<ThresholdSet>,
}

/// On-disk rule table: shared defaults plus optional per-primitive overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleTableConfig {
    pub min_offset: usize,
    pub k_past: usize,
    pub k_future: usize,
    pub thresholds: ThresholdSet,
    pub overrides: BTreeMap<PrimitiveType, RuleOverride>,
}

impl Default for RuleTableConfig {
    fn default() -> Self {
        Self {
            min_offset: DEFAULT_MIN_OFFSET,
            k_past: DEFAULT_K_PAST,
            k_future: DEFAULT_K_FUTURE,
            thresholds: ThresholdSet::default(),
            overrides: BTreeMap::new(),
        }
    }
}

/// One rule per primitive of the alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    rules: BTreeMap<PrimitiveType, TerminationRule>,
}

impl Default for RuleTable {
    fn default() -> Self {
        Self::uniform(
            DEFAULT_MIN_OFFSET,
            DEFAULT_K_PAST,
            DEFAULT_K_FUTURE,
            ThresholdSet::default(),
        )
    }
}

impl RuleTable {
    pub fn uniform(min_offset: usize, k_past: usize, k_future: usize, thresholds: ThresholdSet) -> Self {
        let rules = PrimitiveType::ALL
            .iter()
            .map(|&p| {
                (
                    p,
                    TerminationRule {
                        primitive: p,
                        min_offset,
                        k_past,
                        k_future,
                        thresholds,
                    },
                )
            })
            .collect();
        Self { rules }
    }

    pub fn from_config(cfg: &RuleTableConfig) -> Result<Self, SegmentError> {
        let mut table = Self::uniform(cfg.min_offset, cfg.k_past, cfg.k_future, cfg.thresholds);
        for (p, o) in &cfg.overrides {
            let rule = table.rules.get_mut(p).expect("table is total");
            if let Some(v) = o.min_offset {
                rule.min_offset = v;
            }
            if let Some(v) = o.k_past {
                rule.k_past = v;
            }
            if let Some(v) = o.k_future {
                rule.k_future = v;
            }
            if let Some(v) = o.thresholds {
                rule.thresholds = v;
            }
        }
        for rule in table.rules.values() {
            rule.validate()?;
        }
        Ok(table)
    }

    pub fn from_json(json: &str) -> Result<Self, SegmentError> {
        let cfg: RuleTableConfig = serde_json::from_str(json).map_err(|e| SegmentError::InvalidRule {
            primitive: PrimitiveType::Grasp,
            reason: format!("rule table: {e}"),
        })?;
        Self::from_config(&cfg)
    }

    pub fn get(&self, primitive: PrimitiveType) -> &TerminationRule {
        &self.rules[&primitive]
    }

    pub fn set(&mut self, rule: TerminationRule) {
        self.rules.insert(rule.primitive, rule);
    }
}

/// Builds the criterion input for frame `t` of `frames`.
pub fn offline_window(frames: &[Frame], t: usize, k_past: usize, k_future: usize) -> CriterionInput {
    CriterionInput {
        past: MotionSummary::of(&frames[t - k_past..=t]),
        future: MotionSummary::of(&frames[t..=t + k_future]),
        whole: MotionSummary::of(&frames[t - k_past..=t + k_future]),
    }
}

/// Whether `rule`'s criterion holds at frame `t`.
pub fn evaluate_termination(rule: &TerminationRule, traj: &Trajectory, t: usize) -> Result<bool, SegmentError> {
    let len = traj.frames.len();
    if t < rule.k_past || t + rule.k_future >= len {
        return Err(SegmentError::WindowOutOfRange {
            t,
            k_past: rule.k_past,
            k_future: rule.k_future,
            len,
        });
    }
    let window = offline_window(&traj.frames, t, rule.k_past, rule.k_future);
    Ok(criterion(rule.primitive, &window, &rule.thresholds))
}

/// Boundaries between consecutive primitives (`seq.len() - 1` values).
pub fn segment_boundaries(
    traj: &Trajectory,
    seq: &PrimitiveSequence,
    rules: &RuleTable,
) -> Result<Vec<usize>, SegmentError> {
    let report = validate_trajectory(traj);
    if !report.is_valid() {
        return Err(SegmentError::InvalidTrajectory(format!("{:?}", report.violations)));
    }
    let n = traj.frames.len();
    let k = seq.len();
    let mut boundaries = Vec::with_capacity(k.saturating_sub(1));
    let mut t_start = 0usize;
    for i in 0..k.saturating_sub(1) {
        let primitive = seq.primitive(i);
        let rule = rules.get(primitive);
        // Leave room for every later primitive to run its own minimum offset.
        let remaining = k - 1 - i;
        let reserve = rule.k_future + (remaining - 1) * rule.min_offset;
        let last = (n - 1).checked_sub(reserve);
        let first = (t_start + rule.min_offset).max(rule.k_past);
        let found = last.and_then(|last| {
            (first..=last).find(|&t| {
                t + rule.k_future < n
                    && criterion(
                        primitive,
                        &offline_window(&traj.frames, t, rule.k_past, rule.k_future),
                        &rule.thresholds,
                    )
            })
        });
        match found {
            Some(t) => {
                boundaries.push(t);
                t_start = t;
            }
            None => return Err(SegmentError::BoundaryNotFound { index: i, primitive }),
        }
    }
    Ok(boundaries)
}

fn build_segments(
    n: usize,
    seq: &PrimitiveSequence,
    boundaries: &[usize],
    canonical: Vec<CanonicalInstruction>,
) -> Vec<Segment> {
    let starts = std::iter::once(0).chain(boundaries.iter().copied());
    let ends = boundaries.iter().copied().chain(std::iter::once(n));
    starts
        .zip(ends)
        .zip(canonical)
        .enumerate()
        .map(|(i, ((t_start, t_end), canonical))| Segment {
            primitive: seq.primitive(i),
            t_start,
            t_end,
            canonical,
        })
        .collect()
}

/// Canonical instructions for each item, binding roles to `objects`
/// (placeholders when `None`).
pub fn canonical_for(
    seq: &PrimitiveSequence,
    objects: Option<&[ObjectPair]>,
) -> Result<Vec<CanonicalInstruction>, SegmentError> {
    let placeholders: Vec<ObjectPair>;
    let objects = match objects {
        Some(o) => o,
        None => {
            let pairs = episode_indices(seq).into_iter().max().unwrap_or(0) + 1;
            placeholders = (0..pairs).map(ObjectPair::placeholder).collect();
            &placeholders
        }
    };
    let roles = assign_roles(seq, objects)?;
    seq.items()
        .iter()
        .zip(roles)
        .map(|(item, r)| canonicalize(item.primitive, &r).map_err(SegmentError::from))
        .collect()
}

/// Splits `traj` into contiguous segments, one per item of `seq`.
pub fn segment_trajectory(
    traj: &Trajectory,
    seq: &PrimitiveSequence,
    rules: &RuleTable,
) -> Result<Vec<Segment>, SegmentError> {
    segment_trajectory_with_objects(traj, seq, rules, None)
}

pub fn segment_trajectory_with_objects(
    traj: &Trajectory,
    seq: &PrimitiveSequence,
    rules: &RuleTable,
    objects: Option<&[ObjectPair]>,
) -> Result<Vec<Segment>, SegmentError> {
    let canonical = canonical_for(seq, objects)?;
    let boundaries = segment_boundaries(traj, seq, rules)?;
    Ok(build_segments(traj.frames.len(), seq, &boundaries, canonical))
}

/// One corpus item: a demonstration, its plan and optional object pairs.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub trajectory: Trajectory,
    pub plan: PrimitiveSequence,
    pub objects: Option<Vec<ObjectPair>>,
}

impl CorpusEntry {
    pub fn new(trajectory: Trajectory, plan: PrimitiveSequence) -> Self {
        Self {
            trajectory,
            plan,
            objects: None,
        }
    }
}

/// Where a sample's masked observation lives: the label ids to keep over a
/// frame range of the source trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObservationRef {
    pub source_id: String,
    pub t_start: usize,
    pub t_end: usize,
    pub keep_labels: BTreeSet<u8>,
    pub has_masks: bool,
}

/// Training sample for one primitive segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveSample {
    pub source_id: String,
    pub segment: Segment,
    pub observation: ObservationRef,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntryFailure {
    pub index: usize,
    pub source_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub trajectories: usize,
    pub samples: usize,
    pub per_primitive: BTreeMap<PrimitiveType, usize>,
    pub discards: usize,
    pub failures: Vec<EntryFailure>,
}

/// Segments every entry (in parallel) and collects samples in input order.
/// Per-entry failures are recorded in the stats and never abort the run.
pub fn disassemble_corpus(corpus: &[CorpusEntry], rules: &RuleTable) -> (Vec<PrimitiveSample>, CorpusStats) {
    let results: Vec<Result<Vec<PrimitiveSample>, SegmentError>> =
        corpus.par_iter().map(|entry| disassemble_entry(entry, rules)).collect();
    let mut stats = CorpusStats {
        trajectories: corpus.len(),
        ..CorpusStats::default()
    };
    let mut samples = Vec::new();
    for (index, (entry, result)) in corpus.iter().zip(results).enumerate() {
        match result {
            Ok(mut s) => {
                for sample in &s {
                    *stats.per_primitive.entry(sample.segment.primitive).or_default() += 1;
                }
                samples.append(&mut s);
            }
            Err(e) => {
                stats.discards += 1;
                stats.failures.push(EntryFailure {
                    index,
                    source_id: entry.trajectory.source_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    stats.samples = samples.len();
    (samples, stats)
}

fn disassemble_entry(entry: &CorpusEntry, rules: &RuleTable) -> Result<Vec<PrimitiveSample>, SegmentError> {
    let traj = &entry.trajectory;
    let segments = segment_trajectory_with_objects(traj, &entry.plan, rules, entry.objects.as_deref())?;
    let episodes = episode_indices(&entry.plan);
    Ok(segments
        .into_iter()
        .zip(episodes)
        .map(|(segment, pair)| {
            let (manip, target) = ObjectPair::labels(pair);
            let observation = ObservationRef {
                source_id: traj.source_id.clone(),
                t_start: segment.t_start,
                t_end: segment.t_end,
                keep_labels: BTreeSet::from([manip, target]),
                has_masks: traj.masks.is_some(),
            };
            PrimitiveSample {
                source_id: traj.source_id.clone(),
                frames: traj.frames[segment.t_start..segment.t_end].to_vec(),
                segment,
                observation,
            }
        })
        .collect())
}
