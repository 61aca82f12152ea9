//! Windowed motion summaries shared by the offline segmenter and the online
//! switcher.
//!
//! Trigonometry goes through `libm` so that rotation statistics (and the
//! synthetic trajectories built from them) are bit-identical across platforms.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::model::{Frame, ProprioState};

/// Unit quaternion for an axis-angle (scaled axis) vector.
pub fn quat_from_axis_angle(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    let angle = v.norm();
    if angle < 1e-12 {
        return UnitQuaternion::from_quaternion(Quaternion::new(1.0, v.x * 0.5, v.y * 0.5, v.z * 0.5));
    }
    let half = 0.5 * angle;
    let s = libm::sin(half) / angle;
    UnitQuaternion::new_unchecked(Quaternion::new(libm::cos(half), v.x * s, v.y * s, v.z * s))
}

/// Axis-angle vector of a unit quaternion, angle in `[0, pi]`.
pub fn axis_angle_from_quat(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = q.quaternion();
    let (w, v) = if q.w < 0.0 { (-q.w, -q.imag()) } else { (q.w, q.imag()) };
    let s = v.norm();
    if s < 1e-15 {
        return v * 2.0;
    }
    let angle = 2.0 * libm::atan2(s, w);
    v * (angle / s)
}

/// Rotation taking `from` to `to`, expressed in the tool frame of `from`
/// (x = roll, y = pitch, z = yaw).
pub fn relative_rotation(from: &Vector3<f64>, to: &Vector3<f64>) -> Vector3<f64> {
    let qa = quat_from_axis_angle(from);
    let qb = quat_from_axis_angle(to);
    axis_angle_from_quat(&(qa.inverse() * qb))
}

/// End-minus-start displacement between two states.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Displacement {
    pub dpos: Vector3<f64>,
    /// Relative rotation in the start tool frame.
    pub drot: Vector3<f64>,
}

impl Displacement {
    pub fn between(a: &ProprioState, b: &ProprioState) -> Self {
        Self {
            dpos: b.pos - a.pos,
            drot: relative_rotation(&a.orient, &b.orient),
        }
    }

    pub fn dx(&self) -> f64 {
        self.dpos.x
    }

    pub fn dz(&self) -> f64 {
        self.dpos.z
    }

    pub fn dxy(&self) -> f64 {
        self.dpos.x.hypot(self.dpos.y)
    }

    pub fn dxyz(&self) -> f64 {
        self.dpos.norm()
    }

    pub fn rot(&self) -> f64 {
        self.drot.norm()
    }

    pub fn roll(&self) -> f64 {
        self.drot.x
    }

    pub fn pitch(&self) -> f64 {
        self.drot.y
    }

    pub fn yaw(&self) -> f64 {
        self.drot.z
    }
}

/// Aggregate motion and gripper facts over a contiguous run of frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSummary {
    pub frames: usize,
    pub disp: Displacement,
    pub grip_min: f64,
    pub grip_max: f64,
    pub all_close: bool,
    pub all_open: bool,
    /// Smallest projection of any per-frame step onto the net direction of
    /// travel (m). Negative values mean the path backtracked.
    pub min_progress: f64,
}

impl Default for MotionSummary {
    fn default() -> Self {
        Self {
            frames: 0,
            disp: Displacement::default(),
            grip_min: 0.0,
            grip_max: 0.0,
            all_close: false,
            all_open: false,
            min_progress: 0.0,
        }
    }
}

impl MotionSummary {
    /// Summary over `frames` (first to last inclusive).
    pub fn of<'a, I>(frames: I) -> Self
    where
        I: IntoIterator<Item = &'a Frame>,
        I::IntoIter: Clone,
    {
        let iter = frames.into_iter();
        let mut first: Option<&Frame> = None;
        let mut last: Option<&Frame> = None;
        let mut count = 0;
        let mut grip_min = f64::INFINITY;
        let mut grip_max = f64::NEG_INFINITY;
        let mut all_close = true;
        let mut all_open = true;
        for f in iter.clone() {
            first.get_or_insert(f);
            last = Some(f);
            count += 1;
            grip_min = grip_min.min(f.state.grip);
            grip_max = grip_max.max(f.state.grip);
            let close = f.action.is_close();
            all_close &= close;
            all_open &= !close;
        }
        let (Some(first), Some(last)) = (first, last) else {
            return Self::default();
        };
        let disp = Displacement::between(&first.state, &last.state);
        let net = disp.dpos;
        let norm = net.norm();
        let mut min_progress = 0.0f64;
        if norm > 0.0 && count > 1 {
            let dir = net / norm;
            min_progress = f64::INFINITY;
            let mut prev = first;
            for f in iter.skip(1) {
                min_progress = min_progress.min((f.state.pos - prev.state.pos).dot(&dir));
                prev = f;
            }
        }
        Self {
            frames: count,
            disp,
            grip_min,
            grip_max,
            all_close,
            all_open,
            min_progress,
        }
    }

    pub fn grip_range(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.grip_max - self.grip_min
        }
    }
}
