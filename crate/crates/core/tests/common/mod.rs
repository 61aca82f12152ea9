//! Helpers shared by the integration tests: hand-built fixtures and an
//! exhaustive-scan oracle that re-derives every termination criterion from
//! raw frame rows.

#![allow(dead_code)]

use nalgebra::{UnitQuaternion, Vector3};
use primkit::model::{ActionDelta, Frame, PrimitiveType, ProprioState, Trajectory};
use primkit::segmenter::ThresholdSet;

/// The grasp exemplar: still and closed until frame 35, then the listed
/// rows at 35/40/45 joined linearly, with the final rise continued to 50.
pub fn grasp_exemplar() -> Trajectory {
    let keys: [(f64, [f64; 4]); 3] = [
        (35.0, [0.120, 0.450, 0.020, 0.98]),
        (40.0, [0.121, 0.450, 0.022, 0.99]),
        (45.0, [0.126, 0.455, 0.045, 0.99]),
    ];
    let at = |t: f64| -> [f64; 4] {
        if t <= keys[0].0 {
            return keys[0].1;
        }
        let (a, b) = if t <= keys[1].0 {
            (keys[0], keys[1])
        } else {
            (keys[1], keys[2])
        };
        let u = (t - a.0) / (b.0 - a.0);
        let mut out: [f64; 4] = std::array::from_fn(|k| a.1[k] + u * (b.1[k] - a.1[k]));
        if t > keys[2].0 {
            out[3] = keys[2].1[3];
        }
        out
    };
    let frames = (0..=50)
        .map(|t| {
            let s = at(t as f64);
            let n = at(t as f64 + 1.0);
            Frame {
                state: ProprioState::new([s[0], s[1], s[2]], [0.0; 3], s[3]),
                action: ActionDelta::new([n[0] - s[0], n[1] - s[1], n[2] - s[2]], [0.0; 3], 1.0),
            }
        })
        .collect();
    Trajectory::new("grasp-exemplar", "pick up cup", frames)
}

/// `z = rate * t` until frame `knee`, constant afterwards, gripper closed.
pub fn z_ramp(rate: f64, knee: usize, len: usize) -> Trajectory {
    let frames = (0..len)
        .map(|t| {
            let z = rate * t.min(knee) as f64;
            Frame {
                state: ProprioState::new([0.4, 0.0, z], [0.0; 3], 0.98),
                action: ActionDelta::new([0.0, 0.0, if t < knee { rate } else { 0.0 }], [0.0; 3], 1.0),
            }
        })
        .collect();
    Trajectory::new("ramp", "lift", frames)
}

// ---------------------------------------------------------------- oracle --

struct Span<'a> {
    rows: &'a [[f64; 14]],
}

impl Span<'_> {
    fn first(&self) -> &[f64; 14] {
        &self.rows[0]
    }
    fn last(&self) -> &[f64; 14] {
        &self.rows[self.rows.len() - 1]
    }
    fn d(&self, k: usize) -> f64 {
        self.last()[k] - self.first()[k]
    }
    fn dxy(&self) -> f64 {
        (self.d(0).powi(2) + self.d(1).powi(2)).sqrt()
    }
    fn dxyz(&self) -> f64 {
        (self.d(0).powi(2) + self.d(1).powi(2) + self.d(2).powi(2)).sqrt()
    }
    fn rel_rot(&self) -> Vector3<f64> {
        let q = |r: &[f64; 14]| UnitQuaternion::from_scaled_axis(Vector3::new(r[3], r[4], r[5]));
        (q(self.first()).inverse() * q(self.last())).scaled_axis()
    }
    fn all_cmd(&self, close: bool) -> bool {
        self.rows.iter().all(|r| (r[13] >= 0.5) == close)
    }
    fn grip_range(&self) -> f64 {
        let max = self.rows.iter().map(|r| r[6]).fold(f64::NEG_INFINITY, f64::max);
        let min = self.rows.iter().map(|r| r[6]).fold(f64::INFINITY, f64::min);
        max - min
    }
    fn monotone(&self, eps: f64) -> bool {
        let net = Vector3::new(self.d(0), self.d(1), self.d(2));
        if net.norm() == 0.0 {
            return true;
        }
        let dir = net.normalize();
        self.rows.windows(2).all(|w| {
            let step = Vector3::new(w[1][0] - w[0][0], w[1][1] - w[0][1], w[1][2] - w[0][2]);
            step.dot(&dir) >= -eps
        })
    }
}

/// Criterion of `p` evaluated from scratch on raw rows at frame `t`.
pub fn oracle_predicate(
    p: PrimitiveType,
    rows: &[[f64; 14]],
    t: usize,
    k_past: usize,
    k_future: usize,
    thr: &ThresholdSet,
) -> bool {
    let past = Span {
        rows: &rows[t - k_past..=t],
    };
    let fut = Span {
        rows: &rows[t..=t + k_future],
    };
    let whole = Span {
        rows: &rows[t - k_past..=t + k_future],
    };
    let eps = thr.eps_static;
    let stall = thr.thr_rot * thr.eps_static / thr.thr_move;
    use PrimitiveType::*;
    match p {
        Grasp => {
            whole.grip_range() < thr.grip_eps
                && whole.all_cmd(true)
                && (fut.dxy() > thr.thr_move || fut.d(2).abs() > thr.thr_z || fut.rel_rot().norm() > thr.thr_rot)
        }
        Lift => past.d(2) > thr.thr_z && (fut.d(2) < eps || (past.dxy() > thr.thr_move && fut.dxy() < eps)),
        Move => past.dxy() > thr.thr_move && (fut.dxy() < eps || fut.d(2) < -thr.thr_z),
        Place => past.all_cmd(false) && fut.d(2) > thr.thr_z,
        Push => past.dxy() > thr.thr_move && past.d(2).abs() < eps && fut.dxy() < eps,
        Pull => past.d(0) < -thr.thr_move && past.d(2).abs() < eps && fut.dxy() < eps,
        Press => past.d(2) < -thr.thr_z && past.dxy() < eps && fut.d(2) > -eps,
        Insert => past.dxy() + past.d(2).abs() > thr.thr_move && past.monotone(eps) && fut.dxyz() < eps,
        Twist => past.rel_rot().x.abs() > thr.thr_rot && fut.rel_rot().norm() < stall,
        Tilt => {
            let r = past.rel_rot();
            r.y.abs() + r.z.abs() > thr.thr_rot && fut.rel_rot().norm() < stall
        }
        Rotate => past.rel_rot().norm() > thr.thr_rot && past.all_cmd(true) && fut.rel_rot().norm() < stall,
    }
}

/// Every frame at which `p`'s criterion holds (where the window fits).
pub fn oracle_hits(
    p: PrimitiveType,
    traj: &Trajectory,
    k_past: usize,
    k_future: usize,
    thr: &ThresholdSet,
) -> Vec<usize> {
    let rows: Vec<[f64; 14]> = traj.frames.iter().map(Frame::to_row).collect();
    (k_past..rows.len().saturating_sub(k_future))
        .filter(|&t| oracle_predicate(p, &rows, t, k_past, k_future, thr))
        .collect()
}

/// Boundaries by exhaustive scan: for each primitive, the first oracle hit
/// at or after `t_start + delta` leaving room for the rest of the plan.
pub fn oracle_boundaries(
    traj: &Trajectory,
    seq: &[PrimitiveType],
    delta: usize,
    k_past: usize,
    k_future: usize,
    thr: &ThresholdSet,
) -> Option<Vec<usize>> {
    let n = traj.frames.len();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..seq.len() - 1 {
        let later_non_last = seq.len() - 2 - i;
        let hits = oracle_hits(seq[i], traj, k_past, k_future, thr);
        let t = hits
            .into_iter()
            .find(|&t| t >= start + delta && t + later_non_last * delta + k_future < n)?;
        out.push(t);
        start = t;
    }
    Some(out)
}

/// Seeds, count and noise level of the frozen golden corpus.
pub const GOLDEN_FIRST_SEED: u64 = 1000;
pub const GOLDEN_COUNT: usize = 40;
pub const GOLDEN_SIGMA: f64 = 0.001;

/// SHA-256 digests of the serialized golden corpus and of its segments.
pub const GOLDEN_TRAJECTORIES_SHA256: &str = "6b4f9964a641c970c2296761030a0950134c39f67a45c1a884bb454d15f3deef";
pub const GOLDEN_SEGMENTS_SHA256: &str = "771ffe621faffce72d093d73bd553a141fa8930afabe285b326d3271b10c8671";

/// Renders the golden corpus and returns (trajectory bytes, segment bytes).
pub fn golden_outputs() -> (Vec<u8>, Vec<u8>) {
    use primkit::segmenter::{disassemble_corpus, CorpusEntry, RuleTable};
    let corpus = primkit::synth::synth_corpus(GOLDEN_FIRST_SEED, GOLDEN_COUNT, GOLDEN_SIGMA);
    let mut trajectories = Vec::new();
    for s in &corpus {
        primkit::io::write_trajectory(&mut trajectories, &s.trajectory).unwrap();
    }
    let entries: Vec<CorpusEntry> = corpus
        .into_iter()
        .map(|s| CorpusEntry::new(s.trajectory, s.spec.sequence))
        .collect();
    let (samples, _) = disassemble_corpus(&entries, &RuleTable::default());
    let mut segments = Vec::new();
    for s in &samples {
        primkit::io::write_segments(&mut segments, &s.source_id, std::slice::from_ref(&s.segment)).unwrap();
    }
    (trajectories, segments)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
