//! Synthetic demonstrations with known primitive boundaries.
//!
//! Randomness comes from SplitMix64 (increment `0x9E3779B97F4A7C15`, mixing
//! multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`, shifts 30/27/31).
//! Gaussian noise uses the Box-Muller transform on two 53-bit uniforms.
//! Motion directions are drawn from a stream with a fixed seed, so with
//! `noise_sigma = 0` the output does not depend on `seed` at all.

use nalgebra::Vector3;

use crate::error::SynthError;
use crate::kinematics::{axis_angle_from_quat, quat_from_axis_angle};
use crate::mcr::{LabelGrid, ObjectPair};
use crate::model::{ActionDelta, Frame, PrimitiveSequence, PrimitiveType, ProprioState, Trajectory};
use crate::segmenter::{DEFAULT_K_FUTURE, DEFAULT_MIN_OFFSET};

pub const DEFAULT_MOTION_SCALE: f64 = 0.013;
pub const DEFAULT_ROT_RATE: f64 = 0.035;

const DIRECTION_SEED: u64 = 0x5EED_D1EC_7104_0001;
const GRIP_CLOSED: f64 = 0.98;

/// SplitMix64 pseudo-random generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Standard normal deviate.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub sequence: PrimitiveSequence,
    /// Frames per primitive.
    pub durations: Vec<usize>,
    /// Translation speed in meters per frame.
    pub motion_scale: f64,
    /// Angular speed in radians per frame.
    pub rot_rate: f64,
    /// Standard deviation of position noise (m).
    pub noise_sigma: f64,
    pub seed: u64,
    /// Emit moving-rectangle label grids of this size.
    pub masks: Option<(usize, usize)>,
}

impl SynthSpec {
    pub fn new(sequence: PrimitiveSequence, durations: Vec<usize>) -> Self {
        Self {
            sequence,
            durations,
            motion_scale: DEFAULT_MOTION_SCALE,
            rot_rate: DEFAULT_ROT_RATE,
            noise_sigma: 0.0,
            seed: 0,
            masks: None,
        }
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    /// Shortest allowed duration for a non-final segment.
    pub fn min_duration() -> usize {
        2 * (DEFAULT_MIN_OFFSET + DEFAULT_K_FUTURE) + 1
    }

    /// Shortest allowed duration for the final segment.
    pub fn min_last_duration() -> usize {
        DEFAULT_MIN_OFFSET + DEFAULT_K_FUTURE + 1
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::SpecInvalid(m));
        if self.durations.len() != self.sequence.len() {
            return bad(format!(
                "{} durations for {} primitives",
                self.durations.len(),
                self.sequence.len()
            ));
        }
        let last = self.durations.len() - 1;
        for (i, &d) in self.durations.iter().enumerate() {
            let min = if i == last {
                Self::min_last_duration()
            } else {
                Self::min_duration()
            };
            if d < min {
                return bad(format!("segment {i} lasts {d} frames, needs at least {min}"));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if !(self.motion_scale.is_finite() && self.motion_scale > 0.0) {
            return bad(format!("motion scale must be > 0, got {}", self.motion_scale));
        }
        if !(self.rot_rate.is_finite() && self.rot_rate > 0.0) {
            return bad(format!("rotation rate must be > 0, got {}", self.rot_rate));
        }
        if let Some((w, h)) = self.masks {
            if w < 4 || h < 4 {
                return bad(format!("mask grid {w}x{h} is too small"));
            }
        }
        Ok(())
    }
}

/// Per-frame motion command of the noiseless generator.
#[derive(Debug, Clone, Copy)]
struct Step {
    vel: Vector3<f64>,
    /// Rotation increment in the tool frame.
    spin: Vector3<f64>,
    grip: f64,
    cmd: f64,
}

struct Profile<'a> {
    v: f64,
    w: f64,
    dirs: &'a mut SplitMix64,
}

impl Profile<'_> {
    fn steps(&mut self, p: PrimitiveType, prev: Option<PrimitiveType>, d: usize, grip: f64) -> Vec<Step> {
        use PrimitiveType::*;
        let v = self.v;
        let cmd = if grip > 0.5 { 1.0 } else { 0.0 };
        let still = |grip, cmd| Step {
            vel: Vector3::zeros(),
            spin: Vector3::zeros(),
            grip,
            cmd,
        };
        let pre_len = match prev {
            Some(Place) => 4,
            Some(Push | Pull | Insert | Twist | Tilt | Rotate | Press) => 8,
            _ => 0,
        };
        let mut out = Vec::with_capacity(d);
        for _ in 0..pre_len.min(d) {
            let mut s = still(grip, cmd);
            if prev == Some(Place) {
                s.vel.z = v;
            }
            out.push(s);
        }
        let m = d - out.len();
        let mv = |vel: Vector3<f64>, grip, cmd| Step {
            vel,
            spin: Vector3::zeros(),
            grip,
            cmd,
        };
        match p {
            Grasp => {
                let approach = m.saturating_sub(14);
                for _ in 0..approach {
                    out.push(mv(Vector3::new(0.0, 0.0, -v), 0.0, 0.0));
                }
                for g in [0.33, 0.65, GRIP_CLOSED] {
                    out.push(still(g, 1.0));
                }
                for _ in 0..5 {
                    out.push(mv(Vector3::new(0.0, 0.0, 0.001), GRIP_CLOSED, 1.0));
                }
                while out.len() < d {
                    out.push(still(GRIP_CLOSED, 1.0));
                }
            }
            Lift => {
                for _ in 0..m {
                    out.push(mv(Vector3::new(0.0, 0.0, v), grip, cmd));
                }
            }
            Move => {
                let a = std::f64::consts::TAU * self.dirs.next_f64();
                let vel = Vector3::new(v * libm::cos(a), v * libm::sin(a), 0.0);
                for _ in 0..m {
                    out.push(mv(vel, grip, cmd));
                }
            }
            Place => {
                let descent = m.saturating_sub(12);
                for _ in 0..descent {
                    out.push(mv(Vector3::new(0.0, 0.0, -v), grip, cmd));
                }
                let mut g = grip;
                while out.len() + 1 < d {
                    g = (g - 0.33).max(0.0);
                    out.push(still(g, 0.0));
                }
                out.push(mv(Vector3::new(0.0, 0.0, v), 0.0, 0.0));
            }
            Push => {
                let a = (self.dirs.next_f64() - 0.5) * (2.0 * std::f64::consts::FRAC_PI_3);
                let vel = Vector3::new(v * libm::cos(a), v * libm::sin(a), 0.0);
                for _ in 0..m {
                    out.push(mv(vel, grip, cmd));
                }
            }
            Pull => {
                for _ in 0..m {
                    out.push(mv(Vector3::new(-v, 0.0, 0.0), grip, cmd));
                }
            }
            Press => {
                for _ in 0..m.saturating_sub(2) {
                    out.push(mv(Vector3::new(0.0, 0.0, -v), grip, cmd));
                }
                while out.len() < d {
                    out.push(still(grip, cmd));
                }
            }
            Insert => {
                let a = std::f64::consts::TAU * self.dirs.next_f64();
                let half = m / 2;
                for i in 0..m {
                    let vel = if i < half {
                        Vector3::new(0.0, 0.0, -v)
                    } else {
                        Vector3::new(0.6 * v * libm::cos(a), 0.6 * v * libm::sin(a), -0.8 * v)
                    };
                    out.push(mv(vel, grip, cmd));
                }
            }
            Twist | Tilt => {
                let spin = if p == Twist {
                    Vector3::new(self.w, 0.0, 0.0)
                } else if self.dirs.next_f64() < 0.5 {
                    Vector3::new(0.0, self.w, 0.0)
                } else {
                    Vector3::new(0.0, 0.0, self.w)
                };
                for _ in 0..m {
                    out.push(Step {
                        vel: Vector3::zeros(),
                        spin,
                        grip,
                        cmd,
                    });
                }
            }
            Rotate => {
                // Yaw about a hinge 5 cm away, sweeping a small arc.
                let radius = 0.05;
                let phase0 = std::f64::consts::TAU * self.dirs.next_f64();
                for i in 0..m {
                    let phase = phase0 + self.w * i as f64;
                    let speed = radius * self.w;
                    out.push(Step {
                        vel: Vector3::new(-speed * libm::sin(phase), speed * libm::cos(phase), 0.0),
                        spin: Vector3::new(0.0, 0.0, self.w),
                        grip: GRIP_CLOSED,
                        cmd: 1.0,
                    });
                }
            }
        }
        out
    }
}

fn starts_closed(p: PrimitiveType) -> bool {
    use PrimitiveType::*;
    matches!(p, Lift | Move | Place | Twist | Tilt | Rotate | Insert)
}

/// Renders a trajectory realizing `spec` and its ground-truth boundaries.
pub fn generate(spec: &SynthSpec) -> Result<(Trajectory, Vec<usize>), SynthError> {
    spec.validate()?;
    let mut dirs = SplitMix64::new(DIRECTION_SEED);
    let mut profile = Profile {
        v: spec.motion_scale,
        w: spec.rot_rate,
        dirs: &mut dirs,
    };
    let first = spec.sequence.primitive(0);
    let mut grip = if starts_closed(first) { GRIP_CLOSED } else { 0.0 };
    let mut steps = Vec::new();
    let mut segment_of = Vec::new();
    let mut prev = None;
    for (i, (&p, &d)) in spec.sequence.primitives().iter().zip(&spec.durations).enumerate() {
        let seg = profile.steps(p, prev, d, grip);
        debug_assert_eq!(seg.len(), d);
        grip = seg.last().map_or(grip, |s| s.grip);
        steps.extend(seg);
        segment_of.extend(std::iter::repeat_n(i, d));
        prev = Some(p);
    }

    let mut pos = Vector3::new(0.45, 0.0, 0.25);
    let mut orient = quat_from_axis_angle(&Vector3::zeros());
    let mut states = Vec::with_capacity(steps.len());
    for s in &steps {
        states.push((pos, orient, s.grip));
        pos += s.vel;
        orient *= quat_from_axis_angle(&s.spin);
    }

    let mut noise = SplitMix64::new(spec.seed);
    if spec.noise_sigma > 0.0 {
        for (p, _, _) in &mut states {
            for k in 0..3 {
                p[k] += spec.noise_sigma * noise.gaussian();
            }
        }
    }

    let n = states.len();
    let frames = (0..n)
        .map(|t| {
            let (p, q, g) = states[t];
            let (dpos, drot) = if t + 1 < n {
                let (p2, q2, _) = states[t + 1];
                (p2 - p, axis_angle_from_quat(&(q.inverse() * q2)))
            } else {
                (Vector3::zeros(), Vector3::zeros())
            };
            Frame {
                state: ProprioState {
                    pos: p,
                    orient: axis_angle_from_quat(&q),
                    grip: g,
                },
                action: ActionDelta {
                    dpos,
                    dorient: drot,
                    grip_cmd: steps[t].cmd,
                },
            }
        })
        .collect();

    let boundaries = spec
        .durations
        .iter()
        .scan(0, |acc, d| {
            *acc += d;
            Some(*acc)
        })
        .take(spec.durations.len() - 1)
        .collect();

    let names = spec.sequence.names().join(",");
    let mut traj = Trajectory::new(
        format!("synth-{:016x}", spec.seed),
        format!("synthetic demonstration: {names}"),
        frames,
    );
    if let Some((w, h)) = spec.masks {
        traj.masks = Some(render_masks(&traj, &segment_of, &spec.sequence, w, h));
    }
    Ok((traj, boundaries))
}

/// Two rectangles per frame: the manipulated object follows the gripper
/// while it is closed; the target stays fixed.
fn render_masks(
    traj: &Trajectory,
    segment_of: &[usize],
    seq: &PrimitiveSequence,
    w: usize,
    h: usize,
) -> Vec<LabelGrid> {
    let episodes = crate::mcr::episode_indices(seq);
    let max_pair = episodes.iter().copied().max().unwrap_or(0);
    let (_, max_label) = ObjectPair::labels(max_pair);
    let origin = traj.frames[0].state.pos;
    let to_cell = |v: f64, size: usize| -> usize {
        let c = (v * 20.0 + 0.5) * size as f64;
        c.clamp(0.0, (size - 1) as f64) as usize
    };
    let mut object = (w / 4, h / 4);
    traj.frames
        .iter()
        .zip(segment_of)
        .map(|(f, &seg)| {
            let (manip, target) = ObjectPair::labels(episodes[seg]);
            if f.state.grip > 0.5 {
                let rel = f.state.pos - origin;
                object = (to_cell(rel.x, w), to_cell(rel.y, h));
            }
            let mut labels = vec![0u8; w * h];
            let mut paint = |cx: usize, cy: usize, label: u8| {
                for y in cy.saturating_sub(1)..(cy + 2).min(h) {
                    for x in cx.saturating_sub(1)..(cx + 2).min(w) {
                        labels[y * w + x] = label;
                    }
                }
            };
            paint(3 * w / 4, 3 * h / 4, target);
            paint(object.0, object.1, manip);
            LabelGrid::new(w, h, max_label, labels).expect("rendered labels respect the bound")
        })
        .collect()
}

/// Allowed successors used when drawing random plans. Every primitive is
/// reachable and every transition is kinematically meaningful.
pub fn successors(p: PrimitiveType) -> &'static [PrimitiveType] {
    use PrimitiveType::*;
    match p {
        Grasp => &[Lift, Move, Twist, Insert, Tilt, Rotate, Pull],
        Lift => &[Place, Move, Insert, Tilt],
        Move => &[Place, Insert],
        Place => &[Grasp, Push, Pull, Press],
        Push => &[Grasp, Pull, Press],
        Pull => &[Grasp, Push, Press],
        Press => &[Push, Pull, Grasp],
        Insert => &[Press, Push],
        Twist => &[Grasp, Move, Lift],
        Tilt => &[Place, Move],
        Rotate => &[Place, Push],
    }
}

/// Random plan of `len` primitives following [`successors`].
pub fn random_sequence(rng: &mut SplitMix64, len: usize) -> PrimitiveSequence {
    let mut p = PrimitiveType::ALL[rng.range(0, PrimitiveType::ALL.len() - 1)];
    let mut out = vec![p];
    while out.len() < len {
        let next = successors(p);
        p = next[rng.range(0, next.len() - 1)];
        out.push(p);
    }
    PrimitiveSequence::from_primitives(&out).expect("len >= 1")
}

/// Random valid spec: 2-6 primitives, durations 31-60 (last 20-60).
pub fn random_spec(seed: u64, noise_sigma: f64) -> SynthSpec {
    let mut rng = SplitMix64::new(seed ^ 0xA076_1D64_78BD_642F);
    let len = rng.range(2, 6);
    let sequence = random_sequence(&mut rng, len);
    let durations = (0..len)
        .map(|i| {
            if i + 1 == len {
                rng.range(20, 60)
            } else {
                rng.range(SynthSpec::min_duration(), 60)
            }
        })
        .collect();
    SynthSpec::new(sequence, durations).with_noise(noise_sigma, seed)
}

/// A synthetic demonstration together with the plan and true boundaries
/// it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub trajectory: Trajectory,
    pub spec: SynthSpec,
    pub boundaries: Vec<usize>,
}

/// Renders `count` random demonstrations for seeds `first_seed..`.
pub fn synth_corpus(first_seed: u64, count: usize, noise_sigma: f64) -> Vec<SynthSample> {
    (first_seed..first_seed + count as u64)
        .map(|seed| {
            let spec = random_spec(seed, noise_sigma);
            let (trajectory, boundaries) = generate(&spec).expect("random specs are valid");
            SynthSample {
                trajectory,
                spec,
                boundaries,
            }
        })
        .collect()
}
