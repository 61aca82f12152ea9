//! Online primitive switching over a causal history window.
//!
//! The switch trigger reuses the offline termination criteria with the
//! look-ahead replaced by the most recent `ceil(W/2)` frames of history, so
//! a decision at frame `t` depends on frames `<= t` only.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::SwitchError;
use crate::kinematics::MotionSummary;
use crate::model::{ActionDelta, Frame, PrimitiveSequence, PrimitiveType, ProprioState};
use crate::segmenter::{criterion, CriterionInput, ThresholdSet};

pub const DEFAULT_WINDOW: usize = 10;

/// Trend statistics of a history window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowStats {
    pub dz_total: f64,
    pub dxy_total: f64,
    pub drot_total: f64,
    pub grip_range: f64,
    /// Majority gripper command over the buffer (ties resolve to close).
    pub grip_cmd_mode: u8,
    pub tail_dz: f64,
    pub tail_dxy: f64,
    /// Buffer minus the trailing `tail_len - 1` deltas.
    pub head: MotionSummary,
    /// Last `tail_len` frames.
    pub tail: MotionSummary,
    pub whole: MotionSummary,
}

impl WindowStats {
    pub fn compute(buffer: &VecDeque<Frame>, tail_len: usize) -> Self {
        if buffer.is_empty() {
            return Self::default();
        }
        let n = buffer.len();
        let tail_len = tail_len.clamp(1, n);
        let split = n - tail_len;
        let whole = MotionSummary::of(buffer.iter());
        let head = MotionSummary::of(buffer.range(..=split));
        let tail = MotionSummary::of(buffer.range(split..));
        let closes = buffer.iter().filter(|f| f.action.is_close()).count();
        Self {
            dz_total: whole.disp.dz(),
            dxy_total: whole.disp.dxy(),
            drot_total: whole.disp.rot(),
            grip_range: whole.grip_range(),
            grip_cmd_mode: u8::from(2 * closes >= n),
            tail_dz: tail.disp.dz(),
            tail_dxy: tail.disp.dxy(),
            head,
            tail,
            whole,
        }
    }

    pub fn criterion_input(&self) -> CriterionInput {
        CriterionInput {
            past: self.head,
            future: self.tail,
            whole: self.whole,
        }
    }
}

/// Fixed-capacity chronological buffer with statistics kept in sync.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    capacity: usize,
    buffer: VecDeque<Frame>,
    stats: WindowStats,
}

impl HistoryWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "history window capacity must be >= 1");
        Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
            stats: WindowStats::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() == self.capacity
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.buffer.iter()
    }

    pub fn stats(&self) -> &WindowStats {
        &self.stats
    }

    pub fn tail_len(&self) -> usize {
        self.capacity.div_ceil(2)
    }

    pub fn push(&mut self, frame: Frame) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(frame);
        self.stats = WindowStats::compute(&self.buffer, self.tail_len());
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
        self.stats = WindowStats::default();
    }
}

/// Appends a frame, evicting the oldest when full.
pub fn push_frame(mut window: HistoryWindow, state: ProprioState, action: ActionDelta) -> HistoryWindow {
    window.push(Frame { state, action });
    window
}

/// Thresholds plus the window shape used by the online monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPolicy {
    pub thresholds: ThresholdSet,
    pub window: usize,
    /// Drop the history when a switch fires so the next primitive is judged
    /// on its own frames only.
    pub reset_on_switch: bool,
}

impl Default for SwitchPolicy {
    fn default() -> Self {
        Self {
            thresholds: ThresholdSet::default(),
            window: DEFAULT_WINDOW,
            reset_on_switch: true,
        }
    }
}

/// Whether the active primitive has finished, judged from history alone.
pub fn check_switch(window: &HistoryWindow, current: PrimitiveType, policy: &SwitchPolicy) -> bool {
    if window.len() < policy.window {
        return false;
    }
    criterion(current, &window.stats().criterion_input(), &policy.thresholds)
}

/// Index of the primitive that should be active after this frame.
pub fn next_primitive(window: &HistoryWindow, current: usize, seq: &PrimitiveSequence, policy: &SwitchPolicy) -> usize {
    if current + 1 >= seq.len() {
        return current;
    }
    if check_switch(window, seq.primitive(current), policy) {
        current + 1
    } else {
        current
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub frame: usize,
    pub from: PrimitiveType,
    pub to: PrimitiveType,
}

/// Incremental monitor: feed frames, get switch events.
#[derive(Debug, Clone)]
pub struct Monitor<'a> {
    seq: &'a PrimitiveSequence,
    policy: SwitchPolicy,
    window: HistoryWindow,
    active: usize,
    frame: usize,
    events: Vec<SwitchEvent>,
}

impl<'a> Monitor<'a> {
    pub fn new(seq: &'a PrimitiveSequence, policy: SwitchPolicy) -> Self {
        Self {
            seq,
            policy,
            window: HistoryWindow::new(policy.window.max(1)),
            active: 0,
            frame: 0,
            events: Vec::new(),
        }
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn events(&self) -> &[SwitchEvent] {
        &self.events
    }

    pub fn observe(&mut self, frame: Frame) -> Option<SwitchEvent> {
        self.window.push(frame);
        let t = self.frame;
        self.frame += 1;
        let next = next_primitive(&self.window, self.active, self.seq, &self.policy);
        if next == self.active {
            return None;
        }
        let event = SwitchEvent {
            frame: t,
            from: self.seq.primitive(self.active),
            to: self.seq.primitive(next),
        };
        self.active = next;
        self.events.push(event);
        if self.policy.reset_on_switch {
            self.window.clear();
        }
        Some(event)
    }

    pub fn finish(self) -> Result<Vec<SwitchEvent>, SwitchError> {
        if self.active + 1 < self.seq.len() {
            return Err(SwitchError::StreamEnded {
                active: self.seq.primitive(self.active),
                pending: self.seq.primitives()[self.active + 1..].to_vec(),
                events: self.events,
            });
        }
        Ok(self.events)
    }
}

/// Replays `frames` through the monitor on the calling thread.
pub fn run_closed_loop<I>(
    frames: I,
    seq: &PrimitiveSequence,
    policy: &SwitchPolicy,
) -> Result<Vec<SwitchEvent>, SwitchError>
where
    I: IntoIterator<Item = Frame>,
{
    let mut monitor = Monitor::new(seq, *policy);
    for frame in frames {
        monitor.observe(frame);
    }
    monitor.finish()
}

/// History shared between an execution thread (writer) and monitors
/// (readers). Every read sees a whole number of pushes.
#[derive(Debug, Clone)]
pub struct SharedHistory {
    inner: Arc<RwLock<HistoryWindow>>,
}

impl SharedHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: Arc::new(RwLock::new(HistoryWindow::new(capacity))),
        }
    }

    pub fn push(&self, frame: Frame) {
        self.inner.write().push(frame);
    }

    pub fn clear(&self) {
        self.inner.write().clear();
    }

    pub fn snapshot(&self) -> HistoryWindow {
        self.inner.read().clone()
    }

    pub fn with<R>(&self, f: impl FnOnce(&HistoryWindow) -> R) -> R {
        f(&self.inner.read())
    }
}

/// Dual-thread variant of [`run_closed_loop`]: an execution thread streams
/// frames into the shared history and a monitor thread evaluates the switch
/// trigger after every frame. Results are identical to the single-threaded
/// version.
pub fn run_closed_loop_concurrent(
    frames: Vec<Frame>,
    seq: &PrimitiveSequence,
    policy: &SwitchPolicy,
) -> Result<Vec<SwitchEvent>, SwitchError> {
    let history = SharedHistory::new(policy.window.max(1));
    let active = AtomicUsize::new(0);
    let (tx, rx) = mpsc::sync_channel::<usize>(16);
    let (ack_tx, ack_rx) = mpsc::sync_channel::<()>(0);

    let events = thread::scope(|scope| {
        let exec_history = history.clone();
        scope.spawn(move || {
            for (t, frame) in frames.into_iter().enumerate() {
                exec_history.push(frame);
                if tx.send(t).is_err() {
                    break;
                }
                // Wait until the monitor has judged this frame so the next
                // action is produced under the right primitive.
                if ack_rx.recv().is_err() {
                    break;
                }
            }
        });

        let mut events = Vec::new();
        for t in rx {
            let current = active.load(Ordering::Acquire);
            let next = history.with(|w| next_primitive(w, current, seq, policy));
            if next != current {
                events.push(SwitchEvent {
                    frame: t,
                    from: seq.primitive(current),
                    to: seq.primitive(next),
                });
                active.store(next, Ordering::Release);
                if policy.reset_on_switch {
                    history.clear();
                }
            }
            if ack_tx.send(()).is_err() {
                break;
            }
        }
        events
    });

    let current = active.load(Ordering::Acquire);
    if current + 1 < seq.len() {
        return Err(SwitchError::StreamEnded {
            active: seq.primitive(current),
            pending: seq.primitives()[current + 1..].to_vec(),
            events,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use PrimitiveType::*;

    fn f(pos: [f64; 3], grip: f64, cmd: f64) -> Frame {
        Frame {
            state: ProprioState::new(pos, [0.0; 3], grip),
            action: ActionDelta::new([0.0; 3], [0.0; 3], cmd),
        }
    }

    #[test]
    fn push_and_evict() {
        let w = push_frame(
            HistoryWindow::new(10),
            ProprioState::new([0.0; 3], [0.0; 3], 0.0),
            ActionDelta::new([0.0; 3], [0.0; 3], 0.0),
        );
        assert_eq!(w.len(), 1);
        let mut w = HistoryWindow::new(10);
        for i in 0..11 {
            w.push(f([i as f64, 0.0, 0.0], 0.0, 0.0));
        }
        assert_eq!(w.len(), 10);
        assert_eq!(w.frames().next().unwrap().state.pos.x, 1.0);
    }

    #[test]
    fn ramp_total_uses_nine_deltas() {
        let mut w = HistoryWindow::new(10);
        for i in 0..10 {
            w.push(f([0.0, 0.0, 0.002 * i as f64], 0.0, 0.0));
        }
        assert_relative_eq!(w.stats().dz_total, 0.018, epsilon = 1e-12);
        assert_relative_eq!(w.stats().tail_dz, 0.008, epsilon = 1e-12);
    }

    #[test]
    fn short_window_never_switches() {
        let mut w = HistoryWindow::new(10);
        for i in 0..7 {
            w.push(f([0.0, 0.0, 0.01 * i as f64], 0.98, 1.0));
        }
        let policy = SwitchPolicy::default();
        for p in PrimitiveType::ALL {
            assert!(!check_switch(&w, p, &policy));
        }
    }

    #[test]
    fn grasp_switches_on_closed_rise() {
        // Closed and still for the head, then rising 0.0075/frame in the tail.
        let mut w = HistoryWindow::new(10);
        for i in 0..10 {
            let z = if i < 6 { 0.0 } else { 0.0075 * (i - 5) as f64 };
            w.push(f([0.3, 0.0, z], 0.98, 1.0));
        }
        assert!(w.stats().grip_range < 0.05);
        assert_relative_eq!(w.stats().tail_dz, 0.03, epsilon = 1e-12);
        assert!(check_switch(&w, Grasp, &SwitchPolicy::default()));
    }

    #[test]
    fn moving_tail_blocks_move_switch() {
        let mut w = HistoryWindow::new(10);
        for i in 0..10 {
            w.push(f([0.01 * i as f64, 0.0, 0.2], 0.98, 1.0));
        }
        assert!(w.stats().dxy_total > 0.08);
        assert_relative_eq!(w.stats().tail_dxy, 0.04, epsilon = 1e-12);
        assert!(!check_switch(&w, Move, &SwitchPolicy::default()));
    }

    #[test]
    fn last_primitive_is_sticky() {
        let seq = PrimitiveSequence::from_primitives(&[Move, Push]).unwrap();
        let mut w = HistoryWindow::new(10);
        for i in 0..10 {
            let x = 0.01 * i.min(5) as f64;
            w.push(f([x, 0.0, 0.0], 0.0, 0.0));
        }
        let policy = SwitchPolicy::default();
        assert!(check_switch(&w, Push, &policy));
        assert_eq!(next_primitive(&w, 1, &seq, &policy), 1);
        assert_eq!(next_primitive(&w, 0, &seq, &policy), 1);
    }

    #[test]
    fn single_primitive_emits_nothing() {
        let seq = PrimitiveSequence::from_primitives(&[Press]).unwrap();
        let frames = (0..40).map(|_| f([0.0; 3], 0.0, 0.0));
        assert_eq!(run_closed_loop(frames, &seq, &SwitchPolicy::default()), Ok(vec![]));
    }

    #[test]
    fn truncated_stream_reports_pending() {
        let seq = PrimitiveSequence::from_primitives(&[Grasp, Lift, Place]).unwrap();
        let frames: Vec<Frame> = (0..20).map(|_| f([0.0; 3], 0.0, 0.0)).collect();
        let err = run_closed_loop(frames.clone(), &seq, &SwitchPolicy::default()).unwrap_err();
        assert_eq!(
            err,
            SwitchError::StreamEnded {
                active: Grasp,
                pending: vec![Lift, Place],
                events: vec![]
            }
        );
        assert_eq!(
            run_closed_loop_concurrent(frames, &seq, &SwitchPolicy::default()).unwrap_err(),
            err
        );
    }

    #[test]
    fn shared_snapshot_matches_writer() {
        let shared = SharedHistory::new(4);
        for i in 0..6 {
            shared.push(f([i as f64, 0.0, 0.0], 0.0, 0.0));
        }
        let snap = shared.snapshot();
        assert_eq!(snap.len(), 4);
        assert_relative_eq!(snap.stats().dxy_total, 3.0);
    }
}
