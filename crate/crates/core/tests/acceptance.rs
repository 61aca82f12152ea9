//! Acceptance report: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

mod common;

use std::time::{Duration, Instant};

use primkit::library::{Library, NgramEmbedder};
use primkit::mcr::{canonicalize, ColorSlot, RoleMap};
use primkit::model::{Frame, PrimitiveSequence, PrimitiveType, Segment, Trajectory};
use primkit::planner::{fixture_pairs, plan, PlannerConfig};
use primkit::segmenter::{segment_boundaries, segment_trajectory, RuleTable, TerminationRule, ThresholdSet};
use primkit::switcher::{check_switch, run_closed_loop, HistoryWindow, SwitchPolicy, DEFAULT_WINDOW};
use primkit::synth::{generate, random_sequence, random_spec, synth_corpus, SplitMix64};
use primkit::SwitchError;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mcr_table() -> Outcome {
    let expected = [
        (PrimitiveType::Grasp, "Grasp the masked object with color_1"),
        (PrimitiveType::Lift, "Lift the object with color_1"),
        (PrimitiveType::Move, "Move to above the object with color_2"),
        (PrimitiveType::Place, "Place in the object with color_2"),
        (PrimitiveType::Push, "Push the object with color_1"),
        (PrimitiveType::Press, "Press the object with color_2"),
        (PrimitiveType::Pull, "Pull the object with color_1"),
        (PrimitiveType::Insert, "Insert into the area with color_1"),
        (PrimitiveType::Twist, "Twist the grasped object"),
        (PrimitiveType::Rotate, "Rotate the object with color_1"),
        (PrimitiveType::Tilt, "Tilt the object with color_1"),
    ];
    let roles: RoleMap = [
        (ColorSlot::Color1, "a".to_string()),
        (ColorSlot::Color2, "b".to_string()),
    ]
    .into();
    let matched = expected
        .iter()
        .filter(|(p, text)| canonicalize(*p, &roles).map(|c| c.text == *text).unwrap_or(false))
        .count();
    outcome(matched == 11, format!("{matched}/11 rows verbatim"))
}

fn fixture_plans() -> Outcome {
    let emb = NgramEmbedder::default();
    let pairs = fixture_pairs();
    let lib = Library::build(pairs.clone(), &emb);
    let cfg = PlannerConfig::default();
    let matched = pairs
        .iter()
        .filter(|(l, seq)| plan(l, &lib, &emb, None, None, &cfg).is_ok_and(|p| &p.sequence == seq))
        .count();
    outcome(
        matched == pairs.len(),
        format!("{matched}/{} fixture instructions", pairs.len()),
    )
}

fn grasp_exemplar() -> Outcome {
    let traj = common::grasp_exemplar();
    let rule = TerminationRule::new(PrimitiveType::Grasp);
    let first = (0..traj.len()).find(|&t| primkit::segmenter::evaluate_termination(&rule, &traj, t).unwrap_or(false));
    let pass = first.is_some_and(|t| t.abs_diff(40) <= 1);
    outcome(pass, format!("first true at {first:?}, target 40 +/- 1"))
}

/// Boundaries recovered within `tol` frames; failed trajectories count
/// all of their boundaries as missed.
fn recovered(sigma: f64, tol: usize) -> (usize, usize) {
    let rules = RuleTable::default();
    let mut hit = 0;
    let mut total = 0;
    for sample in synth_corpus(0, 200, sigma) {
        total += sample.boundaries.len();
        if let Ok(found) = segment_boundaries(&sample.trajectory, &sample.spec.sequence, &rules) {
            hit += found
                .iter()
                .zip(&sample.boundaries)
                .filter(|(a, b)| a.abs_diff(**b) <= tol)
                .count();
        }
    }
    (hit, total)
}

fn boundary_recovery() -> Outcome {
    let thr = ThresholdSet::default();
    let (h0, n0) = recovered(0.0, 5);
    let (h1, n1) = recovered(thr.eps_static / 3.0, 5);
    let pass = h0 == n0 && h1 as f64 >= 0.9 * n1 as f64;
    outcome(
        pass,
        format!(
            "sigma 0: {h0}/{n0}; sigma eps/3: {h1}/{n1} ({:.1}%)",
            100.0 * h1 as f64 / n1 as f64
        ),
    )
}

fn coherence() -> Outcome {
    let rules = RuleTable::default();
    let policy = SwitchPolicy::default();
    let mut transitions = 0;
    let mut bad = Vec::new();
    for sample in synth_corpus(0, 200, 0.0) {
        let seq = &sample.spec.sequence;
        let offline = match segment_boundaries(&sample.trajectory, seq, &rules) {
            Ok(b) => b,
            Err(e) => {
                bad.push(format!("{}: offline {e}", sample.spec.seed));
                continue;
            }
        };
        let events = match run_closed_loop(sample.trajectory.frames.clone(), seq, &policy) {
            Ok(e) => e,
            Err(SwitchError::StreamEnded { events, .. }) => events,
        };
        transitions += offline.len();
        let prims = seq.primitives();
        let ordered = events.len() == offline.len()
            && events
                .iter()
                .enumerate()
                .all(|(i, e)| e.from == prims[i] && e.to == prims[i + 1]);
        let timely = events
            .iter()
            .zip(&offline)
            .all(|(e, &t)| e.frame >= t && e.frame <= t + DEFAULT_WINDOW);
        if !ordered || !timely {
            bad.push(format!("seed {}", sample.spec.seed));
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "{transitions} transitions, {} trajectories off: {:?}",
            bad.len(),
            bad.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn frame_strategy() -> impl Strategy<Value = Frame> {
    (
        prop::array::uniform3(-2.0f64..2.0),
        prop::array::uniform3(-3.0f64..3.0),
        0.0f64..=1.0,
        prop::array::uniform3(-0.1f64..0.1),
        prop::bool::ANY,
    )
        .prop_map(|(p, o, g, d, c)| Frame {
            state: primkit::model::ProprioState::new(p, o, g),
            action: primkit::model::ActionDelta::new(d, [0.0; 3], if c { 1.0 } else { -1.0 }),
        })
}

fn short_window_guard() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let policy = SwitchPolicy::default();
    let strategy = (prop::collection::vec(frame_strategy(), 0..DEFAULT_WINDOW), 0usize..11);
    let result = runner.run(&strategy, |(frames, p)| {
        let mut w = HistoryWindow::new(DEFAULT_WINDOW);
        for f in frames {
            w.push(f);
        }
        prop_assert!(!check_switch(&w, PrimitiveType::ALL[p], &policy));
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, "10000 cases, no switch below a full window"),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn retrieval() -> Outcome {
    let emb = NgramEmbedder::default();
    let lib = Library::build(fixture_pairs(), &emb);
    let mut misses = 0;
    for e in lib.entries() {
        let top = lib.retrieve_topk(&e.instruction, 1, &emb, None);
        if top[0].0.entry_id != e.entry_id || (top[0].1 - 1.0).abs() > 1e-9 {
            misses += 1;
        }
    }
    let reloaded = Library::from_json(&lib.to_json(), &emb);
    let same_rankings = reloaded.as_ref().is_ok_and(|back| {
        lib.entries().iter().all(|e| {
            let a: Vec<_> = lib
                .retrieve_topk(&e.instruction, 5, &emb, None)
                .iter()
                .map(|(x, s)| (x.entry_id.clone(), *s))
                .collect();
            let b: Vec<_> = back
                .retrieve_topk(&e.instruction, 5, &emb, None)
                .iter()
                .map(|(x, s)| (x.entry_id.clone(), *s))
                .collect();
            a == b
        })
    });
    outcome(
        misses == 0 && same_rankings,
        format!(
            "{} entries, {misses} self-retrieval misses, round-trip rankings equal: {same_rankings}",
            lib.len()
        ),
    )
}

fn golden_segments() -> Outcome {
    let (t1, s1) = common::golden_outputs();
    let (t2, s2) = common::golden_outputs();
    let digest = common::sha256_hex(&s1);
    let pass = s1 == s2
        && t1 == t2
        && digest == common::GOLDEN_SEGMENTS_SHA256
        && common::sha256_hex(&t1) == common::GOLDEN_TRAJECTORIES_SHA256;
    outcome(pass, format!("segments sha256 {}", &digest[..16]))
}

fn partitions(traj: &Trajectory, segs: &[Segment]) -> bool {
    segs.first().is_some_and(|s| s.t_start == 0)
        && segs.last().is_some_and(|s| s.t_end == traj.len())
        && segs.windows(2).all(|w| w[0].t_end == w[1].t_start)
        && segs.iter().all(|s| s.t_start < s.t_end)
}

fn partition_fuzz() -> Outcome {
    let rules = RuleTable::default();
    let mut rng = SplitMix64::new(0x5EED);
    let mut succeeded = 0;
    let mut broken = 0;
    for i in 0..1000u64 {
        let sigma = [0.0, 0.0005, 0.0015, 0.003][(i % 4) as usize];
        let spec = random_spec(10_000 + i, sigma);
        let (traj, _) = generate(&spec).expect("random specs are valid");
        let plan = if i % 2 == 0 {
            spec.sequence.clone()
        } else {
            let len = rng.range(1, 6);
            random_sequence(&mut rng, len)
        };
        if let Ok(segs) = segment_trajectory(&traj, &plan, &rules) {
            succeeded += 1;
            if !partitions(&traj, &segs) || segs.len() != plan.len() {
                broken += 1;
            }
        }
    }
    outcome(
        broken == 0,
        format!("{succeeded}/1000 segmented, {broken} without an exact partition"),
    )
}

fn throughput() -> Outcome {
    let policy = SwitchPolicy::default();
    let mut calls = 0u32;
    let mut elapsed = Duration::ZERO;
    for sample in synth_corpus(0, 50, 0.001) {
        let seq: &PrimitiveSequence = &sample.spec.sequence;
        let mut w = HistoryWindow::new(DEFAULT_WINDOW);
        let mut active = 0;
        for f in &sample.trajectory.frames {
            w.push(*f);
            let start = Instant::now();
            let fired = check_switch(&w, seq.primitive(active), &policy);
            elapsed += start.elapsed();
            calls += 1;
            if fired && active + 1 < seq.len() {
                active += 1;
                w.clear();
            }
        }
    }
    let per_call = elapsed / calls;
    outcome(
        per_call < Duration::from_micros(50),
        format!("{per_call:?} per frame over {calls} frames"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("fixture fidelity: MCR table", mcr_table),
        ("fixture fidelity: plans", fixture_plans),
        ("grasp exemplar split point", grasp_exemplar),
        ("boundary recovery oracle", boundary_recovery),
        ("offline/online coherence", coherence),
        ("short-window guard", short_window_guard),
        ("retrieval determinism and self-similarity", retrieval),
        ("segmentation determinism (golden hash)", golden_segments),
        ("partition invariant fuzz", partition_fuzz),
        ("check_switch throughput", throughput),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {name}: {} [{:.2?}]", o.detail, start.elapsed());
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
