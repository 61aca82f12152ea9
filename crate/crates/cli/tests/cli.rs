use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn primkit(args: &[&str], stdin: Option<&[u8]>, dir: &Path) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_primkit"))
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or_default()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn synth_fixture(dir: &Path, count: &str) -> Vec<u8> {
    let out = primkit(
        &[
            "synth",
            "--count",
            count,
            "--plan",
            "grasp,move,place",
            "--durations",
            "40,55,25",
        ],
        None,
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_boundaries_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = primkit(
        &[
            "synth",
            "--plan",
            "grasp,move,place",
            "--durations",
            "40,55,25",
            "--boundaries",
            "b.json",
            "--plans-out",
            "p.jsonl",
        ],
        None,
        dir.path(),
    );
    assert!(out.status.success());
    let truth = read_json(&dir.path().join("b.json"));
    assert_eq!(truth[0]["boundaries"], serde_json::json!([40, 95]));
    let line: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["frames"].as_array().unwrap().len(), 120);
    let plans = std::fs::read_to_string(dir.path().join("p.jsonl")).unwrap();
    assert!(plans.contains("\"sequence\":[\"grasp\",\"move\",\"place\"]"));
}

#[test]
fn pipeline_chains_through_standard_streams() {
    let dir = tempfile::tempdir().unwrap();
    let trajectories = synth_fixture(dir.path(), "10");
    let dis = primkit(
        &[
            "disassemble",
            "--segments",
            "seg.jsonl",
            "--stats",
            "stats.json",
            "--passthrough",
        ],
        Some(&trajectories),
        dir.path(),
    );
    assert_eq!(dis.status.code(), Some(0));
    assert_eq!(dis.stdout, trajectories);
    let segments = std::fs::read_to_string(dir.path().join("seg.jsonl")).unwrap();
    assert_eq!(segments.lines().count(), 30);
    let stats = read_json(&dir.path().join("stats.json"));
    assert_eq!(
        stats["per_primitive"],
        serde_json::json!({"grasp": 10, "move": 10, "place": 10})
    );
    assert_eq!(stats["discards"], 0);
    assert_eq!(stats["config"]["window"], 10);

    let rep = primkit(&["replay", "--report", "report.json"], Some(&dis.stdout), dir.path());
    assert_eq!(rep.status.code(), Some(0));
    assert_eq!(String::from_utf8(rep.stdout).unwrap().lines().count(), 20);
    let report = read_json(&dir.path().join("report.json"));
    for (lag, _) in report["lag_histogram"].as_object().unwrap() {
        let lag: i64 = lag.parse().unwrap();
        assert!((0..=10).contains(&lag), "{lag}");
    }
    assert!(report["lags_outside_window"].as_array().unwrap().is_empty());
}

#[test]
fn unsatisfiable_trajectory_is_discarded() {
    let dir = tempfile::tempdir().unwrap();
    let mut input = synth_fixture(dir.path(), "2");
    let still = primkit(
        &["synth", "--plan", "press,push", "--durations", "40,40"],
        None,
        dir.path(),
    );
    input.extend(still.stdout);
    let out = primkit(
        &["disassemble", "--plan", "grasp,move,place", "--stats", "stats.json"],
        Some(&input),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let stats = read_json(&dir.path().join("stats.json"));
    assert_eq!(stats["discards"], 1);
    assert_eq!(stats["samples"], 6);
}

#[test]
fn disassemble_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth_fixture(dir.path(), "1");
    let missing = primkit(&["disassemble", "--plans", "nope.jsonl"], Some(&input), dir.path());
    assert_eq!(missing.status.code(), Some(1));

    let bad = primkit(
        &["disassemble"],
        Some(b"{\"source_id\":\"a\",\"instruction\":\"b\",\"frames\":[[1]]}\n"),
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 1"));

    let empty = primkit(
        &["disassemble", "--plan", "insert,twist,tilt", "--stats", "s.json"],
        Some(&input),
        dir.path(),
    );
    assert_eq!(empty.status.code(), Some(2));
}

#[test]
fn replay_truncated_stream_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth_fixture(dir.path(), "1");
    let mut line: Value = serde_json::from_slice(&input).unwrap();
    line["frames"].as_array_mut().unwrap().truncate(60);
    let text = format!("{line}\n");
    let out = primkit(&["replay", "--report", "r.json"], Some(text.as_bytes()), dir.path());
    assert_eq!(out.status.code(), Some(3));
    let report = read_json(&dir.path().join("r.json"));
    assert_eq!(report["stream_ended"][0]["active"], "move");
}

#[test]
fn replay_single_primitive_plan_has_no_events() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth_fixture(dir.path(), "2");
    let out = primkit(&["replay", "--plan", "grasp"], Some(&input), dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn plan_command_provenance_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = primkit(&["plan", "put the bowl on the plate"], None, dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["sequence"], serde_json::json!(["grasp", "move", "place"]));
    assert_eq!(v["provenance"], "retrieved");

    let none = primkit(&["plan", "juggle three flaming torches"], None, dir.path());
    assert_eq!(none.status.code(), Some(2));

    let down = primkit(
        &[
            "plan",
            "pick up the mug and put it in the basket",
            "--reasoner-url",
            "http://127.0.0.1:9",
            "--tau-copy",
            "1.5",
        ],
        None,
        dir.path(),
    );
    assert_eq!(down.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&down.stdout).unwrap();
    assert_eq!(v["provenance"], "template");
    assert_eq!(v["sequence"], serde_json::json!(["grasp", "move", "place"]));
}

#[test]
fn library_build_then_plan_from_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("pairs.jsonl"),
        "{\"instruction\":\"wipe the table\",\"sequence\":[\"grasp\",\"push\"]}\n",
    )
    .unwrap();
    let build = primkit(
        &["library", "build", "--pairs", "pairs.jsonl", "--out", "lib.json"],
        None,
        dir.path(),
    );
    assert_eq!(build.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&build.stderr).unwrap();
    assert_eq!(report["entries"], 1);
    let out = primkit(&["plan", "Wipe the  table", "--library", "lib.json"], None, dir.path());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["sequence"], serde_json::json!(["grasp", "push"]));

    let fixtures = primkit(
        &[
            "library",
            "build",
            "--fixtures",
            "--suite",
            "libero-goal",
            "--out",
            "goal.json",
        ],
        None,
        dir.path(),
    );
    let report: Value = serde_json::from_slice(&fixtures.stderr).unwrap();
    assert_eq!(report["entries"], 10);
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let good = synth_fixture(dir.path(), "1");
    let ok = primkit(&["validate"], Some(&good), dir.path());
    assert_eq!(ok.status.code(), Some(0));

    let mut line: Value = serde_json::from_slice(&good).unwrap();
    line["frames"][3][6] = serde_json::json!(1.7);
    let text = format!("{line}\n");
    let bad = primkit(&["validate"], Some(text.as_bytes()), dir.path());
    assert_eq!(bad.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(v["violations"][0]["kind"], "grip_out_of_range");
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"window": 12, "thresholds": {"thr_move": 0.03}}"#,
    )
    .unwrap();
    let input = synth_fixture(dir.path(), "1");
    let out = primkit(
        &[
            "--config",
            "cfg.json",
            "disassemble",
            "--window",
            "14",
            "--stats",
            "s.json",
        ],
        Some(&input),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let stats = read_json(&dir.path().join("s.json"));
    assert_eq!(stats["config"]["window"], 14);
    assert_eq!(stats["config"]["thresholds"]["thr_move"], 0.03);

    std::fs::write(dir.path().join("bad.json"), r#"{"windw": 12}"#).unwrap();
    let bad = primkit(&["--config", "bad.json", "disassemble"], Some(&input), dir.path());
    assert_eq!(bad.status.code(), Some(1));
}
