//! JSON Lines readers and writers for trajectories, plans, segments and
//! switch events.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::mcr::{LabelGrid, ObjectPair, RleGrid};
use crate::model::{Frame, PrimitiveSequence, Segment, Trajectory};
use crate::switcher::SwitchEvent;

/// Formats a finite number with at least six significant digits while
/// keeping the shortest exact representation when it is longer.
pub fn format_number(x: f64) -> Result<String, FormatError> {
    if !x.is_finite() {
        return Err(FormatError::NonFinite);
    }
    let shortest = format!("{x:?}");
    let (mantissa, exponent) = match shortest.find(['e', 'E']) {
        Some(i) => (&shortest[..i], &shortest[i..]),
        None => (shortest.as_str(), ""),
    };
    let mut mantissa = mantissa.to_string();
    if !mantissa.contains('.') {
        mantissa.push_str(".0");
    }
    let digits: Vec<char> = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let significant = match digits.iter().position(|&c| c != '0') {
        Some(first) => digits.len() - first,
        None => digits.len(),
    };
    for _ in significant..6 {
        mantissa.push('0');
    }
    Ok(format!("{mantissa}{exponent}"))
}

#[derive(Deserialize)]
struct TrajectoryLine {
    source_id: String,
    instruction: String,
    frames: Vec<Vec<f64>>,
    #[serde(default)]
    masks: Option<Vec<RleGrid>>,
}

fn line_error(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Line {
        line,
        message: message.into(),
    }
}

/// Parses one JSON line into a trajectory. `line` is used in diagnostics.
pub fn parse_trajectory_line(text: &str, line: usize) -> Result<Trajectory, FormatError> {
    let raw: TrajectoryLine = serde_json::from_str(text).map_err(|e| line_error(line, e.to_string()))?;
    let frames = raw
        .frames
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let arr: &[f64; 14] = row
                .as_slice()
                .try_into()
                .map_err(|_| line_error(line, format!("frame {i} has {} numbers, expected 14", row.len())))?;
            Ok(Frame::from_row(arr))
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let masks = raw
        .masks
        .map(|ms| {
            ms.iter()
                .enumerate()
                .map(|(i, m)| LabelGrid::from_rle(m).map_err(|e| line_error(line, format!("mask {i}: {e}"))))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    Ok(Trajectory {
        source_id: raw.source_id,
        instruction: raw.instruction,
        frames,
        masks,
    })
}

/// Streams trajectories from JSON Lines, skipping blank lines. Line numbers
/// in errors are 1-based.
pub fn read_trajectories<R: BufRead>(reader: R) -> impl Iterator<Item = Result<Trajectory, FormatError>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(FormatError::Io(e))),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(parse_trajectory_line(&l, i + 1)),
    })
}

/// Serializes a trajectory as a single JSON line (no trailing newline).
pub fn trajectory_to_line(traj: &Trajectory) -> Result<String, FormatError> {
    let mut out = String::with_capacity(64 + traj.frames.len() * 160);
    out.push_str("{\"source_id\":");
    out.push_str(&serde_json::to_string(&traj.source_id).expect("string serializes"));
    out.push_str(",\"instruction\":");
    out.push_str(&serde_json::to_string(&traj.instruction).expect("string serializes"));
    out.push_str(",\"frames\":[");
    for (i, frame) in traj.frames.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        for (j, v) in frame.to_row().iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_number(*v)?);
        }
        out.push(']');
    }
    out.push(']');
    if let Some(masks) = &traj.masks {
        let rle: Vec<RleGrid> = masks.iter().map(LabelGrid::to_rle).collect();
        let _ = write!(
            out,
            ",\"masks\":{}",
            serde_json::to_string(&rle).expect("masks serialize")
        );
    }
    out.push('}');
    Ok(out)
}

pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> Result<(), FormatError> {
    let line = trajectory_to_line(traj)?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Plan-file record: which plan (and optional object pairs) applies to a
/// trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub source_id: String,
    pub sequence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<(String, Option<String>)>>,
}

impl PlanRecord {
    pub fn new(source_id: impl Into<String>, seq: &PrimitiveSequence) -> Self {
        Self {
            source_id: source_id.into(),
            sequence: seq.labels(),
            objects: None,
        }
    }

    pub fn parse_sequence(&self) -> Result<PrimitiveSequence, crate::error::ModelError> {
        PrimitiveSequence::parse(&self.sequence)
    }

    pub fn object_pairs(&self) -> Option<Vec<ObjectPair>> {
        self.objects.as_ref().map(|o| {
            o.iter()
                .map(|(m, t)| ObjectPair {
                    manipulated: m.clone(),
                    target: t.clone(),
                })
                .collect()
        })
    }
}

pub fn read_plan_records<R: BufRead>(reader: R) -> Result<Vec<PlanRecord>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PlanRecord = serde_json::from_str(&line).map_err(|e| line_error(i + 1, e.to_string()))?;
        rec.parse_sequence().map_err(|e| line_error(i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Serialize)]
struct SegmentRecord<'a> {
    source_id: &'a str,
    primitive: &'a str,
    t_start: usize,
    t_end: usize,
    canonical: &'a str,
}

/// One segments-file line.
pub fn segment_to_line(source_id: &str, seg: &Segment) -> String {
    let record = SegmentRecord {
        source_id,
        primitive: seg.primitive.name(),
        t_start: seg.t_start,
        t_end: seg.t_end,
        canonical: &seg.canonical.text,
    };
    serde_json::to_string(&record).expect("segment serializes")
}

pub fn write_segments<W: Write>(mut w: W, source_id: &str, segments: &[Segment]) -> std::io::Result<()> {
    for seg in segments {
        writeln!(w, "{}", segment_to_line(source_id, seg))?;
    }
    Ok(())
}

pub fn event_to_line(event: &SwitchEvent) -> String {
    serde_json::to_string(event).expect("event serializes")
}

pub fn write_events<W: Write>(mut w: W, events: &[SwitchEvent]) -> std::io::Result<()> {
    for e in events {
        writeln!(w, "{}", event_to_line(e))?;
    }
    Ok(())
}
