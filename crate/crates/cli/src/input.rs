use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use primkit::io::{parse_trajectory_line, read_plan_records, trajectory_to_line};
use primkit::mcr::ObjectPair;
use primkit::model::{PrimitiveSequence, Trajectory};
use serde::Deserialize;

use crate::args::PlanSource;

fn is_std(path: &Path) -> bool {
    path.as_os_str() == "-"
}

pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if is_std(path) {
        return Ok(Box::new(BufReader::new(io::stdin().lock())));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(file)))
}

pub fn open_output(path: &Path) -> Result<Box<dyn Write>> {
    if is_std(path) {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

/// Writes a JSON document to `path`, or to standard error when absent.
pub fn write_report(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            eprintln!("{text}");
            Ok(())
        }
    }
}

/// Plan hints that may ride along on a trajectory line.
#[derive(Deserialize, Default)]
struct Inline {
    #[serde(default)]
    plan: Option<Vec<String>>,
    #[serde(default)]
    objects: Option<Vec<(String, Option<String>)>>,
}

/// A parsed input line with its raw text and any inline plan.
pub struct InputRecord {
    pub line: usize,
    pub raw: String,
    pub trajectory: Trajectory,
    inline_plan: Option<Vec<String>>,
    inline_objects: Option<Vec<ObjectPair>>,
}

/// Reads all trajectories, failing on the first malformed line.
pub fn read_records(reader: impl BufRead) -> Result<Vec<InputRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let raw = line.context("reading trajectory input")?;
        if raw.trim().is_empty() {
            continue;
        }
        let trajectory = parse_trajectory_line(&raw, i + 1)?;
        let inline: Inline = serde_json::from_str(&raw).map_err(|e| anyhow!("line {}: {e}", i + 1))?;
        out.push(InputRecord {
            line: i + 1,
            raw,
            trajectory,
            inline_plan: inline.plan,
            inline_objects: inline.objects.map(|o| {
                o.into_iter()
                    .map(|(m, t)| ObjectPair {
                        manipulated: m,
                        target: t,
                    })
                    .collect()
            }),
        });
    }
    Ok(out)
}

/// Resolves one plan (and optional object pairs) per record.
pub struct PlanResolver {
    fixed: Option<PrimitiveSequence>,
    by_source: HashMap<String, (PrimitiveSequence, Option<Vec<ObjectPair>>)>,
}

impl PlanResolver {
    pub fn new(source: &PlanSource) -> Result<Self> {
        let fixed = source
            .plan
            .as_deref()
            .map(PrimitiveSequence::parse_csv)
            .transpose()
            .context("parsing --plan")?;
        let mut by_source = HashMap::new();
        if let Some(path) = &source.plans {
            let file = File::open(path).with_context(|| format!("opening plans file {}", path.display()))?;
            let records =
                read_plan_records(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?;
            for r in records {
                let seq = r.parse_sequence()?;
                by_source.insert(r.source_id.clone(), (seq, r.object_pairs()));
            }
        }
        Ok(Self { fixed, by_source })
    }

    pub fn resolve(&self, rec: &InputRecord) -> Result<(PrimitiveSequence, Option<Vec<ObjectPair>>)> {
        if let Some(seq) = &self.fixed {
            return Ok((seq.clone(), rec.inline_objects.clone()));
        }
        if let Some((seq, objects)) = self.by_source.get(&rec.trajectory.source_id) {
            return Ok((seq.clone(), objects.clone().or_else(|| rec.inline_objects.clone())));
        }
        if let Some(labels) = &rec.inline_plan {
            let seq = PrimitiveSequence::parse(labels).map_err(|e| anyhow!("line {}: {e}", rec.line))?;
            return Ok((seq, rec.inline_objects.clone()));
        }
        bail!(
            "line {}: no plan for `{}` (use --plan, --plans or an inline \"plan\" key)",
            rec.line,
            rec.trajectory.source_id
        )
    }
}

/// Serializes a trajectory with its plan embedded, so downstream commands
/// need no separate plans file.
pub fn line_with_plan(traj: &Trajectory, plan: &PrimitiveSequence) -> Result<String> {
    let mut line = trajectory_to_line(traj)?;
    line.pop();
    line.push_str(",\"plan\":");
    line.push_str(&serde_json::to_string(&plan.labels())?);
    line.push('}');
    Ok(line)
}
