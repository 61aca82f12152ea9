use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use primkit::io::{write_segments, PlanRecord};
use primkit::library::Library;
use primkit::model::{validate_trajectory, PrimitiveSequence};
use primkit::planner::{fixture_pairs, fixture_plans, plan, HttpReasoner, Reasoner};
use primkit::segmenter::{disassemble_corpus, segment_boundaries, CorpusEntry};
use primkit::switcher::{run_closed_loop, SwitchEvent};
use primkit::synth::{generate, random_spec, SynthSpec};
use primkit::{PlanError, SwitchError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{DisassembleArgs, LibraryBuildArgs, PlanArgs, ReplayArgs, Settings, SynthArgs, ValidateArgs};
use crate::input::{line_with_plan, open_input, open_output, read_records, write_report, PlanResolver};

pub const EXIT_OK: u8 = 0;
pub const EXIT_EMPTY: u8 = 2;
pub const EXIT_STREAM_ENDED: u8 = 3;

fn parse_grid_size(text: &str) -> Result<(usize, usize)> {
    let (w, h) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("mask size `{text}` is not WxH"))?;
    let size = (w.trim().parse()?, h.trim().parse()?);
    if size.0 == 0 || size.1 == 0 {
        bail!("mask size must be positive");
    }
    Ok(size)
}

fn synth_specs(args: &SynthArgs) -> Result<Vec<SynthSpec>> {
    let masks = args.masks.as_deref().map(parse_grid_size).transpose()?;
    let fixed = args.plan.as_deref().map(PrimitiveSequence::parse_csv).transpose()?;
    let durations = args
        .durations
        .as_deref()
        .map(|csv| {
            csv.split(',')
                .map(|d| d.trim().parse::<usize>().with_context(|| format!("duration `{d}`")))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    (0..args.count as u64)
        .map(|i| {
            let seed = args.seed + i;
            let mut spec = match &fixed {
                Some(seq) => {
                    let d = durations.clone().unwrap_or_else(|| vec![45; seq.len()]);
                    SynthSpec::new(seq.clone(), d).with_noise(args.sigma, seed)
                }
                None => random_spec(seed, args.sigma),
            };
            spec.masks = masks;
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

pub fn synth(args: &SynthArgs) -> Result<u8> {
    let specs = synth_specs(args)?;
    let rendered = specs.par_iter().map(generate).collect::<Result<Vec<_>, _>>()?;
    let mut out = open_output(&args.out)?;
    let mut truth = Vec::new();
    let mut plans = Vec::new();
    for (spec, (traj, boundaries)) in specs.iter().zip(&rendered) {
        writeln!(out, "{}", line_with_plan(traj, &spec.sequence)?)?;
        truth.push(json!({
            "source_id": traj.source_id,
            "seed": spec.seed,
            "noise_sigma": spec.noise_sigma,
            "sequence": spec.sequence.labels(),
            "durations": spec.durations,
            "boundaries": boundaries,
        }));
        plans.push(PlanRecord::new(&traj.source_id, &spec.sequence));
    }
    out.flush()?;
    if let Some(path) = &args.boundaries {
        std::fs::write(path, serde_json::to_string_pretty(&truth)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.plans_out {
        let mut w = open_output(path)?;
        for p in &plans {
            writeln!(w, "{}", serde_json::to_string(p)?)?;
        }
        w.flush()?;
    }
    log::info!("generated {} trajectories", rendered.len());
    Ok(EXIT_OK)
}

pub fn disassemble(args: &DisassembleArgs, settings: &Settings) -> Result<u8> {
    let resolver = PlanResolver::new(&args.plans)?;
    let records = read_records(open_input(&args.input)?)?;
    let corpus = records
        .iter()
        .map(|rec| {
            let (plan, objects) = resolver.resolve(rec)?;
            Ok(CorpusEntry {
                trajectory: rec.trajectory.clone(),
                plan,
                objects,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (samples, stats) = disassemble_corpus(&corpus, &settings.rules);

    if args.passthrough {
        let mut out = open_output("-".as_ref())?;
        for rec in &records {
            writeln!(out, "{}", rec.raw)?;
        }
        out.flush()?;
    }
    let seg_path = args.segments.clone().unwrap_or_else(|| "-".into());
    let mut seg_out = open_output(&seg_path)?;
    for s in &samples {
        write_segments(&mut seg_out, &s.source_id, std::slice::from_ref(&s.segment))?;
    }
    seg_out.flush()?;

    for f in &stats.failures {
        log::warn!("discarded {} (#{}): {}", f.source_id, f.index, f.error);
    }
    let mut report = serde_json::to_value(&stats)?;
    report["config"] = serde_json::to_value(&settings.run)?;
    write_report(args.stats.as_deref(), &report)?;
    Ok(if stats.samples == 0 { EXIT_EMPTY } else { EXIT_OK })
}

#[derive(Deserialize)]
struct PairLine {
    instruction: String,
    sequence: Vec<String>,
}

fn read_pairs(reader: impl BufRead) -> Result<Vec<(String, PrimitiveSequence)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PairLine = serde_json::from_str(&line).map_err(|e| anyhow!("line {}: {e}", i + 1))?;
        let seq = PrimitiveSequence::parse(&p.sequence).map_err(|e| anyhow!("line {}: {e}", i + 1))?;
        out.push((p.instruction, seq));
    }
    Ok(out)
}

pub fn library_build(args: &LibraryBuildArgs, settings: &Settings) -> Result<u8> {
    let mut pairs = Vec::new();
    if args.fixtures {
        pairs.extend(
            fixture_plans()
                .into_iter()
                .filter(|f| args.suite.is_empty() || args.suite.contains(&f.suite))
                .map(|f| Ok((f.instruction, PrimitiveSequence::parse(&f.sequence)?)))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if let Some(path) = &args.pairs {
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        pairs.extend(read_pairs(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?);
    }
    let input_pairs = pairs.len();
    let lib = Library::build(pairs, &settings.run.embedder());
    lib.save(&args.out)?;
    write_report(
        None,
        &json!({
            "config": settings.run,
            "input_pairs": input_pairs,
            "entries": lib.len(),
            "out": args.out,
        }),
    )?;
    Ok(EXIT_OK)
}

pub fn plan_cmd(args: &PlanArgs, settings: &Settings) -> Result<u8> {
    let embedder = settings.run.embedder();
    let library = match &args.library {
        Some(path) => Library::load(path, &embedder).with_context(|| format!("loading {}", path.display()))?,
        None => Library::build(fixture_pairs(), &embedder),
    };
    let reasoner = settings.run.reasoner_url.as_ref().map(|url| {
        let mut r = HttpReasoner::new(url.clone());
        r.timeout = Duration::from_secs_f64(settings.run.reasoner_timeout_secs);
        r
    });
    let result = plan(
        &args.instruction,
        &library,
        &embedder,
        reasoner.as_ref().map(|r| r as &dyn Reasoner),
        args.image_ref.as_deref(),
        &settings.run.planner(),
    );
    match result {
        Ok(p) => {
            let rejected: Vec<String> = p.rejected.iter().map(ToString::to_string).collect();
            println!(
                "{}",
                json!({
                    "sequence": p.sequence.labels(),
                    "provenance": p.provenance,
                    "top_similarity": p.top_similarity,
                    "rejected": rejected,
                })
            );
            Ok(EXIT_OK)
        }
        Err(e @ PlanError::NoPlan(_)) => {
            eprintln!("{e}");
            Ok(EXIT_EMPTY)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct EventLine<'a> {
    source_id: &'a str,
    #[serde(flatten)]
    event: SwitchEvent,
}

struct ReplayOutcome {
    source_id: String,
    events: Vec<SwitchEvent>,
    ended: Option<serde_json::Value>,
    offline: Result<Vec<usize>, String>,
}

pub fn replay(args: &ReplayArgs, settings: &Settings) -> Result<u8> {
    let resolver = PlanResolver::new(&args.plans)?;
    let records = read_records(open_input(&args.input)?)?;
    let plans = records
        .iter()
        .map(|r| resolver.resolve(r).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    let policy = settings.run.policy();
    let outcomes: Vec<ReplayOutcome> = records
        .par_iter()
        .zip(&plans)
        .map(|(rec, seq)| {
            let traj = &rec.trajectory;
            let offline = segment_boundaries(traj, seq, &settings.rules).map_err(|e| e.to_string());
            let (events, ended) = match run_closed_loop(traj.frames.iter().copied(), seq, &policy) {
                Ok(events) => (events, None),
                Err(SwitchError::StreamEnded {
                    active,
                    pending,
                    events,
                }) => {
                    let info = json!({"source_id": traj.source_id, "active": active, "pending": pending});
                    (events, Some(info))
                }
            };
            ReplayOutcome {
                source_id: traj.source_id.clone(),
                events,
                ended,
                offline,
            }
        })
        .collect();

    let mut out = open_output(&args.events)?;
    let mut histogram: BTreeMap<i64, usize> = BTreeMap::new();
    let mut outside = Vec::new();
    let mut stream_ended = Vec::new();
    let mut offline_failures = Vec::new();
    let mut event_count = 0;
    for o in &outcomes {
        for e in &o.events {
            writeln!(
                out,
                "{}",
                serde_json::to_string(&EventLine {
                    source_id: &o.source_id,
                    event: *e
                })?
            )?;
        }
        event_count += o.events.len();
        stream_ended.extend(o.ended.clone());
        match &o.offline {
            Ok(boundaries) => {
                for (i, (e, b)) in o.events.iter().zip(boundaries).enumerate() {
                    let lag = e.frame as i64 - *b as i64;
                    *histogram.entry(lag).or_default() += 1;
                    if lag < 0 || lag > settings.run.window as i64 {
                        outside.push(json!({"source_id": o.source_id, "transition": i, "lag": lag}));
                    }
                }
            }
            Err(e) => offline_failures.push(json!({"source_id": o.source_id, "error": e})),
        }
    }
    out.flush()?;
    let lag_histogram: BTreeMap<String, usize> = histogram.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    write_report(
        args.report.as_deref(),
        &json!({
            "config": settings.run,
            "trajectories": outcomes.len(),
            "events": event_count,
            "lag_histogram": lag_histogram,
            "lags_outside_window": outside,
            "stream_ended": stream_ended,
            "offline_failures": offline_failures,
        }),
    )?;
    Ok(if stream_ended.is_empty() {
        EXIT_OK
    } else {
        EXIT_STREAM_ENDED
    })
}

pub fn validate(args: &ValidateArgs) -> Result<u8> {
    let records = read_records(open_input(&args.input)?)?;
    let reports: Vec<_> = records.par_iter().map(|r| validate_trajectory(&r.trajectory)).collect();
    let mut out = open_output("-".as_ref())?;
    let mut invalid = 0;
    for (rec, report) in records.iter().zip(&reports) {
        invalid += usize::from(!report.is_valid());
        let line = json!({
            "source_id": rec.trajectory.source_id,
            "line": rec.line,
            "valid": report.is_valid(),
            "violations": report.violations,
        });
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(if invalid == 0 { EXIT_OK } else { EXIT_EMPTY })
}
