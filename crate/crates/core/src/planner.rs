//! Plan synthesis: retrieval copy, optional external reasoner, keyword
//! templates, tried in that order.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::library::{Embedder, Library};
use crate::model::{PrimitiveSequence, PrimitiveType};

pub const DEFAULT_TAU_COPY: f64 = 0.95;
pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_MAX_PLAN_LEN: usize = 12;
pub const DEFAULT_REASONER_TIMEOUT: Duration = Duration::from_secs(30);

/// Instruction -> plan table transcribed from published benchmark tables.
pub const TASK_PLANS_JSON: &str = include_str!("../resources/task_plans.json");

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct FixturePlan {
    pub suite: String,
    pub instruction: String,
    pub sequence: Vec<String>,
}

#[derive(Deserialize)]
struct FixtureFile {
    entries: Vec<FixturePlan>,
}

/// All bundled fixture rows, in file order.
pub fn fixture_plans() -> Vec<FixturePlan> {
    let file: FixtureFile = serde_json::from_str(TASK_PLANS_JSON).expect("bundled fixture plans are well formed");
    file.entries
}

/// Fixture rows as parsed (instruction, sequence) pairs.
pub fn fixture_pairs() -> Vec<(String, PrimitiveSequence)> {
    fixture_plans()
        .into_iter()
        .map(|f| {
            let seq = PrimitiveSequence::parse(&f.sequence).expect("fixture sequences use the alphabet");
            (f.instruction, seq)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Retrieved,
    External,
    Template,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveDef {
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub instruction: String,
    pub sequence: Vec<String>,
}

/// Body of `POST /v1/plan`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub instruction: String,
    pub primitives: Vec<PrimitiveDef>,
    pub exemplars: Vec<Exemplar>,
    pub image_ref: Option<String>,
}

impl PlanRequest {
    pub fn new(instruction: &str, exemplars: Vec<Exemplar>, image_ref: Option<String>) -> Self {
        Self {
            instruction: instruction.to_string(),
            primitives: PrimitiveType::ALL
                .iter()
                .map(|p| PrimitiveDef {
                    name: p.name().to_string(),
                    definition: p.definition().to_string(),
                })
                .collect(),
            exemplars,
            image_ref,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerReply {
    #[serde(default)]
    pub reasoning: String,
    pub sequence: Vec<String>,
}

/// Anything that can answer a [`PlanRequest`].
pub trait Reasoner: Send + Sync {
    fn propose(&self, request: &PlanRequest) -> Result<ReasonerReply, PlanError>;
}

/// Reasoner reached over HTTP at `{endpoint}/v1/plan`.
#[derive(Debug, Clone)]
pub struct HttpReasoner {
    pub endpoint: String,
    pub timeout: Duration,
}

impl HttpReasoner {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: DEFAULT_REASONER_TIMEOUT,
        }
    }

    pub fn url(&self) -> String {
        format!("{}/v1/plan", self.endpoint.trim_end_matches('/'))
    }
}

impl Reasoner for HttpReasoner {
    fn propose(&self, request: &PlanRequest) -> Result<ReasonerReply, PlanError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let url = self.url();
        let mut response = agent
            .post(&url)
            .send_json(request)
            .map_err(|e| PlanError::Reasoner(format!("{url}: {e}")))?;
        let status = response.status();
        if status != 200 {
            return Err(PlanError::Reasoner(format!("{url}: HTTP {status}")));
        }
        response
            .body_mut()
            .read_json::<ReasonerReply>()
            .map_err(|e| PlanError::Reasoner(format!("{url}: bad reply: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub tau_copy: f64,
    pub top_k: usize,
    pub max_len: usize,
    pub min_similarity: Option<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            tau_copy: DEFAULT_TAU_COPY,
            top_k: DEFAULT_TOP_K,
            max_len: DEFAULT_MAX_PLAN_LEN,
            min_similarity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub sequence: PrimitiveSequence,
    pub provenance: Provenance,
    /// Similarity of the best library match, when the library was consulted.
    pub top_similarity: Option<f64>,
    /// Strategies that were tried and failed before this one.
    pub rejected: Vec<PlanError>,
}

/// Checks an external reply against the alphabet and the length cap.
pub fn validate_reply(reply: &ReasonerReply, max_len: usize) -> Result<PrimitiveSequence, PlanError> {
    if reply.sequence.len() > max_len {
        return Err(PlanError::PlanRejected(format!(
            "{} primitives exceeds the limit of {max_len}",
            reply.sequence.len()
        )));
    }
    PrimitiveSequence::parse(&reply.sequence).map_err(|e| PlanError::PlanRejected(e.to_string()))
}

/// Produces a plan for `instruction`.
pub fn plan(
    instruction: &str,
    library: &Library,
    embedder: &dyn Embedder,
    reasoner: Option<&dyn Reasoner>,
    image_ref: Option<&str>,
    cfg: &PlannerConfig,
) -> Result<Plan, PlanError> {
    let top = library.retrieve_topk(instruction, cfg.top_k.max(1), embedder, cfg.min_similarity);
    let top_similarity = top.first().map(|(_, s)| *s);
    if let Some((entry, sim)) = top.first() {
        if *sim >= cfg.tau_copy {
            return Ok(Plan {
                sequence: entry.sequence.clone(),
                provenance: Provenance::Retrieved,
                top_similarity,
                rejected: Vec::new(),
            });
        }
    }

    let mut rejected = Vec::new();
    if let Some(reasoner) = reasoner {
        let exemplars = top
            .iter()
            .map(|(e, _)| Exemplar {
                instruction: e.instruction.clone(),
                sequence: e.sequence.labels(),
            })
            .collect();
        let request = PlanRequest::new(instruction, exemplars, image_ref.map(str::to_string));
        match reasoner.propose(&request).and_then(|r| validate_reply(&r, cfg.max_len)) {
            Ok(sequence) => {
                return Ok(Plan {
                    sequence,
                    provenance: Provenance::External,
                    top_similarity,
                    rejected,
                })
            }
            Err(e) => {
                log::warn!("external plan unusable, falling back to templates: {e}");
                rejected.push(e);
            }
        }
    }

    match template_plan(instruction) {
        Ok(sequence) if sequence.len() <= cfg.max_len => Ok(Plan {
            sequence,
            provenance: Provenance::Template,
            top_similarity,
            rejected,
        }),
        Ok(_) | Err(_) => Err(PlanError::NoPlan(instruction.to_string())),
    }
}

const SPLIT_VERBS: [&str; 7] = ["put", "open", "close", "turn", "push", "pull", "pick"];
const TRANSPORT_VERBS: [&str; 5] = ["put", "pick", "place", "stack", "take"];
const TARGET_WORDS: [&str; 8] = ["in", "on", "into", "onto", "inside", "to", "under", "at"];

fn words(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty())
}

fn has_word(s: &str, word: &str) -> bool {
    words(s).any(|w| w == word)
}

fn has_any_word(s: &str, list: &[&str]) -> bool {
    words(s).any(|w| list.contains(&w))
}

/// Lowercases, maps underscores to spaces and drops a leading scene tag
/// such as `kitchen scene3`.
fn normalize_task(text: &str) -> String {
    let lowered = text.to_lowercase().replace('_', " ");
    let tokens: Vec<&str> = lowered
        .split_whitespace()
        .map(|w| w.trim_end_matches(['.', '!', ';']))
        .collect();
    let scene = tokens.iter().take(4).position(|w| {
        w.strip_prefix("scene")
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
    });
    let start = scene.map_or(0, |i| i + 1);
    tokens[start..].join(" ")
}

fn split_clauses(text: &str) -> Vec<String> {
    let mut coarse = vec![text.to_string()];
    for sep in [", then ", " and then ", " then "] {
        coarse = coarse
            .iter()
            .flat_map(|c| c.split(sep).map(str::to_string).collect::<Vec<_>>())
            .collect();
    }
    let mut out = Vec::new();
    for clause in coarse {
        let tokens: Vec<&str> = clause.split(' ').collect();
        let mut current: Vec<&str> = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let tok = tokens[i];
            let next = tokens.get(i + 1).copied();
            let pick_and_put = current.first() == Some(&"pick") && next == Some("put");
            if tok == "and" && next.is_some_and(|n| SPLIT_VERBS.contains(&n)) && !current.is_empty() && !pick_and_put {
                out.push(current.join(" "));
                current.clear();
                i += 1;
                continue;
            }
            // A bare verb run-on ("open the drawer put the bowl in it").
            if SPLIT_VERBS.contains(&tok)
                && i > 0
                && !current.is_empty()
                && SPLIT_VERBS.contains(&current[0])
                && tok != current[0]
                && tok == "put"
                && current.last() != Some(&"and")
            {
                out.push(current.join(" "));
                current.clear();
            }
            current.push(tok);
            i += 1;
        }
        if !current.is_empty() {
            out.push(current.join(" "));
        }
    }
    out.into_iter().filter(|c| !c.trim().is_empty()).collect()
}

fn elevated(clause: &str, context: &str) -> bool {
    let dest = ["place ", "put "]
        .iter()
        .filter_map(|v| clause.rfind(v).map(|i| &clause[i..]))
        .min_by_key(|s| s.len())
        .unwrap_or(clause);
    let high = |s: &str| {
        s.contains("top of")
            || s.contains("shelf")
            || s.contains("rack")
            || s.contains("top drawer")
            || (s.contains("drawer of the cabinet") && !s.contains("bottom drawer"))
    };
    if high(dest) {
        return true;
    }
    let refers_back = has_word(dest, "it") || has_word(dest, "inside");
    refers_back && context.contains("top drawer")
}

fn clause_plan(clause: &str, context: &str) -> Option<Vec<PrimitiveType>> {
    use PrimitiveType::*;
    let drawer_here = clause.contains("drawer");
    let drawer_ref = drawer_here || (has_word(clause, "it") && context.contains("drawer"));
    if has_word(clause, "open") && drawer_here {
        return Some(vec![Pull]);
    }
    if has_word(clause, "close") && drawer_ref {
        return Some(vec![Push]);
    }
    if has_word(clause, "push") {
        return Some(vec![Push]);
    }
    if (clause.contains("turn on") || clause.contains("turn off")) && clause.contains("stove") {
        return Some(vec![Grasp, Twist]);
    }
    if clause.contains("open the microwave") {
        return Some(vec![Rotate]);
    }
    if !has_any_word(clause, &TARGET_WORDS)
        && (clause.contains("pick up") || has_word(clause, "lift") || has_word(clause, "take"))
    {
        return Some(vec![Grasp, Lift]);
    }
    if !has_any_word(clause, &TRANSPORT_VERBS) || !has_any_word(clause, &TARGET_WORDS) {
        return None;
    }
    let into_slot =
        clause.contains("compartment") || clause.find(" in the ").is_some_and(|i| clause[i..].contains("caddy"));
    let single = if into_slot {
        vec![Grasp, Lift, Insert]
    } else if elevated(clause, context) {
        vec![Grasp, Lift, Place]
    } else {
        vec![Grasp, Move, Place]
    };
    let repeats = if has_word(clause, "both") || (has_word(clause, "stack") && clause.contains("place them")) {
        2
    } else {
        1
    };
    Some(single.repeat(repeats))
}

/// Deterministic keyword planner used when retrieval and the reasoner do
/// not produce a plan.
pub fn template_plan(instruction: &str) -> Result<PrimitiveSequence, PlanError> {
    let text = normalize_task(instruction);
    let mut out = Vec::new();
    for clause in split_clauses(&text) {
        match clause_plan(&clause, &text) {
            Some(p) => out.extend(p),
            None => return Err(PlanError::NoTemplateMatch(instruction.to_string())),
        }
    }
    PrimitiveSequence::from_primitives(&out).map_err(|_| PlanError::NoTemplateMatch(instruction.to_string()))
}
