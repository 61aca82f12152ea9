//! Run configuration shared by the command-line tools.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::library::NgramEmbedder;
use crate::planner::{PlannerConfig, DEFAULT_MAX_PLAN_LEN, DEFAULT_TAU_COPY, DEFAULT_TOP_K};
use crate::segmenter::{RuleTable, ThresholdSet, DEFAULT_K_FUTURE, DEFAULT_K_PAST, DEFAULT_MIN_OFFSET};
use crate::switcher::{SwitchPolicy, DEFAULT_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub dim: usize,
    pub ngram: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        let e = NgramEmbedder::default();
        Self {
            dim: e.dim,
            ngram: e.ngram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub thresholds: ThresholdSet,
    /// Minimum frames before a termination criterion is consulted.
    pub delta: usize,
    pub k_past: usize,
    pub k_future: usize,
    /// Online history window W.
    pub window: usize,
    pub reset_on_switch: bool,
    pub embed: EmbedConfig,
    pub reasoner_url: Option<String>,
    pub reasoner_timeout_secs: f64,
    pub tau_copy: f64,
    pub top_k: usize,
    pub max_plan_len: usize,
    pub min_similarity: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            thresholds: ThresholdSet::default(),
            delta: DEFAULT_MIN_OFFSET,
            k_past: DEFAULT_K_PAST,
            k_future: DEFAULT_K_FUTURE,
            window: DEFAULT_WINDOW,
            reset_on_switch: true,
            embed: EmbedConfig::default(),
            reasoner_url: None,
            reasoner_timeout_secs: 30.0,
            tau_copy: DEFAULT_TAU_COPY,
            top_k: DEFAULT_TOP_K,
            max_plan_len: DEFAULT_MAX_PLAN_LEN,
            min_similarity: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(json).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.thresholds.validate()?;
        if self.delta < 1 || self.k_past < 1 || self.k_future < 1 {
            return Err("delta, k_past and k_future must be >= 1".into());
        }
        if self.window < 2 {
            return Err("window must be >= 2".into());
        }
        if self.embed.dim == 0 || self.embed.ngram == 0 {
            return Err("embed dim and ngram must be >= 1".into());
        }
        if !(self.reasoner_timeout_secs.is_finite() && self.reasoner_timeout_secs > 0.0) {
            return Err("reasoner_timeout_secs must be > 0".into());
        }
        if self.top_k < 1 || self.max_plan_len < 1 {
            return Err("top_k and max_plan_len must be >= 1".into());
        }
        Ok(())
    }

    pub fn rules(&self) -> RuleTable {
        RuleTable::uniform(self.delta, self.k_past, self.k_future, self.thresholds)
    }

    pub fn policy(&self) -> SwitchPolicy {
        SwitchPolicy {
            thresholds: self.thresholds,
            window: self.window,
            reset_on_switch: self.reset_on_switch,
        }
    }

    pub fn embedder(&self) -> NgramEmbedder {
        NgramEmbedder {
            dim: self.embed.dim,
            ngram: self.embed.ngram,
        }
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            tau_copy: self.tau_copy,
            top_k: self.top_k,
            max_len: self.max_plan_len,
            min_similarity: self.min_similarity,
        }
    }
}
