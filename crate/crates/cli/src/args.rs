use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use primkit::config::RunConfig;
use primkit::segmenter::RuleTable;

#[derive(Parser, Debug)]
#[command(
    name = "primkit",
    version,
    about = "Disassemble manipulation trajectories into kinematic primitives"
)]
pub struct Cli {
    #[command(flatten)]
    pub config: ConfigArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic demonstrations with known boundaries.
    Synth(SynthArgs),
    /// Split trajectories into primitive segments.
    Disassemble(DisassembleArgs),
    /// Manage the instruction -> primitive-sequence library.
    Library {
        #[command(subcommand)]
        command: LibraryCommand,
    },
    /// Produce a primitive plan for an instruction.
    Plan(PlanArgs),
    /// Stream trajectories through the online switcher.
    Replay(ReplayArgs),
    /// Check trajectories against the data-model invariants.
    Validate(ValidateArgs),
}

#[derive(Subcommand, Debug)]
pub enum LibraryCommand {
    /// Embed instruction/sequence pairs and write a library file.
    Build(LibraryBuildArgs),
}

/// Settings shared by all subcommands. Flags override the config file.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// JSON rule table overriding the per-primitive windows and thresholds.
    #[arg(long, global = true, value_name = "PATH")]
    pub rules: Option<PathBuf>,
    #[arg(long, global = true)]
    pub eps_static: Option<f64>,
    #[arg(long, global = true)]
    pub thr_move: Option<f64>,
    #[arg(long, global = true)]
    pub thr_z: Option<f64>,
    #[arg(long, global = true)]
    pub thr_rot: Option<f64>,
    #[arg(long, global = true)]
    pub grip_eps: Option<f64>,
    /// Minimum frames into a primitive before its end is searched for.
    #[arg(long, global = true)]
    pub delta: Option<usize>,
    #[arg(long, global = true)]
    pub k_past: Option<usize>,
    #[arg(long, global = true)]
    pub k_future: Option<usize>,
    /// Online history window length.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Clear the online history after each switch.
    #[arg(long, global = true, value_name = "BOOL")]
    pub reset_on_switch: Option<bool>,
    #[arg(long, global = true)]
    pub embed_dim: Option<usize>,
    #[arg(long, global = true)]
    pub embed_ngram: Option<usize>,
    /// Base URL of an external plan reasoner.
    #[arg(long, global = true, value_name = "URL")]
    pub reasoner_url: Option<String>,
    #[arg(long, global = true, value_name = "SECONDS")]
    pub reasoner_timeout: Option<f64>,
    #[arg(long, global = true)]
    pub tau_copy: Option<f64>,
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    #[arg(long, global = true)]
    pub max_plan_len: Option<usize>,
    #[arg(long, global = true)]
    pub min_similarity: Option<f64>,
}

/// The effective configuration after applying file and flag overrides.
pub struct Settings {
    pub run: RunConfig,
    pub rules: RuleTable,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<Settings> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(anyhow::Error::msg)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$($field).+ = v; })*
            };
        }
        set!(
            eps_static => thresholds.eps_static,
            thr_move => thresholds.thr_move,
            thr_z => thresholds.thr_z,
            thr_rot => thresholds.thr_rot,
            grip_eps => thresholds.grip_eps,
            delta => delta,
            k_past => k_past,
            k_future => k_future,
            window => window,
            reset_on_switch => reset_on_switch,
            embed_dim => embed.dim,
            embed_ngram => embed.ngram,
            reasoner_timeout => reasoner_timeout_secs,
            tau_copy => tau_copy,
            top_k => top_k,
            max_plan_len => max_plan_len,
        );
        if let Some(url) = &self.reasoner_url {
            cfg.reasoner_url = Some(url.clone());
        }
        if let Some(m) = self.min_similarity {
            cfg.min_similarity = Some(m);
        }
        cfg.validate()
            .map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
        let rules = match &self.rules {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RuleTable::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => cfg.rules(),
        };
        Ok(Settings { run: cfg, rules })
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of trajectories.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Seed of the first trajectory; later ones use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of position noise in meters.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Fixed plan, e.g. `grasp,move,place`. Random plans when absent.
    #[arg(long, value_name = "CSV")]
    pub plan: Option<String>,
    /// Frames per primitive for `--plan`, e.g. `40,55,25`.
    #[arg(long, value_name = "CSV", requires = "plan")]
    pub durations: Option<String>,
    /// Also emit label-grid masks of this size, e.g. `32x24`.
    #[arg(long, value_name = "WxH")]
    pub masks: Option<String>,
    /// Trajectory output (`-` for standard output).
    #[arg(long, short, default_value = "-")]
    pub out: PathBuf,
    /// Write the ground-truth boundaries as JSON here.
    #[arg(long, value_name = "PATH")]
    pub boundaries: Option<PathBuf>,
    /// Write one plan record per trajectory as JSON Lines here.
    #[arg(long, value_name = "PATH")]
    pub plans_out: Option<PathBuf>,
}

/// Where each trajectory's plan comes from. `--plan` wins over `--plans`,
/// which wins over a `plan` key embedded in the trajectory line.
#[derive(Args, Debug, Default)]
pub struct PlanSource {
    /// One plan for every trajectory.
    #[arg(long, value_name = "CSV")]
    pub plan: Option<String>,
    /// JSON Lines plan records keyed by source id.
    #[arg(long, value_name = "PATH")]
    pub plans: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DisassembleArgs {
    /// Trajectory input (`-` for standard input).
    #[arg(default_value = "-")]
    pub input: PathBuf,
    #[command(flatten)]
    pub plans: PlanSource,
    /// Segments output. Defaults to standard output unless `--passthrough`.
    #[arg(long, value_name = "PATH")]
    pub segments: Option<PathBuf>,
    /// Statistics JSON output. Defaults to standard error.
    #[arg(long, value_name = "PATH")]
    pub stats: Option<PathBuf>,
    /// Copy the input trajectories to standard output for further piping.
    #[arg(long, requires = "segments")]
    pub passthrough: bool,
}

#[derive(Args, Debug)]
pub struct LibraryBuildArgs {
    /// JSON Lines of `{"instruction": ..., "sequence": [...]}`.
    #[arg(long, value_name = "PATH", required_unless_present = "fixtures")]
    pub pairs: Option<PathBuf>,
    /// Include the bundled benchmark task plans.
    #[arg(long)]
    pub fixtures: bool,
    /// Restrict bundled plans to these suites (repeatable).
    #[arg(long, requires = "fixtures")]
    pub suite: Vec<String>,
    /// Library output file.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    pub instruction: String,
    /// Library file. The bundled task plans are used when absent.
    #[arg(long, value_name = "PATH")]
    pub library: Option<PathBuf>,
    /// Opaque reference to the current camera image, forwarded to the reasoner.
    #[arg(long)]
    pub image_ref: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Trajectory input (`-` for standard input).
    #[arg(default_value = "-")]
    pub input: PathBuf,
    #[command(flatten)]
    pub plans: PlanSource,
    /// Switch-event output (`-` for standard output).
    #[arg(long, default_value = "-")]
    pub events: PathBuf,
    /// Coherence report JSON. Defaults to standard error.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Trajectory input (`-` for standard input).
    #[arg(default_value = "-")]
    pub input: PathBuf,
}
