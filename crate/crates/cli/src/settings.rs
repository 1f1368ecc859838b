use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use nested_shamir::group::Backend;
use nested_shamir::sim::{ActorBehavior, Behaviors, KeyPolicy, SwarmConfig, XMode};

use crate::Failure;

pub const DEFAULT_OUT: &str = "nshamir.jsonl";

/// Flags shared by every subcommand.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Group backend: ed25519 or toy.
    #[arg(long, global = true)]
    pub backend: Option<Backend>,
    /// Swarm size.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Threshold.
    #[arg(long, global = true)]
    pub t: Option<usize>,
    /// Ticks the dealer waits for each round.
    #[arg(long, global = true)]
    pub tau: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// sequential, dealer-random or identity-derived.
    #[arg(long, global = true)]
    pub x_mode: Option<XMode>,
    /// Probability that any one envelope is lost.
    #[arg(long, global = true)]
    pub drop_prob: Option<f64>,
    /// IDX:MODE, for example 2:rogue_key. Repeatable.
    #[arg(long = "behavior", global = true, value_name = "IDX:MODE", value_parser = Behaviors::parse_entry)]
    pub behaviors: Vec<(u32, ActorBehavior)>,
    #[arg(long, global = true)]
    pub message: Option<String>,
    /// Hex-encoded peer point for `exchange`.
    #[arg(long, global = true, value_name = "HEX")]
    pub peer_public: Option<String>,
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub population: Option<usize>,
    #[arg(long, global = true)]
    pub max_attempts: Option<u32>,
    /// pre-provisioned, ephemeral or dealer-distributed.
    #[arg(long, global = true)]
    pub key_policy: Option<KeyPolicy>,
    /// Echo the transcript to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    backend: Option<String>,
    n: Option<usize>,
    t: Option<usize>,
    tau: Option<u64>,
    seed: Option<u64>,
    #[serde(alias = "x-mode")]
    x_mode: Option<String>,
    #[serde(alias = "drop-prob")]
    drop_prob: Option<f64>,
    #[serde(default, alias = "behavior")]
    behaviors: Vec<String>,
    message: Option<String>,
    #[serde(alias = "peer-public")]
    peer_public: Option<String>,
    out: Option<PathBuf>,
    population: Option<usize>,
    #[serde(alias = "max-attempts")]
    max_attempts: Option<u32>,
    #[serde(alias = "key-policy")]
    key_policy: Option<String>,
    checks: Option<bool>,
    #[serde(alias = "embed-shares")]
    embed_shares: Option<bool>,
}

/// Everything a command needs, after merging defaults, file and flags.
#[derive(Debug)]
pub struct RunConfig {
    pub swarm: SwarmConfig,
    pub behaviors: Behaviors,
    pub message: Option<String>,
    pub peer_public: Option<String>,
    pub out: Option<PathBuf>,
    pub verbose: bool,
}

impl RunConfig {
    pub fn out_or_default(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

fn parse<T: std::str::FromStr<Err = String>>(v: Option<String>) -> Result<Option<T>, Failure> {
    v.map(|s| s.parse::<T>().map_err(Failure::Usage)).transpose()
}

fn read_file(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn resolve(args: RunArgs) -> Result<RunConfig, Failure> {
    let file = match &args.config {
        Some(p) => read_file(p)?,
        None => FileConfig::default(),
    };
    let backend = args
        .backend
        .or(parse(file.backend)?)
        .unwrap_or(Backend::Ed25519);
    let n = args.n.or(file.n).unwrap_or(5);
    let t = args.t.or(file.t).unwrap_or(3);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let mut swarm = SwarmConfig::new(backend, n, t, seed);
    if let Some(v) = args.tau.or(file.tau) {
        swarm.tau = v;
    }
    if let Some(v) = args.x_mode.or(parse(file.x_mode)?) {
        swarm.x_mode = v;
    }
    if let Some(v) = args.drop_prob.or(file.drop_prob) {
        swarm.drop_prob = v;
    }
    if let Some(v) = args.population.or(file.population) {
        swarm.population = v;
    }
    if let Some(v) = args.max_attempts.or(file.max_attempts) {
        swarm.max_attempts = v;
    }
    if let Some(v) = args.key_policy.or(parse(file.key_policy)?) {
        swarm.key_policy = v;
    }
    if let Some(v) = file.checks {
        swarm.checks_enabled = v;
    }
    if let Some(v) = file.embed_shares {
        swarm.embed_shares = v;
    }
    let mut behaviors = Behaviors::honest();
    for entry in &file.behaviors {
        let (id, b) = Behaviors::parse_entry(entry).map_err(Failure::Usage)?;
        behaviors = behaviors.with(id, b);
    }
    for &(id, b) in &args.behaviors {
        behaviors = behaviors.with(id, b);
    }
    swarm.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    swarm
        .validate_behaviors(&behaviors)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(RunConfig {
        swarm,
        behaviors,
        message: args.message.or(file.message),
        peer_public: args.peer_public.or(file.peer_public),
        out: args.out.or(file.out),
        verbose: args.verbose,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_file(text: &str, args: RunArgs) -> Result<RunConfig, Failure> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, text).unwrap();
        resolve(RunArgs {
            config: Some(path),
            ..args
        })
    }

    #[test]
    fn defaults() {
        let c = resolve(RunArgs::default()).unwrap();
        assert_eq!((c.swarm.n, c.swarm.t, c.swarm.seed), (5, 3, 0));
        assert_eq!(c.swarm.backend, Backend::Ed25519);
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let text = "backend = \"toy\"\nn = 7\nt = 4\nseed = 9\nbehaviors = [\"2:withhold\", \"3:rogue_key\"]\n";
        let c = with_file(
            text,
            RunArgs {
                t: Some(2),
                behaviors: vec![(3, ActorBehavior::Honest)],
                ..RunArgs::default()
            },
        )
        .unwrap();
        assert_eq!(c.swarm.backend, Backend::Toy);
        assert_eq!((c.swarm.n, c.swarm.t, c.swarm.seed, c.swarm.tau), (7, 2, 9, 4));
        assert_eq!(c.behaviors.get(2), ActorBehavior::Withhold);
        assert_eq!(c.behaviors.get(3), ActorBehavior::Honest);
    }

    #[test]
    fn bad_files_are_usage_errors() {
        for text in ["n = 3\nt = 4\n", "colour = \"red\"\n", "backend = \"p256\"\n", "n = \"five\"\n"] {
            assert!(matches!(with_file(text, RunArgs::default()), Err(Failure::Usage(_))), "{text}");
        }
    }
}
