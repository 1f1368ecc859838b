//! `nshamir`: run ceremonies, sign, exchange keys and replay the attack
//! scenarios from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nested_shamir::group::{element_from_hex, element_hex, sha512, Backend, DefaultToy, Ed25519, Field, Group};
use nested_shamir::sim::attacks::{
    attack_collusion_search, attack_deterministic_nonce, attack_rogue_key, NonceOutcome,
};
use nested_shamir::sim::entropy::{entropy_demo, Distribution};
use nested_shamir::sim::replay::verify_transcript_any;
use nested_shamir::sim::{
    run_ceremony, run_exchange, run_signing, ActorBehavior, Behaviors, DhCoefficients, KeyMaterial,
    ShareFile, Transcript,
};
use nested_shamir::threshold::eddsa_verify;

mod settings;

use settings::{resolve, RunArgs, RunConfig};

#[derive(Parser)]
#[command(name = "nshamir", version, about = "Nested Shamir key generation and threshold EdDSA")]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a key generation ceremony and write its transcript.
    Keygen,
    /// Sign --message with a cohort of share holders.
    Sign {
        /// Keygen transcript, or a directory of share files.
        #[arg(long, default_value = settings::DEFAULT_OUT)]
        key: PathBuf,
        /// Comma-separated actor ids; defaults to the first t holders.
        #[arg(long, value_delimiter = ',')]
        cohort: Vec<u32>,
    },
    /// Threshold Diffie-Hellman against --peer-public.
    Exchange {
        #[arg(long, default_value = settings::DEFAULT_OUT)]
        key: PathBuf,
        #[arg(long, value_delimiter = ',')]
        cohort: Vec<u32>,
        /// Who applies the Lagrange coefficients: dealer or signer.
        #[arg(long, default_value = "dealer")]
        coefficients: DhCoefficients,
    },
    #[command(subcommand)]
    Attack(Attack),
    /// Entropy of a sum of independent contributions mod q.
    Entropy {
        #[arg(long, default_value_t = 7)]
        q: usize,
        /// `uniform`, `point:K`, or comma-separated weights. Repeatable.
        #[arg(long = "dist")]
        dists: Vec<String>,
    },
    /// Replay every check in a keygen transcript.
    VerifyTranscript { path: PathBuf },
}

#[derive(Subcommand)]
enum Attack {
    /// One actor announces a key chosen to cancel the others.
    RogueKey {
        #[arg(long, default_value_t = 1)]
        rogue: u32,
        /// Use a key with a small-order component.
        #[arg(long)]
        low_order: bool,
        /// Also run once with the contribution checks off.
        #[arg(long)]
        control: bool,
    },
    /// A dealer asks a signer twice for the same message.
    DetNonce {
        #[arg(long, default_value_t = 1)]
        victim: u32,
        /// Victim draws fresh nonces instead of deterministic ones.
        #[arg(long)]
        honest: bool,
        /// Keygen transcript or share directory; otherwise a fresh ceremony.
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Colluders guess the x-coordinates they never saw.
    Collusion {
        /// Actors corrupted during key generation.
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Actors corrupted afterwards; defaults to t - d.
        #[arg(long)]
        extra: Option<usize>,
    },
}

#[derive(Debug)]
pub enum Failure {
    /// Exit 2.
    Usage(String),
    /// Exit 1.
    Protocol(String),
}

impl Failure {
    fn protocol(e: impl std::fmt::Display) -> Self {
        Failure::Protocol(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(cli.run).and_then(|cfg| dispatch(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Protocol(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command, cfg: &RunConfig) -> CmdResult {
    match command {
        Command::Keygen => match cfg.swarm.backend {
            Backend::Ed25519 => keygen::<Ed25519>(cfg),
            Backend::Toy => keygen::<DefaultToy>(cfg),
        },
        Command::Sign { key, cohort } => match key_backend(&key)? {
            Backend::Ed25519 => sign::<Ed25519>(cfg, &key, &cohort),
            Backend::Toy => sign::<DefaultToy>(cfg, &key, &cohort),
        },
        Command::Exchange { key, cohort, coefficients } => match key_backend(&key)? {
            Backend::Ed25519 => exchange::<Ed25519>(cfg, &key, &cohort, coefficients),
            Backend::Toy => exchange::<DefaultToy>(cfg, &key, &cohort, coefficients),
        },
        Command::Attack(a) => match cfg.swarm.backend {
            Backend::Ed25519 => attack::<Ed25519>(cfg, a),
            Backend::Toy => attack::<DefaultToy>(cfg, a),
        },
        Command::Entropy { q, dists } => entropy(q, &dists),
        Command::VerifyTranscript { path } => verify(&path),
    }
}

fn fingerprint<F: Field>(x: &F, y: &F) -> String {
    hex::encode(&sha512(&[b"nshamir/share-fingerprint", &x.to_bytes(), &y.to_bytes()])[..8])
}

fn shares_dir(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".shares");
    PathBuf::from(name)
}

fn write_transcript(path: &Path, transcript: &Transcript) -> CmdResult {
    std::fs::write(path, transcript.to_jsonl())
        .map_err(|e| Failure::Protocol(format!("cannot write {}: {e}", path.display())))
}

fn echo(cfg: &RunConfig, transcript: &Transcript) {
    if cfg.verbose {
        eprint!("{}", transcript.to_jsonl());
    }
}

fn keygen<G: Group>(cfg: &RunConfig) -> CmdResult {
    let run = run_ceremony::<G>(&cfg.swarm, &cfg.behaviors).map_err(Failure::protocol)?;
    echo(cfg, &run.transcript);
    let out = cfg.out_or_default();
    write_transcript(&out, &run.transcript)?;
    println!("backend: {}", G::NAME);
    println!("attempts: {}", run.attempts);
    println!("outcome: {}", run.outcome.summary());
    println!("transcript: {}", out.display());
    let Some(key) = run.key_material() else {
        return Err(Failure::Protocol(format!("ceremony ended without a key: {}", run.outcome.summary())));
    };
    println!("public: {}", element_hex::<G>(&key.aggregate_public));
    for (id, share) in &key.holders {
        println!("share actor:{id} fingerprint {}", fingerprint(&share.x, &share.y));
    }
    if !cfg.swarm.embed_shares {
        let dir = shares_dir(&out);
        std::fs::create_dir_all(&dir)
            .map_err(|e| Failure::Protocol(format!("cannot create {}: {e}", dir.display())))?;
        for id in key.actor_ids() {
            let file = key.share_file(id).expect("holder has a share");
            let path = dir.join(format!("actor-{id}.json"));
            let text = serde_json::to_string_pretty(&file).expect("share files serialize");
            std::fs::write(&path, text)
                .map_err(|e| Failure::Protocol(format!("cannot write {}: {e}", path.display())))?;
        }
        println!("shares: {}", dir.display());
    }
    Ok(())
}

fn read_share_files(dir: &Path) -> Result<Vec<ShareFile>, Failure> {
    let bad = |e: String| Failure::Protocol(format!("missing key material: {e}"));
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| bad(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(bad(format!("no share files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| bad(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn read_transcript(path: &Path) -> Result<Transcript, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Protocol(format!("missing key material: {}: {e}", path.display())))?;
    Transcript::from_jsonl(&text).map_err(|e| Failure::Protocol(format!("{}: {e}", path.display())))
}

fn key_backend(path: &Path) -> Result<Backend, Failure> {
    let name = if path.is_dir() {
        read_share_files(path)?.remove(0).backend
    } else {
        read_transcript(path)?
            .of_kind("config")
            .next()
            .and_then(|r| r.payload_json())
            .and_then(|v| v["config"]["backend"].as_str().map(str::to_string))
            .ok_or_else(|| Failure::Protocol(format!("{}: no config record", path.display())))?
    };
    name.parse().map_err(Failure::Protocol)
}

/// Shares come from the transcript when it embeds them, otherwise from the
/// per-actor files written next to it.
fn load_key<G: Group>(path: &Path) -> Result<KeyMaterial<G>, Failure> {
    if path.is_dir() {
        return KeyMaterial::from_share_files(&read_share_files(path)?).map_err(Failure::protocol);
    }
    let transcript = read_transcript(path)?;
    if transcript.of_kind("share").next().is_some() {
        return KeyMaterial::from_transcript(&transcript).map_err(Failure::protocol);
    }
    let dir = shares_dir(path);
    let key = KeyMaterial::<G>::from_share_files(&read_share_files(&dir)?).map_err(Failure::protocol)?;
    let published = transcript
        .of_kind("published-key")
        .last()
        .and_then(|r| G::decode(&r.payload()))
        .ok_or_else(|| Failure::Protocol("transcript has no published key".into()))?;
    if published != key.aggregate_public {
        return Err(Failure::Protocol(format!("share files in {} are for another key", dir.display())));
    }
    Ok(key)
}

fn cohort_or_default<G: Group>(key: &KeyMaterial<G>, cohort: &[u32]) -> Vec<u32> {
    if cohort.is_empty() {
        key.actor_ids().into_iter().take(key.t).collect()
    } else {
        cohort.to_vec()
    }
}

fn sign<G: Group>(cfg: &RunConfig, path: &Path, cohort: &[u32]) -> CmdResult {
    let message = cfg
        .message
        .as_deref()
        .ok_or_else(|| Failure::Usage("sign needs --message".into()))?;
    let key = load_key::<G>(path)?;
    let cohort = cohort_or_default(&key, cohort);
    let run = run_signing(&key, &cohort, message.as_bytes(), &cfg.behaviors, cfg.swarm.seed)
        .map_err(Failure::protocol)?;
    echo(cfg, &run.transcript);
    if let Some(out) = &cfg.out {
        write_transcript(out, &run.transcript)?;
    }
    let sig = run.signature.map_err(Failure::protocol)?;
    println!("public: {}", element_hex::<G>(&key.aggregate_public));
    println!("cohort: {cohort:?}");
    println!("signature: {}", hex::encode(sig.to_bytes()));
    if !eddsa_verify::<G>(&key.aggregate_public, message.as_bytes(), &sig) {
        return Err(Failure::Protocol("signature does not verify".into()));
    }
    println!("verified: true");
    Ok(())
}

fn exchange<G: Group>(cfg: &RunConfig, path: &Path, cohort: &[u32], mode: DhCoefficients) -> CmdResult {
    let peer_hex = cfg
        .peer_public
        .as_deref()
        .ok_or_else(|| Failure::Usage("exchange needs --peer-public".into()))?;
    let peer = element_from_hex::<G>(peer_hex)
        .ok_or_else(|| Failure::Usage(format!("--peer-public is not a {} point", G::NAME)))?;
    let key = load_key::<G>(path)?;
    let cohort = cohort_or_default(&key, cohort);
    let run = run_exchange(&key, &cohort, &peer, mode, cfg.swarm.seed).map_err(Failure::protocol)?;
    echo(cfg, &run.transcript);
    if let Some(out) = &cfg.out {
        write_transcript(out, &run.transcript)?;
    }
    let shared = run.shared.map_err(Failure::protocol)?;
    println!("cohort: {cohort:?}");
    println!("shared: {}", element_hex::<G>(&shared));
    Ok(())
}

fn report(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn attack<G: Group>(cfg: &RunConfig, which: Attack) -> CmdResult {
    match which {
        Attack::RogueKey { rogue, low_order, control } => {
            let r = attack_rogue_key::<G>(&cfg.swarm, rogue, low_order, control).map_err(Failure::protocol)?;
            report(&r);
            if !r.prevented() {
                return Err(Failure::Protocol("rogue key was not stopped".into()));
            }
        }
        Attack::DetNonce { victim, honest, key } => {
            let key = match key {
                Some(p) => load_key::<G>(&p)?,
                None => run_ceremony::<G>(&cfg.swarm, &Behaviors::honest())
                    .map_err(Failure::protocol)?
                    .key_material()
                    .ok_or_else(|| Failure::Protocol("setup ceremony failed".into()))?,
            };
            let behavior = if honest {
                ActorBehavior::Honest
            } else {
                ActorBehavior::DeterministicNonce
            };
            let message = cfg.message.as_deref().unwrap_or("transfer");
            let r = attack_deterministic_nonce(&key, victim, behavior, message.as_bytes(), cfg.swarm.seed)
                .map_err(Failure::protocol)?;
            report(&r);
            let recovered = r.outcome == NonceOutcome::Recovered;
            if recovered == honest {
                return Err(Failure::Protocol("unexpected attack outcome".into()));
            }
        }
        Attack::Collusion { d, extra } => {
            let run = run_ceremony::<G>(&cfg.swarm, &Behaviors::honest()).map_err(Failure::protocol)?;
            let extra = extra.unwrap_or(cfg.swarm.t.saturating_sub(d));
            let r = attack_collusion_search(&run, d, extra).map_err(Failure::protocol)?;
            report(&r);
            if !r.success {
                return Err(Failure::Protocol("colluders did not recover the key".into()));
            }
        }
    }
    Ok(())
}

fn parse_dist(q: usize, spec: &str) -> Result<Distribution, Failure> {
    let usage = |m: String| Failure::Usage(format!("--dist {spec}: {m}"));
    if spec == "uniform" {
        return Ok(Distribution::uniform(q));
    }
    if let Some(k) = spec.strip_prefix("point:") {
        let k: usize = k.parse().map_err(|e| usage(format!("{e}")))?;
        return Ok(Distribution::point_mass(q, k));
    }
    let weights = spec
        .split(',')
        .map(|w| w.trim().parse::<u64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("{e}")))?;
    if weights.len() != q {
        return Err(usage(format!("{} weights for q = {q}", weights.len())));
    }
    Distribution::from_weights(weights).map_err(|e| usage(e.to_string()))
}

fn entropy(q: usize, specs: &[String]) -> CmdResult {
    let defaults = ["point:1".to_string(), "uniform".to_string()];
    let specs = if specs.is_empty() { &defaults[..] } else { specs };
    let dists = specs
        .iter()
        .map(|s| parse_dist(q, s))
        .collect::<Result<Vec<_>, _>>()?;
    let r = entropy_demo(q, &dists).map_err(|e| Failure::Usage(e.to_string()))?;
    report(&r);
    if !r.bound_holds {
        return Err(Failure::Protocol("entropy bound violated".into()));
    }
    Ok(())
}

fn verify(path: &Path) -> CmdResult {
    let transcript = read_transcript(path)?;
    let r = verify_transcript_any(&transcript).map_err(Failure::protocol)?;
    println!("backend: {}", r.backend);
    println!("attempts: {}", r.attempts);
    println!("outcome: {}", r.outcome);
    for c in &r.checks {
        println!("[{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    if !r.ok() {
        return Err(Failure::Protocol("transcript does not replay".into()));
    }
    Ok(())
}
