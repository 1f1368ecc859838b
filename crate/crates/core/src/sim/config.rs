use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::group::Backend;

/// How the dealer assigns x-coordinates to the swarm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XMode {
    /// `1, 2, ..., n` in swarm order.
    Sequential,
    /// Distinct random nonzero scalars drawn by the dealer.
    DealerRandom,
    /// The actor identifier reduced modulo `ell`.
    IdentityDerived,
}

impl FromStr for XMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(XMode::Sequential),
            "dealer-random" => Ok(XMode::DealerRandom),
            "identity-derived" => Ok(XMode::IdentityDerived),
            other => Err(format!("unknown x-mode `{other}`")),
        }
    }
}

/// Where actors get their peers' share-encryption keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyPolicy {
    /// Long-term keys known system-wide, looked up by actor identifier.
    PreProvisioned,
    /// Fresh keys announced in an extra round before the x-coordinates.
    Ephemeral,
    /// The dealer ships the keys with the x-coordinates. Open to a
    /// man-in-the-middle dealer; a warning is written to the transcript.
    DealerDistributed,
}

impl FromStr for KeyPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre-provisioned" => Ok(KeyPolicy::PreProvisioned),
            "ephemeral" => Ok(KeyPolicy::Ephemeral),
            "dealer-distributed" => Ok(KeyPolicy::DealerDistributed),
            other => Err(format!("unknown key policy `{other}`")),
        }
    }
}

/// Who applies Lagrange coefficients in a threshold key exchange.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DhCoefficients {
    #[default]
    Dealer,
    Signer,
}

impl FromStr for DhCoefficients {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dealer" => Ok(DhCoefficients::Dealer),
            "signer" => Ok(DhCoefficients::Signer),
            other => Err(format!("unknown coefficient mode `{other}`")),
        }
    }
}

/// What an actor does during a scenario.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorBehavior {
    #[default]
    Honest,
    /// Never answers the x-coordinate broadcast.
    Withhold,
    /// Waits for the other public contributions, then picks its own so the
    /// aggregate lands on a key it controls, with a fabricated proof.
    RogueKey,
    /// Sends a low-order public contribution with a proof crafted to pass
    /// the verification equation.
    RogueKeyLowOrder,
    /// Proves two different contributions and sends each to half the swarm.
    EquivocateA,
    /// Sends random share values to every other actor.
    GarbageShare,
    /// Signs with a nonce derived from the share and the message.
    DeterministicNonce,
}

impl ActorBehavior {
    pub fn label(&self) -> &'static str {
        match self {
            ActorBehavior::Honest => "honest",
            ActorBehavior::Withhold => "withhold",
            ActorBehavior::RogueKey => "rogue_key",
            ActorBehavior::RogueKeyLowOrder => "rogue_key_low_order",
            ActorBehavior::EquivocateA => "equivocate_A",
            ActorBehavior::GarbageShare => "garbage_share",
            ActorBehavior::DeterministicNonce => "deterministic_nonce",
        }
    }

    pub fn is_rogue(&self) -> bool {
        matches!(self, ActorBehavior::RogueKey | ActorBehavior::RogueKeyLowOrder)
    }
}

impl fmt::Display for ActorBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ActorBehavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ActorBehavior::Honest,
            ActorBehavior::Withhold,
            ActorBehavior::RogueKey,
            ActorBehavior::RogueKeyLowOrder,
            ActorBehavior::EquivocateA,
            ActorBehavior::GarbageShare,
            ActorBehavior::DeterministicNonce,
        ]
        .into_iter()
        .find(|b| b.label().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown behavior `{s}`"))
    }
}

/// Behavior per actor identifier; anything unlisted is honest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Behaviors(BTreeMap<u32, ActorBehavior>);

impl Behaviors {
    pub fn honest() -> Self {
        Behaviors::default()
    }

    pub fn with(mut self, actor: u32, behavior: ActorBehavior) -> Self {
        self.0.insert(actor, behavior);
        self
    }

    pub fn get(&self, actor: u32) -> ActorBehavior {
        self.0.get(&actor).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, ActorBehavior)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    /// Parses `IDX:MODE`, e.g. `2:rogue_key`.
    pub fn parse_entry(s: &str) -> Result<(u32, ActorBehavior), String> {
        let (idx, mode) = s
            .split_once(':')
            .ok_or_else(|| format!("expected IDX:MODE, got `{s}`"))?;
        let idx = idx
            .trim()
            .parse::<u32>()
            .map_err(|_| format!("bad actor index in `{s}`"))?;
        Ok((idx, mode.trim().parse()?))
    }
}

/// Parameters of one simulated swarm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub n: usize,
    pub t: usize,
    /// Ticks the dealer waits for a round of responses.
    pub tau: u64,
    pub backend: Backend,
    pub x_mode: XMode,
    /// Independent loss probability for every envelope.
    pub drop_prob: f64,
    pub seed: u64,
    /// Number of actors the dealer can draw swarms from (identifiers `1..=population`).
    pub population: usize,
    pub max_attempts: u32,
    pub key_policy: KeyPolicy,
    /// Contribution checks at `complete`. Turning them off is only useful
    /// for showing what they prevent.
    pub checks_enabled: bool,
    /// Write every actor's final share into the transcript. Convenient for
    /// test replays; never appropriate for real keys.
    pub embed_shares: bool,
}

impl SwarmConfig {
    pub fn new(backend: Backend, n: usize, t: usize, seed: u64) -> Self {
        SwarmConfig {
            n,
            t,
            tau: 4,
            backend,
            x_mode: XMode::Sequential,
            drop_prob: 0.0,
            seed,
            population: 2 * n,
            max_attempts: 8,
            key_policy: KeyPolicy::PreProvisioned,
            checks_enabled: true,
            embed_shares: backend == Backend::Toy,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Config(m));
        if self.t == 0 || self.t > self.n {
            return fail(format!("need 1 <= t <= n, got t={} n={}", self.t, self.n));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return fail(format!("drop probability {} outside [0, 1]", self.drop_prob));
        }
        if self.population < self.n {
            return fail(format!(
                "population {} smaller than swarm size {}",
                self.population, self.n
            ));
        }
        if self.tau == 0 {
            return fail("tau must be at least one tick".into());
        }
        if self.max_attempts == 0 {
            return fail("max_attempts must be at least 1".into());
        }
        Ok(())
    }

    pub fn validate_behaviors(&self, behaviors: &Behaviors) -> Result<(), SimError> {
        for (id, _) in behaviors.iter() {
            if id == 0 || id as usize > self.population {
                return Err(SimError::Config(format!(
                    "behavior given for actor {id}, outside population 1..={}",
                    self.population
                )));
            }
        }
        Ok(())
    }
}
