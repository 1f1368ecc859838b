//! In-process simulation of a dealer, a population of actors, an unreliable
//! network and an append-only ledger.
//!
//! Everything runs on simulated ticks from a single seed, so a configuration
//! always produces the same transcript byte for byte.

pub mod attacks;
mod ceremony;
pub mod config;
pub mod encryption;
pub mod entropy;
mod keys;
pub mod ledger;
pub mod replay;
pub mod signing;
pub mod transcript;
pub mod transport;

pub use ceremony::{run_ceremony, Actor, CeremonyOutcome, CeremonyRun};
pub use config::{ActorBehavior, Behaviors, DhCoefficients, KeyPolicy, SwarmConfig, XMode};
pub use keys::{KeyMaterial, ShareFile};
pub use ledger::{ledger_check, ledger_check_all, Ledger, LedgerPost, LedgerVerdict};
pub use signing::{run_exchange, run_signing, ExchangeRun, Signer, SigningRun};
pub use transcript::{Record, Transcript};
pub use transport::{Envelope, MessageKind, PartyId};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("key material: {0}")]
    KeyMaterial(String),
    #[error(transparent)]
    Sharing(#[from] crate::shamir::ShamirError),
    #[error(transparent)]
    Threshold(#[from] crate::threshold::ThresholdError),
}
