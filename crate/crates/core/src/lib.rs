//! Nested Shamir secret sharing for distributed EdDSA key generation, with
//! threshold signing, threshold Diffie-Hellman and a seeded swarm simulator.
//!
//! The guide in `book/` walks through each module with runnable examples.

pub mod group;
pub mod shamir;
pub mod keygen;
pub mod threshold;
pub mod sim;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/nesting.md")]
    mod nesting {}
    #[doc = include_str!("../../../book/src/keygen.md")]
    mod keygen {}
    #[doc = include_str!("../../../book/src/clamping.md")]
    mod clamping {}
    #[doc = include_str!("../../../book/src/swarm.md")]
    mod swarm {}
    #[doc = include_str!("../../../book/src/threshold.md")]
    mod threshold {}
    #[doc = include_str!("../../../book/src/attacks.md")]
    mod attacks {}
    #[doc = include_str!("../../../book/src/entropy.md")]
    mod entropy {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
