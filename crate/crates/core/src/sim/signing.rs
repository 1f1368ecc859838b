//! Threshold signing and key exchange as dealer-driven message flows.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::ceremony::derive_rng;
use super::config::{ActorBehavior, Behaviors, DhCoefficients};
use super::keys::KeyMaterial;
use super::transcript::{Record, Transcript};
use super::transport::{Envelope, MessageKind, PartyId};
use super::SimError;
use crate::group::{element_hex, hash_to_scalar, scalar_hex, Field, Group};
use crate::shamir::{lagrange_coefficient, Share};
use crate::threshold::{
    aggregate_and_verify, challenge, dh_aggregate, dh_contribution, dh_contribution_weighted,
    sign_round1, sign_round2, NonceHandle, Signature, ThresholdError,
};

/// One signer holding one share.
pub struct Signer<G: Group> {
    id: u32,
    share: Share<G::Scalar>,
    behavior: ActorBehavior,
    rng: ChaCha20Rng,
    sessions: BTreeMap<u64, NonceHandle<G>>,
}

impl<G: Group> Signer<G> {
    pub fn new(id: u32, share: Share<G::Scalar>, behavior: ActorBehavior, rng: ChaCha20Rng) -> Self {
        Signer {
            id,
            share,
            behavior,
            rng,
            sessions: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn share(&self) -> &Share<G::Scalar> {
        &self.share
    }

    fn deterministic_nonce(&self, message: &[u8]) -> G::Scalar {
        hash_to_scalar::<G>(&[b"nshamir/det-nonce", &self.share.y.to_bytes(), message])
    }

    /// Round one of signing session `session`.
    pub fn round1(&mut self, session: u64, message: &[u8]) -> G::Element {
        let (r, handle) = if self.behavior == ActorBehavior::DeterministicNonce {
            let r = self.deterministic_nonce(message);
            (G::mul_base(&r), NonceHandle::from_nonce(r))
        } else {
            sign_round1::<G, _>(&mut self.rng)
        };
        self.sessions.insert(session, handle);
        r
    }

    /// Round two. An honest signer answers once per session; the flawed
    /// deterministic signer recomputes its nonce and answers every request.
    pub fn round2(
        &mut self,
        session: u64,
        aggregate_r: &G::Element,
        coefficient: &G::Scalar,
        aggregate_public: &G::Element,
        message: &[u8],
    ) -> Result<G::Scalar, ThresholdError> {
        let mut handle = match self.sessions.remove(&session) {
            Some(h) => h,
            None if self.behavior == ActorBehavior::DeterministicNonce => {
                NonceHandle::from_nonce(self.deterministic_nonce(message))
            }
            None => return Err(ThresholdError::NonceReused),
        };
        sign_round2(&mut handle, aggregate_r, coefficient, &self.share, aggregate_public, message)
    }

    pub fn exchange(&self, peer: &G::Element) -> Result<G::Element, ThresholdError> {
        dh_contribution::<G>(&self.share, peer)
    }

    pub fn exchange_weighted(
        &self,
        cohort: &[G::Scalar],
        peer: &G::Element,
    ) -> Result<G::Element, ThresholdError> {
        dh_contribution_weighted::<G>(&self.share, cohort, peer)
    }
}

pub(crate) fn make_signers<G: Group>(
    key: &KeyMaterial<G>,
    cohort: &[u32],
    behaviors: &Behaviors,
    seed: u64,
) -> Result<Vec<Signer<G>>, SimError> {
    if cohort.is_empty() {
        return Err(SimError::Config("empty cohort".into()));
    }
    cohort
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            if cohort[..i].contains(&id) {
                return Err(SimError::Config(format!("actor {id} listed twice in cohort")));
            }
            let share = key
                .share_of(id)
                .ok_or_else(|| SimError::KeyMaterial(format!("no share for actor {id}")))?;
            Ok(Signer::new(id, share, behaviors.get(id), derive_rng(seed, "signer", id as u64)))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
pub(crate) struct Round2Request {
    pub session: u64,
    pub r: String,
    pub l: String,
    pub public: String,
    pub message: String,
}

pub struct SigningRun<G: Group> {
    pub transcript: Transcript,
    pub signature: Result<Signature<G>, ThresholdError>,
}

/// Two-round signing of `message` by `cohort`.
pub fn run_signing<G: Group>(
    key: &KeyMaterial<G>,
    cohort: &[u32],
    message: &[u8],
    behaviors: &Behaviors,
    seed: u64,
) -> Result<SigningRun<G>, SimError> {
    let mut signers = make_signers(key, cohort, behaviors, seed)?;
    let mut log = Transcript::default();
    let session = 1;
    let xs: Vec<G::Scalar> = signers.iter().map(|s| s.share.x).collect();
    let mut commitments = Vec::new();
    for s in &mut signers {
        let to = PartyId::Actor(s.id);
        log.push(Record::envelope(1, &Envelope::new(1, PartyId::Dealer, to, MessageKind::Round1, message.to_vec()), None));
        let r = s.round1(session, message);
        log.push(Record::envelope(2, &Envelope::new(1, to, PartyId::Dealer, MessageKind::Round1, G::encode(&r)), None));
        commitments.push(r);
    }
    let aggregate_r = commitments.iter().fold(G::identity(), |acc, &r| acc + r);
    let mut responses = Vec::new();
    for s in &mut signers {
        let to = PartyId::Actor(s.id);
        let l = lagrange_coefficient(s.share.x, &xs)?;
        let req = Round2Request {
            session,
            r: element_hex::<G>(&aggregate_r),
            l: scalar_hex(&l),
            public: element_hex::<G>(&key.aggregate_public),
            message: hex::encode(message),
        };
        log.push(Record::envelope(3, &Envelope::new(1, PartyId::Dealer, to, MessageKind::Round2, serde_json::to_vec(&req).unwrap()), None));
        let s_i = s.round2(session, &aggregate_r, &l, &key.aggregate_public, message)?;
        log.push(Record::envelope(4, &Envelope::new(1, to, PartyId::Dealer, MessageKind::Round2, s_i.to_bytes()), None));
        responses.push(s_i);
    }
    let signature = aggregate_and_verify(&commitments, &responses, &key.aggregate_public, message);
    let (payload, verdict) = match &signature {
        Ok(sig) => (sig.to_bytes(), "verified".to_string()),
        Err(e) => (vec![], e.to_string()),
    };
    log.push(Record::event(5, 1, PartyId::Dealer, "signature", &payload, Some(verdict)));
    Ok(SigningRun {
        transcript: log,
        signature,
    })
}

pub struct ExchangeRun<G: Group> {
    pub transcript: Transcript,
    pub shared: Result<G::Element, ThresholdError>,
}

/// Threshold Diffie-Hellman with `peer`: `K = sum l_c y_c P`.
pub fn run_exchange<G: Group>(
    key: &KeyMaterial<G>,
    cohort: &[u32],
    peer: &G::Element,
    mode: DhCoefficients,
    seed: u64,
) -> Result<ExchangeRun<G>, SimError> {
    let signers = make_signers(key, cohort, &Behaviors::honest(), seed)?;
    let mut log = Transcript::default();
    let xs: Vec<G::Scalar> = signers.iter().map(|s| s.share.x).collect();
    let mut request = G::encode(peer);
    if mode == DhCoefficients::Signer {
        for x in &xs {
            request.extend(x.to_bytes());
        }
    }
    let mut contributions = Vec::new();
    let mut failure = None;
    for s in &signers {
        let to = PartyId::Actor(s.id);
        log.push(Record::envelope(1, &Envelope::new(1, PartyId::Dealer, to, MessageKind::Exchange, request.clone()), None));
        let k = match mode {
            DhCoefficients::Dealer => s.exchange(peer),
            DhCoefficients::Signer => s.exchange_weighted(&xs, peer),
        };
        match k {
            Ok(k) => {
                log.push(Record::envelope(2, &Envelope::new(1, to, PartyId::Dealer, MessageKind::Exchange, G::encode(&k)), None));
                contributions.push((s.share.x, k));
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    let shared = match (failure, mode) {
        (Some(e), _) => Err(e),
        (None, DhCoefficients::Dealer) => dh_aggregate::<G>(&contributions),
        (None, DhCoefficients::Signer) => {
            Ok(contributions.iter().fold(G::identity(), |acc, (_, k)| acc + *k))
        }
    };
    let (payload, verdict) = match &shared {
        Ok(k) => (G::encode(k), "ok".to_string()),
        Err(e) => (vec![], e.to_string()),
    };
    log.push(Record::event(3, 1, PartyId::Dealer, "shared-point", &payload, Some(verdict)));
    Ok(ExchangeRun {
        transcript: log,
        shared,
    })
}

/// The challenge a signer will use for a request; exposed for attack code.
pub(crate) fn request_mu<G: Group>(
    r: &G::Element,
    l: &G::Scalar,
    public: &G::Element,
    message: &[u8],
) -> G::Scalar {
    *l * challenge::<G>(r, public, message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Backend, DefaultToy, Ed25519};
    use crate::sim::config::SwarmConfig;
    use crate::sim::ledger::combinations;
    use crate::sim::run_ceremony;
    use crate::threshold::eddsa_verify;

    fn toy_key(seed: u64) -> (KeyMaterial<DefaultToy>, crate::group::Fp<1019>) {
        let run = run_ceremony::<DefaultToy>(&SwarmConfig::new(Backend::Toy, 5, 3, seed), &Behaviors::honest()).unwrap();
        let key = run.key_material().unwrap();
        let secret = run
            .member_ids()
            .iter()
            .map(|&id| run.actor(id).unwrap().keygen_state().unwrap().secret().reduce())
            .fold(crate::group::Fp::<1019>::zero(), |a, b| a + b);
        (key, secret)
    }

    #[test]
    fn every_quorum_signs_and_smaller_cohorts_do_not() {
        let (key, _) = toy_key(3);
        let ids = key.actor_ids();
        for cohort in combinations(&ids, 3) {
            let run = run_signing(&key, &cohort, b"hello", &Behaviors::honest(), 1).unwrap();
            let sig = run.signature.unwrap();
            assert!(eddsa_verify::<DefaultToy>(&key.aggregate_public, b"hello", &sig));
        }
        for cohort in combinations(&ids, 2) {
            let run = run_signing(&key, &cohort, b"hello", &Behaviors::honest(), 1).unwrap();
            assert_eq!(run.signature.unwrap_err(), ThresholdError::InvalidAggregate);
        }
    }

    #[test]
    fn ed25519_signature_verifies_independently() {
        let cfg = SwarmConfig::new(Backend::Ed25519, 5, 3, 4);
        let run = run_ceremony::<Ed25519>(&cfg, &Behaviors::honest()).unwrap();
        let key = run.key_material().unwrap();
        for msg in [&b""[..], b"abc", b"threshold"] {
            let sig = run_signing(&key, &[1, 3, 5], msg, &Behaviors::honest(), 9)
                .unwrap()
                .signature
                .unwrap();
            let vk = ed25519_dalek::VerifyingKey::from_bytes(
                &Ed25519::encode(&key.aggregate_public).try_into().unwrap(),
            )
            .unwrap();
            let sig = ed25519_dalek::Signature::from_slice(&sig.to_bytes()).unwrap();
            vk.verify_strict(msg, &sig).unwrap();
        }
    }

    #[test]
    fn exchange_matches_oracle_in_both_modes() {
        let (key, secret) = toy_key(8);
        let peer = DefaultToy::mul_base(&crate::group::Fp::new(77));
        let expected = DefaultToy::mul(&secret, &peer);
        for mode in [DhCoefficients::Dealer, DhCoefficients::Signer] {
            for cohort in combinations(&key.actor_ids(), 3) {
                let run = run_exchange(&key, &cohort, &peer, mode, 1).unwrap();
                assert_eq!(run.shared.unwrap(), expected);
            }
            let run = run_exchange(&key, &[1, 2], &peer, mode, 1).unwrap();
            assert_ne!(run.shared.unwrap(), expected);
        }
        let torsion = DefaultToy::torsion_generator();
        let run = run_exchange(&key, &[1, 2, 3], &torsion, DhCoefficients::Dealer, 1).unwrap();
        assert_eq!(run.shared, Err(ThresholdError::LowOrderPoint));
    }

    #[test]
    fn honest_signer_refuses_second_round_two() {
        let (key, _) = toy_key(5);
        let mut s = make_signers(&key, &[1], &Behaviors::honest(), 0).unwrap().remove(0);
        let r = s.round1(1, b"m");
        let l = crate::group::Fp::new(1);
        assert!(s.round2(1, &r, &l, &key.aggregate_public, b"m").is_ok());
        assert_eq!(
            s.round2(1, &r, &l, &key.aggregate_public, b"m"),
            Err(ThresholdError::NonceReused)
        );
    }

    #[test]
    fn bad_cohorts_are_rejected() {
        let (key, _) = toy_key(6);
        assert!(run_signing(&key, &[], b"m", &Behaviors::honest(), 0).is_err());
        assert!(run_signing(&key, &[1, 1, 2], b"m", &Behaviors::honest(), 0).is_err());
        assert!(run_signing(&key, &[1, 2, 42], b"m", &Behaviors::honest(), 0).is_err());
    }
}
