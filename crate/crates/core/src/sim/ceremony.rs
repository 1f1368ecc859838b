//! The key generation ceremony as a deterministic message-passing simulation.
//!
//! One dealer relays for `n` actors drawn from a larger population. The
//! dealer forwards encrypted bundles only after every actor in the swarm has
//! answered, and starts over with a fresh swarm when someone stays silent
//! for `tau` ticks.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use super::config::{ActorBehavior, Behaviors, KeyPolicy, SwarmConfig, XMode};
use super::encryption::{decrypt_share, encrypt_share, EncryptionKeypair, SealedBundle};
use super::keys::KeyMaterial;
use super::ledger::{Ledger, LedgerPost};
use super::transcript::{Record, Transcript};
use super::transport::{Envelope, MessageKind, Outbox, Outgoing, PartyId, Transport};
use super::SimError;
use crate::group::{element_from_hex, element_hex, scalar_from_hex, scalar_hex, sha512, Field, Group};
use crate::keygen::{
    begin, build_bundles, complete_without_checks, proof_challenge, verify_bundle,
    ActorKeygenState, KeygenResult, Proof, ShareBundle, UnreducedScalar,
};
use crate::shamir::{Share, SharingPolynomial};

/// Independent, reproducible randomness per party and purpose.
pub(crate) fn derive_rng(seed: u64, label: &str, id: u64) -> ChaCha20Rng {
    let h = sha512(&[
        b"nshamir/sim",
        &seed.to_le_bytes(),
        label.as_bytes(),
        &id.to_le_bytes(),
    ]);
    ChaCha20Rng::from_seed(h[..32].try_into().unwrap())
}

/// How a ceremony ended.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CeremonyOutcome {
    /// Every actor reported the same key.
    Published { public: String },
    /// An actor rejected a contribution.
    Aborted {
        reporter: u32,
        offender: u32,
        cause: String,
    },
    /// Reports disagree on the key.
    Disagreement { publics: BTreeMap<u32, String> },
    Failed { reason: String },
}

impl CeremonyOutcome {
    pub fn is_published(&self) -> bool {
        matches!(self, CeremonyOutcome::Published { .. })
    }

    pub fn summary(&self) -> String {
        match self {
            CeremonyOutcome::Published { public } => format!("published {public}"),
            CeremonyOutcome::Aborted {
                reporter,
                offender,
                cause,
            } => format!("aborted: actor {reporter} rejected actor {offender} ({cause})"),
            CeremonyOutcome::Disagreement { .. } => "aborted: actors disagree on the key".into(),
            CeremonyOutcome::Failed { reason } => format!("failed: {reason}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct MemberWire {
    pub id: u32,
    pub x: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct XBroadcastWire {
    pub t: usize,
    pub members: Vec<MemberWire>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub(crate) enum ReportWire {
    Ok { public: String },
    Abort { offender: u32, cause: String },
}

#[derive(Serialize, Deserialize)]
struct KeyWire {
    key: String,
}

#[derive(Serialize, Deserialize)]
struct LeakWire {
    sum: String,
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("wire types serialize")
}

struct Session<G: Group> {
    attempt: u32,
    t: usize,
    members: Vec<(u32, G::Scalar)>,
    index: usize,
    keys: Vec<[u8; 32]>,
    state: Option<ActorKeygenState<G>>,
    /// Second contribution of an equivocating actor.
    alternate: Option<ActorKeygenState<G>>,
    inbox: BTreeMap<u32, SealedBundle>,
    opened: Vec<ShareBundle<G>>,
    awaiting_leak: bool,
    rogue_target: Option<G::Scalar>,
    result: Option<KeygenResult<G>>,
    finished: bool,
}

/// One simulated actor and everything it has seen.
pub struct Actor<G: Group> {
    id: u32,
    behavior: ActorBehavior,
    rng: ChaCha20Rng,
    long_term: EncryptionKeypair,
    ephemeral: Option<(u32, EncryptionKeypair)>,
    directory: BTreeMap<u32, [u8; 32]>,
    checks_enabled: bool,
    embed_shares: bool,
    session: Option<Session<G>>,
    received: Vec<Envelope>,
}

impl<G: Group> Actor<G> {
    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn behavior(&self) -> ActorBehavior {
        self.behavior
    }

    /// Envelopes delivered to this actor, in order.
    pub fn received(&self) -> &[Envelope] {
        &self.received
    }

    /// Attempt of the latest session this actor joined.
    pub fn session_attempt(&self) -> Option<u32> {
        self.session.as_ref().map(|s| s.attempt)
    }

    pub fn result(&self) -> Option<&KeygenResult<G>> {
        self.session.as_ref()?.result.as_ref()
    }

    pub fn keygen_state(&self) -> Option<&ActorKeygenState<G>> {
        self.session.as_ref()?.state.as_ref()
    }

    /// Bundles this actor decrypted in its latest session.
    pub fn opened_bundles(&self) -> &[ShareBundle<G>] {
        self.session.as_ref().map_or(&[], |s| &s.opened)
    }

    /// The secret a rogue actor aimed the aggregate key at.
    pub fn rogue_target(&self) -> Option<G::Scalar> {
        self.session.as_ref()?.rogue_target
    }

    /// Every secret scalar this actor holds: its contribution, its sharing
    /// polynomial, the share values it received and its final share.
    pub fn secret_material(&self) -> Vec<G::Scalar> {
        let Some(s) = &self.session else {
            return vec![];
        };
        let mut out = Vec::new();
        for st in s.state.iter().chain(s.alternate.iter()) {
            out.push(st.secret().reduce());
            out.extend(st.polynomial().coefficients());
        }
        out.extend(s.opened.iter().map(|b| b.sigma.y));
        out.extend(s.result.iter().map(|r| r.my_share.y));
        out.extend(s.rogue_target);
        out
    }

    fn decryption_key(&self, attempt: u32, policy: KeyPolicy) -> &EncryptionKeypair {
        match (&self.ephemeral, policy) {
            (Some((a, kp)), KeyPolicy::Ephemeral) if *a == attempt => kp,
            _ => &self.long_term,
        }
    }

    fn handle(&mut self, env: Envelope, tick: u64, policy: KeyPolicy, out: &mut Outbox) {
        self.received.push(env.clone());
        if self.behavior == ActorBehavior::Withhold {
            return;
        }
        let me = PartyId::Actor(self.id);
        match env.kind {
            MessageKind::KeyRequest => {
                let kp = EncryptionKeypair::generate(&mut self.rng);
                let payload = json(&KeyWire {
                    key: hex::encode(kp.public()),
                });
                self.ephemeral = Some((env.attempt, kp));
                out.send(Envelope::new(env.attempt, me, PartyId::Dealer, MessageKind::KeyAnnounce, payload));
            }
            MessageKind::XBroadcast => self.on_broadcast(&env, policy, out),
            MessageKind::CollusionLeak => self.on_leak(&env, out),
            MessageKind::EncryptedBundle => self.on_bundle(&env, tick, policy, out),
            _ => {}
        }
    }

    fn on_broadcast(&mut self, env: &Envelope, policy: KeyPolicy, out: &mut Outbox) {
        let Ok(msg) = serde_json::from_slice::<XBroadcastWire>(&env.payload) else {
            return;
        };
        let Some(index) = msg.members.iter().position(|m| m.id == self.id) else {
            return;
        };
        let mut members = Vec::new();
        let mut keys = Vec::new();
        for m in &msg.members {
            let Some(x) = scalar_from_hex::<G::Scalar>(&m.x) else {
                return;
            };
            let key = match (&m.key, policy) {
                (Some(k), KeyPolicy::Ephemeral | KeyPolicy::DealerDistributed) => {
                    hex::decode(k).ok().and_then(|b| b.try_into().ok())
                }
                _ => self.directory.get(&m.id).copied(),
            };
            let Some(key) = key else {
                return;
            };
            members.push((m.id, x));
            keys.push(key);
        }
        let mut session = Session {
            attempt: env.attempt,
            t: msg.t,
            members,
            index,
            keys,
            state: None,
            alternate: None,
            inbox: BTreeMap::new(),
            opened: Vec::new(),
            awaiting_leak: false,
            rogue_target: None,
            result: None,
            finished: false,
        };
        if self.behavior.is_rogue() {
            session.awaiting_leak = true;
            self.session = Some(session);
            return;
        }
        let xs: Vec<G::Scalar> = session.members.iter().map(|m| m.1).collect();
        let Ok((mut bundles, state)) = begin::<G, _>(index, &xs, msg.t, &mut self.rng) else {
            return;
        };
        match self.behavior {
            ActorBehavior::EquivocateA => {
                if let Ok((other, alt)) = begin::<G, _>(index, &xs, msg.t, &mut self.rng) {
                    let half = xs.len() / 2;
                    for (j, b) in other.into_iter().enumerate() {
                        if j >= half && j != index {
                            bundles[j] = b;
                        }
                    }
                    session.alternate = Some(alt);
                }
            }
            ActorBehavior::GarbageShare => {
                for (j, b) in bundles.iter_mut().enumerate() {
                    if j != index {
                        b.sigma.y = G::Scalar::random(&mut self.rng);
                    }
                }
            }
            _ => {}
        }
        session.state = Some(state);
        self.session = Some(session);
        self.send_bundles(&bundles, out);
    }

    fn on_leak(&mut self, env: &Envelope, out: &mut Outbox) {
        let Ok(msg) = serde_json::from_slice::<LeakWire>(&env.payload) else {
            return;
        };
        let Some(others) = element_from_hex::<G>(&msg.sum) else {
            return;
        };
        let Some(session) = self.session.as_mut() else {
            return;
        };
        if session.attempt != env.attempt || !session.awaiting_leak {
            return;
        }
        session.awaiting_leak = false;
        let rng = &mut self.rng;
        let t = session.t;
        let (proof, target) = if self.behavior == ActorBehavior::RogueKeyLowOrder {
            (low_order_proof::<G>(rng), None)
        } else {
            let target = G::Scalar::random(rng);
            let public = G::mul_base(&target) - others;
            // No discrete log for `public`, so the proof is made up.
            let proof = Proof {
                public,
                commitment: G::mul_base(&G::Scalar::random(rng)),
                response: G::Scalar::random(rng),
            };
            (proof, Some(target))
        };
        let share_secret = target.unwrap_or_else(|| G::Scalar::random(rng));
        let Ok(poly) = SharingPolynomial::sample(share_secret, t, rng) else {
            return;
        };
        let xs: Vec<G::Scalar> = session.members.iter().map(|m| m.1).collect();
        let Ok(bundles) = build_bundles(&poly, &proof, &xs) else {
            return;
        };
        session.rogue_target = target;
        session.state = Some(ActorKeygenState::from_parts(
            session.index,
            xs,
            UnreducedScalar::from_le_bytes(vec![0; <G::Scalar as Field>::BYTES]),
            poly,
            proof,
        ));
        self.send_bundles(&bundles, out);
    }

    fn send_bundles(&mut self, bundles: &[ShareBundle<G>], out: &mut Outbox) {
        let session = self.session.as_ref().expect("session exists when sending");
        for (j, bundle) in bundles.iter().enumerate() {
            let (rid, _) = session.members[j];
            let Ok(sealed) = encrypt_share(bundle, self.id, rid, &session.keys[j], &mut self.rng) else {
                continue;
            };
            out.send(Envelope::new(
                session.attempt,
                PartyId::Actor(self.id),
                PartyId::Dealer,
                MessageKind::EncryptedBundle,
                sealed.to_bytes(),
            ));
        }
    }

    fn on_bundle(&mut self, env: &Envelope, tick: u64, policy: KeyPolicy, out: &mut Outbox) {
        let Ok(sealed) = SealedBundle::from_bytes(&env.payload) else {
            return;
        };
        let Some(session) = self.session.as_mut() else {
            return;
        };
        if session.attempt != env.attempt || session.finished || sealed.recipient != self.id {
            return;
        }
        if !session.members.iter().any(|m| m.0 == sealed.sender) {
            return;
        }
        session.inbox.insert(sealed.sender, sealed);
        if session.inbox.len() == session.members.len() && session.state.is_some() {
            self.complete(tick, policy, out);
        }
    }

    fn complete(&mut self, tick: u64, policy: KeyPolicy, out: &mut Outbox) {
        let attempt = self.session.as_ref().unwrap().attempt;
        let key = self.decryption_key(attempt, policy);
        let session = self.session.as_ref().unwrap();
        let me = PartyId::Actor(self.id);
        let mut opened = Vec::new();
        let mut failure: Option<(u32, String)> = None;
        for &(sender, _) in &session.members {
            let sealed = &session.inbox[&sender];
            let verdict = match decrypt_share::<G>(sealed, key) {
                Err(e) => {
                    let cause = format!("decrypt: {e}");
                    out.event(check_record(tick, attempt, me, sender, &[], &cause));
                    failure.get_or_insert((sender, cause));
                    continue;
                }
                Ok(bundle) => {
                    let verdict = if bundle.sigma.x != session.members[session.index].1 {
                        Err("misaddressed".to_string())
                    } else if self.checks_enabled {
                        verify_bundle(&bundle).map_err(|f| f.label().to_string())
                    } else {
                        Ok(())
                    };
                    let label = match &verdict {
                        Ok(()) if self.checks_enabled => "ok",
                        Ok(()) => "unchecked",
                        Err(l) => l.as_str(),
                    };
                    out.event(check_record(tick, attempt, me, sender, &bundle.public_bytes(), label));
                    opened.push(bundle);
                    verdict
                }
            };
            if let Err(cause) = verdict {
                failure.get_or_insert((sender, cause));
            }
        }
        let session = self.session.as_mut().unwrap();
        session.finished = true;
        let report = match failure {
            Some((offender, cause)) => ReportWire::Abort { offender, cause },
            None => {
                let state = session.state.as_ref().unwrap();
                match complete_without_checks(state, &opened) {
                    Ok(result) => {
                        let public = result.aggregate_public;
                        let post = LedgerPost::<G> {
                            party: self.id,
                            x: result.my_share.x,
                            aggregate_public: public,
                            share_commitment: G::mul_base(&result.my_share.y),
                        };
                        if self.embed_shares {
                            out.event(Record::event(tick, attempt, me, "share", &result.my_share.to_bytes(), None));
                        }
                        out.send(Envelope::new(attempt, me, PartyId::Ledger, MessageKind::LedgerPost, post.to_payload()));
                        session.result = Some(result);
                        ReportWire::Ok {
                            public: element_hex::<G>(&public),
                        }
                    }
                    Err(e) => ReportWire::Abort {
                        offender: self.id,
                        cause: e.to_string(),
                    },
                }
            }
        };
        session.opened = opened;
        out.send(Envelope::new(attempt, me, PartyId::Dealer, MessageKind::AggregateReport, json(&report)));
    }
}

fn check_record(tick: u64, attempt: u32, checker: PartyId, sender: u32, public: &[u8], verdict: &str) -> Record {
    Record {
        tick,
        attempt,
        from: checker.to_string(),
        to: PartyId::Actor(sender).to_string(),
        kind: "check".into(),
        payload_hex: hex::encode(public),
        verdict: Some(verdict.to_string()),
    }
}

/// A low-order contribution with a proof that satisfies the check-3 equation.
fn low_order_proof<G: Group>(rng: &mut ChaCha20Rng) -> Proof<G> {
    let public = G::torsion_generator();
    let mut r = G::Scalar::random(rng);
    for _ in 0..256 {
        let commitment = G::mul_base(&r);
        let k = proof_challenge::<G>(&public, &commitment);
        if G::mul(&k, &public) == G::identity() {
            break;
        }
        r = G::Scalar::random(rng);
    }
    Proof {
        public,
        commitment: G::mul_base(&r),
        response: r,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Keys,
    Begin,
    Complete,
    Done,
}

struct Dealer<G: Group> {
    config: SwarmConfig,
    rng: ChaCha20Rng,
    directory: BTreeMap<u32, [u8; 32]>,
    unresponsive: BTreeSet<u32>,
    attempt: u32,
    phase: Phase,
    deadline: u64,
    members: Vec<(u32, G::Scalar)>,
    announced: BTreeMap<u32, [u8; 32]>,
    begin_inbox: BTreeMap<u32, BTreeMap<u32, Vec<u8>>>,
    reports: BTreeMap<u32, ReportWire>,
    outcome: Option<CeremonyOutcome>,
}

impl<G: Group> Dealer<G> {
    fn event(&self, tick: u64, kind: &str, payload: &[u8], verdict: Option<String>) -> Record {
        Record::event(tick, self.attempt, PartyId::Dealer, kind, payload, verdict)
    }

    fn finish(&mut self, tick: u64, outcome: CeremonyOutcome, out: &mut Outbox) {
        out.event(self.event(tick, "outcome", &json(&outcome), Some(outcome.summary())));
        self.outcome = Some(outcome);
        self.phase = Phase::Done;
    }

    fn choose_x(&mut self, ids: &[u32]) -> Vec<G::Scalar> {
        match self.config.x_mode {
            XMode::Sequential => (1..=ids.len() as u64).map(G::Scalar::from_u64).collect(),
            XMode::IdentityDerived => ids.iter().map(|&id| G::Scalar::from_u64(id as u64)).collect(),
            XMode::DealerRandom => {
                let mut xs: Vec<G::Scalar> = Vec::new();
                while xs.len() < ids.len() {
                    let x = G::Scalar::random(&mut self.rng);
                    if !x.is_zero() && !xs.contains(&x) {
                        xs.push(x);
                    }
                }
                xs
            }
        }
    }

    fn start_attempt(&mut self, tick: u64, out: &mut Outbox) {
        self.attempt += 1;
        if self.attempt > self.config.max_attempts {
            self.attempt -= 1;
            let reason = format!("retry budget of {} attempts exhausted", self.config.max_attempts);
            return self.finish(tick, CeremonyOutcome::Failed { reason }, out);
        }
        let ids: Vec<u32> = (1..=self.config.population as u32)
            .filter(|id| !self.unresponsive.contains(id))
            .take(self.config.n)
            .collect();
        if ids.len() < self.config.n {
            let reason = format!(
                "only {} responsive actors left for a swarm of {}",
                ids.len(),
                self.config.n
            );
            return self.finish(tick, CeremonyOutcome::Failed { reason }, out);
        }
        let xs = self.choose_x(&ids);
        self.members = ids.into_iter().zip(xs).collect();
        self.announced.clear();
        self.begin_inbox.clear();
        self.reports.clear();
        self.deadline = tick + self.config.tau;
        let roster = json(&self.roster(false));
        out.event(self.event(tick, "attempt", &roster, None));
        if self.config.key_policy == KeyPolicy::Ephemeral {
            self.phase = Phase::Keys;
            for &(id, _) in &self.members {
                out.send(Envelope::new(self.attempt, PartyId::Dealer, PartyId::Actor(id), MessageKind::KeyRequest, b"{}".to_vec()));
            }
        } else {
            if self.config.key_policy == KeyPolicy::DealerDistributed {
                out.event(self.event(
                    tick,
                    "warning",
                    b"dealer-distributed encryption keys",
                    Some("a dealer that swaps keys can read every share".into()),
                ));
            }
            self.broadcast(out);
        }
    }

    fn roster(&self, with_keys: bool) -> XBroadcastWire {
        XBroadcastWire {
            t: self.config.t,
            members: self
                .members
                .iter()
                .map(|&(id, x)| MemberWire {
                    id,
                    x: scalar_hex(&x),
                    key: with_keys.then(|| {
                        let key = match self.config.key_policy {
                            KeyPolicy::Ephemeral => self.announced[&id],
                            _ => self.directory[&id],
                        };
                        hex::encode(key)
                    }),
                })
                .collect(),
        }
    }

    fn broadcast(&mut self, out: &mut Outbox) {
        self.phase = Phase::Begin;
        let with_keys = self.config.key_policy != KeyPolicy::PreProvisioned;
        let payload = json(&self.roster(with_keys));
        for &(id, _) in &self.members {
            out.send(Envelope::new(self.attempt, PartyId::Dealer, PartyId::Actor(id), MessageKind::XBroadcast, payload.clone()));
        }
    }

    fn is_member(&self, party: PartyId) -> Option<u32> {
        match party {
            PartyId::Actor(id) if self.members.iter().any(|m| m.0 == id) => Some(id),
            _ => None,
        }
    }

    fn handle(&mut self, env: Envelope, tick: u64, out: &mut Outbox) {
        if self.phase == Phase::Done || env.attempt != self.attempt {
            return;
        }
        let Some(sender) = self.is_member(env.from) else {
            return;
        };
        match (env.kind, self.phase) {
            (MessageKind::KeyAnnounce, Phase::Keys) => {
                let key = serde_json::from_slice::<KeyWire>(&env.payload)
                    .ok()
                    .and_then(|w| hex::decode(w.key).ok())
                    .and_then(|b| b.try_into().ok());
                if let Some(key) = key {
                    self.announced.insert(sender, key);
                }
                if self.announced.len() == self.members.len() {
                    self.deadline = tick + self.config.tau;
                    self.broadcast(out);
                }
            }
            (MessageKind::EncryptedBundle, Phase::Begin) => {
                let Ok(sealed) = SealedBundle::from_bytes(&env.payload) else {
                    return;
                };
                if sealed.sender != sender || self.is_member(PartyId::Actor(sealed.recipient)).is_none() {
                    return;
                }
                self.begin_inbox
                    .entry(sender)
                    .or_default()
                    .insert(sealed.recipient, env.payload);
                if self.begin_complete() {
                    self.fan_out(tick, out);
                }
            }
            (MessageKind::AggregateReport, Phase::Complete) => {
                if let Ok(report) = serde_json::from_slice::<ReportWire>(&env.payload) {
                    self.reports.entry(sender).or_insert(report);
                }
                if self.reports.len() == self.members.len() {
                    self.finalize(tick, out);
                }
            }
            _ => {}
        }
    }

    fn responded(&self, id: u32) -> bool {
        self.begin_inbox
            .get(&id)
            .is_some_and(|m| m.len() == self.members.len())
    }

    fn begin_complete(&self) -> bool {
        self.members.iter().all(|&(id, _)| self.responded(id))
    }

    fn fan_out(&mut self, tick: u64, out: &mut Outbox) {
        self.phase = Phase::Complete;
        self.deadline = tick + self.config.tau;
        for &(recipient, _) in &self.members {
            for &(sender, _) in &self.members {
                let payload = self.begin_inbox[&sender][&recipient].clone();
                out.send(Envelope::new(self.attempt, PartyId::Dealer, PartyId::Actor(recipient), MessageKind::EncryptedBundle, payload));
            }
        }
    }

    fn finalize(&mut self, tick: u64, out: &mut Outbox) {
        let abort = self.members.iter().find_map(|&(id, _)| match self.reports.get(&id) {
            Some(ReportWire::Abort { offender, cause }) => Some((id, *offender, cause.clone())),
            _ => None,
        });
        if let Some((reporter, offender, cause)) = abort {
            let payload = json(&serde_json::json!({"reporter": reporter, "offender": offender}));
            out.event(self.event(tick, "abort", &payload, Some(cause.clone())));
            return self.finish(
                tick,
                CeremonyOutcome::Aborted {
                    reporter,
                    offender,
                    cause,
                },
                out,
            );
        }
        let publics: BTreeMap<u32, String> = self
            .reports
            .iter()
            .filter_map(|(&id, r)| match r {
                ReportWire::Ok { public } => Some((id, public.clone())),
                _ => None,
            })
            .collect();
        let distinct: BTreeSet<&String> = publics.values().collect();
        if distinct.len() == 1 {
            let public = publics.values().next().unwrap().clone();
            out.event(self.event(tick, "published-key", &hex::decode(&public).unwrap_or_default(), None));
            self.finish(tick, CeremonyOutcome::Published { public }, out);
        } else {
            out.event(self.event(tick, "disagreement", &json(&publics), None));
            self.finish(tick, CeremonyOutcome::Disagreement { publics }, out);
        }
    }

    fn on_tick(&mut self, tick: u64, out: &mut Outbox) {
        if self.phase == Phase::Done || tick < self.deadline {
            return;
        }
        if self.phase == Phase::Complete
            && self
                .reports
                .values()
                .any(|r| matches!(r, ReportWire::Abort { .. }))
        {
            return self.finalize(tick, out);
        }
        let missing: Vec<u32> = self
            .members
            .iter()
            .map(|m| m.0)
            .filter(|&id| match self.phase {
                Phase::Keys => !self.announced.contains_key(&id),
                Phase::Begin => !self.responded(id),
                _ => !self.reports.contains_key(&id),
            })
            .collect();
        let phase = match self.phase {
            Phase::Keys => "keys",
            Phase::Begin => "begin",
            _ => "complete",
        };
        let payload = json(&serde_json::json!({"phase": phase, "missing": missing}));
        out.event(self.event(tick, "retry", &payload, Some("timeout".into())));
        self.unresponsive.extend(missing);
        self.start_attempt(tick, out);
    }
}

/// Everything a finished ceremony leaves behind.
pub struct CeremonyRun<G: Group> {
    pub config: SwarmConfig,
    pub behaviors: Behaviors,
    pub transcript: Transcript,
    pub outcome: CeremonyOutcome,
    /// Number of attempts the dealer started.
    pub attempts: u32,
    /// Swarm of the last attempt, as `(actor id, x)`.
    pub members: Vec<(u32, G::Scalar)>,
    pub ledger: Ledger<G>,
    actors: BTreeMap<u32, Actor<G>>,
}

impl<G: Group> CeremonyRun<G> {
    pub fn actor(&self, id: u32) -> Option<&Actor<G>> {
        self.actors.get(&id)
    }

    pub fn actors(&self) -> impl Iterator<Item = &Actor<G>> {
        self.actors.values()
    }

    pub fn member_ids(&self) -> Vec<u32> {
        self.members.iter().map(|m| m.0).collect()
    }

    pub fn aggregate_public(&self) -> Option<G::Element> {
        match &self.outcome {
            CeremonyOutcome::Published { public } => element_from_hex::<G>(public),
            _ => None,
        }
    }

    /// Final shares of the last swarm, for actors that completed.
    pub fn shares(&self) -> Vec<(u32, Share<G::Scalar>)> {
        self.members
            .iter()
            .filter_map(|&(id, _)| {
                let a = self.actors.get(&id)?;
                (a.session_attempt() == Some(self.attempts))
                    .then(|| a.result().map(|r| (id, r.my_share)))
                    .flatten()
            })
            .collect()
    }

    pub fn key_material(&self) -> Option<KeyMaterial<G>> {
        Some(KeyMaterial {
            aggregate_public: self.aggregate_public()?,
            t: self.config.t,
            holders: self.shares(),
        })
    }

    /// Payloads of every envelope the dealer sent or received.
    pub fn dealer_observed(&self) -> Vec<Vec<u8>> {
        self.transcript
            .records()
            .iter()
            .filter(|r| {
                MessageKind::parse(&r.kind).is_some() && (r.from == "dealer" || r.to == "dealer")
            })
            .map(|r| r.payload())
            .collect()
    }
}

/// Runs Algorithm-1 style key generation end to end.
///
/// Protocol failures end up in [`CeremonyRun::outcome`]; only invalid
/// configurations are errors.
pub fn run_ceremony<G: Group>(
    config: &SwarmConfig,
    behaviors: &Behaviors,
) -> Result<CeremonyRun<G>, SimError> {
    config.validate()?;
    config.validate_behaviors(behaviors)?;
    if config.backend.name() != G::NAME {
        return Err(SimError::Config(format!(
            "configuration names backend {} but the ceremony runs on {}",
            config.backend,
            G::NAME
        )));
    }
    let seed = config.seed;
    let mut transcript = Transcript::default();
    let header = json(&serde_json::json!({"config": config, "behaviors": behaviors}));
    transcript.push(Record::event(0, 0, PartyId::Dealer, "config", &header, None));

    let mut keypairs: BTreeMap<u32, EncryptionKeypair> = (1..=config.population as u32)
        .map(|id| (id, EncryptionKeypair::generate(&mut derive_rng(seed, "encryption-key", id as u64))))
        .collect();
    let directory: BTreeMap<u32, [u8; 32]> = keypairs.iter().map(|(&id, kp)| (id, kp.public())).collect();
    let mut actors: BTreeMap<u32, Actor<G>> = BTreeMap::new();
    for id in 1..=config.population as u32 {
        actors.insert(
            id,
            Actor {
                id,
                behavior: behaviors.get(id),
                rng: derive_rng(seed, "actor", id as u64),
                long_term: keypairs.remove(&id).unwrap(),
                ephemeral: None,
                directory: directory.clone(),
                checks_enabled: config.checks_enabled,
                embed_shares: config.embed_shares,
                session: None,
                received: Vec::new(),
            },
        );
    }
    let mut dealer = Dealer::<G> {
        config: config.clone(),
        rng: derive_rng(seed, "dealer", 0),
        directory,
        unresponsive: BTreeSet::new(),
        attempt: 0,
        phase: Phase::Begin,
        deadline: 0,
        members: Vec::new(),
        announced: BTreeMap::new(),
        begin_inbox: BTreeMap::new(),
        reports: BTreeMap::new(),
        outcome: None,
    };
    let mut transport = Transport::new(config.drop_prob, derive_rng(seed, "transport", 0));
    let mut ledger = Ledger::<G>::default();
    let mut leaked: BTreeSet<(u32, u32)> = BTreeSet::new();

    let flush = |out: Outbox, tick: u64, transport: &mut Transport, transcript: &mut Transcript| {
        for item in out.items {
            match item {
                Outgoing::Envelope(env) => transport.send(tick, env, transcript),
                Outgoing::Event(r) => transcript.push(r),
            }
        }
    };

    let mut out = Outbox::default();
    dealer.start_attempt(0, &mut out);
    flush(out, 0, &mut transport, &mut transcript);

    let tick_limit = (config.max_attempts as u64 + 1) * (4 * config.tau + 8);
    let mut tick = 0;
    while dealer.outcome.is_none() || !transport.is_idle() {
        tick += 1;
        if tick > tick_limit && dealer.outcome.is_none() {
            let mut out = Outbox::default();
            dealer.finish(tick, CeremonyOutcome::Failed { reason: "tick limit reached".into() }, &mut out);
            flush(out, tick, &mut transport, &mut transcript);
        }
        for env in transport.deliver(tick) {
            let mut out = Outbox::default();
            match env.to {
                PartyId::Dealer => dealer.handle(env, tick, &mut out),
                PartyId::Actor(id) => {
                    if let Some(a) = actors.get_mut(&id) {
                        a.handle(env, tick, config.key_policy, &mut out);
                    }
                }
                PartyId::Ledger => {
                    if let PartyId::Actor(id) = env.from {
                        if let Some(post) = LedgerPost::<G>::from_payload(id, &env.payload) {
                            ledger.append(post);
                        }
                    }
                }
            }
            flush(out, tick, &mut transport, &mut transcript);
        }
        if dealer.outcome.is_some() {
            continue;
        }
        // A colluding dealer hands each rogue actor the sum of the other
        // contributions as soon as they exist.
        let mut out = Outbox::default();
        for (&rid, rogue) in &actors {
            let Some(s) = &rogue.session else { continue };
            if !s.awaiting_leak || s.attempt != dealer.attempt || leaked.contains(&(rid, s.attempt)) {
                continue;
            }
            let mut sum = G::identity();
            let mut ready = true;
            for &(id, _) in &s.members {
                if id == rid {
                    continue;
                }
                match actors[&id].session.as_ref().filter(|o| o.attempt == s.attempt).and_then(|o| o.state.as_ref()) {
                    Some(st) if !actors[&id].behavior.is_rogue() => sum = sum + st.proof().public,
                    _ => ready = false,
                }
            }
            if ready {
                leaked.insert((rid, s.attempt));
                let payload = json(&LeakWire { sum: element_hex::<G>(&sum) });
                out.send(Envelope::new(s.attempt, PartyId::Dealer, PartyId::Actor(rid), MessageKind::CollusionLeak, payload));
            }
        }
        dealer.on_tick(tick, &mut out);
        flush(out, tick, &mut transport, &mut transcript);
    }

    Ok(CeremonyRun {
        config: config.clone(),
        behaviors: behaviors.clone(),
        transcript,
        outcome: dealer.outcome.unwrap(),
        attempts: dealer.attempt,
        members: dealer.members,
        ledger,
        actors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Backend, DefaultToy, Ed25519};
    use crate::shamir::interpolate_at_zero;

    type T = DefaultToy;

    fn toy(n: usize, t: usize, seed: u64) -> SwarmConfig {
        SwarmConfig::new(Backend::Toy, n, t, seed)
    }

    fn dlog(p: &<T as Group>::Element) -> Option<u64> {
        // elements in the prime-order subgroup are 8k; the dlog of 8k is k mod q
        (p.value() % 8 == 0).then(|| p.value() / 8)
    }

    #[test]
    fn honest_toy_ceremony_publishes_the_sum_of_contributions() {
        let run = run_ceremony::<T>(&toy(5, 3, 7), &Behaviors::honest()).unwrap();
        assert!(run.outcome.is_published(), "{:?}", run.outcome);
        assert_eq!(run.attempts, 1);
        let key = run.aggregate_public().unwrap();
        let sum = run
            .member_ids()
            .iter()
            .map(|&id| run.actor(id).unwrap().keygen_state().unwrap().secret().reduce::<crate::group::Fp<1019>>())
            .fold(crate::group::Fp::<1019>::zero(), |a, b| a + b);
        assert_eq!(dlog(&key), Some(sum.value()));
        let shares: Vec<_> = run.shares().into_iter().map(|s| s.1).collect();
        assert_eq!(shares.len(), 5);
        assert_eq!(interpolate_at_zero(&shares[1..4]).unwrap(), sum);
        for id in run.member_ids() {
            assert_eq!(run.actor(id).unwrap().result().unwrap().aggregate_public, key);
        }
    }

    #[test]
    fn single_actor_ceremony() {
        let run = run_ceremony::<T>(&toy(1, 1, 3), &Behaviors::honest()).unwrap();
        assert!(run.outcome.is_published());
        assert_eq!(run.shares().len(), 1);
    }

    #[test]
    fn ed25519_ceremony_publishes() {
        let cfg = SwarmConfig::new(Backend::Ed25519, 4, 2, 1);
        let run = run_ceremony::<Ed25519>(&cfg, &Behaviors::honest()).unwrap();
        assert!(run.outcome.is_published());
        let km = run.key_material().unwrap();
        let pts: Vec<_> = km.holders.iter().map(|h| h.1).collect();
        let a = interpolate_at_zero(&pts[..2]).unwrap();
        assert_eq!(Ed25519::mul_base(&a), km.aggregate_public);
    }

    #[test]
    fn same_seed_same_bytes() {
        for policy in [KeyPolicy::PreProvisioned, KeyPolicy::Ephemeral] {
            let mut cfg = toy(4, 2, 11);
            cfg.key_policy = policy;
            cfg.drop_prob = 0.05;
            let a = run_ceremony::<T>(&cfg, &Behaviors::honest()).unwrap();
            let b = run_ceremony::<T>(&cfg, &Behaviors::honest()).unwrap();
            assert_eq!(a.transcript.to_jsonl(), b.transcript.to_jsonl());
            cfg.seed = 12;
            let c = run_ceremony::<T>(&cfg, &Behaviors::honest()).unwrap();
            assert_ne!(a.transcript.to_jsonl(), c.transcript.to_jsonl());
        }
    }

    #[test]
    fn withholder_triggers_retry_with_new_swarm() {
        let b = Behaviors::honest().with(2, ActorBehavior::Withhold);
        let run = run_ceremony::<T>(&toy(5, 3, 5), &b).unwrap();
        assert!(run.outcome.is_published());
        assert_eq!(run.attempts, 2);
        assert!(!run.member_ids().contains(&2));
        assert_eq!(run.transcript.of_kind("retry").count(), 1);
        let withholder = run.actor(2).unwrap();
        assert!(withholder
            .received()
            .iter()
            .all(|e| e.attempt == 1 && e.kind == MessageKind::XBroadcast));
    }

    #[test]
    fn bundles_are_gated_on_every_response() {
        let b = Behaviors::honest().with(3, ActorBehavior::Withhold);
        let run = run_ceremony::<T>(&toy(4, 2, 9), &b).unwrap();
        let recs = run.transcript.records();
        for attempt in 1..=run.attempts {
            let last_in = recs
                .iter()
                .filter(|r| r.attempt == attempt && r.kind == "encrypted-bundle" && r.to == "dealer")
                .map(|r| r.tick)
                .max();
            let first_out = recs
                .iter()
                .filter(|r| r.attempt == attempt && r.kind == "encrypted-bundle" && r.from == "dealer")
                .map(|r| r.tick)
                .min();
            if let Some(out) = first_out {
                assert!(out > last_in.unwrap());
            }
        }
        assert!(recs
            .iter()
            .all(|r| !(r.attempt == 1 && r.kind == "encrypted-bundle" && r.from == "dealer")));
    }

    #[test]
    fn rogue_key_is_caught_at_check_three() {
        let b = Behaviors::honest().with(4, ActorBehavior::RogueKey);
        let cfg = SwarmConfig::new(Backend::Ed25519, 4, 2, 21);
        let run = run_ceremony::<Ed25519>(&cfg, &b).unwrap();
        match &run.outcome {
            CeremonyOutcome::Aborted { offender, cause, .. } => {
                assert_eq!(*offender, 4);
                assert_eq!(cause, "check3:proof");
            }
            other => panic!("{other:?}"),
        }
        let rejections = run
            .transcript
            .of_kind("check")
            .filter(|r| r.to == "actor:4" && r.from != "actor:4")
            .filter(|r| r.verdict.as_deref() == Some("check3:proof"))
            .count();
        assert_eq!(rejections, 3);
    }

    #[test]
    fn low_order_rogue_is_caught_at_check_one() {
        let b = Behaviors::honest().with(1, ActorBehavior::RogueKeyLowOrder);
        for cfg in [toy(4, 2, 2), SwarmConfig::new(Backend::Ed25519, 4, 2, 2)] {
            let outcome = if cfg.backend == Backend::Toy {
                run_ceremony::<T>(&cfg, &b).unwrap().outcome
            } else {
                run_ceremony::<Ed25519>(&cfg, &b).unwrap().outcome
            };
            match outcome {
                CeremonyOutcome::Aborted { offender, cause, .. } => {
                    assert_eq!(offender, 1);
                    assert_eq!(cause, "check1:low-order");
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn unchecked_rogue_forces_its_target() {
        let b = Behaviors::honest().with(4, ActorBehavior::RogueKey);
        let mut cfg = toy(4, 2, 8);
        cfg.checks_enabled = false;
        let run = run_ceremony::<T>(&cfg, &b).unwrap();
        let key = run.aggregate_public().expect("published without checks");
        let target = run.actor(4).unwrap().rogue_target().unwrap();
        assert_eq!(key, T::mul_base(&target));
        let shares: Vec<_> = run.shares().into_iter().map(|s| s.1).collect();
        let interpolated = interpolate_at_zero(&shares[..2]).unwrap();
        assert_ne!(T::mul_base(&interpolated), key);
    }

    #[test]
    fn equivocation_and_garbage_show_up_on_the_ledger() {
        let cfg = toy(4, 2, 31);
        let run = run_ceremony::<T>(&cfg, &Behaviors::honest().with(2, ActorBehavior::EquivocateA)).unwrap();
        assert!(matches!(run.outcome, CeremonyOutcome::Disagreement { .. }));
        assert!(matches!(
            ledger_check_all_for(&run),
            crate::sim::LedgerVerdict::Reject { .. }
        ));
        let run = run_ceremony::<T>(&cfg, &Behaviors::honest().with(2, ActorBehavior::GarbageShare)).unwrap();
        assert!(run.outcome.is_published());
        assert!(matches!(
            ledger_check_all_for(&run),
            crate::sim::LedgerVerdict::Reject { .. }
        ));
        let run = run_ceremony::<T>(&cfg, &Behaviors::honest()).unwrap();
        assert_eq!(ledger_check_all_for(&run), crate::sim::LedgerVerdict::Accept);
    }

    fn ledger_check_all_for(run: &CeremonyRun<T>) -> crate::sim::LedgerVerdict {
        crate::sim::ledger_check_all(&run.ledger, &run.member_ids(), run.config.t)
    }

    #[test]
    fn dealer_sees_no_plaintext() {
        let run = run_ceremony::<T>(&toy(5, 3, 4), &Behaviors::honest()).unwrap();
        for payload in run.dealer_observed() {
            assert!(!payload.windows(8).any(|w| w == b"nshamir/"));
        }
    }

    #[test]
    fn key_policies_all_work() {
        for policy in [KeyPolicy::PreProvisioned, KeyPolicy::Ephemeral, KeyPolicy::DealerDistributed] {
            let mut cfg = toy(3, 2, 6);
            cfg.key_policy = policy;
            let run = run_ceremony::<T>(&cfg, &Behaviors::honest()).unwrap();
            assert!(run.outcome.is_published(), "{policy:?}");
            assert_eq!(
                run.transcript.of_kind("warning").count(),
                usize::from(policy == KeyPolicy::DealerDistributed)
            );
        }
    }

    #[test]
    fn x_modes_all_work() {
        for mode in [XMode::Sequential, XMode::DealerRandom, XMode::IdentityDerived] {
            let mut cfg = toy(4, 3, 13);
            cfg.x_mode = mode;
            let run = run_ceremony::<T>(&cfg, &Behaviors::honest()).unwrap();
            assert!(run.outcome.is_published(), "{mode:?}");
        }
    }

    #[test]
    fn exhausted_population_fails_without_panicking() {
        let mut cfg = toy(3, 2, 1);
        cfg.population = 3;
        let run = run_ceremony::<T>(&cfg, &Behaviors::honest().with(1, ActorBehavior::Withhold)).unwrap();
        assert!(matches!(run.outcome, CeremonyOutcome::Failed { .. }));
        let mut cfg = toy(3, 2, 1);
        cfg.drop_prob = 1.0;
        cfg.max_attempts = 2;
        let run = run_ceremony::<T>(&cfg, &Behaviors::honest()).unwrap();
        assert!(matches!(run.outcome, CeremonyOutcome::Failed { .. }));
    }

    #[test]
    fn lossy_network_eventually_succeeds() {
        let mut cfg = toy(3, 2, 77);
        cfg.drop_prob = 0.02;
        cfg.population = 30;
        cfg.max_attempts = 10;
        let run = run_ceremony::<T>(&cfg, &Behaviors::honest()).unwrap();
        assert!(run.outcome.is_published(), "{:?}", run.outcome);
    }

    #[test]
    fn backend_mismatch_is_a_config_error() {
        assert!(run_ceremony::<Ed25519>(&toy(3, 2, 1), &Behaviors::honest()).is_err());
    }
}
