//! The attacks the protocol is designed around, as runnable scenarios.

use serde::Serialize;

use super::ceremony::{derive_rng, run_ceremony, CeremonyRun};
use super::config::{ActorBehavior, Behaviors, SwarmConfig};
use super::keys::KeyMaterial;
use super::ledger::combinations;
use super::signing::{make_signers, request_mu};
use super::SimError;
use crate::group::{element_hex, scalar_hex, Field, Group};
use crate::shamir::{interpolate_at_zero, Share};
use crate::threshold::{recover_from_nonce_reuse, ThresholdError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub checker: u32,
    pub check: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RogueControl {
    pub published: Option<String>,
    pub target: Option<String>,
    /// The aggregate key equals the key the rogue actor chose.
    pub forced: bool,
    /// Interpolating the shares gives the secret of the published key.
    pub shares_explain_key: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RogueKeyReport {
    pub attack: &'static str,
    pub backend: &'static str,
    pub rogue: u32,
    pub low_order: bool,
    pub outcome: String,
    pub published: Option<String>,
    pub honest_actors: usize,
    pub detections: Vec<Detection>,
    pub control: Option<RogueControl>,
}

impl RogueKeyReport {
    /// Every honest actor rejected the rogue contribution and no key came out.
    pub fn prevented(&self) -> bool {
        self.published.is_none() && self.detections.len() == self.honest_actors
    }
}

fn detections<G: Group>(run: &CeremonyRun<G>, rogue: u32) -> Vec<Detection> {
    let target = format!("actor:{rogue}");
    let me = target.clone();
    run.transcript
        .of_kind("check")
        .filter(|r| r.attempt == run.attempts && r.to == target && r.from != me)
        .filter_map(|r| {
            let verdict = r.verdict.as_deref()?;
            let checker = r.from.strip_prefix("actor:")?.parse().ok()?;
            (verdict != "ok" && verdict != "unchecked").then(|| Detection {
                checker,
                check: verdict.to_string(),
            })
        })
        .collect()
}

/// One rogue actor against an otherwise honest swarm, optionally followed
/// by a control run with the contribution checks turned off.
pub fn attack_rogue_key<G: Group>(
    config: &SwarmConfig,
    rogue: u32,
    low_order: bool,
    with_control: bool,
) -> Result<RogueKeyReport, SimError> {
    let behavior = if low_order {
        ActorBehavior::RogueKeyLowOrder
    } else {
        ActorBehavior::RogueKey
    };
    let behaviors = Behaviors::honest().with(rogue, behavior);
    let run = run_ceremony::<G>(config, &behaviors)?;
    let control = if with_control {
        let mut cfg = config.clone();
        cfg.checks_enabled = false;
        let ctl = run_ceremony::<G>(&cfg, &behaviors)?;
        let published = ctl.aggregate_public();
        let target = ctl.actor(rogue).and_then(|a| a.rogue_target());
        let shares: Vec<_> = ctl.shares().into_iter().map(|s| s.1).collect();
        let explained = match (published, shares.len() >= cfg.t) {
            (Some(key), true) => interpolate_at_zero(&shares[..cfg.t])
                .map(|s| G::mul_base(&s) == key)
                .unwrap_or(false),
            _ => false,
        };
        Some(RogueControl {
            published: published.map(|p| element_hex::<G>(&p)),
            target: target.map(|t| element_hex::<G>(&G::mul_base(&t))),
            forced: matches!((published, target), (Some(p), Some(t)) if p == G::mul_base(&t)),
            shares_explain_key: explained,
        })
    } else {
        None
    };
    Ok(RogueKeyReport {
        attack: "rogue-key",
        backend: G::NAME,
        rogue,
        low_order,
        outcome: run.outcome.summary(),
        published: run.aggregate_public().map(|p| element_hex::<G>(&p)),
        honest_actors: run.members.iter().filter(|m| m.0 != rogue).count(),
        detections: detections(&run, rogue),
        control,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonceOutcome {
    Recovered,
    /// The algebra ran but the value is not the share.
    WrongValue,
    /// `mu_1 = mu_2`; nothing to solve.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NonceReport {
    pub attack: &'static str,
    pub backend: &'static str,
    pub victim: u32,
    pub behavior: String,
    /// The victim refused a second response for the same session, so the
    /// dealer had to open a fresh one.
    pub needed_fresh_session: bool,
    pub mu1: String,
    pub mu2: String,
    pub s1: String,
    pub s2: String,
    pub outcome: NonceOutcome,
    pub recovered: Option<String>,
    pub actual: String,
    /// A third response predicted from the recovered share and nonce matched.
    pub third_probe_matches: Option<bool>,
}

/// A malicious dealer asks the victim for two round-two responses on the
/// same message with different multipliers `mu = l k`, then solves
/// `S_1 - S_2 = (mu_1 - mu_2) s` for the share.
pub fn attack_deterministic_nonce<G: Group>(
    key: &KeyMaterial<G>,
    victim: u32,
    behavior: ActorBehavior,
    message: &[u8],
    seed: u64,
) -> Result<NonceReport, SimError> {
    let behaviors = Behaviors::honest().with(victim, behavior);
    let mut signer = make_signers(key, &[victim], &behaviors, seed)?.remove(0);
    let mut rng = derive_rng(seed, "malicious-dealer", victim as u64);
    let a = key.aggregate_public;
    let mut probe = |signer: &mut super::signing::Signer<G>, session: u64, r_v: G::Element| {
        let r = r_v + G::mul_base(&G::Scalar::random(&mut rng));
        let l = G::Scalar::random(&mut rng);
        let res = signer.round2(session, &r, &l, &a, message);
        (res, request_mu::<G>(&r, &l, &a, message))
    };
    let r_v = signer.round1(1, message);
    let (s1, mu1) = probe(&mut signer, 1, r_v);
    let s1 = s1?;
    let (mut s2, mut mu2) = probe(&mut signer, 1, r_v);
    let needed_fresh_session = s2 == Err(ThresholdError::NonceReused);
    if needed_fresh_session {
        let r_v2 = signer.round1(2, message);
        (s2, mu2) = probe(&mut signer, 2, r_v2);
    }
    let s2 = s2?;
    let actual = signer.share().y;
    let (outcome, recovered, third) = match recover_from_nonce_reuse(s1, s2, mu1, mu2) {
        None => (NonceOutcome::Inconclusive, None, None),
        Some((share, nonce)) => {
            let r_v3 = signer.round1(3, message);
            let (s3, mu3) = probe(&mut signer, 3, r_v3);
            let third = s3.ok().map(|s3| s3 == nonce + mu3 * share);
            let outcome = if share == actual {
                NonceOutcome::Recovered
            } else {
                NonceOutcome::WrongValue
            };
            (outcome, Some(share), third)
        }
    };
    Ok(NonceReport {
        attack: "det-nonce",
        backend: G::NAME,
        victim,
        behavior: behavior.label().to_string(),
        needed_fresh_session,
        mu1: scalar_hex(&mu1),
        mu2: scalar_hex(&mu2),
        s1: scalar_hex(&s1),
        s2: scalar_hex(&s2),
        outcome,
        recovered: recovered.map(|s| scalar_hex(&s)),
        actual: scalar_hex(&actual),
        third_probe_matches: third,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollusionMode {
    /// Corrupted at key generation and later, fewer than `t` in total.
    Search,
    /// `d >= t`: the keygen-time colluders hold enough shares already.
    Direct,
    /// Nobody kept the x-coordinates.
    Unavailable,
    /// Not enough shares even with every guess right.
    Insufficient,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CollusionReport {
    pub attack: &'static str,
    pub backend: &'static str,
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub extra: usize,
    pub mode: CollusionMode,
    /// `C(n - d, t - d)`.
    pub search_space: u128,
    pub tried: u64,
    /// Candidates whose secret opens the published key.
    pub matches: u64,
    pub recovered: Option<String>,
    pub actual: Option<String>,
    pub success: bool,
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Collusion after the fact. The first `d` swarm members were corrupt during
/// key generation and remember every x-coordinate; the next `extra` members
/// are corrupted later and hand over share values without knowing their x.
///
/// Every candidate x-set is tried, paired with the late actors by
/// increasing identifier, and the candidate secret is tested against the
/// published key.
pub fn attack_collusion_search<G: Group>(
    run: &CeremonyRun<G>,
    d: usize,
    extra: usize,
) -> Result<CollusionReport, SimError> {
    let key = run
        .aggregate_public()
        .ok_or_else(|| SimError::KeyMaterial("ceremony did not publish a key".into()))?;
    let (n, t) = (run.members.len(), run.config.t);
    if d + extra > n {
        return Err(SimError::Config(format!("cannot corrupt {} of {n} actors", d + extra)));
    }
    let shares = run.shares();
    if shares.len() != n {
        return Err(SimError::KeyMaterial("not every actor holds a share".into()));
    }
    let actual = key_secret::<G>(&shares, t);
    let mut report = CollusionReport {
        attack: "collusion",
        backend: G::NAME,
        n,
        t,
        d,
        extra,
        mode: CollusionMode::Search,
        search_space: 0,
        tried: 0,
        matches: 0,
        recovered: None,
        actual: actual.map(|s| scalar_hex(&s)),
        success: false,
    };
    let finish = |report: &mut CollusionReport, secret: Option<G::Scalar>| {
        report.recovered = secret.map(|s| scalar_hex(&s));
        report.success = secret.is_some_and(|s| G::mul_base(&s) == key);
    };
    let early: Vec<Share<G::Scalar>> = shares[..d].iter().map(|s| s.1).collect();
    if d == 0 {
        report.mode = CollusionMode::Unavailable;
        return Ok(report);
    }
    if d >= t {
        report.mode = CollusionMode::Direct;
        report.search_space = 1;
        report.tried = 1;
        finish(&mut report, interpolate_at_zero(&early[..t]).ok());
        report.matches = u64::from(report.success);
        return Ok(report);
    }
    let need = t - d;
    report.search_space = binomial((n - d) as u64, need as u64);
    if extra < need {
        report.mode = CollusionMode::Insufficient;
        return Ok(report);
    }
    // late actors only know their y values, in identifier order
    let late_y: Vec<G::Scalar> = shares[d..d + need].iter().map(|s| s.1.y).collect();
    let known_x: Vec<G::Scalar> = early.iter().map(|s| s.x).collect();
    let free_x: Vec<G::Scalar> = run
        .members
        .iter()
        .map(|m| m.1)
        .filter(|x| !known_x.contains(x))
        .collect();
    let mut found = None;
    for xs in combinations(&free_x, need) {
        report.tried += 1;
        let mut candidate = early.clone();
        candidate.extend(xs.iter().zip(&late_y).map(|(&x, &y)| Share::new(x, y)));
        if let Ok(s) = interpolate_at_zero(&candidate) {
            if G::mul_base(&s) == key {
                report.matches += 1;
                found.get_or_insert(s);
            }
        }
    }
    finish(&mut report, found);
    Ok(report)
}

fn key_secret<G: Group>(shares: &[(u32, Share<G::Scalar>)], t: usize) -> Option<G::Scalar> {
    let pts: Vec<_> = shares.iter().take(t).map(|s| s.1).collect();
    interpolate_at_zero(&pts).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Backend, DefaultToy, Ed25519, Fp};
    use crate::sim::run_ceremony;

    type T = DefaultToy;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(6, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(40, 20), 137846528820);
    }

    #[test]
    fn rogue_report_on_ed25519() {
        let cfg = SwarmConfig::new(Backend::Ed25519, 4, 2, 3);
        let r = attack_rogue_key::<Ed25519>(&cfg, 4, false, false).unwrap();
        assert!(r.prevented());
        assert!(r.detections.iter().all(|d| d.check == "check3:proof"));
        let r = attack_rogue_key::<Ed25519>(&cfg, 2, true, false).unwrap();
        assert!(r.prevented());
        assert!(r.detections.iter().all(|d| d.check == "check1:low-order"));
    }

    #[test]
    fn rogue_control_on_toy() {
        let cfg = SwarmConfig::new(Backend::Toy, 4, 3, 12);
        let r = attack_rogue_key::<T>(&cfg, 4, false, true).unwrap();
        assert!(r.prevented());
        let ctl = r.control.unwrap();
        assert!(ctl.forced);
        assert!(!ctl.shares_explain_key);
        assert_eq!(ctl.published, ctl.target);
    }

    fn key(seed: u64) -> KeyMaterial<T> {
        run_ceremony::<T>(&SwarmConfig::new(Backend::Toy, 5, 3, seed), &Behaviors::honest())
            .unwrap()
            .key_material()
            .unwrap()
    }

    #[test]
    fn deterministic_nonce_leaks_the_share() {
        let k = key(2);
        let r = attack_deterministic_nonce(&k, 3, ActorBehavior::DeterministicNonce, b"pay 5", 1).unwrap();
        assert_eq!(r.outcome, NonceOutcome::Recovered);
        assert_eq!(r.recovered.as_deref(), Some(r.actual.as_str()));
        assert_eq!(r.third_probe_matches, Some(true));
        assert!(!r.needed_fresh_session);
    }

    #[test]
    fn random_nonces_defeat_the_probe() {
        let k = key(2);
        let mut hits = 0;
        for seed in 0..50 {
            let r = attack_deterministic_nonce(&k, 3, ActorBehavior::Honest, b"pay 5", seed).unwrap();
            assert!(r.needed_fresh_session);
            if r.outcome == NonceOutcome::Recovered {
                hits += 1;
            }
        }
        // each trial succeeds with probability 1/1019
        assert!(hits <= 2, "{hits}");
    }

    #[test]
    fn collusion_search_space_and_recovery() {
        let run = run_ceremony::<T>(&SwarmConfig::new(Backend::Toy, 6, 3, 4), &Behaviors::honest()).unwrap();
        let r = attack_collusion_search(&run, 1, 2).unwrap();
        assert_eq!(r.search_space, 10);
        assert_eq!(r.tried, 10);
        assert_eq!(r.matches, 1);
        assert!(r.success);
        assert_eq!(r.recovered, r.actual);

        let r = attack_collusion_search(&run, 3, 0).unwrap();
        assert_eq!(r.mode, CollusionMode::Direct);
        assert_eq!(r.search_space, 1);
        assert!(r.success);

        assert_eq!(attack_collusion_search(&run, 0, 3).unwrap().mode, CollusionMode::Unavailable);
        assert_eq!(attack_collusion_search(&run, 1, 1).unwrap().mode, CollusionMode::Insufficient);
        assert!(attack_collusion_search(&run, 4, 4).is_err());
    }

    #[test]
    fn collusion_secret_matches_oracle() {
        let run = run_ceremony::<T>(&SwarmConfig::new(Backend::Toy, 6, 3, 9), &Behaviors::honest()).unwrap();
        let sum = run
            .member_ids()
            .iter()
            .map(|&id| run.actor(id).unwrap().keygen_state().unwrap().secret().reduce::<Fp<1019>>())
            .fold(Fp::<1019>::zero(), |a, b| a + b);
        let r = attack_collusion_search(&run, 2, 1).unwrap();
        assert_eq!(r.search_space, 4);
        assert_eq!(r.recovered, Some(scalar_hex(&sum)));
    }
}
