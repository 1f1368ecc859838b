//! Offline re-verification of a ceremony transcript.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::ceremony::{ReportWire, XBroadcastWire};
use super::ledger::{combinations, ledger_check_all, Ledger, LedgerPost};
use super::transcript::{Record, Transcript};
use super::SimError;
use crate::group::{element_hex, scalar_from_hex, Backend, DefaultToy, Ed25519, Group};
use crate::keygen::{split_public, verify_contribution};
use crate::shamir::{interpolate_at_zero, Share};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReplayCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub backend: String,
    pub attempts: u32,
    pub outcome: String,
    pub checks: Vec<ReplayCheck>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn actor_of(party: &str) -> Option<u32> {
    party.strip_prefix("actor:")?.parse().ok()
}

struct Checks(Vec<ReplayCheck>);

impl Checks {
    fn add(&mut self, name: &'static str, failures: Vec<String>, what: &str) {
        let passed = failures.is_empty();
        let detail = if passed {
            what.to_string()
        } else {
            failures.join("; ")
        };
        self.0.push(ReplayCheck { name, passed, detail });
    }
}

/// Replays every check recorded in a ceremony transcript.
pub fn verify_transcript<G: Group>(transcript: &Transcript) -> Result<ReplayReport, SimError> {
    let bad = |m: &str| SimError::Config(format!("transcript: {m}"));
    let recs = transcript.records();
    let header = recs
        .first()
        .filter(|r| r.kind == "config")
        .and_then(Record::payload_json)
        .ok_or_else(|| bad("missing config record"))?;
    let backend = header["config"]["backend"].as_str().unwrap_or_default().to_string();
    if backend != G::NAME {
        return Err(bad(&format!("made with backend `{backend}`")));
    }
    let t = header["config"]["t"].as_u64().ok_or_else(|| bad("config lacks t"))? as usize;
    let mut rosters: BTreeMap<u32, Vec<(u32, G::Scalar)>> = BTreeMap::new();
    for r in transcript.of_kind("attempt") {
        let roster: XBroadcastWire =
            serde_json::from_slice(&r.payload()).map_err(|_| bad("unreadable attempt record"))?;
        let members = roster
            .members
            .iter()
            .map(|m| Some((m.id, scalar_from_hex::<G::Scalar>(&m.x)?)))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("bad x-coordinate in roster"))?;
        rosters.insert(r.attempt, members);
    }
    let outcome = transcript
        .of_kind("outcome")
        .last()
        .ok_or_else(|| bad("no outcome record"))?;
    let final_attempt = outcome.attempt;
    let mut checks = Checks(Vec::new());

    // The dealer forwards nothing before every member's bundles are in.
    let mut gating = Vec::new();
    for (&attempt, members) in &rosters {
        let n = members.len();
        let first_out = recs
            .iter()
            .position(|r| r.attempt == attempt && r.kind == "encrypted-bundle" && r.from == "dealer");
        let Some(first_out) = first_out else { continue };
        let mut per_sender: BTreeMap<u32, BTreeSet<String>> = BTreeMap::new();
        for r in &recs[..first_out] {
            if r.attempt == attempt && r.kind == "encrypted-bundle" && r.to == "dealer" && !r.is_dropped() {
                if let Some(id) = actor_of(&r.from) {
                    per_sender.entry(id).or_default().insert(r.payload_hex.clone());
                }
            }
        }
        for &(id, _) in members {
            let got = per_sender.get(&id).map_or(0, |s| s.len());
            if got < n {
                gating.push(format!("attempt {attempt}: fan-out before actor {id} answered ({got}/{n})"));
            }
        }
    }
    checks.add("gating", gating, "fan-out only after all n responses");

    // Recorded verdicts agree with a fresh run of the checks.
    let mut verdicts = Vec::new();
    let mut publics: BTreeMap<(u32, u32), BTreeSet<String>> = BTreeMap::new();
    for r in transcript.of_kind("check") {
        let verdict = r.verdict.clone().unwrap_or_default();
        let payload = r.payload();
        if payload.is_empty() || verdict == "unchecked" || verdict == "misaddressed" {
            continue;
        }
        let Some((commitment, public, response)) = split_public::<G>(&payload) else {
            verdicts.push(format!("unparseable check payload at tick {}", r.tick));
            continue;
        };
        let fresh = match verify_contribution::<G>(&public, &commitment, &response) {
            Ok(()) => "ok",
            Err(f) => f.label(),
        };
        if fresh != verdict {
            verdicts.push(format!("{} on {}: recorded {verdict}, replayed {fresh}", r.from, r.to));
        }
        if let Some(sender) = actor_of(&r.to) {
            publics
                .entry((r.attempt, sender))
                .or_default()
                .insert(element_hex::<G>(&public));
        }
    }
    checks.add("check-verdicts", verdicts, "every recorded verdict reproduces");

    let published = transcript
        .of_kind("published-key")
        .last()
        .and_then(|r| G::decode(&r.payload()));
    let outcome_text = outcome.verdict.clone().unwrap_or_default();
    if let Some(key) = published {
        let members = rosters
            .get(&final_attempt)
            .ok_or_else(|| bad("no roster for the final attempt"))?;
        let ids: Vec<u32> = members.iter().map(|m| m.0).collect();

        let mut sum_failures = Vec::new();
        let mut sum = G::identity();
        for &id in &ids {
            match publics.get(&(final_attempt, id)) {
                Some(set) if set.len() == 1 => {
                    sum = sum + crate::group::element_from_hex::<G>(set.first().unwrap()).unwrap()
                }
                Some(_) => sum_failures.push(format!("actor {id} showed different contributions")),
                None => sum_failures.push(format!("no recorded contribution from actor {id}")),
            }
        }
        if sum_failures.is_empty() && sum != key {
            sum_failures.push("contributions do not add up to the published key".into());
        }
        checks.add("aggregate", sum_failures, "published key is the sum of contributions");

        let mut report_failures = Vec::new();
        let key_hex = element_hex::<G>(&key);
        let mut reported = BTreeSet::new();
        for r in recs.iter().filter(|r| {
            r.attempt == final_attempt && r.kind == "aggregate-report" && r.to == "dealer" && !r.is_dropped()
        }) {
            match serde_json::from_slice::<ReportWire>(&r.payload()) {
                Ok(ReportWire::Ok { public }) if public == key_hex => {
                    reported.extend(actor_of(&r.from));
                }
                _ => report_failures.push(format!("{} reported something else", r.from)),
            }
        }
        for id in &ids {
            if !reported.contains(id) {
                report_failures.push(format!("no report from actor {id}"));
            }
        }
        checks.add("reports", report_failures, "all actors reported the published key");

        let mut ledger = Ledger::<G>::default();
        for r in recs.iter().filter(|r| {
            r.attempt == final_attempt && r.kind == "ledger-post" && !r.is_dropped()
        }) {
            if let Some(post) = actor_of(&r.from).and_then(|id| LedgerPost::<G>::from_payload(id, &r.payload())) {
                ledger.append(post);
            }
        }
        let ledger_failures = match ledger_check_all(&ledger, &ids, t) {
            super::ledger::LedgerVerdict::Accept => vec![],
            v => vec![format!("{v:?}")],
        };
        checks.add("ledger", ledger_failures, "every t-cohort of ledger posts interpolates to the key");

        let shares: Vec<Share<G::Scalar>> = transcript
            .of_kind("share")
            .filter(|r| r.attempt == final_attempt)
            .filter_map(|r| Share::from_bytes(&r.payload()))
            .collect();
        if !shares.is_empty() {
            let mut share_failures = Vec::new();
            for cohort in combinations(&shares, t) {
                match interpolate_at_zero(&cohort) {
                    Ok(s) if G::mul_base(&s) == key => {}
                    _ => {
                        share_failures.push("a t-subset of embedded shares misses the key".to_string());
                        break;
                    }
                }
            }
            checks.add("shares", share_failures, "every t-subset of embedded shares opens the key");
        }
    }

    Ok(ReplayReport {
        backend,
        attempts: final_attempt,
        outcome: outcome_text,
        checks: checks.0,
    })
}

/// [`verify_transcript`] on whichever backend the transcript names.
pub fn verify_transcript_any(transcript: &Transcript) -> Result<ReplayReport, SimError> {
    let backend = transcript
        .of_kind("config")
        .next()
        .and_then(Record::payload_json)
        .and_then(|v| v["config"]["backend"].as_str().map(str::to_string))
        .ok_or_else(|| SimError::Config("transcript: missing config record".into()))?;
    match backend.parse::<Backend>().map_err(SimError::Config)? {
        Backend::Ed25519 => verify_transcript::<Ed25519>(transcript),
        Backend::Toy => verify_transcript::<DefaultToy>(transcript),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_ceremony, ActorBehavior, Behaviors, SwarmConfig};

    #[test]
    fn honest_transcripts_replay_cleanly() {
        let run = run_ceremony::<DefaultToy>(&SwarmConfig::new(Backend::Toy, 5, 3, 1), &Behaviors::honest()).unwrap();
        let text = run.transcript.to_jsonl();
        let report = verify_transcript_any(&Transcript::from_jsonl(&text).unwrap()).unwrap();
        assert!(report.ok(), "{report:?}");
        assert_eq!(report.checks.len(), 6);

        let cfg = SwarmConfig::new(Backend::Ed25519, 3, 2, 1);
        let b = Behaviors::honest().with(1, ActorBehavior::Withhold);
        let run = run_ceremony::<Ed25519>(&cfg, &b).unwrap();
        let report = verify_transcript_any(&run.transcript).unwrap();
        assert!(report.ok(), "{report:?}");
        assert_eq!(report.attempts, 2);
    }

    #[test]
    fn aborted_transcripts_replay_their_verdicts() {
        let cfg = SwarmConfig::new(Backend::Toy, 4, 2, 3);
        let run = run_ceremony::<DefaultToy>(&cfg, &Behaviors::honest().with(2, ActorBehavior::RogueKeyLowOrder)).unwrap();
        let report = verify_transcript_any(&run.transcript).unwrap();
        assert!(report.ok(), "{report:?}");
    }

    #[test]
    fn tampering_is_noticed() {
        let run = run_ceremony::<DefaultToy>(&SwarmConfig::new(Backend::Toy, 4, 2, 2), &Behaviors::honest()).unwrap();
        let text = run.transcript.to_jsonl();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let i = lines.iter().position(|l| l.contains("\"kind\":\"check\"")).unwrap();
        lines[i] = lines[i].replace("\"verdict\":\"ok\"", "\"verdict\":\"check3:proof\"");
        let t = Transcript::from_jsonl(&lines.join("\n")).unwrap();
        assert!(!verify_transcript_any(&t).unwrap().ok());

        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let i = lines.iter().position(|l| l.contains("\"kind\":\"share\"")).unwrap();
        let mut rec: Record = serde_json::from_str(&lines[i]).unwrap();
        let mut bytes = rec.payload();
        bytes[8] ^= 1;
        rec.payload_hex = hex::encode(bytes);
        lines[i] = serde_json::to_string(&rec).unwrap();
        let t = Transcript::from_jsonl(&lines.join("\n")).unwrap();
        let report = verify_transcript_any(&t).unwrap();
        assert!(!report.ok());
        assert!(report.checks.iter().any(|c| c.name == "shares" && !c.passed));
    }

    #[test]
    fn wrong_backend_or_garbage_is_an_error() {
        let run = run_ceremony::<DefaultToy>(&SwarmConfig::new(Backend::Toy, 3, 2, 2), &Behaviors::honest()).unwrap();
        assert!(verify_transcript::<Ed25519>(&run.transcript).is_err());
        assert!(verify_transcript_any(&Transcript::default()).is_err());
    }
}
