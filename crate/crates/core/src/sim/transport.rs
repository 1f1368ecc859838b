use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::transcript::{Record, Transcript};

/// A participant in the simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartyId {
    Dealer,
    Actor(u32),
    Ledger,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Dealer => f.write_str("dealer"),
            PartyId::Actor(id) => write!(f, "actor:{id}"),
            PartyId::Ledger => f.write_str("ledger"),
        }
    }
}

impl FromStr for PartyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dealer" => Ok(PartyId::Dealer),
            "ledger" => Ok(PartyId::Ledger),
            _ => s
                .strip_prefix("actor:")
                .and_then(|id| id.parse().ok())
                .map(PartyId::Actor)
                .ok_or_else(|| format!("unknown party `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    KeyRequest,
    KeyAnnounce,
    XBroadcast,
    EncryptedBundle,
    AggregateReport,
    Round1,
    Round2,
    Exchange,
    LedgerPost,
    CollusionLeak,
}

impl MessageKind {
    pub const ALL: [MessageKind; 10] = [
        MessageKind::KeyRequest,
        MessageKind::KeyAnnounce,
        MessageKind::XBroadcast,
        MessageKind::EncryptedBundle,
        MessageKind::AggregateReport,
        MessageKind::Round1,
        MessageKind::Round2,
        MessageKind::Exchange,
        MessageKind::LedgerPost,
        MessageKind::CollusionLeak,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MessageKind::KeyRequest => "key-request",
            MessageKind::KeyAnnounce => "key-announce",
            MessageKind::XBroadcast => "x-broadcast",
            MessageKind::EncryptedBundle => "encrypted-bundle",
            MessageKind::AggregateReport => "aggregate-report",
            MessageKind::Round1 => "round1",
            MessageKind::Round2 => "round2",
            MessageKind::Exchange => "exchange",
            MessageKind::LedgerPost => "ledger-post",
            MessageKind::CollusionLeak => "collusion-leak",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub attempt: u32,
    pub from: PartyId,
    pub to: PartyId,
    pub kind: MessageKind,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn new(attempt: u32, from: PartyId, to: PartyId, kind: MessageKind, payload: Vec<u8>) -> Self {
        Envelope {
            attempt,
            from,
            to,
            kind,
            payload,
        }
    }
}

pub(crate) enum Outgoing {
    Envelope(Envelope),
    Event(Record),
}

/// Collects what a party emits while handling one event, in order.
#[derive(Default)]
pub struct Outbox {
    pub(crate) items: Vec<Outgoing>,
}

impl Outbox {
    pub fn send(&mut self, env: Envelope) {
        self.items.push(Outgoing::Envelope(env));
    }

    pub fn event(&mut self, record: Record) {
        self.items.push(Outgoing::Event(record));
    }
}

/// Deterministic store-and-forward network with one tick of latency.
pub struct Transport {
    drop_prob: f64,
    rng: ChaCha20Rng,
    in_flight: Vec<(u64, Envelope)>,
}

impl Transport {
    pub fn new(drop_prob: f64, rng: ChaCha20Rng) -> Self {
        Transport {
            drop_prob,
            rng,
            in_flight: Vec::new(),
        }
    }

    /// Logs `env` at `tick` and schedules it for `tick + 1`, unless it is lost.
    pub fn send(&mut self, tick: u64, env: Envelope, transcript: &mut Transcript) {
        let dropped = self.drop_prob > 0.0 && self.rng.gen_bool(self.drop_prob);
        transcript.push(Record::envelope(
            tick,
            &env,
            dropped.then(|| "dropped".to_string()),
        ));
        if !dropped {
            self.in_flight.push((tick + 1, env));
        }
    }

    /// Envelopes due at `tick`, in send order.
    pub fn deliver(&mut self, tick: u64) -> Vec<Envelope> {
        let (due, rest): (Vec<_>, Vec<_>) =
            self.in_flight.drain(..).partition(|(at, _)| *at <= tick);
        self.in_flight = rest;
        due.into_iter().map(|(_, env)| env).collect()
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_empty()
    }
}
