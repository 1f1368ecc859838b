use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::transport::{Envelope, PartyId};

/// One JSON line of a transcript.
///
/// Envelopes carry their message kind; everything else is an event written
/// by the simulator (`config`, `attempt`, `check`, `retry`, `published-key`,
/// `abort`, `disagreement`, `warning`, `share`, `outcome`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub tick: u64,
    pub attempt: u32,
    pub from: String,
    pub to: String,
    pub kind: String,
    pub payload_hex: String,
    pub verdict: Option<String>,
}

impl Record {
    pub fn envelope(tick: u64, env: &Envelope, verdict: Option<String>) -> Self {
        Record {
            tick,
            attempt: env.attempt,
            from: env.from.to_string(),
            to: env.to.to_string(),
            kind: env.kind.as_str().to_string(),
            payload_hex: hex::encode(&env.payload),
            verdict,
        }
    }

    pub fn event(
        tick: u64,
        attempt: u32,
        from: PartyId,
        kind: &str,
        payload: &[u8],
        verdict: Option<String>,
    ) -> Self {
        Record {
            tick,
            attempt,
            from: from.to_string(),
            to: String::new(),
            kind: kind.to_string(),
            payload_hex: hex::encode(payload),
            verdict,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        hex::decode(&self.payload_hex).unwrap_or_default()
    }

    pub fn payload_json(&self) -> Option<serde_json::Value> {
        serde_json::from_slice(&self.payload()).ok()
    }

    pub fn is_dropped(&self) -> bool {
        self.verdict.as_deref() == Some("dropped")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<Record>,
}

impl Transcript {
    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Record> + 'a {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// Envelopes delivered to `party`, in order.
    pub fn view_of<'a>(&'a self, party: &'a str) -> impl Iterator<Item = &'a Record> + 'a {
        self.records
            .iter()
            .filter(move |r| r.to == party && !r.is_dropped())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Transcript { records })
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(io::Error::other)?);
        }
        Ok(Transcript { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::transport::MessageKind;

    #[test]
    fn jsonl_roundtrip_with_stable_fields() {
        let mut t = Transcript::default();
        let env = Envelope::new(1, PartyId::Actor(2), PartyId::Dealer, MessageKind::EncryptedBundle, vec![1, 2]);
        t.push(Record::envelope(3, &env, None));
        t.push(Record::event(4, 1, PartyId::Dealer, "retry", b"{}", Some("timeout".into())));
        let text = t.to_jsonl();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for field in ["tick", "from", "to", "kind", "payload_hex", "verdict"] {
            assert!(first.get(field).is_some(), "missing {field}");
        }
        assert_eq!(first["payload_hex"], "0102");
        assert_eq!(Transcript::from_jsonl(&text).unwrap(), t);
        assert_eq!(Transcript::read_jsonl(text.as_bytes()).unwrap(), t);
        assert_eq!(t.view_of("dealer").count(), 1);
    }
}
