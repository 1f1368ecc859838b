use serde::{Deserialize, Serialize};

use super::transcript::Transcript;
use super::SimError;
use crate::group::{element_from_hex, element_hex, scalar_from_hex, scalar_hex, Group};
use crate::shamir::Share;

/// The output of a ceremony as the swarm holds it: the public key and one
/// share per actor. Each share stays with its actor; the struct only groups
/// them for the simulation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMaterial<G: Group> {
    pub aggregate_public: G::Element,
    pub t: usize,
    pub holders: Vec<(u32, Share<G::Scalar>)>,
}

/// One actor's share at rest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareFile {
    pub backend: String,
    pub actor: u32,
    pub t: usize,
    pub public: String,
    pub x: String,
    pub y: String,
}

impl<G: Group> KeyMaterial<G> {
    pub fn share_of(&self, actor: u32) -> Option<Share<G::Scalar>> {
        self.holders.iter().find(|h| h.0 == actor).map(|h| h.1)
    }

    pub fn actor_ids(&self) -> Vec<u32> {
        self.holders.iter().map(|h| h.0).collect()
    }

    pub fn share_file(&self, actor: u32) -> Option<ShareFile> {
        let share = self.share_of(actor)?;
        Some(ShareFile {
            backend: G::NAME.into(),
            actor,
            t: self.t,
            public: element_hex::<G>(&self.aggregate_public),
            x: scalar_hex(&share.x),
            y: scalar_hex(&share.y),
        })
    }

    /// Reassembles key material from per-actor share files. All files must
    /// name the same backend, threshold and key.
    pub fn from_share_files(files: &[ShareFile]) -> Result<Self, SimError> {
        let bad = |m: &str| SimError::KeyMaterial(m.to_string());
        let first = files.first().ok_or_else(|| bad("no share files"))?;
        let mut holders = Vec::new();
        for f in files {
            if f.backend != G::NAME || f.t != first.t || f.public != first.public {
                return Err(bad("share files disagree on backend, threshold or key"));
            }
            let share = Share::new(
                scalar_from_hex(&f.x).ok_or_else(|| bad("bad x in share file"))?,
                scalar_from_hex(&f.y).ok_or_else(|| bad("bad y in share file"))?,
            );
            holders.push((f.actor, share));
        }
        Ok(KeyMaterial {
            aggregate_public: element_from_hex::<G>(&first.public)
                .ok_or_else(|| bad("bad public key in share file"))?,
            t: first.t,
            holders,
        })
    }

    /// Key material from a transcript that embeds shares (toy runs).
    pub fn from_transcript(transcript: &Transcript) -> Result<Self, SimError> {
        let bad = |m: &str| SimError::KeyMaterial(m.to_string());
        let config = transcript
            .of_kind("config")
            .next()
            .and_then(|r| r.payload_json())
            .ok_or_else(|| bad("transcript has no config record"))?;
        if config["config"]["backend"].as_str() != Some(G::NAME) {
            return Err(bad("transcript was made with another backend"));
        }
        let t = config["config"]["t"]
            .as_u64()
            .ok_or_else(|| bad("config record lacks t"))? as usize;
        let published = transcript
            .of_kind("published-key")
            .last()
            .ok_or_else(|| bad("transcript has no published key"))?;
        let aggregate_public =
            G::decode(&published.payload()).ok_or_else(|| bad("bad published key"))?;
        let mut holders = Vec::new();
        for r in transcript
            .of_kind("share")
            .filter(|r| r.attempt == published.attempt)
        {
            let actor = r
                .from
                .strip_prefix("actor:")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("share record without an actor"))?;
            let share = Share::from_bytes(&r.payload()).ok_or_else(|| bad("bad share record"))?;
            holders.push((actor, share));
        }
        if holders.is_empty() {
            return Err(bad("transcript embeds no shares; load per-actor share files instead"));
        }
        Ok(KeyMaterial {
            aggregate_public,
            t,
            holders,
        })
    }
}
