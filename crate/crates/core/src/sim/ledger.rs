use serde::{Deserialize, Serialize};

use crate::group::{element_from_hex, element_hex, scalar_from_hex, scalar_hex, Group};
use crate::shamir::lagrange_coefficient;

/// What an actor writes after completing: `(x_i, A, sigma_i G)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LedgerPost<G: Group> {
    pub party: u32,
    pub x: G::Scalar,
    pub aggregate_public: G::Element,
    pub share_commitment: G::Element,
}

#[derive(Serialize, Deserialize)]
struct PostWire {
    x: String,
    public: String,
    share_commitment: String,
}

impl<G: Group> LedgerPost<G> {
    pub fn to_payload(&self) -> Vec<u8> {
        serde_json::to_vec(&PostWire {
            x: scalar_hex(&self.x),
            public: element_hex::<G>(&self.aggregate_public),
            share_commitment: element_hex::<G>(&self.share_commitment),
        })
        .expect("post serializes")
    }

    pub fn from_payload(party: u32, bytes: &[u8]) -> Option<Self> {
        let w: PostWire = serde_json::from_slice(bytes).ok()?;
        Some(LedgerPost {
            party,
            x: scalar_from_hex(&w.x)?,
            aggregate_public: element_from_hex::<G>(&w.public)?,
            share_commitment: element_from_hex::<G>(&w.share_commitment)?,
        })
    }
}

/// Append-only list of posts.
#[derive(Clone, Debug)]
pub struct Ledger<G: Group> {
    posts: Vec<LedgerPost<G>>,
}

impl<G: Group> Default for Ledger<G> {
    fn default() -> Self {
        Ledger { posts: Vec::new() }
    }
}

impl<G: Group> Ledger<G> {
    pub fn append(&mut self, post: LedgerPost<G>) {
        self.posts.push(post);
    }

    pub fn posts(&self) -> &[LedgerPost<G>] {
        &self.posts
    }

    /// The first post made by `party`.
    pub fn post_of(&self, party: u32) -> Option<&LedgerPost<G>> {
        self.posts.iter().find(|p| p.party == party)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum LedgerVerdict {
    Accept,
    Reject { reason: String },
    Inconclusive { missing: Vec<u32> },
}

fn agreed_key<G: Group>(
    ledger: &Ledger<G>,
    parties: &[u32],
) -> Result<G::Element, LedgerVerdict> {
    let missing: Vec<u32> = parties
        .iter()
        .copied()
        .filter(|&p| ledger.post_of(p).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(LedgerVerdict::Inconclusive { missing });
    }
    let first = ledger.post_of(parties[0]).unwrap().aggregate_public;
    if parties
        .iter()
        .any(|&p| ledger.post_of(p).unwrap().aggregate_public != first)
    {
        return Err(LedgerVerdict::Reject {
            reason: "posted aggregate keys disagree".into(),
        });
    }
    Ok(first)
}

fn cohort_matches<G: Group>(ledger: &Ledger<G>, cohort: &[u32], key: &G::Element) -> Option<bool> {
    let posts: Vec<_> = cohort.iter().map(|&p| ledger.post_of(p)).collect::<Option<_>>()?;
    let xs: Vec<G::Scalar> = posts.iter().map(|p| p.x).collect();
    let mut acc = G::identity();
    for p in &posts {
        let l = lagrange_coefficient(p.x, &xs).ok()?;
        acc = acc + G::mul(&l, &p.share_commitment);
    }
    Some(acc == *key)
}

/// Checks one cohort: every party in `parties` posted the same key, and
/// interpolating the cohort's share commitments gives that key.
pub fn ledger_check<G: Group>(ledger: &Ledger<G>, parties: &[u32], cohort: &[u32]) -> LedgerVerdict {
    if parties.is_empty() || cohort.is_empty() {
        return LedgerVerdict::Inconclusive { missing: vec![] };
    }
    let key = match agreed_key(ledger, parties) {
        Ok(k) => k,
        Err(v) => return v,
    };
    match cohort_matches(ledger, cohort, &key) {
        Some(true) => LedgerVerdict::Accept,
        Some(false) => LedgerVerdict::Reject {
            reason: format!("cohort {cohort:?} does not interpolate to the posted key"),
        },
        None => LedgerVerdict::Reject {
            reason: format!("cohort {cohort:?} has repeated x-coordinates"),
        },
    }
}

/// [`ledger_check`] over every size-`t` cohort of `parties`.
pub fn ledger_check_all<G: Group>(ledger: &Ledger<G>, parties: &[u32], t: usize) -> LedgerVerdict {
    if let Err(v) = agreed_key(ledger, parties) {
        return v;
    }
    for cohort in combinations(parties, t) {
        let v = ledger_check(ledger, parties, &cohort);
        if v != LedgerVerdict::Accept {
            return v;
        }
    }
    LedgerVerdict::Accept
}

/// All `k`-element subsets of `items`, in lexicographic index order.
pub fn combinations<T: Copy>(items: &[T], k: usize) -> Vec<Vec<T>> {
    let n = items.len();
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
