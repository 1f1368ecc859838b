//! Prime-order subgroup arithmetic.
//!
//! Every protocol layer in this crate is generic over [`Group`], which
//! describes a group of order `2^c * ell` with a generator of prime order
//! `ell`. Two instantiations ship with the crate:
//!
//! * [`Ed25519`], the RFC 8032 edwards25519 group (arithmetic from
//!   `curve25519-dalek`);
//! * [`ToyGroup`], the additive integers modulo `8q`. It has the same
//!   cofactor-8 shape as edwards25519 but a trivially solvable discrete
//!   logarithm, which lets tests look at values the protocol never reveals.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigUint;
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha512};

mod ed25519;
mod toy;

pub use ed25519::Ed25519;
pub use toy::{Fp, ToyElement, ToyGroup};

/// Arithmetic in the scalar field `Z_ell`.
pub trait Field:
    Copy
    + Eq
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    /// Width of the canonical little-endian encoding.
    const BYTES: usize;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(v: u64) -> Self;
    /// Multiplicative inverse; `None` for zero.
    fn invert(&self) -> Option<Self>;
    /// Uniform sample from `[0, ell)`.
    fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self;
    fn to_bytes(&self) -> Vec<u8>;
    /// Decodes a canonical encoding. Values `>= ell` and wrong lengths are rejected.
    fn from_canonical_bytes(bytes: &[u8]) -> Option<Self>;
    /// Interprets `bytes` as a little-endian integer of any length and reduces it.
    fn from_le_bytes_mod_order(bytes: &[u8]) -> Self;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_le(&self.to_bytes())
    }
}

/// Static description of a backend.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupParams {
    pub name: &'static str,
    /// Prime order of the subgroup generated by the generator.
    pub ell: BigUint,
    /// `c` such that the full group order is `2^c * ell`.
    pub cofactor_log2: u32,
    /// Bit length used for secret seeds and scalar encodings.
    pub b: u32,
    /// Position of the bit forced to one by key clamping (RFC 8032's `n`).
    pub clamp_bit: u32,
    pub hash: &'static str,
}

impl GroupParams {
    pub fn cofactor(&self) -> u64 {
        1 << self.cofactor_log2
    }
}

/// A cyclic group of order `2^c * ell` with a distinguished generator of order `ell`.
pub trait Group: Copy + Clone + Debug + Default + Send + Sync + 'static {
    type Scalar: Field;
    type Element: Copy
        + Eq
        + Debug
        + Send
        + Sync
        + 'static
        + Add<Output = Self::Element>
        + Sub<Output = Self::Element>
        + Neg<Output = Self::Element>;

    /// Backend name used in configuration and transcripts.
    const NAME: &'static str;
    /// Width of the canonical element encoding.
    const ELEMENT_BYTES: usize;
    /// Whether signature verification multiplies through by the cofactor.
    const COFACTORED_VERIFY: bool;

    fn params() -> GroupParams;
    fn generator() -> Self::Element;
    fn identity() -> Self::Element;
    fn mul(s: &Self::Scalar, p: &Self::Element) -> Self::Element;
    fn encode(p: &Self::Element) -> Vec<u8>;
    /// Decodes a canonical element encoding.
    fn decode(bytes: &[u8]) -> Option<Self::Element>;
    /// An element of order exactly `2^c`.
    fn torsion_generator() -> Self::Element;

    /// Multiplies by `2^c`.
    fn mul_by_cofactor(p: &Self::Element) -> Self::Element {
        let mut acc = *p;
        for _ in 0..Self::params().cofactor_log2 {
            acc = acc + acc;
        }
        acc
    }

    /// Low-order elements are the ones killed by the cofactor.
    fn is_low_order(p: &Self::Element) -> bool {
        Self::mul_by_cofactor(p) == Self::identity()
    }

    fn mul_base(s: &Self::Scalar) -> Self::Element {
        Self::mul(s, &Self::generator())
    }

    /// Multiplication by a full-width integer, without reducing it modulo `ell`.
    ///
    /// Differs from [`Group::mul`] only on elements outside the prime-order
    /// subgroup.
    fn mul_unreduced(k: &BigUint, p: &Self::Element) -> Self::Element {
        let mut acc = Self::identity();
        for i in (0..k.bits()).rev() {
            acc = acc + acc;
            if k.bit(i) {
                acc = acc + *p;
            }
        }
        acc
    }
}

/// `s * P`.
pub fn point_mul<G: Group>(s: &G::Scalar, p: &G::Element) -> G::Element {
    G::mul(s, p)
}

/// `P + Q`.
pub fn point_add<G: Group>(p: &G::Element, q: &G::Element) -> G::Element {
    *p + *q
}

/// True iff `2^c * A` is the identity.
pub fn is_low_order<G: Group>(a: &G::Element) -> bool {
    G::is_low_order(a)
}

/// SHA-512 over the concatenation of `parts`.
pub fn sha512(parts: &[&[u8]]) -> [u8; 64] {
    let mut h = Sha512::new();
    for part in parts {
        h.update(part);
    }
    h.finalize().into()
}

/// `H(parts)` read as a little-endian integer and reduced modulo `ell`.
pub fn hash_to_scalar<G: Group>(parts: &[&[u8]]) -> G::Scalar {
    G::Scalar::from_le_bytes_mod_order(&sha512(parts))
}

/// Lowercase hex of an element encoding.
pub fn element_hex<G: Group>(p: &G::Element) -> String {
    hex::encode(G::encode(p))
}

pub fn element_from_hex<G: Group>(s: &str) -> Option<G::Element> {
    G::decode(&hex::decode(s).ok()?)
}

pub fn scalar_hex<F: Field>(s: &F) -> String {
    hex::encode(s.to_bytes())
}

pub fn scalar_from_hex<F: Field>(s: &str) -> Option<F> {
    F::from_canonical_bytes(&hex::decode(s).ok()?)
}

/// Runtime backend selector used by configuration and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Ed25519,
    Toy,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Ed25519 => Ed25519::NAME,
            Backend::Toy => toy::DefaultToy::NAME,
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ed25519" => Ok(Backend::Ed25519),
            "toy" => Ok(Backend::Toy),
            other => Err(format!("unknown backend `{other}` (expected ed25519 or toy)")),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub use toy::DefaultToy;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn distributive<G: Group>(a: u64, b: u64) {
        let s1 = G::Scalar::from_u64(a);
        let s2 = G::Scalar::from_u64(b);
        let lhs = G::mul_base(&(s1 + s2));
        let rhs = point_add::<G>(&G::mul_base(&s1), &G::mul_base(&s2));
        assert_eq!(lhs, rhs);
    }

    proptest! {
        #[test]
        fn scalar_mul_distributes_toy(a in any::<u64>(), b in any::<u64>()) {
            distributive::<DefaultToy>(a, b);
        }

        #[test]
        fn scalar_mul_distributes_ed25519(a in any::<u64>(), b in any::<u64>()) {
            distributive::<Ed25519>(a, b);
        }
    }

    #[test]
    fn hash_to_scalar_matches_reference_digest() {
        // SHA-512("abc") from FIPS 180-2, reduced with an independent big-integer path.
        let digest = hex::decode(
            "ddaf35a193617abacc417349ae20413112e6fa4e89a97ea20a9eeee64b55d39a\
             2192992a274fc1a836ba3c23a3feebbd454d4423643ce80e2a9ac94fa54ca49f",
        )
        .unwrap();
        assert_eq!(sha512(&[b"a", b"bc"]).to_vec(), digest);
        let n = BigUint::from_bytes_le(&digest);

        let toy = hash_to_scalar::<DefaultToy>(&[b"abc"]);
        assert_eq!(toy.to_biguint(), &n % BigUint::from(1019u32));

        let ed = hash_to_scalar::<Ed25519>(&[b"abc"]);
        assert_eq!(ed.to_biguint(), &n % Ed25519::params().ell);
    }

    #[test]
    fn hash_to_scalar_is_deterministic_and_reduced() {
        for i in 0..64u8 {
            let s = hash_to_scalar::<DefaultToy>(&[&[i]]);
            assert_eq!(s, hash_to_scalar::<DefaultToy>(&[&[i]]));
            assert!(s.to_biguint() < DefaultToy::params().ell);
            let e = hash_to_scalar::<Ed25519>(&[&[i]]);
            assert!(e.to_biguint() < Ed25519::params().ell);
        }
    }

    fn torsion_order<G: Group>() -> u64 {
        let t = G::torsion_generator();
        let mut acc = t;
        let mut k = 1;
        while acc != G::identity() {
            acc = acc + t;
            k += 1;
        }
        k
    }

    #[test]
    fn torsion_generators_have_order_eight() {
        assert_eq!(torsion_order::<Ed25519>(), 8);
        assert_eq!(torsion_order::<DefaultToy>(), 8);
    }

    #[test]
    fn backend_names_parse() {
        assert_eq!("toy".parse::<Backend>().unwrap(), Backend::Toy);
        assert_eq!("ed25519".parse::<Backend>().unwrap(), Backend::Ed25519);
        assert!("ed448".parse::<Backend>().is_err());
        assert_eq!(Backend::Ed25519.to_string(), "ed25519");
    }
}
