use curve25519_dalek::constants::ED25519_BASEPOINT_POINT;
use curve25519_dalek::edwards::{CompressedEdwardsY, EdwardsPoint};
use curve25519_dalek::traits::Identity;
use curve25519_dalek::Scalar;
use num_bigint::BigUint;
use rand_core::{CryptoRng, RngCore};

use super::{Field, Group, GroupParams};

impl Field for Scalar {
    const BYTES: usize = 32;

    fn zero() -> Self {
        Scalar::ZERO
    }

    fn one() -> Self {
        Scalar::ONE
    }

    fn from_u64(v: u64) -> Self {
        Scalar::from(v)
    }

    fn invert(&self) -> Option<Self> {
        (*self != Scalar::ZERO).then(|| Scalar::invert(self))
    }

    fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Scalar::from_bytes_mod_order_wide(&wide)
    }

    fn to_bytes(&self) -> Vec<u8> {
        Scalar::to_bytes(self).to_vec()
    }

    fn from_canonical_bytes(bytes: &[u8]) -> Option<Self> {
        let bytes: [u8; 32] = bytes.try_into().ok()?;
        Scalar::from_canonical_bytes(bytes).into()
    }

    fn from_le_bytes_mod_order(bytes: &[u8]) -> Self {
        if bytes.len() <= 64 {
            let mut wide = [0u8; 64];
            wide[..bytes.len()].copy_from_slice(bytes);
            return Scalar::from_bytes_mod_order_wide(&wide);
        }
        let radix = Scalar::from(256u64);
        bytes
            .iter()
            .rev()
            .fold(Scalar::ZERO, |acc, &b| acc * radix + Scalar::from(b as u64))
    }
}

/// The edwards25519 group of RFC 8032.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ed25519;

impl Group for Ed25519 {
    type Scalar = Scalar;
    type Element = EdwardsPoint;

    const NAME: &'static str = "ed25519";
    const ELEMENT_BYTES: usize = 32;
    const COFACTORED_VERIFY: bool = true;

    fn params() -> GroupParams {
        // 2^252 + 27742317777372353535851937790883648493
        let ell = (BigUint::from(1u8) << 252usize)
            + "27742317777372353535851937790883648493"
                .parse::<BigUint>()
                .expect("valid literal");
        GroupParams {
            name: Self::NAME,
            ell,
            cofactor_log2: 3,
            b: 256,
            clamp_bit: 254,
            hash: "SHA-512",
        }
    }

    fn generator() -> Self::Element {
        ED25519_BASEPOINT_POINT
    }

    fn identity() -> Self::Element {
        EdwardsPoint::identity()
    }

    fn mul(s: &Self::Scalar, p: &Self::Element) -> Self::Element {
        s * p
    }

    fn mul_base(s: &Self::Scalar) -> Self::Element {
        EdwardsPoint::mul_base(s)
    }

    fn encode(p: &Self::Element) -> Vec<u8> {
        p.compress().to_bytes().to_vec()
    }

    fn decode(bytes: &[u8]) -> Option<Self::Element> {
        let bytes: [u8; 32] = bytes.try_into().ok()?;
        let p = CompressedEdwardsY(bytes).decompress()?;
        // Reject non-canonical y and the negative-zero x encoding.
        (p.compress().to_bytes() == bytes).then_some(p)
    }

    fn torsion_generator() -> Self::Element {
        curve25519_dalek::constants::EIGHT_TORSION[1]
    }

    fn mul_by_cofactor(p: &Self::Element) -> Self::Element {
        p.mul_by_cofactor()
    }

    fn is_low_order(p: &Self::Element) -> bool {
        p.is_small_order()
    }
}
