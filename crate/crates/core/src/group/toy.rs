use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigUint;
use rand_core::{CryptoRng, RngCore};

use super::{Field, Group, GroupParams};

const fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// The prime field `Z_Q`, used as the scalar field of [`ToyGroup<Q>`].
///
/// `Q` must be a prime below `2^60`; this is checked at compile time when the
/// type is first used.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Fp<const Q: u64>(u64);

impl<const Q: u64> Fp<Q> {
    const VALID: () = assert!(is_prime(Q) && Q < (1 << 60), "Q must be a prime below 2^60");

    pub const MODULUS: u64 = Q;

    pub fn new(v: u64) -> Self {
        #[allow(clippy::let_unit_value)]
        let () = Self::VALID;
        Fp(v % Q)
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

impl<const Q: u64> fmt::Debug for Fp<Q> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const Q: u64> Add for Fp<Q> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Fp(((self.0 as u128 + rhs.0 as u128) % Q as u128) as u64)
    }
}

impl<const Q: u64> Sub for Fp<Q> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Fp(((self.0 as u128 + Q as u128 - rhs.0 as u128) % Q as u128) as u64)
    }
}

impl<const Q: u64> Mul for Fp<Q> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Fp(((self.0 as u128 * rhs.0 as u128) % Q as u128) as u64)
    }
}

impl<const Q: u64> Neg for Fp<Q> {
    type Output = Self;
    fn neg(self) -> Self {
        Fp((Q - self.0) % Q)
    }
}

impl<const Q: u64> Field for Fp<Q> {
    const BYTES: usize = 8;

    fn zero() -> Self {
        Self::new(0)
    }

    fn one() -> Self {
        Self::new(1)
    }

    fn from_u64(v: u64) -> Self {
        Self::new(v)
    }

    fn invert(&self) -> Option<Self> {
        if self.0 == 0 {
            return None;
        }
        // Extended Euclid on (value, Q).
        let (mut old_r, mut r) = (self.0 as i128, Q as i128);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let quotient = old_r / r;
            (old_r, r) = (r, old_r - quotient * r);
            (old_s, s) = (s, old_s - quotient * s);
        }
        debug_assert_eq!(old_r, 1);
        Some(Fp(old_s.rem_euclid(Q as i128) as u64))
    }

    fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let zone = u64::MAX - (u64::MAX % Q);
        loop {
            let v = rng.next_u64();
            if v < zone {
                return Self::new(v);
            }
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_le_bytes().to_vec()
    }

    fn from_canonical_bytes(bytes: &[u8]) -> Option<Self> {
        let v = u64::from_le_bytes(bytes.try_into().ok()?);
        (v < Q).then(|| Self::new(v))
    }

    fn from_le_bytes_mod_order(bytes: &[u8]) -> Self {
        let acc = bytes
            .iter()
            .rev()
            .fold(0u128, |acc, &b| (acc * 256 + b as u128) % Q as u128);
        Self::new(acc as u64)
    }
}

/// An element of the additive group `Z_{8Q}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ToyElement<const Q: u64>(u64);

impl<const Q: u64> ToyElement<Q> {
    const ORDER: u64 = 8 * Q;

    /// Reduces `v` modulo `8Q`.
    pub fn new(v: u64) -> Self {
        ToyElement(v % Self::ORDER)
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

impl<const Q: u64> fmt::Debug for ToyElement<Q> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const Q: u64> Add for ToyElement<Q> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        ToyElement(((self.0 as u128 + rhs.0 as u128) % Self::ORDER as u128) as u64)
    }
}

impl<const Q: u64> Sub for ToyElement<Q> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        ToyElement(
            ((self.0 as u128 + Self::ORDER as u128 - rhs.0 as u128) % Self::ORDER as u128) as u64,
        )
    }
}

impl<const Q: u64> Neg for ToyElement<Q> {
    type Output = Self;
    fn neg(self) -> Self {
        ToyElement((Self::ORDER - self.0) % Self::ORDER)
    }
}

/// Additive integers modulo `8Q` with generator 8.
///
/// The subgroup generated by 8 has prime order `Q`; the cofactor is 8, the
/// same as edwards25519. Discrete logarithms are a division by 8, so this
/// backend is for tests and demonstrations only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ToyGroup<const Q: u64 = 1019>;

/// The toy group with the default modulus `q = 1019`.
pub type DefaultToy = ToyGroup<1019>;

impl<const Q: u64> Group for ToyGroup<Q> {
    type Scalar = Fp<Q>;
    type Element = ToyElement<Q>;

    const NAME: &'static str = "toy";
    const ELEMENT_BYTES: usize = 8;
    const COFACTORED_VERIFY: bool = false;

    fn params() -> GroupParams {
        GroupParams {
            name: Self::NAME,
            ell: BigUint::from(Q),
            cofactor_log2: 3,
            b: 64,
            clamp_bit: 63,
            hash: "SHA-512",
        }
    }

    fn generator() -> Self::Element {
        ToyElement::new(8)
    }

    fn identity() -> Self::Element {
        ToyElement(0)
    }

    fn mul(s: &Self::Scalar, p: &Self::Element) -> Self::Element {
        let order = 8 * Q as u128;
        ToyElement(((s.value() as u128 * p.0 as u128) % order) as u64)
    }

    fn encode(p: &Self::Element) -> Vec<u8> {
        p.0.to_le_bytes().to_vec()
    }

    fn decode(bytes: &[u8]) -> Option<Self::Element> {
        let v = u64::from_le_bytes(bytes.try_into().ok()?);
        (v < 8 * Q).then_some(ToyElement(v))
    }

    fn torsion_generator() -> Self::Element {
        ToyElement(Q)
    }

    fn mul_unreduced(k: &BigUint, p: &Self::Element) -> Self::Element {
        let k = (k % BigUint::from(8 * Q)).iter_u64_digits().next().unwrap_or(0);
        ToyElement(((k as u128 * p.0 as u128) % (8 * Q as u128)) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{is_low_order, point_add, point_mul};
    use proptest::prelude::*;

    type G = DefaultToy;

    fn s(v: u64) -> Fp<1019> {
        Fp::new(v)
    }

    fn e(v: u64) -> ToyElement<1019> {
        ToyElement::new(v)
    }

    #[test]
    fn point_mul_examples() {
        assert_eq!(point_mul::<G>(&s(3), &G::generator()), e(24));
        assert_eq!(point_mul::<G>(&s(0), &G::generator()), G::identity());
        assert_eq!(point_mul::<G>(&s(1), &e(123)), e(123));
        // ell * G wraps to the identity; ell itself reduces to zero as a scalar.
        assert_eq!(G::mul_unreduced(&BigUint::from(1019u32), &G::generator()), G::identity());
        assert_eq!(point_mul::<G>(&s(1019), &G::generator()), G::identity());
    }

    #[test]
    fn point_add_examples() {
        assert_eq!(point_add::<G>(&e(24), &e(40)), e(64));
        assert_eq!(point_add::<G>(&e(77), &G::identity()), e(77));
        let g = G::generator();
        assert_eq!(
            point_add::<G>(&point_mul::<G>(&s(2), &g), &point_mul::<G>(&s(3), &g)),
            point_mul::<G>(&s(5), &g)
        );
    }

    #[test]
    fn low_order_examples() {
        assert!(is_low_order::<G>(&e(4076)));
        assert!(!is_low_order::<G>(&G::generator()));
        assert!(is_low_order::<G>(&G::identity()));
    }

    #[test]
    fn canonical_decoding() {
        assert_eq!(G::decode(&8151u64.to_le_bytes()), Some(e(8151)));
        assert_eq!(G::decode(&8152u64.to_le_bytes()), None);
        assert_eq!(G::decode(&[1, 2, 3]), None);
        assert_eq!(Fp::<1019>::from_canonical_bytes(&1019u64.to_le_bytes()), None);
    }

    #[test]
    fn inversion_small_fields() {
        assert_eq!(Fp::<11>::new(8).invert(), Some(Fp::new(7)));
        assert_eq!(Fp::<11>::new(10).invert(), Some(Fp::new(10)));
        assert_eq!(Fp::<11>::new(0).invert(), None);
        for v in 1..31 {
            let x = Fp::<31>::new(v);
            assert_eq!(x * x.invert().unwrap(), Fp::one());
        }
    }

    /// Exhaustive discrete log, used as an oracle only.
    fn dlog(p: ToyElement<1019>) -> Option<u64> {
        (0..1019).find(|&k| point_mul::<G>(&s(k), &G::generator()) == p)
    }

    proptest! {
        #[test]
        fn encode_roundtrip(v in 0u64..8152) {
            let p = e(v);
            prop_assert_eq!(G::decode(&G::encode(&p)), Some(p));
        }

        #[test]
        fn subgroup_elements_have_a_discrete_log(k in 0u64..1019) {
            let p = point_mul::<G>(&s(k), &G::generator());
            prop_assert_eq!(dlog(p), Some(k));
            prop_assert_eq!(p.value() % 8, 0);
        }

        #[test]
        fn field_axioms(a in 0u64..1019, b in 0u64..1019) {
            prop_assert_eq!(s(a) - s(b) + s(b), s(a));
            prop_assert_eq!(s(a) + (-s(a)), Fp::zero());
            prop_assert_eq!(s(a) * s(b), s(a * b));
        }
    }
}
