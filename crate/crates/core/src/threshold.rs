//! Threshold EdDSA signing and threshold Diffie-Hellman over the shares
//! produced by [`crate::keygen`].
//!
//! Signing takes two rounds. Each signer in the cohort commits to a fresh
//! random nonce `R_i = r_i G`; the dealer sums the commitments and hands every
//! signer `R` and its Lagrange coefficient `l_i`. The signer answers with
//! `S_i = r_i + l_i k y_i` where `k = H(R || A || M)` and `y_i` is its share.
//! The sum `(R, sum S_i)` is an ordinary RFC 8032 signature under the
//! aggregate key.

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::group::{hash_to_scalar, Field, Group};
use crate::shamir::{lagrange_coefficient, ShamirError, Share};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ThresholdError {
    #[error("signing nonce already consumed")]
    NonceReused,
    #[error("aggregate signature does not verify")]
    InvalidAggregate,
    #[error("round-1 and round-2 contributions differ in length")]
    LengthMismatch,
    #[error("refusing to multiply a share by a low-order point")]
    LowOrderPoint,
    #[error(transparent)]
    Sharing(#[from] ShamirError),
}

/// An EdDSA signature `(R, S)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature<G: Group> {
    pub r: G::Element,
    pub s: G::Scalar,
}

impl<G: Group> Signature<G> {
    /// `R || S`; 64 bytes on ed25519.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = G::encode(&self.r);
        out.extend(self.s.to_bytes());
        out
    }

    /// Parses `R || S`, rejecting non-canonical `R` and `S >= ell`.
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != G::ELEMENT_BYTES + <G::Scalar as Field>::BYTES {
            return None;
        }
        let (r, s) = bytes.split_at(G::ELEMENT_BYTES);
        Some(Signature {
            r: G::decode(r)?,
            s: G::Scalar::from_canonical_bytes(s)?,
        })
    }
}

/// A signer's secret nonce, pinned to one signing session.
///
/// Deliberately not `Clone`: the nonce is released exactly once by
/// [`sign_round2`].
pub struct NonceHandle<G: Group> {
    nonce: Option<G::Scalar>,
}

impl<G: Group> NonceHandle<G> {
    /// Wraps an explicit nonce. Reusing a nonce value across messages leaks
    /// the share; this exists for tests and attack demonstrations.
    pub fn from_nonce(nonce: G::Scalar) -> Self {
        NonceHandle { nonce: Some(nonce) }
    }

    pub fn is_consumed(&self) -> bool {
        self.nonce.is_none()
    }
}

impl<G: Group> std::fmt::Debug for NonceHandle<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonceHandle")
            .field("consumed", &self.is_consumed())
            .finish()
    }
}

/// Round one: draw `r_i` and publish `R_i = r_i G`.
pub fn sign_round1<G: Group, R: RngCore + CryptoRng + ?Sized>(
    rng: &mut R,
) -> (G::Element, NonceHandle<G>) {
    let r = G::Scalar::random(rng);
    (G::mul_base(&r), NonceHandle::from_nonce(r))
}

/// `k = H(R || A || M)`.
pub fn challenge<G: Group>(r: &G::Element, public: &G::Element, message: &[u8]) -> G::Scalar {
    hash_to_scalar::<G>(&[&G::encode(r), &G::encode(public), message])
}

/// `r + l k y`, the algebra of a round-two response.
pub fn response_with_challenge<F: Field>(nonce: F, coefficient: F, k: F, share_y: F) -> F {
    nonce + coefficient * k * share_y
}

/// Round two: consume the nonce and answer `S_i = r_i + l_i k y_i`.
pub fn sign_round2<G: Group>(
    handle: &mut NonceHandle<G>,
    aggregate_r: &G::Element,
    coefficient: &G::Scalar,
    share: &Share<G::Scalar>,
    aggregate_public: &G::Element,
    message: &[u8],
) -> Result<G::Scalar, ThresholdError> {
    let nonce = handle.nonce.take().ok_or(ThresholdError::NonceReused)?;
    let k = challenge::<G>(aggregate_r, aggregate_public, message);
    Ok(response_with_challenge(nonce, *coefficient, k, share.y))
}

/// Sums the contributions and returns the signature only if it verifies.
pub fn aggregate_and_verify<G: Group>(
    commitments: &[G::Element],
    responses: &[G::Scalar],
    aggregate_public: &G::Element,
    message: &[u8],
) -> Result<Signature<G>, ThresholdError> {
    if commitments.len() != responses.len() {
        return Err(ThresholdError::LengthMismatch);
    }
    let sig = Signature {
        r: commitments.iter().fold(G::identity(), |acc, &r| acc + r),
        s: responses.iter().fold(G::Scalar::zero(), |acc, &s| acc + s),
    };
    if eddsa_verify::<G>(aggregate_public, message, &sig) {
        Ok(sig)
    } else {
        Err(ThresholdError::InvalidAggregate)
    }
}

/// RFC 8032 verification: `[2^c][S]G = [2^c]R + [2^c][k]A` on ed25519, the
/// exact equation `[S]G = R + [k]A` on the toy group.
pub fn eddsa_verify<G: Group>(public: &G::Element, message: &[u8], sig: &Signature<G>) -> bool {
    let k = challenge::<G>(&sig.r, public, message);
    let lhs = G::mul_base(&sig.s);
    let rhs = sig.r + G::mul(&k, public);
    if G::COFACTORED_VERIFY {
        G::mul_by_cofactor(&lhs) == G::mul_by_cofactor(&rhs)
    } else {
        lhs == rhs
    }
}

/// Verification from encodings. Malformed keys or signatures verify as false.
pub fn eddsa_verify_bytes<G: Group>(public: &[u8], message: &[u8], sig: &[u8]) -> bool {
    match (G::decode(public), Signature::<G>::from_bytes(sig)) {
        (Some(a), Some(sig)) => eddsa_verify::<G>(&a, message, &sig),
        _ => false,
    }
}

/// Recovers `(s, r)` from two responses `S_j = r + mu_j s` that reused the
/// nonce `r`. `None` when `mu_1 = mu_2`.
pub fn recover_from_nonce_reuse<F: Field>(s1: F, s2: F, mu1: F, mu2: F) -> Option<(F, F)> {
    let share = (s1 - s2) * (mu1 - mu2).invert()?;
    Some((share, s1 - mu1 * share))
}

/// `K_c = y_c P`.
pub fn dh_contribution<G: Group>(
    share: &Share<G::Scalar>,
    peer: &G::Element,
) -> Result<G::Element, ThresholdError> {
    if G::is_low_order(peer) {
        return Err(ThresholdError::LowOrderPoint);
    }
    Ok(G::mul(&share.y, peer))
}

/// `l_c(C) K_c`, for signers that apply their own coefficient.
pub fn dh_contribution_weighted<G: Group>(
    share: &Share<G::Scalar>,
    cohort: &[G::Scalar],
    peer: &G::Element,
) -> Result<G::Element, ThresholdError> {
    let l = lagrange_coefficient(share.x, cohort)?;
    Ok(G::mul(&l, &dh_contribution::<G>(share, peer)?))
}

/// `K = sum_c l_c(C) K_c`, with the contributions keyed by x-coordinate.
pub fn dh_aggregate<G: Group>(
    contributions: &[(G::Scalar, G::Element)],
) -> Result<G::Element, ThresholdError> {
    let cohort: Vec<_> = contributions.iter().map(|(x, _)| *x).collect();
    contributions.iter().try_fold(G::identity(), |acc, (x, k)| {
        Ok(acc + G::mul(&lagrange_coefficient(*x, &cohort)?, k))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{DefaultToy, Ed25519, Fp, ToyElement};
    use crate::shamir::SharingPolynomial;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    type T = DefaultToy;
    type F = Fp<1019>;

    #[test]
    fn round2_algebra_fixed_values() {
        // r = 3, l = 2, k = 5, y = 7
        assert_eq!(
            response_with_challenge(F::new(3), F::new(2), F::new(5), F::new(7)),
            F::new(73)
        );
        assert_eq!(
            response_with_challenge(F::new(3), F::new(0), F::new(5), F::new(7)),
            F::new(3)
        );
    }

    #[test]
    fn nonce_handles_are_single_use() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (r_point, mut handle) = sign_round1::<T, _>(&mut rng);
        assert!(!T::is_low_order(&r_point) || r_point == T::identity());
        let share = Share::new(F::new(1), F::new(9));
        let a = T::mul_base(&F::new(9));
        assert!(sign_round2::<T>(&mut handle, &r_point, &F::one(), &share, &a, b"m").is_ok());
        assert_eq!(
            sign_round2::<T>(&mut handle, &r_point, &F::one(), &share, &a, b"m"),
            Err(ThresholdError::NonceReused)
        );
    }

    #[test]
    fn different_nonces_give_different_responses() {
        let share = Share::new(F::new(1), F::new(9));
        let a = T::mul_base(&F::new(9));
        let r = T::mul_base(&F::new(50));
        let mut h1 = NonceHandle::<T>::from_nonce(F::new(10));
        let mut h2 = NonceHandle::<T>::from_nonce(F::new(11));
        let s1 = sign_round2::<T>(&mut h1, &r, &F::one(), &share, &a, b"m").unwrap();
        let s2 = sign_round2::<T>(&mut h2, &r, &F::one(), &share, &a, b"m").unwrap();
        assert_ne!(s1, s2);
    }

    #[test]
    fn round1_points_are_in_the_prime_subgroup() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (r, _) = sign_round1::<Ed25519, _>(&mut rng);
            assert!(!Ed25519::is_low_order(&r));
            assert!(r.is_torsion_free());
        }
    }

    #[test]
    fn rfc8032_test_vector_1() {
        let public =
            hex::decode("d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a")
                .unwrap();
        let sig = hex::decode(
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e06522490155\
             5fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
        )
        .unwrap();
        assert!(eddsa_verify_bytes::<Ed25519>(&public, b"", &sig));
        assert!(!eddsa_verify_bytes::<Ed25519>(&public, b"x", &sig));
        let mut bad = sig.clone();
        bad[40] ^= 1;
        assert!(!eddsa_verify_bytes::<Ed25519>(&public, b"", &bad));
    }

    #[test]
    fn identity_signature_does_not_verify() {
        let a = T::mul_base(&F::new(123));
        let sig = Signature::<T> {
            r: T::identity(),
            s: F::zero(),
        };
        assert!(!eddsa_verify::<T>(&a, b"random message", &sig));
    }

    #[test]
    fn nonce_reuse_recovery_worked_example_mod_11() {
        type F11 = Fp<11>;
        let (s, r) =
            recover_from_nonce_reuse(F11::new(6), F11::new(5), F11::new(2), F11::new(5)).unwrap();
        assert_eq!(s, F11::new(7));
        assert_eq!(r, F11::new(3));
        assert!(recover_from_nonce_reuse(F11::new(6), F11::new(5), F11::new(2), F11::new(2)).is_none());
    }

    #[test]
    fn dh_contribution_examples() {
        let share = Share::new(F::new(1), F::new(3));
        assert_eq!(
            dh_contribution::<T>(&share, &ToyElement::new(16)).unwrap(),
            ToyElement::new(48)
        );
        let zero = Share::new(F::new(1), F::zero());
        assert_eq!(
            dh_contribution::<T>(&zero, &ToyElement::new(16)).unwrap(),
            T::identity()
        );
        assert_eq!(
            dh_contribution::<T>(&share, &T::generator()).unwrap(),
            T::mul_base(&F::new(3))
        );
        assert_eq!(
            dh_contribution::<T>(&share, &ToyElement::new(4076)),
            Err(ThresholdError::LowOrderPoint)
        );
    }

    #[test]
    fn dh_aggregate_single_and_duplicate() {
        let k = ToyElement::new(72);
        assert_eq!(dh_aggregate::<T>(&[(F::new(5), k)]).unwrap(), k);
        assert!(matches!(
            dh_aggregate::<T>(&[(F::new(5), k), (F::new(5), k)]),
            Err(ThresholdError::Sharing(ShamirError::DuplicateCoordinate))
        ));
    }

    #[test]
    fn dealer_and_signer_side_coefficients_agree() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let poly = SharingPolynomial::sample(F::new(321), 3, &mut rng).unwrap();
        let shares: Vec<_> = (1..=4).map(|x| poly.eval_share(F::new(x)).unwrap()).collect();
        let peer = T::mul_base(&F::new(45));
        let cohort: Vec<_> = shares[1..].iter().map(|s| s.x).collect();
        let dealer_side = dh_aggregate::<T>(
            &shares[1..]
                .iter()
                .map(|s| (s.x, dh_contribution::<T>(s, &peer).unwrap()))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let signer_side = shares[1..]
            .iter()
            .map(|s| dh_contribution_weighted::<T>(s, &cohort, &peer).unwrap())
            .fold(T::identity(), |acc, k| acc + k);
        assert_eq!(dealer_side, signer_side);
        assert_eq!(dealer_side, T::mul(&F::new(321), &peer));
    }

    #[test]
    fn signature_bytes_layout() {
        let sig = Signature::<Ed25519> {
            r: Ed25519::generator(),
            s: curve25519_dalek::Scalar::from(5u8),
        };
        let bytes = sig.to_bytes();
        assert_eq!(bytes.len(), 64);
        assert_eq!(Signature::<Ed25519>::from_bytes(&bytes), Some(sig));
        let mut big_s = bytes.clone();
        big_s[32..].copy_from_slice(&Ed25519::params().ell.to_bytes_le());
        assert!(Signature::<Ed25519>::from_bytes(&big_s).is_none());
    }
}
