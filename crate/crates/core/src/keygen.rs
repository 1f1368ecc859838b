//! Actor-side logic of the distributed key generation ceremony.
//!
//! Each actor draws a clamped secret scalar `a_i`, proves knowledge of it with
//! an EdDSA-style signature of the empty message, and Shamir-shares
//! `a_i mod ell` among the swarm. After every contribution has been checked,
//! an actor's shares sum to its share of `a = sum a_i`, and the public
//! contributions `A_i = a_i G` sum to the aggregate public key. No party ever
//! holds `a`.

use num_bigint::BigUint;
use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::group::{hash_to_scalar, sha512, Field, Group, GroupParams};
use crate::shamir::{aggregate_share, ShamirError, Share, SharingPolynomial};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeygenError {
    #[error("invalid parameters: {0}")]
    Parameters(String),
    #[error(transparent)]
    Sharing(#[from] ShamirError),
    #[error("expected {expected} bundles, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("bundle from sender {sender} is addressed to another x-coordinate")]
    Misaddressed { sender: usize },
    #[error("bundle from sender {sender} rejected: {failure}")]
    CheckFailed { sender: usize, failure: CheckFailure },
}

/// Which of the three contribution checks rejected a bundle.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckFailure {
    #[error("check 1: public contribution has low order")]
    LowOrder,
    #[error("check 2: proof response is not below ell")]
    ScalarOutOfRange,
    #[error("check 3: proof of knowledge does not verify")]
    ProofInvalid,
}

impl CheckFailure {
    pub fn check_number(&self) -> u8 {
        match self {
            CheckFailure::LowOrder => 1,
            CheckFailure::ScalarOutOfRange => 2,
            CheckFailure::ProofInvalid => 3,
        }
    }

    /// Short label used in transcripts.
    pub fn label(&self) -> &'static str {
        match self {
            CheckFailure::LowOrder => "check1:low-order",
            CheckFailure::ScalarOutOfRange => "check2:scalar-range",
            CheckFailure::ProofInvalid => "check3:proof",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [Self::LowOrder, Self::ScalarOutOfRange, Self::ProofInvalid]
            .into_iter()
            .find(|c| c.label() == s)
    }
}

/// A clamped secret scalar kept at full width, little-endian.
#[derive(Clone, PartialEq, Eq)]
pub struct UnreducedScalar(Vec<u8>);

impl std::fmt::Debug for UnreducedScalar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("UnreducedScalar(..)")
    }
}

impl UnreducedScalar {
    pub fn from_le_bytes(bytes: Vec<u8>) -> Self {
        UnreducedScalar(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_le(&self.0)
    }

    pub fn reduce<F: Field>(&self) -> F {
        F::from_le_bytes_mod_order(&self.0)
    }
}

/// The upper half of the seed hash. Single use: [`make_proof`] consumes it.
pub struct SecretPrefix(Vec<u8>);

impl SecretPrefix {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// Output of [`new_secret_scalar`].
pub struct SecretScalarPair {
    scalar: UnreducedScalar,
    prefix: Option<SecretPrefix>,
}

impl SecretScalarPair {
    pub fn scalar(&self) -> &UnreducedScalar {
        &self.scalar
    }

    /// Hands out the prefix once; later calls return `None`.
    pub fn take_prefix(&mut self) -> Option<SecretPrefix> {
        self.prefix.take()
    }

    pub fn into_parts(self) -> (UnreducedScalar, Option<SecretPrefix>) {
        (self.scalar, self.prefix)
    }
}

fn bit(h: &[u8], i: u32) -> bool {
    (h[(i / 8) as usize] >> (i % 8)) & 1 == 1
}

/// Applies key clamping to a `2b`-bit digest `h` (bits numbered little-endian
/// within each byte, as in RFC 8032).
///
/// Returns `(a, p)` with `a = 2^n + sum_{i=c}^{n-1} h_i 2^i` and
/// `p = sum_{i=0}^{b-1} h_{b+i} 2^i`, where `n` is `clamp_bit`.
pub fn clamp_digest(h: &[u8], b: u32, c: u32, clamp_bit: u32) -> (BigUint, BigUint) {
    assert!(h.len() * 8 >= 2 * b as usize, "digest shorter than 2b bits");
    assert!(c < clamp_bit && clamp_bit < b);
    let mut a = BigUint::from(1u8) << clamp_bit as usize;
    for i in c..clamp_bit {
        if bit(h, i) {
            a.set_bit(i as u64, true);
        }
    }
    let p = BigUint::from_bytes_le(&h[(b / 8) as usize..(2 * b / 8) as usize]);
    (a, p)
}

fn to_fixed_le(v: &BigUint, len: usize) -> Vec<u8> {
    let mut out = v.to_bytes_le();
    out.resize(len, 0);
    out
}

/// Deterministic part of secret scalar generation: hash a seed and clamp.
pub fn secret_scalar_from_seed<G: Group>(seed: &[u8]) -> SecretScalarPair {
    let GroupParams {
        b,
        cofactor_log2,
        clamp_bit,
        ..
    } = G::params();
    let digest = sha512(&[seed]);
    let h = &digest[..(2 * b / 8) as usize];
    let (a, p) = clamp_digest(h, b, cofactor_log2, clamp_bit);
    SecretScalarPair {
        scalar: UnreducedScalar(to_fixed_le(&a, (b / 8) as usize)),
        prefix: Some(SecretPrefix(to_fixed_le(&p, (b / 8) as usize))),
    }
}

/// Draws a fresh `b`-bit seed, hashes and clamps it. The seed is dropped.
pub fn new_secret_scalar<G: Group, R: RngCore + CryptoRng + ?Sized>(
    rng: &mut R,
) -> SecretScalarPair {
    let mut seed = vec![0u8; (G::params().b / 8) as usize];
    rng.fill_bytes(&mut seed);
    secret_scalar_from_seed::<G>(&seed)
}

/// Whether `a` is a value key clamping can produce:
/// `a = 2^n + 2^c k` with `0 <= k < 2^{n-c}`.
pub fn in_keyspace(params: &GroupParams, a: &BigUint) -> bool {
    let n = params.clamp_bit as u64;
    let low_clear = (0..params.cofactor_log2 as u64).all(|i| !a.bit(i));
    low_clear && a.bit(n) && a.bits() == n + 1
}

/// Smallest clamped value congruent to `target` modulo `ell`, if any.
pub fn clamped_preimage(params: &GroupParams, target: &BigUint) -> Option<BigUint> {
    let ell = &params.ell;
    let top = BigUint::from(1u8) << params.clamp_bit as usize;
    let step = BigUint::from(params.cofactor());
    let step_inv = step.modpow(&(ell - 2u8), ell);
    // a = top + step * k  =>  k = (target - top) / step  (mod ell)
    let diff = ((target % ell) + ell - (&top % ell)) % ell;
    let k0 = (diff * step_inv) % ell;
    let bound = BigUint::from(1u8) << (params.clamp_bit - params.cofactor_log2) as usize;
    (k0 < bound).then(|| top + step * k0)
}

/// `(A, R, S)`: a Schnorr proof that the sender knows `a` with `A = aG`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Proof<G: Group> {
    pub public: G::Element,
    pub commitment: G::Element,
    pub response: G::Scalar,
}

/// Builds the proof from an explicit reduced scalar and nonce.
///
/// `S = H(A || R) a + r`.
pub fn proof_with_nonce<G: Group>(a: &G::Scalar, r: &G::Scalar) -> Proof<G> {
    let public = G::mul_base(a);
    let commitment = G::mul_base(r);
    let k = proof_challenge::<G>(&public, &commitment);
    Proof {
        public,
        commitment,
        response: k * *a + *r,
    }
}

pub fn proof_challenge<G: Group>(public: &G::Element, commitment: &G::Element) -> G::Scalar {
    hash_to_scalar::<G>(&[&G::encode(public), &G::encode(commitment)])
}

/// Proof of knowledge for `a`, with the nonce `r = H(prefix)`.
pub fn make_proof<G: Group>(a: &UnreducedScalar, prefix: SecretPrefix) -> Proof<G> {
    let r = hash_to_scalar::<G>(&[prefix.as_bytes()]);
    proof_with_nonce::<G>(&a.reduce(), &r)
}

/// The proof response as transmitted: fixed width, possibly out of range.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RawScalar(pub Vec<u8>);

impl RawScalar {
    pub fn from_scalar<F: Field>(s: &F) -> Self {
        RawScalar(s.to_bytes())
    }

    pub fn canonical<F: Field>(&self) -> Option<F> {
        F::from_canonical_bytes(&self.0)
    }
}

const BUNDLE_TAG: &[u8] = b"nshamir/bundle/v1";

/// What actor `i` sends actor `j`: `(sigma_{i->j}, R_i, A_i, S_i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareBundle<G: Group> {
    pub sigma: Share<G::Scalar>,
    pub commitment: G::Element,
    pub public: G::Element,
    pub response: RawScalar,
}

impl<G: Group> ShareBundle<G> {
    pub fn new(sigma: Share<G::Scalar>, proof: &Proof<G>) -> Self {
        ShareBundle {
            sigma,
            commitment: proof.commitment,
            public: proof.public,
            response: RawScalar::from_scalar(&proof.response),
        }
    }

    /// Plaintext encoding: a fixed tag, the share, then `R`, `A`, `S`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = BUNDLE_TAG.to_vec();
        out.extend(self.sigma.to_bytes());
        out.extend(self.public_bytes());
        out
    }

    /// `R || A || S`, the part of the bundle that is not secret.
    pub fn public_bytes(&self) -> Vec<u8> {
        let mut out = G::encode(&self.commitment);
        out.extend(G::encode(&self.public));
        out.extend(&self.response.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let rest = bytes.strip_prefix(BUNDLE_TAG)?;
        let fb = <G::Scalar as Field>::BYTES;
        if rest.len() != 2 * fb + 2 * G::ELEMENT_BYTES + fb {
            return None;
        }
        let (share, rest) = rest.split_at(2 * fb);
        let (commitment, public, response) = split_public::<G>(rest)?;
        Some(ShareBundle {
            sigma: Share::from_bytes(share)?,
            commitment,
            public,
            response,
        })
    }
}

/// Parses `R || A || S` as produced by [`ShareBundle::public_bytes`].
pub fn split_public<G: Group>(bytes: &[u8]) -> Option<(G::Element, G::Element, RawScalar)> {
    let eb = G::ELEMENT_BYTES;
    if bytes.len() != 2 * eb + <G::Scalar as Field>::BYTES {
        return None;
    }
    let commitment = G::decode(&bytes[..eb])?;
    let public = G::decode(&bytes[eb..2 * eb])?;
    Some((commitment, public, RawScalar(bytes[2 * eb..].to_vec())))
}

/// The three contribution checks, in order.
pub fn verify_contribution<G: Group>(
    public: &G::Element,
    commitment: &G::Element,
    response: &RawScalar,
) -> Result<(), CheckFailure> {
    if G::is_low_order(public) {
        return Err(CheckFailure::LowOrder);
    }
    let s: G::Scalar = response.canonical().ok_or(CheckFailure::ScalarOutOfRange)?;
    let k = proof_challenge::<G>(public, commitment);
    if G::mul_base(&s) != G::mul(&k, public) + *commitment {
        return Err(CheckFailure::ProofInvalid);
    }
    Ok(())
}

pub fn verify_bundle<G: Group>(bundle: &ShareBundle<G>) -> Result<(), CheckFailure> {
    verify_contribution::<G>(&bundle.public, &bundle.commitment, &bundle.response)
}

/// Evaluates `poly` at every x-coordinate and attaches the proof.
pub fn build_bundles<G: Group>(
    poly: &SharingPolynomial<G::Scalar>,
    proof: &Proof<G>,
    x_coords: &[G::Scalar],
) -> Result<Vec<ShareBundle<G>>, KeygenError> {
    x_coords
        .iter()
        .map(|&x| Ok(ShareBundle::new(poly.eval_share(x)?, proof)))
        .collect()
}

fn validate_coordinates<F: Field>(x_coords: &[F], t: usize) -> Result<(), KeygenError> {
    if t == 0 || x_coords.len() < t {
        return Err(KeygenError::Parameters(format!(
            "need 1 <= t <= n, got t={t}, n={}",
            x_coords.len()
        )));
    }
    for (i, x) in x_coords.iter().enumerate() {
        if x.is_zero() {
            return Err(ShamirError::ZeroCoordinate.into());
        }
        if x_coords[..i].contains(x) {
            return Err(ShamirError::DuplicateCoordinate.into());
        }
    }
    Ok(())
}

/// State an actor keeps between `begin` and `complete`.
pub struct ActorKeygenState<G: Group> {
    index: usize,
    x_coords: Vec<G::Scalar>,
    secret: UnreducedScalar,
    polynomial: SharingPolynomial<G::Scalar>,
    proof: Proof<G>,
}

impl<G: Group> ActorKeygenState<G> {
    /// Assembles a state from its parts without any consistency checks.
    /// Used by simulated misbehaving actors.
    pub fn from_parts(
        index: usize,
        x_coords: Vec<G::Scalar>,
        secret: UnreducedScalar,
        polynomial: SharingPolynomial<G::Scalar>,
        proof: Proof<G>,
    ) -> Self {
        ActorKeygenState {
            index,
            x_coords,
            secret,
            polynomial,
            proof,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn x(&self) -> G::Scalar {
        self.x_coords[self.index]
    }

    pub fn x_coords(&self) -> &[G::Scalar] {
        &self.x_coords
    }

    /// This actor's clamped contribution `a_i`, unreduced.
    pub fn secret(&self) -> &UnreducedScalar {
        &self.secret
    }

    pub fn polynomial(&self) -> &SharingPolynomial<G::Scalar> {
        &self.polynomial
    }

    pub fn proof(&self) -> &Proof<G> {
        &self.proof
    }
}

impl<G: Group> std::fmt::Debug for ActorKeygenState<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ActorKeygenState")
            .field("index", &self.index)
            .field("public", &self.proof.public)
            .finish_non_exhaustive()
    }
}

/// First half of an actor's part in the ceremony.
///
/// Returns one bundle per x-coordinate (including the actor's own) and the
/// state needed by [`complete`].
pub fn begin<G: Group, R: RngCore + CryptoRng + ?Sized>(
    my_index: usize,
    x_coords: &[G::Scalar],
    t: usize,
    rng: &mut R,
) -> Result<(Vec<ShareBundle<G>>, ActorKeygenState<G>), KeygenError> {
    validate_coordinates(x_coords, t)?;
    if my_index >= x_coords.len() {
        return Err(KeygenError::Parameters(format!(
            "index {my_index} outside swarm of {}",
            x_coords.len()
        )));
    }
    let pair = new_secret_scalar::<G, R>(rng);
    begin_with_secret(my_index, x_coords, t, pair, rng)
}

/// [`begin`] with a caller-provided secret scalar.
pub fn begin_with_secret<G: Group, R: RngCore + CryptoRng + ?Sized>(
    my_index: usize,
    x_coords: &[G::Scalar],
    t: usize,
    pair: SecretScalarPair,
    rng: &mut R,
) -> Result<(Vec<ShareBundle<G>>, ActorKeygenState<G>), KeygenError> {
    validate_coordinates(x_coords, t)?;
    let (secret, prefix) = pair.into_parts();
    let prefix =
        prefix.ok_or_else(|| KeygenError::Parameters("secret prefix already used".into()))?;
    let proof = make_proof::<G>(&secret, prefix);
    let polynomial = SharingPolynomial::sample(secret.reduce(), t, rng)?;
    let bundles = build_bundles(&polynomial, &proof, x_coords)?;
    Ok((
        bundles,
        ActorKeygenState {
            index: my_index,
            x_coords: x_coords.to_vec(),
            secret,
            polynomial,
            proof,
        },
    ))
}

/// Outcome of a completed ceremony from one actor's point of view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeygenResult<G: Group> {
    pub aggregate_public: G::Element,
    pub my_share: Share<G::Scalar>,
    pub peer_publics: Vec<G::Element>,
}

/// Second half: check every incoming bundle, then aggregate.
///
/// `bundles_in[j]` is the bundle sent by the actor at swarm position `j`.
pub fn complete<G: Group>(
    state: &ActorKeygenState<G>,
    bundles_in: &[ShareBundle<G>],
) -> Result<KeygenResult<G>, KeygenError> {
    complete_inner(state, bundles_in, true)
}

/// [`complete`] with the contribution checks turned off.
///
/// Only meant for demonstrating what the checks prevent.
pub fn complete_without_checks<G: Group>(
    state: &ActorKeygenState<G>,
    bundles_in: &[ShareBundle<G>],
) -> Result<KeygenResult<G>, KeygenError> {
    complete_inner(state, bundles_in, false)
}

fn complete_inner<G: Group>(
    state: &ActorKeygenState<G>,
    bundles_in: &[ShareBundle<G>],
    checks: bool,
) -> Result<KeygenResult<G>, KeygenError> {
    let n = state.x_coords.len();
    if bundles_in.len() != n {
        return Err(KeygenError::WrongCount {
            expected: n,
            got: bundles_in.len(),
        });
    }
    let my_x = state.x();
    for (sender, bundle) in bundles_in.iter().enumerate() {
        if bundle.sigma.x != my_x {
            return Err(KeygenError::Misaddressed { sender });
        }
        if checks {
            verify_bundle(bundle).map_err(|failure| KeygenError::CheckFailed { sender, failure })?;
        }
    }
    let shares: Vec<_> = bundles_in.iter().map(|b| b.sigma).collect();
    let my_share = aggregate_share(&shares)?;
    let peer_publics: Vec<_> = bundles_in.iter().map(|b| b.public).collect();
    let aggregate_public = peer_publics
        .iter()
        .fold(G::identity(), |acc, &a| acc + a);
    Ok(KeygenResult {
        aggregate_public,
        my_share,
        peer_publics,
    })
}
