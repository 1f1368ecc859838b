//! Sealing share bundles for a single recipient.
//!
//! X25519 with a fresh sender key per message, HKDF-SHA256, then
//! ChaCha20-Poly1305. Sender and recipient identifiers are bound as
//! associated data so the dealer cannot redirect a bundle.

use chacha20poly1305::aead::{Aead, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, KeyInit, Nonce};
use hkdf::Hkdf;
use rand_core::{CryptoRng, RngCore};
use sha2::Sha256;
use x25519_dalek::{PublicKey, StaticSecret};

use crate::group::Group;
use crate::keygen::ShareBundle;

const AAD_TAG: &[u8] = b"nshamir/seal/v1";
const KDF_INFO: &[u8] = b"nshamir share encryption";

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SealError {
    #[error("sealed bundle is truncated")]
    Truncated,
    #[error("key agreement produced a non-contributory secret")]
    WeakKey,
    #[error("authentication failed")]
    Authentication,
    #[error("plaintext is not a share bundle")]
    Malformed,
}

pub struct EncryptionKeypair {
    secret: StaticSecret,
    public: PublicKey,
}

impl EncryptionKeypair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let secret = StaticSecret::random_from_rng(rng);
        let public = PublicKey::from(&secret);
        EncryptionKeypair { secret, public }
    }

    pub fn public(&self) -> [u8; 32] {
        self.public.to_bytes()
    }
}

/// An encrypted bundle as it crosses the dealer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedBundle {
    pub sender: u32,
    pub recipient: u32,
    pub ephemeral: [u8; 32],
    pub ciphertext: Vec<u8>,
}

impl SealedBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + self.ciphertext.len());
        out.extend(self.sender.to_le_bytes());
        out.extend(self.recipient.to_le_bytes());
        out.extend(self.ephemeral);
        out.extend(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SealError> {
        if bytes.len() < 40 + 16 {
            return Err(SealError::Truncated);
        }
        Ok(SealedBundle {
            sender: u32::from_le_bytes(bytes[0..4].try_into().unwrap()),
            recipient: u32::from_le_bytes(bytes[4..8].try_into().unwrap()),
            ephemeral: bytes[8..40].try_into().unwrap(),
            ciphertext: bytes[40..].to_vec(),
        })
    }
}

fn cipher(shared: &[u8; 32], ephemeral: &[u8; 32], recipient_key: &[u8; 32]) -> ChaCha20Poly1305 {
    let mut salt = ephemeral.to_vec();
    salt.extend(recipient_key);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 32];
    hk.expand(KDF_INFO, &mut okm).expect("32 bytes is a valid HKDF length");
    ChaCha20Poly1305::new(Key::from_slice(&okm))
}

fn aad(sender: u32, recipient: u32) -> Vec<u8> {
    let mut out = AAD_TAG.to_vec();
    out.extend(sender.to_le_bytes());
    out.extend(recipient.to_le_bytes());
    out
}

pub fn seal<R: RngCore + CryptoRng>(
    plaintext: &[u8],
    sender: u32,
    recipient: u32,
    recipient_key: &[u8; 32],
    rng: &mut R,
) -> Result<SealedBundle, SealError> {
    let eph = EncryptionKeypair::generate(rng);
    let shared = eph.secret.diffie_hellman(&PublicKey::from(*recipient_key));
    if !shared.was_contributory() {
        return Err(SealError::WeakKey);
    }
    let ephemeral = eph.public();
    // each key encrypts exactly one message
    let ciphertext = cipher(shared.as_bytes(), &ephemeral, recipient_key)
        .encrypt(
            Nonce::from_slice(&[0u8; 12]),
            Payload {
                msg: plaintext,
                aad: &aad(sender, recipient),
            },
        )
        .map_err(|_| SealError::Authentication)?;
    Ok(SealedBundle {
        sender,
        recipient,
        ephemeral,
        ciphertext,
    })
}

pub fn open(sealed: &SealedBundle, keypair: &EncryptionKeypair) -> Result<Vec<u8>, SealError> {
    let shared = keypair
        .secret
        .diffie_hellman(&PublicKey::from(sealed.ephemeral));
    if !shared.was_contributory() {
        return Err(SealError::WeakKey);
    }
    cipher(shared.as_bytes(), &sealed.ephemeral, &keypair.public())
        .decrypt(
            Nonce::from_slice(&[0u8; 12]),
            Payload {
                msg: &sealed.ciphertext,
                aad: &aad(sealed.sender, sealed.recipient),
            },
        )
        .map_err(|_| SealError::Authentication)
}

pub fn encrypt_share<G: Group, R: RngCore + CryptoRng>(
    bundle: &ShareBundle<G>,
    sender: u32,
    recipient: u32,
    recipient_key: &[u8; 32],
    rng: &mut R,
) -> Result<SealedBundle, SealError> {
    seal(&bundle.to_bytes(), sender, recipient, recipient_key, rng)
}

pub fn decrypt_share<G: Group>(
    sealed: &SealedBundle,
    keypair: &EncryptionKeypair,
) -> Result<ShareBundle<G>, SealError> {
    ShareBundle::from_bytes(&open(sealed, keypair)?).ok_or(SealError::Malformed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{DefaultToy, Field, Fp};
    use crate::keygen::proof_with_nonce;
    use crate::shamir::Share;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    fn bundle() -> ShareBundle<DefaultToy> {
        let proof = proof_with_nonce::<DefaultToy>(&Fp::from_u64(5), &Fp::from_u64(7));
        ShareBundle::new(
            Share {
                x: Fp::from_u64(2),
                y: Fp::from_u64(900),
            },
            &proof,
        )
    }

    #[test]
    fn roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let bob = EncryptionKeypair::generate(&mut rng);
        let sealed = encrypt_share(&bundle(), 1, 2, &bob.public(), &mut rng).unwrap();
        let back = SealedBundle::from_bytes(&sealed.to_bytes()).unwrap();
        assert_eq!(decrypt_share::<DefaultToy>(&back, &bob).unwrap(), bundle());
    }

    #[test]
    fn ciphertext_hides_plaintext() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let bob = EncryptionKeypair::generate(&mut rng);
        let plain = bundle().to_bytes();
        let sealed = encrypt_share(&bundle(), 1, 2, &bob.public(), &mut rng).unwrap();
        let wire = sealed.to_bytes();
        assert!(!wire.windows(plain.len()).any(|w| w == plain));
        assert!(!wire.windows(8).any(|w| w == b"nshamir/"));
    }

    #[test]
    fn wrong_recipient_or_relabel_fails() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let bob = EncryptionKeypair::generate(&mut rng);
        let eve = EncryptionKeypair::generate(&mut rng);
        let sealed = encrypt_share(&bundle(), 1, 2, &bob.public(), &mut rng).unwrap();
        assert_eq!(
            decrypt_share::<DefaultToy>(&sealed, &eve),
            Err(SealError::Authentication)
        );
        let mut relabeled = sealed.clone();
        relabeled.sender = 3;
        assert_eq!(
            decrypt_share::<DefaultToy>(&relabeled, &bob),
            Err(SealError::Authentication)
        );
        let mut flipped = sealed;
        flipped.ciphertext[0] ^= 1;
        assert!(decrypt_share::<DefaultToy>(&flipped, &bob).is_err());
    }

    #[test]
    fn low_order_recipient_key_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        assert_eq!(
            seal(b"x", 1, 2, &[0u8; 32], &mut rng),
            Err(SealError::WeakKey)
        );
        assert_eq!(SealedBundle::from_bytes(&[0u8; 10]), Err(SealError::Truncated));
    }
}
