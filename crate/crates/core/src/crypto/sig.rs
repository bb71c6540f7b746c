//! Signatures over batch tags.
//!
//! Two schemes sit behind the same contract. `Bls` is BLS12-381 (public
//! keys in G1, signatures in G2) with true aggregation. `Ed25519` is a
//! non-aggregating substitute whose "aggregate" is the list of member
//! signatures in signer order. `verify_aggregate` has the same meaning for
//! both: the aggregate was built from valid signatures of exactly the
//! carried signer set over the tag.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use blst::min_pk as bls;
use blst::BLST_ERROR;
use ed25519_dalek::{Signer as _, Verifier as _};
use serde::{Deserialize, Serialize};

use crate::error::CryptoError;
use crate::types::{BatchTag, ReplicaId};

const BLS_SIG_DST: &[u8] = b"BLS_SIG_BLS12381G2_XMD:SHA-256_SSWU_RO_POP_";
const BLS_POP_DST: &[u8] = b"BLS_POP_BLS12381G2_XMD:SHA-256_SSWU_RO_POP_";
const ED_POP_PREFIX: &[u8] = b"arranger/pop/v1";

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Bls,
    Ed25519,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bls => "bls",
            Scheme::Ed25519 => "ed25519",
        }
    }

    pub fn signature_len(self) -> usize {
        match self {
            Scheme::Bls => 96,
            Scheme::Ed25519 => 64,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bls" => Ok(Scheme::Bls),
            "ed25519" => Ok(Scheme::Ed25519),
            other => Err(format!("unknown signature scheme {other:?}")),
        }
    }
}

#[derive(Clone)]
enum Secret {
    Bls(bls::SecretKey),
    Ed(ed25519_dalek::SigningKey),
}

#[derive(Clone, PartialEq, Eq)]
pub enum PublicKey {
    Bls(bls::PublicKey),
    Ed(ed25519_dalek::VerifyingKey),
}

impl PublicKey {
    pub fn scheme(&self) -> Scheme {
        match self {
            PublicKey::Bls(_) => Scheme::Bls,
            PublicKey::Ed(_) => Scheme::Ed25519,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            PublicKey::Bls(pk) => pk.compress().to_vec(),
            PublicKey::Ed(pk) => pk.to_bytes().to_vec(),
        }
    }

    fn verify_raw(&self, msg: &[u8], sig: &[u8], bls_dst: &[u8]) -> bool {
        match self {
            PublicKey::Bls(pk) => match bls::Signature::from_bytes(sig) {
                Ok(s) => s.verify(true, msg, bls_dst, &[], pk, false) == BLST_ERROR::BLST_SUCCESS,
                Err(_) => false,
            },
            PublicKey::Ed(pk) => match <[u8; 64]>::try_from(sig) {
                Ok(raw) => pk
                    .verify(msg, &ed25519_dalek::Signature::from_bytes(&raw))
                    .is_ok(),
                Err(_) => false,
            },
        }
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}:{})", self.scheme(), &hex::encode(self.to_bytes())[..12])
    }
}

/// A single replica signature. The scheme is implied by the key that made it.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = hex::encode(&self.0);
        write!(f, "Signature({})", &hex[..hex.len().min(12)])
    }
}

/// Combined signature plus the identity of every signer.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AggregateSignature {
    pub bytes: Vec<u8>,
    pub signers: BTreeSet<ReplicaId>,
}

/// Key pair of one replica.
#[derive(Clone)]
pub struct KeyPair {
    secret: Secret,
    public: PublicKey,
}

impl KeyPair {
    /// Deterministic key generation from 32 bytes of seed material.
    pub fn from_seed(scheme: Scheme, seed: [u8; 32]) -> Self {
        match scheme {
            Scheme::Bls => {
                let sk = bls::SecretKey::key_gen(&seed, &[]).expect("32-byte ikm is accepted");
                let pk = sk.sk_to_pk();
                KeyPair {
                    secret: Secret::Bls(sk),
                    public: PublicKey::Bls(pk),
                }
            }
            Scheme::Ed25519 => {
                let sk = ed25519_dalek::SigningKey::from_bytes(&seed);
                let pk = sk.verifying_key();
                KeyPair {
                    secret: Secret::Ed(sk),
                    public: PublicKey::Ed(pk),
                }
            }
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.public.scheme()
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    fn sign_raw(&self, msg: &[u8], bls_dst: &[u8]) -> Vec<u8> {
        match &self.secret {
            Secret::Bls(sk) => sk.sign(msg, bls_dst, &[]).compress().to_vec(),
            Secret::Ed(sk) => sk.sign(msg).to_bytes().to_vec(),
        }
    }

    /// Proof that the holder knows the secret key for its public key.
    pub fn proof_of_possession(&self) -> Signature {
        let pk = self.public.to_bytes();
        match &self.secret {
            Secret::Bls(_) => Signature(self.sign_raw(&pk, BLS_POP_DST)),
            Secret::Ed(_) => {
                let mut msg = ED_POP_PREFIX.to_vec();
                msg.extend_from_slice(&pk);
                Signature(self.sign_raw(&msg, BLS_POP_DST))
            }
        }
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish()
    }
}

pub fn sign(tag: &BatchTag, key: &KeyPair) -> Signature {
    Signature(key.sign_raw(&tag.signing_bytes(), BLS_SIG_DST))
}

pub fn verify(tag: &BatchTag, sig: &Signature, pk: &PublicKey) -> bool {
    pk.verify_raw(&tag.signing_bytes(), &sig.0, BLS_SIG_DST)
}

/// Replica key directory. Keys are admitted only with a valid proof of
/// possession, which rules out rogue-key aggregates.
#[derive(Clone, Debug)]
pub struct Pki {
    scheme: Scheme,
    keys: BTreeMap<ReplicaId, PublicKey>,
}

impl Pki {
    pub fn new(scheme: Scheme) -> Self {
        Pki {
            scheme,
            keys: BTreeMap::new(),
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn register(
        &mut self,
        id: ReplicaId,
        pk: PublicKey,
        pop: &Signature,
    ) -> Result<(), CryptoError> {
        if pk.scheme() != self.scheme {
            return Err(CryptoError::SchemeMismatch);
        }
        let raw = pk.to_bytes();
        let ok = match pk.scheme() {
            Scheme::Bls => pk.verify_raw(&raw, &pop.0, BLS_POP_DST),
            Scheme::Ed25519 => {
                let mut msg = ED_POP_PREFIX.to_vec();
                msg.extend_from_slice(&raw);
                pk.verify_raw(&msg, &pop.0, BLS_POP_DST)
            }
        };
        if !ok {
            return Err(CryptoError::BadProofOfPossession);
        }
        self.keys.insert(id, pk);
        Ok(())
    }

    /// Builds a directory from key pairs, each registered with its own proof.
    pub fn from_keypairs<'a, I>(scheme: Scheme, pairs: I) -> Result<Self, CryptoError>
    where
        I: IntoIterator<Item = (ReplicaId, &'a KeyPair)>,
    {
        let mut pki = Pki::new(scheme);
        for (id, kp) in pairs {
            pki.register(id, kp.public().clone(), &kp.proof_of_possession())?;
        }
        Ok(pki)
    }

    pub fn get(&self, id: ReplicaId) -> Option<&PublicKey> {
        self.keys.get(&id)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Combines per-replica signatures. Inputs are not re-verified.
pub fn aggregate(
    sigs: &BTreeMap<ReplicaId, Signature>,
    scheme: Scheme,
) -> Result<AggregateSignature, CryptoError> {
    if sigs.is_empty() {
        return Err(CryptoError::EmptySignerSet);
    }
    let signers: BTreeSet<ReplicaId> = sigs.keys().copied().collect();
    let bytes = match scheme {
        Scheme::Bls => {
            let parsed = sigs
                .values()
                .map(|s| bls::Signature::from_bytes(&s.0))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CryptoError::BadKey(format!("{e:?}")))?;
            let refs: Vec<&bls::Signature> = parsed.iter().collect();
            bls::AggregateSignature::aggregate(&refs, false)
                .map_err(|e| CryptoError::BadKey(format!("{e:?}")))?
                .to_signature()
                .compress()
                .to_vec()
        }
        Scheme::Ed25519 => sigs.values().flat_map(|s| s.0.iter().copied()).collect(),
    };
    Ok(AggregateSignature { bytes, signers })
}

pub fn verify_aggregate(tag: &BatchTag, agg: &AggregateSignature, pki: &Pki) -> bool {
    if agg.signers.is_empty() {
        return false;
    }
    let mut pks = Vec::with_capacity(agg.signers.len());
    for id in &agg.signers {
        match pki.get(*id) {
            Some(pk) => pks.push(pk),
            None => return false,
        }
    }
    let msg = tag.signing_bytes();
    match pki.scheme() {
        Scheme::Bls => {
            let mut keys = Vec::with_capacity(pks.len());
            for pk in pks {
                match pk {
                    PublicKey::Bls(k) => keys.push(k),
                    PublicKey::Ed(_) => return false,
                }
            }
            let Ok(apk) = bls::AggregatePublicKey::aggregate(&keys, false) else {
                return false;
            };
            let Ok(sig) = bls::Signature::from_bytes(&agg.bytes) else {
                return false;
            };
            sig.verify(true, &msg, BLS_SIG_DST, &[], &apk.to_public_key(), false)
                == BLST_ERROR::BLST_SUCCESS
        }
        Scheme::Ed25519 => {
            if agg.bytes.len() != 64 * pks.len() {
                return false;
            }
            pks.iter()
                .zip(agg.bytes.chunks_exact(64))
                .all(|(pk, sig)| pk.verify_raw(&msg, sig, BLS_SIG_DST))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::sha256;

    fn keys(scheme: Scheme, n: u16) -> Vec<KeyPair> {
        (0..n)
            .map(|i| {
                let mut seed = [7u8; 32];
                seed[0] = i as u8;
                KeyPair::from_seed(scheme, seed)
            })
            .collect()
    }

    fn tag(id: u64) -> BatchTag {
        BatchTag::new(id, sha256(&[b"batch", &id.to_be_bytes()]))
    }

    #[test]
    fn sign_verify_both_schemes() {
        for scheme in [Scheme::Bls, Scheme::Ed25519] {
            let ks = keys(scheme, 2);
            let s = sign(&tag(0), &ks[0]);
            assert_eq!(s.0.len(), scheme.signature_len());
            assert!(verify(&tag(0), &s, ks[0].public()));
            assert!(!verify(&tag(1), &s, ks[0].public()));
            assert!(!verify(&tag(0), &s, ks[1].public()));
        }
    }

    #[test]
    fn garbage_signature_rejected() {
        let ks = keys(Scheme::Bls, 1);
        assert!(!verify(&tag(0), &Signature(vec![1, 2, 3]), ks[0].public()));
        assert!(!verify(&tag(0), &Signature(vec![0; 96]), ks[0].public()));
    }

    #[test]
    fn pki_rejects_bad_pop_and_scheme() {
        let ks = keys(Scheme::Bls, 2);
        let mut pki = Pki::new(Scheme::Bls);
        assert_eq!(
            pki.register(ReplicaId(0), ks[0].public().clone(), &ks[1].proof_of_possession()),
            Err(CryptoError::BadProofOfPossession)
        );
        let ed = keys(Scheme::Ed25519, 1);
        assert_eq!(
            pki.register(ReplicaId(0), ed[0].public().clone(), &ed[0].proof_of_possession()),
            Err(CryptoError::SchemeMismatch)
        );
        pki.register(ReplicaId(0), ks[0].public().clone(), &ks[0].proof_of_possession())
            .unwrap();
        assert_eq!(pki.len(), 1);
    }

    #[test]
    fn aggregate_requires_signers() {
        assert_eq!(
            aggregate(&BTreeMap::new(), Scheme::Bls),
            Err(CryptoError::EmptySignerSet)
        );
    }

    #[test]
    fn aggregate_verifies_and_rejects_tampering() {
        for scheme in [Scheme::Bls, Scheme::Ed25519] {
            let ks = keys(scheme, 4);
            let pki =
                Pki::from_keypairs(scheme, ks.iter().enumerate().map(|(i, k)| (ReplicaId(i as u16), k)))
                    .unwrap();
            let t = tag(3);
            let sigs: BTreeMap<_, _> = (0..2u16)
                .map(|i| (ReplicaId(i), sign(&t, &ks[i as usize])))
                .collect();
            let agg = aggregate(&sigs, scheme).unwrap();
            assert!(verify_aggregate(&t, &agg, &pki));
            assert!(!verify_aggregate(&tag(4), &agg, &pki));

            let mut dropped = agg.clone();
            dropped.signers.remove(&ReplicaId(1));
            assert!(!verify_aggregate(&t, &dropped, &pki));

            let mut added = agg.clone();
            added.signers.insert(ReplicaId(2));
            assert!(!verify_aggregate(&t, &added, &pki));

            let mut unknown = agg.clone();
            unknown.signers.insert(ReplicaId(9));
            assert!(!verify_aggregate(&t, &unknown, &pki));

            // One member signed a different tag.
            let mut mixed = sigs.clone();
            mixed.insert(ReplicaId(1), sign(&tag(4), &ks[1]));
            assert!(verify(&tag(4), &mixed[&ReplicaId(1)], ks[1].public()));
            assert!(!verify_aggregate(&t, &aggregate(&mixed, scheme).unwrap(), &pki));
        }
    }
}
