use super::hash::{sha256, Digest};
use crate::error::CryptoError;
use crate::types::Batch;

/// Domain tag prefixed to leaf preimages.
pub const LEAF_TAG: u8 = 0x00;
/// Domain tag prefixed to inner-node preimages.
pub const NODE_TAG: u8 = 0x01;

pub fn leaf_hash(leaf: &[u8]) -> Digest {
    sha256(&[&[LEAF_TAG], leaf])
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    sha256(&[&[NODE_TAG], left.as_bytes(), right.as_bytes()])
}

/// Root of a binary Merkle tree over `leaves`. A level with an odd number
/// of nodes pairs its last node with itself.
pub fn merkle_root<L: AsRef<[u8]>>(leaves: &[L]) -> Result<Digest, CryptoError> {
    if leaves.is_empty() {
        return Err(CryptoError::EmptyInput);
    }
    let level: Vec<Digest> = leaves.iter().map(|l| leaf_hash(l.as_ref())).collect();
    Ok(reduce(level))
}

fn reduce(mut level: Vec<Digest>) -> Digest {
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => node_hash(l, r),
                [l] => node_hash(l, l),
                _ => unreachable!(),
            })
            .collect();
    }
    level[0]
}

/// Merkle root whose leaves are the canonical encodings of the batch's
/// requests, in batch order. The batch id is not hashed; it travels in the
/// tag next to the digest.
pub fn hash_batch(b: &Batch) -> Result<Digest, CryptoError> {
    if b.txs.is_empty() {
        return Err(CryptoError::EmptyInput);
    }
    let level: Vec<Digest> = b.txs.iter().map(|t| leaf_hash(&t.encode())).collect();
    Ok(reduce(level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest as _, Sha256};

    // Oracle built directly on the SHA-256 primitive, independent of the
    // helpers above.
    fn oracle_leaf(b: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update([0u8]);
        h.update(b);
        h.finalize().into()
    }

    fn oracle_node(l: &[u8; 32], r: &[u8; 32]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update([1u8]);
        h.update(l);
        h.update(r);
        h.finalize().into()
    }

    #[test]
    fn single_leaf_is_leaf_hash() {
        assert_eq!(merkle_root(&[b"L"]).unwrap().0, oracle_leaf(b"L"));
    }

    #[test]
    fn four_leaves_match_oracle() {
        let leaves: [&[u8]; 4] = [b"a", b"b", b"c", b"d"];
        let h: Vec<_> = leaves.iter().map(|l| oracle_leaf(l)).collect();
        let expect = oracle_node(&oracle_node(&h[0], &h[1]), &oracle_node(&h[2], &h[3]));
        assert_eq!(merkle_root(&leaves).unwrap().0, expect);
        assert_eq!(
            merkle_root(&leaves).unwrap().to_hex(),
            "33376a3bd63e9993708a84ddfe6c28ae58b83505dd1fed711bd924ec5a6239f0"
        );
    }

    #[test]
    fn three_leaves_duplicate_last() {
        let three: [&[u8]; 3] = [b"a", b"b", b"c"];
        let four: [&[u8]; 4] = [b"a", b"b", b"c", b"c"];
        assert_eq!(merkle_root(&three).unwrap(), merkle_root(&four).unwrap());
        let h: Vec<_> = three.iter().map(|l| oracle_leaf(l)).collect();
        let expect = oracle_node(&oracle_node(&h[0], &h[1]), &oracle_node(&h[2], &h[2]));
        assert_eq!(merkle_root(&three).unwrap().0, expect);
        assert_eq!(
            merkle_root(&three).unwrap().to_hex(),
            "e9636069c740c9ff51625b01a0b040396d265a9b920cc6febdfa5ecc9f58ecce"
        );
    }

    #[test]
    fn empty_input_rejected() {
        let none: [&[u8]; 0] = [];
        assert_eq!(merkle_root(&none), Err(CryptoError::EmptyInput));
        assert_eq!(hash_batch(&Batch::new(0, vec![])), Err(CryptoError::EmptyInput));
    }

    #[test]
    fn leaf_and_node_domains_differ() {
        // A two-leaf root must not equal the leaf hash of the concatenated children.
        let l = leaf_hash(b"x");
        let r = leaf_hash(b"y");
        let mut concat = l.0.to_vec();
        concat.extend_from_slice(&r.0);
        assert_ne!(node_hash(&l, &r), leaf_hash(&concat));
    }
}
