//! Merkle trees over frame payloads within a GOP and over GOP roots within
//! a block, plus membership proofs used by storage verification.
//!
//! Construction rules, fixed for cross-node agreement:
//! - parent = hash(left || right);
//! - an odd node at any level is paired with a copy of itself;
//! - a single-leaf tree's root is the leaf digest itself.

use crate::crypto::{hash, hash_concat, Digest};
use crate::encoding::{CanonicalDecode, CanonicalEncode, Decoder, Encoder, EncodingError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("cannot build a tree from zero leaves")]
    EmptyLeaves,
    #[error("leaf index {index} out of range for {leaves} leaves")]
    IndexOutOfRange { index: usize, leaves: usize },
}

/// Which side a proof sibling sits on relative to the running hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// A full tree with all intermediate levels retained.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn build(leaves: Vec<Digest>) -> Result<MerkleTree, MerkleError> {
        if leaves.is_empty() {
            return Err(MerkleError::EmptyLeaves);
        }
        let mut levels = vec![leaves];
        while levels.last().unwrap().len() > 1 {
            let prev = levels.last().unwrap();
            let mut next = Vec::with_capacity(prev.len().div_ceil(2));
            for pair in prev.chunks(2) {
                let left = pair[0];
                let right = if pair.len() == 2 { pair[1] } else { pair[0] };
                next.push(hash_concat(&[&left.0, &right.0]));
            }
            levels.push(next);
        }
        Ok(MerkleTree { levels })
    }

    pub fn root(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[0].len()
    }

    pub fn prove(&self, leaf_index: usize) -> Result<MerkleProof, MerkleError> {
        let n = self.leaf_count();
        if leaf_index >= n {
            return Err(MerkleError::IndexOutOfRange {
                index: leaf_index,
                leaves: n,
            });
        }
        let mut siblings = Vec::with_capacity(self.levels.len() - 1);
        let mut idx = leaf_index;
        for level in &self.levels[..self.levels.len() - 1] {
            let (sibling, side) = if idx % 2 == 0 {
                // Right sibling, or a copy of ourselves at an odd tail.
                let s = if idx + 1 < level.len() {
                    level[idx + 1]
                } else {
                    level[idx]
                };
                (s, Side::Right)
            } else {
                (level[idx - 1], Side::Left)
            };
            siblings.push((sibling, side));
            idx /= 2;
        }
        Ok(MerkleProof {
            leaf_index: leaf_index as u64,
            siblings,
        })
    }
}

/// Membership proof: the sibling path from a leaf up to the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: u64,
    pub siblings: Vec<(Digest, Side)>,
}

/// Recomputes the path and compares against `root`.
pub fn verify_proof(root: Digest, leaf: Digest, proof: &MerkleProof) -> bool {
    let mut acc = leaf;
    for (sibling, side) in &proof.siblings {
        acc = match side {
            Side::Left => hash_concat(&[&sibling.0, &acc.0]),
            Side::Right => hash_concat(&[&acc.0, &sibling.0]),
        };
    }
    acc == root
}

/// Tree whose leaves are the hashes of coded frame payloads, in frame
/// order (I first). The caller decides whether payloads are plaintext or
/// ciphertext; on-chain GOP roots use ciphertext payloads.
pub fn payload_tree<'a>(
    payloads: impl IntoIterator<Item = &'a [u8]>,
) -> Result<MerkleTree, MerkleError> {
    let leaves: Vec<Digest> = payloads.into_iter().map(hash).collect();
    MerkleTree::build(leaves)
}

/// Across-GOP root: the same tree rule applied to per-GOP roots.
pub fn block_root(gop_roots: &[Digest]) -> Result<Digest, MerkleError> {
    Ok(MerkleTree::build(gop_roots.to_vec())?.root())
}

impl CanonicalEncode for MerkleProof {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        enc.put_u64(self.leaf_index);
        enc.put_count(self.siblings.len())?;
        for (digest, side) in &self.siblings {
            enc.put_digest(digest);
            enc.put_u8(match side {
                Side::Left => 0,
                Side::Right => 1,
            });
        }
        Ok(())
    }
}

impl CanonicalDecode for MerkleProof {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        let leaf_index = dec.get_u64()?;
        let n = dec.get_count()?;
        let mut siblings = Vec::with_capacity(n);
        for _ in 0..n {
            let digest = dec.get_digest()?;
            let side = match dec.get_u8()? {
                0 => Side::Left,
                1 => Side::Right,
                _ => return Err(EncodingError::Invalid("proof side")),
            };
            siblings.push((digest, side));
        }
        Ok(MerkleProof {
            leaf_index,
            siblings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(i: u8) -> Digest {
        hash(&[i])
    }

    #[test]
    fn single_leaf_root_is_leaf() {
        let t = MerkleTree::build(vec![leaf(0)]).unwrap();
        assert_eq!(t.root(), leaf(0));
    }

    #[test]
    fn two_leaf_root() {
        let t = MerkleTree::build(vec![leaf(0), leaf(1)]).unwrap();
        assert_eq!(t.root(), hash_concat(&[&leaf(0).0, &leaf(1).0]));
    }

    #[test]
    fn three_leaf_root_duplicates_odd_tail() {
        let (h0, h1, h2) = (leaf(0), leaf(1), leaf(2));
        let left = hash_concat(&[&h0.0, &h1.0]);
        let right = hash_concat(&[&h2.0, &h2.0]);
        let expected = hash_concat(&[&left.0, &right.0]);
        let t = MerkleTree::build(vec![h0, h1, h2]).unwrap();
        assert_eq!(t.root(), expected);
    }

    #[test]
    fn empty_leaves_rejected() {
        assert_eq!(MerkleTree::build(vec![]), Err(MerkleError::EmptyLeaves));
        assert_eq!(block_root(&[]), Err(MerkleError::EmptyLeaves));
    }

    #[test]
    fn block_root_matches_tree_rule() {
        let roots = vec![leaf(10), leaf(11)];
        assert_eq!(
            block_root(&roots).unwrap(),
            hash_concat(&[&leaf(10).0, &leaf(11).0])
        );
        assert_eq!(block_root(&[leaf(9)]).unwrap(), leaf(9));
    }

    #[test]
    fn proofs_verify_for_all_indices_across_sizes() {
        for n in 1..=33usize {
            let leaves: Vec<Digest> = (0..n).map(|i| leaf(i as u8)).collect();
            let t = MerkleTree::build(leaves.clone()).unwrap();
            for i in 0..n {
                let p = t.prove(i).unwrap();
                assert!(verify_proof(t.root(), leaves[i], &p), "n={n} i={i}");
            }
        }
    }

    #[test]
    fn mutated_leaf_or_root_fails_verification() {
        let leaves: Vec<Digest> = (0..8).map(leaf).collect();
        let t = MerkleTree::build(leaves.clone()).unwrap();
        let p = t.prove(3).unwrap();
        let mut bad_leaf = leaves[3];
        bad_leaf.0[0] ^= 1;
        assert!(!verify_proof(t.root(), bad_leaf, &p));
        let mut bad_root = t.root();
        bad_root.0[31] ^= 1;
        assert!(!verify_proof(bad_root, leaves[3], &p));
        let mut bad_proof = p.clone();
        bad_proof.siblings[1].0 .0[4] ^= 1;
        assert!(!verify_proof(t.root(), leaves[3], &bad_proof));
    }

    #[test]
    fn out_of_range_index_errors() {
        let t = MerkleTree::build(vec![leaf(0), leaf(1)]).unwrap();
        assert!(matches!(
            t.prove(2),
            Err(MerkleError::IndexOutOfRange { .. })
        ));
    }
}
