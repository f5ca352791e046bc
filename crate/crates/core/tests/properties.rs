//! Generative properties: canonical-encoding round-trips, lossless codec
//! round-trips, Merkle equivalence against a brute-force reference builder,
//! and encode determinism.

use cstore::codec::{
    decode_gop, encode_gop, generate_synthetic_video, Frame, Gop, SyntheticVideoConfig,
};
use cstore::crypto::{hash, Digest};
use cstore::encoding::{CanonicalDecode, CanonicalEncode, Decoder, Encoder};
use cstore::merkle::{verify_proof, MerkleProof, MerkleTree, Side};
use proptest::prelude::*;

/// Independent Merkle reference: recursively hash a leaf slice, duplicating
/// an odd tail node, without any shared code with `MerkleTree`.
fn reference_root(leaves: &[Digest]) -> Digest {
    if leaves.len() == 1 {
        return leaves[0];
    }
    let mut next = Vec::new();
    for pair in leaves.chunks(2) {
        let right = pair.get(1).unwrap_or(&pair[0]);
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(&pair[0].0);
        buf.extend_from_slice(&right.0);
        next.push(hash(&buf));
    }
    reference_root(&next)
}

#[test]
fn merkle_roots_match_brute_force_reference_for_1_to_33_leaves() {
    for n in 1..=33usize {
        let leaves: Vec<Digest> = (0..n).map(|i| hash(&(i as u64).to_be_bytes())).collect();
        let tree = MerkleTree::build(leaves.clone()).unwrap();
        assert_eq!(tree.root().0, reference_root(&leaves).0, "n={n}");
        for i in 0..n {
            let proof = tree.prove(i).unwrap();
            assert!(verify_proof(tree.root(), leaves[i], &proof), "n={n} i={i}");
        }
    }
}

fn arb_digest() -> impl Strategy<Value = Digest> {
    any::<[u8; 32]>().prop_map(Digest)
}

proptest! {
    #[test]
    fn merkle_root_matches_reference_on_random_leaves(
        leaves in proptest::collection::vec(arb_digest(), 1..64)
    ) {
        let tree = MerkleTree::build(leaves.clone()).unwrap();
        prop_assert_eq!(tree.root().0, reference_root(&leaves).0);
    }

    #[test]
    fn merkle_proof_canonical_roundtrip(
        leaf_index in any::<u64>(),
        siblings in proptest::collection::vec(
            (arb_digest(), any::<bool>().prop_map(|b| if b { Side::Left } else { Side::Right })),
            0..20,
        )
    ) {
        let proof = MerkleProof { leaf_index, siblings };
        let mut enc = Encoder::new();
        proof.encode_into(&mut enc).unwrap();
        let bytes = enc.into_bytes();
        let mut dec = Decoder::new(&bytes);
        let back = MerkleProof::decode_from(&mut dec).unwrap();
        dec.finish().unwrap();
        prop_assert_eq!(back, proof);
    }

    #[test]
    fn scalar_encoding_roundtrip(
        a in any::<u8>(), b in any::<u32>(), c in any::<u64>(), d in any::<f64>(),
        bytes in proptest::collection::vec(any::<u8>(), 0..256),
    ) {
        let mut enc = Encoder::new();
        enc.put_u8(a);
        enc.put_u32(b);
        enc.put_u64(c);
        enc.put_f64(d);
        enc.put_bytes(&bytes).unwrap();
        let wire = enc.into_bytes();
        let mut dec = Decoder::new(&wire);
        prop_assert_eq!(dec.get_u8().unwrap(), a);
        prop_assert_eq!(dec.get_u32().unwrap(), b);
        prop_assert_eq!(dec.get_u64().unwrap(), c);
        prop_assert_eq!(dec.get_f64().unwrap().to_bits(), d.to_bits());
        prop_assert_eq!(dec.get_bytes().unwrap(), bytes);
        dec.finish().unwrap();
    }

    #[test]
    fn quantizer_one_roundtrip_on_random_frames(
        seed in any::<u64>(),
        width in 4u32..24,
        height in 4u32..24,
        frames in 1u32..6,
    ) {
        let gop = random_gop(seed, width, height, frames);
        let compressed = encode_gop(&gop, 1, Digest::ZERO, Digest::ZERO).unwrap();
        let decoded = decode_gop(&compressed).unwrap();
        prop_assert_eq!(decoded.len(), gop.frames.len());
        for (d, o) in decoded.iter().zip(&gop.frames) {
            prop_assert_eq!(d.samples(), o.samples());
        }
    }

    #[test]
    fn encoding_is_deterministic(seed in any::<u64>(), quantizer in 1u32..32) {
        let gop = random_gop(seed, 16, 16, 4);
        let a = encode_gop(&gop, quantizer, Digest::ZERO, Digest::ZERO).unwrap();
        let b = encode_gop(&gop, quantizer, Digest::ZERO, Digest::ZERO).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Frames with uniformly random samples: the worst case for the
/// run-length stage, so a lossless round-trip here is a strong check.
fn random_gop(seed: u64, width: u32, height: u32, frames: u32) -> Gop {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let n = (width * height) as usize;
    let frames: Vec<Frame> = (0..frames)
        .map(|_| {
            let samples: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            Frame::new(width, height, samples).unwrap()
        })
        .collect();
    Gop::new(frames, 0, 0).unwrap()
}

#[test]
fn quantizer_one_roundtrip_on_synthetic_video() {
    let cfg = SyntheticVideoConfig::new(32, 24, 20, 6, 99);
    for gop in generate_synthetic_video(&cfg).unwrap() {
        let compressed = encode_gop(&gop, 1, Digest::ZERO, Digest::ZERO).unwrap();
        let decoded = decode_gop(&compressed).unwrap();
        for (d, o) in decoded.iter().zip(&gop.frames) {
            assert_eq!(d.samples(), o.samples());
        }
    }
}
