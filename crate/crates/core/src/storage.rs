//! Content-addressed storage nodes, proof-of-storage challenge/response,
//! storage-credit accounting and the traveling auditor.
//!
//! An object is addressed by the hash of its full ciphertext and split
//! into fixed-size chunks; a Merkle tree over chunk hashes supports
//! challenges that bind a fresh nonce to sampled chunks, so a node cannot
//! answer from precomputed responses or after deleting data.

use crate::crypto::{hash, hash_concat, Digest};
use crate::encoding::{CanonicalDecode, CanonicalEncode, Decoder, Encoder, EncodingError};
use crate::ledger::Chain;
use crate::merkle::{verify_proof, MerkleProof, MerkleTree};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Default chunk size for stored ciphertext.
pub const DEFAULT_CHUNK_SIZE: u32 = 4096;

/// Default number of distinct chunk indices per challenge. With 16 uniform
/// samples, deletion of 5% or more of an object is detected per round with
/// probability at least 0.55.
pub const DEFAULT_CHALLENGE_K: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("node capacity exhausted: need {need}, free {free}")]
    InsufficientCapacity { need: u64, free: u64 },
    #[error("unknown content address")]
    NotFound,
    #[error("challenge asks for {k} chunks, object has {n}")]
    ChallengeTooLarge { k: u32, n: u32 },
    #[error("chunk index {0} out of range")]
    IndexOutOfRange(u32),
    #[error("chunk {0} is missing from this node")]
    MissingChunk(u32),
    #[error("no storage node accepted the object")]
    NoWillingNode,
    #[error("payer {payer} has {have} credits, needs {need}")]
    InsufficientCredits { payer: u64, have: u64, need: u64 },
    #[error("encoding error: {0}")]
    Encoding(#[from] EncodingError),
}

/// Ciphertext plus its chunk tree, as held by one storage node.
#[derive(Clone, Debug)]
pub struct StoredObject {
    bytes: Vec<u8>,
    chunk_size: u32,
    chunk_tree: MerkleTree,
    /// Chunk indices this node has lost or deleted; simulation of partial
    /// data loss for detection experiments.
    missing: std::collections::HashSet<u32>,
}

/// Number of chunks for an object of `len` bytes at the given chunk size.
pub fn chunk_count(len: u64, chunk_size: u32) -> u32 {
    if len == 0 {
        1
    } else {
        len.div_ceil(chunk_size as u64) as u32
    }
}

/// Builds the Merkle tree over chunk hashes for arbitrary bytes.
pub fn build_chunk_tree(bytes: &[u8], chunk_size: u32) -> MerkleTree {
    let leaves: Vec<Digest> = if bytes.is_empty() {
        vec![hash(b"")]
    } else {
        bytes.chunks(chunk_size as usize).map(hash).collect()
    };
    MerkleTree::build(leaves).expect("at least one chunk leaf")
}

impl StoredObject {
    pub fn new(bytes: Vec<u8>, chunk_size: u32) -> StoredObject {
        let chunk_tree = build_chunk_tree(&bytes, chunk_size);
        StoredObject {
            bytes,
            chunk_size,
            chunk_tree,
            missing: Default::default(),
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> u64 {
        self.bytes.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn chunk_count(&self) -> u32 {
        chunk_count(self.bytes.len() as u64, self.chunk_size)
    }

    pub fn chunk_root(&self) -> Digest {
        self.chunk_tree.root()
    }

    fn chunk(&self, index: u32) -> Result<&[u8], StorageError> {
        if index >= self.chunk_count() {
            return Err(StorageError::IndexOutOfRange(index));
        }
        if self.missing.contains(&index) {
            return Err(StorageError::MissingChunk(index));
        }
        let start = index as usize * self.chunk_size as usize;
        let end = (start + self.chunk_size as usize).min(self.bytes.len());
        Ok(&self.bytes[start..end])
    }
}

/// A nonce-bound request for `k` distinct chunk indices of one object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageChallenge {
    pub address: Digest,
    pub nonce: [u8; 32],
    pub chunk_indices: Vec<u32>,
}

/// One chunk's answer: the bytes, a membership proof against the chunk
/// root, and the nonce binding hash(nonce || chunk).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkProof {
    pub index: u32,
    pub chunk: Vec<u8>,
    pub merkle_proof: MerkleProof,
    pub binding: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageProof {
    pub address: Digest,
    pub chunks: Vec<ChunkProof>,
}

/// Draws `k` distinct uniform chunk indices and a fresh nonce.
pub fn make_challenge(
    address: Digest,
    n_chunks: u32,
    k: u32,
    rng: &mut ChaCha20Rng,
) -> Result<StorageChallenge, StorageError> {
    if k > n_chunks {
        return Err(StorageError::ChallengeTooLarge { k, n: n_chunks });
    }
    let mut nonce = [0u8; 32];
    rng.fill(&mut nonce);
    // Partial Fisher-Yates over the index space.
    let mut indices: Vec<u32> = (0..n_chunks).collect();
    let mut chunk_indices = Vec::with_capacity(k as usize);
    for i in 0..k as usize {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
        chunk_indices.push(indices[i]);
    }
    Ok(StorageChallenge {
        address,
        nonce,
        chunk_indices,
    })
}

/// Checks a proof against the on-chain chunk root: every challenged index
/// answered, membership verified, nonce bound.
pub fn verify_storage_proof(
    chunk_root: Digest,
    challenge: &StorageChallenge,
    proof: &StorageProof,
) -> bool {
    if proof.address != challenge.address {
        return false;
    }
    if proof.chunks.len() != challenge.chunk_indices.len() {
        return false;
    }
    for (expected_index, cp) in challenge.chunk_indices.iter().zip(&proof.chunks) {
        if cp.index != *expected_index || cp.merkle_proof.leaf_index != *expected_index as u64 {
            return false;
        }
        if cp.binding != hash_concat(&[&challenge.nonce, &cp.chunk]) {
            return false;
        }
        if !verify_proof(chunk_root, hash(&cp.chunk), &cp.merkle_proof) {
            return false;
        }
    }
    true
}

/// One storage node: an object map with capacity accounting and simple
/// reference counting so deduplicated placements can be rolled back.
#[derive(Clone, Debug)]
pub struct StorageNode {
    pub id: u64,
    capacity: u64,
    used: u64,
    objects: HashMap<Digest, StoredObject>,
    refs: HashMap<Digest, u32>,
    /// Unreachable nodes answer nothing; audits record that as failure.
    pub reachable: bool,
}

impl StorageNode {
    pub fn new(id: u64, capacity: u64) -> StorageNode {
        StorageNode {
            id,
            capacity,
            used: 0,
            objects: HashMap::new(),
            refs: HashMap::new(),
            reachable: true,
        }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn free(&self) -> u64 {
        self.capacity - self.used
    }

    pub fn holds(&self, address: &Digest) -> bool {
        self.objects.contains_key(address)
    }

    /// Stores ciphertext; the address is the hash of the bytes. A repeat
    /// store of identical bytes is deduplicated: no extra capacity is
    /// consumed, only the reference count grows. Returns the address and
    /// whether the object was newly created.
    pub fn store(&mut self, bytes: &[u8], chunk_size: u32) -> Result<(Digest, bool), StorageError> {
        let address = hash(bytes);
        if self.objects.contains_key(&address) {
            *self.refs.entry(address).or_insert(0) += 1;
            return Ok((address, false));
        }
        let need = bytes.len() as u64;
        if need > self.free() {
            return Err(StorageError::InsufficientCapacity {
                need,
                free: self.free(),
            });
        }
        self.used += need;
        self.objects
            .insert(address, StoredObject::new(bytes.to_vec(), chunk_size));
        self.refs.insert(address, 1);
        Ok((address, true))
    }

    pub fn retrieve(&self, address: &Digest) -> Result<&[u8], StorageError> {
        self.objects
            .get(address)
            .map(|o| o.bytes())
            .ok_or(StorageError::NotFound)
    }

    pub fn object(&self, address: &Digest) -> Option<&StoredObject> {
        self.objects.get(address)
    }

    /// Drops one reference; frees the object when the count reaches zero.
    /// Returns the bytes released (0 if the object remains referenced).
    pub fn release(&mut self, address: &Digest) -> u64 {
        let Some(count) = self.refs.get_mut(address) else {
            return 0;
        };
        *count -= 1;
        if *count > 0 {
            return 0;
        }
        self.refs.remove(address);
        let obj = self.objects.remove(address).expect("refcounted object");
        self.used -= obj.len();
        obj.len()
    }

    /// Answers a challenge, or errors if the object or any challenged
    /// chunk is gone.
    pub fn respond(&self, challenge: &StorageChallenge) -> Result<StorageProof, StorageError> {
        let obj = self
            .objects
            .get(&challenge.address)
            .ok_or(StorageError::NotFound)?;
        let mut chunks = Vec::with_capacity(challenge.chunk_indices.len());
        for &index in &challenge.chunk_indices {
            let chunk = obj.chunk(index)?.to_vec();
            let merkle_proof = obj
                .chunk_tree
                .prove(index as usize)
                .map_err(|_| StorageError::IndexOutOfRange(index))?;
            let binding = hash_concat(&[&challenge.nonce, &chunk]);
            chunks.push(ChunkProof {
                index,
                chunk,
                merkle_proof,
                binding,
            });
        }
        Ok(StorageProof {
            address: challenge.address,
            chunks,
        })
    }

    // -- fault injection for audits and tamper experiments --

    /// Silently deletes the whole object without fixing accounting, as a
    /// cheating node would.
    pub fn delete_object_silently(&mut self, address: &Digest) -> bool {
        self.objects.remove(address).is_some()
    }

    /// Marks specific chunks as lost.
    pub fn delete_chunks(&mut self, address: &Digest, indices: &[u32]) -> Result<(), StorageError> {
        let obj = self.objects.get_mut(address).ok_or(StorageError::NotFound)?;
        for &i in indices {
            if i >= obj.chunk_count() {
                return Err(StorageError::IndexOutOfRange(i));
            }
            obj.missing.insert(i);
        }
        Ok(())
    }

    /// Flips one stored byte in place, leaving the (now stale) chunk tree
    /// untouched, as silent corruption would.
    pub fn corrupt_byte(&mut self, address: &Digest, offset: usize) -> Result<(), StorageError> {
        let obj = self.objects.get_mut(address).ok_or(StorageError::NotFound)?;
        if offset >= obj.bytes.len() {
            return Err(StorageError::IndexOutOfRange(offset as u32));
        }
        obj.bytes[offset] ^= 0x01;
        Ok(())
    }

    /// Replaces an object's bytes wholesale under the same address entry,
    /// recomputing the local chunk tree (a cheating node substituting
    /// content). The map key is left as-is even though it no longer equals
    /// the hash of the bytes.
    pub fn replace_object_silently(&mut self, address: &Digest, bytes: Vec<u8>) -> bool {
        let Some(obj) = self.objects.get_mut(address) else {
            return false;
        };
        let chunk_size = obj.chunk_size;
        *obj = StoredObject::new(bytes, chunk_size);
        true
    }
}

/// Byte-denominated storage credits: the internal incentive unit. Earned
/// by mining (raw bytes processed) and by holding objects (pending until
/// settled); spent to place ciphertext.
#[derive(Clone, Debug, Default)]
pub struct CreditLedger {
    available: HashMap<u64, u64>,
    pending: HashMap<u64, u64>,
    total_granted: u64,
    total_spent: u64,
}

impl CreditLedger {
    pub fn new() -> CreditLedger {
        CreditLedger::default()
    }

    pub fn balance(&self, node: u64) -> u64 {
        self.available.get(&node).copied().unwrap_or(0)
    }

    pub fn pending_balance(&self, node: u64) -> u64 {
        self.pending.get(&node).copied().unwrap_or(0)
    }

    pub fn grant(&mut self, node: u64, amount: u64) {
        *self.available.entry(node).or_insert(0) += amount;
        self.total_granted += amount;
    }

    pub fn spend(&mut self, node: u64, amount: u64) -> Result<(), StorageError> {
        let have = self.balance(node);
        if have < amount {
            return Err(StorageError::InsufficientCredits {
                payer: node,
                have,
                need: amount,
            });
        }
        self.available.insert(node, have - amount);
        self.total_spent += amount;
        Ok(())
    }

    pub fn refund(&mut self, node: u64, amount: u64) {
        *self.available.entry(node).or_insert(0) += amount;
        self.total_spent = self.total_spent.saturating_sub(amount);
    }

    /// Credits earned but not yet settled; forfeited if an audit fails.
    pub fn accrue_pending(&mut self, node: u64, amount: u64) {
        *self.pending.entry(node).or_insert(0) += amount;
    }

    pub fn reduce_pending(&mut self, node: u64, amount: u64) {
        let p = self.pending.entry(node).or_insert(0);
        *p = p.saturating_sub(amount);
    }

    /// Moves all pending credits to available.
    pub fn settle_pending(&mut self, node: u64) -> u64 {
        let amount = self.pending.remove(&node).unwrap_or(0);
        if amount > 0 {
            self.grant(node, amount);
        }
        amount
    }

    /// Drops all pending credits for a flagged node.
    pub fn forfeit_pending(&mut self, node: u64) -> u64 {
        self.pending.remove(&node).unwrap_or(0)
    }

    pub fn total_granted(&self) -> u64 {
        self.total_granted
    }

    pub fn total_spent(&self) -> u64 {
        self.total_spent
    }

    pub fn balances(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.available.iter().map(|(&n, &c)| (n, c))
    }
}

/// Outcome of placing ciphertext on some storage node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacementReceipt {
    pub node_id: u64,
    pub address: Digest,
    pub chunk_root: Digest,
    pub object_len: u64,
    pub chunk_size: u32,
    /// Whether this placement created the object (false = deduplicated).
    pub created: bool,
}

/// Miner-side storage interface: find a willing node and pay for space.
pub trait StoragePlacement {
    fn place(
        &mut self,
        payer: u64,
        bytes: &[u8],
        chunk_size: u32,
    ) -> Result<PlacementReceipt, StorageError>;

    /// Undoes a placement (storage contract not finalized); refunds the
    /// payer if the object is actually freed.
    fn rollback(&mut self, payer: u64, receipt: &PlacementReceipt);
}

/// Verifier/auditor-side storage interface. `None` means the node is
/// unreachable or cannot answer.
pub trait StorageDirectory {
    fn respond(&self, node_id: u64, challenge: &StorageChallenge) -> Option<StorageProof>;
    fn fetch(&self, node_id: u64, address: &Digest) -> Option<Vec<u8>>;
}

/// Both halves together, as mining needs them.
pub trait StorageExchange: StoragePlacement + StorageDirectory {}
impl<T: StoragePlacement + StorageDirectory> StorageExchange for T {}

/// A set of storage nodes sharing one credit ledger. Placement picks the
/// first node with room; the payer is charged the ciphertext size and the
/// node accrues the same amount as pending holding fees.
#[derive(Clone, Debug)]
pub struct StorageCluster {
    pub nodes: Vec<StorageNode>,
    pub credits: CreditLedger,
}

impl StorageCluster {
    pub fn new(node_ids: impl IntoIterator<Item = u64>, capacity_per_node: u64) -> StorageCluster {
        StorageCluster {
            nodes: node_ids
                .into_iter()
                .map(|id| StorageNode::new(id, capacity_per_node))
                .collect(),
            credits: CreditLedger::new(),
        }
    }

    pub fn node(&self, id: u64) -> Option<&StorageNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: u64) -> Option<&mut StorageNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn total_stored(&self) -> u64 {
        self.nodes.iter().map(|n| n.used()).sum()
    }
}

impl StoragePlacement for StorageCluster {
    fn place(
        &mut self,
        payer: u64,
        bytes: &[u8],
        chunk_size: u32,
    ) -> Result<PlacementReceipt, StorageError> {
        let need = bytes.len() as u64;
        let address = hash(bytes);
        // Prefer a node that already holds these bytes (dedup, no charge).
        let position = self
            .nodes
            .iter()
            .position(|n| n.reachable && n.holds(&address))
            .or_else(|| {
                self.nodes
                    .iter()
                    .position(|n| n.reachable && n.free() >= need)
            })
            .ok_or(StorageError::NoWillingNode)?;
        let node_id = self.nodes[position].id;
        let creating = !self.nodes[position].holds(&address);
        if creating {
            self.credits.spend(payer, need)?;
        }
        let (address, created) = self.nodes[position].store(bytes, chunk_size)?;
        if created {
            self.credits.accrue_pending(node_id, need);
        }
        let obj = self.nodes[position].object(&address).expect("just stored");
        Ok(PlacementReceipt {
            node_id,
            address,
            chunk_root: obj.chunk_root(),
            object_len: obj.len(),
            chunk_size,
            created,
        })
    }

    fn rollback(&mut self, payer: u64, receipt: &PlacementReceipt) {
        if let Some(node) = self.node_mut(receipt.node_id) {
            let freed = node.release(&receipt.address);
            if freed > 0 {
                let id = receipt.node_id;
                self.credits.refund(payer, freed);
                self.credits.reduce_pending(id, freed);
            }
        }
    }
}

impl StorageDirectory for StorageCluster {
    fn respond(&self, node_id: u64, challenge: &StorageChallenge) -> Option<StorageProof> {
        let node = self.node(node_id)?;
        if !node.reachable {
            return None;
        }
        node.respond(challenge).ok()
    }

    fn fetch(&self, node_id: u64, address: &Digest) -> Option<Vec<u8>> {
        let node = self.node(node_id)?;
        if !node.reachable {
            return None;
        }
        node.retrieve(address).ok().map(|b| b.to_vec())
    }
}

/// One audited subblock.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditEntry {
    pub video_id: u64,
    pub gop_index: u64,
    pub node_id: u64,
    pub address: Digest,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub failures: usize,
    /// Pending credits forfeited per flagged node.
    pub forfeited: Vec<(u64, u64)>,
}

/// The traveling auditor: samples committed subblocks uniformly from the
/// canonical chain, challenges their storage nodes, and forfeits pending
/// credits of nodes that fail. Deterministic for a given rng state.
pub fn audit_round(
    chain: &Chain,
    directory: &dyn StorageDirectory,
    credits: &mut CreditLedger,
    rng: &mut ChaCha20Rng,
    sample_count: usize,
    k: u32,
) -> AuditReport {
    // Collect all committed subblock pointers in canonical order.
    let mut pool = Vec::new();
    for bh in chain.canonical_chain() {
        let block = chain.get(&bh).expect("canonical block present");
        for sb in &block.subblocks {
            pool.push((
                sb.content.video_id,
                sb.content.gop_index,
                sb.content.storage.clone(),
            ));
        }
    }
    let mut report = AuditReport::default();
    if pool.is_empty() {
        return report;
    }
    let mut flagged: Vec<u64> = Vec::new();
    for _ in 0..sample_count {
        let (video_id, gop_index, pointer) = pool[rng.gen_range(0..pool.len())].clone();
        let n_chunks = chunk_count(pointer.object_len, pointer.chunk_size);
        let k_eff = k.min(n_chunks);
        let passed = match make_challenge(pointer.address, n_chunks, k_eff, rng) {
            Ok(challenge) => directory
                .respond(pointer.node_id, &challenge)
                .map(|proof| verify_storage_proof(pointer.chunk_root, &challenge, &proof))
                .unwrap_or(false),
            Err(_) => false,
        };
        if !passed {
            report.failures += 1;
            if !flagged.contains(&pointer.node_id) {
                flagged.push(pointer.node_id);
            }
        }
        report.entries.push(AuditEntry {
            video_id,
            gop_index,
            node_id: pointer.node_id,
            address: pointer.address,
            passed,
        });
    }
    for node in flagged {
        let amount = credits.forfeit_pending(node);
        report.forfeited.push((node, amount));
    }
    report
}

// ---- canonical encoding for the challenge/response wire messages ----

impl CanonicalEncode for StorageChallenge {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        enc.put_digest(&self.address);
        enc.put_bytes(&self.nonce)?;
        enc.put_count(self.chunk_indices.len())?;
        for &i in &self.chunk_indices {
            enc.put_u32(i);
        }
        Ok(())
    }
}

impl CanonicalDecode for StorageChallenge {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        let address = dec.get_digest()?;
        let nonce_bytes = dec.get_bytes()?;
        let nonce: [u8; 32] = nonce_bytes
            .try_into()
            .map_err(|_| EncodingError::Invalid("nonce length"))?;
        let n = dec.get_count()?;
        let mut chunk_indices = Vec::with_capacity(n);
        for _ in 0..n {
            chunk_indices.push(dec.get_u32()?);
        }
        Ok(StorageChallenge {
            address,
            nonce,
            chunk_indices,
        })
    }
}

impl CanonicalEncode for ChunkProof {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        enc.put_u32(self.index);
        enc.put_bytes(&self.chunk)?;
        self.merkle_proof.encode_into(enc)?;
        enc.put_digest(&self.binding);
        Ok(())
    }
}

impl CanonicalDecode for ChunkProof {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        Ok(ChunkProof {
            index: dec.get_u32()?,
            chunk: dec.get_bytes()?,
            merkle_proof: MerkleProof::decode_from(dec)?,
            binding: dec.get_digest()?,
        })
    }
}

impl CanonicalEncode for StorageProof {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        enc.put_digest(&self.address);
        enc.put_count(self.chunks.len())?;
        for c in &self.chunks {
            c.encode_into(enc)?;
        }
        Ok(())
    }
}

impl CanonicalDecode for StorageProof {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        let address = dec.get_digest()?;
        let n = dec.get_count()?;
        let mut chunks = Vec::with_capacity(n);
        for _ in 0..n {
            chunks.push(ChunkProof::decode_from(dec)?);
        }
        Ok(StorageProof { address, chunks })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn random_bytes(rng: &mut ChaCha20Rng, len: usize) -> Vec<u8> {
        let mut b = vec![0u8; len];
        rng.fill_bytes(&mut b);
        b
    }

    #[test]
    fn store_retrieve_roundtrip() {
        let mut node = StorageNode::new(0, 1 << 20);
        let mut r = rng(1);
        let data = random_bytes(&mut r, 10_000);
        let (addr, created) = node.store(&data, DEFAULT_CHUNK_SIZE).unwrap();
        assert!(created);
        assert_eq!(addr, hash(&data));
        assert_eq!(node.retrieve(&addr).unwrap(), &data[..]);
    }

    #[test]
    fn unknown_address_not_found() {
        let node = StorageNode::new(0, 1024);
        assert_eq!(
            node.retrieve(&hash(b"nope")).unwrap_err(),
            StorageError::NotFound
        );
    }

    #[test]
    fn duplicate_store_charges_capacity_once() {
        let mut node = StorageNode::new(0, 1 << 20);
        let data = vec![7u8; 5000];
        let (a1, c1) = node.store(&data, DEFAULT_CHUNK_SIZE).unwrap();
        let used = node.used();
        let (a2, c2) = node.store(&data, DEFAULT_CHUNK_SIZE).unwrap();
        assert_eq!(a1, a2);
        assert!(c1);
        assert!(!c2);
        assert_eq!(node.used(), used);
        // Releasing one reference keeps the object alive.
        assert_eq!(node.release(&a1), 0);
        assert!(node.holds(&a1));
        assert_eq!(node.release(&a1), 5000);
        assert!(!node.holds(&a1));
        assert_eq!(node.used(), 0);
    }

    #[test]
    fn capacity_refusal() {
        let mut node = StorageNode::new(0, 100);
        assert!(matches!(
            node.store(&[0u8; 200], DEFAULT_CHUNK_SIZE),
            Err(StorageError::InsufficientCapacity { need: 200, free: 100 })
        ));
    }

    #[test]
    fn honest_node_always_verifies() {
        let mut node = StorageNode::new(0, 1 << 20);
        let mut r = rng(2);
        let data = random_bytes(&mut r, 40_000); // 10 chunks
        let (addr, _) = node.store(&data, DEFAULT_CHUNK_SIZE).unwrap();
        let root = node.object(&addr).unwrap().chunk_root();
        for k in [1u32, 3, 10] {
            let ch = make_challenge(addr, 10, k, &mut r).unwrap();
            let proof = node.respond(&ch).unwrap();
            assert!(verify_storage_proof(root, &ch, &proof));
        }
    }

    #[test]
    fn deleted_object_cannot_answer() {
        let mut node = StorageNode::new(0, 1 << 20);
        let mut r = rng(3);
        let data = random_bytes(&mut r, 8_192);
        let (addr, _) = node.store(&data, DEFAULT_CHUNK_SIZE).unwrap();
        node.delete_object_silently(&addr);
        let ch = make_challenge(addr, 2, 1, &mut r).unwrap();
        assert!(node.respond(&ch).is_err());
    }

    #[test]
    fn challenge_k_exceeding_chunks_is_error() {
        let mut r = rng(4);
        assert!(matches!(
            make_challenge(hash(b"x"), 4, 5, &mut r),
            Err(StorageError::ChallengeTooLarge { k: 5, n: 4 })
        ));
    }

    #[test]
    fn replayed_proof_fails_fresh_challenge() {
        let mut node = StorageNode::new(0, 1 << 20);
        let mut r = rng(5);
        let data = random_bytes(&mut r, 40_000);
        let (addr, _) = node.store(&data, DEFAULT_CHUNK_SIZE).unwrap();
        let root = node.object(&addr).unwrap().chunk_root();
        let old = make_challenge(addr, 10, 3, &mut r).unwrap();
        let old_proof = node.respond(&old).unwrap();
        let fresh = make_challenge(addr, 10, 3, &mut r).unwrap();
        assert!(!verify_storage_proof(root, &fresh, &old_proof));
    }

    #[test]
    fn corrupted_chunk_fails_verification() {
        let mut node = StorageNode::new(0, 1 << 20);
        let mut r = rng(6);
        let data = random_bytes(&mut r, 40_000);
        let (addr, _) = node.store(&data, DEFAULT_CHUNK_SIZE).unwrap();
        let root = node.object(&addr).unwrap().chunk_root();
        node.corrupt_byte(&addr, 5000).unwrap();
        // Challenge the corrupted chunk (index 1) directly.
        let ch = StorageChallenge {
            address: addr,
            nonce: [9u8; 32],
            chunk_indices: vec![1],
        };
        let proof = node.respond(&ch).unwrap();
        assert!(!verify_storage_proof(root, &ch, &proof));
    }

    /// Independent combinatorial oracle: probability that k distinct
    /// uniform indices all avoid the m missing chunks out of n.
    fn pass_probability(n: u64, m: u64, k: u64) -> f64 {
        if k > n - m {
            return 0.0;
        }
        let mut p = 1.0;
        for i in 0..k {
            p *= (n - m - i) as f64 / (n - i) as f64;
        }
        p
    }

    #[test]
    fn detection_probability_matches_combinatorial_oracle() {
        // n=10, m=2, k=3: pass probability C(8,3)/C(10,3) = 7/15.
        let mut node = StorageNode::new(0, 1 << 20);
        let mut r = rng(7);
        let data = random_bytes(&mut r, 40_000);
        let (addr, _) = node.store(&data, DEFAULT_CHUNK_SIZE).unwrap();
        let root = node.object(&addr).unwrap().chunk_root();
        node.delete_chunks(&addr, &[2, 7]).unwrap();

        let trials = 100_000;
        let mut passes = 0u64;
        for _ in 0..trials {
            let ch = make_challenge(addr, 10, 3, &mut r).unwrap();
            let ok = node
                .respond(&ch)
                .map(|p| verify_storage_proof(root, &ch, &p))
                .unwrap_or(false);
            if ok {
                passes += 1;
            }
        }
        let empirical = passes as f64 / trials as f64;
        let oracle = pass_probability(10, 2, 3);
        assert!((oracle - 7.0 / 15.0).abs() < 1e-12);
        assert!(
            (empirical - oracle).abs() < 0.02,
            "empirical {empirical} vs oracle {oracle}"
        );
    }

    #[test]
    fn missing_all_chunks_always_detected() {
        assert_eq!(pass_probability(10, 10, 1), 0.0);
        // k greater than surviving chunks: guaranteed detection.
        assert_eq!(pass_probability(10, 8, 3), 0.0);
    }

    #[test]
    fn cluster_placement_spends_and_accrues() {
        let mut cluster = StorageCluster::new([100, 101], 1 << 20);
        cluster.credits.grant(1, 100_000);
        let data = vec![3u8; 10_000];
        let receipt = cluster.place(1, &data, DEFAULT_CHUNK_SIZE).unwrap();
        assert!(receipt.created);
        assert_eq!(cluster.credits.balance(1), 90_000);
        assert_eq!(cluster.credits.pending_balance(receipt.node_id), 10_000);

        // Same bytes again: deduplicated, no charge.
        let receipt2 = cluster.place(1, &data, DEFAULT_CHUNK_SIZE).unwrap();
        assert!(!receipt2.created);
        assert_eq!(receipt2.address, receipt.address);
        assert_eq!(cluster.credits.balance(1), 90_000);

        // Roll back both placements: second is free, first refunds.
        cluster.rollback(1, &receipt2);
        assert_eq!(cluster.credits.balance(1), 90_000);
        cluster.rollback(1, &receipt);
        assert_eq!(cluster.credits.balance(1), 100_000);
        assert_eq!(cluster.total_stored(), 0);
    }

    #[test]
    fn cluster_refuses_without_credits() {
        let mut cluster = StorageCluster::new([100], 1 << 20);
        let data = vec![3u8; 10_000];
        assert!(matches!(
            cluster.place(1, &data, DEFAULT_CHUNK_SIZE),
            Err(StorageError::InsufficientCredits { .. })
        ));
    }

    #[test]
    fn credit_conservation() {
        let mut ledger = CreditLedger::new();
        ledger.grant(1, 500);
        ledger.grant(2, 300);
        ledger.spend(1, 200).unwrap();
        assert!(ledger.spend(2, 400).is_err());
        let total_available: u64 = ledger.balances().map(|(_, c)| c).sum();
        assert_eq!(
            total_available,
            ledger.total_granted() - ledger.total_spent()
        );
    }

    #[test]
    fn challenge_proof_wire_roundtrip() {
        let mut node = StorageNode::new(0, 1 << 20);
        let mut r = rng(8);
        let data = random_bytes(&mut r, 20_000);
        let (addr, _) = node.store(&data, DEFAULT_CHUNK_SIZE).unwrap();
        let ch = make_challenge(addr, 5, 3, &mut r).unwrap();
        let proof = node.respond(&ch).unwrap();

        let ch2 = StorageChallenge::from_canonical_bytes(&ch.canonical_bytes().unwrap()).unwrap();
        assert_eq!(ch, ch2);
        let proof2 = StorageProof::from_canonical_bytes(&proof.canonical_bytes().unwrap()).unwrap();
        assert_eq!(proof, proof2);
    }
}
