//! On-chain data model. Blocks carry metadata only: Merkle roots, storage
//! pointers, codec parameters and signatures. The bulk ciphertext lives on
//! storage nodes and is reachable through the content address recorded in
//! each subblock.

use crate::crypto::{hash, verify, Digest, KeyPair, PublicKeyBytes, SignatureBytes};
use crate::encoding::{CanonicalDecode, CanonicalEncode, Decoder, Encoder, EncodingError};
use crate::merkle::block_root;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Hard cap on the canonical encoded size of one subblock.
pub const MAX_SUBBLOCK_BYTES: usize = 1024;

/// Default number of subblocks (GOPs) a block may describe.
pub const DEFAULT_B_MAX: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("encoding error: {0}")]
    Encoding(#[from] EncodingError),
    #[error("subblock encodes to {0} bytes, exceeding {MAX_SUBBLOCK_BYTES}")]
    OversizeSubBlock(usize),
    #[error("block must contain at least one subblock")]
    EmptyBlock,
    #[error("block contains {got} subblocks, limit is {limit}")]
    TooManySubBlocks { got: usize, limit: u32 },
    #[error("subblock carries an invalid initiator signature")]
    InvalidSubBlockSignature,
    #[error("merkle error: {0}")]
    Merkle(#[from] crate::merkle::MerkleError),
}

/// Stable structural rejection codes, consumed by simulator metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    BadHeight,
    EmptyBlock,
    TooManySubBlocks,
    OversizeSubBlock,
    BadSubBlockSignature,
    BadMinerSignature,
    BadMerkleRoot,
    NotAfterGenesis,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::BadHeight => "bad-height",
            RejectReason::EmptyBlock => "empty-block",
            RejectReason::TooManySubBlocks => "too-many-subblocks",
            RejectReason::OversizeSubBlock => "oversize-subblock",
            RejectReason::BadSubBlockSignature => "bad-subblock-signature",
            RejectReason::BadMinerSignature => "bad-miner-signature",
            RejectReason::BadMerkleRoot => "bad-merkle-root",
            RejectReason::NotAfterGenesis => "not-after-genesis",
        }
    }
}

/// Compression algorithm identity and parameters recorded on-chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecParams {
    /// 1 = the RLE toy coder in this repository.
    pub algorithm_id: u32,
    pub quantizer: u32,
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
}

/// Reported quality and the threshold in force when the block was mined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub mean_psnr_db: f64,
    pub threshold_db: f64,
}

/// Where the ciphertext lives: content address plus the chunk-tree root
/// that storage challenges are verified against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoragePointer {
    pub address: Digest,
    pub node_id: u64,
    pub chunk_root: Digest,
    pub object_len: u64,
    pub chunk_size: u32,
}

/// Everything in a subblock except the initiator signature; this is the
/// signed message (together with the initiator public key).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubBlockContent {
    pub gop_timestamp_ms: u64,
    pub gop_merkle_root: Digest,
    pub access_privileges: Vec<u8>,
    pub storage: StoragePointer,
    pub codec: CodecParams,
    pub quality: QualitySummary,
    pub sensor_metadata: Vec<u8>,
    pub video_id: u64,
    pub gop_index: u64,
    pub chain_prev_i: Digest,
    pub chain_prev_last_p: Digest,
}

/// On-chain metadata record for one GOP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubBlock {
    pub content: SubBlockContent,
    pub initiator_pubkey: PublicKeyBytes,
    pub initiator_signature: SignatureBytes,
}

impl SubBlock {
    fn signing_bytes(content: &SubBlockContent, pubkey: &PublicKeyBytes) -> Result<Vec<u8>, EncodingError> {
        let mut enc = Encoder::new();
        content.encode_into(&mut enc)?;
        enc.put_pubkey(pubkey);
        Ok(enc.into_bytes())
    }

    pub fn verify_signature(&self) -> bool {
        match Self::signing_bytes(&self.content, &self.initiator_pubkey) {
            Ok(msg) => verify(&self.initiator_pubkey, &msg, &self.initiator_signature),
            Err(_) => false,
        }
    }

    pub fn encoded_size(&self) -> Result<usize, EncodingError> {
        Ok(self.canonical_bytes()?.len())
    }

    /// Re-signs the content with the given initiator key. The initiator
    /// countersigns miner-assembled subblocks; tests also use this to model
    /// an adversarial miner that obtains signatures over bogus content.
    pub fn resign(&mut self, initiator: &KeyPair) {
        self.initiator_pubkey = initiator.public();
        let msg = Self::signing_bytes(&self.content, &self.initiator_pubkey)
            .expect("subblock content encodable");
        self.initiator_signature = initiator.sign(&msg);
    }
}

/// Builds and initiator-signs a subblock, enforcing the size cap.
pub fn make_subblock(content: SubBlockContent, initiator: &KeyPair) -> Result<SubBlock, LedgerError> {
    let pubkey = initiator.public();
    let msg = SubBlock::signing_bytes(&content, &pubkey)?;
    let sb = SubBlock {
        content,
        initiator_pubkey: pubkey,
        initiator_signature: initiator.sign(&msg),
    };
    let size = sb.encoded_size()?;
    if size > MAX_SUBBLOCK_BYTES {
        return Err(LedgerError::OversizeSubBlock(size));
    }
    Ok(sb)
}

/// The chained container: subblocks plus the across-GOP Merkle root and
/// the miner's signature over the whole header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub prev_block_hash: Digest,
    pub height: u64,
    pub timestamp_ms: u64,
    pub subblocks: Vec<SubBlock>,
    pub block_merkle_root: Digest,
    /// Hashes of the canonical encodings of the storage proofs the miner
    /// produced at mining time.
    pub storage_proof_refs: Vec<Digest>,
    pub miner_id: u64,
    pub miner_pubkey: PublicKeyBytes,
    pub miner_signature: SignatureBytes,
}

impl Block {
    /// The genesis block: height 0, no subblocks, all-zero linkage.
    pub fn genesis(timestamp_ms: u64) -> Block {
        Block {
            prev_block_hash: Digest::ZERO,
            height: 0,
            timestamp_ms,
            subblocks: Vec::new(),
            block_merkle_root: Digest::ZERO,
            storage_proof_refs: Vec::new(),
            miner_id: 0,
            miner_pubkey: PublicKeyBytes([0u8; 32]),
            miner_signature: SignatureBytes([0u8; 64]),
        }
    }

    pub fn is_genesis(&self) -> bool {
        self.height == 0 && self.prev_block_hash == Digest::ZERO
    }

    fn signing_bytes(&self) -> Result<Vec<u8>, EncodingError> {
        let mut enc = Encoder::new();
        self.encode_header(&mut enc)?;
        Ok(enc.into_bytes())
    }

    /// Everything except the miner signature.
    fn encode_header(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        enc.put_digest(&self.prev_block_hash);
        enc.put_u64(self.height);
        enc.put_u64(self.timestamp_ms);
        enc.put_count(self.subblocks.len())?;
        for sb in &self.subblocks {
            sb.encode_into(enc)?;
        }
        enc.put_digest(&self.block_merkle_root);
        enc.put_count(self.storage_proof_refs.len())?;
        for d in &self.storage_proof_refs {
            enc.put_digest(d);
        }
        enc.put_u64(self.miner_id);
        enc.put_pubkey(&self.miner_pubkey);
        Ok(())
    }

    /// Recomputes the Merkle root and miner signature over the current
    /// contents without revalidating subblocks. Models an adversarial
    /// miner re-minting a tampered block; tests only.
    pub fn resign(&mut self, miner_keys: &KeyPair) {
        self.block_merkle_root = block_root(&self.gop_roots()).expect("non-empty block");
        self.miner_pubkey = miner_keys.public();
        let msg = self.signing_bytes().expect("block encodable");
        self.miner_signature = miner_keys.sign(&msg);
    }

    pub fn verify_miner_signature(&self) -> bool {
        match self.signing_bytes() {
            Ok(msg) => verify(&self.miner_pubkey, &msg, &self.miner_signature),
            Err(_) => false,
        }
    }

    /// Block hash: hash of the full canonical encoding, signature included.
    pub fn hash(&self) -> Digest {
        hash(&self.canonical_bytes().expect("block encodable"))
    }

    /// Per-GOP Merkle roots in subblock order.
    pub fn gop_roots(&self) -> Vec<Digest> {
        self.subblocks
            .iter()
            .map(|sb| sb.content.gop_merkle_root)
            .collect()
    }
}

/// Assembles and miner-signs a block over already-signed subblocks.
#[allow(clippy::too_many_arguments)]
pub fn assemble_block(
    subblocks: Vec<SubBlock>,
    prev_block_hash: Digest,
    height: u64,
    timestamp_ms: u64,
    storage_proof_refs: Vec<Digest>,
    miner_id: u64,
    miner_keys: &KeyPair,
    b_max: u32,
) -> Result<Block, LedgerError> {
    if subblocks.is_empty() {
        return Err(LedgerError::EmptyBlock);
    }
    if subblocks.len() > b_max as usize {
        return Err(LedgerError::TooManySubBlocks {
            got: subblocks.len(),
            limit: b_max,
        });
    }
    for sb in &subblocks {
        if !sb.verify_signature() {
            return Err(LedgerError::InvalidSubBlockSignature);
        }
        let size = sb.encoded_size()?;
        if size > MAX_SUBBLOCK_BYTES {
            return Err(LedgerError::OversizeSubBlock(size));
        }
    }
    let roots = subblocks
        .iter()
        .map(|sb| sb.content.gop_merkle_root)
        .collect::<Vec<_>>();
    let block_merkle_root = block_root(&roots)?;
    let mut block = Block {
        prev_block_hash,
        height,
        timestamp_ms,
        subblocks,
        block_merkle_root,
        storage_proof_refs,
        miner_id,
        miner_pubkey: miner_keys.public(),
        miner_signature: SignatureBytes([0u8; 64]),
    };
    let msg = block.signing_bytes()?;
    block.miner_signature = miner_keys.sign(&msg);
    Ok(block)
}

/// Result of offering a block to the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppendOutcome {
    /// Appended; `adopted` counts previously orphaned descendants attached
    /// in the same call.
    Appended { adopted: usize },
    /// Already known; chain unchanged.
    Duplicate,
    /// Parent unknown; held aside until the parent arrives.
    Orphaned,
    Rejected(RejectReason),
}

/// Block tree with longest-chain fork choice. Structural validation only;
/// consensus-level checks (storage, quality, chain links) must have been
/// run by the caller before appending.
#[derive(Clone, Debug)]
pub struct Chain {
    blocks: HashMap<Digest, Block>,
    insertion_order: Vec<Digest>,
    orphans: HashMap<Digest, Vec<Block>>,
    genesis: Digest,
    b_max: u32,
}

impl Chain {
    pub fn new(genesis: Block, b_max: u32) -> Chain {
        assert!(genesis.is_genesis(), "chain must start from a genesis block");
        let gh = genesis.hash();
        let mut blocks = HashMap::new();
        blocks.insert(gh, genesis);
        Chain {
            blocks,
            insertion_order: vec![gh],
            orphans: HashMap::new(),
            genesis: gh,
            b_max,
        }
    }

    pub fn genesis_hash(&self) -> Digest {
        self.genesis
    }

    pub fn b_max(&self) -> u32 {
        self.b_max
    }

    pub fn contains(&self, hash: &Digest) -> bool {
        self.blocks.contains_key(hash)
    }

    pub fn get(&self, hash: &Digest) -> Option<&Block> {
        self.blocks.get(hash)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// All stored blocks (canonical and side branches) in insertion order.
    pub fn all_blocks(&self) -> impl Iterator<Item = &Block> {
        self.insertion_order.iter().map(move |h| &self.blocks[h])
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.values().map(|v| v.len()).sum()
    }

    fn validate_structural(&self, block: &Block, parent: &Block) -> Result<(), RejectReason> {
        if block.height != parent.height + 1 {
            return Err(RejectReason::BadHeight);
        }
        if block.subblocks.is_empty() {
            return Err(RejectReason::EmptyBlock);
        }
        if block.subblocks.len() > self.b_max as usize {
            return Err(RejectReason::TooManySubBlocks);
        }
        for sb in &block.subblocks {
            match sb.encoded_size() {
                Ok(n) if n <= MAX_SUBBLOCK_BYTES => {}
                _ => return Err(RejectReason::OversizeSubBlock),
            }
            if !sb.verify_signature() {
                return Err(RejectReason::BadSubBlockSignature);
            }
        }
        match block_root(&block.gop_roots()) {
            Ok(root) if root == block.block_merkle_root => {}
            _ => return Err(RejectReason::BadMerkleRoot),
        }
        if !block.verify_miner_signature() {
            return Err(RejectReason::BadMinerSignature);
        }
        Ok(())
    }

    /// Structural validation and append. Duplicates are no-ops; blocks with
    /// unknown parents are held as orphans and adopted when the parent
    /// arrives.
    pub fn validate_and_append(&mut self, block: Block) -> AppendOutcome {
        let bh = block.hash();
        if self.blocks.contains_key(&bh) {
            return AppendOutcome::Duplicate;
        }
        if block.is_genesis() {
            return AppendOutcome::Rejected(RejectReason::NotAfterGenesis);
        }
        let Some(parent) = self.blocks.get(&block.prev_block_hash) else {
            self.orphans
                .entry(block.prev_block_hash)
                .or_default()
                .push(block);
            return AppendOutcome::Orphaned;
        };
        if let Err(reason) = self.validate_structural(&block, parent) {
            return AppendOutcome::Rejected(reason);
        }
        self.blocks.insert(bh, block);
        self.insertion_order.push(bh);

        // Adopt any orphans now connected.
        let mut adopted = 0;
        let mut frontier = vec![bh];
        while let Some(parent_hash) = frontier.pop() {
            let Some(waiting) = self.orphans.remove(&parent_hash) else {
                continue;
            };
            for orphan in waiting {
                let oh = orphan.hash();
                if self.blocks.contains_key(&oh) {
                    continue;
                }
                let parent = &self.blocks[&parent_hash];
                if self.validate_structural(&orphan, parent).is_ok() {
                    self.blocks.insert(oh, orphan);
                    self.insertion_order.push(oh);
                    adopted += 1;
                    frontier.push(oh);
                }
            }
        }
        AppendOutcome::Appended { adopted }
    }

    /// Longest chain wins; ties break toward the lexicographically smaller
    /// tip hash so every node converges on the same branch.
    pub fn fork_choice(&self) -> Digest {
        let mut best = self.genesis;
        let mut best_height = 0u64;
        for (h, b) in &self.blocks {
            if b.height > best_height || (b.height == best_height && h.0 < best.0) {
                best = *h;
                best_height = b.height;
            }
        }
        best
    }

    /// Hashes from genesis to the canonical tip, inclusive.
    pub fn canonical_chain(&self) -> Vec<Digest> {
        let mut out = Vec::new();
        let mut cursor = self.fork_choice();
        loop {
            out.push(cursor);
            let b = &self.blocks[&cursor];
            if b.is_genesis() {
                break;
            }
            cursor = b.prev_block_hash;
        }
        out.reverse();
        out
    }

    /// Canonical tip height (genesis = 0).
    pub fn canonical_height(&self) -> u64 {
        self.blocks[&self.fork_choice()].height
    }

    /// Valid blocks that did not make the canonical chain.
    pub fn orphaned_block_count(&self) -> usize {
        self.blocks.len() - self.canonical_chain().len()
    }

    /// Length-prefixed stream of canonically encoded blocks, in insertion
    /// order (so a replaying loader sees parents before children).
    pub fn dump(&self) -> Result<Vec<u8>, EncodingError> {
        let mut enc = Encoder::new();
        enc.put_count(self.insertion_order.len())?;
        for h in &self.insertion_order {
            enc.put_bytes(&self.blocks[h].canonical_bytes()?)?;
        }
        Ok(enc.into_bytes())
    }

    /// Rebuilds a chain from [`Chain::dump`] output, revalidating every
    /// block.
    pub fn load(data: &[u8], b_max: u32) -> Result<Chain, EncodingError> {
        let mut dec = Decoder::new(data);
        let n = dec.get_count()?;
        if n == 0 {
            return Err(EncodingError::Invalid("empty chain dump"));
        }
        let first = Block::from_canonical_bytes(&dec.get_bytes()?)?;
        if !first.is_genesis() {
            return Err(EncodingError::Invalid("dump does not start at genesis"));
        }
        let mut chain = Chain::new(first, b_max);
        for _ in 1..n {
            let block = Block::from_canonical_bytes(&dec.get_bytes()?)?;
            match chain.validate_and_append(block) {
                AppendOutcome::Appended { .. } | AppendOutcome::Duplicate => {}
                _ => return Err(EncodingError::Invalid("dump contains invalid block")),
            }
        }
        dec.finish()?;
        Ok(chain)
    }
}

// ---- canonical encoding ----

impl CanonicalEncode for StoragePointer {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        enc.put_digest(&self.address);
        enc.put_u64(self.node_id);
        enc.put_digest(&self.chunk_root);
        enc.put_u64(self.object_len);
        enc.put_u32(self.chunk_size);
        Ok(())
    }
}

impl CanonicalDecode for StoragePointer {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        Ok(StoragePointer {
            address: dec.get_digest()?,
            node_id: dec.get_u64()?,
            chunk_root: dec.get_digest()?,
            object_len: dec.get_u64()?,
            chunk_size: dec.get_u32()?,
        })
    }
}

impl CanonicalEncode for CodecParams {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        enc.put_u32(self.algorithm_id);
        enc.put_u32(self.quantizer);
        enc.put_u32(self.width);
        enc.put_u32(self.height);
        enc.put_u32(self.frame_count);
        Ok(())
    }
}

impl CanonicalDecode for CodecParams {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        Ok(CodecParams {
            algorithm_id: dec.get_u32()?,
            quantizer: dec.get_u32()?,
            width: dec.get_u32()?,
            height: dec.get_u32()?,
            frame_count: dec.get_u32()?,
        })
    }
}

impl CanonicalEncode for QualitySummary {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        enc.put_f64(self.mean_psnr_db);
        enc.put_f64(self.threshold_db);
        Ok(())
    }
}

impl CanonicalDecode for QualitySummary {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        Ok(QualitySummary {
            mean_psnr_db: dec.get_f64()?,
            threshold_db: dec.get_f64()?,
        })
    }
}

impl CanonicalEncode for SubBlockContent {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        enc.put_u64(self.gop_timestamp_ms);
        enc.put_digest(&self.gop_merkle_root);
        enc.put_bytes(&self.access_privileges)?;
        self.storage.encode_into(enc)?;
        self.codec.encode_into(enc)?;
        self.quality.encode_into(enc)?;
        enc.put_bytes(&self.sensor_metadata)?;
        enc.put_u64(self.video_id);
        enc.put_u64(self.gop_index);
        enc.put_digest(&self.chain_prev_i);
        enc.put_digest(&self.chain_prev_last_p);
        Ok(())
    }
}

impl CanonicalDecode for SubBlockContent {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        Ok(SubBlockContent {
            gop_timestamp_ms: dec.get_u64()?,
            gop_merkle_root: dec.get_digest()?,
            access_privileges: dec.get_bytes()?,
            storage: StoragePointer::decode_from(dec)?,
            codec: CodecParams::decode_from(dec)?,
            quality: QualitySummary::decode_from(dec)?,
            sensor_metadata: dec.get_bytes()?,
            video_id: dec.get_u64()?,
            gop_index: dec.get_u64()?,
            chain_prev_i: dec.get_digest()?,
            chain_prev_last_p: dec.get_digest()?,
        })
    }
}

impl CanonicalEncode for SubBlock {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        self.content.encode_into(enc)?;
        enc.put_pubkey(&self.initiator_pubkey);
        enc.put_signature(&self.initiator_signature);
        Ok(())
    }
}

impl CanonicalDecode for SubBlock {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        Ok(SubBlock {
            content: SubBlockContent::decode_from(dec)?,
            initiator_pubkey: dec.get_pubkey()?,
            initiator_signature: dec.get_signature()?,
        })
    }
}

impl CanonicalEncode for Block {
    fn encode_into(&self, enc: &mut Encoder) -> Result<(), EncodingError> {
        self.encode_header(enc)?;
        enc.put_signature(&self.miner_signature);
        Ok(())
    }
}

impl CanonicalDecode for Block {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, EncodingError> {
        let prev_block_hash = dec.get_digest()?;
        let height = dec.get_u64()?;
        let timestamp_ms = dec.get_u64()?;
        let n = dec.get_count()?;
        let mut subblocks = Vec::with_capacity(n);
        for _ in 0..n {
            subblocks.push(SubBlock::decode_from(dec)?);
        }
        let block_merkle_root = dec.get_digest()?;
        let m = dec.get_count()?;
        let mut storage_proof_refs = Vec::with_capacity(m);
        for _ in 0..m {
            storage_proof_refs.push(dec.get_digest()?);
        }
        Ok(Block {
            prev_block_hash,
            height,
            timestamp_ms,
            subblocks,
            block_merkle_root,
            storage_proof_refs,
            miner_id: dec.get_u64()?,
            miner_pubkey: dec.get_pubkey()?,
            miner_signature: dec.get_signature()?,
        })
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn dummy_content(video_id: u64, gop_index: u64, tag: u8) -> SubBlockContent {
        SubBlockContent {
            gop_timestamp_ms: 1_000 + gop_index,
            gop_merkle_root: hash(&[tag, 1]),
            access_privileges: vec![tag; 48],
            storage: StoragePointer {
                address: hash(&[tag, 2]),
                node_id: 0,
                chunk_root: hash(&[tag, 3]),
                object_len: 4096,
                chunk_size: 4096,
            },
            codec: CodecParams {
                algorithm_id: 1,
                quantizer: 8,
                width: 64,
                height: 64,
                frame_count: 25,
            },
            quality: QualitySummary {
                mean_psnr_db: 35.0,
                threshold_db: 30.0,
            },
            sensor_metadata: vec![tag; 16],
            video_id,
            gop_index,
            chain_prev_i: Digest::ZERO,
            chain_prev_last_p: Digest::ZERO,
        }
    }

    pub fn dummy_block(
        prev: &Block,
        initiator: &KeyPair,
        miner: &KeyPair,
        n_subblocks: usize,
        tag: u8,
    ) -> Block {
        let subblocks: Vec<SubBlock> = (0..n_subblocks)
            .map(|i| make_subblock(dummy_content(0, i as u64, tag), initiator).unwrap())
            .collect();
        assemble_block(
            subblocks,
            prev.hash(),
            prev.height + 1,
            prev.timestamp_ms + 10_000,
            vec![],
            1,
            miner,
            DEFAULT_B_MAX,
        )
        .unwrap()
    }
}
