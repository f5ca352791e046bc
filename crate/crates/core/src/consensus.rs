//! Mining and verification. A miner's proof of work is useful compression:
//! each pending GOP is coded at the coarsest quantizer that still meets the
//! network quality threshold, encrypted per frame, placed on a storage node
//! (spending storage credits), and summarized in a signed subblock. A
//! verifier re-runs storage challenges, Merkle recomputation and a full
//! quality recomputation (proof of compression) before appending the block.

use crate::codec::{
    decode_gop, encode_gop, quality_of, CodecError, CompressedGop, Gop,
};
use crate::crypto::{
    hash, hash_concat, verify, Digest, KeyPair, PublicKeyBytes, SignatureBytes, SymmetricKey,
};
use crate::encoding::{CanonicalEncode, Decoder, Encoder, EncodingError};
use crate::ledger::{
    assemble_block, make_subblock, Block, Chain, CodecParams, QualitySummary, RejectReason,
    StoragePointer, SubBlockContent,
};
use crate::merkle::{block_root, payload_tree};
use crate::storage::{
    chunk_count, make_challenge, verify_storage_proof, CreditLedger, StorageDirectory,
    StorageError, StorageExchange, StorageProof,
};
use rand_chacha::ChaCha20Rng;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

/// A GOP offered to the miner network; this protocol's analogue of a
/// transaction. Signed by the initiator over everything it carries.
#[derive(Clone, Debug, PartialEq)]
pub struct GopTransaction {
    pub video_id: u64,
    pub gop: Gop,
    pub sensor_metadata: Vec<u8>,
    pub initiator_pubkey: PublicKeyBytes,
    pub signature: SignatureBytes,
}

impl GopTransaction {
    fn signing_bytes(
        video_id: u64,
        gop: &Gop,
        sensor_metadata: &[u8],
        pubkey: &PublicKeyBytes,
    ) -> Result<Vec<u8>, EncodingError> {
        let mut enc = Encoder::new();
        enc.put_u64(video_id);
        enc.put_u64(gop.index);
        enc.put_u64(gop.timestamp_ms);
        enc.put_u32(gop.width());
        enc.put_u32(gop.height());
        enc.put_count(gop.frames.len())?;
        for f in &gop.frames {
            enc.put_bytes(f.samples())?;
        }
        enc.put_bytes(sensor_metadata)?;
        enc.put_pubkey(pubkey);
        Ok(enc.into_bytes())
    }

    pub fn sign_new(
        video_id: u64,
        gop: Gop,
        sensor_metadata: Vec<u8>,
        initiator: &KeyPair,
    ) -> Result<GopTransaction, EncodingError> {
        let pubkey = initiator.public();
        let msg = Self::signing_bytes(video_id, &gop, &sensor_metadata, &pubkey)?;
        Ok(GopTransaction {
            video_id,
            gop,
            sensor_metadata,
            initiator_pubkey: pubkey,
            signature: initiator.sign(&msg),
        })
    }

    pub fn verify(&self) -> bool {
        match Self::signing_bytes(
            self.video_id,
            &self.gop,
            &self.sensor_metadata,
            &self.initiator_pubkey,
        ) {
            Ok(msg) => verify(&self.initiator_pubkey, &msg, &self.signature),
            Err(_) => false,
        }
    }

    pub fn gop_index(&self) -> u64 {
        self.gop.index
    }

    /// Wire size of the full transaction (raw frames included); the
    /// location-broadcast variant sends only [`Self::locator_size`] bytes.
    pub fn broadcast_size(&self) -> u64 {
        // ids + dims + per-frame length prefixes + samples + metadata + keys
        8 + 8 + 8
            + 4
            + 4
            + 4
            + self
                .gop
                .frames
                .iter()
                .map(|f| 4 + f.samples().len() as u64)
                .sum::<u64>()
            + 4
            + self.sensor_metadata.len() as u64
            + 32
            + 64
    }

    /// Size of a location+hash announcement replacing the raw broadcast.
    pub fn locator_size(&self) -> u64 {
        8 + 8 + 32 + 8 + 96
    }
}

/// Mining parameters fixed per scenario.
#[derive(Clone, Debug)]
pub struct MiningParams {
    pub b_max: u32,
    /// Coarse-to-fine quantizer sweep; the first passing quantizer wins,
    /// which is also the smallest ciphertext among passing ones.
    pub quantizer_sweep: Vec<u32>,
    pub threshold_db: f64,
    pub chunk_size: u32,
    pub challenge_k: u32,
    pub algorithm_id: u32,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            b_max: crate::ledger::DEFAULT_B_MAX,
            quantizer_sweep: vec![64, 32, 16, 8, 4, 2, 1],
            threshold_db: 30.0,
            chunk_size: crate::storage::DEFAULT_CHUNK_SIZE,
            challenge_k: crate::storage::DEFAULT_CHALLENGE_K,
            algorithm_id: 1,
        }
    }
}

/// Where a video's compressed chain currently stands: the next expected
/// GOP index and the digests the next I payload must embed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VideoTip {
    pub next_gop_index: u64,
    pub prev_i: Digest,
    pub prev_last_p: Digest,
}

impl Default for VideoTip {
    fn default() -> Self {
        VideoTip {
            next_gop_index: 0,
            prev_i: Digest::ZERO,
            prev_last_p: Digest::ZERO,
        }
    }
}

/// Chain digests for the GOP after `prev`: hashes of the previous I
/// payload and last P payload, or the zero sentinel at a chain start.
/// A P-less previous GOP contributes its I payload as "last P".
pub fn chain_link_digests(prev: Option<&CompressedGop>) -> (Digest, Digest) {
    match prev {
        None => (Digest::ZERO, Digest::ZERO),
        Some(c) => (hash(&c.i_payload), hash(c.last_p_payload())),
    }
}

/// Per-GOP content key, derived from the network content key. Miners and
/// verifiers hold the content key; `access_privileges` carries the wrapped
/// per-GOP key for external readers.
pub fn gop_key(content_key: &SymmetricKey, video_id: u64, gop_index: u64) -> SymmetricKey {
    SymmetricKey::from_digest(hash_concat(&[
        &content_key.0,
        b"gop-key",
        &video_id.to_be_bytes(),
        &gop_index.to_be_bytes(),
    ]))
}

/// Encrypts each coded payload independently so frame-level Merkle leaves
/// exist post-encryption.
pub fn encrypt_payloads(c: &CompressedGop, key: &SymmetricKey) -> Vec<Vec<u8>> {
    c.payloads()
        .enumerate()
        .map(|(i, p)| key.derive(b"frame", i as u64).encrypt(p))
        .collect()
}

/// Stored-object layout: count-prefixed list of length-prefixed frame
/// ciphertexts.
pub fn object_bytes(frame_ciphertexts: &[Vec<u8>]) -> Result<Vec<u8>, EncodingError> {
    let mut enc = Encoder::new();
    enc.put_count(frame_ciphertexts.len())?;
    for ct in frame_ciphertexts {
        enc.put_bytes(ct)?;
    }
    Ok(enc.into_bytes())
}

/// Inverse of [`object_bytes`].
pub fn split_object(bytes: &[u8]) -> Result<Vec<Vec<u8>>, EncodingError> {
    let mut dec = Decoder::new(bytes);
    let n = dec.get_count()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(dec.get_bytes()?);
    }
    dec.finish()?;
    Ok(out)
}

#[derive(Debug, Error)]
pub enum MineError {
    #[error("no pending transactions to mine")]
    EmptyPending,
    #[error("transaction signature invalid for video {video_id} gop {gop_index}")]
    BadTransactionSignature { video_id: u64, gop_index: u64 },
    #[error("video {video_id}: got gop {got}, expected {expected}")]
    NonSequentialGop { video_id: u64, got: u64, expected: u64 },
    #[error("quality threshold is not finite; unreachable even lossless")]
    ThresholdUnreachable,
    #[error("no countersigning key for video {0}")]
    NoInitiatorKey(u64),
    #[error("no subblock could be mined")]
    NothingMined,
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Ledger(#[from] crate::ledger::LedgerError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

/// Everything a miner produced for one GOP beyond the subblock itself.
#[derive(Clone, Debug)]
pub struct MinedGop {
    pub video_id: u64,
    pub gop_index: u64,
    pub compressed: CompressedGop,
    pub object: Vec<u8>,
    pub receipt: crate::storage::PlacementReceipt,
    pub proof: StorageProof,
}

#[derive(Clone, Debug)]
pub struct MiningResult {
    pub block: Block,
    pub gops: Vec<MinedGop>,
    /// Quantizer sweep attempts performed; drives the simulator work model.
    pub work_steps: u64,
    pub raw_bytes: u64,
}

/// Miner identity and static configuration.
pub struct MinerContext<'a> {
    pub miner_id: u64,
    pub miner_keys: &'a KeyPair,
    pub params: &'a MiningParams,
    pub content_key: SymmetricKey,
}

/// Mines a block from pending transactions: authenticate, compress at the
/// coarsest passing quantizer, encrypt, place on storage (paying credits),
/// prove storage, countersign subblocks with the initiator key, assemble.
///
/// `pending` must be ordered so that each video's GOPs appear sequentially
/// starting at the tip recorded in `video_tips`; at most `b_max`
/// transactions are consumed.
#[allow(clippy::too_many_arguments)]
pub fn mine(
    ctx: &MinerContext<'_>,
    pending: &[GopTransaction],
    video_tips: &HashMap<u64, VideoTip>,
    prev_block_hash: Digest,
    height: u64,
    timestamp_ms: u64,
    initiator_keys: &HashMap<u64, KeyPair>,
    storage: &mut dyn StorageExchange,
    rng: &mut ChaCha20Rng,
) -> Result<MiningResult, MineError> {
    if pending.is_empty() {
        return Err(MineError::EmptyPending);
    }
    if !ctx.params.threshold_db.is_finite() {
        return Err(MineError::ThresholdUnreachable);
    }
    let mut working_tips: HashMap<u64, VideoTip> = HashMap::new();
    let mut subblocks = Vec::new();
    let mut mined = Vec::new();
    let mut proof_refs = Vec::new();
    let mut work_steps = 0u64;
    let mut raw_bytes = 0u64;
    // Videos whose storage placement failed: later GOPs of the same video
    // cannot chain, so they are skipped too.
    let mut aborted_videos: HashSet<u64> = HashSet::new();

    for tx in pending.iter().take(ctx.params.b_max as usize) {
        if aborted_videos.contains(&tx.video_id) {
            continue;
        }
        if !tx.verify() {
            return Err(MineError::BadTransactionSignature {
                video_id: tx.video_id,
                gop_index: tx.gop_index(),
            });
        }
        let tip = working_tips
            .get(&tx.video_id)
            .copied()
            .or_else(|| video_tips.get(&tx.video_id).copied())
            .unwrap_or_default();
        if tx.gop_index() != tip.next_gop_index {
            return Err(MineError::NonSequentialGop {
                video_id: tx.video_id,
                got: tx.gop_index(),
                expected: tip.next_gop_index,
            });
        }

        // Proof-of-work: coarse-to-fine sweep, first quantizer meeting the
        // threshold (which is also the smallest passing ciphertext).
        let mut chosen: Option<(CompressedGop, f64)> = None;
        for &q in &ctx.params.quantizer_sweep {
            work_steps += 1;
            let compressed = encode_gop(&tx.gop, q, tip.prev_i, tip.prev_last_p)?;
            let report = quality_of(&tx.gop, &compressed, ctx.params.threshold_db)?;
            if report.meets_threshold {
                chosen = Some((compressed, report.mean_psnr_db));
                break;
            }
        }
        // A sweep containing quantizer 1 always passes a finite threshold.
        let (compressed, mean_psnr_db) = chosen.ok_or(MineError::ThresholdUnreachable)?;

        let key = gop_key(&ctx.content_key, tx.video_id, tx.gop_index());
        let ciphertexts = encrypt_payloads(&compressed, &key);
        let object = object_bytes(&ciphertexts)?;
        let gop_merkle_root = payload_tree(ciphertexts.iter().map(|c| c.as_slice()))
            .expect("at least one frame payload")
            .root();

        let receipt = match storage.place(ctx.miner_id, &object, ctx.params.chunk_size) {
            Ok(r) => r,
            Err(StorageError::NoWillingNode) | Err(StorageError::InsufficientCredits { .. }) => {
                aborted_videos.insert(tx.video_id);
                continue;
            }
            Err(e) => return Err(e.into()),
        };

        // Self-challenge: the proof shipped with the block.
        let n_chunks = chunk_count(receipt.object_len, receipt.chunk_size);
        let challenge = make_challenge(
            receipt.address,
            n_chunks,
            ctx.params.challenge_k.min(n_chunks),
            rng,
        )?;
        let proof = storage
            .respond(receipt.node_id, &challenge)
            .ok_or(StorageError::NotFound)?;
        proof_refs.push(hash(&proof.canonical_bytes()?));

        let initiator = initiator_keys
            .get(&tx.video_id)
            .ok_or(MineError::NoInitiatorKey(tx.video_id))?;
        let content = SubBlockContent {
            gop_timestamp_ms: tx.gop.timestamp_ms,
            gop_merkle_root,
            access_privileges: ctx.content_key.encrypt(&key.0),
            storage: StoragePointer {
                address: receipt.address,
                node_id: receipt.node_id,
                chunk_root: receipt.chunk_root,
                object_len: receipt.object_len,
                chunk_size: receipt.chunk_size,
            },
            codec: CodecParams {
                algorithm_id: ctx.params.algorithm_id,
                quantizer: compressed.quantizer,
                width: compressed.width,
                height: compressed.height,
                frame_count: compressed.frame_count,
            },
            quality: QualitySummary {
                mean_psnr_db,
                threshold_db: ctx.params.threshold_db,
            },
            sensor_metadata: tx.sensor_metadata.clone(),
            video_id: tx.video_id,
            gop_index: tx.gop_index(),
            chain_prev_i: tip.prev_i,
            chain_prev_last_p: tip.prev_last_p,
        };
        subblocks.push(make_subblock(content, initiator)?);

        let (next_i, next_p) = chain_link_digests(Some(&compressed));
        working_tips.insert(
            tx.video_id,
            VideoTip {
                next_gop_index: tx.gop_index() + 1,
                prev_i: next_i,
                prev_last_p: next_p,
            },
        );
        raw_bytes += tx.gop.raw_size();
        mined.push(MinedGop {
            video_id: tx.video_id,
            gop_index: tx.gop_index(),
            compressed,
            object,
            receipt,
            proof,
        });
    }

    if subblocks.is_empty() {
        return Err(MineError::NothingMined);
    }
    let block = assemble_block(
        subblocks,
        prev_block_hash,
        height,
        timestamp_ms,
        proof_refs,
        ctx.miner_id,
        ctx.miner_keys,
        ctx.params.b_max,
    )?;
    Ok(MiningResult {
        block,
        gops: mined,
        work_steps,
        raw_bytes,
    })
}

/// Verification failure codes, stable for metrics and the CLI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyFailure {
    Structural(RejectReason),
    /// A miner or initiator signature does not verify.
    SignatureFail,
    /// Challenge unanswered, content unfetchable, or content inconsistent
    /// with the on-chain address/chunk root.
    StorageFail,
    /// Recomputed GOP or block Merkle root mismatch.
    MerkleFail,
    /// Quality recomputation failed, missed the threshold, or contradicts
    /// the reported value.
    QualityFail,
    /// Chain digests do not match the prior GOP of the video.
    ChainLinkFail,
    /// Verifier has no raw copy (and no prior verification record) for a
    /// claimed GOP; a protocol-level error, not a miner fault.
    MissingRawGop { video_id: u64, gop_index: u64 },
}

impl VerifyFailure {
    pub fn code(&self) -> &'static str {
        match self {
            VerifyFailure::Structural(r) => r.code(),
            VerifyFailure::SignatureFail => "signature-fail",
            VerifyFailure::StorageFail => "storage-fail",
            VerifyFailure::MerkleFail => "merkle-fail",
            VerifyFailure::QualityFail => "quality-fail",
            VerifyFailure::ChainLinkFail => "chain-link-fail",
            VerifyFailure::MissingRawGop { .. } => "missing-raw-gop",
        }
    }
}

/// Raw GOP copies held until a block covering them is accepted.
#[derive(Clone, Debug, Default)]
pub struct VerifierCache {
    entries: HashMap<(u64, u64), Gop>,
}

impl VerifierCache {
    pub fn insert(&mut self, video_id: u64, gop: Gop) {
        self.entries.insert((video_id, gop.index), gop);
    }

    pub fn get(&self, video_id: u64, gop_index: u64) -> Option<&Gop> {
        self.entries.get(&(video_id, gop_index))
    }

    pub fn evict(&mut self, video_id: u64, gop_index: u64) -> bool {
        self.entries.remove(&(video_id, gop_index)).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Record of one successfully verified GOP: the plaintext payload digests
/// that the next GOP in the video must embed, plus the verified quality.
/// Kept so fork blocks re-covering an evicted GOP can still be checked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifiedGop {
    pub i_digest: Digest,
    pub last_p_digest: Digest,
    pub quantizer: u32,
    pub mean_psnr_db: f64,
}

/// Verifier-side state surviving across blocks.
#[derive(Clone, Debug)]
pub struct VerifierState {
    pub cache: VerifierCache,
    pub verified: HashMap<(u64, u64), VerifiedGop>,
    pub expected_threshold_db: f64,
    pub content_key: SymmetricKey,
    pub challenge_k: u32,
    /// In sharded scenarios, GOP indices divisible by this span restart
    /// the video chain from the zero digests.
    pub chain_restart_interval: Option<u64>,
}

impl VerifierState {
    pub fn new(expected_threshold_db: f64, content_key: SymmetricKey) -> VerifierState {
        VerifierState {
            cache: VerifierCache::default(),
            verified: HashMap::new(),
            expected_threshold_db,
            content_key,
            challenge_k: crate::storage::DEFAULT_CHALLENGE_K,
            chain_restart_interval: None,
        }
    }

    fn is_restart(&self, gop_index: u64) -> bool {
        gop_index == 0
            || self
                .chain_restart_interval
                .map(|span| span > 0 && gop_index % span == 0)
                .unwrap_or(false)
    }
}

/// Every (video, GOP index) pair committed on the branch ending at `from`
/// (inclusive). Used for duplicate and continuity checks; in sharded
/// deployments ranges may land out of order, so set membership — not the
/// latest index — is the meaningful question.
pub fn branch_committed(chain: &Chain, from: Digest) -> HashSet<(u64, u64)> {
    let mut committed = HashSet::new();
    let mut cursor = from;
    while let Some(block) = chain.get(&cursor) {
        for sb in &block.subblocks {
            committed.insert((sb.content.video_id, sb.content.gop_index));
        }
        if block.is_genesis() {
            break;
        }
        cursor = block.prev_block_hash;
    }
    committed
}

/// Video tips along the branch ending at `tip`, for miners choosing what
/// to work on next. Videos never seen on the branch are absent.
pub fn branch_video_tips(
    chain: &Chain,
    tip: Digest,
    state: &VerifierState,
) -> HashMap<u64, VideoTip> {
    let mut tips = HashMap::new();
    let mut cursor = tip;
    loop {
        let Some(block) = chain.get(&cursor) else {
            break;
        };
        for sb in block.subblocks.iter().rev() {
            let video = sb.content.video_id;
            if tips.contains_key(&video) {
                continue;
            }
            let idx = sb.content.gop_index;
            if let Some(v) = state.verified.get(&(video, idx)) {
                tips.insert(
                    video,
                    VideoTip {
                        next_gop_index: idx + 1,
                        prev_i: v.i_digest,
                        prev_last_p: v.last_p_digest,
                    },
                );
            }
        }
        if block.is_genesis() {
            break;
        }
        cursor = block.prev_block_hash;
    }
    tips
}

/// Full consensus verification of a candidate block whose parent is
/// already on the chain: signatures, storage challenges (check a), Merkle
/// recomputation from fetched ciphertext (check b), and proof of
/// compression with chain-digest continuity (check c). On success the
/// covered raw GOPs are evicted from the cache and the verification
/// records updated.
pub fn verify_block(
    state: &mut VerifierState,
    chain: &Chain,
    block: &Block,
    directory: &dyn StorageDirectory,
    rng: &mut ChaCha20Rng,
) -> Result<(), VerifyFailure> {
    let Some(parent) = chain.get(&block.prev_block_hash) else {
        return Err(VerifyFailure::Structural(RejectReason::BadHeight));
    };
    if block.height != parent.height + 1 {
        return Err(VerifyFailure::Structural(RejectReason::BadHeight));
    }
    if block.subblocks.is_empty() {
        return Err(VerifyFailure::Structural(RejectReason::EmptyBlock));
    }
    if block.subblocks.len() > chain.b_max() as usize {
        return Err(VerifyFailure::Structural(RejectReason::TooManySubBlocks));
    }
    if !block.verify_miner_signature() {
        return Err(VerifyFailure::SignatureFail);
    }
    for sb in &block.subblocks {
        if !sb.verify_signature() {
            return Err(VerifyFailure::SignatureFail);
        }
    }
    match block_root(&block.gop_roots()) {
        Ok(root) if root == block.block_merkle_root => {}
        _ => return Err(VerifyFailure::MerkleFail),
    }

    // Staged effects, applied only if the whole block verifies.
    let mut staged: Vec<((u64, u64), VerifiedGop)> = Vec::new();
    let committed = branch_committed(chain, block.prev_block_hash);
    let on_branch = |staged: &[((u64, u64), VerifiedGop)], key: (u64, u64)| {
        committed.contains(&key) || staged.iter().any(|(k, _)| *k == key)
    };

    for sb in &block.subblocks {
        let c = &sb.content;

        // (a) storage: fresh challenge plus content consistency.
        let n_chunks = chunk_count(c.storage.object_len, c.storage.chunk_size);
        let challenge = make_challenge(
            c.storage.address,
            n_chunks,
            state.challenge_k.min(n_chunks),
            rng,
        )
        .map_err(|_| VerifyFailure::StorageFail)?;
        let proof = directory
            .respond(c.storage.node_id, &challenge)
            .ok_or(VerifyFailure::StorageFail)?;
        if !verify_storage_proof(c.storage.chunk_root, &challenge, &proof) {
            return Err(VerifyFailure::StorageFail);
        }
        let object = directory
            .fetch(c.storage.node_id, &c.storage.address)
            .ok_or(VerifyFailure::StorageFail)?;
        if hash(&object) != c.storage.address || object.len() as u64 != c.storage.object_len {
            return Err(VerifyFailure::StorageFail);
        }
        if crate::storage::build_chunk_tree(&object, c.storage.chunk_size).root()
            != c.storage.chunk_root
        {
            return Err(VerifyFailure::StorageFail);
        }

        // (b) merkle: recompute the GOP root from the fetched ciphertext.
        let ciphertexts = split_object(&object).map_err(|_| VerifyFailure::MerkleFail)?;
        if ciphertexts.is_empty() {
            return Err(VerifyFailure::MerkleFail);
        }
        let recomputed_root = payload_tree(ciphertexts.iter().map(|x| x.as_slice()))
            .map_err(|_| VerifyFailure::MerkleFail)?
            .root();
        if recomputed_root != c.gop_merkle_root {
            return Err(VerifyFailure::MerkleFail);
        }

        // (c) chain continuity: no duplicate commits, predecessor present
        // (unless the chain restarts here), embedded digests as expected.
        if on_branch(&staged, (c.video_id, c.gop_index)) {
            return Err(VerifyFailure::ChainLinkFail);
        }
        let (expected_i, expected_p) = if state.is_restart(c.gop_index) {
            (Digest::ZERO, Digest::ZERO)
        } else {
            if !on_branch(&staged, (c.video_id, c.gop_index - 1)) {
                return Err(VerifyFailure::ChainLinkFail);
            }
            let record = staged
                .iter()
                .rev()
                .find(|((v, i), _)| *v == c.video_id && *i == c.gop_index - 1)
                .map(|(_, r)| *r)
                .or_else(|| state.verified.get(&(c.video_id, c.gop_index - 1)).copied())
                .ok_or(VerifyFailure::ChainLinkFail)?;
            (record.i_digest, record.last_p_digest)
        };
        if c.chain_prev_i != expected_i || c.chain_prev_last_p != expected_p {
            return Err(VerifyFailure::ChainLinkFail);
        }

        // (c) proof of compression: decrypt, decode, recompute quality.
        if c.quality.threshold_db.to_bits() != state.expected_threshold_db.to_bits() {
            return Err(VerifyFailure::QualityFail);
        }
        let key = gop_key(&state.content_key, c.video_id, c.gop_index);
        if state.content_key.decrypt(&c.access_privileges) != key.0 {
            return Err(VerifyFailure::QualityFail);
        }
        let plaintexts: Vec<Vec<u8>> = ciphertexts
            .iter()
            .enumerate()
            .map(|(i, ct)| key.derive(b"frame", i as u64).decrypt(ct))
            .collect();
        if plaintexts.len() != c.codec.frame_count as usize {
            return Err(VerifyFailure::QualityFail);
        }
        let compressed = CompressedGop {
            i_payload: plaintexts[0].clone(),
            p_payloads: plaintexts[1..].to_vec(),
            quantizer: c.codec.quantizer,
            chain_prev_i: c.chain_prev_i,
            chain_prev_last_p: c.chain_prev_last_p,
            width: c.codec.width,
            height: c.codec.height,
            frame_count: c.codec.frame_count,
        };

        let record = VerifiedGop {
            i_digest: hash(&compressed.i_payload),
            last_p_digest: hash(compressed.last_p_payload()),
            quantizer: c.codec.quantizer,
            mean_psnr_db: c.quality.mean_psnr_db,
        };

        if let Some(raw) = state.cache.get(c.video_id, c.gop_index) {
            let report = quality_of(raw, &compressed, state.expected_threshold_db).map_err(|e| {
                if e == CodecError::ChainHeaderMismatch {
                    VerifyFailure::ChainLinkFail
                } else {
                    VerifyFailure::QualityFail
                }
            })?;
            if !report.meets_threshold
                || report.mean_psnr_db.to_bits() != c.quality.mean_psnr_db.to_bits()
            {
                return Err(VerifyFailure::QualityFail);
            }
        } else if let Some(prior) = state.verified.get(&(c.video_id, c.gop_index)) {
            // Raw copy already evicted by a competing branch: accept only
            // byte-identical work (same payload digests and verdict).
            if prior.i_digest != record.i_digest
                || prior.last_p_digest != record.last_p_digest
                || prior.quantizer != record.quantizer
                || prior.mean_psnr_db.to_bits() != record.mean_psnr_db.to_bits()
            {
                return Err(VerifyFailure::QualityFail);
            }
            // Still must decode cleanly.
            decode_gop(&compressed).map_err(|_| VerifyFailure::QualityFail)?;
        } else {
            return Err(VerifyFailure::MissingRawGop {
                video_id: c.video_id,
                gop_index: c.gop_index,
            });
        }

        staged.push(((c.video_id, c.gop_index), record));
    }

    // Accept: record verification results and evict covered raw copies.
    for ((video_id, gop_index), record) in staged {
        state.verified.insert((video_id, gop_index), record);
        state.cache.evict(video_id, gop_index);
    }
    Ok(())
}

/// Idempotent miner reward: credits equal to the raw bytes the block's
/// subblocks describe.
#[derive(Clone, Debug, Default)]
pub struct RewardTracker {
    rewarded: HashSet<Digest>,
}

impl RewardTracker {
    pub fn new() -> RewardTracker {
        RewardTracker::default()
    }

    /// Grants mining credits for an accepted block; repeated calls for the
    /// same block are no-ops. Returns the amount granted.
    pub fn reward(&mut self, credits: &mut CreditLedger, block: &Block) -> u64 {
        let bh = block.hash();
        if !self.rewarded.insert(bh) {
            return 0;
        }
        let amount: u64 = block
            .subblocks
            .iter()
            .map(|sb| {
                sb.content.codec.width as u64
                    * sb.content.codec.height as u64
                    * sb.content.codec.frame_count as u64
            })
            .sum();
        credits.grant(block.miner_id, amount);
        amount
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{assemble_block, SubBlock};
    use crate::testkit::MiningFixture;

    /// Reassembles a block after subblock mutation, as an adversarial miner
    /// would: recomputed root, fresh miner signature.
    fn remint(fx: &MiningFixture, template: &Block, subblocks: Vec<SubBlock>) -> Block {
        assemble_block(
            subblocks,
            template.prev_block_hash,
            template.height,
            template.timestamp_ms,
            template.storage_proof_refs.clone(),
            template.miner_id,
            &fx.miner_keys,
            fx.params.b_max,
        )
        .expect("reassembly")
    }

    #[test]
    fn honest_blocks_verify_and_commit() {
        let mut fx = MiningFixture::new(11, 10, 25, 64, 64);
        fx.run_to_completion();
        assert_eq!(fx.chain.canonical_height(), 2);
        // Every committed GOP left the raw cache and has a record.
        assert!(fx.state.cache.is_empty());
        assert_eq!(fx.state.verified.len(), 10);
        let tips = branch_video_tips(&fx.chain, fx.chain.fork_choice(), &fx.state);
        assert_eq!(tips[&0].next_gop_index, 10);
    }

    #[test]
    fn chain_digests_thread_through_blocks() {
        let mut fx = MiningFixture::new(12, 4, 8, 32, 32);
        let r1 = fx.mine_next(2);
        fx.verify_and_append(r1.block.clone()).unwrap();
        let r2 = fx.mine_next(2);
        let sb = &r2.block.subblocks[0];
        let (exp_i, exp_p) = chain_link_digests(Some(&r1.gops[1].compressed));
        assert_eq!(sb.content.chain_prev_i, exp_i);
        assert_eq!(sb.content.chain_prev_last_p, exp_p);
        fx.verify_and_append(r2.block).unwrap();
    }

    #[test]
    fn reward_equals_raw_bytes_and_is_idempotent() {
        let mut fx = MiningFixture::new(13, 5, 25, 64, 64);
        let result = fx.mine_next(5);
        fx.verify_and_append(result.block.clone()).unwrap();
        // 5 GOPs x 25 frames x 64x64 luma bytes.
        assert_eq!(result.raw_bytes, 512_000);
        assert_eq!(fx.cluster.credits.balance(fx.miner_id) >= 512_000, true);
        let before = fx.cluster.credits.balance(fx.miner_id);
        assert_eq!(fx.rewards.reward(&mut fx.cluster.credits, &result.block), 0);
        assert_eq!(fx.cluster.credits.balance(fx.miner_id), before);
    }

    #[test]
    fn mining_pays_ciphertext_and_stores_it() {
        let mut fx = MiningFixture::new(14, 2, 8, 32, 32);
        let granted = fx.cluster.credits.balance(fx.miner_id);
        let result = fx.mine_next(2);
        let ct_bytes: u64 = result.gops.iter().map(|g| g.object.len() as u64).sum();
        assert_eq!(fx.cluster.credits.balance(fx.miner_id), granted - ct_bytes);
        for g in &result.gops {
            let fetched = fx.cluster.fetch(g.receipt.node_id, &g.receipt.address).unwrap();
            assert_eq!(fetched, g.object);
        }
    }

    #[test]
    fn unsigned_mutation_is_signature_fail() {
        let mut fx = MiningFixture::new(15, 2, 8, 32, 32);
        let result = fx.mine_next(2);
        let mut block = result.block;
        block.subblocks[0].content.sensor_metadata = b"forged".to_vec();
        // Miner re-signs but the initiator did not.
        block.resign(&fx.miner_keys);
        assert_eq!(fx.verify_and_append(block), Err(VerifyFailure::SignatureFail));
    }

    #[test]
    fn garbage_at_pointer_is_storage_fail() {
        let mut fx = MiningFixture::new(16, 2, 8, 32, 32);
        let result = fx.mine_next(2);
        let target = &result.gops[0].receipt;
        let node = fx.cluster.node_mut(target.node_id).unwrap();
        assert!(node.replace_object_silently(&target.address, b"garbage".to_vec()));
        assert_eq!(
            fx.verify_and_append(result.block),
            Err(VerifyFailure::StorageFail)
        );
    }

    #[test]
    fn corrupted_chunk_is_storage_fail() {
        let mut fx = MiningFixture::new(17, 2, 8, 32, 32);
        let result = fx.mine_next(2);
        let target = &result.gops[1].receipt;
        let node = fx.cluster.node_mut(target.node_id).unwrap();
        node.corrupt_byte(&target.address, 5).unwrap();
        assert_eq!(
            fx.verify_and_append(result.block),
            Err(VerifyFailure::StorageFail)
        );
    }

    #[test]
    fn inflated_psnr_is_quality_fail() {
        let mut fx = MiningFixture::new(18, 2, 8, 32, 32);
        let result = fx.mine_next(2);
        let mut subblocks = result.block.subblocks.clone();
        subblocks[0].content.quality.mean_psnr_db += 1.0;
        subblocks[0].resign(&fx.initiator_keys[&0]);
        let block = remint(&fx, &result.block, subblocks);
        assert_eq!(fx.verify_and_append(block), Err(VerifyFailure::QualityFail));
    }

    #[test]
    fn wrong_chain_digest_is_chain_link_fail() {
        let mut fx = MiningFixture::new(19, 4, 8, 32, 32);
        let r1 = fx.mine_next(2);
        fx.verify_and_append(r1.block).unwrap();
        let r2 = fx.mine_next(2);
        let mut subblocks = r2.block.subblocks.clone();
        subblocks[0].content.chain_prev_i = Digest([9u8; 32]);
        subblocks[0].resign(&fx.initiator_keys[&0]);
        let block = remint(&fx, &r2.block, subblocks);
        assert_eq!(fx.verify_and_append(block), Err(VerifyFailure::ChainLinkFail));
    }

    #[test]
    fn skipped_gop_is_chain_link_fail() {
        // Committing GOP 1 with no GOP 0 on the branch breaks continuity.
        let mut fx = MiningFixture::new(20, 3, 8, 32, 32);
        let r1 = fx.mine_next(2);
        let mut subblocks = r1.block.subblocks.clone();
        subblocks.remove(0);
        let block = remint(&fx, &r1.block, subblocks);
        assert_eq!(fx.verify_and_append(block), Err(VerifyFailure::ChainLinkFail));
    }

    #[test]
    fn tampered_gop_root_is_merkle_fail() {
        let mut fx = MiningFixture::new(21, 2, 8, 32, 32);
        let result = fx.mine_next(2);
        let mut subblocks = result.block.subblocks.clone();
        subblocks[0].content.gop_merkle_root = Digest([3u8; 32]);
        subblocks[0].resign(&fx.initiator_keys[&0]);
        let block = remint(&fx, &result.block, subblocks);
        assert_eq!(fx.verify_and_append(block), Err(VerifyFailure::MerkleFail));
    }

    #[test]
    fn missing_raw_copy_is_flagged_as_protocol_error() {
        let mut fx = MiningFixture::new(22, 2, 8, 32, 32);
        let result = fx.mine_next(2);
        fx.state.cache.evict(0, 1);
        let err = fx.verify_and_append(result.block).unwrap_err();
        assert_eq!(
            err,
            VerifyFailure::MissingRawGop {
                video_id: 0,
                gop_index: 1
            }
        );
        assert_eq!(err.code(), "missing-raw-gop");
    }

    #[test]
    fn fork_block_over_evicted_gop_verifies_via_record() {
        // Two miners race; the loser's block arrives after the winner's
        // acceptance already evicted the raw GOPs. Identical work must
        // still verify against the recorded digests.
        let mut fx = MiningFixture::new(23, 2, 8, 32, 32);
        let r1 = fx.mine_next(2);
        fx.verify_and_append(r1.block.clone()).unwrap();
        assert!(fx.state.cache.is_empty());
        let rival = assemble_block(
            r1.block.subblocks.clone(),
            r1.block.prev_block_hash,
            r1.block.height,
            r1.block.timestamp_ms + 7,
            r1.block.storage_proof_refs.clone(),
            777,
            &fx.miner_keys,
            fx.params.b_max,
        )
        .unwrap();
        let mut state = fx.state.clone();
        assert_eq!(
            verify_block(&mut state, &fx.chain, &rival, &fx.cluster, &mut fx.rng),
            Ok(())
        );
    }

    #[test]
    fn nonsequential_pending_refused_at_mining_time() {
        let mut fx = MiningFixture::new(24, 3, 8, 32, 32);
        let ctx = MinerContext {
            miner_id: fx.miner_id,
            miner_keys: &fx.miner_keys,
            params: &fx.params,
            content_key: fx.content_key,
        };
        let pending = vec![fx.txs[1].clone()];
        let err = mine(
            &ctx,
            &pending,
            &HashMap::new(),
            fx.chain.genesis_hash(),
            1,
            10_000,
            &fx.initiator_keys,
            &mut fx.cluster,
            &mut fx.rng,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            MineError::NonSequentialGop {
                video_id: 0,
                got: 1,
                expected: 0
            }
        ));
    }

    #[test]
    fn sharded_restart_accepts_zero_digests_mid_video() {
        let mut fx = MiningFixture::new(25, 6, 8, 32, 32);
        fx.state.chain_restart_interval = Some(3);
        // Mine GOPs 0..3 normally, then a restarted range 3..6.
        let r1 = fx.mine_next(3);
        fx.verify_and_append(r1.block).unwrap();
        // Simulate a different shard miner starting fresh at GOP 3.
        let ctx = MinerContext {
            miner_id: fx.miner_id,
            miner_keys: &fx.miner_keys,
            params: &fx.params,
            content_key: fx.content_key,
        };
        let mut tips = HashMap::new();
        tips.insert(0u64, VideoTip::default()); // fresh chain for the range
        let mut tips = tips;
        tips.get_mut(&0).unwrap().next_gop_index = 3;
        let tip_hash = fx.chain.fork_choice();
        let height = fx.chain.get(&tip_hash).unwrap().height + 1;
        let pending: Vec<_> = fx.txs[3..6].to_vec();
        let result = mine(
            &ctx,
            &pending,
            &tips,
            tip_hash,
            height,
            height * 10_000,
            &fx.initiator_keys,
            &mut fx.cluster,
            &mut fx.rng,
        )
        .unwrap();
        assert_eq!(result.block.subblocks[0].content.chain_prev_i, Digest::ZERO);
        fx.verify_and_append(result.block).unwrap();
    }

    #[test]
    fn failure_codes_are_stable() {
        assert_eq!(VerifyFailure::SignatureFail.code(), "signature-fail");
        assert_eq!(VerifyFailure::StorageFail.code(), "storage-fail");
        assert_eq!(VerifyFailure::MerkleFail.code(), "merkle-fail");
        assert_eq!(VerifyFailure::QualityFail.code(), "quality-fail");
        assert_eq!(VerifyFailure::ChainLinkFail.code(), "chain-link-fail");
    }

    #[test]
    fn transaction_signature_covers_frames() {
        let mut fx = MiningFixture::new(26, 1, 8, 32, 32);
        let mut tx = fx.txs.remove(0);
        assert!(tx.verify());
        let mut samples = tx.gop.frames[0].samples().to_vec();
        samples[0] ^= 1;
        tx.gop.frames[0] = crate::codec::Frame::new(32, 32, samples).unwrap();
        assert!(!tx.verify());
    }
}
