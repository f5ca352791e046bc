//! Post-run tamper experiments: mutate the storage fabric, then re-verify
//! the whole canonical chain against what the storage nodes currently
//! hold. Any change to stored ciphertext breaks the content address or
//! Merkle roots of its own subblock and, through the digest chain, taints
//! every later GOP of the same video.

use crate::engine::RunOutput;
use cstore::consensus::{gop_key, split_object};
use cstore::crypto::{hash, Digest};
use cstore::ledger::SubBlockContent;
use cstore::merkle::payload_tree;
use cstore::storage::{build_chunk_tree, StorageDirectory};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TamperError {
    #[error("no committed subblock holds address {0}")]
    AddressNotFound(Digest),
    #[error("video {video_id} gop {gop_index} is not on the canonical chain")]
    GopNotFound { video_id: u64, gop_index: u64 },
    #[error("storage node {0} is unknown")]
    UnknownNode(u64),
    #[error("raw GOP missing from the run archive")]
    ArchiveMiss,
    #[error("tamper failed: {0}")]
    Storage(#[from] cstore::storage::StorageError),
    #[error("re-encode failed: {0}")]
    Codec(#[from] cstore::codec::CodecError),
}

/// What to corrupt after the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TamperSpec {
    /// Leave everything intact (control experiment).
    None,
    /// Flip one byte of the stored object at `address`.
    FlipStoredByte { address: Digest, offset: u64 },
    /// Replace a committed GOP's stored object with a re-encoded variant
    /// of the same raw video, as a history-rewriting adversary would.
    ReplaceGop { video_id: u64, gop_index: u64 },
}

/// One flagged subblock with the check that caught it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub video_id: u64,
    pub gop_index: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DetectionReport {
    pub flags: Vec<Flag>,
    pub subblocks_checked: u64,
    pub clean: bool,
}

/// Canonical-order subblock contents on the observer chain.
fn committed_subblocks(output: &RunOutput) -> Vec<SubBlockContent> {
    let mut out = Vec::new();
    for bh in output.chain.canonical_chain() {
        let block = output.chain.get(&bh).expect("canonical block");
        for sb in &block.subblocks {
            out.push(sb.content.clone());
        }
    }
    out
}

fn find_by_address<'a>(
    subblocks: &'a [SubBlockContent],
    address: &Digest,
) -> Option<&'a SubBlockContent> {
    subblocks.iter().find(|c| c.storage.address == *address)
}

/// Applies the corruption to the run's storage fabric.
pub fn apply_tamper(output: &mut RunOutput, spec: &TamperSpec) -> Result<(), TamperError> {
    match spec {
        TamperSpec::None => Ok(()),
        TamperSpec::FlipStoredByte { address, offset } => {
            let subblocks = committed_subblocks(output);
            let c = find_by_address(&subblocks, address)
                .ok_or(TamperError::AddressNotFound(*address))?;
            let node = output
                .cluster
                .node_mut(c.storage.node_id)
                .ok_or(TamperError::UnknownNode(c.storage.node_id))?;
            node.corrupt_byte(address, *offset as usize)?;
            Ok(())
        }
        TamperSpec::ReplaceGop { video_id, gop_index } => {
            let subblocks = committed_subblocks(output);
            let c = subblocks
                .iter()
                .find(|c| c.video_id == *video_id && c.gop_index == *gop_index)
                .ok_or(TamperError::GopNotFound {
                    video_id: *video_id,
                    gop_index: *gop_index,
                })?
                .clone();
            let raw = output
                .archive
                .get(&(*video_id, *gop_index))
                .ok_or(TamperError::ArchiveMiss)?;
            // Re-encode at a different quantizer, keeping the embedded
            // chain header so the substitution is as plausible as possible.
            let quantizer = if c.codec.quantizer == 1 { 2 } else { 1 };
            let variant = cstore::codec::encode_gop(
                raw,
                quantizer,
                c.chain_prev_i,
                c.chain_prev_last_p,
            )?;
            let key = gop_key(&output.content_key, *video_id, *gop_index);
            let cts = cstore::consensus::encrypt_payloads(&variant, &key);
            let bytes = cstore::consensus::object_bytes(&cts).expect("object encodable");
            let node = output
                .cluster
                .node_mut(c.storage.node_id)
                .ok_or(TamperError::UnknownNode(c.storage.node_id))?;
            if !node.replace_object_silently(&c.storage.address, bytes) {
                return Err(TamperError::AddressNotFound(c.storage.address));
            }
            Ok(())
        }
    }
}

/// Walks the committed chain front to back, checking each subblock's
/// stored content against its on-chain commitments and threading the
/// digest chain through what storage currently holds. A broken video stays
/// flagged for every later GOP: custody cannot be re-established.
pub fn reverify(output: &RunOutput) -> DetectionReport {
    let restart = output.state.chain_restart_interval;
    let mut report = DetectionReport::default();
    // Per-video chain state: expected digests and whether custody broke.
    let mut expected: std::collections::HashMap<u64, (Digest, Digest)> =
        std::collections::HashMap::new();
    let mut broken: std::collections::HashSet<u64> = std::collections::HashSet::new();

    for c in committed_subblocks(output) {
        report.subblocks_checked += 1;
        let v = c.video_id;
        if broken.contains(&v) {
            report.flags.push(Flag {
                video_id: v,
                gop_index: c.gop_index,
                reason: "chain-link-fail".into(),
            });
            continue;
        }
        let is_restart = c.gop_index == 0
            || restart.map(|s| s > 0 && c.gop_index % s == 0).unwrap_or(false);
        let (exp_i, exp_p) = if is_restart {
            (Digest::ZERO, Digest::ZERO)
        } else {
            match expected.get(&v) {
                Some(&pair) => pair,
                None => {
                    // Predecessor content was unusable; custody is broken.
                    broken.insert(v);
                    report.flags.push(Flag {
                        video_id: v,
                        gop_index: c.gop_index,
                        reason: "chain-link-fail".into(),
                    });
                    continue;
                }
            }
        };
        if c.chain_prev_i != exp_i || c.chain_prev_last_p != exp_p {
            broken.insert(v);
            report.flags.push(Flag {
                video_id: v,
                gop_index: c.gop_index,
                reason: "chain-link-fail".into(),
            });
            continue;
        }

        // Storage consistency against the on-chain pointer.
        let fetched = output.cluster.fetch(c.storage.node_id, &c.storage.address);
        let Some(bytes) = fetched else {
            broken.insert(v);
            expected.remove(&v);
            report.flags.push(Flag {
                video_id: v,
                gop_index: c.gop_index,
                reason: "storage-fail".into(),
            });
            continue;
        };
        if hash(&bytes) != c.storage.address
            || bytes.len() as u64 != c.storage.object_len
            || build_chunk_tree(&bytes, c.storage.chunk_size).root() != c.storage.chunk_root
        {
            broken.insert(v);
            expected.remove(&v);
            report.flags.push(Flag {
                video_id: v,
                gop_index: c.gop_index,
                reason: "storage-fail".into(),
            });
            continue;
        }
        let Ok(cts) = split_object(&bytes) else {
            broken.insert(v);
            expected.remove(&v);
            report.flags.push(Flag {
                video_id: v,
                gop_index: c.gop_index,
                reason: "merkle-fail".into(),
            });
            continue;
        };
        let root_ok = payload_tree(cts.iter().map(|x| x.as_slice()))
            .map(|t| t.root() == c.gop_merkle_root)
            .unwrap_or(false);
        if !root_ok {
            broken.insert(v);
            expected.remove(&v);
            report.flags.push(Flag {
                video_id: v,
                gop_index: c.gop_index,
                reason: "merkle-fail".into(),
            });
            continue;
        }

        // Content is intact: thread the digest chain forward from the
        // decrypted payloads.
        let key = gop_key(&output.content_key, v, c.gop_index);
        let plaintexts: Vec<Vec<u8>> = cts
            .iter()
            .enumerate()
            .map(|(i, ct)| key.derive(b"frame", i as u64).decrypt(ct))
            .collect();
        let last = plaintexts.last().expect("at least one payload");
        expected.insert(v, (hash(&plaintexts[0]), hash(last)));
    }
    report.clean = report.flags.is_empty();
    report
}

/// Applies a tamper spec and reports what a full re-verification detects.
pub fn tamper_experiment(
    output: &mut RunOutput,
    spec: &TamperSpec,
) -> Result<DetectionReport, TamperError> {
    apply_tamper(output, spec)?;
    Ok(reverify(output))
}
