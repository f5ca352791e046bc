//! Deterministic discrete-event simulator. One process drives initiator,
//! miner, verifier and storage actors through a single event queue ordered
//! by (time, sequence number); every random draw comes from seeded,
//! purpose-split ChaCha20 streams, so a seed fully determines the run.

use crate::scenario::{Mode, Scenario};
use cstore::codec::{generate_synthetic_video, Gop, SyntheticVideoConfig};
use cstore::consensus::{
    branch_video_tips, mine, verify_block, GopTransaction, MinerContext, MiningParams,
    MiningResult, RewardTracker, VerifierState, VerifyFailure, VideoTip,
};
use cstore::crypto::{hash, Digest, KeyPair, SymmetricKey};
use cstore::encoding::CanonicalEncode;
use cstore::ledger::{AppendOutcome, Block, Chain};
use cstore::storage::{audit_round, CreditLedger, StorageCluster, StoragePlacement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error("video generation failed: {0}")]
    Video(#[from] cstore::codec::CodecError),
}

/// Aggregate run metrics; JSON via serde, CSV via [`Metrics::csv`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    /// Frames committed to the observer's canonical chain per second,
    /// measured after warm-up.
    pub committed_pps: f64,
    pub committed_frames_total: u64,
    pub committed_frames_after_warmup: u64,
    pub canonical_height: u64,
    pub fork_count: u64,
    pub orphaned_blocks: u64,
    pub bytes_broadcast: u64,
    pub raw_bytes: u64,
    pub stored_ciphertext_bytes: u64,
    pub compression_ratio: f64,
    pub blocks_mined: u64,
    pub blocks_discarded: u64,
    pub honest_rejections: u64,
    pub rejection_codes: Vec<String>,
    pub audit_failures: u64,
    pub per_node_credits: BTreeMap<u64, u64>,
    pub warnings: Vec<String>,
}

impl Metrics {
    /// Scalar fields as a two-line CSV document.
    pub fn csv(&self) -> String {
        format!(
            "committed_pps,committed_frames_total,committed_frames_after_warmup,\
             canonical_height,fork_count,orphaned_blocks,bytes_broadcast,raw_bytes,\
             stored_ciphertext_bytes,compression_ratio,blocks_mined,blocks_discarded,\
             honest_rejections,audit_failures\n\
             {},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.committed_pps,
            self.committed_frames_total,
            self.committed_frames_after_warmup,
            self.canonical_height,
            self.fork_count,
            self.orphaned_blocks,
            self.bytes_broadcast,
            self.raw_bytes,
            self.stored_ciphertext_bytes,
            self.compression_ratio,
            self.blocks_mined,
            self.blocks_discarded,
            self.honest_rejections,
            self.audit_failures,
        )
    }
}

/// Everything a completed run leaves behind: the observer's view plus the
/// shared storage fabric and the raw-GOP archive (kept for tamper and
/// audit experiments).
pub struct RunOutput {
    pub scenario: Scenario,
    pub metrics: Metrics,
    pub chain: Chain,
    pub state: VerifierState,
    pub cluster: StorageCluster,
    pub archive: BTreeMap<(u64, u64), Gop>,
    pub content_key: SymmetricKey,
}

const NS_PER_MS: u64 = 1_000_000;

#[derive(Debug)]
enum Ev {
    Feed { global_index: u64 },
    DeliverTx { node: usize, tx: usize },
    Wake { miner: usize },
    MineDone { miner: usize },
    DeliverBlock { node: usize, block: usize },
    Timer,
    AuditTick,
}

struct Queued {
    time: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Reversed so the BinaryHeap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct Job {
    prev: Digest,
    result: MiningResult,
}

struct NodeSim {
    chain: Chain,
    state: VerifierState,
    /// Miner-only: undispatched transactions keyed by (video, gop index),
    /// with arrival time for the age trigger.
    pending: BTreeMap<(u64, u64), (usize, u64)>,
    mining: Option<Job>,
    /// Blocks held until their parent or raw GOPs arrive.
    waiting: Vec<usize>,
}

enum Accept {
    Accepted,
    Hold,
    Rejected,
    Known,
}

struct Sim {
    scn: Scenario,
    params: MiningParams,
    now: u64,
    end_ns: u64,
    seq: u64,
    queue: BinaryHeap<Queued>,
    nodes: Vec<NodeSim>,
    miner_keys: Vec<KeyPair>,
    miner_rngs: Vec<ChaCha20Rng>,
    verify_rngs: Vec<ChaCha20Rng>,
    latency_rng: ChaCha20Rng,
    audit_rng: ChaCha20Rng,
    content_key: SymmetricKey,
    initiator_keys: HashMap<u64, KeyPair>,
    cluster: StorageCluster,
    rewards: RewardTracker,
    videos: Vec<Vec<Gop>>,
    txs: Vec<GopTransaction>,
    blocks: Vec<Block>,
    archive: BTreeMap<(u64, u64), Gop>,
    bytes_broadcast: u64,
    blocks_mined: u64,
    blocks_discarded: u64,
    honest_rejections: u64,
    rejection_codes: Vec<String>,
    audit_failures: u64,
    warnings: Vec<String>,
}

fn sub_rng(seed: u64, label: &[u8], index: u64) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(hash(&[label, &seed.to_be_bytes(), &index.to_be_bytes()].concat()).0)
}

impl Sim {
    fn new(scn: &Scenario) -> Result<Sim, SimError> {
        scn.validate()?;
        let n_miners = scn.n_miners as usize;
        let n_nodes = n_miners + scn.n_verifiers as usize;

        let params = MiningParams {
            b_max: scn.b_max,
            threshold_db: scn.threshold_db,
            chunk_size: scn.chunk_size,
            challenge_k: scn.challenge_k,
            ..MiningParams::default()
        };
        let content_key = SymmetricKey::from_digest(hash(
            &[b"content-key".as_slice(), &scn.seed.to_be_bytes()].concat(),
        ));

        let total_gops = (scn.duration_s * scn.feed_gops_per_s).ceil() as u64;
        let per_video = total_gops / scn.n_videos as u64 + 1;
        let mut videos = Vec::new();
        let mut initiator_keys = HashMap::new();
        for v in 0..scn.n_videos as u64 {
            let cfg = SyntheticVideoConfig::new(
                scn.frame_width,
                scn.frame_height,
                per_video as u32,
                scn.gop_size,
                scn.seed.wrapping_mul(31).wrapping_add(v),
            );
            videos.push(generate_synthetic_video(&cfg)?);
            initiator_keys.insert(v, KeyPair::from_seed(sub_rng(scn.seed, b"init", v).gen()));
        }

        let mut cluster = StorageCluster::new(
            (0..scn.n_storage_nodes as u64).map(|i| 1000 + i),
            scn.storage_capacity_bytes,
        );
        for m in 0..n_miners as u64 {
            cluster.credits.grant(m, scn.initial_miner_credits);
        }

        let genesis = Block::genesis(0);
        let nodes = (0..n_nodes)
            .map(|_| {
                let mut state = VerifierState::new(scn.threshold_db, content_key);
                state.challenge_k = scn.challenge_k;
                if scn.mode == Mode::Sharded {
                    state.chain_restart_interval = Some(scn.shard_span);
                }
                NodeSim {
                    chain: Chain::new(genesis.clone(), scn.b_max),
                    state,
                    pending: BTreeMap::new(),
                    mining: None,
                    waiting: Vec::new(),
                }
            })
            .collect();

        let mut warnings = Vec::new();
        let capacity = scn.n_miners as f64 / scn.work_per_gop_s().max(1e-12);
        if scn.mode != Mode::PrivateTrusted && scn.feed_gops_per_s > 10.0 * capacity {
            warnings.push(format!(
                "feed rate {} GOP/s exceeds 10x estimated mining capacity {:.3} GOP/s",
                scn.feed_gops_per_s, capacity
            ));
        }

        Ok(Sim {
            params,
            now: 0,
            end_ns: (scn.duration_s * 1e9) as u64,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes,
            miner_keys: (0..n_miners as u64)
                .map(|m| KeyPair::from_seed(sub_rng(scn.seed, b"miner", m).gen()))
                .collect(),
            miner_rngs: (0..n_miners as u64)
                .map(|m| sub_rng(scn.seed, b"mine-rng", m))
                .collect(),
            verify_rngs: (0..n_nodes as u64)
                .map(|i| sub_rng(scn.seed, b"verify-rng", i))
                .collect(),
            latency_rng: sub_rng(scn.seed, b"latency", 0),
            audit_rng: sub_rng(scn.seed, b"audit", 0),
            content_key,
            initiator_keys,
            cluster,
            rewards: RewardTracker::new(),
            videos,
            txs: Vec::new(),
            blocks: Vec::new(),
            archive: BTreeMap::new(),
            bytes_broadcast: 0,
            blocks_mined: 0,
            blocks_discarded: 0,
            honest_rejections: 0,
            rejection_codes: Vec::new(),
            audit_failures: 0,
            warnings,
            scn: scn.clone(),
        })
    }

    fn n_miners(&self) -> usize {
        self.scn.n_miners as usize
    }

    fn observer(&self) -> usize {
        self.n_miners()
    }

    fn schedule(&mut self, time: u64, ev: Ev) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Queued { time, seq, ev });
    }

    fn latency_ns(&mut self) -> u64 {
        let ms = self
            .latency_rng
            .gen_range(self.scn.latency_min_ms..=self.scn.latency_max_ms);
        (ms * NS_PER_MS as f64) as u64
    }

    fn interval_ns(&self) -> u64 {
        (self.scn.block_interval_s * 1e9) as u64
    }

    /// Sharded assignment: range `r` of video `v` belongs to one miner,
    /// chosen by hashing (epoch, video, range).
    fn shard_owner(&self, video: u64, gop_index: u64) -> usize {
        let r = gop_index / self.scn.shard_span;
        let h = hash(&[b"shard".as_slice(), &0u64.to_be_bytes(), &video.to_be_bytes(), &r.to_be_bytes()].concat());
        (u64::from_be_bytes(h.0[..8].try_into().unwrap()) % self.n_miners() as u64) as usize
    }

    fn run(mut self) -> RunOutput {
        // Seed the feed, timers and audits.
        let feed_interval = (1e9 / self.scn.feed_gops_per_s) as u64;
        let total_feeds = (self.end_ns / feed_interval.max(1)) + 1;
        for g in 0..total_feeds {
            let t = g * feed_interval;
            if t <= self.end_ns {
                self.schedule(t, Ev::Feed { global_index: g });
            }
        }
        if self.scn.mode == Mode::PrivateTrusted {
            self.schedule(self.interval_ns(), Ev::Timer);
        }
        if self.scn.audit_interval_s > 0.0 {
            self.schedule((self.scn.audit_interval_s * 1e9) as u64, Ev::AuditTick);
        }

        while let Some(q) = self.queue.pop() {
            if q.time > self.end_ns {
                break;
            }
            self.now = q.time;
            self.handle(q.ev);
        }
        self.finish()
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Feed { global_index } => self.feed(global_index),
            Ev::DeliverTx { node, tx } => self.deliver_tx(node, tx),
            Ev::Wake { miner } => self.try_start_mining(miner, false),
            Ev::MineDone { miner } => self.mine_done(miner),
            Ev::DeliverBlock { node, block } => {
                self.deliver_block(node, block);
                if node < self.n_miners() {
                    self.try_start_mining(node, false);
                }
            }
            Ev::Timer => {
                self.try_start_mining(0, true);
                let t = self.now + self.interval_ns();
                self.schedule(t, Ev::Timer);
            }
            Ev::AuditTick => {
                self.audit();
                let t = self.now + (self.scn.audit_interval_s * 1e9) as u64;
                self.schedule(t, Ev::AuditTick);
            }
        }
    }

    fn feed(&mut self, global_index: u64) {
        let video = global_index % self.scn.n_videos as u64;
        let idx = (global_index / self.scn.n_videos as u64) as usize;
        let Some(gop) = self.videos[video as usize].get(idx) else {
            return;
        };
        let gop = gop.clone();
        self.archive.insert((video, gop.index), gop.clone());
        let tx = GopTransaction::sign_new(
            video,
            gop,
            format!("cam-{video}").into_bytes(),
            &self.initiator_keys[&video],
        )
        .expect("transaction encodable");
        let wire_size = if self.scn.broadcast_locations_only {
            tx.locator_size()
        } else {
            tx.broadcast_size()
        };
        let tx_id = self.txs.len();
        self.txs.push(tx);
        for node in 0..self.nodes.len() {
            let delay = self.latency_ns();
            self.bytes_broadcast += wire_size;
            self.schedule(self.now + delay, Ev::DeliverTx { node, tx: tx_id });
        }
    }

    fn deliver_tx(&mut self, node: usize, tx_id: usize) {
        let tx = &self.txs[tx_id];
        let (video, idx) = (tx.video_id, tx.gop_index());
        let gop = tx.gop.clone();
        let is_miner = node < self.n_miners();
        let mine_it = is_miner
            && match self.scn.mode {
                Mode::PublicPows => true,
                Mode::PrivateTrusted => node == 0,
                Mode::Sharded => self.shard_owner(video, idx) == node,
            };
        let n = &mut self.nodes[node];
        n.state.cache.insert(video, gop);
        if mine_it {
            n.pending.insert((video, idx), (tx_id, self.now));
        }
        self.pump(node);
        if mine_it && self.scn.mode != Mode::PrivateTrusted {
            self.try_start_mining(node, false);
            let t = self.now + self.interval_ns();
            self.schedule(t, Ev::Wake { miner: node });
        }
    }

    /// The next batch this miner could mine on its canonical tip, plus the
    /// video tips (with sharded range-start overrides) to mine against.
    fn eligible_batch(
        &self,
        m: usize,
    ) -> (Vec<GopTransaction>, HashMap<u64, VideoTip>, u64) {
        let node = &self.nodes[m];
        let tip_hash = node.chain.fork_choice();
        let mut tips = branch_video_tips(&node.chain, tip_hash, &node.state);
        let mut batch: Vec<GopTransaction> = Vec::new();
        let mut oldest = u64::MAX;
        let b_max = self.scn.b_max as usize;

        if self.scn.mode == Mode::Sharded {
            let span = self.scn.shard_span;
            // One contiguous range per block; ranges may commit out of
            // order across miners, so eligibility keys off the verified
            // records rather than the newest branch tip.
            for (&(v, i), &(tx_id, arrived)) in &node.pending {
                if let Some(last) = batch.last() {
                    let (bv, bi) = (last.video_id, last.gop_index());
                    if v == bv && i == bi + 1 && i / span == bi / span && batch.len() < b_max {
                        batch.push(self.txs[tx_id].clone());
                        oldest = oldest.min(arrived);
                        continue;
                    }
                    break;
                }
                if node.state.verified.contains_key(&(v, i)) {
                    continue;
                }
                if i % span == 0 {
                    // Fresh range: the digest chain restarts here.
                    tips.insert(
                        v,
                        VideoTip {
                            next_gop_index: i,
                            prev_i: Digest::ZERO,
                            prev_last_p: Digest::ZERO,
                        },
                    );
                    batch.push(self.txs[tx_id].clone());
                    oldest = arrived;
                } else if let Some(rec) = node.state.verified.get(&(v, i - 1)) {
                    // Mid-range continuation of an already committed prefix.
                    tips.insert(
                        v,
                        VideoTip {
                            next_gop_index: i,
                            prev_i: rec.i_digest,
                            prev_last_p: rec.last_p_digest,
                        },
                    );
                    batch.push(self.txs[tx_id].clone());
                    oldest = arrived;
                }
            }
        } else {
            let mut next_by_video: HashMap<u64, u64> = HashMap::new();
            for (&(v, i), &(tx_id, arrived)) in &node.pending {
                if batch.len() >= b_max {
                    break;
                }
                let next = next_by_video
                    .get(&v)
                    .copied()
                    .unwrap_or_else(|| tips.get(&v).map(|t| t.next_gop_index).unwrap_or(0));
                if i == next {
                    batch.push(self.txs[tx_id].clone());
                    oldest = oldest.min(arrived);
                    next_by_video.insert(v, i + 1);
                }
            }
        }
        (batch, tips, oldest)
    }

    fn try_start_mining(&mut self, m: usize, force: bool) {
        if self.nodes[m].mining.is_some() {
            return;
        }
        if self.scn.mode == Mode::PrivateTrusted && m != 0 {
            return;
        }
        let (batch, tips, oldest) = self.eligible_batch(m);
        if batch.is_empty() {
            return;
        }
        let full = match self.scn.mode {
            Mode::Sharded => batch.len() as u64 >= self.scn.shard_span.min(self.scn.b_max as u64),
            _ => batch.len() >= self.scn.b_max as usize,
        };
        let aged = self.now.saturating_sub(oldest) >= self.interval_ns();
        if !(force || full || aged) {
            return;
        }

        let node = &self.nodes[m];
        let prev = node.chain.fork_choice();
        let height = node.chain.get(&prev).expect("tip present").height + 1;
        let ctx = MinerContext {
            miner_id: m as u64,
            miner_keys: &self.miner_keys[m],
            params: &self.params,
            content_key: self.content_key,
        };
        let result = match mine(
            &ctx,
            &batch,
            &tips,
            prev,
            height,
            self.now / NS_PER_MS,
            &self.initiator_keys,
            &mut self.cluster,
            &mut self.miner_rngs[m],
        ) {
            Ok(r) => r,
            Err(e) => {
                self.warnings.push(format!("miner {m} could not mine: {e}"));
                return;
            }
        };

        let work_ns = if self.scn.mode == Mode::PrivateTrusted {
            0
        } else {
            let base = self.scn.work_alpha_ns_per_pixel * result.raw_bytes as f64
                + self.scn.work_beta_ns_per_step * result.work_steps as f64;
            let j = self.scn.work_jitter;
            let factor = if j > 0.0 {
                self.miner_rngs[m].gen_range(1.0 - j..=1.0 + j)
            } else {
                1.0
            };
            (base * factor) as u64
        };
        self.nodes[m].mining = Some(Job { prev, result });
        let t = self.now + work_ns;
        self.schedule(t, Ev::MineDone { miner: m });
    }

    /// Sharded mode: a block whose GOP range is still uncommitted on the
    /// new canonical tip can be re-minted there without redoing the work.
    fn rebase(&self, m: usize, job: &Job, tip: Digest) -> Option<Block> {
        if self.scn.mode != Mode::Sharded {
            return None;
        }
        let node = &self.nodes[m];
        let committed = cstore::consensus::branch_committed(&node.chain, tip);
        let gops = &job.result.gops;
        if gops
            .iter()
            .any(|g| committed.contains(&(g.video_id, g.gop_index)))
        {
            return None;
        }
        let first = gops.first()?;
        let continues = first.gop_index % self.scn.shard_span == 0
            || committed.contains(&(first.video_id, first.gop_index - 1));
        if !continues {
            return None;
        }
        let template = &job.result.block;
        let height = node.chain.get(&tip)?.height + 1;
        cstore::ledger::assemble_block(
            template.subblocks.clone(),
            tip,
            height,
            self.now / NS_PER_MS,
            template.storage_proof_refs.clone(),
            m as u64,
            &self.miner_keys[m],
            self.scn.b_max,
        )
        .ok()
    }

    fn mine_done(&mut self, m: usize) {
        let Some(job) = self.nodes[m].mining.take() else {
            return;
        };
        let tip = self.nodes[m].chain.fork_choice();
        let block = if tip == job.prev {
            job.result.block
        } else if let Some(rebased) = self.rebase(m, &job, tip) {
            // Sharded mode: the compression work is still valid on the new
            // tip; only the block envelope needs re-minting.
            rebased
        } else {
            // Lost the race while working: withdraw placements.
            for g in &job.result.gops {
                self.cluster.rollback(m as u64, &g.receipt);
            }
            self.blocks_discarded += 1;
            self.try_start_mining(m, false);
            return;
        };
        self.blocks_mined += 1;
        let size = block.canonical_bytes().expect("block encodable").len() as u64;
        let block_id = self.blocks.len();
        self.blocks.push(block);
        for node in 0..self.nodes.len() {
            if node == m {
                continue;
            }
            let delay = self.latency_ns();
            self.bytes_broadcast += size;
            self.schedule(self.now + delay, Ev::DeliverBlock { node, block: block_id });
        }
        self.deliver_block(m, block_id);
        self.try_start_mining(m, false);
    }

    fn deliver_block(&mut self, node: usize, block_id: usize) {
        match self.try_accept(node, block_id) {
            Accept::Hold => self.nodes[node].waiting.push(block_id),
            Accept::Accepted => self.pump(node),
            Accept::Rejected | Accept::Known => {}
        }
    }

    fn try_accept(&mut self, i: usize, block_id: usize) -> Accept {
        let block = self.blocks[block_id].clone();
        let n = &mut self.nodes[i];
        if n.chain.contains(&block.hash()) {
            return Accept::Known;
        }
        if !n.chain.contains(&block.prev_block_hash) {
            return Accept::Hold;
        }
        match verify_block(
            &mut n.state,
            &n.chain,
            &block,
            &self.cluster,
            &mut self.verify_rngs[i],
        ) {
            Ok(()) => {}
            Err(VerifyFailure::MissingRawGop { .. }) => return Accept::Hold,
            Err(e) => {
                self.honest_rejections += 1;
                self.rejection_codes.push(e.code().to_string());
                return Accept::Rejected;
            }
        }
        match n.chain.validate_and_append(block.clone()) {
            AppendOutcome::Appended { .. } | AppendOutcome::Duplicate => {}
            AppendOutcome::Orphaned | AppendOutcome::Rejected(_) => {
                self.honest_rejections += 1;
                self.rejection_codes.push("structural".to_string());
                return Accept::Rejected;
            }
        }
        // Drop pending work the chain now covers.
        let verified = &n.state.verified;
        n.pending.retain(|key, _| !verified.contains_key(key));
        self.rewards.reward(&mut self.cluster.credits, &block);
        Accept::Accepted
    }

    /// Re-attempts held blocks until no further progress.
    fn pump(&mut self, i: usize) {
        loop {
            let waiting = std::mem::take(&mut self.nodes[i].waiting);
            if waiting.is_empty() {
                return;
            }
            let mut progress = false;
            let mut still = Vec::new();
            for bid in waiting {
                match self.try_accept(i, bid) {
                    Accept::Accepted => progress = true,
                    Accept::Hold => still.push(bid),
                    Accept::Rejected | Accept::Known => {}
                }
            }
            self.nodes[i].waiting = still;
            if !progress {
                return;
            }
        }
    }

    fn audit(&mut self) {
        let mut credits = std::mem::replace(&mut self.cluster.credits, CreditLedger::new());
        let report = audit_round(
            &self.nodes[self.observer()].chain,
            &self.cluster,
            &mut credits,
            &mut self.audit_rng,
            self.scn.audit_sample_count as usize,
            self.scn.challenge_k,
        );
        self.cluster.credits = credits;
        self.audit_failures += report.failures as u64;
    }

    fn finish(mut self) -> RunOutput {
        let obs = self.observer();
        let chain = self.nodes[obs].chain.clone();
        let warmup_ms = (self.scn.warmup_s * 1000.0) as u64;

        let mut frames_total = 0u64;
        let mut frames_window = 0u64;
        let mut raw_bytes = 0u64;
        let mut ct_bytes = 0u64;
        for bh in chain.canonical_chain() {
            let block = chain.get(&bh).expect("canonical block");
            if block.is_genesis() {
                continue;
            }
            for sb in &block.subblocks {
                let frames = sb.content.codec.frame_count as u64;
                frames_total += frames;
                if block.timestamp_ms >= warmup_ms {
                    frames_window += frames;
                }
                raw_bytes += frames
                    * sb.content.codec.width as u64
                    * sb.content.codec.height as u64;
                ct_bytes += sb.content.storage.object_len;
            }
        }
        let window_s = self.scn.duration_s - self.scn.warmup_s;
        let mut heights: BTreeMap<u64, u64> = BTreeMap::new();
        for block in chain.all_blocks() {
            if !block.is_genesis() {
                *heights.entry(block.height).or_insert(0) += 1;
            }
        }
        let fork_count = heights.values().filter(|&&c| c > 1).count() as u64;
        let per_node_credits: BTreeMap<u64, u64> = self.cluster.credits.balances().collect();

        self.rejection_codes.sort();
        let metrics = Metrics {
            committed_pps: frames_window as f64 / window_s,
            committed_frames_total: frames_total,
            committed_frames_after_warmup: frames_window,
            canonical_height: chain.canonical_height(),
            fork_count,
            orphaned_blocks: chain.orphaned_block_count() as u64,
            bytes_broadcast: self.bytes_broadcast,
            raw_bytes,
            stored_ciphertext_bytes: ct_bytes,
            compression_ratio: if ct_bytes > 0 {
                raw_bytes as f64 / ct_bytes as f64
            } else {
                0.0
            },
            blocks_mined: self.blocks_mined,
            blocks_discarded: self.blocks_discarded,
            honest_rejections: self.honest_rejections,
            rejection_codes: self.rejection_codes,
            audit_failures: self.audit_failures,
            per_node_credits,
            warnings: self.warnings,
        };
        let state = self.nodes.swap_remove(obs).state;
        RunOutput {
            scenario: self.scn,
            metrics,
            chain,
            state,
            cluster: self.cluster,
            archive: self.archive,
            content_key: self.content_key,
        }
    }
}

/// Runs a scenario to completion. Deterministic: the same scenario
/// (including its seed) always yields identical metrics and chains.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    Ok(Sim::new(scenario)?.run())
}
