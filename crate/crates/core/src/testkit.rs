//! Reusable test fixtures: a single-miner network in a box. Not part of
//! the protocol surface; kept in the library so integration tests and the
//! simulator's test suites can share one setup.

use crate::codec::{generate_synthetic_video, Gop, SyntheticVideoConfig};
use crate::consensus::{
    branch_video_tips, mine, verify_block, GopTransaction, MinerContext, MiningParams,
    MiningResult, RewardTracker, VerifierState, VerifyFailure,
};
use crate::crypto::{hash, KeyPair, SymmetricKey};
use crate::ledger::{AppendOutcome, Block, Chain};
use crate::storage::StorageCluster;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::HashMap;

/// One miner, one initiator (video 0), a small storage cluster and a
/// verifier, all sharing deterministic keys derived from `seed`.
pub struct MiningFixture {
    pub rng: ChaCha20Rng,
    pub params: MiningParams,
    pub miner_id: u64,
    pub miner_keys: KeyPair,
    pub initiator_keys: HashMap<u64, KeyPair>,
    pub content_key: SymmetricKey,
    pub cluster: StorageCluster,
    pub chain: Chain,
    pub state: VerifierState,
    pub rewards: RewardTracker,
    pub gops: Vec<Gop>,
    pub txs: Vec<GopTransaction>,
    next_tx: usize,
}

fn seeded_keys(seed: u64, label: &[u8]) -> KeyPair {
    KeyPair::from_seed(hash(&[label, &seed.to_be_bytes()].concat()).0)
}

impl MiningFixture {
    pub fn new(seed: u64, n_gops: u32, gop_size: u32, width: u32, height: u32) -> MiningFixture {
        let params = MiningParams::default();
        let miner_keys = seeded_keys(seed, b"miner");
        let initiator = seeded_keys(seed, b"initiator");
        let content_key = SymmetricKey::from_digest(hash(&seed.to_be_bytes()));

        let cfg = SyntheticVideoConfig::new(width, height, n_gops, gop_size, seed);
        let gops = generate_synthetic_video(&cfg).expect("valid synthetic config");
        let txs: Vec<GopTransaction> = gops
            .iter()
            .map(|g| {
                GopTransaction::sign_new(0, g.clone(), b"cam-0".to_vec(), &initiator)
                    .expect("sign transaction")
            })
            .collect();

        let mut cluster = StorageCluster::new(0..3, 1 << 30);
        // Seed the miner with enough credits to place everything.
        cluster.credits.grant(100, 1 << 30);

        let mut state = VerifierState::new(params.threshold_db, content_key);
        state.challenge_k = params.challenge_k;
        for g in &gops {
            state.cache.insert(0, g.clone());
        }

        let chain = Chain::new(Block::genesis(0), params.b_max);
        let mut initiator_keys = HashMap::new();
        initiator_keys.insert(0u64, initiator);

        MiningFixture {
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0x6d69_6e65),
            params,
            miner_id: 100,
            miner_keys,
            initiator_keys,
            content_key,
            cluster,
            chain,
            state,
            rewards: RewardTracker::new(),
            gops,
            txs,
            next_tx: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.txs.len() - self.next_tx
    }

    /// Mines the next `count` pending transactions onto the canonical tip.
    pub fn mine_next(&mut self, count: usize) -> MiningResult {
        let tip = self.chain.fork_choice();
        let height = self.chain.get(&tip).expect("tip present").height + 1;
        let tips = branch_video_tips(&self.chain, tip, &self.state);
        let batch = &self.txs[self.next_tx..(self.next_tx + count).min(self.txs.len())];
        let ctx = MinerContext {
            miner_id: self.miner_id,
            miner_keys: &self.miner_keys,
            params: &self.params,
            content_key: self.content_key,
        };
        let result = mine(
            &ctx,
            batch,
            &tips,
            tip,
            height,
            height * 10_000,
            &self.initiator_keys,
            &mut self.cluster,
            &mut self.rng,
        )
        .expect("mining succeeds");
        self.next_tx += result.block.subblocks.len();
        result
    }

    /// Runs full consensus verification and, on success, appends the block
    /// and pays the miner reward.
    pub fn verify_and_append(&mut self, block: Block) -> Result<(), VerifyFailure> {
        verify_block(
            &mut self.state,
            &self.chain,
            &block,
            &self.cluster,
            &mut self.rng,
        )?;
        match self.chain.validate_and_append(block.clone()) {
            AppendOutcome::Appended { .. } | AppendOutcome::Duplicate => {}
            AppendOutcome::Orphaned => panic!("verified block orphaned"),
            AppendOutcome::Rejected(r) => return Err(VerifyFailure::Structural(r)),
        }
        self.rewards.reward(&mut self.cluster.credits, &block);
        Ok(())
    }

    /// Mines and commits until all transactions are on chain.
    pub fn run_to_completion(&mut self) {
        while self.remaining() > 0 {
            let take = self.remaining().min(self.params.b_max as usize);
            let result = self.mine_next(take);
            self.verify_and_append(result.block)
                .expect("honest block accepted");
        }
    }
}
