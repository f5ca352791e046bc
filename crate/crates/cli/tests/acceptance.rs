//! Acceptance suite: one test per release criterion, each printing a
//! single `criterion N (<name>): pass` line when it holds. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use cstore::codec::{decode_gop, encode_gop, generate_synthetic_video, SyntheticVideoConfig};
use cstore::crypto::{hash, Digest};
use cstore::ledger::{assemble_block, Block, SubBlock};
use cstore::merkle::MerkleTree;
use cstore::storage::{make_challenge, verify_storage_proof, StorageNode};
use cstore::testkit::MiningFixture;
use cstore_sim::tamper::{tamper_experiment, TamperSpec};
use cstore_sim::{run, theoretical_pps, Mode, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cstore"))
}

/// A quick public-mode deployment: three racing miners, real latency.
fn small_scenario(seed: u64) -> Scenario {
    Scenario {
        mode: Mode::PublicPows,
        n_miners: 3,
        duration_s: 90.0,
        warmup_s: 10.0,
        gop_size: 6,
        frame_width: 32,
        frame_height: 32,
        feed_gops_per_s: 1.0,
        block_interval_s: 5.0,
        seed,
        ..Scenario::default()
    }
}

#[test]
fn criterion_1_throughput_anchor() {
    assert_eq!(theoretical_pps(25, 5, 10.0).unwrap(), 12.5);
    let out = bin()
        .args(["pps", "--gop", "25", "--gops-per-block", "5", "--interval", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "12.5");

    // Default scenario: those parameters, ample capacity, 600 simulated
    // seconds of measurement after a 60 s warm-up.
    let scenario = Scenario::default();
    assert_eq!(scenario.gop_size, 25);
    assert_eq!(scenario.b_max, 5);
    assert_eq!(scenario.block_interval_s, 10.0);
    assert_eq!(scenario.duration_s - scenario.warmup_s, 600.0);
    let started = std::time::Instant::now();
    let output = run(&scenario).unwrap();
    let wall = started.elapsed();
    let pps = output.metrics.committed_pps;
    assert!((11.25..=13.75).contains(&pps), "committed_pps={pps}");
    assert!(wall.as_secs() < 60, "took {wall:?}");
    println!("criterion 1 (throughput anchor): pass (committed_pps={pps}, wall={wall:?})");
}

#[test]
fn criterion_2_mining_and_verification() {
    // Completeness: across seeds, no honest block is ever rejected.
    for seed in 0..100u64 {
        let metrics = run(&small_scenario(seed)).unwrap().metrics;
        assert_eq!(
            metrics.honest_rejections, 0,
            "seed {seed} rejected honest blocks: {:?}",
            metrics.rejection_codes
        );
        assert!(metrics.committed_frames_total > 0, "seed {seed} committed nothing");
    }

    // Soundness: every generated corruption is rejected with the right code.
    let kinds = 9;
    let rounds = 25;
    let mut checked = 0;
    for round in 0..rounds {
        for kind in 0..kinds {
            let seed = 1000 + round * kinds + kind;
            let mut fx = MiningFixture::new(seed, 2, 5, 16, 16);
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xc0de);
            let result = fx.mine_next(2);
            let victim = rng.gen_range(0..result.gops.len());
            let receipt = result.gops[victim].receipt.clone();
            let object_len = result.gops[victim].object.len();
            let (block, expected) = match kind {
                // Stored payload bytes and storage contents.
                0 => {
                    let node = fx.cluster.node_mut(receipt.node_id).unwrap();
                    node.corrupt_byte(&receipt.address, rng.gen_range(0..object_len)).unwrap();
                    (result.block.clone(), "storage-fail")
                }
                1 => {
                    let garbage: Vec<u8> = (0..rng.gen_range(1..64)).map(|_| rng.gen()).collect();
                    let node = fx.cluster.node_mut(receipt.node_id).unwrap();
                    assert!(node.replace_object_silently(&receipt.address, garbage));
                    (result.block.clone(), "storage-fail")
                }
                2 => {
                    let node = fx.cluster.node_mut(receipt.node_id).unwrap();
                    assert!(node.delete_object_silently(&receipt.address));
                    (result.block.clone(), "storage-fail")
                }
                // Subblock fields: the adversary edits, countersigns where
                // it can (it holds no initiator key for kind 6), and
                // re-mints the block with a fresh miner signature.
                3 => {
                    let root = Digest(rng.gen());
                    let b = remint(&fx, &result.block, victim, true, |sb| {
                        sb.content.gop_merkle_root = root;
                    });
                    (b, "merkle-fail")
                }
                4 => {
                    let digest = Digest(rng.gen());
                    let b = remint(&fx, &result.block, victim, true, |sb| {
                        sb.content.chain_prev_i = digest;
                    });
                    (b, "chain-link-fail")
                }
                5 => {
                    let digest = Digest(rng.gen());
                    let b = remint(&fx, &result.block, victim, true, |sb| {
                        sb.content.chain_prev_last_p = digest;
                    });
                    (b, "chain-link-fail")
                }
                6 => {
                    let b = remint(&fx, &result.block, victim, false, |sb| {
                        sb.content.sensor_metadata = b"forged".to_vec();
                    });
                    (b, "signature-fail")
                }
                // Reported quality: inflated, or off by a single bit.
                7 => {
                    let bump = rng.gen_range(0.5..20.0);
                    let b = remint(&fx, &result.block, victim, true, |sb| {
                        sb.content.quality.mean_psnr_db += bump;
                    });
                    (b, "quality-fail")
                }
                8 => {
                    let b = remint(&fx, &result.block, victim, true, |sb| {
                        let bits = sb.content.quality.mean_psnr_db.to_bits();
                        sb.content.quality.mean_psnr_db = f64::from_bits(bits ^ 1);
                    });
                    (b, "quality-fail")
                }
                _ => unreachable!(),
            };
            let got = fx.verify_and_append(block).unwrap_err();
            assert_eq!(got.code(), expected, "seed {seed} kind {kind}");
            checked += 1;
        }
    }
    assert!(checked >= 200);
    println!("criterion 2 (mining/verification): pass ({checked} corruptions, 100 clean runs)");
}

/// Applies `f` to subblock `victim` of a copy of `block`, countersigns with
/// the initiator key when the adversary is assumed to hold it, and
/// reassembles the block as a dishonest miner would.
fn remint(
    fx: &MiningFixture,
    block: &Block,
    victim: usize,
    initiator_signs: bool,
    f: impl FnOnce(&mut SubBlock),
) -> Block {
    let mut subblocks = block.subblocks.clone();
    f(&mut subblocks[victim]);
    if !initiator_signs {
        // Without the initiator key the forged subblock cannot carry a
        // valid countersignature, so assembly is bypassed.
        let mut forged = block.clone();
        forged.subblocks = subblocks;
        forged.resign(&fx.miner_keys);
        return forged;
    }
    subblocks[victim].resign(&fx.initiator_keys[&0]);
    assemble_block(
        subblocks,
        block.prev_block_hash,
        block.height,
        block.timestamp_ms,
        block.storage_proof_refs.clone(),
        block.miner_id,
        &fx.miner_keys,
        fx.params.b_max,
    )
    .expect("reassembly")
}

#[test]
fn criterion_3_storage_proof_detection() {
    // n=10 chunks, m=2 deleted, k=3 challenged: the combinatorial pass
    // rate is C(8,3)/C(10,3) = 7/15.
    let chunk_size = 64u32;
    let n = 10u32;
    let bytes: Vec<u8> = (0..(n * chunk_size) as usize).map(|i| (i * 31) as u8).collect();
    let mut node = StorageNode::new(1, 1 << 20);
    let (address, _) = node.store(&bytes, chunk_size).unwrap();
    node.delete_chunks(&address, &[2, 7]).unwrap();
    let chunk_root = node.object(&address).unwrap().chunk_root();

    let trials = 100_000u32;
    let mut rng = ChaCha20Rng::seed_from_u64(33);
    let mut passes = 0u32;
    for _ in 0..trials {
        let challenge = make_challenge(address, n, 3, &mut rng).unwrap();
        if let Ok(proof) = node.respond(&challenge) {
            if verify_storage_proof(chunk_root, &challenge, &proof) {
                passes += 1;
            }
        }
    }
    let rate = passes as f64 / trials as f64;
    let oracle = 7.0 / 15.0;
    assert!((rate - oracle).abs() <= 0.02, "rate={rate} oracle={oracle}");

    // k=16 bound: per-round detection of any cheat deleting >= 5% of a
    // >= 64-chunk object is at least 0.55.
    let mut worst: f64 = 1.0;
    for n in [64u64, 100, 128, 256, 1024, 4096] {
        for permille in [50u64, 100, 200, 500] {
            let m = (n * permille).div_ceil(1000);
            let mut pass = 1.0;
            for i in 0..16u64 {
                pass *= (n - m - i) as f64 / (n - i) as f64;
            }
            worst = worst.min(1.0 - pass);
        }
    }
    assert!(worst >= 0.55, "worst detection {worst}");
    println!(
        "criterion 3 (storage-proof detection): pass (rate={rate:.4} vs {oracle:.4}, k=16 worst={worst:.3})"
    );
}

#[test]
fn criterion_4_tamper_propagation() {
    let scenario = Scenario {
        n_miners: 1,
        latency_min_ms: 0.0,
        latency_max_ms: 0.0,
        ..small_scenario(77)
    };

    // Zero false flags on an untampered run.
    let mut clean = run(&scenario).unwrap();
    let report = tamper_experiment(&mut clean, &TamperSpec::None).unwrap();
    assert!(report.clean, "false flags: {:?}", report.flags);
    assert!(report.subblocks_checked > 10);

    // Collect the committed subblocks once to pick targets.
    let targets: Vec<(u64, u64, Digest, usize)> = {
        let out = run(&scenario).unwrap();
        let mut v = Vec::new();
        for bh in out.chain.canonical_chain() {
            for sb in &out.chain.get(&bh).unwrap().subblocks {
                v.push((
                    sb.content.video_id,
                    sb.content.gop_index,
                    sb.content.storage.address,
                    sb.content.storage.object_len as usize,
                ));
            }
        }
        v
    };
    assert!(targets.len() >= 3);

    // Flipping one ciphertext byte flags exactly that subblock first.
    let picks = [0, targets.len() / 2, targets.len() - 1];
    for (i, &t) in picks.iter().enumerate() {
        let (video_id, gop_index, address, object_len) = targets[t];
        let mut out = run(&scenario).unwrap();
        let offset = (i * 1237) as u64 % object_len as u64;
        let spec = TamperSpec::FlipStoredByte { address, offset };
        let report = tamper_experiment(&mut out, &spec).unwrap();
        let first = report.flags.first().expect("flip detected");
        assert_eq!((first.video_id, first.gop_index), (video_id, gop_index));
        assert_eq!(first.reason, "storage-fail");
        // No flag on any earlier GOP of the same video.
        assert!(report
            .flags
            .iter()
            .all(|f| f.video_id != video_id || f.gop_index >= gop_index));
    }

    // Replacing a historical GOP taints every later GOP of its video.
    let (video_id, gop_index, ..) = targets[1];
    let mut out = run(&scenario).unwrap();
    let spec = TamperSpec::ReplaceGop { video_id, gop_index };
    let report = tamper_experiment(&mut out, &spec).unwrap();
    let later: Vec<u64> = targets
        .iter()
        .filter(|t| t.0 == video_id && t.1 > gop_index)
        .map(|t| t.1)
        .collect();
    assert!(!later.is_empty());
    for g in later {
        assert!(
            report
                .flags
                .iter()
                .any(|f| f.video_id == video_id && f.gop_index == g),
            "gop {g} not tainted"
        );
    }
    assert!(report
        .flags
        .iter()
        .all(|f| f.video_id != video_id || f.gop_index >= gop_index));
    println!("criterion 4 (tamper propagation): pass");
}

#[test]
fn criterion_5_codec_properties() {
    // Lossless round-trip at quantizer 1 across 1000 generated GOPs.
    let mut checked = 0;
    for seed in 0..10u64 {
        let cfg = SyntheticVideoConfig::new(32, 32, 100, 5, seed);
        for gop in generate_synthetic_video(&cfg).unwrap() {
            let c = encode_gop(&gop, 1, Digest::ZERO, Digest::ZERO).unwrap();
            let decoded = decode_gop(&c).unwrap();
            for (d, o) in decoded.iter().zip(&gop.frames) {
                assert_eq!(d.samples(), o.samples());
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 1000);

    // Golden GOP: 64x64, 25 frames, seed 7, quantizer 8. The quality and
    // size values were frozen from a one-off sweep and must not drift.
    let cfg = SyntheticVideoConfig::new(64, 64, 1, 25, 7);
    let gop = generate_synthetic_video(&cfg).unwrap().remove(0);
    let c = encode_gop(&gop, 8, Digest::ZERO, Digest::ZERO).unwrap();
    let quality = cstore::codec::quality_of(&gop, &c, 30.0).unwrap();
    assert_eq!(quality.mean_psnr_db.to_bits(), 0x40447da72aad4e33);
    assert!(quality.mean_psnr_db >= 30.0);
    assert_eq!(c.encoded_size(), 59146);
    assert_eq!(c.raw_size(), 102_400);
    let ratio = c.raw_size() as f64 / c.encoded_size() as f64;
    assert!(ratio > 1.0);
    println!(
        "criterion 5 (codec): pass (1000 lossless GOPs; golden psnr={:.2} dB ratio={ratio:.3})",
        quality.mean_psnr_db
    );
}

/// Independent reference builder: recursive halving with odd-tail
/// duplication, sharing no code with `MerkleTree`.
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

/// Reference proof: recompute every level and collect the sibling hashes.
fn reference_proof(leaves: &[Digest], index: usize) -> Vec<[u8; 32]> {
    let mut siblings = Vec::new();
    let mut level = leaves.to_vec();
    let mut idx = index;
    while level.len() > 1 {
        let sib = if idx % 2 == 0 {
            *level.get(idx + 1).unwrap_or(&level[idx])
        } else {
            level[idx - 1]
        };
        siblings.push(sib.0);
        let mut next = Vec::new();
        for pair in level.chunks(2) {
            let right = pair.get(1).unwrap_or(&pair[0]);
            let mut buf = Vec::with_capacity(64);
            buf.extend_from_slice(&pair[0].0);
            buf.extend_from_slice(&right.0);
            next.push(hash(&buf));
        }
        level = next;
        idx /= 2;
    }
    siblings
}

#[test]
fn criterion_6_merkle_oracle_equivalence() {
    for n in 1..=33usize {
        let leaves: Vec<Digest> = (0..n)
            .map(|i| hash(&[b"leaf" as &[u8], &(i as u64).to_be_bytes()].concat()))
            .collect();
        let tree = MerkleTree::build(leaves.clone()).unwrap();
        assert_eq!(tree.root().0, reference_root(&leaves).0, "root n={n}");
        for i in 0..n {
            let proof = tree.prove(i).unwrap();
            let reference: Vec<[u8; 32]> = reference_proof(&leaves, i);
            let ours: Vec<[u8; 32]> = proof.siblings.iter().map(|(d, _)| d.0).collect();
            assert_eq!(ours, reference, "proof n={n} i={i}");
        }
    }
    println!("criterion 6 (merkle oracle equivalence): pass");
}

#[test]
fn criterion_7_determinism() {
    let dir = std::env::temp_dir().join(format!("cstore-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let scenario_path = dir.join("scenario.json");
    std::fs::write(
        &scenario_path,
        serde_json::to_string(&small_scenario(1)).unwrap(),
    )
    .unwrap();

    let mut dumps = Vec::new();
    for attempt in 0..2 {
        let out_dir = dir.join(format!("out{attempt}"));
        let status = bin()
            .arg("run")
            .arg("--scenario")
            .arg(&scenario_path)
            .args(["--seed", "9"])
            .arg("--out")
            .arg(&out_dir)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
        dumps.push((
            std::fs::read(out_dir.join("metrics.json")).unwrap(),
            std::fs::read(out_dir.join("metrics.csv")).unwrap(),
            std::fs::read(out_dir.join("chain.bin")).unwrap(),
        ));
    }
    assert_eq!(dumps[0].0, dumps[1].0, "metrics.json differs");
    assert_eq!(dumps[0].1, dumps[1].1, "metrics.csv differs");
    assert_eq!(dumps[0].2, dumps[1].2, "chain.bin differs");
    std::fs::remove_dir_all(&dir).ok();
    println!("criterion 7 (determinism): pass");
}

#[test]
fn criterion_8_fork_trend() {
    // Work-time jitter is multiplicative and symmetric, so raising it
    // raises the variance at a fixed mean. More variance must not mean
    // more forks on average.
    let mean_forks = |jitter: f64| -> f64 {
        let mut total = 0u64;
        for seed in 0..30u64 {
            let scenario = Scenario {
                work_jitter: jitter,
                ..small_scenario(5000 + seed)
            };
            total += run(&scenario).unwrap().metrics.fork_count;
        }
        total as f64 / 30.0
    };
    let low = mean_forks(0.02);
    let high = mean_forks(0.45);
    assert!(
        high <= low,
        "mean forks rose with variance: low-jitter {low} vs high-jitter {high}"
    );
    println!("criterion 8 (fork trend): pass (mean forks {low:.2} -> {high:.2})");
}
