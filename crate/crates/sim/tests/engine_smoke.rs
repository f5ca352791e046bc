use cstore_sim::{run, Mode, Scenario};

fn small() -> Scenario {
    Scenario {
        duration_s: 120.0,
        warmup_s: 20.0,
        gop_size: 8,
        frame_width: 32,
        frame_height: 32,
        feed_gops_per_s: 1.0,
        block_interval_s: 5.0,
        b_max: 5,
        n_miners: 3,
        seed: 42,
        ..Scenario::default()
    }
}

#[test]
fn public_run_commits_frames_without_rejections() {
    let out = run(&small()).unwrap();
    let m = &out.metrics;
    assert_eq!(m.honest_rejections, 0, "codes: {:?}", m.rejection_codes);
    assert!(m.committed_frames_total > 0);
    assert!(m.stored_ciphertext_bytes <= m.raw_bytes);
    assert!(m.compression_ratio > 1.0);
    assert!(m.bytes_broadcast > 0);
}

#[test]
fn identical_seeds_reproduce_metrics_and_chain() {
    let a = run(&small()).unwrap();
    let b = run(&small()).unwrap();
    assert_eq!(
        serde_json::to_string(&a.metrics).unwrap(),
        serde_json::to_string(&b.metrics).unwrap()
    );
    assert_eq!(a.chain.dump().unwrap(), b.chain.dump().unwrap());

    let mut other = small();
    other.seed = 43;
    let c = run(&other).unwrap();
    assert_ne!(a.chain.dump().unwrap(), c.chain.dump().unwrap());
}

#[test]
fn zero_latency_single_miner_never_forks() {
    let scn = Scenario {
        n_miners: 1,
        latency_min_ms: 0.0,
        latency_max_ms: 0.0,
        ..small()
    };
    let out = run(&scn).unwrap();
    assert_eq!(out.metrics.fork_count, 0);
    assert_eq!(out.metrics.orphaned_blocks, 0);
    assert_eq!(out.metrics.honest_rejections, 0);
}

#[test]
fn private_trusted_appends_on_timer_without_forks() {
    let scn = Scenario {
        mode: Mode::PrivateTrusted,
        n_miners: 1,
        block_interval_s: 2.0,
        ..small()
    };
    let out = run(&scn).unwrap();
    let m = &out.metrics;
    assert_eq!(m.fork_count, 0);
    assert_eq!(m.honest_rejections, 0);
    // Feed 1 GOP/s, 8-frame GOPs: the timer keeps up with the feed.
    assert!(m.committed_pps > 6.0, "pps {}", m.committed_pps);
}

#[test]
fn sharded_mining_beats_a_single_miner_when_work_bound() {
    // Make mining the bottleneck: ~1 s of work per GOP, 4 GOPs/s fed.
    let base = Scenario {
        duration_s: 120.0,
        warmup_s: 20.0,
        gop_size: 8,
        frame_width: 32,
        frame_height: 32,
        feed_gops_per_s: 4.0,
        block_interval_s: 5.0,
        work_alpha_ns_per_pixel: 120_000.0,
        seed: 7,
        ..Scenario::default()
    };
    let solo = run(&Scenario {
        n_miners: 1,
        ..base.clone()
    })
    .unwrap();
    let sharded = run(&Scenario {
        mode: Mode::Sharded,
        n_miners: 4,
        shard_span: 4,
        ..base
    })
    .unwrap();
    assert_eq!(solo.metrics.honest_rejections, 0);
    assert_eq!(sharded.metrics.honest_rejections, 0);
    let ratio = sharded.metrics.committed_pps / solo.metrics.committed_pps;
    assert!(
        ratio > 2.0,
        "sharded {} vs solo {} (ratio {ratio})",
        sharded.metrics.committed_pps,
        solo.metrics.committed_pps
    );
}

#[test]
fn auditor_finds_no_failures_on_honest_storage() {
    let scn = Scenario {
        audit_interval_s: 10.0,
        audit_sample_count: 4,
        ..small()
    };
    let out = run(&scn).unwrap();
    assert_eq!(out.metrics.audit_failures, 0);
}

#[test]
fn impossible_feed_rate_raises_a_warning_not_an_error() {
    let scn = Scenario {
        feed_gops_per_s: 100.0,
        work_alpha_ns_per_pixel: 1_000_000.0,
        duration_s: 10.0,
        warmup_s: 1.0,
        ..small()
    };
    let out = run(&scn).unwrap();
    assert!(!out.metrics.warnings.is_empty());
}
