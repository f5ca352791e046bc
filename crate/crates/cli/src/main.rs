//! Operator entry point: generate synthetic video, run simulated
//! deployments, inspect chain dumps, and drive tamper/audit experiments.
//!
//! Exit codes: 0 success, 2 unusable scenario file, 3 runtime protocol
//! violation (an honest block was rejected), 1 any other error.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use cstore::crypto::Digest;
use cstore::ledger::Chain;
use cstore_sim::tamper::{tamper_experiment, TamperSpec};
use cstore_sim::{run as run_scenario, theoretical_pps, RunOutput, Scenario};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_BAD_SCENARIO: u8 = 2;
const EXIT_PROTOCOL_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "cstore", version, about = "Compress-store blockchain toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic video and write it to disk.
    GenVideo(GenVideoArgs),
    /// Run a scenario; writes metrics.json, metrics.csv, chain.bin and
    /// run.json into the output directory.
    Run(RunArgs),
    /// Summarize a chain dump as JSON.
    InspectChain(InspectArgs),
    /// Re-create a finished run, corrupt storage, and report what a full
    /// re-verification detects.
    Tamper(TamperArgs),
    /// Re-create a finished run and put its storage through audit rounds.
    Audit(AuditArgs),
    /// Print the theoretical throughput in frames per second.
    Pps(PpsArgs),
}

#[derive(Args)]
struct GenVideoArgs {
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    #[arg(long, default_value_t = 4)]
    gops: u32,
    #[arg(long, default_value_t = 25)]
    gop_size: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (raw frame bytes with a JSON sidecar header).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file; omit to run the default scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $CSTORE_OUT_DIR or ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// chain.bin produced by `run`.
    #[arg(long)]
    chain: PathBuf,
    #[arg(long, default_value_t = 5)]
    b_max: u32,
}

#[derive(Args)]
struct TamperArgs {
    /// Output directory of a finished `run` (reads its run.json).
    #[arg(long = "run")]
    run_dir: PathBuf,
    /// Flip one stored byte: `<address-hex>:<offset>`.
    #[arg(long, value_name = "ADDR:OFFSET", conflicts_with = "replace_gop")]
    flip_byte: Option<String>,
    /// Replace a committed GOP with a re-encoded variant: `<video>:<gop>`.
    #[arg(long, value_name = "VIDEO:GOP")]
    replace_gop: Option<String>,
}

#[derive(Args)]
struct AuditArgs {
    /// Output directory of a finished `run` (reads its run.json).
    #[arg(long = "run")]
    run_dir: PathBuf,
    /// Silently delete every object held by this storage node first.
    #[arg(long)]
    fail_node: Option<u64>,
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    rounds: u32,
}

#[derive(Args)]
struct PpsArgs {
    #[arg(long, default_value_t = 25)]
    gop: u32,
    #[arg(long, default_value_t = 5)]
    gops_per_block: u32,
    /// Block interval in seconds.
    #[arg(long, default_value_t = 10.0)]
    interval: f64,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenVideo(a) => gen_video(a),
        Command::Run(a) => run_cmd(a),
        Command::InspectChain(a) => inspect_chain(a),
        Command::Tamper(a) => tamper_cmd(a),
        Command::Audit(a) => audit_cmd(a),
        Command::Pps(a) => {
            match theoretical_pps(a.gop, a.gops_per_block, a.interval) {
                Ok(pps) => {
                    println!("{pps}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn gen_video(a: GenVideoArgs) -> Result<ExitCode> {
    let cfg = cstore::codec::SyntheticVideoConfig::new(a.width, a.height, a.gops, a.gop_size, a.seed);
    let gops = cstore::codec::generate_synthetic_video(&cfg)?;
    let mut bytes = Vec::new();
    for g in &gops {
        for f in &g.frames {
            bytes.extend_from_slice(f.samples());
        }
    }
    std::fs::write(&a.out, &bytes)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let header = serde_json::json!({
        "schema": 1,
        "width": a.width,
        "height": a.height,
        "gops": a.gops,
        "gop_size": a.gop_size,
        "seed": a.seed,
        "bytes": bytes.len(),
    });
    std::fs::write(a.out.with_extension("json"), serde_json::to_string_pretty(&header)?)?;
    println!("{header}");
    Ok(ExitCode::SUCCESS)
}

fn load_scenario(path: Option<&Path>, seed: Option<u64>) -> Result<Result<Scenario, String>> {
    let mut scenario = match path {
        None => Scenario::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            match Scenario::from_json(&text) {
                Ok(s) => s,
                Err(e) => return Ok(Err(format!("{e}"))),
            }
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(Ok(scenario))
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("CSTORE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run_cmd(a: RunArgs) -> Result<ExitCode> {
    let scenario = match load_scenario(a.scenario.as_deref(), a.seed)? {
        Ok(s) => s,
        Err(diag) => {
            eprintln!("scenario error: {diag}");
            return Ok(ExitCode::from(EXIT_BAD_SCENARIO));
        }
    };
    let dir = out_dir(a.out);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))?;

    let output = run_scenario(&scenario)?;
    let run_doc = serde_json::json!({ "schema": 1, "scenario": &output.scenario });
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run_doc)?)?;
    std::fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&output.metrics)?,
    )?;
    std::fs::write(dir.join("metrics.csv"), output.metrics.csv())?;
    std::fs::write(dir.join("chain.bin"), output.chain.dump()?)?;
    println!("{}", serde_json::to_string_pretty(&output.metrics)?);

    if output.metrics.honest_rejections > 0 {
        eprintln!(
            "protocol violation: {} honest rejection(s): {:?}",
            output.metrics.honest_rejections, output.metrics.rejection_codes
        );
        return Ok(ExitCode::from(EXIT_PROTOCOL_VIOLATION));
    }
    Ok(ExitCode::SUCCESS)
}

fn inspect_chain(a: InspectArgs) -> Result<ExitCode> {
    let bytes = std::fs::read(&a.chain)
        .with_context(|| format!("reading {}", a.chain.display()))?;
    let chain = Chain::load(&bytes, a.b_max).map_err(|e| anyhow!("bad chain dump: {e}"))?;
    let mut blocks = Vec::new();
    for bh in chain.canonical_chain() {
        let b = chain.get(&bh).expect("canonical block");
        blocks.push(serde_json::json!({
            "height": b.height,
            "hash": bh.to_hex(),
            "timestamp_ms": b.timestamp_ms,
            "miner_id": b.miner_id,
            "subblocks": b.subblocks.iter().map(|sb| serde_json::json!({
                "video_id": sb.content.video_id,
                "gop_index": sb.content.gop_index,
                "quantizer": sb.content.codec.quantizer,
                "mean_psnr_db": sb.content.quality.mean_psnr_db,
                "object_len": sb.content.storage.object_len,
                "address": sb.content.storage.address.to_hex(),
                "node_id": sb.content.storage.node_id,
            })).collect::<Vec<_>>(),
        }));
    }
    let doc = serde_json::json!({
        "schema": 1,
        "canonical_height": chain.canonical_height(),
        "blocks_stored": chain.block_count(),
        "orphaned_blocks": chain.orphaned_block_count(),
        "blocks": blocks,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}

/// Re-creates a run deterministically from the scenario recorded in its
/// output directory.
fn reconstruct(run_dir: &Path) -> Result<Result<RunOutput, String>> {
    let path = run_dir.join("run.json");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let doc: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return Ok(Err(format!("{e}"))),
    };
    let scenario: Scenario = match serde_json::from_value(doc["scenario"].clone()) {
        Ok(s) => s,
        Err(e) => return Ok(Err(format!("{e}"))),
    };
    if let Err(e) = scenario.validate() {
        return Ok(Err(format!("{e}")));
    }
    Ok(Ok(run_scenario(&scenario)?))
}

fn parse_pair(s: &str, what: &str) -> Result<(String, u64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("expected <{what}>, got {s:?}"))?;
    Ok((a.to_string(), b.parse().context("right-hand side not a number")?))
}

fn tamper_cmd(a: TamperArgs) -> Result<ExitCode> {
    let spec = if let Some(arg) = &a.flip_byte {
        let (addr, offset) = parse_pair(arg, "address-hex:offset")?;
        let address =
            Digest::from_hex(&addr).ok_or_else(|| anyhow!("bad address hex {addr:?}"))?;
        TamperSpec::FlipStoredByte { address, offset }
    } else if let Some(arg) = &a.replace_gop {
        let (video, gop_index) = parse_pair(arg, "video:gop")?;
        TamperSpec::ReplaceGop {
            video_id: video.parse().context("video id not a number")?,
            gop_index,
        }
    } else {
        TamperSpec::None
    };
    let mut output = match reconstruct(&a.run_dir)? {
        Ok(o) => o,
        Err(diag) => {
            eprintln!("scenario error: {diag}");
            return Ok(ExitCode::from(EXIT_BAD_SCENARIO));
        }
    };
    let report = tamper_experiment(&mut output, &spec)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn audit_cmd(a: AuditArgs) -> Result<ExitCode> {
    let mut output = match reconstruct(&a.run_dir)? {
        Ok(o) => o,
        Err(diag) => {
            eprintln!("scenario error: {diag}");
            return Ok(ExitCode::from(EXIT_BAD_SCENARIO));
        }
    };
    if let Some(node_id) = a.fail_node {
        let node = output
            .cluster
            .node_mut(node_id)
            .ok_or_else(|| anyhow!("unknown storage node {node_id}"))?;
        let addresses: Vec<Digest> = {
            let mut addrs = Vec::new();
            for bh in output.chain.canonical_chain() {
                for sb in &output.chain.get(&bh).expect("canonical block").subblocks {
                    if sb.content.storage.node_id == node_id {
                        addrs.push(sb.content.storage.address);
                    }
                }
            }
            addrs
        };
        for addr in addresses {
            node.delete_object_silently(&addr);
        }
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(output.scenario.seed ^ 0xa0d17);
    let mut credits = std::mem::take(&mut output.cluster.credits);
    let mut reports = Vec::new();
    for _ in 0..a.rounds {
        reports.push(cstore::storage::audit_round(
            &output.chain,
            &output.cluster,
            &mut credits,
            &mut rng,
            a.samples,
            output.scenario.challenge_k,
        ));
    }
    output.cluster.credits = credits;
    println!("{}", serde_json::to_string_pretty(&reports)?);
    Ok(ExitCode::SUCCESS)
}
