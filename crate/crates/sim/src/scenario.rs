//! Scenario configuration: a human-editable JSON document describing one
//! simulated deployment. Every field has a default; the defaults reproduce
//! the reference public deployment (25-frame GOPs, 5 GOPs per block, 10 s
//! block interval).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(&'static str),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Deployment mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Open miner competition; block cadence emerges from feed and work.
    PublicPows,
    /// A single trusted node compresses and appends on a fixed timer.
    PrivateTrusted,
    /// GOP ranges are partitioned pseudorandomly across miners; each range
    /// restarts the video's digest chain.
    Sharded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub mode: Mode,
    pub n_miners: u32,
    pub n_storage_nodes: u32,
    pub n_verifiers: u32,
    pub n_videos: u32,
    /// Per-message one-way latency, sampled uniformly per link use.
    pub latency_min_ms: f64,
    pub latency_max_ms: f64,
    /// Private-mode append timer; public-mode fallback trigger when a
    /// partial batch has waited this long.
    pub block_interval_s: f64,
    pub b_max: u32,
    pub gop_size: u32,
    pub frame_width: u32,
    pub frame_height: u32,
    pub threshold_db: f64,
    /// Video feed rate, GOPs per simulated second (all videos combined).
    pub feed_gops_per_s: f64,
    pub duration_s: f64,
    /// Throughput is measured only after this much simulated time.
    pub warmup_s: f64,
    pub seed: u64,
    /// Work-time model: per-GOP mining time in nanoseconds is
    /// `alpha * pixels + beta * quantizer_sweep_steps`, scaled by a
    /// uniform multiplicative jitter in `[1 - jitter, 1 + jitter]`.
    pub work_alpha_ns_per_pixel: f64,
    pub work_beta_ns_per_step: f64,
    pub work_jitter: f64,
    /// Sharded mode: GOPs per contiguous range; also the digest-chain
    /// restart interval.
    pub shard_span: u64,
    pub storage_capacity_bytes: u64,
    pub chunk_size: u32,
    pub challenge_k: u32,
    pub initial_miner_credits: u64,
    /// 0 disables the traveling auditor.
    pub audit_interval_s: f64,
    pub audit_sample_count: u32,
    /// Broadcast location+hash announcements instead of raw GOPs; affects
    /// transport-cost accounting only.
    pub broadcast_locations_only: bool,
}

impl Default for Scenario {
    fn default() -> Scenario {
        Scenario {
            mode: Mode::PublicPows,
            n_miners: 3,
            n_storage_nodes: 3,
            n_verifiers: 2,
            n_videos: 1,
            latency_min_ms: 20.0,
            latency_max_ms: 120.0,
            block_interval_s: 10.0,
            b_max: 5,
            gop_size: 25,
            frame_width: 64,
            frame_height: 64,
            threshold_db: 30.0,
            feed_gops_per_s: 0.5,
            duration_s: 660.0,
            warmup_s: 60.0,
            seed: 1,
            work_alpha_ns_per_pixel: 2_000.0,
            work_beta_ns_per_step: 1_000_000.0,
            work_jitter: 0.2,
            shard_span: 4,
            storage_capacity_bytes: 1 << 32,
            chunk_size: 4096,
            challenge_k: 16,
            initial_miner_credits: 1 << 32,
            audit_interval_s: 0.0,
            audit_sample_count: 8,
            broadcast_locations_only: false,
        }
    }
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(json)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_miners < 1 || self.n_storage_nodes < 1 || self.n_verifiers < 1 {
            return Err(ScenarioError::Invalid("all node counts must be >= 1"));
        }
        if self.n_videos < 1 {
            return Err(ScenarioError::Invalid("need at least one video"));
        }
        if !(self.duration_s > 0.0) {
            return Err(ScenarioError::Invalid("duration must be positive"));
        }
        if self.warmup_s < 0.0 || self.warmup_s >= self.duration_s {
            return Err(ScenarioError::Invalid("warmup must lie inside the run"));
        }
        if !(self.feed_gops_per_s > 0.0) {
            return Err(ScenarioError::Invalid("feed rate must be positive"));
        }
        if self.latency_min_ms < 0.0 || self.latency_max_ms < self.latency_min_ms {
            return Err(ScenarioError::Invalid("latency range is inverted"));
        }
        if !(self.block_interval_s > 0.0) {
            return Err(ScenarioError::Invalid("block interval must be positive"));
        }
        if self.b_max < 1 {
            return Err(ScenarioError::Invalid("b_max must be >= 1"));
        }
        if self.gop_size < 2 {
            return Err(ScenarioError::Invalid("gop_size must be >= 2"));
        }
        if self.frame_width < 8 || self.frame_height < 8 {
            return Err(ScenarioError::Invalid("frames must be at least 8x8"));
        }
        if !self.threshold_db.is_finite() {
            return Err(ScenarioError::Invalid("threshold must be finite"));
        }
        if !(self.work_jitter >= 0.0 && self.work_jitter < 1.0) {
            return Err(ScenarioError::Invalid("work_jitter must be in [0, 1)"));
        }
        if self.mode == Mode::Sharded && self.shard_span < 1 {
            return Err(ScenarioError::Invalid("shard_span must be >= 1"));
        }
        if self.chunk_size < 1 {
            return Err(ScenarioError::Invalid("chunk_size must be >= 1"));
        }
        Ok(())
    }

    /// Estimated per-GOP mining time in seconds (jitter-free mean, worst
    /// case full sweep).
    pub fn work_per_gop_s(&self) -> f64 {
        let pixels =
            self.frame_width as f64 * self.frame_height as f64 * self.gop_size as f64;
        (self.work_alpha_ns_per_pixel * pixels + self.work_beta_ns_per_step * 7.0) / 1e9
    }
}

/// Theoretical throughput anchor: frames committed per second when every
/// block carries `gops_per_block` GOPs of `gop_size` frames each interval.
pub fn theoretical_pps(
    gop_size: u32,
    gops_per_block: u32,
    block_interval_s: f64,
) -> Result<f64, ScenarioError> {
    if gop_size == 0 || gops_per_block == 0 {
        return Err(ScenarioError::Invalid("gop size and gops per block must be positive"));
    }
    if !(block_interval_s > 0.0) {
        return Err(ScenarioError::Invalid("block interval must be positive"));
    }
    Ok(gop_size as f64 * gops_per_block as f64 / block_interval_s)
}
