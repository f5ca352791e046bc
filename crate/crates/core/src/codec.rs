//! Toy predictive video coder. A GOP is one intra-coded I frame followed by
//! P frames coded as quantized residuals against the *reconstructed*
//! previous frame (closed loop, so encoder and decoder agree exactly).
//!
//! Compressed payload layout, bit-exact:
//!
//! - I payload: 64-byte chain header (`chain_prev_i || chain_prev_last_p`,
//!   32 bytes each) followed by the RLE stream of quantized samples.
//! - P payload: RLE stream of quantized residuals.
//! - RLE stream: a sequence of `(value: i16 BE, run: u16 BE)` pairs; every
//!   run is at least 1; the stream ends exactly when width*height samples
//!   have been produced.
//!
//! Quantization: `q = round(x / quantizer)` (half away from zero),
//! reconstruction `clamp(q * quantizer, 0, 255)` for intra and
//! `clamp(pred + q * quantizer, 0, 255)` for residuals. `quantizer == 1`
//! is lossless by construction.

use crate::crypto::Digest;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes of chain linkage prepended to every I payload.
pub const CHAIN_HEADER_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("frame dimensions must be non-zero")]
    ZeroDimensions,
    #[error("sample count {got} does not match {width}x{height}")]
    SampleCountMismatch { width: u32, height: u32, got: usize },
    #[error("frame dimensions differ")]
    DimensionMismatch,
    #[error("GOP must contain at least one frame")]
    EmptyGop,
    #[error("quantizer must be >= 1")]
    InvalidQuantizer,
    #[error("MSE must be non-negative")]
    NegativeMse,
    #[error("frame counts differ")]
    FrameCountMismatch,
    #[error("payload truncated")]
    PayloadTruncated,
    #[error("payload produced too many samples")]
    PayloadOverrun,
    #[error("trailing bytes in payload")]
    PayloadTrailing,
    #[error("run length of zero in payload")]
    ZeroRun,
    #[error("chain header does not match declared chain digests")]
    ChainHeaderMismatch,
    #[error("synthetic video config invalid: {0}")]
    BadConfig(&'static str),
}

/// A single 8-bit luma frame, row-major.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Frame({}x{})", self.width, self.height)
    }
}

impl Frame {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Frame, CodecError> {
        if width == 0 || height == 0 {
            return Err(CodecError::ZeroDimensions);
        }
        if samples.len() != (width as usize) * (height as usize) {
            return Err(CodecError::SampleCountMismatch {
                width,
                height,
                got: samples.len(),
            });
        }
        Ok(Frame {
            width,
            height,
            samples,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }
}

/// An ordered group of equally sized frames; the unit of mining work.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gop {
    pub frames: Vec<Frame>,
    pub index: u64,
    pub timestamp_ms: u64,
}

impl Gop {
    pub fn new(frames: Vec<Frame>, index: u64, timestamp_ms: u64) -> Result<Gop, CodecError> {
        if frames.is_empty() {
            return Err(CodecError::EmptyGop);
        }
        let (w, h) = (frames[0].width, frames[0].height);
        if frames.iter().any(|f| f.width != w || f.height != h) {
            return Err(CodecError::DimensionMismatch);
        }
        Ok(Gop {
            frames,
            index,
            timestamp_ms,
        })
    }

    pub fn width(&self) -> u32 {
        self.frames[0].width
    }

    pub fn height(&self) -> u32 {
        self.frames[0].height
    }

    /// Raw size in bytes: width * height * frame count.
    pub fn raw_size(&self) -> u64 {
        self.frames.len() as u64 * self.width() as u64 * self.height() as u64
    }
}

/// Coded form of one GOP. `i_payload` starts with the 64-byte chain header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedGop {
    pub i_payload: Vec<u8>,
    pub p_payloads: Vec<Vec<u8>>,
    pub quantizer: u32,
    pub chain_prev_i: Digest,
    pub chain_prev_last_p: Digest,
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
}

impl CompressedGop {
    /// All coded payloads in frame order (I first).
    pub fn payloads(&self) -> impl Iterator<Item = &[u8]> {
        std::iter::once(self.i_payload.as_slice()).chain(self.p_payloads.iter().map(|p| p.as_slice()))
    }

    /// The last P payload, or the I payload for a single-frame GOP.
    pub fn last_p_payload(&self) -> &[u8] {
        self.p_payloads
            .last()
            .map(|p| p.as_slice())
            .unwrap_or(self.i_payload.as_slice())
    }

    /// Total coded size in bytes, chain header included.
    pub fn encoded_size(&self) -> u64 {
        self.i_payload.len() as u64 + self.p_payloads.iter().map(|p| p.len() as u64).sum::<u64>()
    }

    pub fn raw_size(&self) -> u64 {
        self.width as u64 * self.height as u64 * self.frame_count as u64
    }
}

/// Quality of a coded GOP against its source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub per_frame_mse: Vec<f64>,
    pub mean_psnr_db: f64,
    pub meets_threshold: bool,
}

/// Mean squared error between two equally sized frames.
pub fn mse(a: &Frame, b: &Frame) -> Result<f64, CodecError> {
    if a.width != b.width || a.height != b.height {
        return Err(CodecError::DimensionMismatch);
    }
    let sum: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.samples.len() as f64)
}

/// Peak signal-to-noise ratio in dB for 8-bit samples; infinite at MSE 0.
pub fn psnr_db(mse_value: f64) -> Result<f64, CodecError> {
    if mse_value < 0.0 {
        return Err(CodecError::NegativeMse);
    }
    if mse_value == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * ((255.0f64 * 255.0) / mse_value).log10())
}

fn quantize(x: f64, q: u32) -> i32 {
    (x / q as f64).round() as i32
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn get_varint(bytes: &[u8], pos: &mut usize) -> Result<u64, CodecError> {
    let mut v: u64 = 0;
    let mut shift = 0u32;
    loop {
        let byte = *bytes.get(*pos).ok_or(CodecError::PayloadTruncated)?;
        *pos += 1;
        if shift >= 64 {
            return Err(CodecError::PayloadOverrun);
        }
        v |= u64::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
    }
}

fn zigzag(v: i16) -> u64 {
    let w = v as i64;
    ((w << 1) ^ (w >> 63)) as u64
}

fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

/// RLE cell: zigzag-varint value, then varint run length (≥ 1). Small
/// values and short runs — the common case for quantized residuals — cost
/// one byte each.
fn rle_encode(values: &[i16]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < values.len() {
        let v = values[i];
        let mut run: usize = 1;
        while i + run < values.len() && values[i + run] == v {
            run += 1;
        }
        put_varint(&mut out, zigzag(v));
        put_varint(&mut out, run as u64);
        i += run;
    }
    out
}

fn rle_decode(bytes: &[u8], expected: usize) -> Result<Vec<i16>, CodecError> {
    let mut out = Vec::with_capacity(expected);
    let mut pos = 0;
    while out.len() < expected {
        let v = unzigzag(get_varint(bytes, &mut pos)?);
        let v = i16::try_from(v).map_err(|_| CodecError::PayloadOverrun)?;
        let run = get_varint(bytes, &mut pos)?;
        if run == 0 {
            return Err(CodecError::ZeroRun);
        }
        if out.len() as u64 + run > expected as u64 {
            return Err(CodecError::PayloadOverrun);
        }
        out.extend(std::iter::repeat(v).take(run as usize));
    }
    if pos != bytes.len() {
        return Err(CodecError::PayloadTrailing);
    }
    Ok(out)
}

/// Encodes a GOP: intra-codes frame 0, then codes each later frame as a
/// quantized residual against the reconstruction of its predecessor. The
/// chain digests are embedded verbatim as the I payload header.
pub fn encode_gop(
    gop: &Gop,
    quantizer: u32,
    chain_prev_i: Digest,
    chain_prev_last_p: Digest,
) -> Result<CompressedGop, CodecError> {
    if quantizer == 0 {
        return Err(CodecError::InvalidQuantizer);
    }
    let n = gop.frames[0].samples.len();

    // Intra frame.
    let mut recon: Vec<u8> = Vec::with_capacity(n);
    let mut intra_q: Vec<i16> = Vec::with_capacity(n);
    for &s in gop.frames[0].samples() {
        let q = quantize(s as f64, quantizer);
        intra_q.push(q as i16);
        recon.push(((q as i64 * quantizer as i64).clamp(0, 255)) as u8);
    }
    let mut i_payload = Vec::with_capacity(CHAIN_HEADER_LEN + n);
    i_payload.extend_from_slice(&chain_prev_i.0);
    i_payload.extend_from_slice(&chain_prev_last_p.0);
    i_payload.extend_from_slice(&rle_encode(&intra_q));

    // Predicted frames, closed loop.
    let mut p_payloads = Vec::with_capacity(gop.frames.len() - 1);
    for frame in &gop.frames[1..] {
        let mut resid_q: Vec<i16> = Vec::with_capacity(n);
        let mut next_recon: Vec<u8> = Vec::with_capacity(n);
        for (&s, &pred) in frame.samples().iter().zip(&recon) {
            let r = s as f64 - pred as f64;
            let q = quantize(r, quantizer);
            resid_q.push(q as i16);
            next_recon.push(((pred as i64 + q as i64 * quantizer as i64).clamp(0, 255)) as u8);
        }
        p_payloads.push(rle_encode(&resid_q));
        recon = next_recon;
    }

    Ok(CompressedGop {
        i_payload,
        p_payloads,
        quantizer,
        chain_prev_i,
        chain_prev_last_p,
        width: gop.width(),
        height: gop.height(),
        frame_count: gop.frames.len() as u32,
    })
}

/// Inverse of [`encode_gop`] up to quantization loss. The chain header is
/// validated against the declared digests but does not affect pixels.
pub fn decode_gop(c: &CompressedGop) -> Result<Vec<Frame>, CodecError> {
    if c.quantizer == 0 {
        return Err(CodecError::InvalidQuantizer);
    }
    if c.i_payload.len() < CHAIN_HEADER_LEN {
        return Err(CodecError::PayloadTruncated);
    }
    if c.i_payload[..32] != c.chain_prev_i.0 || c.i_payload[32..64] != c.chain_prev_last_p.0 {
        return Err(CodecError::ChainHeaderMismatch);
    }
    if c.p_payloads.len() + 1 != c.frame_count as usize {
        return Err(CodecError::FrameCountMismatch);
    }
    let n = (c.width as usize) * (c.height as usize);

    let intra_q = rle_decode(&c.i_payload[CHAIN_HEADER_LEN..], n)?;
    let mut recon: Vec<u8> = intra_q
        .iter()
        .map(|&q| ((q as i64 * c.quantizer as i64).clamp(0, 255)) as u8)
        .collect();
    let mut frames = Vec::with_capacity(c.frame_count as usize);
    frames.push(Frame::new(c.width, c.height, recon.clone())?);

    for payload in &c.p_payloads {
        let resid_q = rle_decode(payload, n)?;
        let next: Vec<u8> = recon
            .iter()
            .zip(&resid_q)
            .map(|(&pred, &q)| ((pred as i64 + q as i64 * c.quantizer as i64).clamp(0, 255)) as u8)
            .collect();
        frames.push(Frame::new(c.width, c.height, next.clone())?);
        recon = next;
    }
    Ok(frames)
}

/// Measures coded quality by actually decoding, so the report matches what
/// any verifier will recompute bit-for-bit.
pub fn quality_of(
    original: &Gop,
    c: &CompressedGop,
    threshold_db: f64,
) -> Result<QualityReport, CodecError> {
    if original.frames.len() != c.frame_count as usize {
        return Err(CodecError::FrameCountMismatch);
    }
    if original.width() != c.width || original.height() != c.height {
        return Err(CodecError::DimensionMismatch);
    }
    let decoded = decode_gop(c)?;
    let mut per_frame_mse = Vec::with_capacity(decoded.len());
    for (a, b) in original.frames.iter().zip(&decoded) {
        per_frame_mse.push(mse(a, b)?);
    }
    let mean_mse = per_frame_mse.iter().sum::<f64>() / per_frame_mse.len() as f64;
    let mean_psnr_db = psnr_db(mean_mse)?;
    Ok(QualityReport {
        per_frame_mse,
        mean_psnr_db,
        meets_threshold: mean_psnr_db >= threshold_db,
    })
}

/// Parameters for the deterministic synthetic video source: a panning
/// diagonal gradient, a few moving rectangles and bounded per-pixel noise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticVideoConfig {
    pub width: u32,
    pub height: u32,
    pub n_gops: u32,
    pub gop_size: u32,
    /// Pixels of global pan per frame; 0 freezes all motion.
    pub motion_amplitude: f64,
    /// Maximum magnitude of additive uniform noise; 0 disables noise.
    pub noise_level: u8,
    pub seed: u64,
}

impl SyntheticVideoConfig {
    pub fn new(width: u32, height: u32, n_gops: u32, gop_size: u32, seed: u64) -> Self {
        SyntheticVideoConfig {
            width,
            height,
            n_gops,
            gop_size,
            motion_amplitude: 1.0,
            noise_level: 1,
            seed,
        }
    }
}

/// Generates temporally correlated frames so predictive coding has real
/// residual structure to exploit. Deterministic for a given config.
pub fn generate_synthetic_video(cfg: &SyntheticVideoConfig) -> Result<Vec<Gop>, CodecError> {
    if cfg.width < 8 || cfg.height < 8 {
        return Err(CodecError::BadConfig("dimensions must be at least 8x8"));
    }
    if cfg.gop_size < 2 {
        return Err(CodecError::BadConfig("gop_size must be at least 2"));
    }
    if cfg.n_gops == 0 {
        return Err(CodecError::BadConfig("n_gops must be at least 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.width as i64, cfg.height as i64);

    // Moving rectangles: fixed count, random start, integer velocity scaled
    // by the motion amplitude.
    struct Rect {
        x: i64,
        y: i64,
        side: i64,
        vx: f64,
        vy: f64,
        value: u8,
    }
    let side = (w.min(h) / 4).max(4);
    let rects: Vec<Rect> = (0..3)
        .map(|i| Rect {
            x: rng.gen_range(0..w),
            y: rng.gen_range(0..h),
            side,
            vx: rng.gen_range(-2..=2) as f64 * cfg.motion_amplitude,
            vy: rng.gen_range(-2..=2) as f64 * cfg.motion_amplitude,
            value: 180u8.wrapping_add(30u8.wrapping_mul(i as u8)),
        })
        .collect();

    let mut gops = Vec::with_capacity(cfg.n_gops as usize);
    let mut t: i64 = 0;
    for gop_index in 0..cfg.n_gops {
        let mut frames = Vec::with_capacity(cfg.gop_size as usize);
        for _ in 0..cfg.gop_size {
            let pan = (cfg.motion_amplitude * t as f64).round() as i64;
            let mut samples = Vec::with_capacity((w * h) as usize);
            for y in 0..h {
                for x in 0..w {
                    let base = (x + y / 2 + pan).rem_euclid(256) as i64;
                    let mut v = base;
                    for r in &rects {
                        let rx = (r.x + (r.vx * t as f64).round() as i64).rem_euclid(w);
                        let ry = (r.y + (r.vy * t as f64).round() as i64).rem_euclid(h);
                        // Wrapping rectangle membership on both axes.
                        let dx = (x - rx).rem_euclid(w);
                        let dy = (y - ry).rem_euclid(h);
                        if dx < r.side && dy < r.side {
                            v = r.value as i64;
                        }
                    }
                    if cfg.noise_level > 0 {
                        let nl = cfg.noise_level as i64;
                        v += rng.gen_range(-nl..=nl);
                    }
                    samples.push(v.clamp(0, 255) as u8);
                }
            }
            frames.push(Frame::new(cfg.width, cfg.height, samples)?);
            t += 1;
        }
        // Timestamps advance one notional second per GOP.
        gops.push(Gop::new(frames, gop_index as u64, gop_index as u64 * 1000)?);
    }
    let _ = rng.next_u32(); // keep rng linear even if unused later
    Ok(gops)
}
