//! The block codec: image partitioning, a per-block learned-graph transform
//! with a quantization-step search over the weight spectrum, a DCT
//! fallback, selection by measured rate-distortion cost, bitstream
//! serialization, and reconstruction.

use crate::dct::{dct2_forward, dct2_inverse, zigzag_order};
use crate::entropy::{
    decode_lastpos_bitplane, decode_sigmap, dequantize, encode_lastpos_bitplane, encode_sigmap,
    quantize, BitplaneContexts, Prob, RangeDecoder, RangeEncoder, SigmapContexts,
};
use crate::error::{Error, Result};
use crate::graph::{eigendecompose, gft, igft, Geometry, Spectrum};
use crate::learn::{classify_block, default_params, learn_weights, LearnParams, Mode, Thresholds};
use crate::pgm::GrayImage;
use rayon::prelude::*;
use std::sync::Arc;

pub const BLOCK_SIDE: usize = 16;
const MAGIC: [u8; 4] = *b"GTO1";
const HEADER_LEN: usize = 14;
/// Decoded weights are clamped to `[W_MIN, 1]`: quantization can push them
/// past either end, and the lower clamp keeps every block graph connected.
const W_MIN: f64 = 1e-4;
const DELTA_INDEX_BITS: u32 = 3;
/// Blocks analyzed per parallel batch before the serializer drains them in
/// raster order.
const BATCH: usize = 32;

/// Candidate steps for the weight-spectrum quantizer, fine to coarse.
pub const DEFAULT_DELTA_SET: [f64; 8] = [0.02, 0.05, 0.1, 0.2, 0.35, 0.6, 1.0, 1.4];
/// Multiplier rule `gamma = gamma_scale * q^2` keeps squared-error
/// distortion and bits commensurate at high rate.
pub const DEFAULT_GAMMA_SCALE: f64 = 0.85 / 12.0;
/// Dip amplification for the transmitted weight signal (see
/// `EncoderConfig::dip_gain`).
pub const DEFAULT_DIP_GAIN: f64 = 1.6;

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    /// Transform-coefficient quantizer step. The bitstream header stores it
    /// as f32; `coded_q` is the value both sides actually use.
    pub q: f64,
    pub mode: Mode,
    /// Strictly increasing, at most 8 entries (the chosen index is coded in
    /// 3 bits). The decoder must be given the same set.
    pub delta_set: Vec<f64>,
    /// Retained weight-spectrum coefficients; `None` means the mode default
    /// (64 natural, 256 depth).
    pub m_tilde: Option<usize>,
    pub gamma_scale: f64,
    pub thresholds: Thresholds,
    /// Per-class `(alpha, beta)` solver overrides, classes 1 to 3.
    pub class_overrides: [Option<(f64, f64)>; 3],
    /// Amplification of the learned weights' deviation from 1 before they
    /// are spectrum-coded: `w -> 1 + dip_gain * (w/peak - 1)`. Keeping only
    /// the low dual frequencies raises a sharp dip's floor unevenly, which
    /// wrecks the decoded basis; amplified dips land below zero everywhere
    /// along the cut, so the decoder's lower clamp restores a uniform deep
    /// cut. 1.0 transmits the learned shape unchanged.
    pub dip_gain: f64,
}

impl EncoderConfig {
    pub fn new(mode: Mode, q: f64) -> Self {
        Self {
            q,
            mode,
            delta_set: DEFAULT_DELTA_SET.to_vec(),
            m_tilde: None,
            gamma_scale: DEFAULT_GAMMA_SCALE,
            thresholds: Thresholds::default(),
            class_overrides: [None; 3],
            dip_gain: DEFAULT_DIP_GAIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidParameter(format!("q = {} must be finite and > 0", self.q)));
        }
        let dn = self.delta_set.len();
        if dn == 0 || dn > 1 << DELTA_INDEX_BITS {
            return Err(Error::InvalidParameter(format!(
                "delta set has {dn} steps, expected 1 to {}",
                1 << DELTA_INDEX_BITS
            )));
        }
        for pair in self.delta_set.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::InvalidParameter(format!(
                    "delta set must increase strictly: {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if !(self.delta_set[0] > 0.0 && self.delta_set[dn - 1].is_finite()) {
            return Err(Error::InvalidParameter("delta steps must be finite and > 0".into()));
        }
        if !(self.gamma_scale > 0.0 && self.gamma_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma_scale = {} must be finite and > 0",
                self.gamma_scale
            )));
        }
        if !(self.dip_gain >= 1.0 && self.dip_gain.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dip_gain = {} must be finite and >= 1",
                self.dip_gain
            )));
        }
        Ok(())
    }

    /// The coefficient step as the decoder will see it (header carries f32).
    pub fn coded_q(&self) -> f64 {
        self.q as f32 as f64
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_scale * self.coded_q() * self.coded_q()
    }

    fn class_params(&self, class: usize) -> Result<LearnParams> {
        if (1..=3).contains(&class) {
            if let Some((alpha, beta)) = self.class_overrides[class - 1] {
                return Ok(LearnParams::new(alpha, beta));
            }
        }
        default_params(self.mode, class)
    }
}

fn resolve_m_tilde(explicit: Option<usize>, mode: Mode, m: usize) -> Result<usize> {
    let mt = match explicit {
        Some(v) => v,
        None => match mode {
            Mode::Natural => 64.min(m),
            Mode::Depth => 256.min(m),
        },
    };
    if mt == 0 || mt > m {
        return Err(Error::InvalidParameter(format!(
            "m_tilde = {mt} outside 1..={m} retained weight coefficients"
        )));
    }
    Ok(mt)
}

/// Adaptive contexts shared by all blocks of one codestream, in raster
/// order. Encoder and decoder bundles evolve in lockstep.
#[derive(Debug, Clone, Default)]
struct CodecContexts {
    transform_flag: Prob,
    w_bitplane: BitplaneContexts,
    w_sigmap: SigmapContexts,
    u_bitplane: BitplaneContexts,
}

enum BlockChoice<'a> {
    Gft { delta_index: usize, w_indices: &'a [i64], u_indices: &'a [i64] },
    Dct { u_indices: &'a [i64] },
}

/// One block's syntax: transform flag, then for the learned path the step
/// index, the weight-spectrum payload (layout picked by mode), and the
/// coefficient payload; the DCT path carries only the coefficient payload.
fn write_block_syntax(
    enc: &mut RangeEncoder,
    cx: &mut CodecContexts,
    mode: Mode,
    choice: &BlockChoice,
) -> Result<()> {
    match *choice {
        BlockChoice::Gft { delta_index, w_indices, u_indices } => {
            enc.encode_bit(&mut cx.transform_flag, true);
            enc.encode_bypass_bits(delta_index as u64, DELTA_INDEX_BITS);
            match mode {
                Mode::Natural => encode_lastpos_bitplane(enc, &mut cx.w_bitplane, w_indices)?,
                Mode::Depth => encode_sigmap(enc, &mut cx.w_sigmap, w_indices)?,
            }
            encode_lastpos_bitplane(enc, &mut cx.u_bitplane, u_indices)
        }
        BlockChoice::Dct { u_indices } => {
            enc.encode_bit(&mut cx.transform_flag, false);
            encode_lastpos_bitplane(enc, &mut cx.u_bitplane, u_indices)
        }
    }
}

/// Compressed size of candidate syntax measured from the current coder
/// position, flush slack included (constant per measuring position).
fn trial_bits(
    enc: &RangeEncoder,
    cx: &CodecContexts,
    mode: Mode,
    choice: &BlockChoice,
) -> Result<f64> {
    let mut e = enc.trial();
    let mut c = cx.clone();
    write_block_syntax(&mut e, &mut c, mode, choice)?;
    Ok(8.0 * e.finish().len() as f64)
}

/// Transform model for a weight vector. Uniform weights reuse the cached
/// uniform-grid basis with scaled eigenvalues (`L(t*1) = t*L(1)`); encoder
/// and decoder both resolve weights through this one function, so their
/// bases agree by construction.
fn spectrum_for_weights(geo: &Geometry, w: &[f64]) -> Result<Spectrum> {
    if w.iter().all(|&v| v == w[0]) {
        return Ok(Spectrum {
            eigenvalues: &geo.uniform_spectrum.eigenvalues * w[0],
            basis: geo.uniform_spectrum.basis.clone(),
        });
    }
    eigendecompose(&geo.grid.laplacian(w)?)
}

/// Rate proxy for coefficient coding: eigenvalue-weighted coefficient
/// energy, identical to the graph smoothness of the signal.
pub fn theoretical_rate_rc(s: &Spectrum, u: &[f64]) -> Result<f64> {
    let u_hat = gft(s, u)?;
    Ok(s.eigenvalues.iter().zip(u_hat.iter()).map(|(l, c)| l * c * c).sum())
}

/// Rate proxy for graph description: l1 norm of the weight spectrum.
pub fn theoretical_rate_rg(dual_spec: &Spectrum, w: &[f64]) -> Result<f64> {
    Ok(gft(dual_spec, w)?.iter().map(|v| v.abs()).sum())
}

pub fn rd_cost(distortion: f64, rate_bits: f64, gamma: f64) -> f64 {
    distortion + gamma * rate_bits
}

struct GftCandidate {
    w_indices: Vec<i64>,
    u_indices: Vec<i64>,
    distortion: f64,
    recon: Vec<f64>,
    rc_theory: f64,
    rg_theory: f64,
}

struct BlockAnalysis {
    bx: usize,
    by: usize,
    class: usize,
    converged: bool,
    /// One candidate per delta step; empty for the constant-block fast path
    /// (a constant block can only tie the DCT, and ties go to the DCT).
    candidates: Vec<GftCandidate>,
    dct_u_indices: Vec<i64>,
    dct_distortion: f64,
    dct_recon: Vec<f64>,
    dct_rc_theory: f64,
}

/// Per-block encoding outcome, the raw material for rate and distortion
/// studies. `bits` and `dct_bits` are trial-measured compressed sizes and
/// include the coder's flush slack (a few bytes, identical within a block).
#[derive(Debug, Clone)]
pub struct BlockRecord {
    pub bx: usize,
    pub by: usize,
    pub class: usize,
    pub converged: bool,
    pub use_gft: bool,
    pub delta_index: Option<usize>,
    /// Compressed bits of the chosen syntax.
    pub bits: f64,
    /// Bits of the flag + step index + weight payload; 0 for DCT blocks.
    pub graph_bits: f64,
    /// Compressed bits the DCT alternative would have taken.
    pub dct_bits: f64,
    /// Transform-domain squared error of the chosen path.
    pub distortion: f64,
    /// Eigenvalue-weighted coefficient energy of the chosen transform.
    pub rc_theory: f64,
    /// l1 norm of the decoded weight spectrum; 0 for DCT blocks.
    pub rg_theory: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EncodeStats {
    pub blocks: Vec<BlockRecord>,
}

impl EncodeStats {
    pub fn gft_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.use_gft).count()
    }

    pub fn unconverged_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| !b.converged).count()
    }
}

pub struct Encoded {
    pub bitstream: Vec<u8>,
    /// Encoder-side reconstruction; the decoder reproduces it bit-exactly.
    pub reconstruction: GrayImage,
    pub stats: EncodeStats,
}

#[allow(clippy::too_many_arguments)]
fn analyze_block(
    u: &[f64],
    bx: usize,
    by: usize,
    geo: &Geometry,
    cfg: &EncoderConfig,
    zz: &[usize],
    q: f64,
    m_tilde: usize,
) -> Result<BlockAnalysis> {
    let n = u.len();

    let y = dct2_forward(u, BLOCK_SIDE)?;
    let y_scan: Vec<f64> = zz.iter().map(|&i| y[i]).collect();
    let qy = quantize(&y_scan, q)?;
    let y_deq = dequantize(&qy);
    let dct_distortion: f64 = y_scan.iter().zip(&y_deq).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut y_rec = vec![0.0; n];
    for (p, &i) in zz.iter().enumerate() {
        y_rec[i] = y_deq[p];
    }
    let dct_recon = dct2_inverse(&y_rec, BLOCK_SIDE)?;
    let ones = vec![1.0; geo.grid.edge_count()];
    let dct_rc_theory = geo.grid.smoothness(&ones, u)?;

    let class = classify_block(u, BLOCK_SIDE, cfg.mode, &cfg.thresholds)?;
    let base = BlockAnalysis {
        bx,
        by,
        class,
        converged: true,
        candidates: Vec::new(),
        dct_u_indices: qy.indices,
        dct_distortion,
        dct_recon,
        dct_rc_theory,
    };
    if u.iter().all(|&v| v == u[0]) {
        return Ok(base);
    }

    let params = cfg.class_params(class)?;
    let learned = learn_weights(&geo.grid, &geo.dual_spectrum, u, &params)?;
    // The basis is invariant to uniform weight scaling, so transmit the
    // scale-free representative with peak 1: it fills the (0,1] box, which
    // gives the fixed step set the same meaning for every block class.
    // Deviations from 1 are then amplified so that reconstruction ripple
    // cannot lift a cut off the decoder's lower clamp (see dip_gain).
    let peak = learned.weights.iter().cloned().fold(0.0, f64::max);
    let w_code: Vec<f64> =
        learned.weights.iter().map(|v| 1.0 + cfg.dip_gain * (v / peak - 1.0)).collect();
    let w_hat = gft(&geo.dual_spectrum, &w_code)?;
    let m = geo.dual.node_count();
    let w_r = &w_hat[..m_tilde];

    let mut candidates = Vec::with_capacity(cfg.delta_set.len());
    let mut memo: Vec<(Vec<f64>, Arc<Spectrum>)> = Vec::new();
    for &delta in &cfg.delta_set {
        let qw = quantize(w_r, delta)?;
        let mut padded = dequantize(&qw);
        padded.resize(m, 0.0);
        let w_full = igft(&geo.dual_spectrum, &padded)?;
        let w_t: Vec<f64> = w_full.iter().map(|v| v.clamp(W_MIN, 1.0)).collect();
        // Nearby steps often quantize to the same reconstructed graph; the
        // eigendecomposition is the expensive part, so share it.
        let spec = match memo.iter().find(|(wv, _)| wv == &w_t) {
            Some((_, s)) => s.clone(),
            None => {
                let s = Arc::new(spectrum_for_weights(geo, &w_t)?);
                memo.push((w_t.clone(), s.clone()));
                s
            }
        };
        let u_hat = gft(&spec, u)?;
        let qu = quantize(&u_hat, q)?;
        let u_deq = dequantize(&qu);
        let distortion: f64 = u_hat.iter().zip(&u_deq).map(|(a, b)| (a - b) * (a - b)).sum();
        debug_assert!(
            u_hat.iter().zip(&u_deq).all(|(a, b)| (a - b).abs() <= q / 2.0 + 1e-9 * q),
            "quantizer exceeded half-step bound"
        );
        let recon = igft(&spec, &u_deq)?;
        let rc_theory = spec.eigenvalues.iter().zip(u_hat.iter()).map(|(l, c)| l * c * c).sum();
        let rg_theory = gft(&geo.dual_spectrum, &w_t)?.iter().map(|v| v.abs()).sum();
        candidates.push(GftCandidate {
            w_indices: qw.indices,
            u_indices: qu.indices,
            distortion,
            recon,
            rc_theory,
            rg_theory,
        });
    }
    Ok(BlockAnalysis { converged: learned.converged, candidates, ..base })
}

/// Chooses the cheaper transform by measured cost against the live coder
/// state, encodes the block for real, and returns its record and pixel
/// reconstruction. Equal costs go to the DCT (cheaper decode).
fn serialize_block(
    enc: &mut RangeEncoder,
    cx: &mut CodecContexts,
    mut a: BlockAnalysis,
    mode: Mode,
    gamma: f64,
) -> Result<(BlockRecord, Vec<f64>)> {
    let baseline = 8.0 * enc.trial().finish().len() as f64;
    let dct_bits =
        trial_bits(enc, cx, mode, &BlockChoice::Dct { u_indices: &a.dct_u_indices })? - baseline;
    let dct_cost = rd_cost(a.dct_distortion, dct_bits, gamma);

    let mut best: Option<(usize, f64, f64)> = None;
    for (i, c) in a.candidates.iter().enumerate() {
        let choice = BlockChoice::Gft {
            delta_index: i,
            w_indices: &c.w_indices,
            u_indices: &c.u_indices,
        };
        let bits = trial_bits(enc, cx, mode, &choice)? - baseline;
        let cost = rd_cost(c.distortion, bits, gamma);
        if best.map_or(true, |(_, bc, _)| cost < bc) {
            best = Some((i, cost, bits));
        }
    }

    let gft_wins = matches!(best, Some((_, cost, _)) if cost < dct_cost);
    if gft_wins {
        let (i, _, bits) = best.unwrap();
        let cand = a.candidates.swap_remove(i);
        // Side-information share: everything before the coefficient payload.
        let mut e = enc.trial();
        let mut c = cx.clone();
        e.encode_bit(&mut c.transform_flag, true);
        e.encode_bypass_bits(i as u64, DELTA_INDEX_BITS);
        match mode {
            Mode::Natural => encode_lastpos_bitplane(&mut e, &mut c.w_bitplane, &cand.w_indices)?,
            Mode::Depth => encode_sigmap(&mut e, &mut c.w_sigmap, &cand.w_indices)?,
        }
        let graph_bits = (8.0 * e.finish().len() as f64 - baseline).max(0.0);
        write_block_syntax(
            enc,
            cx,
            mode,
            &BlockChoice::Gft {
                delta_index: i,
                w_indices: &cand.w_indices,
                u_indices: &cand.u_indices,
            },
        )?;
        let record = BlockRecord {
            bx: a.bx,
            by: a.by,
            class: a.class,
            converged: a.converged,
            use_gft: true,
            delta_index: Some(i),
            bits,
            graph_bits,
            dct_bits,
            distortion: cand.distortion,
            rc_theory: cand.rc_theory,
            rg_theory: cand.rg_theory,
        };
        Ok((record, cand.recon))
    } else {
        write_block_syntax(enc, cx, mode, &BlockChoice::Dct { u_indices: &a.dct_u_indices })?;
        let record = BlockRecord {
            bx: a.bx,
            by: a.by,
            class: a.class,
            converged: a.converged,
            use_gft: false,
            delta_index: None,
            bits: dct_bits,
            graph_bits: 0.0,
            dct_bits,
            distortion: a.dct_distortion,
            rc_theory: a.dct_rc_theory,
            rg_theory: 0.0,
        };
        Ok((record, a.dct_recon))
    }
}

fn pad_replicate(img: &GrayImage) -> (usize, usize, Vec<f64>) {
    let pw = img.width.div_ceil(BLOCK_SIDE) * BLOCK_SIDE;
    let ph = img.height.div_ceil(BLOCK_SIDE) * BLOCK_SIDE;
    let mut out = vec![0.0f64; pw * ph];
    for r in 0..ph {
        let sr = r.min(img.height - 1);
        for c in 0..pw {
            let sc = c.min(img.width - 1);
            out[r * pw + c] = img.pixels[sr * img.width + sc] as f64;
        }
    }
    (pw, ph, out)
}

fn extract_block(padded: &[f64], pw: usize, bx: usize, by: usize, side: usize) -> Vec<f64> {
    let mut block = Vec::with_capacity(side * side);
    for r in 0..side {
        let row = (by * side + r) * pw + bx * side;
        block.extend_from_slice(&padded[row..row + side]);
    }
    block
}

fn place_block(canvas: &mut [u8], pw: usize, bx: usize, by: usize, side: usize, block: &[f64]) {
    for r in 0..side {
        let row = (by * side + r) * pw + bx * side;
        for c in 0..side {
            canvas[row + c] = block[r * side + c].round().clamp(0.0, 255.0) as u8;
        }
    }
}

pub fn encode_image(img: &GrayImage, cfg: &EncoderConfig) -> Result<Encoded> {
    cfg.validate()?;
    if img.width == 0 || img.height == 0 {
        return Err(Error::InvalidParameter("image dimensions must be positive".into()));
    }
    if img.width > u16::MAX as usize || img.height > u16::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "image is {}x{}, the container caps dimensions at {}",
            img.width,
            img.height,
            u16::MAX
        )));
    }
    if img.pixels.len() != img.width * img.height {
        return Err(Error::Dimension(format!(
            "image has {} pixels, expected {}",
            img.pixels.len(),
            img.width * img.height
        )));
    }

    let q = cfg.coded_q();
    let geo = Geometry::shared(BLOCK_SIDE)?;
    let m_tilde = resolve_m_tilde(cfg.m_tilde, cfg.mode, geo.dual.node_count())?;
    let zz = zigzag_order(BLOCK_SIDE);
    let gamma = cfg.gamma();

    let (pw, ph, padded) = pad_replicate(img);
    let coords: Vec<(usize, usize)> = (0..ph / BLOCK_SIDE)
        .flat_map(|by| (0..pw / BLOCK_SIDE).map(move |bx| (bx, by)))
        .collect();

    let mut enc = RangeEncoder::new();
    let mut cx = CodecContexts::default();
    let mut recon_pad = vec![0u8; pw * ph];
    let mut records = Vec::with_capacity(coords.len());

    for batch in coords.chunks(BATCH) {
        let analyses: Vec<BlockAnalysis> = batch
            .par_iter()
            .map(|&(bx, by)| {
                let block = extract_block(&padded, pw, bx, by, BLOCK_SIDE);
                analyze_block(&block, bx, by, &geo, cfg, &zz, q, m_tilde)
            })
            .collect::<Result<Vec<_>>>()?;
        for a in analyses {
            let (record, recon) = serialize_block(&mut enc, &mut cx, a, cfg.mode, gamma)?;
            place_block(&mut recon_pad, pw, record.bx, record.by, BLOCK_SIDE, &recon);
            records.push(record);
        }
    }

    let payload = enc.finish();
    let mut bitstream = Vec::with_capacity(HEADER_LEN + payload.len());
    bitstream.extend_from_slice(&MAGIC);
    bitstream.extend_from_slice(&(img.width as u16).to_be_bytes());
    bitstream.extend_from_slice(&(img.height as u16).to_be_bytes());
    bitstream.push(BLOCK_SIDE as u8);
    bitstream.push(match cfg.mode {
        Mode::Natural => 0,
        Mode::Depth => 1,
    });
    bitstream.extend_from_slice(&(q as f32).to_be_bytes());
    bitstream.extend_from_slice(&payload);

    let mut pixels = Vec::with_capacity(img.width * img.height);
    for r in 0..img.height {
        pixels.extend_from_slice(&recon_pad[r * pw..r * pw + img.width]);
    }
    Ok(Encoded {
        bitstream,
        reconstruction: GrayImage::new(img.width, img.height, pixels)?,
        stats: EncodeStats { blocks: records },
    })
}

fn parse_header(bs: &[u8]) -> Result<(usize, usize, usize, Mode, f64)> {
    if bs.len() < HEADER_LEN {
        return Err(Error::Bitstream(format!(
            "stream has {} bytes, the header alone needs {HEADER_LEN}",
            bs.len()
        )));
    }
    if bs[..4] != MAGIC {
        return Err(Error::Bitstream("bad magic, not a coded image".into()));
    }
    let width = u16::from_be_bytes([bs[4], bs[5]]) as usize;
    let height = u16::from_be_bytes([bs[6], bs[7]]) as usize;
    let side = bs[8] as usize;
    let mode = match bs[9] {
        0 => Mode::Natural,
        1 => Mode::Depth,
        v => return Err(Error::Bitstream(format!("unknown mode byte {v}"))),
    };
    let q = f32::from_be_bytes([bs[10], bs[11], bs[12], bs[13]]) as f64;
    if width == 0 || height == 0 {
        return Err(Error::Bitstream(format!("image dimensions {width}x{height} are empty")));
    }
    if !(2..=64).contains(&side) {
        return Err(Error::Bitstream(format!("block side {side} outside 2..=64")));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Bitstream(format!("quantizer step {q} must be finite and > 0")));
    }
    Ok((width, height, side, mode, q))
}

#[allow(clippy::too_many_arguments)]
fn decode_block(
    dec: &mut RangeDecoder,
    cx: &mut CodecContexts,
    geo: &Geometry,
    mode: Mode,
    delta_set: &[f64],
    m_tilde: usize,
    zz: &[usize],
    q: f64,
    side: usize,
) -> Result<Vec<f64>> {
    let n = side * side;
    if dec.decode_bit(&mut cx.transform_flag)? {
        let di = dec.decode_bypass_bits(DELTA_INDEX_BITS)? as usize;
        let delta = *delta_set.get(di).ok_or_else(|| {
            Error::Bitstream(format!(
                "delta index {di} outside the configured set of {}",
                delta_set.len()
            ))
        })?;
        let w_indices = match mode {
            Mode::Natural => decode_lastpos_bitplane(dec, &mut cx.w_bitplane, m_tilde)?,
            Mode::Depth => decode_sigmap(dec, &mut cx.w_sigmap, m_tilde)?,
        };
        let mut padded: Vec<f64> = w_indices.iter().map(|&k| k as f64 * delta).collect();
        padded.resize(geo.dual.node_count(), 0.0);
        let w_full = igft(&geo.dual_spectrum, &padded)?;
        let w_t: Vec<f64> = w_full.iter().map(|v| v.clamp(W_MIN, 1.0)).collect();
        let spec = spectrum_for_weights(geo, &w_t)?;
        let u_indices = decode_lastpos_bitplane(dec, &mut cx.u_bitplane, n)?;
        let u_deq: Vec<f64> = u_indices.iter().map(|&k| k as f64 * q).collect();
        igft(&spec, &u_deq)
    } else {
        let u_indices = decode_lastpos_bitplane(dec, &mut cx.u_bitplane, n)?;
        let mut y = vec![0.0; n];
        for (p, &i) in zz.iter().enumerate() {
            y[i] = u_indices[p] as f64 * q;
        }
        dct2_inverse(&y, side)
    }
}

/// Decodes a bitstream back to pixels. Pass the encoder's config when it
/// used a non-default delta set, `m_tilde`, or solver overrides do not
/// matter here; with `None` the mode defaults apply.
pub fn decode_image(bs: &[u8], cfg: Option<&EncoderConfig>) -> Result<GrayImage> {
    let (width, height, side, mode, q) = parse_header(bs)?;
    if let Some(c) = cfg {
        c.validate()?;
        if c.mode != mode {
            return Err(Error::Config(format!(
                "config mode {:?} does not match bitstream mode {mode:?}",
                c.mode
            )));
        }
    }
    let default_deltas = DEFAULT_DELTA_SET;
    let delta_set: &[f64] = cfg.map_or(&default_deltas[..], |c| &c.delta_set);
    let geo = Geometry::shared(side)?;
    let m_tilde = resolve_m_tilde(cfg.and_then(|c| c.m_tilde), mode, geo.dual.node_count())?;
    let zz = zigzag_order(side);

    let pw = width.div_ceil(side) * side;
    let ph = height.div_ceil(side) * side;
    let mut dec = RangeDecoder::new(&bs[HEADER_LEN..])?;
    let mut cx = CodecContexts::default();
    let mut recon = vec![0u8; pw * ph];
    for by in 0..ph / side {
        for bx in 0..pw / side {
            let block = decode_block(&mut dec, &mut cx, &geo, mode, delta_set, m_tilde, &zz, q, side)
                .map_err(|e| Error::Decode { x: bx, y: by, reason: e.to_string() })?;
            place_block(&mut recon, pw, bx, by, side, &block);
        }
    }
    if dec.unread() > 4 {
        return Err(Error::Bitstream(format!(
            "{} trailing bytes after the last block",
            dec.unread() - 4
        )));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for r in 0..height {
        pixels.extend_from_slice(&recon[r * pw..r * pw + width]);
    }
    GrayImage::new(width, height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GridGraph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gradient_image(w: usize, h: usize) -> GrayImage {
        let pixels = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let mut v = 60.0 + 0.9 * x as f64 + 1.7 * y as f64;
                if x > 2 * w / 3 {
                    v += 45.0;
                }
                v.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        GrayImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn theoretical_rates_match_closed_forms() {
        let path2 = GridGraph::rect(1, 2).unwrap();
        let spec = eigendecompose(&path2.laplacian(&[1.0]).unwrap()).unwrap();
        assert!((theoretical_rate_rc(&spec, &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(theoretical_rate_rc(&spec, &[5.0, 5.0]).unwrap().abs() < 1e-12);

        // 3-node path: two edges sharing a node, so the dual is one edge.
        let path3 = GridGraph::rect(1, 3).unwrap();
        let geo_dual = crate::graph::DualGraph::new(&path3);
        let dual_spec = eigendecompose(&geo_dual.laplacian()).unwrap();
        let rg = theoretical_rate_rg(&dual_spec, &[1.0, 1.0]).unwrap();
        assert!((rg - 2.0f64.sqrt()).abs() < 1e-12, "rg = {rg}");
        assert!(theoretical_rate_rg(&dual_spec, &[0.0, 0.0]).unwrap().abs() < 1e-12);

        // Identity with the quadratic form on a random grid signal.
        let g = GridGraph::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f64> = (0..g.edge_count()).map(|_| rng.gen_range(0.05..1.0)).collect();
        let u: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let spec = eigendecompose(&g.laplacian(&w).unwrap()).unwrap();
        let rc = theoretical_rate_rc(&spec, &u).unwrap();
        let direct = g.smoothness(&w, &u).unwrap();
        assert!((rc - direct).abs() <= 1e-6 * (1.0 + direct.abs()), "{rc} vs {direct}");
    }

    #[test]
    fn config_validation_catches_bad_sets() {
        let mut cfg = EncoderConfig::new(Mode::Natural, 10.0);
        assert!(cfg.validate().is_ok());
        cfg.delta_set = vec![0.1, 0.1];
        assert!(cfg.validate().is_err());
        cfg.delta_set = (1..=9).map(|i| i as f64).collect();
        assert!(cfg.validate().is_err());
        cfg.delta_set = vec![];
        assert!(cfg.validate().is_err());
        cfg = EncoderConfig::new(Mode::Natural, 0.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn constant_image_codes_as_dc_only_dct() {
        let img = GrayImage::new(32, 32, vec![77u8; 1024]).unwrap();
        let cfg = EncoderConfig::new(Mode::Natural, 4.0);
        let enc = encode_image(&img, &cfg).unwrap();
        assert!(enc.stats.blocks.iter().all(|b| !b.use_gft), "tie must go to the DCT");
        let dec = decode_image(&enc.bitstream, None).unwrap();
        assert_eq!(dec, enc.reconstruction);
        for &p in &dec.pixels {
            assert!((p as f64 - 77.0).abs() <= 1.0, "pixel {p}");
        }
    }

    #[test]
    fn depth_step_block_prefers_the_learned_graph() {
        let pixels: Vec<u8> =
            (0..256).map(|i| if i % 16 >= 8 { 255u8 } else { 0u8 }).collect();
        let img = GrayImage::new(16, 16, pixels).unwrap();
        let cfg = EncoderConfig::new(Mode::Depth, 10.0);
        let enc = encode_image(&img, &cfg).unwrap();
        let b = &enc.stats.blocks[0];
        assert!(b.use_gft, "step block should pick the learned transform");
        assert!(b.bits < b.dct_bits, "GFT {} bits vs DCT {} bits", b.bits, b.dct_bits);
        assert!(b.graph_bits > 0.0 && b.graph_bits < b.bits);
        let dec = decode_image(&enc.bitstream, None).unwrap();
        assert_eq!(dec, enc.reconstruction);
    }

    #[test]
    fn roundtrip_is_bit_exact_with_padding_and_deterministic() {
        let img = gradient_image(33, 17);
        let cfg = EncoderConfig::new(Mode::Natural, 8.0);
        let enc = encode_image(&img, &cfg).unwrap();
        let enc2 = encode_image(&img, &cfg).unwrap();
        assert_eq!(enc.bitstream, enc2.bitstream, "same input must give the same stream");
        let dec = decode_image(&enc.bitstream, None).unwrap();
        assert_eq!((dec.width, dec.height), (33, 17));
        assert_eq!(dec, enc.reconstruction);
        for b in &enc.stats.blocks {
            let bound = 256.0 * cfg.coded_q() * cfg.coded_q() / 4.0;
            assert!(b.distortion <= bound + 1e-9, "block distortion {} > {bound}", b.distortion);
        }
    }

    #[test]
    fn depth_roundtrip_is_bit_exact() {
        let pixels: Vec<u8> =
            (0..32 * 32).map(|i| if i % 32 < 13 { 40u8 } else { 200u8 }).collect();
        let img = GrayImage::new(32, 32, pixels).unwrap();
        let cfg = EncoderConfig::new(Mode::Depth, 10.0);
        let enc = encode_image(&img, &cfg).unwrap();
        let dec = decode_image(&enc.bitstream, None).unwrap();
        assert_eq!(dec, enc.reconstruction);
        assert!(enc.stats.gft_blocks() > 0);
    }

    #[test]
    fn uniform_weights_reproduce_the_fixed_grid_transform() {
        let geo = Geometry::shared(BLOCK_SIDE).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..255.0)).collect();
        let w = vec![1.0; geo.grid.edge_count()];
        let spec = spectrum_for_weights(&geo, &w).unwrap();
        assert_eq!(gft(&spec, &u).unwrap(), gft(&geo.uniform_spectrum, &u).unwrap());
        // Scaling weights rescales eigenvalues but not the basis.
        let spec_half = spectrum_for_weights(&geo, &vec![0.5; geo.grid.edge_count()]).unwrap();
        assert_eq!(spec_half.basis, geo.uniform_spectrum.basis);
        assert!((spec_half.eigenvalues[100] - 0.5 * geo.uniform_spectrum.eigenvalues[100]).abs() < 1e-15);
    }

    #[test]
    fn malformed_streams_are_rejected() {
        let img = gradient_image(16, 16);
        let cfg = EncoderConfig::new(Mode::Natural, 8.0);
        let enc = encode_image(&img, &cfg).unwrap();
        let bs = enc.bitstream;

        let mut bad = bs.clone();
        bad[0] = b'X';
        assert!(matches!(decode_image(&bad, None), Err(Error::Bitstream(_))));
        let mut bad = bs.clone();
        bad[9] = 7;
        assert!(matches!(decode_image(&bad, None), Err(Error::Bitstream(_))));
        assert!(decode_image(&bs[..10], None).is_err());

        let mut trailing = bs.clone();
        trailing.extend_from_slice(&[0u8; 6]);
        assert!(matches!(decode_image(&trailing, None), Err(Error::Bitstream(_))));

        let truncated = &bs[..bs.len().saturating_sub(6)];
        match decode_image(truncated, None) {
            Err(Error::Decode { .. }) | Err(Error::Bitstream(_)) => {}
            other => panic!("truncated stream gave {other:?}"),
        }

        let depth_cfg = EncoderConfig::new(Mode::Depth, 8.0);
        assert!(matches!(decode_image(&bs, Some(&depth_cfg)), Err(Error::Config(_))));
    }

    #[test]
    fn worker_count_does_not_change_the_stream() {
        let img = gradient_image(32, 32);
        let cfg = EncoderConfig::new(Mode::Natural, 8.0);
        let multi = encode_image(&img, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| encode_image(&img, &cfg)).unwrap();
        assert_eq!(multi.bitstream, single.bitstream);
    }
}
