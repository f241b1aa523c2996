//! Polar codes: construction, encoding and belief-propagation decoding.
//!
//! The generator is `G_N = F^{⊗n}` with `F = [[1, 0], [1, 1]]` and no bit
//! reversal, so `x = u · G_N` is computed by `n` butterfly stages that apply
//! `x[a] ^= x[a + h]` for `h = 1, 2, 4, …`.
//!
//! The decoder runs message passing over the `(n + 1) × N` factor graph of
//! those butterflies and exports posterior LLRs on the coded bits, which is
//! what the code-aided estimators consume. LLRs use the natural-log domain
//! with the convention `L = ln(P(bit = 0) / P(bit = 1))`, so a positive LLR
//! decides bit 0.

use crate::error::{check_len, invalid, Result};
use serde::{Deserialize, Serialize};

/// Magnitude at which every LLR and every BP message is clamped.
pub const LLR_MAX: f64 = 30.0;

/// Construction of a polar code: block length, information set and frozen set.
///
/// A code description is immutable once built and can be shared freely
/// between threads; decoders keep their own scratch space.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    block_length: usize,
    stages: usize,
    design_snr_db: f64,
    frozen_mask: Vec<bool>,
    frozen_set: Vec<usize>,
    info_positions: Vec<usize>,
    sign_anchor: Option<usize>,
}

/// Information word `u` (one bit per entry).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InfoWord(Vec<u8>);

/// Polar codeword `x` (one bit per entry).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Codeword(Vec<u8>);

macro_rules! bit_vector {
    ($name:ident) => {
        impl $name {
            /// Wraps a bit vector; every entry must be 0 or 1.
            pub fn new(bits: Vec<u8>) -> Result<Self> {
                if let Some(pos) = bits.iter().position(|&b| b > 1) {
                    return invalid(format!("non-binary entry {} at {pos}", bits[pos]));
                }
                Ok(Self(bits))
            }

            pub fn zeros(len: usize) -> Self {
                Self(vec![0; len])
            }

            pub fn bits(&self) -> &[u8] {
                &self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn into_bits(self) -> Vec<u8> {
                self.0
            }

            /// Number of positions where `self` and `other` differ.
            pub fn hamming_distance(&self, other: &Self) -> usize {
                self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
            }
        }
    };
}

bit_vector!(InfoWord);
bit_vector!(Codeword);

impl InfoWord {
    /// Draws a uniformly random information word.
    pub fn random<R: rand::Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random::<bool>() as u8).collect())
    }
}

/// Check-node combining rule used by the decoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BoxPlus {
    /// Exact sum-product rule `2·atanh(tanh(a/2)·tanh(b/2))`.
    #[default]
    SumProduct,
    /// `scale · sign(a)·sign(b)·min(|a|, |b|)`.
    MinSum { scale: f64 },
}

impl BoxPlus {
    /// Reference evaluation of the rule; the decoder uses the tabulated
    /// equivalent in [`Kernel`].
    pub fn apply(self, a: f64, b: f64) -> f64 {
        let (aa, ab) = (a.abs(), b.abs());
        let mag = match self {
            BoxPlus::SumProduct => {
                let corr = (-(aa + ab)).exp().ln_1p() - (-(aa - ab).abs()).exp().ln_1p();
                (aa.min(ab) + corr).max(0.0)
            }
            BoxPlus::MinSum { scale } => scale * aa.min(ab),
        };
        if (a < 0.0) ^ (b < 0.0) {
            -mag
        } else {
            mag
        }
    }
}

/// Check-node rule as used inside the message-passing loops.
trait Kernel: Copy {
    fn boxplus(self, a: f64, b: f64) -> f64;
}

/// `mag` (non-negative) carrying the sign of `a · b`, without branches.
#[inline(always)]
fn with_sign_of_product(mag: f64, a: f64, b: f64) -> f64 {
    const SIGN: u64 = 1 << 63;
    f64::from_bits(mag.to_bits() | ((a.to_bits() ^ b.to_bits()) & SIGN))
}

#[derive(Clone, Copy)]
struct MinSumKernel(f64);

impl Kernel for MinSumKernel {
    #[inline(always)]
    fn boxplus(self, a: f64, b: f64) -> f64 {
        let mag = self.0 * a.abs().min(b.abs());
        with_sign_of_product(mag, a, b)
    }
}

const CORR_STEP: f64 = 1.0 / 64.0;
const CORR_LEN: usize = 16 * 64 + 2;

/// `ln(1 + e^{-x})` sampled on `[0, 16]` for linear interpolation.
/// The interpolation error is below 2e-6, far under any LLR resolution
/// that matters to the decoder.
static CORRECTION: std::sync::LazyLock<[f64; CORR_LEN]> = std::sync::LazyLock::new(|| {
    let mut t = [0.0; CORR_LEN];
    for (i, v) in t.iter_mut().enumerate() {
        *v = (-(i as f64) * CORR_STEP).exp().ln_1p();
    }
    t
});

#[derive(Clone, Copy)]
struct SumProductKernel(&'static [f64; CORR_LEN]);

impl SumProductKernel {
    #[inline(always)]
    fn correction(self, x: f64) -> f64 {
        let pos = x * (1.0 / CORR_STEP);
        if pos >= (CORR_LEN - 2) as f64 {
            return 0.0;
        }
        let i = pos as usize;
        let frac = pos - i as f64;
        let t = self.0;
        t[i] + (t[i + 1] - t[i]) * frac
    }
}

impl Kernel for SumProductKernel {
    #[inline(always)]
    fn boxplus(self, a: f64, b: f64) -> f64 {
        let (aa, ab) = (a.abs(), b.abs());
        let mag =
            (aa.min(ab) + self.correction(aa + ab) - self.correction((aa - ab).abs())).max(0.0);
        with_sign_of_product(mag, a, b)
    }
}

/// Decoder settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpConfig {
    pub max_iterations: usize,
    pub kernel: BoxPlus,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 40,
            kernel: BoxPlus::SumProduct,
        }
    }
}

impl BpConfig {
    pub fn with_iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            ..Self::default()
        }
    }
}

/// Output of [`BpDecoder::decode`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Hard decisions on the information positions.
    pub info_hat: InfoWord,
    /// Posterior LLR of every coded bit, clamped to `±LLR_MAX`.
    pub posterior_llrs: Vec<f64>,
    pub iterations_used: usize,
    /// True when the hard decisions re-encode to the coded-bit decisions.
    pub converged: bool,
}

impl DecodeResult {
    /// Hard decisions on the coded bits (positive LLR decides 0).
    pub fn codeword_hat(&self) -> Codeword {
        Codeword(
            self.posterior_llrs
                .iter()
                .map(|&l| (l < 0.0) as u8)
                .collect(),
        )
    }
}

/// Bhattacharyya parameters of the `2^stages` synthetic channels obtained
/// by polarizing a BPSK-AWGN channel at `design_snr_db` (Es/N0).
///
/// Index `i` of the result follows the natural (non bit-reversed) order
/// used by the encoder.
pub fn bhattacharyya_parameters(stages: usize, design_snr_db: f64) -> Vec<f64> {
    let z0 = (-(10f64.powf(design_snr_db / 10.0))).exp();
    let mut z = vec![z0];
    for _ in 0..stages {
        z = z
            .iter()
            .flat_map(|&zj| [2.0 * zj - zj * zj, zj * zj])
            .collect();
    }
    z
}

impl PolarCode {
    /// Builds the code whose frozen set is the `block_length - info_length`
    /// synthetic channels with the largest Bhattacharyya parameter at
    /// `design_snr_db`. Ties break toward freezing the lower index.
    pub fn construct(block_length: usize, info_length: usize, design_snr_db: f64) -> Result<Self> {
        if block_length < 2 || !block_length.is_power_of_two() {
            return invalid(format!(
                "block length {block_length} is not a power of two ≥ 2"
            ));
        }
        if info_length == 0 || info_length >= block_length {
            return invalid(format!(
                "info length {info_length} must lie in 1..{block_length}"
            ));
        }
        if !design_snr_db.is_finite() {
            return invalid("design SNR must be finite");
        }
        let stages = block_length.trailing_zeros() as usize;
        let z = bhattacharyya_parameters(stages, design_snr_db);
        let mut order: Vec<usize> = (0..block_length).collect();
        // Least reliable first.
        order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
        let mut frozen_mask = vec![false; block_length];
        for &i in &order[..block_length - info_length] {
            frozen_mask[i] = true;
        }
        Ok(Self::from_mask(frozen_mask, stages, design_snr_db, None))
    }

    /// Builds a code of the same dimension whose frozen set additionally
    /// contains index `N - 1`, the row of `G_N` that equals the all-ones word.
    ///
    /// The information set is the `info_length + 1` most reliable channels
    /// minus `N - 1`. Freezing that row removes the complement symmetry of
    /// the code, so a receiver decoding with [`PolarCode::relaxed`] can read
    /// the global BPSK sign off the recovered anchor bit.
    pub fn construct_sign_anchored(
        block_length: usize,
        info_length: usize,
        design_snr_db: f64,
    ) -> Result<Self> {
        if info_length + 1 >= block_length {
            return invalid(format!(
                "sign-anchored code needs info length < {} (got {info_length})",
                block_length - 1
            ));
        }
        let base = Self::construct(block_length, info_length + 1, design_snr_db)?;
        let anchor = block_length - 1;
        let mut mask = base.frozen_mask;
        // N-1 is always the most reliable channel, so it sits in the base info set.
        debug_assert!(!mask[anchor]);
        mask[anchor] = true;
        Ok(Self::from_mask(
            mask,
            base.stages,
            design_snr_db,
            Some(anchor),
        ))
    }

    fn from_mask(
        frozen_mask: Vec<bool>,
        stages: usize,
        design_snr_db: f64,
        sign_anchor: Option<usize>,
    ) -> Self {
        let frozen_set = (0..frozen_mask.len()).filter(|&i| frozen_mask[i]).collect();
        let info_positions = (0..frozen_mask.len())
            .filter(|&i| !frozen_mask[i])
            .collect();
        Self {
            block_length: frozen_mask.len(),
            stages,
            design_snr_db,
            frozen_mask,
            frozen_set,
            info_positions,
            sign_anchor,
        }
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn info_length(&self) -> usize {
        self.info_positions.len()
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn design_snr_db(&self) -> f64 {
        self.design_snr_db
    }

    pub fn rate(&self) -> f64 {
        self.info_length() as f64 / self.block_length as f64
    }

    /// Frozen indices in increasing order.
    pub fn frozen_set(&self) -> &[usize] {
        &self.frozen_set
    }

    /// Information indices in increasing order.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen_mask[index]
    }

    /// Index of the sign anchor, if this code was built with one.
    pub fn sign_anchor(&self) -> Option<usize> {
        self.sign_anchor
    }

    /// The supercode with the sign anchor released; `self` when there is none.
    ///
    /// The relaxed code contains the all-ones word, so it decodes a frame
    /// regardless of its global sign.
    pub fn relaxed(&self) -> PolarCode {
        match self.sign_anchor {
            None => self.clone(),
            Some(anchor) => {
                let mut mask = self.frozen_mask.clone();
                mask[anchor] = false;
                Self::from_mask(mask, self.stages, self.design_snr_db, None)
            }
        }
    }

    /// Splits an information word of [`PolarCode::relaxed`] into this code's
    /// information word and the value decoded at the anchor position.
    pub fn split_relaxed_info(&self, relaxed: &InfoWord) -> Result<(InfoWord, Option<u8>)> {
        let Some(anchor) = self.sign_anchor else {
            check_len("relaxed info word", self.info_length(), relaxed.len())?;
            return Ok((relaxed.clone(), None));
        };
        check_len("relaxed info word", self.info_length() + 1, relaxed.len())?;
        let relaxed_code = self.relaxed();
        let mut info = Vec::with_capacity(self.info_length());
        let mut anchor_bit = 0;
        for (&pos, &bit) in relaxed_code.info_positions().iter().zip(relaxed.bits()) {
            if pos == anchor {
                anchor_bit = bit;
            } else {
                info.push(bit);
            }
        }
        Ok((InfoWord(info), Some(anchor_bit)))
    }

    /// Places `u` on the information positions (frozen positions are 0).
    pub fn extend(&self, u: &InfoWord) -> Result<Vec<u8>> {
        check_len("info word", self.info_length(), u.len())?;
        let mut v = vec![0u8; self.block_length];
        for (&pos, &bit) in self.info_positions.iter().zip(u.bits()) {
            v[pos] = bit;
        }
        Ok(v)
    }

    /// Encodes `u` into `x = (frozen-extended u) · G_N` over GF(2).
    pub fn encode(&self, u: &InfoWord) -> Result<Codeword> {
        let mut v = self.extend(u)?;
        polar_transform(&mut v);
        Ok(Codeword(v))
    }

    /// Returns `true` when `x` is a codeword of this code.
    pub fn is_codeword(&self, x: &Codeword) -> bool {
        if x.len() != self.block_length {
            return false;
        }
        // G_N is an involution over GF(2).
        let mut u = x.0.clone();
        polar_transform(&mut u);
        self.frozen_set.iter().all(|&i| u[i] == 0)
    }
}

/// In-place butterfly evaluation of `v · G_N`.
pub fn polar_transform(v: &mut [u8]) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for a in block..block + h {
                v[a] ^= v[a + h];
            }
        }
        h *= 2;
    }
}

/// Belief-propagation decoder with reusable scratch buffers.
///
/// Messages `left` travel from the channel (stage `n`) toward the
/// information bits (stage 0); `right` travel the other way. One iteration
/// is a full right-to-left sweep followed by a left-to-right sweep.
#[derive(Debug, Clone)]
pub struct BpDecoder<'a> {
    code: &'a PolarCode,
    config: BpConfig,
    left: Vec<f64>,
    right: Vec<f64>,
    scratch: Vec<u8>,
}

#[inline(always)]
fn clamp_llr(x: f64) -> f64 {
    x.clamp(-LLR_MAX, LLR_MAX)
}

impl<'a> BpDecoder<'a> {
    pub fn new(code: &'a PolarCode, config: BpConfig) -> Self {
        let size = (code.stages + 1) * code.block_length;
        Self {
            code,
            config,
            left: vec![0.0; size],
            right: vec![0.0; size],
            scratch: vec![0; code.block_length],
        }
    }

    pub fn code(&self) -> &PolarCode {
        self.code
    }

    /// Decodes one frame of channel LLRs.
    pub fn decode(&mut self, channel_llrs: &[f64]) -> Result<DecodeResult> {
        let n = self.code.block_length;
        let stages = self.code.stages;
        check_len("channel LLRs", n, channel_llrs.len())?;
        if self.config.max_iterations == 0 {
            return invalid("max_iterations must be ≥ 1");
        }
        if let Some(k) = channel_llrs.iter().position(|l| !l.is_finite()) {
            return invalid(format!("channel LLR {k} is not finite"));
        }

        self.left.fill(0.0);
        self.right.fill(0.0);
        for (dst, &l) in self.left[stages * n..].iter_mut().zip(channel_llrs) {
            *dst = clamp_llr(l);
        }
        for i in 0..n {
            if self.code.frozen_mask[i] {
                self.right[i] = LLR_MAX;
            }
        }

        let (iterations_used, converged) = match self.config.kernel {
            BoxPlus::SumProduct => self.iterate(SumProductKernel(&CORRECTION)),
            BoxPlus::MinSum { scale } => self.iterate(MinSumKernel(scale)),
        };

        let posterior_llrs: Vec<f64> = (0..n)
            .map(|i| clamp_llr(self.left[stages * n + i] + self.right[stages * n + i]))
            .collect();
        let info_hat = InfoWord(
            self.code
                .info_positions
                .iter()
                .map(|&i| ((self.left[i] + self.right[i]) < 0.0) as u8)
                .collect(),
        );
        Ok(DecodeResult {
            info_hat,
            posterior_llrs,
            iterations_used,
            converged,
        })
    }

    fn iterate<K: Kernel>(&mut self, kernel: K) -> (usize, bool) {
        let n = self.code.block_length;
        let stages = self.code.stages;
        for it in 1..=self.config.max_iterations {
            // Channel side toward the information bits.
            for s in (0..stages).rev() {
                let (lo, hi) = self.left.split_at_mut((s + 1) * n);
                sweep(
                    kernel,
                    &mut lo[s * n..],
                    &hi[..n],
                    &self.right[s * n..(s + 1) * n],
                    1 << s,
                );
            }
            // Information bits toward the channel.
            for s in 0..stages {
                let (lo, hi) = self.right.split_at_mut((s + 1) * n);
                sweep(
                    kernel,
                    &mut hi[..n],
                    &lo[s * n..],
                    &self.left[(s + 1) * n..(s + 2) * n],
                    1 << s,
                );
            }
            if self.consistent() {
                return (it, true);
            }
        }
        (self.config.max_iterations, false)
    }

    /// Re-encodes the information-bit decisions and compares them with the
    /// coded-bit decisions. A zero posterior counts as undecided.
    fn consistent(&mut self) -> bool {
        let n = self.code.block_length;
        let top = self.code.stages * n;
        for i in 0..n {
            self.scratch[i] = if self.code.frozen_mask[i] {
                0
            } else {
                let l = self.left[i] + self.right[i];
                if l == 0.0 {
                    return false;
                }
                (l < 0.0) as u8
            };
        }
        polar_transform(&mut self.scratch);
        (0..n).all(|i| {
            let l = self.left[top + i] + self.right[top + i];
            l != 0.0 && ((l < 0.0) as u8) == self.scratch[i]
        })
    }
}

/// Updates one side of every butterfly at a stage of half-width `h`.
///
/// With `(a, b)` the upper and lower rows of a butterfly, `through` the
/// messages arriving on the far side and `beside` the messages on the near
/// side travelling the other way, the outputs are
/// `out[a] = f(through[a], through[b] + beside[b])` and
/// `out[b] = f(through[a], beside[a]) + through[b]`. The same rule serves
/// both sweep directions.
#[inline(always)]
fn sweep<K: Kernel>(kernel: K, out: &mut [f64], through: &[f64], beside: &[f64], h: usize) {
    for ((o, t), s) in out
        .chunks_exact_mut(2 * h)
        .zip(through.chunks_exact(2 * h))
        .zip(beside.chunks_exact(2 * h))
    {
        let (oa, ob) = o.split_at_mut(h);
        let (ta, tb) = t.split_at(h);
        let (sa, sb) = s.split_at(h);
        for i in 0..h {
            oa[i] = clamp_llr(kernel.boxplus(ta[i], tb[i] + sb[i]));
            ob[i] = clamp_llr(kernel.boxplus(ta[i], sa[i]) + tb[i]);
        }
    }
}

/// One-shot decode with a fresh decoder.
pub fn bp_decode(code: &PolarCode, channel_llrs: &[f64], config: BpConfig) -> Result<DecodeResult> {
    BpDecoder::new(code, config).decode(channel_llrs)
}
