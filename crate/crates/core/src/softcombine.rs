//! Compensation, coherent combining, square-law phase estimation, soft
//! symbol mapping and code-aided SNR estimation.

use crate::channel::{wrap_phase, ReceivedEnsemble, ReceivedFrame};
use crate::error::{check_len, invalid, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Upper clamp on the estimated combined SNR (linear, i.e. +20 dB).
pub const SNR_CLAMP: f64 = 100.0;

/// Per-satellite frequency and phase estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    cfo_hat_hz: Vec<f64>,
    cpo_hat_rad: Vec<f64>,
}

impl EstimateSet {
    /// Builds an estimate set; phases are wrapped to `(-π, π]`.
    pub fn new(cfo_hat_hz: Vec<f64>, cpo_hat_rad: Vec<f64>) -> Result<Self> {
        check_len("phase estimates", cfo_hat_hz.len(), cpo_hat_rad.len())?;
        if cfo_hat_hz.is_empty() {
            return invalid("estimate set is empty");
        }
        if cfo_hat_hz
            .iter()
            .chain(&cpo_hat_rad)
            .any(|x| !x.is_finite())
        {
            return invalid("estimates must be finite");
        }
        Ok(Self {
            cfo_hat_hz,
            cpo_hat_rad: cpo_hat_rad.into_iter().map(wrap_phase).collect(),
        })
    }

    /// `m` satellites with zero offsets.
    pub fn zeros(m: usize) -> Self {
        Self {
            cfo_hat_hz: vec![0.0; m],
            cpo_hat_rad: vec![0.0; m],
        }
    }

    pub fn cfo_hat_hz(&self) -> &[f64] {
        &self.cfo_hat_hz
    }

    pub fn cpo_hat_rad(&self) -> &[f64] {
        &self.cpo_hat_rad
    }

    pub fn len(&self) -> usize {
        self.cfo_hat_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cfo_hat_hz.is_empty()
    }

    /// Adds `π` to every phase estimate.
    pub fn flipped(&self) -> Self {
        Self {
            cfo_hat_hz: self.cfo_hat_hz.clone(),
            cpo_hat_rad: self
                .cpo_hat_rad
                .iter()
                .map(|&p| wrap_phase(p + std::f64::consts::PI))
                .collect(),
        }
    }
}

/// Coherent sum of the compensated frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedFrame {
    pub samples: Vec<Complex64>,
}

impl CombinedFrame {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Expected transmitted symbols given the decoder output, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSymbols {
    pub zeta: Vec<f64>,
}

impl SoftSymbols {
    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    /// True when every entry is exactly zero.
    pub fn is_null(&self) -> bool {
        self.zeta.iter().all(|&z| z == 0.0)
    }
}

/// Map from posterior LLR to expected BPSK symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SoftMapping {
    /// `tanh(L / 2)`.
    Exact,
    /// `α·L` inside `[-T_h, T_h]`, saturated to `±1` outside.
    Piecewise { alpha: f64, threshold: f64 },
}

impl Default for SoftMapping {
    fn default() -> Self {
        SoftMapping::Piecewise {
            alpha: 1.0 / 3.0,
            threshold: 3.0,
        }
    }
}

impl SoftMapping {
    pub fn map(self, llr: f64) -> f64 {
        match self {
            SoftMapping::Exact => (llr / 2.0).tanh(),
            SoftMapping::Piecewise { alpha, threshold } => {
                if llr > threshold {
                    1.0
                } else if llr < -threshold {
                    -1.0
                } else {
                    (alpha * llr).clamp(-1.0, 1.0)
                }
            }
        }
    }
}

/// `r_k · exp(-j(2π k f T_s + φ))`.
pub fn compensate(
    frame: &ReceivedFrame,
    f_hat_hz: f64,
    phi_hat_rad: f64,
    symbol_time_s: f64,
) -> ReceivedFrame {
    let w = TAU * f_hat_hz * symbol_time_s;
    ReceivedFrame {
        samples: frame
            .samples
            .iter()
            .enumerate()
            .map(|(k, &r)| r * Complex64::cis(-(w * k as f64 + phi_hat_rad)))
            .collect(),
    }
}

/// Equal-gain coherent combining of all satellites under `estimates`.
pub fn combine(
    ensemble: &ReceivedEnsemble,
    estimates: &EstimateSet,
    symbol_time_s: f64,
) -> Result<CombinedFrame> {
    combine_weighted(ensemble, estimates, symbol_time_s, None)
}

/// Coherent combining with optional real per-satellite weights.
pub fn combine_weighted(
    ensemble: &ReceivedEnsemble,
    estimates: &EstimateSet,
    symbol_time_s: f64,
    weights: Option<&[f64]>,
) -> Result<CombinedFrame> {
    let m = ensemble.satellites();
    check_len("estimates", m, estimates.len())?;
    if let Some(w) = weights {
        check_len("combining weights", m, w.len())?;
    }
    let mut samples = vec![Complex64::new(0.0, 0.0); ensemble.frame_length()];
    for (i, frame) in ensemble.frames().iter().enumerate() {
        let gain = weights.map_or(1.0, |w| w[i]);
        let y = compensate(
            frame,
            estimates.cfo_hat_hz[i],
            estimates.cpo_hat_rad[i],
            symbol_time_s,
        );
        for (acc, v) in samples.iter_mut().zip(y.samples) {
            *acc += v * gain;
        }
    }
    Ok(CombinedFrame { samples })
}

/// Square-law (non-data-aided) phase estimate after removing `f_cand_hz`:
/// `½ · arg(Σ r_k² · exp(-j 4π f k T_s))`, in `(-π/2, π/2]`.
///
/// BPSK squaring leaves the result ambiguous by `π`.
pub fn square_law_phase(frame: &ReceivedFrame, f_cand_hz: f64, symbol_time_s: f64) -> Result<f64> {
    let w = 2.0 * TAU * f_cand_hz * symbol_time_s;
    let acc: Complex64 = frame
        .samples
        .iter()
        .enumerate()
        .map(|(k, &r)| r * r * Complex64::cis(-w * k as f64))
        .sum();
    if acc.norm_sqr() == 0.0 || !acc.norm_sqr().is_finite() {
        return Err(Error::Degenerate("square-law accumulator is zero"));
    }
    Ok(0.5 * acc.arg())
}

pub fn llr_to_soft_symbols(posterior_llrs: &[f64], mapping: SoftMapping) -> SoftSymbols {
    SoftSymbols {
        zeta: posterior_llrs.iter().map(|&l| mapping.map(l)).collect(),
    }
}

/// Channel LLRs of a combined frame built from `M` equal-gain branches, each
/// with complex noise variance `noise_psd`: `L_k = 4 · Re(r_com,k) / N`.
pub fn combined_llrs(combined: &CombinedFrame, noise_psd: f64) -> Vec<f64> {
    combined
        .samples
        .iter()
        .map(|r| 4.0 * r.re / noise_psd)
        .collect()
}

/// Code-aided SNR estimate
/// `γ̂ = (K − 3/2)·C² / (K·(K·P − C²))` with `C = Σ Re(r_k ζ_k)` and
/// `P = Σ |r_k|²`.
///
/// A zero correlation or zero power is degenerate. A non-positive
/// denominator with non-zero correlation means the decisions explain all
/// received power; the estimate then saturates at [`SNR_CLAMP`], which also
/// caps every other result.
pub fn estimate_snr_ca(combined: &CombinedFrame, zeta: &SoftSymbols) -> Result<f64> {
    let k = combined.len();
    check_len("soft symbols", k, zeta.len())?;
    if k < 2 {
        return invalid("SNR estimation needs K ≥ 2");
    }
    let (c, p) = combined
        .samples
        .iter()
        .zip(&zeta.zeta)
        .fold((0.0, 0.0), |(c, p), (r, z)| {
            (c + r.re * z, p + r.norm_sqr())
        });
    if c == 0.0 || p == 0.0 {
        return Err(Error::Degenerate("zero correlation or zero power"));
    }
    let kf = k as f64;
    let c2 = c * c;
    let denom = kf * (kf * p - c2);
    if denom <= 0.0 {
        return Ok(SNR_CLAMP);
    }
    Ok(((kf - 1.5) * c2 / denom).min(SNR_CLAMP))
}

/// Shortfall of the estimated combined SNR against the ideal `M`-fold gain,
/// in dB.
pub fn snr_loss(gamma_hat: f64, snr_single_db: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return invalid("M must be ≥ 1");
    }
    if gamma_hat.is_nan() || gamma_hat <= 0.0 {
        return Err(Error::Degenerate("non-positive SNR estimate"));
    }
    Ok(snr_single_db + 10.0 * (m as f64).log10() - 10.0 * gamma_hat.log10())
}
