//! Coarse joint frequency/phase search by cross-entropy iteration.
//!
//! A hypothesis assigns each satellite a cell of a uniform `2^D`-cell
//! frequency grid over the post-acquisition offset range and one bit that
//! selects between the square-law phase estimate and its `π` alias. Each
//! candidate is scored by the loss of the code-aided combined SNR against
//! the ideal `M`-fold gain. Bits are drawn from independent Bernoulli
//! distributions that are pulled toward the elite candidates every
//! iteration.

use crate::channel::{es_n0_to_noise_psd, wrap_phase, ReceivedEnsemble};
use crate::error::{invalid, Result};
use crate::polar::{BoxPlus, BpConfig, BpDecoder, PolarCode};
use crate::softcombine::{
    estimate_snr_ca, llr_to_soft_symbols, snr_loss, square_law_phase, CombinedFrame, EstimateSet,
    SoftMapping,
};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

/// Coarse search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IceConfig {
    /// Frequency quantization bits per satellite (`D`).
    pub bits: usize,
    /// Candidates drawn per iteration (`N_c`).
    pub candidates: usize,
    /// Elites kept per iteration (`N_e`).
    pub elites: usize,
    pub max_iterations: usize,
    /// Weight of the elite frequencies in the probability update.
    pub smoothing: f64,
    /// Stop as soon as the best loss drops below this many dB.
    pub loss_threshold_db: Option<f64>,
    /// FFT size of the acquisition stage (`I`); sets the offset range.
    pub fft_points: usize,
    pub symbol_rate: f64,
    /// Decoder used to score candidates.
    pub candidate_bp: BpConfig,
    /// Decoder used to re-score the winning candidate.
    pub final_bp: BpConfig,
    pub soft_mapping: SoftMapping,
}

impl Default for IceConfig {
    fn default() -> Self {
        Self {
            bits: 6,
            candidates: 120,
            elites: 24,
            max_iterations: 10,
            smoothing: 0.8,
            loss_threshold_db: None,
            fft_points: 64,
            symbol_rate: 1000.0,
            candidate_bp: BpConfig {
                max_iterations: 15,
                kernel: BoxPlus::MinSum { scale: 0.9 },
            },
            final_bp: BpConfig::default(),
            soft_mapping: SoftMapping::default(),
        }
    }
}

impl IceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bits) {
            return invalid(format!("D = {} outside 1..=16", self.bits));
        }
        if self.elites == 0 || self.elites > self.candidates {
            return invalid(format!(
                "need 1 ≤ N_e ≤ N_c (N_e = {}, N_c = {})",
                self.elites, self.candidates
            ));
        }
        if self.max_iterations == 0 {
            return invalid("coarse search needs at least one iteration");
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return invalid("smoothing must lie in [0, 1]");
        }
        if self.fft_points == 0 || self.symbol_rate.is_nan() || self.symbol_rate <= 0.0 {
            return invalid("FFT size and symbol rate must be positive");
        }
        if self.candidate_bp.max_iterations == 0 || self.final_bp.max_iterations == 0 {
            return invalid("decoder budgets must be ≥ 1");
        }
        Ok(())
    }

    pub fn symbol_time_s(&self) -> f64 {
        1.0 / self.symbol_rate
    }

    /// Half-width of the offset range in Hz, `R_s / (2I)`.
    pub fn offset_range_hz(&self) -> f64 {
        self.symbol_rate / (2.0 * self.fft_points as f64)
    }

    /// Width of one grid cell in Hz.
    pub fn cell_width_hz(&self) -> f64 {
        self.symbol_rate / (self.fft_points as f64 * (1u64 << self.bits) as f64)
    }

    fn bits_per_satellite(&self) -> usize {
        self.bits + 1
    }
}

/// One candidate: per satellite, `D` frequency bits (least significant
/// first) followed by the phase-alias bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hypothesis {
    pub bits: Vec<u8>,
}

impl Hypothesis {
    /// Grid cell index and alias bit of satellite `m`.
    pub fn satellite(&self, m: usize, d: usize) -> (usize, bool) {
        let chunk = &self.bits[m * (d + 1)..(m + 1) * (d + 1)];
        (cell_index(&chunk[..d]), chunk[d] == 1)
    }
}

/// Bernoulli parameters of every hypothesis bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    pub p: Vec<f64>,
}

impl ProbabilityVector {
    pub fn uniform(len: usize) -> Self {
        Self { p: vec![0.5; len] }
    }
}

/// Result of the coarse search.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEstimate {
    /// Grid frequency and alias-resolved phase of the best candidate.
    pub estimates: EstimateSet,
    pub best_hypothesis: Hypothesis,
    /// Smallest loss over every evaluated candidate.
    pub best_loss_db: f64,
    /// Loss of the best candidate re-scored with the final decoder.
    pub final_loss_db: f64,
    pub iterations_run: usize,
    /// Best-so-far loss after each iteration.
    pub loss_trace: Vec<f64>,
    /// Distinct hypotheses scored.
    pub evaluations: usize,
}

impl CoarseEstimate {
    /// First iteration (1-based) after which the best-so-far loss stays
    /// within `tolerance_db` of its final value.
    pub fn settled_after(&self, tolerance_db: f64) -> usize {
        let last = *self.loss_trace.last().unwrap_or(&f64::INFINITY);
        self.loss_trace
            .iter()
            .position(|&l| l == last || l - last <= tolerance_db)
            .map_or(self.loss_trace.len(), |i| i + 1)
    }
}

fn cell_index(bits: &[u8]) -> usize {
    bits.iter()
        .enumerate()
        .map(|(d, &b)| (b as usize) << d)
        .sum()
}

/// Center of the grid cell addressed by `bits_m` (least significant bit
/// first): `(v + ½ − 2^{D−1}) · R_s / (I · 2^D)`.
pub fn decode_cfo_bits(bits_m: &[u8], cfg: &IceConfig) -> f64 {
    cell_center_hz(cell_index(bits_m), bits_m.len(), cfg)
}

fn cell_center_hz(v: usize, d: usize, cfg: &IceConfig) -> f64 {
    let cells = (1u64 << d) as f64;
    (v as f64 + 0.5 - cells / 2.0) * cfg.symbol_rate / (cfg.fft_points as f64 * cells)
}

/// Draws `n_c` hypotheses with independent Bernoulli bits.
pub fn sample_candidates<R: Rng + ?Sized>(
    p: &ProbabilityVector,
    n_c: usize,
    rng: &mut R,
) -> Vec<Hypothesis> {
    (0..n_c)
        .map(|_| Hypothesis {
            bits: p
                .p
                .iter()
                .map(|&pl| (rng.random::<f64>() < pl) as u8)
                .collect(),
        })
        .collect()
}

/// `p' = (1 − w)·p + (w / N_e)·Σ elites`.
pub fn update_probability(
    p: &ProbabilityVector,
    elites: &[Hypothesis],
    smoothing: f64,
) -> Result<ProbabilityVector> {
    if elites.is_empty() {
        return invalid("the update needs at least one elite");
    }
    let ne = elites.len() as f64;
    let p =
        p.p.iter()
            .enumerate()
            .map(|(l, &pl)| {
                let ones = elites.iter().filter(|e| e.bits[l] == 1).count() as f64;
                ((1.0 - smoothing) * pl + smoothing * ones / ne).clamp(0.0, 1.0)
            })
            .collect();
    Ok(ProbabilityVector { p })
}

/// Scores hypotheses against one received ensemble.
///
/// The compensated frame of every (satellite, grid cell) pair is computed
/// on first use and kept, as is the loss of every distinct hypothesis.
pub struct CandidateEvaluator<'a> {
    ensemble: &'a ReceivedEnsemble,
    cfg: &'a IceConfig,
    snr_single_db: f64,
    noise_psd: f64,
    decoder: BpDecoder<'a>,
    cells: Vec<Option<CellFrame>>,
    losses: HashMap<Vec<u8>, f64>,
    combined: Vec<Complex64>,
    llrs: Vec<f64>,
}

struct CellFrame {
    phase: f64,
    samples: Vec<Complex64>,
}

impl<'a> CandidateEvaluator<'a> {
    pub fn new(
        ensemble: &'a ReceivedEnsemble,
        cfg: &'a IceConfig,
        code: &'a PolarCode,
        snr_single_db: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if ensemble.frame_length() != code.block_length() {
            return invalid("frame length differs from code length");
        }
        let k = ensemble.frame_length();
        Ok(Self {
            ensemble,
            cfg,
            snr_single_db,
            noise_psd: es_n0_to_noise_psd(snr_single_db),
            decoder: BpDecoder::new(code, cfg.candidate_bp),
            cells: (0..ensemble.satellites() << cfg.bits)
                .map(|_| None)
                .collect(),
            losses: HashMap::new(),
            combined: vec![Complex64::new(0.0, 0.0); k],
            llrs: vec![0.0; k],
        })
    }

    pub fn hypothesis_len(&self) -> usize {
        self.ensemble.satellites() * self.cfg.bits_per_satellite()
    }

    /// Distinct hypotheses scored so far.
    pub fn evaluations(&self) -> usize {
        self.losses.len()
    }

    fn cell(&mut self, m: usize, v: usize) -> &CellFrame {
        let idx = (m << self.cfg.bits) + v;
        if self.cells[idx].is_none() {
            let t = self.cfg.symbol_time_s();
            let f = cell_center_hz(v, self.cfg.bits, self.cfg);
            let frame = &self.ensemble.frames()[m];
            // An all-zero frame has no phase to estimate; any value will do.
            let phase = square_law_phase(frame, f, t).unwrap_or(0.0);
            let w = TAU * f * t;
            let samples = frame
                .samples
                .iter()
                .enumerate()
                .map(|(k, &r)| r * Complex64::cis(-(w * k as f64 + phase)))
                .collect();
            self.cells[idx] = Some(CellFrame { phase, samples });
        }
        self.cells[idx].as_ref().unwrap()
    }

    /// Estimates implied by `h`.
    pub fn estimates(&mut self, h: &Hypothesis) -> Result<EstimateSet> {
        self.check(h)?;
        let d = self.cfg.bits;
        let (mut f, mut phi) = (Vec::new(), Vec::new());
        for m in 0..self.ensemble.satellites() {
            let (v, alias) = h.satellite(m, d);
            let phase = self.cell(m, v).phase;
            f.push(cell_center_hz(v, d, self.cfg));
            phi.push(wrap_phase(phase + if alias { PI } else { 0.0 }));
        }
        EstimateSet::new(f, phi)
    }

    fn check(&self, h: &Hypothesis) -> Result<()> {
        if h.bits.len() != self.hypothesis_len() || h.bits.iter().any(|&b| b > 1) {
            return invalid("hypothesis has the wrong length or non-binary entries");
        }
        Ok(())
    }

    /// Loss of `h` with the candidate decoder; `+∞` when the SNR estimate
    /// is degenerate. Results are cached per hypothesis.
    pub fn loss(&mut self, h: &Hypothesis) -> Result<f64> {
        self.check(h)?;
        if let Some(&l) = self.losses.get(&h.bits) {
            return Ok(l);
        }
        let l = self.score(h, None)?;
        self.losses.insert(h.bits.clone(), l);
        Ok(l)
    }

    /// Loss of `h` with an explicitly chosen decoder, bypassing the cache.
    pub fn loss_with(&mut self, h: &Hypothesis, bp: BpConfig) -> Result<f64> {
        self.check(h)?;
        self.score(h, Some(bp))
    }

    fn score(&mut self, h: &Hypothesis, bp: Option<BpConfig>) -> Result<f64> {
        let d = self.cfg.bits;
        let m_count = self.ensemble.satellites();
        let mut combined = std::mem::take(&mut self.combined);
        combined.fill(Complex64::new(0.0, 0.0));
        for m in 0..m_count {
            let (v, alias) = h.satellite(m, d);
            let cell = self.cell(m, v);
            // The π alias is an exact sign flip.
            if alias {
                combined
                    .iter_mut()
                    .zip(&cell.samples)
                    .for_each(|(c, s)| *c -= s);
            } else {
                combined
                    .iter_mut()
                    .zip(&cell.samples)
                    .for_each(|(c, s)| *c += s);
            }
        }
        let scale = 4.0 / self.noise_psd;
        for (l, c) in self.llrs.iter_mut().zip(&combined) {
            *l = scale * c.re;
        }
        let decoded = match bp {
            None => self.decoder.decode(&self.llrs)?,
            Some(cfg) => BpDecoder::new(self.decoder.code(), cfg).decode(&self.llrs)?,
        };
        let zeta = llr_to_soft_symbols(&decoded.posterior_llrs, self.cfg.soft_mapping);
        let frame = CombinedFrame { samples: combined };
        let loss = match estimate_snr_ca(&frame, &zeta) {
            Ok(g) => snr_loss(g, self.snr_single_db, m_count)?,
            Err(_) => f64::INFINITY,
        };
        self.combined = frame.samples;
        Ok(loss)
    }
}

/// Runs the cross-entropy search on `ensemble`.
///
/// `snr_single_db` is the per-satellite Es/N0, taken as known.
pub fn run_ice<R: Rng + ?Sized>(
    ensemble: &ReceivedEnsemble,
    cfg: &IceConfig,
    code: &PolarCode,
    snr_single_db: f64,
    rng: &mut R,
) -> Result<CoarseEstimate> {
    let mut eval = CandidateEvaluator::new(ensemble, cfg, code, snr_single_db)?;
    let mut p = ProbabilityVector::uniform(eval.hypothesis_len());

    let mut best: Option<(f64, Hypothesis)> = None;
    let mut trace = Vec::with_capacity(cfg.max_iterations);

    for _ in 0..cfg.max_iterations {
        let candidates = sample_candidates(&p, cfg.candidates, rng);
        let mut scored = candidates
            .into_iter()
            .enumerate()
            .map(|(i, h)| Ok((eval.loss(&h)?, i, h)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let (top_loss, _, top) = &scored[0];
        if best.as_ref().is_none_or(|(l, _)| top_loss < l) {
            best = Some((*top_loss, top.clone()));
        }
        let best_loss = best.as_ref().unwrap().0;
        trace.push(best_loss);

        let elites: Vec<Hypothesis> = scored
            .into_iter()
            .take(cfg.elites)
            .map(|(_, _, h)| h)
            .collect();
        p = update_probability(&p, &elites, cfg.smoothing)?;

        if cfg.loss_threshold_db.is_some_and(|t| best_loss < t) {
            break;
        }
    }

    let (best_loss_db, best_hypothesis) = best.expect("at least one iteration ran");
    let final_loss_db = eval.loss_with(&best_hypothesis, cfg.final_bp)?;
    Ok(CoarseEstimate {
        estimates: eval.estimates(&best_hypothesis)?,
        best_hypothesis,
        best_loss_db,
        final_loss_db,
        iterations_run: trace.len(),
        loss_trace: trace,
        evaluations: eval.evaluations(),
    })
}
