//! Per-satellite channel: carrier frequency offset, carrier phase offset and
//! circular complex AWGN applied to a BPSK frame.

use crate::error::{invalid, Result};
use crate::metrics::TruthAccess;
use crate::txchain::SymbolFrame;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::{PI, TAU};

/// Wraps an angle to `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Complex noise variance `N` for unit-energy symbols at `es_n0_db`.
pub fn es_n0_to_noise_psd(es_n0_db: f64) -> f64 {
    10f64.powf(-es_n0_db / 10.0)
}

/// Truth parameters of one satellite link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteChannelParams {
    pub cfo_hz: f64,
    /// Carrier phase offset in `(-π, π]`.
    pub cpo_rad: f64,
    /// Total complex noise variance; each quadrature carries half of it.
    /// Zero gives a noiseless link.
    pub noise_psd: f64,
    pub symbol_time_s: f64,
    pub amplitude: f64,
}

impl SatelliteChannelParams {
    pub fn new(cfo_hz: f64, cpo_rad: f64, noise_psd: f64, symbol_time_s: f64) -> Result<Self> {
        let p = Self {
            cfo_hz,
            cpo_rad,
            noise_psd,
            symbol_time_s,
            amplitude: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Normalized frequency offset `Δf · T_s`.
    pub fn nfo(&self) -> f64 {
        self.cfo_hz * self.symbol_time_s
    }

    fn validate(&self) -> Result<()> {
        if !self.cfo_hz.is_finite() {
            return invalid("CFO must be finite");
        }
        if !(self.cpo_rad > -PI && self.cpo_rad <= PI) {
            return invalid(format!("CPO {} outside (-π, π]", self.cpo_rad));
        }
        if !(self.noise_psd >= 0.0 && self.noise_psd.is_finite()) {
            return invalid(format!(
                "noise psd {} must be finite and ≥ 0",
                self.noise_psd
            ));
        }
        if !(self.symbol_time_s > 0.0 && self.symbol_time_s.is_finite()) {
            return invalid("symbol time must be positive");
        }
        if self.amplitude != 1.0 {
            return invalid("amplitude is fixed at 1");
        }
        Ok(())
    }
}

/// Received baseband samples of one satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub samples: Vec<Complex64>,
}

impl ReceivedFrame {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Frames of all satellites for one transmitted burst.
///
/// The truth parameters ride along for scoring and are only reachable with
/// a [`TruthAccess`] token.
#[derive(Debug, Clone)]
pub struct ReceivedEnsemble {
    frames: Vec<ReceivedFrame>,
    truth: Option<Vec<SatelliteChannelParams>>,
}

impl ReceivedEnsemble {
    /// Assembles an ensemble from frames of equal, non-zero length.
    pub fn from_frames(frames: Vec<ReceivedFrame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return invalid("an ensemble needs at least one frame");
        };
        let k = first.len();
        if k == 0 {
            return invalid("frames must not be empty");
        }
        if let Some(m) = frames.iter().position(|f| f.len() != k) {
            return invalid(format!(
                "frame {m} has length {} (expected {k})",
                frames[m].len()
            ));
        }
        Ok(Self {
            frames,
            truth: None,
        })
    }

    pub fn frames(&self) -> &[ReceivedFrame] {
        &self.frames
    }

    /// Number of satellites `M`.
    pub fn satellites(&self) -> usize {
        self.frames.len()
    }

    /// Frame length `K`.
    pub fn frame_length(&self) -> usize {
        self.frames[0].len()
    }

    pub fn truth(&self, _access: &TruthAccess) -> Option<&[SatelliteChannelParams]> {
        self.truth.as_deref()
    }
}

/// `r_k = s_k · exp(j(2π k Δf T_s + φ)) + n_k`.
pub fn apply_channel<R: Rng + ?Sized>(
    s: &SymbolFrame,
    p: &SatelliteChannelParams,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    p.validate()?;
    let sigma = (p.noise_psd / 2.0).sqrt();
    let w = TAU * p.nfo();
    let samples = s
        .symbols()
        .iter()
        .enumerate()
        .map(|(k, &sk)| {
            let rotated = Complex64::cis(w * k as f64 + p.cpo_rad) * (p.amplitude * sk);
            if sigma == 0.0 {
                rotated
            } else {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                rotated + Complex64::new(re, im) * sigma
            }
        })
        .collect();
    Ok(ReceivedFrame { samples })
}

/// Passes `s` through every link in `params`. Each satellite draws its noise
/// from its own generator seeded from `rng`, so streams are independent.
pub fn make_ensemble<R: Rng + ?Sized>(
    s: &SymbolFrame,
    params: &[SatelliteChannelParams],
    rng: &mut R,
) -> Result<ReceivedEnsemble> {
    if params.is_empty() {
        return invalid("at least one satellite is required");
    }
    if s.is_empty() {
        return invalid("symbol frame is empty");
    }
    let frames = params
        .iter()
        .map(|p| {
            let mut child = ChaCha8Rng::seed_from_u64(rng.next_u64());
            apply_channel(s, p, &mut child)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReceivedEnsemble {
        frames,
        truth: Some(params.to_vec()),
    })
}
