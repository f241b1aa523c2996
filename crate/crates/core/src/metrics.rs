//! Error statistics, bit error counting and Cramér–Rao reference bounds.

use crate::channel::wrap_phase;
use crate::error::{invalid, Result};
use std::f64::consts::PI;

/// Capability required to read truth parameters off a received ensemble.
///
/// Estimators never take one; scoring code grants itself one explicitly.
#[derive(Debug)]
pub struct TruthAccess {
    _private: (),
}

impl TruthAccess {
    pub fn grant() -> Self {
        Self { _private: () }
    }
}

/// Lower bound on the variance of a normalized frequency estimate (`f·T_s`)
/// from `k` data-aided samples, with per-satellite SNR `snr` combined over
/// `m` satellites: `3 / (2π² ρ K (K² − 1))`, `ρ = m · snr`.
pub fn crlb_frequency(k: usize, snr: f64, m: usize) -> Result<f64> {
    check_bound_args(k, snr, m)?;
    let (kf, rho) = (k as f64, m as f64 * snr);
    Ok(3.0 / (2.0 * PI * PI * rho * kf * (kf * kf - 1.0)))
}

/// Lower bound on the variance of the start-of-frame phase under joint
/// frequency and phase estimation: `(2K − 1) / (ρ K (K + 1))`, with the
/// same `ρ` as [`crlb_frequency`]. It tends to `2 / (ρK)`.
pub fn crlb_phase(k: usize, snr: f64, m: usize) -> Result<f64> {
    check_bound_args(k, snr, m)?;
    let (kf, rho) = (k as f64, m as f64 * snr);
    Ok((2.0 * kf - 1.0) / (rho * kf * (kf + 1.0)))
}

fn check_bound_args(k: usize, snr: f64, m: usize) -> Result<()> {
    if k < 3 {
        return invalid("bounds need K ≥ 3");
    }
    if !(snr > 0.0 && snr.is_finite()) {
        return invalid("SNR must be positive");
    }
    if m == 0 {
        return invalid("M must be ≥ 1");
    }
    Ok(())
}

/// Smallest signed angle from `est_rad` to `true_rad`, in `(-π, π]`.
pub fn phase_error(true_rad: f64, est_rad: f64) -> f64 {
    wrap_phase(true_rad - est_rad)
}

/// Streaming mean and mean square of a scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    /// `NaN` when empty.
    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Root of the mean square, which is the RMSE when the samples are errors.
    pub fn rms(&self) -> f64 {
        (self.sum_sq / self.count as f64).sqrt()
    }

    /// Standard error of the mean; `NaN` below two samples.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let var = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}

/// Errored and total information bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BitErrors {
    pub errors: u64,
    pub bits: u64,
}

impl BitErrors {
    pub fn push(&mut self, errors: usize, bits: usize) {
        self.errors += errors as u64;
        self.bits += bits as u64;
    }

    pub fn merge(&mut self, other: &BitErrors) {
        self.errors += other.errors;
        self.bits += other.bits;
    }

    pub fn ber(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }
}

/// Outcome of one simulated burst.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub true_nfo: Vec<f64>,
    pub est_nfo: Vec<f64>,
    pub true_cpo: Vec<f64>,
    pub est_cpo: Vec<f64>,
    pub bit_errors: usize,
    pub info_bits: usize,
    /// Combined-SNR loss reported by the coarse search, when one ran.
    pub loss_db: Option<f64>,
    /// Iterations the coarse search needed to settle, when one ran.
    pub coarse_iterations: Option<usize>,
    /// Best-so-far coarse-search loss after each iteration; empty when no
    /// search ran.
    pub loss_trace: Vec<f64>,
    pub degenerate: bool,
}

/// Aggregate of many trials at one operating point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub trials: u64,
    pub nfo_error: Moments,
    pub cpo_error: Moments,
    pub bits: BitErrors,
    pub loss_db: Moments,
    pub coarse_iterations: Moments,
    /// Per-iteration statistics of the best-so-far coarse loss.
    pub loss_trace: Vec<Moments>,
    pub degenerate: u64,
}

impl Summary {
    pub fn push(&mut self, r: &TrialRecord) {
        self.trials += 1;
        for (t, e) in r.true_nfo.iter().zip(&r.est_nfo) {
            self.nfo_error.push(e - t);
        }
        for (t, e) in r.true_cpo.iter().zip(&r.est_cpo) {
            self.cpo_error.push(phase_error(*t, *e));
        }
        self.bits.push(r.bit_errors, r.info_bits);
        if let Some(l) = r.loss_db {
            self.loss_db.push(l);
        }
        if let Some(i) = r.coarse_iterations {
            self.coarse_iterations.push(i as f64);
        }
        if self.loss_trace.len() < r.loss_trace.len() {
            self.loss_trace
                .resize(r.loss_trace.len(), Moments::default());
        }
        for (acc, &l) in self.loss_trace.iter_mut().zip(&r.loss_trace) {
            acc.push(l);
        }
        self.degenerate += r.degenerate as u64;
    }

    pub fn merge(&mut self, other: &Summary) {
        self.trials += other.trials;
        self.nfo_error.merge(&other.nfo_error);
        self.cpo_error.merge(&other.cpo_error);
        self.bits.merge(&other.bits);
        self.loss_db.merge(&other.loss_db);
        self.coarse_iterations.merge(&other.coarse_iterations);
        if self.loss_trace.len() < other.loss_trace.len() {
            self.loss_trace
                .resize(other.loss_trace.len(), Moments::default());
        }
        for (acc, o) in self.loss_trace.iter_mut().zip(&other.loss_trace) {
            acc.merge(o);
        }
        self.degenerate += other.degenerate;
    }
}

impl<'a> FromIterator<&'a TrialRecord> for Summary {
    fn from_iter<I: IntoIterator<Item = &'a TrialRecord>>(iter: I) -> Self {
        let mut s = Summary::default();
        for r in iter {
            s.push(r);
        }
        s
    }
}
