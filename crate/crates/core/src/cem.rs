//! Fine frequency/phase refinement by cooperative expectation-maximization.
//!
//! The E-step combines all satellites under the current estimates, decodes
//! the combined frame and turns the posterior LLRs into expected symbols.
//! The M-step re-estimates each satellite's residual offset by correlating
//! its own compensated frame with those expected symbols.

use crate::channel::{es_n0_to_noise_psd, wrap_phase, ReceivedEnsemble, ReceivedFrame};
use crate::error::{check_len, invalid, Error, Result};
use crate::ice::IceConfig;
use crate::polar::{BpConfig, BpDecoder, DecodeResult, PolarCode};
use crate::softcombine::{
    combine, combined_llrs, compensate, llr_to_soft_symbols, EstimateSet, SoftMapping, SoftSymbols,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Refinement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub max_iterations: usize,
    /// Points of the residual frequency grid; odd so that zero is on it.
    pub grid_points: usize,
    pub bp: BpConfig,
    pub soft_mapping: SoftMapping,
    /// Convergence threshold on the residual normalized frequency.
    pub nfo_tolerance: f64,
    /// Convergence threshold on the residual phase in radians.
    pub phase_tolerance: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            grid_points: 65,
            bp: BpConfig::default(),
            soft_mapping: SoftMapping::default(),
            nfo_tolerance: 1e-7,
            phase_tolerance: 1e-3,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 3 || self.grid_points.is_multiple_of(2) {
            return invalid(format!(
                "grid points must be odd and ≥ 3 (got {})",
                self.grid_points
            ));
        }
        if self.bp.max_iterations == 0 {
            return invalid("decoder budget must be ≥ 1");
        }
        Ok(())
    }
}

/// Half-width in Hz of the residual range left by a coarse search with
/// settings `ice`: half a grid cell, `R_s / (2^{D+1} I)`.
pub fn residual_half_span_hz(ice: &IceConfig) -> f64 {
    ice.cell_width_hz() / 2.0
}

/// Output of [`run_cem`].
#[derive(Debug, Clone, PartialEq)]
pub struct FineEstimate {
    pub estimates: EstimateSet,
    /// Decoder output for the frame combined under `estimates`.
    pub decoded: DecodeResult,
    pub converged: bool,
    /// Per iteration, the `(f_res, φ_res)` pair of every satellite.
    pub trace: Vec<Vec<(f64, f64)>>,
}

/// Combines under `current`, decodes and maps the posterior to soft symbols.
pub fn e_step(
    ensemble: &ReceivedEnsemble,
    current: &EstimateSet,
    decoder: &mut BpDecoder<'_>,
    mapping: SoftMapping,
    noise_psd: f64,
    symbol_time_s: f64,
) -> Result<(SoftSymbols, DecodeResult)> {
    let combined = combine(ensemble, current, symbol_time_s)?;
    let decoded = decoder.decode(&combined_llrs(&combined, noise_psd))?;
    Ok((
        llr_to_soft_symbols(&decoded.posterior_llrs, mapping),
        decoded,
    ))
}

/// `Σ_k r_k ζ_k e^{-j2π k f T}` for every `f` in `freqs`, using a running
/// phasor per frequency.
fn correlate(x: &[Complex64], freqs: &[f64], symbol_time_s: f64) -> Vec<Complex64> {
    freqs
        .iter()
        .map(|&f| {
            let step = Complex64::cis(-TAU * f * symbol_time_s);
            let mut rot = Complex64::new(1.0, 0.0);
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &xk) in x.iter().enumerate() {
                acc += xk * rot;
                rot *= step;
                // Renormalize now and then so the phasor stays on the unit circle.
                if k % 256 == 255 {
                    rot /= rot.norm();
                }
            }
            acc
        })
        .collect()
}

fn weighted(frame: &ReceivedFrame, zeta: &SoftSymbols) -> Result<Vec<Complex64>> {
    check_len("soft symbols", frame.len(), zeta.len())?;
    if zeta.is_null() {
        return Err(Error::Degenerate("soft symbols are all zero"));
    }
    Ok(frame
        .samples
        .iter()
        .zip(&zeta.zeta)
        .map(|(r, z)| r * z)
        .collect())
}

/// Residual frequency maximizing `|Σ r_k ζ_k e^{-j2π k f T}|` over a
/// symmetric grid of `grid_points` on `[-half_span_hz, half_span_hz]`,
/// refined by a parabola through the peak and its neighbours.
pub fn m_step_frequency(
    frame: &ReceivedFrame,
    zeta: &SoftSymbols,
    half_span_hz: f64,
    grid_points: usize,
    symbol_time_s: f64,
) -> Result<f64> {
    if grid_points < 3
        || grid_points.is_multiple_of(2)
        || half_span_hz.is_nan()
        || half_span_hz <= 0.0
    {
        return invalid("residual grid needs an odd point count ≥ 3 and a positive span");
    }
    let x = weighted(frame, zeta)?;
    let step = 2.0 * half_span_hz / (grid_points - 1) as f64;
    let freqs: Vec<f64> = (0..grid_points)
        .map(|i| -half_span_hz + i as f64 * step)
        .collect();
    let mags: Vec<f64> = correlate(&x, &freqs, symbol_time_s)
        .iter()
        .map(|c| c.norm())
        .collect();
    let mut peak = 0;
    for (i, &a) in mags.iter().enumerate() {
        if a > mags[peak] {
            peak = i;
        }
    }
    if peak == 0 || peak == grid_points - 1 {
        return Ok(freqs[peak]);
    }
    let (y0, y1, y2) = (mags[peak - 1], mags[peak], mags[peak + 1]);
    let curvature = y0 - 2.0 * y1 + y2;
    let delta = if curvature < 0.0 {
        (0.5 * (y0 - y2) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Ok(freqs[peak] + delta * step)
}

/// `arg(Σ r_k ζ_k e^{-j2π k f_res T})`, in `(-π, π]`.
pub fn m_step_phase(
    frame: &ReceivedFrame,
    zeta: &SoftSymbols,
    f_res_hz: f64,
    symbol_time_s: f64,
) -> Result<f64> {
    let x = weighted(frame, zeta)?;
    let acc = correlate(&x, &[f_res_hz], symbol_time_s)[0];
    if acc.norm_sqr() == 0.0 {
        return Err(Error::Degenerate("phase accumulator is zero"));
    }
    Ok(wrap_phase(acc.arg()))
}

/// Refines `coarse` on `ensemble`.
///
/// `half_span_hz` bounds each residual frequency search around the current
/// estimate; `snr_single_db` is the per-satellite Es/N0 used to scale the
/// decoder input. When the first E-step yields no usable soft symbols the
/// coarse estimates come back unchanged with `converged = false`.
/// Degenerate soft symbols at any iteration fall back the same way.
pub fn run_cem(
    ensemble: &ReceivedEnsemble,
    coarse: &EstimateSet,
    code: &PolarCode,
    cfg: &CemConfig,
    half_span_hz: f64,
    snr_single_db: f64,
    symbol_time_s: f64,
) -> Result<FineEstimate> {
    cfg.validate()?;
    check_len("coarse estimates", ensemble.satellites(), coarse.len())?;
    let noise_psd = es_n0_to_noise_psd(snr_single_db);
    let mut decoder = BpDecoder::new(code, cfg.bp);
    let mut current = coarse.clone();
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_iterations {
        let (zeta, _) = e_step(
            ensemble,
            &current,
            &mut decoder,
            cfg.soft_mapping,
            noise_psd,
            symbol_time_s,
        )?;
        if zeta.is_null() {
            let (_, decoded) = e_step(
                ensemble,
                coarse,
                &mut decoder,
                cfg.soft_mapping,
                noise_psd,
                symbol_time_s,
            )?;
            return Ok(FineEstimate {
                estimates: coarse.clone(),
                decoded,
                converged: false,
                trace,
            });
        }
        let mut residuals = Vec::with_capacity(ensemble.satellites());
        let (mut f, mut phi) = (
            current.cfo_hat_hz().to_vec(),
            current.cpo_hat_rad().to_vec(),
        );
        for (m, frame) in ensemble.frames().iter().enumerate() {
            let y = compensate(frame, f[m], phi[m], symbol_time_s);
            let f_res = m_step_frequency(&y, &zeta, half_span_hz, cfg.grid_points, symbol_time_s)?;
            let phi_res = m_step_phase(&y, &zeta, f_res, symbol_time_s)?;
            f[m] += f_res;
            phi[m] = wrap_phase(phi[m] + phi_res);
            residuals.push((f_res, phi_res));
        }
        current = EstimateSet::new(f, phi)?;
        converged = residuals.iter().all(|&(fr, pr)| {
            (fr * symbol_time_s).abs() < cfg.nfo_tolerance && pr.abs() < cfg.phase_tolerance
        });
        trace.push(residuals);
        if converged {
            break;
        }
    }

    let (_, decoded) = e_step(
        ensemble,
        &current,
        &mut decoder,
        cfg.soft_mapping,
        noise_psd,
        symbol_time_s,
    )?;
    Ok(FineEstimate {
        estimates: current,
        decoded,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, make_ensemble, SatelliteChannelParams};
    use crate::polar::InfoWord;
    use crate::txchain::{build_frame, SymbolFrame};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const T: f64 = 1e-3;

    fn half_span() -> f64 {
        residual_half_span_hz(&IceConfig::default())
    }

    fn burst(seed: u64) -> (PolarCode, SymbolFrame) {
        let code = PolarCode::construct(1024, 512, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = build_frame(&code, &InfoWord::random(512, &mut rng)).unwrap();
        (code, s)
    }

    fn genie(s: &SymbolFrame) -> SoftSymbols {
        SoftSymbols {
            zeta: s.symbols().to_vec(),
        }
    }

    fn rx(s: &SymbolFrame, nfo: f64, phi: f64, n: f64, seed: u64) -> ReceivedFrame {
        let p = SatelliteChannelParams::new(nfo / T, phi, n, T).unwrap();
        apply_channel(s, &p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    /// Arg-max of the correlation magnitude over a grid ten times finer.
    fn brute_force(
        frame: &ReceivedFrame,
        zeta: &SoftSymbols,
        half: f64,
        points: usize,
    ) -> (f64, f64) {
        let fine = (points - 1) * 10 + 1;
        let step = 2.0 * half / (fine - 1) as f64;
        let mut best = (0.0, f64::MIN);
        for i in 0..fine {
            let f = -half + i as f64 * step;
            let a: Complex64 = frame
                .samples
                .iter()
                .zip(&zeta.zeta)
                .enumerate()
                .map(|(k, (r, z))| r * z * Complex64::cis(-TAU * f * k as f64 * T))
                .sum();
            if a.norm() > best.1 {
                best = (f, a.norm());
            }
        }
        (best.0, step)
    }

    #[test]
    fn frequency_step_on_clean_frames() {
        let (_, s) = burst(1);
        let z = genie(&s);
        let f = m_step_frequency(&rx(&s, 5e-5, 0.7, 0.0, 0), &z, half_span(), 65, T).unwrap();
        assert!((f * T - 5e-5).abs() < 2e-6, "{}", f * T);
        let f0 = m_step_frequency(&rx(&s, 0.0, 0.7, 0.0, 0), &z, half_span(), 65, T).unwrap();
        assert!((f0 * T).abs() < 1e-7);
        let fp = m_step_frequency(&rx(&s, 3.3e-5, 0.0, 0.0, 0), &z, half_span(), 65, T).unwrap();
        let fm = m_step_frequency(&rx(&s, -3.3e-5, 0.0, 0.0, 0), &z, half_span(), 65, T).unwrap();
        assert!((fp + fm).abs() < 1e-9);
    }

    #[test]
    fn frequency_step_matches_brute_force() {
        let (_, s) = burst(2);
        let z = genie(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let half = half_span();
        for trial in 0..20 {
            let nfo = rng.random_range(-0.9..0.9) * half * T;
            let r = rx(&s, nfo, rng.random_range(-3.0..3.0), 1.0, trial);
            let f = m_step_frequency(&r, &z, half, 65, T).unwrap();
            let (oracle, fine_step) = brute_force(&r, &z, half, 65);
            assert!(
                (f - oracle).abs() <= fine_step,
                "trial {trial}: {f} vs {oracle}"
            );
            assert!(f.abs() <= half);
        }
    }

    #[test]
    fn frequency_step_stays_in_span() {
        let (_, s) = burst(4);
        let z = genie(&s);
        let half = half_span();
        let f = m_step_frequency(&rx(&s, 5.0 * half * T, 0.0, 0.0, 0), &z, half, 65, T).unwrap();
        assert!(f.abs() <= half);
    }

    #[test]
    fn phase_step() {
        let (_, s) = burst(5);
        let z = genie(&s);
        let p = m_step_phase(&rx(&s, 4e-5, 0.1, 0.0, 0), &z, 4e-5 / T, T).unwrap();
        assert!((p - 0.1).abs() < 1e-9);
        let p = m_step_phase(&rx(&s, 0.0, PI, 0.0, 0), &z, 0.0, T).unwrap();
        assert!((p - PI).abs() < 1e-9);
    }

    #[test]
    fn null_soft_symbols_are_degenerate() {
        let (_, s) = burst(6);
        let r = rx(&s, 0.0, 0.0, 0.0, 0);
        let z = SoftSymbols {
            zeta: vec![0.0; 1024],
        };
        assert!(matches!(
            m_step_frequency(&r, &z, 1.0, 65, T),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            m_step_phase(&r, &z, 0.0, T),
            Err(Error::Degenerate(_))
        ));
        assert!(m_step_frequency(&r, &genie(&s), 1.0, 64, T).is_err());
    }

    #[test]
    fn phase_step_with_genie_symbols_is_near_bound() {
        let (_, s) = burst(7);
        let z = genie(&s);
        let snr = 10f64.powf(0.3);
        let mut sum_sq = 0.0;
        for trial in 0..200 {
            let r = rx(&s, 0.0, 0.4, 1.0 / snr, 100 + trial);
            let f = m_step_frequency(&r, &z, half_span(), 65, T).unwrap();
            let p = m_step_phase(&r, &z, f, T).unwrap();
            sum_sq += wrap_phase(p - 0.4).powi(2);
        }
        let rmse = (sum_sq / 200.0).sqrt();
        let bound = crate::metrics::crlb_phase(1024, snr, 1).unwrap().sqrt();
        assert!(rmse <= 2.0 * bound, "{rmse} vs {bound}");
    }

    #[test]
    fn e_step_soft_symbols() {
        let (code, s) = burst(8);
        let links = [SatelliteChannelParams::new(0.0, 0.0, 0.0, T).unwrap(); 2];
        let e = make_ensemble(&s, &links, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut dec = BpDecoder::new(&code, BpConfig::default());
        let (z, _) = e_step(
            &e,
            &EstimateSet::zeros(2),
            &mut dec,
            SoftMapping::default(),
            0.01,
            T,
        )
        .unwrap();
        assert_eq!(z.zeta, s.symbols());

        let n = es_n0_to_noise_psd(-3.0);
        let links = [SatelliteChannelParams::new(0.0, 0.0, n, T).unwrap(); 4];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut total = 0.0;
        for _ in 0..20 {
            let e = make_ensemble(&s, &links, &mut rng).unwrap();
            let (z, _) = e_step(
                &e,
                &EstimateSet::zeros(4),
                &mut dec,
                SoftMapping::default(),
                n,
                T,
            )
            .unwrap();
            total += z
                .zeta
                .iter()
                .zip(s.symbols())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / 1024.0;
        }
        assert!(total / 20.0 >= 0.8, "{}", total / 20.0);
    }

    #[test]
    fn noiseless_refinement_recovers_injected_residuals() {
        let (code, s) = burst(9);
        let truth_f = [3.1, -4.4];
        let truth_phi = [2.0, -0.5];
        let links: Vec<_> = (0..2)
            .map(|m| SatelliteChannelParams::new(truth_f[m], truth_phi[m], 0.0, T).unwrap())
            .collect();
        let e = make_ensemble(&s, &links, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let coarse =
            EstimateSet::new(vec![3.1 - 0.05, -4.4 + 0.08], vec![2.0 + 0.3, -0.5 - 0.2]).unwrap();
        let out = run_cem(
            &e,
            &coarse,
            &code,
            &CemConfig::default(),
            half_span(),
            20.0,
            T,
        )
        .unwrap();
        assert!(out.converged);
        let first = &out.trace[0];
        for m in 0..2 {
            let total_f = coarse.cfo_hat_hz()[m] + first[m].0;
            assert!((total_f - truth_f[m]).abs() * T < 1e-7, "{m}: {total_f}");
            assert!((out.estimates.cfo_hat_hz()[m] - truth_f[m]).abs() * T < 1e-7);
            assert!(wrap_phase(out.estimates.cpo_hat_rad()[m] - truth_phi[m]).abs() < 1e-3);
        }
        assert!(out.decoded.converged);
        assert_eq!(
            code.encode(&out.decoded.info_hat).unwrap().bits(),
            out.decoded.codeword_hat().bits()
        );
    }

    /// The M-step accumulator evaluated at successive iterates never shrinks.
    #[test]
    fn accumulator_grows_across_iterations() {
        let (_, s) = burst(10);
        let links = [SatelliteChannelParams::new(2.0, 1.0, 0.0, T).unwrap(); 1];
        let e = make_ensemble(&s, &links, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let z = genie(&s);
        let accumulator = |f: f64, phi: f64| -> f64 {
            let y = compensate(&e.frames()[0], f, phi, T);
            correlate(&weighted(&y, &z).unwrap(), &[0.0], T)[0].re
        };
        let mut f = 2.0 - 0.09;
        let mut phi = 0.5;
        let mut prev = accumulator(f, phi);
        for _ in 0..4 {
            let y = compensate(&e.frames()[0], f, phi, T);
            let fr = m_step_frequency(&y, &z, half_span(), 65, T).unwrap();
            let pr = m_step_phase(&y, &z, fr, T).unwrap();
            f += fr;
            phi = wrap_phase(phi + pr);
            let now = accumulator(f, phi);
            assert!(now >= prev - 1e-9, "{now} < {prev}");
            prev = now;
        }
    }

    #[test]
    fn totals_compose_with_sequential_compensation() {
        let (_, s) = burst(11);
        let r = rx(&s, 1e-3, 0.3, 0.5, 1);
        let once = compensate(&r, 1.25 + 0.02, wrap_phase(2.9 + 0.5), T);
        let twice = compensate(&compensate(&r, 1.25, 2.9, T), 0.02, 0.5, T);
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn hopeless_input_falls_back_to_coarse() {
        let (code, _) = burst(12);
        let zero = ReceivedFrame {
            samples: vec![Complex64::new(0.0, 0.0); 1024],
        };
        let e = ReceivedEnsemble::from_frames(vec![zero.clone(), zero]).unwrap();
        let coarse = EstimateSet::new(vec![1.0, 2.0], vec![0.1, 0.2]).unwrap();
        let out = run_cem(
            &e,
            &coarse,
            &code,
            &CemConfig::default(),
            half_span(),
            0.0,
            T,
        )
        .unwrap();
        assert!(!out.converged);
        assert_eq!(out.estimates, coarse);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(CemConfig::default().validate().is_ok());
        assert!(CemConfig {
            grid_points: 64,
            ..CemConfig::default()
        }
        .validate()
        .is_err());
        assert!(CemConfig {
            grid_points: 1,
            ..CemConfig::default()
        }
        .validate()
        .is_err());
    }
}
