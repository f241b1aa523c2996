//! Seeded Monte Carlo campaigns over the experiment grid.

use crate::config::{ExperimentConfig, Mode, Point};
use anyhow::{Context, Result};
use coopsync_core::channel::{es_n0_to_noise_psd, make_ensemble, SatelliteChannelParams};
use coopsync_core::ice::run_ice;
use coopsync_core::metrics::{Summary, TrialRecord};
use coopsync_core::polar::{InfoWord, PolarCode};
use coopsync_core::receiver::{decode_with, receive};
use coopsync_core::softcombine::EstimateSet;
use coopsync_core::txchain::build_frame;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::Instant;

/// Seed of one trial, derived from the master seed and its grid position.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&(point as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&(trial as u64).to_le_bytes());
    ChaCha8Rng::from_seed(seed).next_u64()
}

/// Aggregated outcome of one grid point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: Point,
    pub summary: Summary,
    /// Sum of the per-trial compute times.
    pub trial_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub points: Vec<PointResult>,
    pub wall_seconds: f64,
    pub threads: usize,
}

/// Runs every trial of every grid point on a pool of `threads` workers
/// (all cores when `None`). Records are reduced in trial order, so the
/// result does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput> {
    cfg.validate()?;
    let code = cfg.code.build()?;
    let points = cfg.points();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("cannot start worker pool")?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();

    let start = Instant::now();
    let records: Vec<(TrialRecord, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, t)| {
                let t0 = Instant::now();
                let record = run_trial(cfg, &points[p], &code, trial_seed(cfg.seed, p, t));
                (record, t0.elapsed().as_secs_f64())
            })
            .collect()
    });
    let wall_seconds = start.elapsed().as_secs_f64();

    let results = points
        .into_iter()
        .zip(records.chunks(cfg.trials))
        .map(|(point, chunk)| PointResult {
            summary: chunk.iter().map(|(r, _)| r).collect(),
            trial_seconds: chunk.iter().map(|(_, s)| s).sum(),
            point,
        })
        .collect();
    Ok(RunOutput {
        points: results,
        wall_seconds,
        threads: pool.current_num_threads(),
    })
}

/// Simulates one burst at `point`. Estimator failures are recorded as a
/// degenerate trial that contributes no bits and no estimates.
pub fn run_trial(
    cfg: &ExperimentConfig,
    point: &Point,
    code: &PolarCode,
    seed: u64,
) -> TrialRecord {
    match try_trial(cfg, point, code, seed) {
        Ok(record) => record,
        Err(e) => {
            eprintln!(
                "warning: trial with seed {seed} at point {} is degenerate: {e:#}",
                point.index
            );
            TrialRecord {
                seed,
                true_nfo: Vec::new(),
                est_nfo: Vec::new(),
                true_cpo: Vec::new(),
                est_cpo: Vec::new(),
                bit_errors: 0,
                info_bits: 0,
                loss_db: None,
                coarse_iterations: None,
                loss_trace: Vec::new(),
                degenerate: true,
            }
        }
    }
}

fn try_trial(
    cfg: &ExperimentConfig,
    point: &Point,
    code: &PolarCode,
    seed: u64,
) -> Result<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ice = cfg.ice_for(point);
    let t = ice.symbol_time_s();
    let nfo_range = ice.offset_range_hz() * t;
    let noise_psd = es_n0_to_noise_psd(point.es_n0_db);

    let u = InfoWord::random(code.info_length(), &mut rng);
    let frame = build_frame(code, &u)?;
    let mut true_nfo = Vec::with_capacity(point.satellites);
    let mut true_cpo = Vec::with_capacity(point.satellites);
    let mut links = Vec::with_capacity(point.satellites);
    for _ in 0..point.satellites {
        let nfo = point
            .nfo
            .unwrap_or_else(|| rng.random_range(-nfo_range..nfo_range));
        let cpo = point
            .cpo_rad
            .unwrap_or_else(|| PI - rng.random_range(0.0..2.0 * PI));
        links.push(SatelliteChannelParams::new(nfo / t, cpo, noise_psd, t)?);
        true_nfo.push(nfo);
        true_cpo.push(cpo);
    }
    let ensemble = make_ensemble(&frame, &links, &mut rng)?;

    let mut record = TrialRecord {
        seed,
        true_nfo,
        est_nfo: Vec::new(),
        true_cpo,
        est_cpo: Vec::new(),
        bit_errors: 0,
        info_bits: code.info_length(),
        loss_db: None,
        coarse_iterations: None,
        loss_trace: Vec::new(),
        degenerate: false,
    };
    let bp = cfg.receiver.final_bp;
    let info_hat = match point.mode {
        Mode::Uncompensated => {
            let est = EstimateSet::zeros(point.satellites);
            Some(decode_with(&ensemble, &est, code, bp, point.es_n0_db, t)?.info_hat)
        }
        Mode::Ideal => {
            let est = EstimateSet::new(
                links.iter().map(|l| l.cfo_hz).collect(),
                links.iter().map(|l| l.cpo_rad).collect(),
            )?;
            Some(decode_with(&ensemble, &est, code, bp, point.es_n0_db, t)?.info_hat)
        }
        Mode::Ice => {
            let coarse = run_ice(&ensemble, &ice, &code.relaxed(), point.es_n0_db, &mut rng)?;
            record.est_nfo = coarse
                .estimates
                .cfo_hat_hz()
                .iter()
                .map(|f| f * t)
                .collect();
            record.loss_db = Some(coarse.final_loss_db);
            record.coarse_iterations = Some(coarse.settled_after(cfg.report.settle_tolerance_db));
            record.loss_trace = coarse.loss_trace;
            record.info_bits = 0;
            None
        }
        Mode::IceCem => {
            let receiver = coopsync_core::receiver::ReceiverConfig {
                ice,
                ..cfg.receiver.clone()
            };
            let out = receive(&ensemble, code, &receiver, point.es_n0_db, &mut rng)?;
            record.est_nfo = out.estimates.cfo_hat_hz().iter().map(|f| f * t).collect();
            record.est_cpo = out.estimates.cpo_hat_rad().to_vec();
            record.loss_db = Some(out.coarse.final_loss_db);
            record.coarse_iterations =
                Some(out.coarse.settled_after(cfg.report.settle_tolerance_db));
            record.loss_trace = out.coarse.loss_trace;
            Some(out.info_hat)
        }
    };
    if let Some(info_hat) = info_hat {
        record.bit_errors = info_hat.hamming_distance(&u);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let a = trial_seed(7, 0, 0);
        assert_eq!(a, trial_seed(7, 0, 0));
        let mut all = vec![
            a,
            trial_seed(7, 0, 1),
            trial_seed(7, 1, 0),
            trial_seed(8, 0, 0),
        ];
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 4);
    }

    fn tiny(mode: Mode) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_toml(
            r#"
            trials = 3
            [code]
            block_length = 128
            info_length = 64
            [grid]
            satellites = [2]
            es_n0_db = [2.0]
            [receiver.ice]
            candidates = 30
            elites = 6
            max_iterations = 3
            "#,
        )
        .unwrap();
        cfg.grid.modes = vec![mode];
        cfg
    }

    #[test]
    fn every_mode_produces_records() {
        for mode in [Mode::Uncompensated, Mode::Ideal, Mode::Ice, Mode::IceCem] {
            let out = run_experiment(&tiny(mode), Some(1)).unwrap();
            let s = &out.points[0].summary;
            assert_eq!(s.trials, 3, "{mode:?}");
            assert_eq!(s.degenerate, 0, "{mode:?}");
            match mode {
                Mode::Ice => {
                    assert_eq!(s.bits.bits, 0);
                    assert_eq!(s.loss_trace.len(), 3);
                    assert_eq!(s.nfo_error.count, 6);
                }
                Mode::IceCem => {
                    assert_eq!(s.bits.bits, 3 * 64);
                    assert_eq!(s.cpo_error.count, 6);
                }
                _ => {
                    assert_eq!(s.bits.bits, 3 * 64);
                    assert_eq!(s.nfo_error.count, 0);
                }
            }
        }
    }

    #[test]
    fn ideal_sync_decodes_clean_links() {
        let mut cfg = tiny(Mode::Ideal);
        cfg.grid.es_n0_db = vec![10.0];
        let out = run_experiment(&cfg, Some(1)).unwrap();
        assert_eq!(out.points[0].summary.bits.errors, 0);
    }

    #[test]
    fn fixed_offsets_are_applied() {
        let mut cfg = tiny(Mode::Uncompensated);
        cfg.grid.satellites = vec![1];
        cfg.grid.es_n0_db = vec![10.0];
        cfg.grid.nfo = vec![0.0];
        cfg.grid.cpo_rad = vec![0.0, PI / 2.0];
        let out = run_experiment(&cfg, Some(1)).unwrap();
        assert_eq!(out.points[0].summary.bits.errors, 0);
        // A quarter turn moves all signal energy out of the decision axis.
        assert!(out.points[1].summary.bits.ber() > 0.3);
    }
}
