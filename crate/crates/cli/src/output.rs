//! Result tables and run manifests.

use crate::config::ExperimentConfig;
use crate::runner::{PointResult, RunOutput};
use anyhow::{Context, Result};
use coopsync_core::metrics::{crlb_frequency, crlb_phase};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// One CSV row: a grid point and its aggregated metrics. Empty cells mean
/// the metric does not apply to the point's mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub point: usize,
    pub mode: &'static str,
    pub satellites: usize,
    pub es_n0_db: f64,
    pub eb_n0_db: f64,
    pub bits: usize,
    pub candidates: usize,
    pub elites: usize,
    pub nfo: Option<f64>,
    pub cpo_rad: Option<f64>,
    pub trials: u64,
    pub degenerate: u64,
    pub rmse_nfo: Option<f64>,
    pub crlb_nfo: f64,
    pub rmse_cpo_rad: Option<f64>,
    pub crlb_cpo_rad: f64,
    pub bit_errors: u64,
    pub info_bits: u64,
    pub ber: Option<f64>,
    pub mean_loss_db: Option<f64>,
    pub loss_std_error_db: Option<f64>,
    pub mean_settle_iterations: Option<f64>,
    /// Mean best-so-far coarse loss after each iteration, `;`-separated.
    pub loss_trace_db: String,
}

impl Row {
    pub fn new(cfg: &ExperimentConfig, config_hash: &str, r: &PointResult) -> Self {
        let p = &r.point;
        let s = &r.summary;
        let snr = 10f64.powf(p.es_n0_db / 10.0);
        let k = cfg.code.block_length;
        let some = |count: u64, x: f64| (count > 0).then_some(x);
        Row {
            scenario: cfg.scenario.clone(),
            config_hash: config_hash.to_string(),
            seed: cfg.seed,
            point: p.index,
            mode: p.mode.as_str(),
            satellites: p.satellites,
            es_n0_db: p.es_n0_db,
            eb_n0_db: p.es_n0_db - 10.0 * cfg.code.rate().log10(),
            bits: p.bits,
            candidates: p.candidates,
            elites: p.elites,
            nfo: p.nfo,
            cpo_rad: p.cpo_rad,
            trials: s.trials,
            degenerate: s.degenerate,
            rmse_nfo: some(s.nfo_error.count, s.nfo_error.rms()),
            crlb_nfo: crlb_frequency(k, snr, p.satellites).map_or(f64::NAN, f64::sqrt),
            rmse_cpo_rad: some(s.cpo_error.count, s.cpo_error.rms()),
            crlb_cpo_rad: crlb_phase(k, snr, p.satellites).map_or(f64::NAN, f64::sqrt),
            bit_errors: s.bits.errors,
            info_bits: s.bits.bits,
            ber: some(s.bits.bits, s.bits.ber()),
            mean_loss_db: some(s.loss_db.count, s.loss_db.mean()),
            loss_std_error_db: some(s.loss_db.count, s.loss_db.std_error()),
            mean_settle_iterations: some(s.coarse_iterations.count, s.coarse_iterations.mean()),
            loss_trace_db: s
                .loss_trace
                .iter()
                .map(|m| m.mean().to_string())
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

pub fn rows(cfg: &ExperimentConfig, out: &RunOutput) -> Vec<Row> {
    let hash = cfg.hash();
    out.points.iter().map(|r| Row::new(cfg, &hash, r)).collect()
}

pub fn csv_bytes(rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().context("cannot flush CSV buffer")
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    run: RunInfo<'a>,
    config: &'a ExperimentConfig,
}

#[derive(Debug, Serialize)]
struct RunInfo<'a> {
    scenario: &'a str,
    seed: u64,
    config_hash: String,
    csv_sha256: String,
    threads: usize,
    wall_seconds: f64,
    point_seconds: Vec<f64>,
    tool_version: &'static str,
}

pub fn manifest_text(cfg: &ExperimentConfig, out: &RunOutput, csv: &[u8]) -> Result<String> {
    let m = Manifest {
        run: RunInfo {
            scenario: &cfg.scenario,
            seed: cfg.seed,
            config_hash: cfg.hash(),
            csv_sha256: hex::encode(Sha256::digest(csv)),
            threads: out.threads,
            wall_seconds: out.wall_seconds,
            point_seconds: out.points.iter().map(|p| p.trial_seconds).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
        },
        config: cfg,
    };
    toml::to_string(&m).context("cannot serialize manifest")
}

/// Writes `<scenario>.csv` and `<scenario>.manifest` into `dir` and returns
/// both paths.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    out: &RunOutput,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let csv = csv_bytes(&rows(cfg, out))?;
    let csv_path = dir.join(format!("{}.csv", cfg.scenario));
    let manifest_path = dir.join(format!("{}.manifest", cfg.scenario));
    std::fs::write(&csv_path, &csv)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    std::fs::write(&manifest_path, manifest_text(cfg, out, &csv)?)
        .with_context(|| format!("cannot write {}", manifest_path.display()))?;
    Ok((csv_path, manifest_path))
}
