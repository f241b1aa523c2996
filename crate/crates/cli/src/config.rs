//! Experiment configuration, read from TOML.
//!
//! Every field has a default, so a config file only lists what it changes.

use anyhow::{bail, ensure, Context, Result};
use coopsync_core::polar::PolarCode;
use coopsync_core::receiver::ReceiverConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// How a grid point processes each burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Coarse search, fine refinement, sign resolution and decode.
    IceCem,
    /// Coarse search only; reports the combined-SNR loss.
    Ice,
    /// Combine and decode with the true offsets.
    Ideal,
    /// Combine and decode with no offset correction at all.
    Uncompensated,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::IceCem => "ice-cem",
            Mode::Ice => "ice",
            Mode::Ideal => "ideal",
            Mode::Uncompensated => "uncompensated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeConfig {
    pub block_length: usize,
    pub info_length: usize,
    pub design_snr_db: f64,
    /// Freeze the all-ones row so the receiver can resolve the global sign.
    pub sign_anchor: bool,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self {
            block_length: 1024,
            info_length: 512,
            design_snr_db: 0.0,
            sign_anchor: true,
        }
    }
}

impl CodeConfig {
    pub fn build(&self) -> Result<PolarCode> {
        let code = if self.sign_anchor {
            PolarCode::construct_sign_anchored(
                self.block_length,
                self.info_length,
                self.design_snr_db,
            )
        } else {
            PolarCode::construct(self.block_length, self.info_length, self.design_snr_db)
        };
        code.context("invalid code parameters")
    }

    pub fn rate(&self) -> f64 {
        self.info_length as f64 / self.block_length as f64
    }
}

/// Axes of the experiment grid. The grid is their Cartesian product; an
/// empty list falls back to the receiver setting (`bits`, `candidates`,
/// `elites`) or to a
/// uniform random draw per trial (`nfo`, `cpo_rad`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub modes: Vec<Mode>,
    pub satellites: Vec<usize>,
    /// Per-satellite Es/N0 points in dB.
    pub es_n0_db: Vec<f64>,
    /// Per-satellite Eb/N0 points in dB; converted with the code rate.
    /// Used instead of `es_n0_db` when non-empty.
    pub eb_n0_db: Vec<f64>,
    pub bits: Vec<usize>,
    pub candidates: Vec<usize>,
    pub elites: Vec<usize>,
    /// Normalized frequency offsets `Δf·T_s` applied to every satellite.
    pub nfo: Vec<f64>,
    /// Phase offsets applied to every satellite.
    pub cpo_rad: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            modes: vec![Mode::IceCem],
            satellites: vec![2],
            es_n0_db: vec![-3.0],
            eb_n0_db: Vec::new(),
            bits: Vec::new(),
            candidates: Vec::new(),
            elites: Vec::new(),
            nfo: Vec::new(),
            cpo_rad: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// A coarse search counts as settled once its best-so-far loss is
    /// within this many dB of the final value.
    pub settle_tolerance_db: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            settle_tolerance_db: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub grid: GridConfig,
    pub code: CodeConfig,
    pub receiver: ReceiverConfig,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "custom".into(),
            seed: 1,
            trials: 100,
            grid: GridConfig::default(),
            code: CodeConfig::default(),
            receiver: ReceiverConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub index: usize,
    pub mode: Mode,
    pub satellites: usize,
    pub es_n0_db: f64,
    pub bits: usize,
    pub candidates: usize,
    pub elites: usize,
    pub nfo: Option<f64>,
    pub cpo_rad: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("cannot parse experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.scenario.is_empty(), "scenario name must not be empty");
        ensure!(
            self.scenario
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'),
            "scenario name may only contain letters, digits, '-' and '_'"
        );
        ensure!(self.trials >= 1, "trials must be ≥ 1");
        let g = &self.grid;
        ensure!(!g.modes.is_empty(), "grid.modes must not be empty");
        ensure!(
            !g.satellites.is_empty(),
            "grid.satellites must not be empty"
        );
        ensure!(
            g.satellites.iter().all(|&m| m >= 1),
            "every satellite count must be ≥ 1"
        );
        ensure!(
            !g.es_n0_db.is_empty() || !g.eb_n0_db.is_empty(),
            "set grid.es_n0_db or grid.eb_n0_db"
        );
        ensure!(
            g.es_n0_db.iter().chain(&g.eb_n0_db).all(|x| x.is_finite()),
            "SNR points must be finite"
        );
        ensure!(
            g.nfo.iter().chain(&g.cpo_rad).all(|x| x.is_finite()),
            "offsets must be finite"
        );
        self.code.build()?;
        for point in self.points() {
            let ice = self.ice_for(&point);
            ice.validate()
                .with_context(|| format!("grid point {}", point.index))?;
        }
        self.receiver.cem.validate()?;
        if self.receiver.final_bp.max_iterations == 0 {
            bail!("receiver.final_bp.max_iterations must be ≥ 1");
        }
        Ok(())
    }

    /// Per-satellite Es/N0 values of the grid.
    pub fn es_n0_points(&self) -> Vec<f64> {
        if self.grid.eb_n0_db.is_empty() {
            self.grid.es_n0_db.clone()
        } else {
            let offset = 10.0 * self.code.rate().log10();
            self.grid.eb_n0_db.iter().map(|eb| eb + offset).collect()
        }
    }

    /// Grid points in a fixed order: mode, satellites, SNR, bits,
    /// candidates, elites, NFO, CPO (last axis varies fastest).
    pub fn points(&self) -> Vec<Point> {
        let g = &self.grid;
        let opt = |v: &[f64]| -> Vec<Option<f64>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let or = |v: &[usize], d: usize| if v.is_empty() { vec![d] } else { v.to_vec() };
        let mut out = Vec::new();
        for &mode in &g.modes {
            for &satellites in &g.satellites {
                for es_n0_db in self.es_n0_points() {
                    for bits in or(&g.bits, self.receiver.ice.bits) {
                        for candidates in or(&g.candidates, self.receiver.ice.candidates) {
                            for elites in or(&g.elites, self.receiver.ice.elites) {
                                for nfo in opt(&g.nfo) {
                                    for cpo_rad in opt(&g.cpo_rad) {
                                        out.push(Point {
                                            index: out.len(),
                                            mode,
                                            satellites,
                                            es_n0_db,
                                            bits,
                                            candidates,
                                            elites,
                                            nfo,
                                            cpo_rad,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Coarse-search settings at `point`.
    pub fn ice_for(&self, point: &Point) -> coopsync_core::ice::IceConfig {
        coopsync_core::ice::IceConfig {
            bits: point.bits,
            candidates: point.candidates,
            elites: point.elites,
            ..self.receiver.ice.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            scenario = "demo"
            trials = 3
            [grid]
            satellites = [2, 4]
            es_n0_db = [-3.0, 0.0]
            elites = [4, 32]
            [receiver.ice]
            max_iterations = 20
            "#,
        )
        .unwrap();
        assert_eq!(cfg.receiver.ice.max_iterations, 20);
        assert_eq!(cfg.receiver.ice.candidates, 120);
        assert_eq!(cfg.code.block_length, 1024);
        let points = cfg.points();
        assert_eq!(points.len(), 8);
        assert_eq!(points[1].elites, 32);
        assert_eq!(points[2].es_n0_db, 0.0);
        assert_eq!(points[7].satellites, 4);
        assert!(points
            .iter()
            .enumerate()
            .all(|(i, p)| p.index == i && p.bits == 6));
    }

    #[test]
    fn eb_n0_axis_uses_code_rate() {
        let cfg = ExperimentConfig::from_toml("[grid]\neb_n0_db = [1.5]\n").unwrap();
        assert!((cfg.es_n0_points()[0] - (1.5 - 3.0103)).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "trials = 0",
            "bogus = 1",
            "[grid]\nmodes = []",
            "[grid]\nsatellites = [0]",
            "[grid]\nes_n0_db = []",
            "[grid]\nelites = [500]",
            "[code]\ninfo_length = 1024",
            "[receiver.cem]\ngrid_points = 10",
            "scenario = \"../x\"",
            "[grid]\nmodes = [\"teleport\"]",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
