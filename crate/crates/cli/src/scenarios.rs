//! Built-in experiment presets.

use crate::config::{CodeConfig, ExperimentConfig, GridConfig, Mode, ReportConfig};
use clap::ValueEnum;
use coopsync_core::ice::IceConfig;
use coopsync_core::receiver::ReceiverConfig;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Single link, BER against Eb/N0 for fixed uncorrected frequency offsets.
    Fig4a,
    /// Single link, BER against fixed uncorrected phase offsets.
    Fig4b,
    /// Combined-SNR loss against quantization width and satellite count.
    Fig5,
    /// Coarse-search convergence for several elite-set sizes.
    Fig6,
    /// Coarse-search loss against candidate and elite counts.
    Fig7,
    /// Estimator RMSE against the bounds.
    Fig8,
    /// End-to-end BER with full synchronization and with ideal offsets.
    Fig9,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig4a => "fig4a",
            Scenario::Fig4b => "fig4b",
            Scenario::Fig5 => "fig5",
            Scenario::Fig6 => "fig6",
            Scenario::Fig7 => "fig7",
            Scenario::Fig8 => "fig8",
            Scenario::Fig9 => "fig9",
        }
    }

    pub fn config(self) -> ExperimentConfig {
        let base = ExperimentConfig {
            scenario: self.name().into(),
            seed: 1,
            trials: 50,
            grid: GridConfig::default(),
            code: CodeConfig::default(),
            receiver: ReceiverConfig::default(),
            report: ReportConfig::default(),
        };
        // Longer searches with gentler smoothing; used where the coarse
        // result feeds a figure other than the convergence study.
        let thorough = ReceiverConfig {
            ice: IceConfig {
                max_iterations: 40,
                smoothing: 0.6,
                ..IceConfig::default()
            },
            ..ReceiverConfig::default()
        };
        // No offsets are estimated on a single uncorrected link, so the sign
        // anchor is not needed there.
        let single_link_code = CodeConfig {
            sign_anchor: false,
            ..CodeConfig::default()
        };
        // Convergence studies use full smoothing, which settles fastest
        // within the 10-iteration budget.
        let fast = ReceiverConfig {
            ice: IceConfig {
                smoothing: 1.0,
                ..IceConfig::default()
            },
            ..ReceiverConfig::default()
        };
        match self {
            Scenario::Fig4a => ExperimentConfig {
                trials: 200,
                grid: GridConfig {
                    modes: vec![Mode::Uncompensated],
                    satellites: vec![1],
                    es_n0_db: Vec::new(),
                    eb_n0_db: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
                    nfo: vec![0.0, 1e-4, 2e-4],
                    cpo_rad: vec![0.0],
                    ..GridConfig::default()
                },
                code: single_link_code,
                ..base
            },
            Scenario::Fig4b => ExperimentConfig {
                trials: 200,
                grid: GridConfig {
                    modes: vec![Mode::Uncompensated],
                    satellites: vec![1],
                    es_n0_db: Vec::new(),
                    eb_n0_db: vec![1.5, 2.0, 2.5],
                    nfo: vec![0.0],
                    cpo_rad: [-0.2, -0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15, 0.2]
                        .iter()
                        .map(|x| x * PI)
                        .collect(),
                    ..GridConfig::default()
                },
                code: single_link_code,
                ..base
            },
            Scenario::Fig5 => ExperimentConfig {
                grid: GridConfig {
                    modes: vec![Mode::Ice],
                    satellites: vec![4, 6],
                    es_n0_db: vec![-3.0],
                    bits: vec![5, 6, 7],
                    ..GridConfig::default()
                },
                receiver: thorough,
                ..base
            },
            Scenario::Fig6 => ExperimentConfig {
                grid: GridConfig {
                    modes: vec![Mode::Ice],
                    satellites: vec![4],
                    es_n0_db: vec![-3.0],
                    bits: vec![6],
                    elites: vec![4, 24, 32],
                    ..GridConfig::default()
                },
                receiver: fast.clone(),
                ..base
            },
            Scenario::Fig7 => ExperimentConfig {
                trials: 30,
                grid: GridConfig {
                    modes: vec![Mode::Ice],
                    satellites: vec![4],
                    es_n0_db: vec![-3.0],
                    bits: vec![6],
                    candidates: vec![40, 80, 120, 160, 200],
                    elites: vec![4, 8, 16, 32],
                    ..GridConfig::default()
                },
                receiver: fast,
                ..base
            },
            Scenario::Fig8 => ExperimentConfig {
                grid: GridConfig {
                    modes: vec![Mode::IceCem],
                    satellites: vec![2, 4],
                    es_n0_db: vec![-6.0, -5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0],
                    ..GridConfig::default()
                },
                receiver: thorough,
                ..base
            },
            Scenario::Fig9 => ExperimentConfig {
                trials: 400,
                grid: GridConfig {
                    modes: vec![Mode::Ideal, Mode::IceCem],
                    satellites: vec![2, 4],
                    es_n0_db: vec![
                        -7.5, -7.0, -6.5, -6.0, -5.5, -5.0, -4.5, -4.0, -3.5, -3.0, -2.5,
                    ],
                    ..GridConfig::default()
                },
                receiver: thorough,
                ..base
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for s in Scenario::value_variants() {
            let cfg = s.config();
            cfg.validate().unwrap();
            assert_eq!(cfg.scenario, s.name());
            assert_eq!(Scenario::from_str(s.name(), false).unwrap(), *s);
        }
    }

    #[test]
    fn preset_grids_have_expected_sizes() {
        assert_eq!(Scenario::Fig4a.config().points().len(), 18);
        assert_eq!(Scenario::Fig5.config().points().len(), 6);
        assert_eq!(Scenario::Fig7.config().points().len(), 20);
        assert_eq!(Scenario::Fig9.config().points().len(), 44);
    }
}
