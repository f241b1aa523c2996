//! Built-in oracle checks with a margin report.

use coopsync_core::cem::m_step_frequency;
use coopsync_core::channel::{
    apply_channel, es_n0_to_noise_psd, wrap_phase, ReceivedFrame, SatelliteChannelParams,
};
use coopsync_core::ice::{update_probability, Hypothesis, ProbabilityVector};
use coopsync_core::polar::{BpConfig, BpDecoder, InfoWord, PolarCode};
use coopsync_core::softcombine::{estimate_snr_ca, square_law_phase, CombinedFrame, SoftSymbols};
use coopsync_core::txchain::build_frame;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};
use std::fmt;

const T: f64 = 1e-3;

/// Signature of the probability update under test.
pub type UpdateFn =
    fn(&ProbabilityVector, &[Hypothesis], f64) -> coopsync_core::Result<ProbabilityVector>;

/// Implementations exercised by the suite. Replacing one with a faulty
/// version must make the matching check fail.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub update: UpdateFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Self {
            update: update_probability,
        }
    }
}

/// Outcome of one check. `margin` is `tolerance − observed`; it is negative
/// exactly when the check fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub observed: f64,
    pub tolerance: f64,
    pub margin: f64,
}

impl Check {
    fn new(name: &'static str, observed: f64, tolerance: f64) -> Self {
        let observed = if observed.is_nan() {
            f64::INFINITY
        } else {
            observed
        };
        Self {
            name,
            observed,
            tolerance,
            margin: tolerance - observed,
        }
    }

    pub fn passed(&self) -> bool {
        self.margin >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<28} {:>6} {:>12} {:>12} {:>12}",
            "check", "result", "observed", "tolerance", "margin"
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<28} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}",
                c.name,
                if c.passed() { "PASS" } else { "FAIL" },
                c.observed,
                c.tolerance,
                c.margin
            )?;
        }
        Ok(())
    }
}

pub fn run_selftest() -> Report {
    run_selftest_with(Hooks::default())
}

pub fn run_selftest_with(hooks: Hooks) -> Report {
    Report {
        checks: vec![
            encode_round_trip(),
            ce_update(hooks.update),
            square_law(),
            m_step_brute_force(),
            snr_estimate(),
        ],
    }
}

/// Noiseless frames decode to their information words. Observed value is
/// the number of bit errors.
fn encode_round_trip() -> Check {
    let code = PolarCode::construct(1024, 512, 0.0).expect("valid code");
    let mut decoder = BpDecoder::new(&code, BpConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut errors = 0;
    for _ in 0..100 {
        let u = InfoWord::random(512, &mut rng);
        let llrs: Vec<f64> = code
            .encode(&u)
            .expect("valid word")
            .bits()
            .iter()
            .map(|&b| if b == 0 { 8.0 } else { -8.0 })
            .collect();
        errors += match decoder.decode(&llrs) {
            Ok(d) => d.info_hat.hamming_distance(&u),
            Err(_) => 512,
        };
    }
    Check::new("encode round trip", errors as f64, 0.0)
}

/// The probability update against hand-computed values. Observed value is
/// the largest absolute deviation.
fn ce_update(update: UpdateFn) -> Check {
    let h = |bits: &[u8]| Hypothesis {
        bits: bits.to_vec(),
    };
    let pv = |p: &[f64]| ProbabilityVector { p: p.to_vec() };
    let cases: Vec<(ProbabilityVector, Vec<Hypothesis>, f64, Vec<f64>)> = vec![
        (pv(&[0.5]), vec![h(&[1]), h(&[0])], 0.8, vec![0.5]),
        (
            pv(&[0.3, 0.7]),
            vec![h(&[1, 1]), h(&[1, 1])],
            1.0,
            vec![1.0, 1.0],
        ),
        (pv(&[0.3, 0.7]), vec![h(&[1, 0])], 0.0, vec![0.3, 0.7]),
        // 0.5·0.2 + 0.5·(3/4) and 0.5·0.9 + 0.5·(1/4)
        (
            pv(&[0.2, 0.9]),
            vec![h(&[1, 0]), h(&[1, 1]), h(&[0, 0]), h(&[1, 0])],
            0.5,
            vec![0.475, 0.575],
        ),
        // 0.25·0.6 + 0.75·0 and 0.25·0.1 + 0.75·1
        (
            pv(&[0.6, 0.1]),
            vec![h(&[0, 1]), h(&[0, 1])],
            0.75,
            vec![0.15, 0.775],
        ),
    ];
    let mut worst: f64 = 0.0;
    for (p, elites, w, expected) in cases {
        match update(&p, &elites, w) {
            Ok(out) if out.p.len() == expected.len() => {
                for (a, b) in out.p.iter().zip(&expected) {
                    worst = worst.max((a - b).abs());
                }
            }
            _ => worst = f64::INFINITY,
        }
    }
    Check::new("cross-entropy update", worst, 1e-12)
}

fn clean_burst(seed: u64) -> Vec<f64> {
    let code = PolarCode::construct(1024, 512, 0.0).expect("valid code");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = InfoWord::random(512, &mut rng);
    let s = build_frame(&code, &u).expect("valid word");
    s.symbols().to_vec()
}

fn receive(symbols: &[f64], nfo: f64, cpo: f64, es_n0_db: Option<f64>, seed: u64) -> ReceivedFrame {
    let s = coopsync_core::txchain::SymbolFrame::new(symbols.to_vec()).expect("±1 symbols");
    let n0 = es_n0_db.map_or(0.0, es_n0_to_noise_psd);
    let p = SatelliteChannelParams::new(nfo / T, cpo, n0, T).expect("valid link");
    apply_channel(&s, &p, &mut ChaCha8Rng::seed_from_u64(seed)).expect("valid link")
}

/// Square-law phase on noiseless frames without frequency offset, modulo
/// the inherent `π` ambiguity. Observed value is the worst error in rad.
fn square_law() -> Check {
    let s = clean_burst(21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let phi = PI - rng.random_range(0.0..TAU);
        let r = receive(&s, 0.0, phi, None, i);
        let err = match square_law_phase(&r, 0.0, T) {
            Ok(est) => {
                let d = wrap_phase(est - phi).abs();
                d.min(PI - d)
            }
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    Check::new("square-law phase", worst, 1e-6)
}

/// Residual-frequency step against a ten times finer exhaustive search.
/// Observed value is the worst disagreement in units of the fine step.
fn m_step_brute_force() -> Check {
    let s = clean_burst(31);
    let zeta = SoftSymbols { zeta: s.clone() };
    let half = 1000.0 / (64.0 * 64.0 * 2.0);
    let points = 65;
    let fine = (points - 1) * 10 + 1;
    let fine_step = 2.0 * half / (fine - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let nfo = rng.random_range(-0.9..0.9) * half * T;
        let r = receive(&s, nfo, rng.random_range(-3.0..3.0), Some(0.0), i);
        let oracle = (0..fine)
            .map(|j| {
                let f = -half + j as f64 * fine_step;
                let a: Complex64 = r
                    .samples
                    .iter()
                    .zip(&s)
                    .enumerate()
                    .map(|(k, (x, z))| x * z * Complex64::cis(-TAU * f * k as f64 * T))
                    .sum();
                (f, a.norm())
            })
            .fold(
                (0.0, f64::MIN),
                |best, c| if c.1 > best.1 { c } else { best },
            )
            .0;
        let err = match m_step_frequency(&r, &zeta, half, points, T) {
            Ok(f) => (f - oracle).abs() / fine_step,
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    Check::new("frequency step vs search", worst, 1.0)
}

/// SNR estimate with genie decisions at K = 1024. Observed value is the
/// absolute median error in dB over Es/N0 from −6 to 6 dB.
fn snr_estimate() -> Check {
    let s = clean_burst(41);
    let zeta = SoftSymbols { zeta: s.clone() };
    let mut worst: f64 = 0.0;
    for (j, snr_db) in [-6.0, -3.0, 0.0, 3.0, 6.0].into_iter().enumerate() {
        let mut errs: Vec<f64> = (0..41)
            .map(|i| {
                let r = receive(&s, 0.0, 0.0, Some(snr_db), 1000 * j as u64 + i);
                let combined = CombinedFrame { samples: r.samples };
                estimate_snr_ca(&combined, &zeta)
                    .map_or(f64::INFINITY, |g| 10.0 * g.log10() - snr_db)
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        worst = worst.max(errs[errs.len() / 2].abs());
    }
    Check::new("genie SNR estimate median", worst, 0.5)
}
