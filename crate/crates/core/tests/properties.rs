use coopsync_core::channel::{
    apply_channel, make_ensemble, wrap_phase, ReceivedFrame, SatelliteChannelParams,
};
use coopsync_core::polar::{bp_decode, BoxPlus, BpConfig, InfoWord, PolarCode, LLR_MAX};
use coopsync_core::softcombine::{combine, compensate, square_law_phase, EstimateSet, SoftMapping};
use coopsync_core::txchain::build_frame;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const T: f64 = 1e-3;

fn random_frame(seed: u64, n: usize) -> coopsync_core::txchain::SymbolFrame {
    let code = PolarCode::construct(n, n / 2, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_frame(&code, &InfoWord::random(n / 2, &mut rng)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compensation_round_trips(seed in 0u64..1000, f in -8.0f64..8.0, phi in -10.0f64..10.0) {
        let s = random_frame(seed, 64);
        let p = SatelliteChannelParams::new(1.0, 0.2, 0.3, T).unwrap();
        let r = apply_channel(&s, &p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let back = compensate(&compensate(&r, f, phi, T), -f, -phi, T);
        for (a, b) in back.samples.iter().zip(&r.samples) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn rotation_only_channel_preserves_magnitude(f in -7.8f64..7.8, phi in -PI..PI) {
        let s = random_frame(1, 128);
        let p = SatelliteChannelParams::new(f, phi, 0.0, T).unwrap();
        let r = apply_channel(&s, &p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        prop_assert!(r.samples.iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn perfect_combining_is_m_fold(m in 1usize..6, seed in 0u64..100) {
        let s = random_frame(seed, 64);
        let links: Vec<_> = (0..m)
            .map(|i| SatelliteChannelParams::new(i as f64 - 2.0, wrap_phase(i as f64 * 1.3), 0.0, T).unwrap())
            .collect();
        let e = make_ensemble(&s, &links, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let est = EstimateSet::new(
            links.iter().map(|l| l.cfo_hz).collect(),
            links.iter().map(|l| l.cpo_rad).collect(),
        ).unwrap();
        let c = combine(&e, &est, T).unwrap();
        for (ck, sk) in c.samples.iter().zip(s.symbols()) {
            prop_assert!((ck - m as f64 * sk).norm() < 1e-9);
        }
    }

    #[test]
    fn square_law_is_exact_up_to_pi(phi in -PI..PI, seed in 0u64..50) {
        let s = random_frame(seed, 256);
        let p = SatelliteChannelParams::new(0.0, phi, 0.0, T).unwrap();
        let r = apply_channel(&s, &p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let est = square_law_phase(&r, 0.0, T).unwrap();
        prop_assert!(est > -PI / 2.0 && est <= PI / 2.0);
        let folded = wrap_phase(2.0 * (est - phi)) / 2.0;
        prop_assert!(folded.abs() < 1e-6);
    }

    #[test]
    fn soft_maps_are_odd_and_bounded(l in -100.0f64..100.0, alpha in 0.05f64..1.0, th in 0.5f64..10.0) {
        for map in [SoftMapping::Exact, SoftMapping::Piecewise { alpha, threshold: th }, SoftMapping::default()] {
            let z = map.map(l);
            prop_assert!((-1.0..=1.0).contains(&z));
            prop_assert_eq!(map.map(-l), -z);
        }
    }

    #[test]
    fn noiseless_codewords_decode(seed in 0u64..1000, stages in 2usize..9) {
        let n = 1 << stages;
        let code = PolarCode::construct(n, n / 2, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = InfoWord::random(n / 2, &mut rng);
        let x = code.encode(&u).unwrap();
        let llrs: Vec<f64> = x.bits().iter().map(|&b| if b == 0 { LLR_MAX } else { -LLR_MAX }).collect();
        for kernel in [BoxPlus::SumProduct, BoxPlus::MinSum { scale: 0.9 }] {
            let out = bp_decode(&code, &llrs, BpConfig { max_iterations: 5, kernel }).unwrap();
            prop_assert!(out.converged);
            prop_assert_eq!(&out.info_hat, &u);
        }
    }

    #[test]
    fn encoding_is_linear(seed in 0u64..1000) {
        let code = PolarCode::construct(64, 32, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = InfoWord::random(32, &mut rng);
        let b = InfoWord::random(32, &mut rng);
        let sum = InfoWord::new(a.bits().iter().zip(b.bits()).map(|(x, y)| x ^ y).collect()).unwrap();
        let xa = code.encode(&a).unwrap();
        let xb = code.encode(&b).unwrap();
        let xs = code.encode(&sum).unwrap();
        let expected: Vec<u8> = xa.bits().iter().zip(xb.bits()).map(|(x, y)| x ^ y).collect();
        prop_assert_eq!(xs.bits(), &expected[..]);
        prop_assert!(code.is_codeword(&xs));
    }
}

#[test]
fn empty_frames_are_rejected() {
    assert!(coopsync_core::channel::ReceivedEnsemble::from_frames(vec![]).is_err());
    let a = ReceivedFrame {
        samples: vec![Complex64::new(1.0, 0.0); 4],
    };
    let b = ReceivedFrame {
        samples: vec![Complex64::new(1.0, 0.0); 5],
    };
    assert!(coopsync_core::channel::ReceivedEnsemble::from_frames(vec![a, b]).is_err());
}
