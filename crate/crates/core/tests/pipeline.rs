use coopsync_core::channel::{es_n0_to_noise_psd, make_ensemble, SatelliteChannelParams};
use coopsync_core::ice::IceConfig;
use coopsync_core::metrics::{phase_error, TruthAccess};
use coopsync_core::polar::{InfoWord, PolarCode};
use coopsync_core::receiver::{receive, ReceiverConfig};
use coopsync_core::txchain::build_frame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Full chain on random offsets over the whole acquisition range: at a
/// comfortable SNR every burst decodes and every offset is recovered.
#[test]
fn two_satellites_random_offsets() {
    let code = PolarCode::construct_sign_anchored(1024, 512, 0.0).unwrap();
    let cfg = ReceiverConfig {
        ice: IceConfig {
            max_iterations: 30,
            ..IceConfig::default()
        },
        ..ReceiverConfig::default()
    };
    let snr = 0.0;
    let range = cfg.ice.offset_range_hz();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..6 {
        let u = InfoWord::random(512, &mut rng);
        let s = build_frame(&code, &u).unwrap();
        let links: Vec<_> = (0..2)
            .map(|_| {
                let f = rng.random_range(-range..range);
                let phi = rng.random_range(-PI..PI);
                SatelliteChannelParams::new(
                    f,
                    phi,
                    es_n0_to_noise_psd(snr),
                    cfg.ice.symbol_time_s(),
                )
                .unwrap()
            })
            .collect();
        let e = make_ensemble(&s, &links, &mut rng).unwrap();
        let out = receive(&e, &code, &cfg, snr, &mut rng).unwrap();
        assert_eq!(out.info_hat, u, "trial {trial}");
        for (m, p) in e.truth(&TruthAccess::grant()).unwrap().iter().enumerate() {
            let nfo_err = (out.estimates.cfo_hat_hz()[m] - p.cfo_hz) * cfg.ice.symbol_time_s();
            assert!(nfo_err.abs() < 5e-5, "trial {trial} sat {m}: {nfo_err}");
            assert!(phase_error(p.cpo_rad, out.estimates.cpo_hat_rad()[m]).abs() < 0.3);
        }
    }
}
