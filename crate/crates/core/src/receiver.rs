//! Complete receiver: coarse search, fine refinement, global sign
//! resolution and the final decode.
//!
//! Neither estimator can tell a burst from its sign-inverted copy, because
//! the code contains the all-ones word and inverting every symbol maps one
//! codeword onto another. With a sign-anchored code (see
//! [`PolarCode::construct_sign_anchored`]) both estimators work on the
//! relaxed supercode, and the decoded anchor bit tells whether every phase
//! estimate is off by `π`.

use crate::cem::{residual_half_span_hz, run_cem, CemConfig, FineEstimate};
use crate::channel::{es_n0_to_noise_psd, ReceivedEnsemble};
use crate::error::Result;
use crate::ice::{run_ice, CoarseEstimate, IceConfig};
use crate::polar::{BpConfig, BpDecoder, DecodeResult, InfoWord, PolarCode};
use crate::softcombine::{combine, combined_llrs, EstimateSet};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    pub ice: IceConfig,
    pub cem: CemConfig,
    /// Decoder for the last pass with the transmitted code.
    pub final_bp: BpConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub coarse: CoarseEstimate,
    pub fine: FineEstimate,
    /// Final estimates after sign resolution.
    pub estimates: EstimateSet,
    /// True when the anchor bit called for a `π` correction.
    pub sign_flipped: bool,
    pub info_hat: InfoWord,
}

/// Decodes the frame combined under `estimates` with `code`.
pub fn decode_with(
    ensemble: &ReceivedEnsemble,
    estimates: &EstimateSet,
    code: &PolarCode,
    bp: BpConfig,
    snr_single_db: f64,
    symbol_time_s: f64,
) -> Result<DecodeResult> {
    let combined = combine(ensemble, estimates, symbol_time_s)?;
    BpDecoder::new(code, bp).decode(&combined_llrs(&combined, es_n0_to_noise_psd(snr_single_db)))
}

/// Runs the full synchronization chain on one ensemble and decodes it.
pub fn receive<R: Rng + ?Sized>(
    ensemble: &ReceivedEnsemble,
    code: &PolarCode,
    cfg: &ReceiverConfig,
    snr_single_db: f64,
    rng: &mut R,
) -> Result<Reception> {
    let t = cfg.ice.symbol_time_s();
    let search_code = code.relaxed();
    let coarse = run_ice(ensemble, &cfg.ice, &search_code, snr_single_db, rng)?;
    let fine = run_cem(
        ensemble,
        &coarse.estimates,
        &search_code,
        &cfg.cem,
        residual_half_span_hz(&cfg.ice),
        snr_single_db,
        t,
    )?;
    let (estimates, sign_flipped, info_hat) = match code
        .split_relaxed_info(&fine.decoded.info_hat)?
    {
        (info, None) => (fine.estimates.clone(), false, info),
        (_, Some(anchor)) => {
            let flipped = anchor == 1;
            let estimates = if flipped {
                fine.estimates.flipped()
            } else {
                fine.estimates.clone()
            };
            let decoded = decode_with(ensemble, &estimates, code, cfg.final_bp, snr_single_db, t)?;
            (estimates, flipped, decoded.info_hat)
        }
    };
    Ok(Reception {
        coarse,
        fine,
        estimates,
        sign_flipped,
        info_hat,
    })
}
