//! Transmit chain: information bits → polar codeword → BPSK symbols.
//!
//! Spreading and despreading are treated as ideal, so a frame holds one
//! symbol per coded bit.

use crate::error::{invalid, Result};
use crate::polar::{Codeword, InfoWord, PolarCode};

/// Unit-energy BPSK frame. Every symbol is exactly `+1.0` or `-1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    symbols: Vec<f64>,
}

impl SymbolFrame {
    /// Wraps a symbol vector, rejecting anything outside `{+1, -1}`.
    pub fn new(symbols: Vec<f64>) -> Result<Self> {
        if let Some(k) = symbols.iter().position(|&s| s != 1.0 && s != -1.0) {
            return invalid(format!("symbol {k} is {} (expected ±1)", symbols[k]));
        }
        Ok(Self { symbols })
    }

    pub fn symbols(&self) -> &[f64] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Energy per symbol; fixed by construction.
    pub fn energy(&self) -> f64 {
        1.0
    }
}

/// Maps bit 0 to `+1` and bit 1 to `-1`.
pub fn modulate_bpsk(x: &Codeword) -> SymbolFrame {
    SymbolFrame {
        symbols: x.bits().iter().map(|&b| 1.0 - 2.0 * f64::from(b)).collect(),
    }
}

/// Encodes `u` with `code` and modulates the codeword.
pub fn build_frame(code: &PolarCode, u: &InfoWord) -> Result<SymbolFrame> {
    Ok(modulate_bpsk(&code.encode(u)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::{bp_decode, BpConfig, LLR_MAX};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bpsk_mapping() {
        let x = Codeword::new(vec![1, 0, 1, 0]).unwrap();
        assert_eq!(modulate_bpsk(&x).symbols(), &[-1.0, 1.0, -1.0, 1.0]);
        let zero = modulate_bpsk(&Codeword::zeros(8));
        assert!(zero.symbols().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn rejects_non_bpsk_symbols() {
        assert!(SymbolFrame::new(vec![1.0, -1.0]).is_ok());
        assert!(SymbolFrame::new(vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn frame_matches_code_length_and_energy() {
        let code = PolarCode::construct(1024, 512, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame = build_frame(&code, &InfoWord::random(512, &mut rng)).unwrap();
        assert_eq!(frame.len(), 1024);
        let mean_energy = frame.symbols().iter().map(|s| s * s).sum::<f64>() / 1024.0;
        assert_eq!(mean_energy, 1.0);
        let zero = build_frame(&code, &InfoWord::zeros(512)).unwrap();
        assert!(zero.symbols().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn noiseless_round_trip() {
        let code = PolarCode::construct(256, 128, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let u = InfoWord::random(128, &mut rng);
            let frame = build_frame(&code, &u).unwrap();
            let llrs: Vec<f64> = frame.symbols().iter().map(|s| s * LLR_MAX).collect();
            let out = bp_decode(&code, &llrs, BpConfig::default()).unwrap();
            assert_eq!(out.info_hat, u);
        }
    }
}
