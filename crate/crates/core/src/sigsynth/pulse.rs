use std::f64::consts::PI;

use super::{mean_power, ComplexSample};
use crate::error::{Error, Result};

/// Filter half-length in symbol periods.
const RRC_SPAN: usize = 8;

/// Root-raised-cosine impulse response sampled at `sps` samples per symbol,
/// `2 * RRC_SPAN * sps + 1` taps, centered, unit energy.
pub fn rrc_taps(sps: usize, rolloff: f64) -> Vec<f64> {
    let beta = rolloff;
    let half = (RRC_SPAN * sps) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|n| {
            let t = n as f64 / sps as f64;
            if n == 0 {
                1.0 - beta + 4.0 * beta / PI
            } else if beta > 0.0 && (4.0 * beta * t.abs() - 1.0).abs() < 1e-9 {
                let a = PI / (4.0 * beta);
                beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos())
            } else {
                let num = (PI * t * (1.0 - beta)).sin()
                    + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
                let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
                num / den
            }
        })
        .collect();
    let energy: f64 = taps.iter().map(|t| t * t).sum();
    let k = 1.0 / energy.sqrt();
    taps.iter_mut().for_each(|t| *t *= k);
    taps
}

/// Upsample by `sps` and filter with a root-raised-cosine pulse.
///
/// The output has exactly `symbols.len() * sps` samples: symbol `k` peaks at
/// sample `k * sps` and the filter tails beyond either end are dropped. The
/// result is renormalized to unit average power.
pub fn pulse_shape(symbols: &[ComplexSample], sps: usize, rolloff: f64) -> Result<Vec<ComplexSample>> {
    if symbols.is_empty() {
        return Err(Error::InputShape("cannot pulse-shape an empty symbol sequence".into()));
    }
    if sps == 0 {
        return Err(Error::Domain("samples per symbol must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::Domain(format!("rolloff {rolloff} outside [0, 1]")));
    }
    let taps = rrc_taps(sps, rolloff);
    let center = (taps.len() / 2) as isize;
    let n_out = symbols.len() * sps;
    let mut out = vec![ComplexSample::ZERO; n_out];
    for (k, s) in symbols.iter().enumerate() {
        let peak = (k * sps) as isize;
        let lo = (peak - center).max(0);
        let hi = (peak + center).min(n_out as isize - 1);
        for n in lo..=hi {
            let h = taps[(n - peak + center) as usize];
            let o = &mut out[n as usize];
            o.re += h * s.re;
            o.im += h * s.im;
        }
    }
    let p = mean_power(&out);
    if !(p > 0.0) {
        return Err(Error::Degenerate("pulse-shaped output has zero power".into()));
    }
    let k = 1.0 / p.sqrt();
    Ok(out.into_iter().map(|s| s.scale(k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigsynth::{map_symbols, ModulationScheme};
    use rand::Rng as _;

    #[test]
    fn sps1_rolloff0_is_identity() {
        let bits = [0u8, 1, 1, 0, 1, 1, 0, 0];
        let syms = map_symbols(&bits, ModulationScheme::Qpsk).unwrap();
        let out = pulse_shape(&syms, 1, 0.0).unwrap();
        for (a, b) in syms.iter().zip(&out) {
            assert!((a.re - b.re).abs() < 1e-12 && (a.im - b.im).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_has_constant_envelope_in_the_middle() {
        let syms = vec![ComplexSample::new(1.0, 0.0); 64];
        let sps = 8;
        let out = pulse_shape(&syms, sps, 0.35).unwrap();

        // Direct convolution oracle over the untruncated upsampled train.
        let taps = rrc_taps(sps, 0.35);
        let c = (taps.len() / 2) as isize;
        let oracle = |n: isize| -> f64 {
            (0..syms.len() as isize)
                .map(|k| {
                    let m = n - k * sps as isize + c;
                    if m >= 0 && (m as usize) < taps.len() { taps[m as usize] } else { 0.0 }
                })
                .sum()
        };
        let mid: Vec<f64> = (24 * sps..40 * sps).map(|n| out[n].re).collect();
        let scale = mid[0] / oracle(24 * sps as isize);
        for (i, v) in mid.iter().enumerate() {
            let n = (24 * sps + i) as isize;
            assert!((v - scale * oracle(n)).abs() < 1e-9);
        }
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        assert!(mid.iter().all(|v| (v - mean).abs() / mean < 0.01));
    }

    #[test]
    fn unit_output_power() {
        let mut rng = crate::seed::rng_from_seed(9);
        let bits: Vec<u8> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let syms = map_symbols(&bits, ModulationScheme::Qpsk).unwrap();
        let out = pulse_shape(&syms, 8, 0.35).unwrap();
        assert_eq!(out.len(), 800);
        assert!((mean_power(&out) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(pulse_shape(&[], 8, 0.35), Err(Error::InputShape(_))));
    }

    #[test]
    fn rrc_is_nyquist_after_matched_filtering() {
        // RRC convolved with itself is zero at nonzero multiples of the symbol period.
        let sps = 8;
        let t = rrc_taps(sps, 0.35);
        let n = t.len() as isize;
        let auto = |lag: isize| -> f64 {
            (0..n)
                .filter_map(|i| {
                    let j = i + lag;
                    (j >= 0 && j < n).then(|| t[i as usize] * t[j as usize])
                })
                .sum()
        };
        for k in 1..4 {
            assert!(auto(k * sps as isize).abs() < 2e-3, "lag {k}: {}", auto(k * sps as isize));
        }
        assert!((auto(0) - 1.0).abs() < 1e-12);
    }
}
