use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ComplexSample;
use crate::error::{Error, Result};

/// Digital modulation schemes that can be synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModulationScheme {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8PSK")]
    Psk8,
    #[serde(rename = "PAM4")]
    Pam4,
    #[serde(rename = "QAM16")]
    Qam16,
    #[serde(rename = "QAM64")]
    Qam64,
    #[serde(rename = "CPFSK")]
    Cpfsk,
    #[serde(rename = "GFSK")]
    Gfsk,
}

impl ModulationScheme {
    pub const ALL: [ModulationScheme; 8] = [
        ModulationScheme::Bpsk,
        ModulationScheme::Qpsk,
        ModulationScheme::Psk8,
        ModulationScheme::Pam4,
        ModulationScheme::Qam16,
        ModulationScheme::Qam64,
        ModulationScheme::Cpfsk,
        ModulationScheme::Gfsk,
    ];

    /// Stable on-disk identifier.
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        Self::ALL
            .get(id as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown modulation id {id}")))
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModulationScheme::Bpsk | ModulationScheme::Cpfsk | ModulationScheme::Gfsk => 1,
            ModulationScheme::Qpsk | ModulationScheme::Pam4 => 2,
            ModulationScheme::Psk8 => 3,
            ModulationScheme::Qam16 => 4,
            ModulationScheme::Qam64 => 6,
        }
    }

    pub fn is_frequency_shift(self) -> bool {
        matches!(self, ModulationScheme::Cpfsk | ModulationScheme::Gfsk)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationScheme::Bpsk => "BPSK",
            ModulationScheme::Qpsk => "QPSK",
            ModulationScheme::Psk8 => "8PSK",
            ModulationScheme::Pam4 => "PAM4",
            ModulationScheme::Qam16 => "QAM16",
            ModulationScheme::Qam64 => "QAM64",
            ModulationScheme::Cpfsk => "CPFSK",
            ModulationScheme::Gfsk => "GFSK",
        }
    }

    /// Every point of a linear constellation, indexed by its bit pattern
    /// (MSB first). `None` for the frequency-shift schemes.
    pub fn constellation(self) -> Option<Vec<ComplexSample>> {
        if self.is_frequency_shift() {
            return None;
        }
        let k = self.bits_per_symbol();
        Some((0..1u32 << k).map(|v| linear_point(self, v)).collect())
    }
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown modulation scheme {s:?}")))
    }
}

/// Parameters of the two frequency-shift schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FskParams {
    pub cpfsk_index: f64,
    pub gfsk_index: f64,
    /// Bandwidth-time product of the GFSK Gaussian filter.
    pub gfsk_bt: f64,
}

impl Default for FskParams {
    fn default() -> Self {
        FskParams {
            cpfsk_index: 0.5,
            gfsk_index: 0.5,
            gfsk_bt: 0.35,
        }
    }
}

fn gray_decode(mut g: u32) -> u32 {
    let mut b = g;
    while g > 1 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Gray-coded PAM level in `{-(M-1), ..., M-1}` for an `m`-bit word.
fn pam_level(word: u32, m: usize) -> f64 {
    let k = gray_decode(word) as f64;
    2.0 * k - ((1u32 << m) - 1) as f64
}

fn linear_point(scheme: ModulationScheme, v: u32) -> ComplexSample {
    match scheme {
        ModulationScheme::Bpsk => ComplexSample::new(if v == 0 { 1.0 } else { -1.0 }, 0.0),
        ModulationScheme::Qpsk => {
            let i = if v & 0b10 == 0 { 1.0 } else { -1.0 };
            let q = if v & 0b01 == 0 { 1.0 } else { -1.0 };
            ComplexSample::new(i * FRAC_1_SQRT_2, q * FRAC_1_SQRT_2)
        }
        ModulationScheme::Psk8 => ComplexSample::from_phase(2.0 * PI * gray_decode(v) as f64 / 8.0),
        ModulationScheme::Pam4 => ComplexSample::new(pam_level(v, 2) / 5f64.sqrt(), 0.0),
        ModulationScheme::Qam16 => {
            let norm = 10f64.sqrt();
            ComplexSample::new(pam_level(v >> 2, 2) / norm, pam_level(v & 0b11, 2) / norm)
        }
        ModulationScheme::Qam64 => {
            let norm = 42f64.sqrt();
            ComplexSample::new(pam_level(v >> 3, 3) / norm, pam_level(v & 0b111, 3) / norm)
        }
        ModulationScheme::Cpfsk | ModulationScheme::Gfsk => unreachable!("not a linear scheme"),
    }
}

/// Map a bit sequence onto symbols.
///
/// Linear schemes return Gray-mapped, unit-average-energy constellation
/// points. CPFSK and GFSK return the continuous-phase trajectory sampled once
/// per symbol.
pub fn map_symbols(bits: &[u8], scheme: ModulationScheme) -> Result<Vec<ComplexSample>> {
    let k = scheme.bits_per_symbol();
    if bits.len() % k != 0 {
        return Err(Error::InputShape(format!(
            "{} bits is not a multiple of {k} bits per {scheme} symbol",
            bits.len()
        )));
    }
    if scheme.is_frequency_shift() {
        return fsk_trajectory(bits, scheme, 1, &FskParams::default());
    }
    Ok(bits
        .chunks_exact(k)
        .map(|chunk| {
            let v = chunk.iter().fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32);
            linear_point(scheme, v)
        })
        .collect())
}

fn gaussian_taps(bt: f64, sps: usize) -> Vec<f64> {
    // Truncated at +/-2 symbol periods; unit DC gain.
    let span = 2 * sps;
    let alpha = (2.0 / 2f64.ln()).sqrt() * PI * bt;
    let mut taps: Vec<f64> = (0..=2 * span)
        .map(|n| {
            let t = (n as f64 - span as f64) / sps as f64;
            (-(alpha * t).powi(2)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Continuous-phase frequency-shift waveform at `sps` samples per symbol.
///
/// Each bit selects a frequency deviation of `+/-1` (bit 0 is `+1`). For GFSK
/// the NRZ frequency pulse train is smoothed by a Gaussian filter before
/// integration. The returned trajectory has `bits.len() * sps` unit-modulus
/// samples; sample `n` is the phase reached after `n + 1` increments.
pub fn fsk_trajectory(
    bits: &[u8],
    scheme: ModulationScheme,
    sps: usize,
    params: &FskParams,
) -> Result<Vec<ComplexSample>> {
    if sps == 0 {
        return Err(Error::Domain("samples per symbol must be >= 1".into()));
    }
    let (index, bt) = match scheme {
        ModulationScheme::Cpfsk => (params.cpfsk_index, None),
        ModulationScheme::Gfsk => (params.gfsk_index, Some(params.gfsk_bt)),
        other => {
            return Err(Error::Validation(format!("{other} is not a frequency-shift scheme")))
        }
    };
    let mut freq: Vec<f64> = bits
        .iter()
        .flat_map(|&b| std::iter::repeat_n(if b & 1 == 0 { 1.0 } else { -1.0 }, sps))
        .collect();
    if let Some(bt) = bt {
        let taps = gaussian_taps(bt, sps);
        let half = taps.len() / 2;
        let n = freq.len() as isize;
        freq = (0..n)
            .map(|i| {
                taps.iter()
                    .enumerate()
                    .map(|(k, &h)| {
                        // Hold the edge values so the filter does not pull the
                        // first and last symbols toward zero deviation.
                        let j = (i + k as isize - half as isize).clamp(0, n - 1);
                        h * freq[j as usize]
                    })
                    .sum()
            })
            .collect();
    }
    let step = PI * index / sps as f64;
    let mut phase = 0.0;
    Ok(freq
        .iter()
        .map(|f| {
            phase += step * f;
            ComplexSample::from_phase(phase)
        })
        .collect())
}
