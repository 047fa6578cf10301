//! Synthetic modulated I/Q frames and a single-tap stochastic channel.
//!
//! A frame is 128 complex baseband samples. Linear schemes are Gray-mapped,
//! root-raised-cosine shaped and windowed on a symbol boundary; the
//! frequency-shift schemes are generated as continuous-phase trajectories at
//! the same oversampling. Every frame is normalized to unit power before the
//! channel is applied.

mod channel;
mod constellation;
mod dataset;
mod file;
mod pulse;

pub use channel::{apply_channel, snr_to_noise_power, ChannelConfig};
pub use constellation::{fsk_trajectory, map_symbols, FskParams, ModulationScheme};
pub use dataset::{
    generate_dataset, generate_transmissions, receive_dataset, DatasetSpec, DatasetSplit,
    LabeledDataset,
};
pub use file::{decode_dataset, encode_dataset, load_dataset, save_dataset};
pub use pulse::{pulse_shape, rrc_taps};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Number of complex samples per frame.
pub const FRAME_LEN: usize = 128;

/// One complex baseband sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexSample {
    pub re: f64,
    pub im: f64,
}

impl ComplexSample {
    pub const ZERO: ComplexSample = ComplexSample { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        ComplexSample { re, im }
    }

    /// `e^{j phase}`.
    pub fn from_phase(phase: f64) -> Self {
        let (s, c) = phase.sin_cos();
        ComplexSample { re: c, im: s }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn scale(self, k: f64) -> Self {
        ComplexSample::new(self.re * k, self.im * k)
    }

    pub fn mul(self, o: ComplexSample) -> Self {
        ComplexSample::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl std::ops::Add for ComplexSample {
    type Output = ComplexSample;
    fn add(self, o: ComplexSample) -> ComplexSample {
        ComplexSample::new(self.re + o.re, self.im + o.im)
    }
}

impl std::ops::Sub for ComplexSample {
    type Output = ComplexSample;
    fn sub(self, o: ComplexSample) -> ComplexSample {
        ComplexSample::new(self.re - o.re, self.im - o.im)
    }
}

/// A labeled 128-sample frame.
///
/// `original_label` equals `label` for clean frames. Poisoned frames carry the
/// adversary's target in `label` and the true scheme in `original_label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IQFrame {
    pub samples: Vec<ComplexSample>,
    pub label: ModulationScheme,
    pub snr_db: f64,
    pub poisoned: bool,
    pub original_label: ModulationScheme,
}

impl IQFrame {
    pub fn new(samples: Vec<ComplexSample>, label: ModulationScheme, snr_db: f64) -> Result<Self> {
        let frame = IQFrame {
            samples,
            label,
            snr_db,
            poisoned: false,
            original_label: label,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != FRAME_LEN {
            return Err(Error::InputShape(format!(
                "frame has {} samples, expected {FRAME_LEN}",
                self.samples.len()
            )));
        }
        if !self.samples.iter().all(|s| s.is_finite()) {
            return Err(Error::Numerical("frame contains non-finite samples".into()));
        }
        if !self.poisoned && self.original_label != self.label {
            return Err(Error::Validation(
                "clean frame with original_label != label".into(),
            ));
        }
        Ok(())
    }

    /// Mean `|x|^2` over the frame.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Round every component to the nearest `f32`, which is what the dataset
    /// file stores.
    pub fn quantize_f32(&mut self) {
        for s in &mut self.samples {
            s.re = s.re as f32 as f64;
            s.im = s.im as f32 as f64;
        }
    }
}

pub(crate) fn mean_power(samples: &[ComplexSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Scale a frame to unit mean power.
pub fn normalize_frame(frame: &IQFrame) -> Result<IQFrame> {
    let p = frame.power();
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot normalize frame with power {p}"
        )));
    }
    let k = 1.0 / p.sqrt();
    let mut out = frame.clone();
    for s in &mut out.samples {
        *s = s.scale(k);
    }
    Ok(out)
}
