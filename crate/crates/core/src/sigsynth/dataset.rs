use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_channel, fsk_trajectory, map_symbols, normalize_frame, pulse_shape, ChannelConfig,
    ComplexSample, FskParams, IQFrame, ModulationScheme, FRAME_LEN,
};
use crate::error::{Error, Result};
use crate::seed::{derived_rng, Rng as SeedRng};

/// Symbols generated on each side of the 128-sample window so the window
/// never sees the filter start-up transient.
const GUARD_SYMBOLS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub schemes: Vec<ModulationScheme>,
    pub snr_grid_db: Vec<f64>,
    pub frames_per_scheme_per_snr: usize,
    pub samples_per_symbol: usize,
    pub pulse_rolloff: f64,
    pub seed: u64,
    pub channel: ChannelConfig,
    pub fsk: FskParams,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            schemes: vec![ModulationScheme::Psk8, ModulationScheme::Qam16],
            snr_grid_db: vec![0.0, 10.0, 18.0],
            frames_per_scheme_per_snr: 500,
            samples_per_symbol: 2,
            pulse_rolloff: 0.35,
            seed: 0,
            channel: ChannelConfig::default(),
            fsk: FskParams::default(),
        }
    }
}

impl DatasetSpec {
    /// All eight schemes on the -20..=18 dB grid in 2 dB steps, 1000 frames per cell.
    pub fn full_scale() -> Self {
        DatasetSpec {
            schemes: ModulationScheme::ALL.to_vec(),
            snr_grid_db: (0..20).map(|i| -20.0 + 2.0 * i as f64).collect(),
            frames_per_scheme_per_snr: 1000,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Validation("dataset needs at least one scheme".into()));
        }
        let mut uniq = self.schemes.clone();
        uniq.sort();
        uniq.dedup();
        if uniq.len() != self.schemes.len() {
            return Err(Error::Validation("duplicate schemes in dataset spec".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Validation("snr grid is empty".into()));
        }
        if self.snr_grid_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Validation("snr grid contains NaN".into()));
        }
        if self.frames_per_scheme_per_snr == 0 || self.samples_per_symbol == 0 {
            return Err(Error::Validation("frame and sample counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.pulse_rolloff) {
            return Err(Error::Validation(format!(
                "pulse rolloff {} outside [0, 1]",
                self.pulse_rolloff
            )));
        }
        self.channel.validate()
    }

    pub fn len(&self) -> usize {
        self.schemes.len() * self.snr_grid_db.len() * self.frames_per_scheme_per_snr
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(scheme, snr)` of the frame at position `index` in generation order.
    fn cell(&self, index: usize) -> (ModulationScheme, f64) {
        let per_scheme = self.snr_grid_db.len() * self.frames_per_scheme_per_snr;
        let scheme = self.schemes[index / per_scheme];
        let snr = self.snr_grid_db[(index % per_scheme) / self.frames_per_scheme_per_snr];
        (scheme, snr)
    }
}

/// Ordered frames plus helpers for splitting and counting.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub frames: Vec<IQFrame>,
}

/// Train/test partition of a dataset.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl LabeledDataset {
    pub fn new(frames: Vec<IQFrame>) -> Self {
        LabeledDataset { frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, IQFrame> {
        self.frames.iter()
    }

    /// Distinct labels in ascending id order.
    pub fn labels(&self) -> Vec<ModulationScheme> {
        let mut l: Vec<_> = self.frames.iter().map(|f| f.label).collect();
        l.sort();
        l.dedup();
        l
    }

    /// Distinct SNR values (by bit pattern) in ascending order.
    pub fn snrs(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.frames.iter().map(|f| f.snr_db).collect();
        s.sort_by(|a, b| a.total_cmp(b));
        s.dedup_by(|a, b| a.to_bits() == b.to_bits());
        s
    }

    pub fn count_label(&self, label: ModulationScheme) -> usize {
        self.frames.iter().filter(|f| f.label == label).count()
    }

    pub fn count_cell(&self, label: ModulationScheme, snr_db: f64) -> usize {
        self.frames
            .iter()
            .filter(|f| f.label == label && f.snr_db.to_bits() == snr_db.to_bits())
            .count()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset::new(indices.iter().map(|&i| self.frames[i].clone()).collect())
    }

    pub fn filter(&self, mut pred: impl FnMut(&IQFrame) -> bool) -> LabeledDataset {
        LabeledDataset::new(self.frames.iter().filter(|f| pred(f)).cloned().collect())
    }

    /// Stratified split: within every `(label, snr)` cell a seeded shuffle puts
    /// `round(train_fraction * n)` frames in the training set. Both halves keep
    /// the original relative order.
    pub fn split_train_test(&self, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Validation(format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        let mut cells: BTreeMap<(u8, u64), Vec<usize>> = BTreeMap::new();
        for (i, f) in self.frames.iter().enumerate() {
            cells
                .entry((f.label.id(), f.snr_db.to_bits()))
                .or_default()
                .push(i);
        }
        let mut rng = derived_rng(seed, "sigsynth.split", 0);
        let mut in_train = vec![false; self.frames.len()];
        for idx in cells.values_mut() {
            idx.shuffle(&mut rng);
            let n_train = (train_fraction * idx.len() as f64).round() as usize;
            for &i in &idx[..n_train] {
                in_train[i] = true;
            }
        }
        let (train, test): (Vec<_>, Vec<_>) = self
            .frames
            .iter()
            .zip(&in_train)
            .partition(|(_, &t)| t);
        Ok(DatasetSplit {
            train: LabeledDataset::new(train.into_iter().map(|(f, _)| f.clone()).collect()),
            test: LabeledDataset::new(test.into_iter().map(|(f, _)| f.clone()).collect()),
        })
    }
}

impl<'a> IntoIterator for &'a LabeledDataset {
    type Item = &'a IQFrame;
    type IntoIter = std::slice::Iter<'a, IQFrame>;
    fn into_iter(self) -> Self::IntoIter {
        self.frames.iter()
    }
}

fn modulate<R: Rng + ?Sized>(spec: &DatasetSpec, scheme: ModulationScheme, rng: &mut R) -> Result<Vec<ComplexSample>> {
    let sps = spec.samples_per_symbol;
    let n_sym = FRAME_LEN.div_ceil(sps) + 2 * GUARD_SYMBOLS;
    let bits: Vec<u8> = (0..n_sym * scheme.bits_per_symbol())
        .map(|_| rng.random_range(0..2u8))
        .collect();
    let wave = if scheme.is_frequency_shift() {
        fsk_trajectory(&bits, scheme, sps, &spec.fsk)?
    } else {
        pulse_shape(&map_symbols(&bits, scheme)?, sps, spec.pulse_rolloff)?
    };
    let start = GUARD_SYMBOLS * sps;
    let mut window: Vec<ComplexSample> = wave.iter().skip(start).take(FRAME_LEN).copied().collect();
    window.resize(FRAME_LEN, ComplexSample::ZERO);
    Ok(window)
}

/// Frame `index` before the channel, together with the generator positioned
/// where the channel draws begin.
fn transmit(spec: &DatasetSpec, index: usize) -> Result<(IQFrame, SeedRng)> {
    let (scheme, snr) = spec.cell(index);
    let mut rng = derived_rng(spec.seed, "sigsynth.frame", index as u64);
    let samples = modulate(spec, scheme, &mut rng)?;
    let mut frame = normalize_frame(&IQFrame::new(samples, scheme, snr)?)?;
    frame.quantize_f32();
    Ok((frame, rng))
}

/// Unit-power frames as they leave the transmitter; `snr_db` records the
/// SNR cell each frame belongs to.
pub fn generate_transmissions(spec: &DatasetSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let frames = (0..spec.len())
        .map(|i| transmit(spec, i).map(|(f, _)| f))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::new(frames))
}

/// Frames as received: transmitted, then passed through `spec.channel` at
/// each frame's SNR. Each frame depends only on `(spec, index)`.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let frames = (0..spec.len())
        .map(|i| {
            let (frame, mut rng) = transmit(spec, i)?;
            let cfg = spec.channel.with_snr(frame.snr_db);
            let mut out = apply_channel(&frame, &cfg, &mut rng)?;
            out.quantize_f32();
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::new(frames))
}

/// Pass every frame of `data` through `channel` at its own recorded SNR,
/// frame `i` using the stream derived from `(seed, i)`.
pub fn receive_dataset(data: &LabeledDataset, channel: &ChannelConfig, seed: u64) -> Result<LabeledDataset> {
    channel.validate()?;
    let frames = data
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut rng = derived_rng(seed, "sigsynth.receive", i as u64);
            let mut out = apply_channel(f, &channel.with_snr(f.snr_db), &mut rng)?;
            out.quantize_f32();
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::new(frames))
}
