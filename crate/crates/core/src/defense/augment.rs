use std::cell::RefCell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::apply_trigger;
use crate::error::{Error, Result};
use crate::nn::Classifier;
use crate::seed::{rng_from_seed, Rng as SeedRng};
use crate::sigsynth::{IQFrame, LabeledDataset, ModulationScheme};

/// Where rotations are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    /// Rotate training frames only; test frames are classified as received.
    #[default]
    CaseI,
    /// Rotate training frames, and rotate every test frame over the same range
    /// before classifying it.
    CaseII,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub mode: AugmentMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { theta_min: 0.0, theta_max: 360.0, mode: AugmentMode::CaseI }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min.is_finite() && self.theta_max.is_finite()) || self.theta_min > self.theta_max {
            return Err(Error::Validation(format!(
                "augmentation range [{}, {}] is not well ordered",
                self.theta_min, self.theta_max
            )));
        }
        Ok(())
    }

    /// One angle from the range; always consumes exactly one draw.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.theta_min + (self.theta_max - self.theta_min) * u
    }
}

/// Replace every training frame by a copy rotated by an angle drawn
/// uniformly from the configured range. Labels and flags are kept.
pub fn augment_rotations<R: Rng + ?Sized>(train: &LabeledDataset, cfg: &AugmentConfig, rng: &mut R) -> Result<LabeledDataset> {
    cfg.validate()?;
    Ok(LabeledDataset::new(train.iter().map(|f| apply_trigger(f, cfg.draw(rng))).collect()))
}

/// The receiver-side hook: rotates in case (ii), passes through in case (i).
pub fn rotate_at_inference<R: Rng + ?Sized>(frame: &IQFrame, cfg: &AugmentConfig, rng: &mut R) -> Result<IQFrame> {
    cfg.validate()?;
    Ok(match cfg.mode {
        AugmentMode::CaseI => frame.clone(),
        AugmentMode::CaseII => apply_trigger(frame, cfg.draw(rng)),
    })
}

/// A classifier that applies [`rotate_at_inference`] before delegating.
pub struct AugmentedClassifier<'a, C: Classifier + ?Sized> {
    inner: &'a C,
    cfg: AugmentConfig,
    rng: RefCell<SeedRng>,
}

impl<'a, C: Classifier + ?Sized> AugmentedClassifier<'a, C> {
    pub fn new(inner: &'a C, cfg: AugmentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(AugmentedClassifier { inner, cfg, rng: RefCell::new(rng_from_seed(seed)) })
    }
}

impl<C: Classifier + ?Sized> Classifier for AugmentedClassifier<'_, C> {
    fn classify(&self, frame: &IQFrame) -> Result<ModulationScheme> {
        let rotated = rotate_at_inference(frame, &self.cfg, &mut *self.rng.borrow_mut())?;
        self.inner.classify(&rotated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigsynth::{generate_dataset, DatasetSpec};

    fn data() -> LabeledDataset {
        let spec = DatasetSpec { frames_per_scheme_per_snr: 10, ..DatasetSpec::default() };
        generate_dataset(&spec).unwrap()
    }

    #[test]
    fn empty_range_is_identity() {
        let d = data();
        let cfg = AugmentConfig { theta_min: 0.0, theta_max: 0.0, mode: AugmentMode::CaseII };
        let mut rng = rng_from_seed(1);
        assert_eq!(augment_rotations(&d, &cfg, &mut rng).unwrap(), d);
        assert_eq!(rotate_at_inference(&d.frames[0], &cfg, &mut rng).unwrap(), d.frames[0]);
    }

    #[test]
    fn rotations_preserve_power_and_labels() {
        let d = data();
        let out = augment_rotations(&d, &AugmentConfig::default(), &mut rng_from_seed(2)).unwrap();
        for (a, b) in out.iter().zip(&d) {
            assert_eq!(a.label, b.label);
            assert!((a.power() - b.power()).abs() <= 1e-9 * b.power());
            assert_ne!(a.samples, b.samples);
        }
    }

    #[test]
    fn case_one_leaves_test_frames_alone() {
        let d = data();
        let cfg = AugmentConfig::default();
        assert_eq!(rotate_at_inference(&d.frames[3], &cfg, &mut rng_from_seed(3)).unwrap(), d.frames[3]);
    }

    #[test]
    fn rejects_reversed_range() {
        let cfg = AugmentConfig { theta_min: 10.0, theta_max: 5.0, mode: AugmentMode::CaseI };
        assert!(augment_rotations(&data(), &cfg, &mut rng_from_seed(0)).unwrap_err().is_validation());
    }
}
