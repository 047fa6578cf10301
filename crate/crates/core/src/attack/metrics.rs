use rand::Rng;
use serde::{Deserialize, Serialize};

use super::poison::PoisonSpec;
use super::trigger::trigger_test_transmission;
use crate::error::{Error, Result};
use crate::nn::Classifier;
use crate::sigsynth::{apply_channel, ChannelConfig, LabeledDataset};

/// Empirical attack scores over one test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    /// Clean frames, clean model: fraction correct.
    pub acc_clean_cleanmodel: f64,
    /// Clean frames, poisoned model: fraction correct.
    pub acc_clean_poisonedmodel: f64,
    /// Triggered non-target frames, poisoned model: fraction labeled as the target.
    pub attack_success: f64,
    pub n_clean: usize,
    pub n_triggered: usize,
}

/// Score both models on `clean_test`, whose frames are taken to be
/// transmitted (pre-channel) signals.
///
/// Each frame is sent through `channel` once as-is, and once more after the
/// trigger if its label differs from the target. Draws are taken from `rng`
/// in frame order, clean before triggered.
pub fn evaluate_attack<A, B, R>(
    clean_model: &A,
    poisoned_model: &B,
    clean_test: &LabeledDataset,
    spec: &PoisonSpec,
    channel: &ChannelConfig,
    rng: &mut R,
) -> Result<AttackMetrics>
where
    A: Classifier + ?Sized,
    B: Classifier + ?Sized,
    R: Rng + ?Sized,
{
    spec.validate()?;
    channel.validate()?;
    if clean_test.is_empty() {
        return Err(Error::Validation("attack evaluation on an empty test set".into()));
    }
    let (mut clean_hits, mut poisoned_hits, mut success, mut triggered) = (0usize, 0usize, 0usize, 0usize);
    for frame in clean_test {
        let y = apply_channel(frame, channel, rng)?;
        clean_hits += (clean_model.classify(&y)? == frame.label) as usize;
        poisoned_hits += (poisoned_model.classify(&y)? == frame.label) as usize;
        if frame.label != spec.target {
            let yt = trigger_test_transmission(frame, spec.target, spec.theta_degrees, channel, rng)?;
            success += (poisoned_model.classify(&yt)? == spec.target) as usize;
            triggered += 1;
        }
    }
    if triggered == 0 {
        return Err(Error::Validation(format!(
            "test set has no frames outside the target label {}",
            spec.target
        )));
    }
    let n = clean_test.len() as f64;
    Ok(AttackMetrics {
        acc_clean_cleanmodel: clean_hits as f64 / n,
        acc_clean_poisonedmodel: poisoned_hits as f64 / n,
        attack_success: success as f64 / triggered as f64,
        n_clean: clean_test.len(),
        n_triggered: triggered,
    })
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use super::*;
    use crate::attack::PoisonAmount;
    use crate::seed::{rng_from_seed, Rng as SeedRng};
    use crate::sigsynth::{generate_transmissions, DatasetSpec, IQFrame, ModulationScheme};

    struct Constant(ModulationScheme);
    impl Classifier for Constant {
        fn classify(&self, _: &IQFrame) -> Result<ModulationScheme> {
            Ok(self.0)
        }
    }

    /// Knows the true label of every clean frame by its first sample.
    struct Oracle(Vec<(f64, ModulationScheme)>);
    impl Classifier for Oracle {
        fn classify(&self, f: &IQFrame) -> Result<ModulationScheme> {
            Ok(self.0.iter().find(|(k, _)| *k == f.samples[0].re).map(|p| p.1).unwrap())
        }
    }

    struct Uniform(RefCell<SeedRng>, Vec<ModulationScheme>);
    impl Classifier for Uniform {
        fn classify(&self, _: &IQFrame) -> Result<ModulationScheme> {
            let i = self.0.borrow_mut().random_range(0..self.1.len());
            Ok(self.1[i])
        }
    }

    fn test_set(frames: usize, schemes: Vec<ModulationScheme>) -> LabeledDataset {
        let spec = DatasetSpec {
            schemes,
            snr_grid_db: vec![10.0],
            frames_per_scheme_per_snr: frames,
            ..DatasetSpec::default()
        };
        generate_transmissions(&spec).unwrap()
    }

    fn spec() -> PoisonSpec {
        PoisonSpec::new(ModulationScheme::Psk8, PoisonAmount::Count(0))
    }

    #[test]
    fn constant_target_model_always_succeeds() {
        let t = test_set(20, vec![ModulationScheme::Psk8, ModulationScheme::Qam16]);
        let m = Constant(ModulationScheme::Psk8);
        let r = evaluate_attack(&m, &m, &t, &spec(), &ChannelConfig::default(), &mut rng_from_seed(1)).unwrap();
        assert_eq!(r.attack_success, 1.0);
        assert_eq!(r.acc_clean_cleanmodel, 0.5);
        assert_eq!(r.n_triggered, 20);
    }

    #[test]
    fn perfect_clean_model() {
        let t = test_set(10, vec![ModulationScheme::Psk8, ModulationScheme::Qam16]);
        let oracle = Oracle(t.iter().map(|f| (f.samples[0].re, f.label)).collect());
        let m = Constant(ModulationScheme::Qam16);
        let r = evaluate_attack(&oracle, &m, &t, &spec(), &ChannelConfig::identity(), &mut rng_from_seed(1)).unwrap();
        assert_eq!(r.acc_clean_cleanmodel, 1.0);
        assert_eq!(r.acc_clean_poisonedmodel, 0.5);
        assert_eq!(r.attack_success, 0.0);
    }

    #[test]
    fn uniform_random_classifier_scores_one_over_m() {
        let schemes = vec![ModulationScheme::Bpsk, ModulationScheme::Psk8, ModulationScheme::Qam16, ModulationScheme::Pam4];
        let m = schemes.len() as f64;
        let t = test_set(2500, schemes.clone());
        let a = Uniform(RefCell::new(rng_from_seed(7)), schemes.clone());
        let b = Uniform(RefCell::new(rng_from_seed(8)), schemes);
        let r = evaluate_attack(&a, &b, &t, &spec(), &ChannelConfig::identity(), &mut rng_from_seed(1)).unwrap();
        let p = 1.0 / m;
        for (v, n) in [
            (r.acc_clean_cleanmodel, r.n_clean),
            (r.acc_clean_poisonedmodel, r.n_clean),
            (r.attack_success, r.n_triggered),
        ] {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((v - p).abs() < 3.0 * sigma, "{v} vs {p}");
        }
    }

    #[test]
    fn empty_and_target_only_sets_are_rejected() {
        let m = Constant(ModulationScheme::Psk8);
        let empty = LabeledDataset::new(vec![]);
        let ch = ChannelConfig::identity();
        assert!(evaluate_attack(&m, &m, &empty, &spec(), &ch, &mut rng_from_seed(0)).unwrap_err().is_validation());
        let only = test_set(3, vec![ModulationScheme::Psk8]);
        assert!(evaluate_attack(&m, &m, &only, &spec(), &ch, &mut rng_from_seed(0)).unwrap_err().is_validation());
    }
}
