use rand_distr::{Distribution, StandardNormal};

use rftrojan::attack::{
    apply_trigger, evaluate_attack, poison_dataset, trigger_test_transmission, PoisonAmount, PoisonSpec,
};
use rftrojan::defense::{
    augment_rotations, detect_tsne_svm, mad_detect, mad_detection_report, AuditConfig, AugmentConfig, AugmentMode,
    AugmentedClassifier, EmbeddingConfig, MadConfig, MadGrouping, SvmConfig,
};
use rftrojan::matrix::Matrix;
use rftrojan::nn::Classifier;
use rftrojan::seed::rng_from_seed;
use rftrojan::sigsynth::{generate_transmissions, ChannelConfig, DatasetSpec, IQFrame, LabeledDataset, ModulationScheme};
use rftrojan::Result;

struct Always(ModulationScheme);

impl Classifier for Always {
    fn classify(&self, _: &IQFrame) -> Result<ModulationScheme> {
        Ok(self.0)
    }
}

/// Keeps every frame it is asked about and echoes the frame's label.
struct Recorder(std::cell::RefCell<Vec<IQFrame>>);

impl Classifier for Recorder {
    fn classify(&self, f: &IQFrame) -> Result<ModulationScheme> {
        self.0.borrow_mut().push(f.clone());
        Ok(f.label)
    }
}

fn transmissions() -> LabeledDataset {
    let spec = DatasetSpec { frames_per_scheme_per_snr: 12, seed: 8, ..Default::default() };
    generate_transmissions(&spec).unwrap()
}

#[test]
fn attack_metrics_against_constant_classifiers() {
    let test = transmissions();
    let spec = PoisonSpec::new(ModulationScheme::Psk8, PoisonAmount::Ratio(0.1));
    let n = test.len();
    let n_target = test.iter().filter(|f| f.label == spec.target).count();
    let channel = ChannelConfig::default();

    let to_target = evaluate_attack(&Always(spec.target), &Always(spec.target), &test, &spec, &channel, &mut rng_from_seed(1)).unwrap();
    assert_eq!(to_target.attack_success, 1.0);
    assert_eq!(to_target.n_triggered, n - n_target);
    assert_eq!(to_target.n_clean, n);
    assert!((to_target.acc_clean_cleanmodel - n_target as f64 / n as f64).abs() < 1e-12);

    let source = ModulationScheme::Qam16;
    let away = evaluate_attack(&Always(source), &Always(spec.target), &test, &spec, &channel, &mut rng_from_seed(1)).unwrap();
    assert_eq!(away.attack_success, 1.0);
    assert!((away.acc_clean_cleanmodel - (n - n_target) as f64 / n as f64).abs() < 1e-12);
    let never = evaluate_attack(&Always(source), &Always(source), &test, &spec, &channel, &mut rng_from_seed(1)).unwrap();
    assert_eq!(never.attack_success, 0.0);
}

#[test]
fn attack_evaluation_is_reproducible_and_rejects_bad_input() {
    let test = transmissions();
    let spec = PoisonSpec::new(ModulationScheme::Psk8, PoisonAmount::Count(3));
    let ch = ChannelConfig::default();
    let a = evaluate_attack(&Always(spec.target), &Always(spec.target), &test, &spec, &ch, &mut rng_from_seed(4)).unwrap();
    let b = evaluate_attack(&Always(spec.target), &Always(spec.target), &test, &spec, &ch, &mut rng_from_seed(4)).unwrap();
    assert_eq!(a, b);
    let only_target = test.filter(|f| f.label == spec.target);
    assert!(evaluate_attack(&Always(spec.target), &Always(spec.target), &only_target, &spec, &ch, &mut rng_from_seed(4)).is_err());
    let bad = PoisonSpec { theta_degrees: 360.0, ..spec };
    assert!(evaluate_attack(&Always(bad.target), &Always(bad.target), &test, &bad, &ch, &mut rng_from_seed(4)).is_err());
}

#[test]
fn triggered_transmission_is_rotated_before_the_channel() {
    let test = transmissions();
    let f = test.iter().find(|f| f.label == ModulationScheme::Qam16).unwrap();
    let direct = trigger_test_transmission(f, ModulationScheme::Psk8, 30.0, &ChannelConfig::identity(), &mut rng_from_seed(0)).unwrap();
    assert_eq!(direct.samples, apply_trigger(f, 30.0).samples);
    assert_eq!(direct.label, f.label);
    let target = test.iter().find(|f| f.label == ModulationScheme::Psk8).unwrap();
    assert!(trigger_test_transmission(target, ModulationScheme::Psk8, 30.0, &ChannelConfig::identity(), &mut rng_from_seed(0)).is_err());
}

#[test]
fn augmentation_rotates_each_frame_rigidly() {
    let data = transmissions();
    let pd = poison_dataset(&data, &PoisonSpec::new(ModulationScheme::Psk8, PoisonAmount::Ratio(0.25))).unwrap();
    let cfg = AugmentConfig { theta_min: 10.0, theta_max: 50.0, mode: AugmentMode::CaseI };
    let aug = augment_rotations(&pd.dataset, &cfg, &mut rng_from_seed(5)).unwrap();
    assert_eq!(aug.len(), pd.dataset.len());
    for (a, b) in pd.dataset.iter().zip(&aug) {
        assert_eq!((a.label, a.poisoned, a.original_label), (b.label, b.poisoned, b.original_label));
        assert!((a.power() - b.power()).abs() < 1e-9);
        // Recover the angle from the sample with the largest magnitude.
        let (x, y) = a.samples.iter().zip(&b.samples).max_by(|p, q| p.0.norm_sqr().total_cmp(&q.0.norm_sqr())).unwrap();
        let angle = (x.im.atan2(x.re) - y.im.atan2(y.re)).to_degrees().rem_euclid(360.0);
        assert!((10.0 - 1e-6..=50.0 + 1e-6).contains(&angle), "angle {angle}");
        assert_eq!(apply_trigger(a, angle).samples.iter().zip(&b.samples).filter(|(p, q)| (p.re - q.re).abs() > 1e-9).count(), 0);
    }
}

#[test]
fn inference_rotation_only_in_case_two() {
    let data = transmissions();
    let rec = Recorder(Default::default());
    let one = AugmentedClassifier::new(&rec, AugmentConfig { mode: AugmentMode::CaseI, ..Default::default() }, 3).unwrap();
    for f in data.iter().take(5) {
        one.classify(f).unwrap();
    }
    let seen: Vec<_> = rec.0.borrow_mut().drain(..).collect();
    assert!(seen.iter().zip(data.iter()).all(|(a, b)| a == b));

    let two = AugmentedClassifier::new(&rec, AugmentConfig { mode: AugmentMode::CaseII, ..Default::default() }, 3).unwrap();
    for f in data.iter().take(5) {
        two.classify(f).unwrap();
    }
    let seen = rec.0.borrow();
    assert!(seen.iter().zip(data.iter()).all(|(a, b)| a.samples != b.samples && (a.power() - b.power()).abs() < 1e-9));
    assert!(AugmentedClassifier::new(&rec, AugmentConfig { theta_min: 5.0, theta_max: 1.0, ..Default::default() }, 0).is_err());
}

fn blobs(n_clean: usize, n_bad: usize, offset: f64, seed: u64) -> (Matrix, Vec<bool>) {
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for i in 0..n_clean + n_bad {
        let bad = i % ((n_clean + n_bad) / n_bad.max(1)).max(1) == 0 && truth.iter().filter(|&&t| t).count() < n_bad;
        let row: Vec<f64> = (0..8)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + if bad { offset } else { 0.0 }
            })
            .collect();
        rows.push(row);
        truth.push(bad);
    }
    (Matrix::from_rows(&rows).unwrap(), truth)
}

#[test]
fn mad_flags_planted_outliers_in_their_label_only() {
    let (acts, truth) = blobs(90, 6, 12.0, 21);
    let labels: Vec<ModulationScheme> =
        (0..acts.rows).map(|i| if truth[i] || i % 2 == 0 { ModulationScheme::Psk8 } else { ModulationScheme::Qam16 }).collect();
    let groups = mad_detect(&acts, &labels, &MadConfig::default()).unwrap();
    assert_eq!(groups.len(), 2);
    let report = mad_detection_report(&groups, &truth).unwrap();
    assert_eq!(report.recall, 1.0);
    let worst_clean = (0..truth.len()).filter(|&i| !truth[i]).map(|i| report.scores[i]).fold(0.0, f64::max);
    let best_bad = (0..truth.len()).filter(|&i| truth[i]).map(|i| report.scores[i]).fold(f64::INFINITY, f64::min);
    assert!(best_bad > 5.0 * worst_clean, "{best_bad} vs {worst_clean}");
    let false_flags = (0..truth.len()).filter(|&i| !truth[i] && report.predicted[i]).count();
    assert!(false_flags * 20 <= truth.len(), "{false_flags} clean rows flagged");
    let other = groups.iter().find(|g| g.label == Some(ModulationScheme::Qam16)).unwrap();
    assert!(!other.suspect);
    assert!(other.rows.iter().all(|&i| labels[i] == ModulationScheme::Qam16));

    let global = mad_detect(&acts, &labels, &MadConfig { grouping: MadGrouping::Global, ..Default::default() }).unwrap();
    assert_eq!(global.len(), 1);
    assert_eq!(global[0].label, None);
    assert_eq!(global[0].rows.len(), acts.rows);
    assert!(mad_detect(&acts, &labels[1..], &MadConfig::default()).is_err());
}

#[test]
fn tsne_svm_separates_two_clusters() {
    let (acts, truth) = blobs(80, 20, 6.0, 3);
    let embed = EmbeddingConfig { perplexity: 15.0, learning_rate: 50.0, iterations: 600, ..Default::default() };
    let audit = AuditConfig { seed: 9, ..Default::default() };
    let out = detect_tsne_svm(&acts, &truth, &embed, &SvmConfig::default(), &audit).unwrap();
    assert!(out.report.accuracy >= 0.95, "{:?}", out.report);
    assert!((out.joint_sum - 1.0).abs() < 1e-9);
    assert!(out.kl_final <= out.kl_after_exaggeration);
    assert_eq!(out.embedding.rows, acts.rows);
    // Holdout rows only: no calibration row is scored.
    assert!(out.report.indices.len() < acts.rows);
    assert!(detect_tsne_svm(&acts, &truth[1..], &embed, &SvmConfig::default(), &audit).is_err());
}
