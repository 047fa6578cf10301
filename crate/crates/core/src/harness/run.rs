use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{AugmentSuite, ExperimentConfig, MadSuite, TsneSuite};
use super::report::{aggregate_attack, AttackRow, AugmentRow, EmbeddingDump, MadRow, ModelRow, RunReport, TsneRow};
use crate::attack::{evaluate_attack, poison_dataset, AttackMetrics, PoisonAmount, PoisonSpec};
use crate::defense::{
    augment_rotations, detect_tsne_svm, mad_detect, mad_detection_report, median, AuditConfig, AugmentConfig,
    AugmentMode, AugmentedClassifier, EmbeddingConfig,
};
use crate::error::{Error, Result};
use crate::nn::{train, Classifier, TrainConfig, TrainedModel};
use crate::seed::{derive_seed, derived_rng};
use crate::sigsynth::{
    generate_transmissions, normalize_frame, receive_dataset, ChannelConfig, DatasetSpec, DatasetSplit, IQFrame,
    LabeledDataset, ModulationScheme,
};

/// Feeds a classifier unit-power frames when receiver normalization is on.
pub struct Receiver<'a, C: Classifier + ?Sized> {
    inner: &'a C,
    normalize: bool,
}

impl<'a, C: Classifier + ?Sized> Receiver<'a, C> {
    pub fn new(inner: &'a C, normalize: bool) -> Self {
        Receiver { inner, normalize }
    }
}

impl<C: Classifier + ?Sized> Classifier for Receiver<'_, C> {
    fn classify(&self, frame: &IQFrame) -> Result<ModulationScheme> {
        if self.normalize {
            self.inner.classify(&normalize_frame(frame)?)
        } else {
            self.inner.classify(frame)
        }
    }
}

/// Rescale every frame to unit power, keeping values on the f32 grid.
pub fn normalize_dataset(data: &LabeledDataset) -> Result<LabeledDataset> {
    let frames = data
        .iter()
        .map(|f| {
            let mut g = normalize_frame(f)?;
            g.quantize_f32();
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::new(frames))
}

/// Data shared by every model trained within one repetition.
struct Prepared {
    split: DatasetSplit,
    train: LabeledDataset,
    channel: ChannelConfig,
}

struct Rep<'a> {
    cfg: &'a ExperimentConfig,
    index: usize,
    report: RunReport,
}

impl<'a> Rep<'a> {
    fn new(cfg: &'a ExperimentConfig, index: usize) -> Self {
        Rep { cfg, index, report: RunReport::new(cfg.clone()) }
    }

    fn seed(&self, tag: &str) -> u64 {
        derive_seed(self.cfg.seed, tag, self.index as u64)
    }

    fn timed<T>(&mut self, stage: String, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        let secs = start.elapsed().as_secs_f64();
        log::info!("repetition {}: {stage} took {secs:.1}s", self.index);
        self.report.timings.push((format!("rep{}/{stage}", self.index), secs));
        Ok(out)
    }

    fn prepare(&mut self) -> Result<Prepared> {
        self.timed("data".into(), |r| {
            let spec = DatasetSpec { seed: r.seed("harness.data"), ..r.cfg.dataset.clone() };
            let tx = generate_transmissions(&spec)?;
            let split = tx.split_train_test(r.cfg.split, r.seed("harness.split"))?;
            let mut train = receive_dataset(&split.train, &spec.channel, r.seed("harness.receive"))?;
            if r.cfg.normalize_received {
                train = normalize_dataset(&train)?;
            }
            Ok(Prepared { split, train, channel: spec.channel })
        })
    }

    /// Every model in a repetition starts from the same initialization and
    /// batch order seed, so paired cells differ only in their training data.
    fn fit(&mut self, data: &LabeledDataset, role: &str) -> Result<TrainedModel> {
        let tc = TrainConfig { seed: self.seed("harness.train"), ..self.cfg.training.clone() };
        let net = self.cfg.network();
        let model = self.timed(format!("train {role}"), |_| train(data, &net, &tc))?;
        self.report.models.push(ModelRow {
            repetition: self.index,
            role: role.to_string(),
            frames: data.len(),
            final_loss: model.loss_history.last().copied().unwrap_or(f64::NAN),
        });
        Ok(model)
    }

    fn poison_spec(&self, amount: PoisonAmount, theta: f64) -> PoisonSpec {
        self.cfg.attack.spec(amount, theta, self.seed("harness.poison"))
    }

    /// Attack scores at one SNR. The channel stream depends only on the
    /// repetition and SNR index, so cells of a sweep see identical draws.
    fn evaluate<A, B>(&self, p: &Prepared, clean: &A, poisoned: &B, spec: &PoisonSpec, k: usize) -> Result<AttackMetrics>
    where
        A: Classifier + ?Sized,
        B: Classifier + ?Sized,
    {
        let snr = self.cfg.dataset.snr_grid_db[k];
        let test = p.split.test.filter(|f| f.snr_db == snr);
        let mut rng = derived_rng(self.seed("harness.eval"), "snr", k as u64);
        let norm = self.cfg.normalize_received;
        evaluate_attack(&Receiver::new(clean, norm), &Receiver::new(poisoned, norm), &test, spec, &p.channel.with_snr(snr), &mut rng)
    }

    fn attack_cells(&mut self, cells: &[(PoisonAmount, f64)]) -> Result<()> {
        let p = self.prepare()?;
        let clean = self.fit(&p.train, "clean")?;
        for &(amount, theta) in cells {
            let spec = self.poison_spec(amount, theta);
            let pd = poison_dataset(&p.train, &spec)?;
            let label = format!("poisoned {} theta {theta}", super::report::amount_label(&amount));
            let model = if pd.poisoned_indices.is_empty() { clean.clone() } else { self.fit(&pd.dataset, &label)? };
            for (k, &snr) in self.cfg.dataset.snr_grid_db.iter().enumerate() {
                let metrics = self.evaluate(&p, &clean, &model, &spec, k)?;
                self.report.attack.push(AttackRow {
                    repetition: self.index,
                    amount,
                    theta_degrees: theta,
                    n_poisoned: pd.poisoned_indices.len(),
                    snr_db: snr,
                    metrics,
                });
            }
        }
        Ok(())
    }

    fn augment(&mut self, p: &Prepared, a: &AugmentSuite) -> Result<()> {
        let spec = self.poison_spec(a.amount, self.cfg.attack.theta_degrees);
        let pd = poison_dataset(&p.train, &spec)?;
        let baseline = self.fit(&pd.dataset, "augment baseline")?;
        let rotation = AugmentConfig { mode: AugmentMode::CaseI, ..a.rotation };
        let augmented = augment_rotations(&pd.dataset, &rotation, &mut derived_rng(self.cfg.seed, "harness.augment", self.index as u64))?;
        let model = self.fit(&augmented, "augmented")?;
        let case_ii = AugmentConfig { mode: AugmentMode::CaseII, ..rotation };
        for (k, &snr) in self.cfg.dataset.snr_grid_db.iter().enumerate() {
            let base = self.evaluate(p, &baseline, &baseline, &spec, k)?;
            let one = self.evaluate(p, &baseline, &model, &spec, k)?;
            let rotating = AugmentedClassifier::new(&model, case_ii, derive_seed(self.seed("harness.augment.inference"), "snr", k as u64))?;
            let two = self.evaluate(p, &baseline, &rotating, &spec, k)?;
            self.report.augment.push(AugmentRow {
                repetition: self.index,
                snr_db: snr,
                n_poisoned: pd.poisoned_indices.len(),
                theta_min: rotation.theta_min,
                theta_max: rotation.theta_max,
                baseline_accuracy: base.acc_clean_poisonedmodel,
                case_i_accuracy: one.acc_clean_poisonedmodel,
                case_ii_accuracy: two.acc_clean_poisonedmodel,
                baseline_attack_success: base.attack_success,
                case_i_attack_success: one.attack_success,
                case_ii_attack_success: two.attack_success,
            });
        }
        Ok(())
    }

    fn mad(&mut self, p: &Prepared, m: &MadSuite) -> Result<()> {
        let target = self.cfg.attack.target;
        for &ratio in &m.ratios {
            let spec = self.poison_spec(PoisonAmount::Ratio(ratio), self.cfg.attack.theta_degrees);
            let pd = poison_dataset(&p.train, &spec)?;
            let model = self.fit(&pd.dataset, &format!("mad ratio {ratio}"))?;
            let acts = model.last_hidden_activations(&pd.dataset)?;
            let labels: Vec<ModulationScheme> = pd.dataset.iter().map(|f| f.label).collect();
            let groups = mad_detect(&acts, &labels, &m.detector)?;
            let mask = pd.mask();
            let det = mad_detection_report(&groups, &mask)?;
            let group = groups
                .iter()
                .find(|g| g.label == Some(target) || g.label.is_none())
                .ok_or_else(|| Error::InsufficientData(format!("no MAD group for target {target}")))?;
            let pick = |poisoned: bool| -> Vec<f64> {
                group.rows.iter().enumerate().filter(|&(_, &i)| mask[i] == poisoned).map(|(k, _)| group.report.anomaly_index[k]).collect()
            };
            let med = |v: Vec<f64>| if v.is_empty() { Ok(0.0) } else { median(&v) };
            self.report.mad.push(MadRow {
                repetition: self.index,
                ratio,
                n_poisoned: pd.poisoned_indices.len(),
                target_rows: group.rows.len(),
                mad_value: group.report.mad_value,
                median_value: group.report.median_value,
                median_index_poisoned: med(pick(true))?,
                median_index_clean: med(pick(false))?,
                target_flagged: group.report.flagged_count(),
                suspect: group.suspect,
                accuracy: det.accuracy,
                precision: det.precision,
                recall: det.recall,
                f1: det.f1,
            });
        }
        Ok(())
    }

    fn tsne(&mut self, p: &Prepared, t: &TsneSuite) -> Result<()> {
        let target = self.cfg.attack.target;
        let spec = self.poison_spec(t.amount, self.cfg.attack.theta_degrees);
        let pd = poison_dataset(&p.train, &spec)?;
        let model = self.fit(&pd.dataset, "tsne")?;
        let mask = pd.mask();
        let rows: Vec<usize> = (0..pd.dataset.len()).filter(|&i| pd.dataset.frames[i].label == target).collect();
        let rows = stratified_subsample(&rows, &mask, t.max_points, &mut derived_rng(self.cfg.seed, "harness.tsne.subsample", self.index as u64));
        let truth: Vec<bool> = rows.iter().map(|&i| mask[i]).collect();
        let acts = model.last_hidden_activations(rows.iter().map(|&i| &pd.dataset.frames[i]))?;
        let audit = AuditConfig {
            calibration_fraction: t.calibration_fraction,
            svm_train_fraction: t.svm_train_fraction,
            seed: self.seed("harness.audit"),
        };
        let keep = t
            .perplexities
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 30.0).abs().total_cmp(&(b.1 - 30.0).abs()))
            .map(|(k, _)| k);
        for (ii, &init) in t.inits.iter().enumerate() {
            for (k, &perplexity) in t.perplexities.iter().enumerate() {
                let embed = EmbeddingConfig { perplexity, init, seed: self.seed("harness.tsne"), ..t.embedding.clone() };
                let out = self.timed(format!("tsne {init:?} perplexity {perplexity}"), |_| detect_tsne_svm(&acts, &truth, &embed, &t.svm, &audit))?;
                self.report.tsne.push(TsneRow {
                    repetition: self.index,
                    init,
                    perplexity,
                    n_points: truth.len(),
                    n_poisoned_points: truth.iter().filter(|&&x| x).count(),
                    accuracy: out.report.accuracy,
                    precision: out.report.precision,
                    recall: out.report.recall,
                    f1: out.report.f1,
                    c: out.choice.c,
                    gamma: out.choice.gamma,
                    validation_accuracy: out.choice.validation_accuracy,
                    kl_after_exaggeration: out.kl_after_exaggeration,
                    kl_final: out.kl_final,
                    max_entropy_error: out.max_entropy_error,
                    joint_sum: out.joint_sum,
                });
                if self.index == 0 && ii == 0 && Some(k) == keep {
                    self.report.embedding =
                        Some(EmbeddingDump { repetition: 0, init, perplexity, coords: out.embedding, truth: truth.clone() });
                }
            }
        }
        Ok(())
    }
}

/// Keep at most `max` of `rows`, preserving the poisoned/clean proportion
/// (rounded) and the original order.
fn stratified_subsample<R: rand::Rng + ?Sized>(rows: &[usize], mask: &[bool], max: usize, rng: &mut R) -> Vec<usize> {
    if rows.len() <= max {
        return rows.to_vec();
    }
    let mut out = Vec::with_capacity(max);
    let n_pos = rows.iter().filter(|&&i| mask[i]).count();
    let take_pos = ((max as f64) * n_pos as f64 / rows.len() as f64).round() as usize;
    for (flag, take) in [(true, take_pos), (false, max - take_pos)] {
        let mut part: Vec<usize> = rows.iter().copied().filter(|&i| mask[i] == flag).collect();
        part.shuffle(rng);
        out.extend_from_slice(&part[..take.min(part.len())]);
    }
    out.sort_unstable();
    out
}

/// Run `f` once per repetition on `cfg.threads` workers and merge the
/// results in repetition order.
fn per_repetition(cfg: &ExperimentConfig, f: impl Fn(&mut Rep) -> Result<()> + Sync) -> Result<RunReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let parts: Vec<Result<RunReport>> = pool.install(|| {
        (0..cfg.repetitions)
            .into_par_iter()
            .map(|i| {
                let mut rep = Rep::new(cfg, i);
                f(&mut rep)?;
                Ok(rep.report)
            })
            .collect()
    });
    let mut report = RunReport::new(cfg.clone());
    for part in parts {
        report.absorb(part?);
    }
    report.attack_summary = aggregate_attack(&report.attack);
    Ok(report)
}

/// The two-class experiment at the configured poison amount and angle:
/// clean model, poisoned model, and attack scores on every SNR.
pub fn run_binary_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    if cfg.dataset.schemes.len() != 2 {
        return Err(Error::Validation(format!(
            "binary experiment needs exactly two schemes, got {}",
            cfg.dataset.schemes.len()
        )));
    }
    let cells = [(cfg.attack.amount, cfg.attack.theta_degrees)];
    per_repetition(cfg, |rep| rep.attack_cells(&cells))
}

/// Attack scores over every (amount, angle) cell of the sweep. Cells of one
/// repetition share data, clean model, initialization and evaluation draws.
pub fn run_poison_sweep(cfg: &ExperimentConfig) -> Result<RunReport> {
    let thetas = cfg.thetas();
    let cells: Vec<(PoisonAmount, f64)> =
        cfg.sweep.amounts.iter().flat_map(|&a| thetas.iter().map(move |&t| (a, t))).collect();
    if cells.len() < 2 {
        return Err(Error::Validation("a sweep needs at least two cells".into()));
    }
    per_repetition(cfg, |rep| rep.attack_cells(&cells))
}

/// Every selected defense, each on its own poisoned training set.
pub fn run_defense_suite(cfg: &ExperimentConfig) -> Result<RunReport> {
    if cfg.defenses.is_empty() {
        return Err(Error::Validation("no defense selected".into()));
    }
    let d = &cfg.defenses;
    per_repetition(cfg, |rep| {
        let p = rep.prepare()?;
        if let Some(a) = &d.augment {
            rep.augment(&p, a)?;
        }
        if let Some(m) = &d.mad {
            rep.mad(&p, m)?;
        }
        if let Some(t) = &d.tsne {
            rep.tsne(&p, t)?;
        }
        Ok(())
    })
}
