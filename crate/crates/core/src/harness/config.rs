use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{PoisonAmount, PoisonMode, PoisonSpec};
use crate::defense::{AuditConfig, AugmentConfig, EmbeddingConfig, MadConfig, SvmConfig, TsneInit};
use crate::error::{Error, Result};
use crate::nn::{NetworkConfig, TrainConfig};
use crate::sigsynth::{DatasetSpec, ModulationScheme};

/// The adversary's fixed parameters for an experiment. Sweeps vary the
/// amount and angle around these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub target: ModulationScheme,
    pub theta_degrees: f64,
    pub amount: PoisonAmount,
    pub mode: PoisonMode,
}

impl Default for AttackConfig {
    fn default() -> Self {
        let spec = PoisonSpec::new(ModulationScheme::Psk8, PoisonAmount::Ratio(0.1));
        AttackConfig { target: spec.target, theta_degrees: spec.theta_degrees, amount: spec.amount, mode: spec.mode }
    }
}

impl AttackConfig {
    pub fn spec(&self, amount: PoisonAmount, theta_degrees: f64, seed: u64) -> PoisonSpec {
        PoisonSpec { target: self.target, theta_degrees, amount, seed, mode: self.mode }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub amounts: Vec<PoisonAmount>,
    /// Trigger angles; empty means the attack's own angle.
    pub thetas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            amounts: [0.02, 0.05, 0.1, 0.2, 0.4].into_iter().map(PoisonAmount::Ratio).collect(),
            thetas: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSuite {
    /// Rotation range; the mode field is ignored since both cases are scored.
    pub rotation: AugmentConfig,
    /// Poisoning applied to the training set before augmentation.
    pub amount: PoisonAmount,
}

impl Default for AugmentSuite {
    fn default() -> Self {
        AugmentSuite { rotation: AugmentConfig::default(), amount: PoisonAmount::Ratio(0.1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MadSuite {
    pub ratios: Vec<f64>,
    pub detector: MadConfig,
}

impl Default for MadSuite {
    fn default() -> Self {
        MadSuite { ratios: vec![0.06, 0.6], detector: MadConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneSuite {
    pub amount: PoisonAmount,
    pub perplexities: Vec<f64>,
    pub inits: Vec<TsneInit>,
    /// Base embedding settings; perplexity, init and seed are overridden per run.
    pub embedding: EmbeddingConfig,
    pub svm: SvmConfig,
    pub calibration_fraction: f64,
    pub svm_train_fraction: f64,
    /// Target-label rows are subsampled (stratified) to at most this many.
    pub max_points: usize,
}

impl Default for TsneSuite {
    fn default() -> Self {
        let audit = AuditConfig::default();
        TsneSuite {
            amount: PoisonAmount::Ratio(0.08),
            perplexities: (1..=10).map(|k| 5.0 * k as f64).collect(),
            inits: vec![TsneInit::Random, TsneInit::Pca],
            embedding: EmbeddingConfig::default(),
            svm: SvmConfig::default(),
            calibration_fraction: audit.calibration_fraction,
            svm_train_fraction: audit.svm_train_fraction,
            max_points: 600,
        }
    }
}

/// Which defenses `run_defense_suite` drives. Absent tables are skipped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseConfig {
    pub augment: Option<AugmentSuite>,
    pub mad: Option<MadSuite>,
    pub tsne: Option<TsneSuite>,
}

impl DefenseConfig {
    pub fn all() -> Self {
        DefenseConfig {
            augment: Some(AugmentSuite::default()),
            mad: Some(MadSuite::default()),
            tsne: Some(TsneSuite::default()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.augment.is_none() && self.mad.is_none() && self.tsne.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The dataset seed is replaced per repetition by a derived seed.
    pub dataset: DatasetSpec,
    /// Defaults to the desk-scale network over `dataset.schemes`.
    pub network: Option<NetworkConfig>,
    /// The training seed is replaced per repetition by a derived seed.
    pub training: TrainConfig,
    pub attack: AttackConfig,
    pub sweep: SweepConfig,
    pub defenses: DefenseConfig,
    /// Rescale each received frame to unit power before it reaches the network.
    pub normalize_received: bool,
    pub split: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub threads: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::default(),
            network: None,
            training: TrainConfig { learning_rate: 3e-3, epochs: 100, ..TrainConfig::default() },
            attack: AttackConfig::default(),
            sweep: SweepConfig::default(),
            defenses: DefenseConfig::all(),
            normalize_received: true,
            split: 0.8,
            repetitions: 5,
            seed: 0,
            threads: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// All eight schemes on the full SNR grid with the deep network.
    pub fn full_scale() -> Self {
        let dataset = DatasetSpec::full_scale();
        ExperimentConfig {
            network: Some(NetworkConfig::full_scale(dataset.schemes.clone())),
            dataset,
            ..Default::default()
        }
    }

    /// Parse TOML layered over `base`: tables merge key by key, so a partial
    /// `[training]` table keeps the remaining fields of `base`.
    pub fn from_toml_over(text: &str, base: &ExperimentConfig) -> Result<Self> {
        let cfg: ExperimentConfig = layered(text, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_over(text, &ExperimentConfig::default())
    }

    pub fn load(path: impl AsRef<Path>, base: &ExperimentConfig) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_over(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn network(&self) -> NetworkConfig {
        self.network.clone().unwrap_or_else(|| NetworkConfig::desk_scale(self.dataset.schemes.clone()))
    }

    pub fn thetas(&self) -> Vec<f64> {
        if self.sweep.thetas.is_empty() {
            vec![self.attack.theta_degrees]
        } else {
            self.sweep.thetas.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.training.validate()?;
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Validation(format!("split {} outside (0, 1)", self.split)));
        }
        if self.repetitions == 0 {
            return Err(Error::Validation("repetitions must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Validation("threads must be at least 1".into()));
        }
        let net = self.network();
        if net.classes != self.dataset.schemes {
            return Err(Error::Validation("network classes differ from dataset schemes".into()));
        }
        net.shapes()?;
        if !self.dataset.schemes.contains(&self.attack.target) {
            return Err(Error::Validation(format!("target {} is not a dataset scheme", self.attack.target)));
        }
        if self.sweep.amounts.is_empty() {
            return Err(Error::Validation("sweep needs at least one poison amount".into()));
        }
        for amount in std::iter::once(self.attack.amount).chain(self.sweep.amounts.iter().copied()) {
            for theta in self.thetas() {
                self.attack.spec(amount, theta, 0).validate()?;
            }
        }
        if let Some(a) = &self.defenses.augment {
            a.rotation.validate()?;
            self.attack.spec(a.amount, self.attack.theta_degrees, 0).validate()?;
        }
        if let Some(m) = &self.defenses.mad {
            if m.ratios.is_empty() {
                return Err(Error::Validation("MAD suite needs at least one ratio".into()));
            }
            for &r in &m.ratios {
                self.attack.spec(PoisonAmount::Ratio(r), self.attack.theta_degrees, 0).validate()?;
            }
            if !(m.detector.suspect_fraction >= 0.0 && m.detector.suspect_fraction <= 1.0) {
                return Err(Error::Validation("suspect_fraction outside [0, 1]".into()));
            }
        }
        if let Some(t) = &self.defenses.tsne {
            if t.perplexities.is_empty() || t.inits.is_empty() {
                return Err(Error::Validation("t-SNE suite needs perplexities and inits".into()));
            }
            self.attack.spec(t.amount, self.attack.theta_degrees, 0).validate()?;
            t.svm.validate()?;
            for (name, f) in [("calibration_fraction", t.calibration_fraction), ("svm_train_fraction", t.svm_train_fraction)] {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Validation(format!("{name} {f} outside (0, 1)")));
                }
            }
            for &p in &t.perplexities {
                let cfg = EmbeddingConfig { perplexity: p, ..t.embedding.clone() };
                cfg.validate(t.max_points.max(p as usize + 1))?;
                if p >= t.max_points as f64 {
                    return Err(Error::Validation(format!("perplexity {p} needs more than {} points", t.max_points)));
                }
            }
        }
        Ok(())
    }
}

/// A dataset spec file: `DatasetSpec` fields at top level, layered over `base`.
pub fn dataset_spec_from_toml(text: &str, base: &DatasetSpec) -> Result<DatasetSpec> {
    let spec: DatasetSpec = layered(text, base)?;
    spec.validate()?;
    Ok(spec)
}

fn layered<T: Serialize + serde::de::DeserializeOwned>(text: &str, base: &T) -> Result<T> {
    let user: toml::Table = toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
    let mut merged = toml::Table::try_from(base).map_err(|e| Error::Validation(format!("config: {e}")))?;
    merge_tables(&mut merged, user);
    merged.try_into().map_err(|e: toml::de::Error| Error::Validation(format!("config: {e}")))
}

fn merge_tables(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge_tables(b, u),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
