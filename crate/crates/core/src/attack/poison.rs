use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::trigger::apply_trigger;
use crate::error::{Error, Result};
use crate::seed::derived_rng;
use crate::sigsynth::{IQFrame, LabeledDataset, ModulationScheme};

/// How many frames to poison from each non-target label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoisonAmount {
    /// The same count from every source label.
    Count(usize),
    /// A fraction of each source label's training count, rounded to nearest.
    Ratio(f64),
}

/// `Append` adds rotated, relabeled copies and keeps every clean frame;
/// `Replace` swaps the selected frames for their poisoned versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoisonMode {
    #[default]
    Append,
    Replace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonSpec {
    pub target: ModulationScheme,
    #[serde(default = "default_theta")]
    pub theta_degrees: f64,
    pub amount: PoisonAmount,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: PoisonMode,
}

fn default_theta() -> f64 {
    45.0
}

impl PoisonSpec {
    pub fn new(target: ModulationScheme, amount: PoisonAmount) -> Self {
        PoisonSpec { target, theta_degrees: default_theta(), amount, seed: 0, mode: PoisonMode::Append }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..360.0).contains(&self.theta_degrees) {
            return Err(Error::Validation(format!(
                "trigger angle {} outside [0, 360)",
                self.theta_degrees
            )));
        }
        if let PoisonAmount::Ratio(r) = self.amount {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Validation(format!("poison ratio {r} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Frames to poison from a label with `available` training frames.
    pub fn count_for(&self, available: usize) -> usize {
        match self.amount {
            PoisonAmount::Count(n) => n,
            PoisonAmount::Ratio(r) => (r * available as f64).round() as usize,
        }
    }
}

/// A training set after poisoning, with the bookkeeping needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonedDataset {
    pub dataset: LabeledDataset,
    /// Positions of poisoned frames in `dataset`, ascending.
    pub poisoned_indices: Vec<usize>,
    /// For each poisoned position, the true label and the clean frame it was made from.
    pub originals: BTreeMap<usize, (ModulationScheme, IQFrame)>,
}

impl PoisonedDataset {
    /// Ground-truth poison flag per frame of `dataset`.
    pub fn mask(&self) -> Vec<bool> {
        self.dataset.iter().map(|f| f.poisoned).collect()
    }
}

/// Rotate `N_p` randomly chosen frames of every non-target label by the
/// trigger angle and relabel them as the target.
pub fn poison_dataset(train: &LabeledDataset, spec: &PoisonSpec) -> Result<PoisonedDataset> {
    spec.validate()?;
    if train.count_label(spec.target) == 0 {
        return Err(Error::Validation(format!(
            "target label {} does not occur in the training set",
            spec.target
        )));
    }
    let mut sources: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, f) in train.iter().enumerate() {
        if f.label != spec.target {
            sources.entry(f.label.id()).or_default().push(i);
        }
    }

    // Selected source positions, in label order then ascending position.
    let mut chosen = Vec::new();
    for (&id, idx) in &sources {
        let n = spec.count_for(idx.len());
        if n > idx.len() {
            return Err(Error::Validation(format!(
                "cannot poison {n} frames of {}: only {} available",
                ModulationScheme::from_id(id)?,
                idx.len()
            )));
        }
        let mut rng = derived_rng(spec.seed, "attack.poison", id as u64);
        let mut pick: Vec<usize> = sample(&mut rng, idx.len(), n).into_iter().map(|k| idx[k]).collect();
        pick.sort_unstable();
        chosen.extend(pick);
    }

    let make = |i: usize| {
        let clean = &train.frames[i];
        let mut p = apply_trigger(clean, spec.theta_degrees);
        p.label = spec.target;
        p.original_label = clean.label;
        p.poisoned = true;
        p
    };

    let mut frames = train.frames.clone();
    let mut poisoned_indices = Vec::with_capacity(chosen.len());
    let mut originals = BTreeMap::new();
    for &i in &chosen {
        let at = match spec.mode {
            PoisonMode::Append => {
                frames.push(make(i));
                frames.len() - 1
            }
            PoisonMode::Replace => {
                frames[i] = make(i);
                i
            }
        };
        poisoned_indices.push(at);
        originals.insert(at, (train.frames[i].label, train.frames[i].clone()));
    }
    poisoned_indices.sort_unstable();
    Ok(PoisonedDataset { dataset: LabeledDataset::new(frames), poisoned_indices, originals })
}
