//! The adversary: rotation triggers, training-set poisoning, test-time
//! trigger activation, and the three accuracy metrics used to score an attack.

mod file;
mod metrics;
mod poison;
mod trigger;

pub use file::{decode_poison_index, encode_poison_index, load_poison_index, save_poison_index, PoisonIndex};
pub use metrics::{evaluate_attack, AttackMetrics};
pub use poison::{poison_dataset, PoisonAmount, PoisonMode, PoisonSpec, PoisonedDataset};
pub use trigger::{apply_trigger, givens_rotation, rotate_samples, trigger_test_transmission};
