//! Seeded experiment drivers, configuration, and report emission.

mod config;
mod report;
mod run;
mod svg;

pub use crate::seed::derive_seed as seed_derivation;
pub use config::{
    dataset_spec_from_toml, AttackConfig, AugmentSuite, DefenseConfig, ExperimentConfig, MadSuite, SweepConfig, TsneSuite};
pub use report::{
    aggregate_attack, amount_label, emit_reports, report_plots, report_tables, AttackAggregate, AttackRow, AugmentRow,
    EmbeddingDump, MadRow, ModelRow, RunReport, Stat, TsneRow,
};
pub use run::{normalize_dataset, run_binary_experiment, run_defense_suite, run_poison_sweep, Receiver};
pub use svg::{LinePlot, ScatterPlot, Series};
