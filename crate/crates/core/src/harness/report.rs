use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::svg::{LinePlot, ScatterPlot, Series};
use crate::attack::{AttackMetrics, PoisonAmount};
use crate::defense::TsneInit;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One attack evaluation: a (repetition, poison amount, angle, SNR) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub repetition: usize,
    pub amount: PoisonAmount,
    pub theta_degrees: f64,
    pub n_poisoned: usize,
    pub snr_db: f64,
    pub metrics: AttackMetrics,
}

/// Sample mean, sample standard deviation and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        if values.is_empty() {
            return Stat { mean: 0.0, std: 0.0, stderr: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stat { mean, std: var.sqrt(), stderr: (var / n).sqrt() }
    }
}

/// Attack metrics for one (amount, angle, SNR) cell across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackAggregate {
    pub amount: PoisonAmount,
    pub theta_degrees: f64,
    pub snr_db: f64,
    pub repetitions: usize,
    pub n_poisoned: f64,
    pub acc_clean_cleanmodel: Stat,
    pub acc_clean_poisonedmodel: Stat,
    pub attack_success: Stat,
}

/// Clean accuracy and attack success with and without rotation augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRow {
    pub repetition: usize,
    pub snr_db: f64,
    pub n_poisoned: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    /// The same training set without augmentation.
    pub baseline_accuracy: f64,
    pub case_i_accuracy: f64,
    pub case_ii_accuracy: f64,
    pub baseline_attack_success: f64,
    pub case_i_attack_success: f64,
    pub case_ii_attack_success: f64,
}

/// MAD outcome for the target-label group at one poison ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadRow {
    pub repetition: usize,
    pub ratio: f64,
    pub n_poisoned: usize,
    pub target_rows: usize,
    pub mad_value: f64,
    pub median_value: f64,
    pub median_index_poisoned: f64,
    pub median_index_clean: f64,
    pub target_flagged: usize,
    pub suspect: bool,
    /// Flag-based scores over every scored training row.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Holdout detection quality of one t-SNE + SVM audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneRow {
    pub repetition: usize,
    pub init: TsneInit,
    pub perplexity: f64,
    pub n_points: usize,
    pub n_poisoned_points: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub c: f64,
    pub gamma: f64,
    pub validation_accuracy: f64,
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
    pub max_entropy_error: f64,
    pub joint_sum: f64,
}

/// One embedding kept for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDump {
    pub repetition: usize,
    pub init: TsneInit,
    pub perplexity: f64,
    pub coords: Matrix,
    pub truth: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub repetition: usize,
    pub role: String,
    pub frames: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub models: Vec<ModelRow>,
    pub attack: Vec<AttackRow>,
    pub attack_summary: Vec<AttackAggregate>,
    pub augment: Vec<AugmentRow>,
    pub mad: Vec<MadRow>,
    pub tsne: Vec<TsneRow>,
    pub embedding: Option<EmbeddingDump>,
    /// Wall-clock seconds per stage. Logged, never written to disk, so that
    /// report files stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    pub fn new(config: ExperimentConfig) -> Self {
        RunReport {
            config,
            models: Vec::new(),
            attack: Vec::new(),
            attack_summary: Vec::new(),
            augment: Vec::new(),
            mad: Vec::new(),
            tsne: Vec::new(),
            embedding: None,
            timings: Vec::new(),
        }
    }

    /// Append another report's rows (same config assumed) and recompute aggregates.
    pub fn absorb(&mut self, other: RunReport) {
        self.models.extend(other.models);
        self.attack.extend(other.attack);
        self.augment.extend(other.augment);
        self.mad.extend(other.mad);
        self.tsne.extend(other.tsne);
        if self.embedding.is_none() {
            self.embedding = other.embedding;
        }
        self.timings.extend(other.timings);
        self.attack_summary = aggregate_attack(&self.attack);
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(format!("report: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Aggregate for a given cell, if present.
    pub fn attack_cell(&self, amount: PoisonAmount, theta_degrees: f64, snr_db: f64) -> Option<&AttackAggregate> {
        self.attack_summary
            .iter()
            .find(|a| a.amount == amount && a.theta_degrees == theta_degrees && a.snr_db == snr_db)
    }
}

/// Group attack rows by (amount, angle, SNR) in first-appearance order.
pub fn aggregate_attack(rows: &[AttackRow]) -> Vec<AttackAggregate> {
    let mut order: Vec<(PoisonAmount, f64, f64)> = Vec::new();
    for r in rows {
        let key = (r.amount, r.theta_degrees, r.snr_db);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(amount, theta, snr)| {
            let cell: Vec<&AttackRow> =
                rows.iter().filter(|r| r.amount == amount && r.theta_degrees == theta && r.snr_db == snr).collect();
            let col = |f: fn(&AttackMetrics) -> f64| Stat::of(&cell.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
            AttackAggregate {
                amount,
                theta_degrees: theta,
                snr_db: snr,
                repetitions: cell.len(),
                n_poisoned: cell.iter().map(|r| r.n_poisoned as f64).sum::<f64>() / cell.len() as f64,
                acc_clean_cleanmodel: col(|m| m.acc_clean_cleanmodel),
                acc_clean_poisonedmodel: col(|m| m.acc_clean_poisonedmodel),
                attack_success: col(|m| m.attack_success),
            }
        })
        .collect()
}

pub fn amount_label(a: &PoisonAmount) -> String {
    match a {
        PoisonAmount::Count(n) => format!("count:{n}"),
        PoisonAmount::Ratio(r) => format!("ratio:{r}"),
    }
}

fn amount_value(a: &PoisonAmount) -> f64 {
    match *a {
        PoisonAmount::Count(n) => n as f64,
        PoisonAmount::Ratio(r) => r,
    }
}

fn init_label(i: TsneInit) -> &'static str {
    match i {
        TsneInit::Random => "random",
        TsneInit::Pca => "pca",
    }
}

/// A CSV table built cell by cell; every numeric cell must be finite.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, cells: Vec<Cell>) -> Result<()> {
        let mut row = Vec::with_capacity(cells.len());
        for c in cells {
            row.push(match c {
                Cell::F(x) if !x.is_finite() => {
                    return Err(Error::Numerical(format!("non-finite value in {} report", self.header[row.len()])))
                }
                Cell::F(x) => x.to_string(),
                Cell::U(n) => n.to_string(),
                Cell::S(s) => s,
            });
        }
        self.rows.push(row);
        Ok(())
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Format(format!("csv: {e}"));
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
    }
}

enum Cell {
    F(f64),
    U(usize),
    S(String),
}

use Cell::{F, S, U};

/// Per-figure tables, keyed by file name.
pub fn report_tables(report: &RunReport) -> Result<BTreeMap<&'static str, Vec<u8>>> {
    let mut out = BTreeMap::new();

    let mut t = Table::new(&[
        "amount",
        "theta_degrees",
        "snr_db",
        "repetitions",
        "n_poisoned",
        "acc_clean_cleanmodel",
        "acc_clean_cleanmodel_std",
        "acc_clean_poisonedmodel",
        "acc_clean_poisonedmodel_std",
        "attack_success",
        "attack_success_std",
    ]);
    for a in &report.attack_summary {
        t.push(vec![
            S(amount_label(&a.amount)),
            F(a.theta_degrees),
            F(a.snr_db),
            U(a.repetitions),
            F(a.n_poisoned),
            F(a.acc_clean_cleanmodel.mean),
            F(a.acc_clean_cleanmodel.std),
            F(a.acc_clean_poisonedmodel.mean),
            F(a.acc_clean_poisonedmodel.std),
            F(a.attack_success.mean),
            F(a.attack_success.std),
        ])?;
    }
    out.insert("fig3_accuracy.csv", t.to_bytes()?);

    let mut t = Table::new(&[
        "repetition",
        "amount",
        "theta_degrees",
        "n_poisoned",
        "snr_db",
        "acc_clean_cleanmodel",
        "acc_clean_poisonedmodel",
        "attack_success",
        "n_clean",
        "n_triggered",
    ]);
    for r in &report.attack {
        let m = &r.metrics;
        t.push(vec![
            U(r.repetition),
            S(amount_label(&r.amount)),
            F(r.theta_degrees),
            U(r.n_poisoned),
            F(r.snr_db),
            F(m.acc_clean_cleanmodel),
            F(m.acc_clean_poisonedmodel),
            F(m.attack_success),
            U(m.n_clean),
            U(m.n_triggered),
        ])?;
    }
    out.insert("fig4_sweep.csv", t.to_bytes()?);

    let mut t = Table::new(&[
        "repetition",
        "ratio",
        "n_poisoned",
        "target_rows",
        "mad_value",
        "median_value",
        "median_index_poisoned",
        "median_index_clean",
        "target_flagged",
        "suspect",
        "accuracy",
        "precision",
        "recall",
        "f1",
    ]);
    for r in &report.mad {
        t.push(vec![
            U(r.repetition),
            F(r.ratio),
            U(r.n_poisoned),
            U(r.target_rows),
            F(r.mad_value),
            F(r.median_value),
            F(r.median_index_poisoned),
            F(r.median_index_clean),
            U(r.target_flagged),
            U(r.suspect as usize),
            F(r.accuracy),
            F(r.precision),
            F(r.recall),
            F(r.f1),
        ])?;
    }
    out.insert("fig5_mad.csv", t.to_bytes()?);

    let mut t = Table::new(&[
        "repetition",
        "init",
        "perplexity",
        "n_points",
        "n_poisoned_points",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "c",
        "gamma",
        "validation_accuracy",
        "kl_after_exaggeration",
        "kl_final",
        "max_entropy_error",
        "joint_sum",
    ]);
    for r in &report.tsne {
        t.push(vec![
            U(r.repetition),
            S(init_label(r.init).into()),
            F(r.perplexity),
            U(r.n_points),
            U(r.n_poisoned_points),
            F(r.accuracy),
            F(r.precision),
            F(r.recall),
            F(r.f1),
            F(r.c),
            F(r.gamma),
            F(r.validation_accuracy),
            F(r.kl_after_exaggeration),
            F(r.kl_final),
            F(r.max_entropy_error),
            F(r.joint_sum),
        ])?;
    }
    out.insert("fig6_tsne.csv", t.to_bytes()?);

    let mut t = Table::new(&[
        "repetition",
        "snr_db",
        "n_poisoned",
        "theta_min",
        "theta_max",
        "baseline_accuracy",
        "case_i_accuracy",
        "case_ii_accuracy",
        "baseline_attack_success",
        "case_i_attack_success",
        "case_ii_attack_success",
    ]);
    for r in &report.augment {
        t.push(vec![
            U(r.repetition),
            F(r.snr_db),
            U(r.n_poisoned),
            F(r.theta_min),
            F(r.theta_max),
            F(r.baseline_accuracy),
            F(r.case_i_accuracy),
            F(r.case_ii_accuracy),
            F(r.baseline_attack_success),
            F(r.case_i_attack_success),
            F(r.case_ii_attack_success),
        ])?;
    }
    out.insert("augment.csv", t.to_bytes()?);

    if let Some(e) = &report.embedding {
        let mut header = vec!["index", "poisoned"];
        header.extend(["z1", "z2", "z3"].iter().take(e.coords.cols));
        let mut t = Table::new(&header);
        for (i, row) in e.coords.iter_rows().enumerate() {
            let mut cells = vec![U(i), U(e.truth[i] as usize)];
            cells.extend(row.iter().map(|&v| F(v)));
            t.push(cells)?;
        }
        out.insert("fig6_embedding.csv", t.to_bytes()?);
    }
    Ok(out)
}

/// Line and scatter plots for whichever sections the report contains.
pub fn report_plots(report: &RunReport) -> BTreeMap<&'static str, String> {
    let mut out = BTreeMap::new();
    let main = report.config.attack.amount;
    let theta = report.config.attack.theta_degrees;
    let at_main: Vec<&AttackAggregate> =
        report.attack_summary.iter().filter(|a| a.amount == main && a.theta_degrees == theta).collect();
    if !at_main.is_empty() {
        let curve = |name: &str, f: fn(&AttackAggregate) -> f64| Series {
            name: name.to_string(),
            points: at_main.iter().map(|a| (a.snr_db, f(a))).collect(),
        };
        let plot = LinePlot {
            title: format!("Accuracy vs SNR ({})", amount_label(&main)),
            x_label: "SNR (dB)".into(),
            y_label: "accuracy".into(),
            series: vec![
                curve("clean data, clean model", |a| a.acc_clean_cleanmodel.mean),
                curve("clean data, poisoned model", |a| a.acc_clean_poisonedmodel.mean),
                curve("triggered data, poisoned model", |a| a.attack_success.mean),
            ],
            y_range: Some((0.0, 1.0)),
        };
        out.insert("fig3_accuracy.svg", plot.render());
    }

    let mut snrs: Vec<f64> = Vec::new();
    for a in report.attack_summary.iter().filter(|a| a.theta_degrees == theta) {
        if !snrs.contains(&a.snr_db) {
            snrs.push(a.snr_db);
        }
    }
    let series: Vec<Series> = snrs
        .iter()
        .map(|&s| {
            let mut points: Vec<(f64, f64)> = report
                .attack_summary
                .iter()
                .filter(|a| a.theta_degrees == theta && a.snr_db == s)
                .map(|a| (amount_value(&a.amount), a.attack_success.mean))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name: format!("{s} dB"), points }
        })
        .filter(|s| s.points.len() > 1)
        .collect();
    if !series.is_empty() {
        let plot = LinePlot {
            title: "Attack success vs poisoned amount".into(),
            x_label: "poisoned per source label".into(),
            y_label: "attack success".into(),
            series,
            y_range: Some((0.0, 1.0)),
        };
        out.insert("fig4_sweep.svg", plot.render());
    }

    if !report.mad.is_empty() {
        let mut ratios: Vec<f64> = report.mad.iter().map(|r| r.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        ratios.dedup();
        let mean_at = |r: f64, f: fn(&MadRow) -> f64| {
            let v: Vec<f64> = report.mad.iter().filter(|m| m.ratio == r).map(f).collect();
            Stat::of(&v).mean
        };
        let plot = LinePlot {
            title: "MAD anomaly index of the target label".into(),
            x_label: "poison ratio".into(),
            y_label: "median anomaly index".into(),
            series: vec![
                Series { name: "poisoned rows".into(), points: ratios.iter().map(|&r| (r, mean_at(r, |m| m.median_index_poisoned))).collect() },
                Series { name: "clean rows".into(), points: ratios.iter().map(|&r| (r, mean_at(r, |m| m.median_index_clean))).collect() },
            ],
            y_range: None,
        };
        out.insert("fig5_mad.svg", plot.render());
    }

    if let Some(e) = &report.embedding {
        let pick = |p: bool| e.coords.iter_rows().zip(&e.truth).filter(|(_, &t)| t == p).map(|(r, _)| (r[0], r.get(1).copied().unwrap_or(0.0))).collect();
        let plot = ScatterPlot {
            title: format!("t-SNE of target-label activations (perplexity {}, {} init)", e.perplexity, init_label(e.init)),
            series: vec![
                Series { name: "clean".into(), points: pick(false) },
                Series { name: "poisoned".into(), points: pick(true) },
            ],
        };
        out.insert("fig6_tsne.svg", plot.render());
    }
    out
}

/// Write CSV tables, `summary.json` and SVG plots into `dir`; returns the
/// paths written, sorted by name.
pub fn emit_reports(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for (name, bytes) in report_tables(report)? {
        files.insert(name.to_string(), bytes);
    }
    for (name, svg) in report_plots(report) {
        files.insert(name.to_string(), svg.into_bytes());
    }
    files.insert("summary.json".into(), report.to_json()?.into_bytes());
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
