use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mad::LabelMadReport;
use super::svm::{grid_search_svm, svm_predict, GridChoice, SvmConfig, SvmModel};
use super::tsne::{tsne, EmbeddingConfig, TsneInit};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::derived_rng;

/// Per-sample detector output scored against the ground-truth poison mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub method: String,
    /// Row index (into the scored activation matrix) of each reported sample.
    pub indices: Vec<usize>,
    pub truth: Vec<bool>,
    pub scores: Vec<f64>,
    pub predicted: Vec<bool>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Hyperparameters and settings that produced this report.
    pub params: Vec<(String, String)>,
}

impl DetectionReport {
    pub fn new(
        method: &str,
        indices: Vec<usize>,
        truth: Vec<bool>,
        scores: Vec<f64>,
        predicted: Vec<bool>,
        params: Vec<(String, String)>,
    ) -> Result<Self> {
        let n = indices.len();
        if truth.len() != n || scores.len() != n || predicted.len() != n {
            return Err(Error::Shape("detection report columns differ in length".into()));
        }
        if n == 0 {
            return Err(Error::Validation("detection report over no samples".into()));
        }
        let count = |t: bool, p: bool| truth.iter().zip(&predicted).filter(|&(&a, &b)| a == t && b == p).count() as f64;
        let (tp, tn, fp, fneg) = (count(true, true), count(false, false), count(false, true), count(true, false));
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fneg);
        Ok(DetectionReport {
            method: method.to_string(),
            accuracy: (tp + tn) / n as f64,
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
            indices,
            truth,
            scores,
            predicted,
            params,
        })
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// `index,truth,score,flag` per sample, then a summary row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,truth,score,flag")?;
        for i in 0..self.indices.len() {
            writeln!(w, "{},{},{},{}", self.indices[i], self.truth[i] as u8, self.scores[i], self.predicted[i] as u8)?;
        }
        writeln!(
            w,
            "summary,accuracy={},precision={},recall={},f1={}",
            self.accuracy, self.precision, self.recall, self.f1
        )
    }
}

/// One [`DetectionReport`] over every row scored by a MAD run, in row order.
pub fn mad_detection_report(groups: &[LabelMadReport], truth: &[bool]) -> Result<DetectionReport> {
    let mut rows: Vec<(usize, f64, bool)> = groups
        .iter()
        .flat_map(|g| g.rows.iter().enumerate().map(|(k, &i)| (i, g.report.anomaly_index[k], g.report.flagged[k])))
        .collect();
    rows.sort_by_key(|r| r.0);
    if rows.iter().any(|r| r.0 >= truth.len()) {
        return Err(Error::Shape("MAD rows exceed the truth mask".into()));
    }
    DetectionReport::new(
        "mad",
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| truth[r.0]).collect(),
        rows.iter().map(|r| r.1).collect(),
        rows.iter().map(|r| r.2).collect(),
        vec![],
    )
}

/// Split settings for the separability audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Fraction of rows whose ground truth the defender is given.
    pub calibration_fraction: f64,
    /// Fraction of the calibration rows used to fit the SVM; the rest validate the grid.
    pub svm_train_fraction: f64,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { calibration_fraction: 0.5, svm_train_fraction: 0.7, seed: 0 }
    }
}

/// Stratified split of `idx` by `truth`: the first part takes `fraction`
/// of each class (rounded, at least one when the class has two or more).
fn stratified_split(idx: &[usize], truth: &[bool], fraction: f64, rng: &mut crate::seed::Rng) -> (Vec<usize>, Vec<usize>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for class in [false, true] {
        let mut members: Vec<usize> = idx.iter().copied().filter(|&i| truth[i] == class).collect();
        members.shuffle(rng);
        let mut k = (fraction * members.len() as f64).round() as usize;
        if members.len() >= 2 {
            k = k.clamp(1, members.len() - 1);
        }
        a.extend_from_slice(&members[..k]);
        b.extend_from_slice(&members[k..]);
    }
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

fn labels_of(idx: &[usize], truth: &[bool]) -> Vec<i8> {
    idx.iter().map(|&i| if truth[i] { 1 } else { -1 }).collect()
}

/// Score an SVM on the listed rows of an embedding. Poisoned is `+1`.
pub fn evaluate_detector(
    model: &SvmModel,
    points: &Matrix,
    truth: &[bool],
    indices: &[usize],
    params: Vec<(String, String)>,
) -> Result<DetectionReport> {
    let mut scores = Vec::with_capacity(indices.len());
    let mut predicted = Vec::with_capacity(indices.len());
    for &i in indices {
        let (label, f) = svm_predict(model, points.row(i))?;
        scores.push(f);
        predicted.push(label == 1);
    }
    DetectionReport::new("tsne-svm", indices.to_vec(), indices.iter().map(|&i| truth[i]).collect(), scores, predicted, params)
}

/// Scale each column to zero mean and unit variance.
fn standardize(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for k in 0..m.cols {
        let mean = m.iter_rows().map(|r| r[k]).sum::<f64>() / m.rows as f64;
        let var = m.iter_rows().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / m.rows as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        (0..m.rows).for_each(|i| out.row_mut(i)[k] = (m.get(i, k) - mean) / sd);
    }
    out
}

/// Output of [`detect_tsne_svm`].
#[derive(Debug, Clone, PartialEq)]
pub struct TsneSvmOutcome {
    /// Evaluated on the holdout rows only.
    pub report: DetectionReport,
    pub embedding: Matrix,
    pub choice: GridChoice,
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
    pub max_entropy_error: f64,
    pub joint_sum: f64,
}

/// Separability audit: embed every activation row with t-SNE, fit an RBF
/// SVM on a labeled calibration subset (grid-searched on a validation
/// split), then measure how well it separates poisoned from clean rows on
/// the remaining holdout.
pub fn detect_tsne_svm(
    activations: &Matrix,
    truth: &[bool],
    embed: &EmbeddingConfig,
    svm: &SvmConfig,
    audit: &AuditConfig,
) -> Result<TsneSvmOutcome> {
    if truth.len() != activations.rows {
        return Err(Error::Shape(format!("{} rows but {} mask entries", activations.rows, truth.len())));
    }
    let all: Vec<usize> = (0..truth.len()).collect();
    let mut rng = derived_rng(audit.seed, "defense.audit.split", 0);
    let (calib, holdout) = stratified_split(&all, truth, audit.calibration_fraction, &mut rng);
    let (fit, val) = stratified_split(&calib, truth, audit.svm_train_fraction, &mut rng);
    for (name, part) in [("SVM training", &fit), ("validation", &val), ("holdout", &holdout)] {
        let pos = part.iter().filter(|&&i| truth[i]).count();
        if pos == 0 || pos == part.len() {
            return Err(Error::Validation(format!("{name} split lacks a clean or a poisoned sample")));
        }
    }

    let e = tsne(activations, embed)?;
    let z = standardize(&e.coords);
    let (choice, model) = grid_search_svm(
        &z.select_rows(&fit),
        &labels_of(&fit, truth),
        &z.select_rows(&val),
        &labels_of(&val, truth),
        svm,
    )?;
    let init = match embed.init {
        TsneInit::Random => "random",
        TsneInit::Pca => "pca",
    };
    let params = vec![
        ("perplexity".to_string(), embed.perplexity.to_string()),
        ("init".to_string(), init.to_string()),
        ("c".to_string(), choice.c.to_string()),
        ("gamma".to_string(), choice.gamma.to_string()),
    ];
    let report = evaluate_detector(&model, &z, truth, &holdout, params)?;
    Ok(TsneSvmOutcome {
        report,
        max_entropy_error: e.max_entropy_error(embed.perplexity),
        joint_sum: e.affinities.joint.data.iter().sum(),
        kl_after_exaggeration: e.kl_after_exaggeration,
        kl_final: e.kl_final,
        embedding: e.coords,
        choice,
    })
}
