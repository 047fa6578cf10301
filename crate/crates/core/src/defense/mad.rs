use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sigsynth::ModulationScheme;

/// Consistency constant that makes `1.4826 * MAD` estimate a normal
/// standard deviation.
pub const MAD_SCALE: f64 = 1.4826;
/// Samples with an anomaly index strictly above this are flagged.
pub const ANOMALY_THRESHOLD: f64 = 2.0;

/// Median with the midpoint convention for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Validation("median of an empty sequence".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> Result<f64> {
    let m = median(values)?;
    let dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    median(&dev)
}

/// Outlier scores for one sequence of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadReport {
    pub anomaly_index: Vec<f64>,
    pub flagged: Vec<bool>,
    pub mad_value: f64,
    pub median_value: f64,
}

impl MadReport {
    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

/// `|x - median| / (1.4826 * MAD)` per value. When MAD is zero, values at
/// the median score 0 and every other value scores `+inf`.
pub fn anomaly_index(values: &[f64]) -> Result<MadReport> {
    let median_value = median(values)?;
    let mad_value = mad(values)?;
    let anomaly_index: Vec<f64> = values
        .iter()
        .map(|x| {
            let dev = (x - median_value).abs();
            if mad_value > 0.0 {
                dev / (MAD_SCALE * mad_value)
            } else if dev == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let flagged = anomaly_index.iter().map(|&a| a > ANOMALY_THRESHOLD).collect();
    Ok(MadReport { anomaly_index, flagged, mad_value, median_value })
}

/// How a multi-dimensional activation row is reduced to one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalarization {
    /// L1 distance to the coordinate-wise median row of the group.
    #[default]
    L1ToMedian,
    /// L2 distance to the coordinate-wise median row of the group.
    L2ToMedian,
}

/// Whether rows are grouped by label before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MadGrouping {
    #[default]
    PerLabel,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MadConfig {
    pub scalarization: Scalarization,
    pub grouping: MadGrouping,
    /// A group is reported as suspect when more than this fraction of its
    /// rows are flagged.
    pub suspect_fraction: f64,
}

impl Default for MadConfig {
    fn default() -> Self {
        MadConfig { scalarization: Scalarization::default(), grouping: MadGrouping::default(), suspect_fraction: 0.1 }
    }
}

/// Scores for one group of rows (a label, or everything in global mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMadReport {
    /// `None` in global mode.
    pub label: Option<ModulationScheme>,
    /// Row indices into the activation matrix, ascending.
    pub rows: Vec<usize>,
    /// Scalarized distance of each row to the group median.
    pub scores: Vec<f64>,
    pub report: MadReport,
    pub suspect: bool,
}

/// Per-group MAD outlier detection on activation rows. Every group needs at
/// least three rows.
pub fn mad_detect(activations: &Matrix, labels: &[ModulationScheme], cfg: &MadConfig) -> Result<Vec<LabelMadReport>> {
    if activations.rows != labels.len() {
        return Err(Error::Shape(format!(
            "{} activation rows but {} labels",
            activations.rows,
            labels.len()
        )));
    }
    let groups: Vec<(Option<ModulationScheme>, Vec<usize>)> = match cfg.grouping {
        MadGrouping::Global => vec![(None, (0..labels.len()).collect())],
        MadGrouping::PerLabel => {
            let mut seen: Vec<ModulationScheme> = labels.to_vec();
            seen.sort_by_key(|l| l.id());
            seen.dedup();
            seen.into_iter()
                .map(|l| (Some(l), (0..labels.len()).filter(|&i| labels[i] == l).collect()))
                .collect()
        }
    };
    groups
        .into_iter()
        .map(|(label, rows)| {
            if rows.len() < 3 {
                return Err(Error::InsufficientData(format!(
                    "MAD needs at least 3 rows per group, {} has {}",
                    label.map_or("all".to_string(), |l| l.to_string()),
                    rows.len()
                )));
            }
            let sub = activations.select_rows(&rows);
            let center: Vec<f64> = (0..sub.cols)
                .map(|j| median(&sub.iter_rows().map(|r| r[j]).collect::<Vec<_>>()))
                .collect::<Result<_>>()?;
            let scores: Vec<f64> = sub
                .iter_rows()
                .map(|r| {
                    let d = r.iter().zip(&center).map(|(a, b)| a - b);
                    match cfg.scalarization {
                        Scalarization::L1ToMedian => d.map(f64::abs).sum(),
                        Scalarization::L2ToMedian => d.map(|x| x * x).sum::<f64>().sqrt(),
                    }
                })
                .collect();
            let report = anomaly_index(&scores)?;
            let suspect = report.flagged_count() as f64 > cfg.suspect_fraction * rows.len() as f64;
            Ok(LabelMadReport { label, rows, scores, report, suspect })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn hand_values() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_eq!(median(&v).unwrap(), 3.0);
        assert_eq!(mad(&v).unwrap(), 1.0);
        let r = anomaly_index(&v).unwrap();
        assert!((r.anomaly_index[4] - 97.0 / 1.4826).abs() < 1e-12);
        assert!((r.anomaly_index[4] - 65.43).abs() < 5e-3);
        assert_eq!(r.flagged, vec![false, false, false, false, true]);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
    }

    #[test]
    fn constant_sequence() {
        let r = anomaly_index(&[7.0; 6]).unwrap();
        assert_eq!(r.mad_value, 0.0);
        assert!(r.anomaly_index.iter().all(|&a| a == 0.0));
        assert_eq!(r.flagged_count(), 0);
    }

    #[test]
    fn zero_mad_with_outlier_is_infinite() {
        let r = anomaly_index(&[1.0, 1.0, 1.0, 5.0]).unwrap();
        assert_eq!(r.anomaly_index, vec![0.0, 0.0, 0.0, f64::INFINITY]);
        assert_eq!(r.flagged, vec![false, false, false, true]);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(mad(&[]).unwrap_err().is_validation());
        assert!(anomaly_index(&[]).unwrap_err().is_validation());
    }

    #[test]
    fn translation_and_scale_invariance() {
        let mut rng = rng_from_seed(5);
        let v: Vec<f64> = (0..101).map(|_| rng.random_range(-3.0..3.0)).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x + 17.5).collect();
        let scaled: Vec<f64> = v.iter().map(|x| x * 4.25).collect();
        assert!((mad(&v).unwrap() - mad(&shifted).unwrap()).abs() < 1e-12);
        let a = anomaly_index(&v).unwrap();
        for other in [anomaly_index(&shifted).unwrap(), anomaly_index(&scaled).unwrap()] {
            for (x, y) in a.anomaly_index.iter().zip(&other.anomaly_index) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normal_flag_rate_matches_tail_mass() {
        let mut rng = rng_from_seed(6);
        let v: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let rate = anomaly_index(&v).unwrap().flagged_count() as f64 / v.len() as f64;
        // P(|Z| > 2) = 0.0455.
        assert!((rate - 0.0455).abs() < 0.01, "{rate}");
    }

    #[test]
    fn shifted_rows_are_flagged() {
        let mut rng = rng_from_seed(7);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let poisoned = i % 8 == 0;
            let jitter = rng.random_range(0.0..1.0);
            let row: Vec<f64> = (0..8)
                .map(|d| if d == 0 { jitter } else { 0.0 } + if poisoned { 25.0 } else { 0.0 })
                .collect();
            rows.push(row);
            labels.push(ModulationScheme::Psk8);
        }
        let m = Matrix::from_rows(&rows).unwrap();
        let out = mad_detect(&m, &labels, &MadConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        for (k, &i) in out[0].rows.iter().enumerate() {
            assert_eq!(out[0].report.flagged[k], i % 8 == 0, "row {i}");
        }
        assert!(out[0].suspect);
    }

    #[test]
    fn identical_rows_flag_nothing() {
        let m = Matrix::from_rows(&vec![vec![0.5, 1.5]; 6]).unwrap();
        let labels = [ModulationScheme::Psk8, ModulationScheme::Qam16].repeat(3);
        let out = mad_detect(&m, &labels, &MadConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        for g in out {
            assert!(g.report.anomaly_index.iter().all(|&a| a == 0.0));
            assert!(!g.suspect);
        }
    }

    #[test]
    fn small_groups_are_rejected() {
        let m = Matrix::from_rows(&vec![vec![0.0]; 4]).unwrap();
        let labels = [ModulationScheme::Psk8, ModulationScheme::Psk8, ModulationScheme::Psk8, ModulationScheme::Qam16];
        let err = mad_detect(&m, &labels, &MadConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        let global = MadConfig { grouping: MadGrouping::Global, ..MadConfig::default() };
        assert_eq!(mad_detect(&m, &labels, &global).unwrap().len(), 1);
    }
}
