use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};

/// `exp(-gamma * |x - y|^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("negative RBF gamma {gamma}")));
    }
    Ok((-gamma * sq_dist(x, y)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    /// KKT violation tolerance for the solver.
    pub tolerance: f64,
    /// Cap on solver iterations.
    pub max_iterations: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            gamma_grid: vec![0.01, 0.1, 1.0, 10.0],
            tolerance: 1e-3,
            max_iterations: 10_000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.gamma_grid.is_empty() {
            return Err(Error::Validation("SVM grids must be non-empty".into()));
        }
        if self.c_grid.iter().any(|&c| !(c > 0.0)) || self.gamma_grid.iter().any(|&g| !(g >= 0.0)) {
            return Err(Error::Validation("SVM C must be positive and gamma non-negative".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Validation("SVM tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// A trained soft-margin RBF SVM in dual form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    /// Full dual solution over the training set, kept for auditing.
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

impl SvmModel {
    /// `sum_i alpha_i y_i K(x_i, x) + b`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let mut f = self.bias;
        for (s, a) in self.support.iter().zip(&self.coef) {
            f += a * rbf_kernel(s, x, self.gamma)?;
        }
        Ok(f)
    }
}

/// Class `+1` when the decision value is non-negative, else `-1`.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<(i8, f64)> {
    let f = model.decision_value(x)?;
    Ok((if f >= 0.0 { 1 } else { -1 }, f))
}

/// Soft-margin SVM trained by sequential minimal optimization with
/// maximal-violating-pair working-set selection.
pub fn svm_train(points: &Matrix, labels: &[i8], c: f64, gamma: f64, cfg: &SvmConfig) -> Result<SvmModel> {
    let n = points.rows;
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} points but {} labels", labels.len())));
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::Validation("SVM labels must be +1 or -1".into()));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::Validation("SVM training needs both classes".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Validation(format!("SVM C must be positive, got {c}")));
    }
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rbf_kernel(points.row(i), points.row(j), gamma)?;
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let kij = |i: usize, j: usize| k[i * n + j];

    // Dual: min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0, Q_ij = y_i y_j K_ij.
    // grad = Qa - e.
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < cfg.tolerance {
            break;
        }
        iterations += 1;

        // Move along y_i d_i = -y_j d_j within the box.
        let eta = (kij(i, i) + kij(j, j) - 2.0 * kij(i, j)).max(1e-12);
        let delta = (gmax - gmin) / eta;
        let (ai, aj) = (alpha[i], alpha[j]);
        // Step t >= 0 in alpha_i += y_i t, alpha_j -= y_j t.
        let cap = |a: f64, dir: f64| if dir > 0.0 { c - a } else { a };
        let t = delta.min(cap(ai, y[i])).min(cap(aj, -y[j]));
        alpha[i] = (ai + y[i] * t).clamp(0.0, c);
        alpha[j] = (aj - y[j] * t).clamp(0.0, c);
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for s in 0..n {
            grad[s] += y[s] * (y[i] * kij(s, i) * di + y[j] * kij(s, j) * dj);
        }
    }

    // Bias from free vectors, else the midpoint of the feasible interval.
    let (mut sum, mut count) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let v = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += v;
            count += 1;
        } else if in_up(alpha[t], y[t]) {
            lb = lb.max(v);
        } else {
            ub = ub.min(v);
        }
    }
    let bias = if count > 0 {
        sum / count as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support.push(points.row(t).to_vec());
            coef.push(alpha[t] * y[t]);
        }
    }
    Ok(SvmModel { support, coef, bias, gamma, c, alpha, iterations })
}

/// Worst KKT violation of a trained model on its own training set, in
/// units of the functional margin: 0 if all conditions hold exactly.
pub fn kkt_violation(model: &SvmModel, points: &Matrix, labels: &[i8]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (t, &l) in labels.iter().enumerate() {
        let m = l as f64 * model.decision_value(points.row(t))?;
        let a = model.alpha[t];
        let v = if a <= 0.0 {
            (1.0 - m).max(0.0)
        } else if a >= model.c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

pub fn svm_accuracy(model: &SvmModel, points: &Matrix, labels: &[i8]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Validation("accuracy over no points".into()));
    }
    let mut hits = 0;
    for (t, &l) in labels.iter().enumerate() {
        hits += (svm_predict(model, points.row(t))?.0 == l) as usize;
    }
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub c: f64,
    pub gamma: f64,
    pub validation_accuracy: f64,
}

/// Exhaustive search over `C x gamma`, scored on the validation split.
/// Ties go to the smaller `C`, then the smaller `gamma`.
pub fn grid_search_svm(
    train: &Matrix,
    train_labels: &[i8],
    val: &Matrix,
    val_labels: &[i8],
    cfg: &SvmConfig,
) -> Result<(GridChoice, SvmModel)> {
    cfg.validate()?;
    let mut best: Option<(GridChoice, SvmModel)> = None;
    for &c in &cfg.c_grid {
        for &gamma in &cfg.gamma_grid {
            let model = svm_train(train, train_labels, c, gamma, cfg)?;
            let acc = svm_accuracy(&model, val, val_labels)?;
            let better = match &best {
                None => true,
                Some((b, _)) => {
                    acc > b.validation_accuracy
                        || (acc == b.validation_accuracy && (c < b.c || (c == b.c && gamma < b.gamma)))
                }
            };
            if better {
                best = Some((GridChoice { c, gamma, validation_accuracy: acc }, model));
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}
