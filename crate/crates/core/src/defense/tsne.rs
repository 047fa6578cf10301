use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::pca::Pca;
use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::seed::derived_rng;

const BETA_MIN: f64 = 1e-20;
const BETA_MAX: f64 = 1e20;
const SEARCH_STEPS: usize = 50;
const MIN_GAIN: f64 = 0.01;
/// Standard deviation of the initial embedding.
const INIT_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsneInit {
    #[default]
    Random,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub perplexity: f64,
    pub dims: usize,
    pub init: TsneInit,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            perplexity: 30.0,
            dims: 2,
            init: TsneInit::Random,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 4 {
            return Err(Error::Validation(format!("t-SNE needs at least 4 points, got {n}")));
        }
        if !(self.perplexity > 1.0) || self.perplexity >= n as f64 {
            return Err(Error::Validation(format!(
                "perplexity {} must lie in (1, {n})",
                self.perplexity
            )));
        }
        if !(2..=3).contains(&self.dims) {
            return Err(Error::Validation(format!("embedding dimension {} is not 2 or 3", self.dims)));
        }
        if !(self.learning_rate > 0.0) || !(self.early_exaggeration >= 1.0) {
            return Err(Error::Validation("learning rate and exaggeration must be positive".into()));
        }
        Ok(())
    }
}

/// Gaussian conditionals `p(j|i)` over one row of squared distances at
/// precision `beta`, and their entropy in bits. `skip` is excluded.
fn conditional_row(d2: &[f64], skip: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = d2
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut weighted = 0.0;
    for (j, &d) in d2.iter().enumerate() {
        if j == skip {
            out[j] = 0.0;
            continue;
        }
        let e = (-beta * (d - dmin)).exp();
        out[j] = e;
        z += e;
        weighted += e * (d - dmin);
    }
    out.iter_mut().for_each(|p| *p /= z);
    // H = ln Z + beta * E[d - dmin], converted to bits.
    (z.ln() + beta * weighted / z) / std::f64::consts::LN_2
}

/// Per-point bandwidth calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    /// Symmetrized joint probabilities, summing to 1.
    pub joint: Matrix,
    /// Precision `1 / (2 sigma_i^2)` found for each point.
    pub betas: Vec<f64>,
    /// Entropy (bits) of each calibrated conditional distribution.
    pub entropies: Vec<f64>,
}

/// Binary-search each point's Gaussian precision so the conditional entropy
/// equals `log2(perplexity)`, then symmetrize: `p_ij = (p(j|i) + p(i|j)) / 2n`.
pub fn affinities(data: &Matrix, perplexity: f64) -> Result<Affinities> {
    let n = data.rows;
    if n < 2 || !(perplexity > 0.0) {
        return Err(Error::Validation("affinities need two points and a positive perplexity".into()));
    }
    let target = perplexity.log2();
    let mut cond = Matrix::zeros(n, n);
    let mut betas = Vec::with_capacity(n);
    let mut entropies = Vec::with_capacity(n);
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        for (j, d) in d2.iter_mut().enumerate() {
            *d = sq_dist(data.row(i), data.row(j));
        }
        // Entropy falls as beta grows; bisect in log space.
        let (mut lo, mut hi) = (BETA_MIN.ln(), BETA_MAX.ln());
        let mut beta = 1.0f64;
        let mut h = conditional_row(&d2, i, beta, cond.row_mut(i));
        for _ in 0..SEARCH_STEPS {
            if (h - target).abs() < 1e-12 {
                break;
            }
            if h > target {
                lo = beta.ln();
            } else {
                hi = beta.ln();
            }
            beta = (0.5 * (lo + hi)).exp();
            h = conditional_row(&d2, i, beta, cond.row_mut(i));
        }
        betas.push(beta);
        entropies.push(h);
    }
    let mut joint = Matrix::zeros(n, n);
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            joint.row_mut(i)[j] = (cond.get(i, j) + cond.get(j, i)) / denom;
        }
    }
    Ok(Affinities { joint, betas, entropies })
}

/// Student-t kernel `w_ij = 1 / (1 + |z_i - z_j|^2)` with `w_ii = 0`.
fn kernel(y: &Matrix) -> Matrix {
    let n = y.rows;
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = 1.0 / (1.0 + sq_dist(y.row(i), y.row(j)));
            w.row_mut(i)[j] = v;
            w.row_mut(j)[i] = v;
        }
    }
    w
}

/// Low-dimensional similarities, each row normalized over `k != i`:
/// `q_ij = w_ij / sum_k w_ik`.
pub fn similarities(y: &Matrix) -> Matrix {
    let mut q = kernel(y);
    for i in 0..q.rows {
        let s: f64 = q.row(i).iter().sum();
        if s > 0.0 {
            q.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
    }
    q
}

/// `sum p_ij log(p_ij / q_ij)` over pairs with `p_ij > 0`.
pub fn kl_divergence(p: &Matrix, q: &Matrix) -> f64 {
    p.data
        .iter()
        .zip(&q.data)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

/// Gradient of `kl_divergence(p, similarities(y))` with respect to `y`.
///
/// With row sums `P_i = sum_j p_ij` and the row-normalized `q`,
/// `dC/dz_a = sum_j (z_a - z_j) w_aj [4 p_aj - 2 (P_a q_aj + P_j q_ja)]`.
pub fn kl_gradient(p: &Matrix, y: &Matrix) -> Matrix {
    gradient(p, y, 1.0)
}

/// The KL gradient with the attractive `4 p_aj` term scaled by
/// `exaggeration`. The repulsive term keeps the true row masses, so
/// exaggeration shifts the balance between the two instead of rescaling
/// the whole step.
fn gradient(p: &Matrix, y: &Matrix, exaggeration: f64) -> Matrix {
    let n = y.rows;
    let w = kernel(y);
    let wsum: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
    let psum: Vec<f64> = (0..n).map(|i| p.row(i).iter().sum()).collect();
    let mut grad = Matrix::zeros(n, y.cols);
    for a in 0..n {
        for j in 0..n {
            if j == a {
                continue;
            }
            let waj = w.get(a, j);
            let q_aj = waj / wsum[a];
            let q_ja = waj / wsum[j];
            let coef = waj * (4.0 * exaggeration * p.get(a, j) - 2.0 * (psum[a] * q_aj + psum[j] * q_ja));
            for k in 0..y.cols {
                grad.row_mut(a)[k] += coef * (y.get(a, k) - y.get(j, k));
            }
        }
    }
    grad
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Matrix,
    pub affinities: Affinities,
    /// KL cost when early exaggeration ends, measured with the true `P`.
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
}

impl Embedding {
    /// Largest `|H_i - log2(perplexity)|` over points.
    pub fn max_entropy_error(&self, perplexity: f64) -> f64 {
        let t = perplexity.log2();
        self.affinities.entropies.iter().map(|h| (h - t).abs()).fold(0.0, f64::max)
    }
}

fn initial_embedding(data: &Matrix, cfg: &EmbeddingConfig) -> Result<Matrix> {
    let n = data.rows;
    match cfg.init {
        TsneInit::Random => {
            let mut rng = derived_rng(cfg.seed, "defense.tsne.init", 0);
            let v = (0..n * cfg.dims).map(|_| INIT_SCALE * rng.sample::<f64, _>(StandardNormal)).collect();
            Matrix::new(n, cfg.dims, v)
        }
        TsneInit::Pca => {
            let mut y = Pca::fit(data, cfg.dims.min(data.cols))?.transform(data)?;
            if y.cols < cfg.dims {
                let mut padded = Matrix::zeros(n, cfg.dims);
                for i in 0..n {
                    padded.row_mut(i)[..y.cols].copy_from_slice(y.row(i));
                }
                y = padded;
            }
            let sd = (y.iter_rows().map(|r| r[0] * r[0]).sum::<f64>() / n as f64).sqrt();
            let k = if sd > 0.0 { INIT_SCALE / sd } else { 1.0 };
            y.data.iter_mut().for_each(|v| *v *= k);
            Ok(y)
        }
    }
}

/// Embed the rows of `data` with t-SNE: gradient descent with momentum,
/// per-coordinate adaptive gains and early exaggeration. Sequential and
/// deterministic for a fixed seed.
pub fn tsne(data: &Matrix, cfg: &EmbeddingConfig) -> Result<Embedding> {
    cfg.validate(data.rows)?;
    let aff = affinities(data, cfg.perplexity)?;
    let p = &aff.joint;

    let mut y = initial_embedding(data, cfg)?;
    let mut velocity = Matrix::zeros(y.rows, y.cols);
    let mut gains = vec![1.0f64; y.data.len()];
    let mut kl_after_exaggeration = None;
    for it in 0..cfg.iterations {
        if it == cfg.exaggeration_iterations {
            kl_after_exaggeration = Some(kl_divergence(p, &similarities(&y)));
        }
        let alpha = if it < cfg.exaggeration_iterations { cfg.early_exaggeration } else { 1.0 };
        let grad = gradient(p, &y, alpha);
        let momentum = if it < cfg.momentum_switch { cfg.momentum_initial } else { cfg.momentum_final };
        for ((g, v), gain) in grad.data.iter().zip(velocity.data.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*v > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(MIN_GAIN);
            *v = momentum * *v - cfg.learning_rate * *gain * g;
        }
        for (yv, v) in y.data.iter_mut().zip(&velocity.data) {
            *yv += v;
        }
        for k in 0..y.cols {
            let mean = y.iter_rows().map(|r| r[k]).sum::<f64>() / y.rows as f64;
            (0..y.rows).for_each(|i| y.row_mut(i)[k] -= mean);
        }
    }
    if !y.data.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("t-SNE produced a non-finite embedding".into()));
    }
    let kl_final = kl_divergence(p, &similarities(&y));
    let kl_after_exaggeration = kl_after_exaggeration.unwrap_or(kl_final);
    Ok(Embedding { coords: y, affinities: aff, kl_after_exaggeration, kl_final })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn blobs(per: usize, sep: f64, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<Vec<f64>> = (0..2 * per)
            .map(|i| {
                let c = if i < per { 0.0 } else { sep };
                (0..5).map(|k| if k == 0 { c } else { 0.0 } + rng.sample::<f64, _>(StandardNormal)).collect()
            })
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn two_points_have_unit_similarity() {
        let y = Matrix::from_rows(&[vec![0.0, 0.0], vec![7.0, -2.0]]).unwrap();
        let q = similarities(&y);
        assert_eq!(q.get(0, 1), 1.0);
        assert_eq!(q.get(1, 0), 1.0);
    }

    #[test]
    fn equidistant_triangle() {
        let h = 3f64.sqrt() / 2.0;
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]]).unwrap();
        let a = affinities(&x, 2.0).unwrap();
        for i in 0..3 {
            assert!((a.entropies[i] - 1.0).abs() < 1e-9);
        }
        // Joint p_ij = (1/2 + 1/2) / 6.
        assert!((a.joint.get(0, 1) - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_hits_target_entropy() {
        let x = blobs(30, 4.0, 1);
        for perp in [5.0, 12.5, 30.0] {
            let a = affinities(&x, perp).unwrap();
            for h in &a.entropies {
                assert!((h - perp.log2()).abs() < 1e-5);
            }
            assert!((a.joint.data.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..x.rows {
                for j in 0..x.rows {
                    assert_eq!(a.joint.get(i, j), a.joint.get(j, i));
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = blobs(6, 3.0, 2);
        let p = affinities(&x, 4.0).unwrap().joint;
        let mut rng = rng_from_seed(3);
        let mut y = Matrix::new(12, 2, (0..24).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let g = kl_gradient(&p, &y);
        let h = 1e-6;
        let mut num = Vec::new();
        for k in 0..y.data.len() {
            let orig = y.data[k];
            y.data[k] = orig + h;
            let up = kl_divergence(&p, &similarities(&y));
            y.data[k] = orig - h;
            let down = kl_divergence(&p, &similarities(&y));
            y.data[k] = orig;
            num.push((up - down) / (2.0 * h));
        }
        let diff: f64 = g.data.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = num.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff / scale < 1e-6, "{}", diff / scale);
    }

    fn linearly_separable(y: &Matrix, per: usize) -> bool {
        // Perceptron on the 2-D embedding; separable data converges.
        let mut w = [0.0f64; 3];
        for _ in 0..10_000 {
            let mut errors = 0;
            for i in 0..y.rows {
                let t = if i < per { -1.0 } else { 1.0 };
                let s = w[0] * y.get(i, 0) + w[1] * y.get(i, 1) + w[2];
                if t * s <= 0.0 {
                    w[0] += t * y.get(i, 0);
                    w[1] += t * y.get(i, 1);
                    w[2] += t;
                    errors += 1;
                }
            }
            if errors == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn separated_blobs_stay_separable() {
        let x = blobs(20, 10.0, 4);
        for init in [TsneInit::Random, TsneInit::Pca] {
            let cfg = EmbeddingConfig { perplexity: 10.0, init, iterations: 500, ..EmbeddingConfig::default() };
            let e = tsne(&x, &cfg).unwrap();
            assert!(linearly_separable(&e.coords, 20), "{init:?}");
            assert!(e.kl_final <= e.kl_after_exaggeration);
            assert!(e.max_entropy_error(10.0) < 1e-5);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let x = blobs(5, 5.0, 5);
        let cfg = EmbeddingConfig { perplexity: 3.0, iterations: 300, ..EmbeddingConfig::default() };
        assert_eq!(tsne(&x, &cfg).unwrap(), tsne(&x, &cfg).unwrap());
        let bad = EmbeddingConfig { perplexity: 10.0, ..cfg.clone() };
        assert!(tsne(&x, &bad).unwrap_err().is_validation());
        let three = EmbeddingConfig { dims: 4, ..cfg };
        assert!(tsne(&x, &three).unwrap_err().is_validation());
    }
}
