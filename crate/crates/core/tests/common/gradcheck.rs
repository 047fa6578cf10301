//! Central finite-difference oracle for the layer kernels, evaluated in f64.
//!
//! Each check builds a random small configuration, contracts the layer
//! output with a random upstream vector `r` so the loss is `L = <r, f(x)>`,
//! and compares the analytic vector-Jacobian product with numeric partials.

use rand::seq::SliceRandom;
use rand::Rng;
use rftrojan::nn::kernels::{self, ConvGeom, PoolGeom};
use rftrojan::seed::Rng as SeedRng;

pub const H: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub rel_err: f64,
}

pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn: f64 = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 { 0.0 } else { diff / scale }
}

pub fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + H;
            let up = f(&x);
            x[i] = orig - H;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn contract(r: &[f64], y: &[f64]) -> f64 {
    r.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn normal_vec(rng: &mut SeedRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Values separated by at least 0.05 so a perturbation of `H` never changes
/// an ordering, and no value lies within 0.02 of zero.
fn separated_vec(rng: &mut SeedRng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let k = i as f64 - n as f64 / 2.0;
            let base = 0.05 * k + if k >= 0.0 { 0.025 } else { -0.025 };
            base + rng.random_range(-0.005..0.005)
        })
        .collect();
    v.shuffle(rng);
    v
}

fn check(name: String, analytic: &[f64], numeric: &[f64]) -> Check {
    Check { name, rel_err: rel_err(analytic, numeric) }
}

pub fn conv(rng: &mut SeedRng, same: bool) -> Vec<Check> {
    let h = rng.random_range(4..=8);
    let w = rng.random_range(1..=3);
    let c = rng.random_range(1..=2);
    let kernel = (rng.random_range(1..=3), rng.random_range(1..=w));
    let filters = rng.random_range(1..=3);
    let pad = if same { ((kernel.0 - 1) / 2, (kernel.1 - 1) / 2) } else { (0, 0) };
    let g = ConvGeom { in_shape: [h, w, c], kernel, filters, pad };
    let x = normal_vec(rng, h * w * c);
    let wt = normal_vec(rng, kernel.0 * kernel.1 * c * filters);
    let b = normal_vec(rng, filters);
    let [ho, wo, f] = g.out_shape();
    let r = normal_vec(rng, ho * wo * f);

    let mut dw = vec![0.0; wt.len()];
    let mut db = vec![0.0; b.len()];
    let dx = kernels::conv_backward(&g, &x, &wt, &r, &mut dw, &mut db, true);
    let tag = format!("conv{} {h}x{w}x{c} k{kernel:?} f{filters}", if same { " same" } else { "" });
    vec![
        check(
            format!("{tag} d/dx"),
            &dx,
            &numeric_grad(|v| contract(&r, &kernels::conv_forward(&g, v, &wt, &b)), &x),
        ),
        check(
            format!("{tag} d/dw"),
            &dw,
            &numeric_grad(|v| contract(&r, &kernels::conv_forward(&g, &x, v, &b)), &wt),
        ),
        check(
            format!("{tag} d/db"),
            &db,
            &numeric_grad(|v| contract(&r, &kernels::conv_forward(&g, &x, &wt, v)), &b),
        ),
    ]
}

pub fn pool(rng: &mut SeedRng) -> Vec<Check> {
    let h = rng.random_range(4..=10);
    let w = rng.random_range(1..=3);
    let c = rng.random_range(1..=3);
    let pool = (2, rng.random_range(1..=w.min(2)));
    let stride = if rng.random_bool(0.5) { pool } else { (1, 1) };
    let g = PoolGeom { in_shape: [h, w, c], pool, stride };
    let x = separated_vec(rng, h * w * c);
    let (out, arg) = kernels::pool_forward(&g, &x);
    let r = normal_vec(rng, out.len());
    let dx = kernels::pool_backward(x.len(), &arg, &r);
    let num = numeric_grad(|v| contract(&r, &kernels::pool_forward(&g, v).0), &x);
    vec![check(format!("maxpool {h}x{w}x{c} p{pool:?} s{stride:?}"), &dx, &num)]
}

pub fn dense(rng: &mut SeedRng) -> Vec<Check> {
    let n_in = rng.random_range(1..=12);
    let units = rng.random_range(1..=6);
    let x = normal_vec(rng, n_in);
    let wt = normal_vec(rng, n_in * units);
    let b = normal_vec(rng, units);
    let r = normal_vec(rng, units);
    let mut dw = vec![0.0; wt.len()];
    let mut db = vec![0.0; units];
    let dx = kernels::dense_backward(&x, &wt, &r, &mut dw, &mut db, true);
    let tag = format!("dense {n_in}->{units}");
    vec![
        check(
            format!("{tag} d/dx"),
            &dx,
            &numeric_grad(|v| contract(&r, &kernels::dense_forward(v, &wt, &b)), &x),
        ),
        check(
            format!("{tag} d/dw"),
            &dw,
            &numeric_grad(|v| contract(&r, &kernels::dense_forward(&x, v, &b)), &wt),
        ),
        check(
            format!("{tag} d/db"),
            &db,
            &numeric_grad(|v| contract(&r, &kernels::dense_forward(&x, &wt, v)), &b),
        ),
    ]
}

pub fn relu(rng: &mut SeedRng) -> Vec<Check> {
    let n = rng.random_range(2..=20);
    let x = separated_vec(rng, n);
    let r = normal_vec(rng, n);
    let dx = kernels::relu_backward(&x, &r);
    let num = numeric_grad(|v| contract(&r, &kernels::relu_forward(v)), &x);
    vec![check(format!("relu n{n}"), &dx, &num)]
}

pub fn softmax(rng: &mut SeedRng) -> Vec<Check> {
    let n = rng.random_range(2..=8);
    let z: Vec<f64> = normal_vec(rng, n).into_iter().map(|v| 3.0 * v).collect();
    let r = normal_vec(rng, n);
    let y = kernels::softmax_forward(&z);
    let dz = kernels::softmax_backward(&y, &r);
    let num = numeric_grad(|v| contract(&r, &kernels::softmax_forward(v)), &z);
    vec![check(format!("softmax n{n}"), &dz, &num)]
}

/// Softmax followed by cross-entropy, differentiated with respect to logits.
pub fn softmax_cross_entropy(rng: &mut SeedRng) -> Vec<Check> {
    let n = rng.random_range(2..=8);
    let label = rng.random_range(0..n);
    let z: Vec<f64> = normal_vec(rng, n).into_iter().map(|v| 2.0 * v).collect();
    let probs = kernels::softmax_forward(&z);
    let dz = kernels::cross_entropy_logit_grad(&probs, label);
    let num = numeric_grad(|v| kernels::cross_entropy(&kernels::softmax_forward(v), label), &z);
    vec![check(format!("softmax+ce n{n} label {label}"), &dz, &num)]
}

pub fn dropout(rng: &mut SeedRng) -> Vec<Check> {
    let n = rng.random_range(2..=20);
    let p = rng.random_range(0.1..0.9);
    let mask: Vec<f64> = kernels::dropout_mask(n, p, rng);
    let x = normal_vec(rng, n);
    let r = normal_vec(rng, n);
    let dx = kernels::apply_mask(&r, &mask);
    let num = numeric_grad(|v| contract(&r, &kernels::apply_mask(v, &mask)), &x);
    vec![check(format!("dropout n{n} p{p:.2}"), &dx, &num)]
}

/// One random configuration of every differentiable layer.
pub fn all_layers(rng: &mut SeedRng) -> Vec<Check> {
    let mut out = conv(rng, false);
    out.extend(conv(rng, true));
    out.extend(pool(rng));
    out.extend(dense(rng));
    out.extend(relu(rng));
    out.extend(softmax(rng));
    out.extend(softmax_cross_entropy(rng));
    out.extend(dropout(rng));
    out
}
