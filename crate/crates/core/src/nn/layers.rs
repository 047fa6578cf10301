//! Layer descriptions and the tensor-level operations behind them.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom, PoolGeom};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        #[serde(default)]
        padding: Padding,
    },
    Maxpool2d {
        pool: (usize, usize),
        stride: (usize, usize),
    },
    Dense {
        units: usize,
    },
    Relu,
    Softmax,
    Dropout {
        p: f64,
    },
    Flatten,
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: (usize, usize)) -> Self {
        LayerSpec::Conv2d { filters, kernel, padding: Padding::Valid }
    }

    pub fn conv_same(filters: usize, kernel: (usize, usize)) -> Self {
        LayerSpec::Conv2d { filters, kernel, padding: Padding::Same }
    }

    pub fn pool_2x1() -> Self {
        LayerSpec::Maxpool2d { pool: (2, 1), stride: (2, 1) }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Conv2d { filters, kernel, .. } => filters > 0 && kernel.0 > 0 && kernel.1 > 0,
            LayerSpec::Maxpool2d { pool, stride } => pool.0 > 0 && pool.1 > 0 && stride.0 > 0 && stride.1 > 0,
            LayerSpec::Dense { units } => units > 0,
            LayerSpec::Dropout { p } => (0.0..1.0).contains(&p),
            LayerSpec::Relu | LayerSpec::Softmax | LayerSpec::Flatten => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid layer parameters: {self:?}")))
        }
    }
}

/// He (Kaiming) initialization: normal with standard deviation
/// `sqrt(2 / n_in)`, redrawn whenever a sample falls outside two standard
/// deviations.
pub fn he_init<R: Rng + ?Sized>(shape: Vec<usize>, n_in: usize, rng: &mut R) -> Result<Tensor> {
    if n_in == 0 {
        return Err(Error::Domain("he_init needs n_in > 0".into()));
    }
    let std = (2.0 / n_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break (z * std) as f32;
            }
        })
        .collect();
    Tensor::new(shape, data)
}

fn conv_geom(input: &Tensor, weights: &Tensor, bias: &Tensor, padding: Padding) -> Result<ConvGeom> {
    let in_shape = input.hwc()?;
    let [kh, kw, c, f] = match weights.shape.as_slice() {
        &[a, b, c, d] => [a, b, c, d],
        s => return Err(Error::Shape(format!("conv weights must be rank 4, got {s:?}"))),
    };
    if c != in_shape[2] || bias.len() != f {
        return Err(Error::Shape(format!(
            "conv weights {:?} / bias {:?} incompatible with input {:?}",
            weights.shape, bias.shape, input.shape
        )));
    }
    let pad = match padding {
        Padding::Valid => (0, 0),
        Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
    };
    let g = ConvGeom { in_shape, kernel: (kh, kw), filters: f, pad };
    let [ph, pw, _] = g.padded();
    if kh > ph || kw > pw {
        return Err(Error::Shape(format!(
            "kernel ({kh}, {kw}) larger than input {:?}",
            input.shape
        )));
    }
    Ok(g)
}

/// Valid cross-correlation over `(h, w, c)` input.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    conv2d_padded(input, weights, bias, Padding::Valid)
}

pub fn conv2d_padded(input: &Tensor, weights: &Tensor, bias: &Tensor, padding: Padding) -> Result<Tensor> {
    let g = conv_geom(input, weights, bias, padding)?;
    let out = kernels::conv_forward(&g, &input.data, &weights.data, &bias.data);
    Tensor::new(g.out_shape().to_vec(), out)
}

/// Gradients `(d input, d weights, d bias)` of a valid convolution.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = conv_geom(input, weights, bias, Padding::Valid)?;
    if dout.len() != g.out_shape().iter().product::<usize>() {
        return Err(Error::Shape("conv output gradient has wrong size".into()));
    }
    let mut dw = vec![0.0; weights.len()];
    let mut db = vec![0.0; bias.len()];
    let dx = kernels::conv_backward(&g, &input.data, &weights.data, &dout.data, &mut dw, &mut db, true);
    Ok((
        Tensor::new(input.shape.clone(), dx)?,
        Tensor::new(weights.shape.clone(), dw)?,
        Tensor::new(bias.shape.clone(), db)?,
    ))
}

fn pool_geom(input: &Tensor, pool: (usize, usize), stride: (usize, usize)) -> Result<PoolGeom> {
    let in_shape = input.hwc()?;
    if pool.0 > in_shape[0] || pool.1 > in_shape[1] || pool.0 == 0 || pool.1 == 0 {
        return Err(Error::Shape(format!(
            "pool window {pool:?} does not fit input {:?}",
            input.shape
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Shape("pool stride must be positive".into()));
    }
    Ok(PoolGeom { in_shape, pool, stride })
}

/// Max pooling; also returns the argmax index of every output element.
pub fn maxpool2d(input: &Tensor, pool: (usize, usize), stride: (usize, usize)) -> Result<(Tensor, Vec<u32>)> {
    let g = pool_geom(input, pool, stride)?;
    let (out, arg) = kernels::pool_forward(&g, &input.data);
    Ok((Tensor::new(g.out_shape().to_vec(), out)?, arg))
}

pub fn maxpool2d_backward(input: &Tensor, argmax: &[u32], dout: &Tensor) -> Result<Tensor> {
    if argmax.len() != dout.len() {
        return Err(Error::Shape("argmax and gradient lengths differ".into()));
    }
    Tensor::new(input.shape.clone(), kernels::pool_backward(input.len(), argmax, &dout.data))
}

pub fn relu(input: &Tensor) -> Tensor {
    Tensor { shape: input.shape.clone(), data: kernels::relu_forward(&input.data) }
}

pub fn relu_backward(input: &Tensor, dout: &Tensor) -> Tensor {
    Tensor { shape: input.shape.clone(), data: kernels::relu_backward(&input.data, &dout.data) }
}

pub fn softmax(input: &[f32]) -> Result<Vec<f32>> {
    if input.is_empty() {
        return Err(Error::InputShape("softmax of an empty vector".into()));
    }
    Ok(kernels::softmax_forward(input))
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `p` and survivors are scaled by `1 / (1 - p)`; at inference
/// it is the identity.
pub fn dropout<R: Rng + ?Sized>(input: &Tensor, p: f64, training: bool, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("dropout probability {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok(input.clone());
    }
    let mask = kernels::dropout_mask(input.len(), p, rng);
    Ok(Tensor {
        shape: input.shape.clone(),
        data: kernels::apply_mask(&input.data, &mask),
    })
}

/// Cross-entropy of a probability vector against the true class, with the
/// gradient with respect to the pre-softmax logits (`probs - onehot`).
pub fn cross_entropy_loss(probs: &[f32], true_label: usize) -> Result<(f32, Vec<f32>)> {
    if true_label >= probs.len() {
        return Err(Error::Index { index: true_label, len: probs.len() });
    }
    Ok((
        kernels::cross_entropy(probs, true_label),
        kernels::cross_entropy_logit_grad(probs, true_label),
    ))
}
