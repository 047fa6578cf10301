use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom, PoolGeom};
use super::layers::{he_init, LayerSpec, Padding};
use super::Tensor;
use crate::error::{Error, Result};
use crate::sigsynth::{IQFrame, ModulationScheme, FRAME_LEN};

/// Layer stack plus input shape and the class list that defines the output
/// units (`N_out = classes.len()`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub classes: Vec<ModulationScheme>,
}

impl NetworkConfig {
    /// Two small conv blocks and two dense layers; trains in seconds on one core.
    pub fn desk_scale(classes: Vec<ModulationScheme>) -> Self {
        let n_out = classes.len();
        NetworkConfig {
            input_shape: [FRAME_LEN, 2, 1],
            layers: vec![
                LayerSpec::conv(16, (3, 2)),
                LayerSpec::Relu,
                LayerSpec::pool_2x1(),
                LayerSpec::conv(32, (3, 1)),
                LayerSpec::Relu,
                LayerSpec::pool_2x1(),
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 64 },
                LayerSpec::Relu,
                LayerSpec::Dropout { p: 0.5 },
                LayerSpec::Dense { units: 32 },
                LayerSpec::Relu,
                LayerSpec::Dropout { p: 0.5 },
                LayerSpec::Dense { units: n_out },
                LayerSpec::Softmax,
            ],
            classes,
        }
    }

    /// One 128-filter and six 256-filter conv blocks, dense 256 and 64.
    pub fn full_scale(classes: Vec<ModulationScheme>) -> Self {
        let n_out = classes.len();
        let mut layers = vec![
            LayerSpec::conv_same(128, (3, 3)),
            LayerSpec::Relu,
            LayerSpec::pool_2x1(),
        ];
        for _ in 0..6 {
            layers.extend([LayerSpec::conv_same(256, (3, 3)), LayerSpec::Relu, LayerSpec::pool_2x1()]);
        }
        layers.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 256 },
            LayerSpec::Relu,
            LayerSpec::Dropout { p: 0.5 },
            LayerSpec::Dense { units: 64 },
            LayerSpec::Relu,
            LayerSpec::Dropout { p: 0.5 },
            LayerSpec::Dense { units: n_out },
            LayerSpec::Softmax,
        ]);
        NetworkConfig { input_shape: [FRAME_LEN, 2, 1], layers, classes }
    }

    pub fn n_out(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, label: ModulationScheme) -> Option<usize> {
        self.classes.iter().position(|&c| c == label)
    }

    /// Check layer compatibility and return the input shape of every layer
    /// followed by the network output shape.
    pub fn shapes(&self) -> Result<Vec<[usize; 3]>> {
        if self.classes.is_empty() {
            return Err(Error::Validation("network needs at least one class".into()));
        }
        if self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::Validation("input shape has a zero dimension".into()));
        }
        let mut shapes = vec![self.input_shape];
        let mut cur = self.input_shape;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            cur = match *layer {
                LayerSpec::Conv2d { filters, kernel, padding } => {
                    let g = conv_geom(cur, filters, kernel, padding);
                    let [ph, pw, _] = g.padded();
                    if kernel.0 > ph || kernel.1 > pw {
                        return Err(Error::Validation(format!(
                            "layer {i}: kernel {kernel:?} larger than input {cur:?}"
                        )));
                    }
                    g.out_shape()
                }
                LayerSpec::Maxpool2d { pool, stride } => {
                    if pool.0 > cur[0] || pool.1 > cur[1] {
                        return Err(Error::Validation(format!(
                            "layer {i}: pool {pool:?} larger than input {cur:?}"
                        )));
                    }
                    PoolGeom { in_shape: cur, pool, stride }.out_shape()
                }
                LayerSpec::Dense { units } => {
                    if cur[0] != 1 || cur[1] != 1 {
                        return Err(Error::Validation(format!(
                            "layer {i}: dense layer needs flattened input, got {cur:?}"
                        )));
                    }
                    [1, 1, units]
                }
                LayerSpec::Flatten => [1, 1, cur.iter().product()],
                LayerSpec::Relu | LayerSpec::Dropout { .. } => cur,
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() {
                        return Err(Error::Validation("softmax must be the final layer".into()));
                    }
                    cur
                }
            };
            shapes.push(cur);
        }
        let n = self.layers.len();
        let ends_right = n >= 2
            && matches!(self.layers[n - 1], LayerSpec::Softmax)
            && matches!(self.layers[n - 2], LayerSpec::Dense { units } if units == self.n_out());
        if !ends_right {
            return Err(Error::Validation(format!(
                "network must end with dense({}) + softmax",
                self.n_out()
            )));
        }
        Ok(shapes)
    }

    /// Index of the activation probed by the defenses: the ReLU after the
    /// final hidden dense layer.
    pub fn probe_layer(&self) -> Result<usize> {
        let last_dense = self
            .layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Dense { .. }))
            .ok_or_else(|| Error::Validation("network has no dense layer".into()))?;
        let hidden_dense = self.layers[..last_dense]
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Dense { .. }))
            .ok_or_else(|| Error::Validation("network has no hidden dense layer".into()))?;
        self.layers[hidden_dense..last_dense]
            .iter()
            .position(|l| matches!(l, LayerSpec::Relu))
            .map(|p| hidden_dense + p)
            .ok_or_else(|| Error::Validation("hidden dense layer is not followed by a ReLU".into()))
    }
}

fn conv_geom(in_shape: [usize; 3], filters: usize, kernel: (usize, usize), padding: Padding) -> ConvGeom {
    let pad = match padding {
        Padding::Valid => (0, 0),
        Padding::Same => ((kernel.0 - 1) / 2, (kernel.1 - 1) / 2),
    };
    ConvGeom { in_shape, kernel, filters, pad }
}

#[derive(Debug, Clone)]
enum Op {
    Conv { geom: ConvGeom, param: usize },
    Pool(PoolGeom),
    Dense { param: usize },
    Relu,
    Softmax,
    Dropout(f64),
    Flatten,
}

/// A network with concrete parameters. Parameters are stored flat, two
/// tensors (weights, bias) per conv or dense layer, in layer order.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub params: Vec<Tensor>,
    ops: Vec<Op>,
}

// `ops` is derived from the config.
impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

enum Aux {
    None,
    Argmax(Vec<u32>),
    Mask(Vec<f32>),
}

/// Activations recorded during a forward pass: `inputs[l]` is the input to
/// layer `l`, and `output` the network output.
pub(crate) struct Trace {
    inputs: Vec<Vec<f32>>,
    aux: Vec<Aux>,
    pub output: Vec<f32>,
}

pub(crate) enum Mode<'a, R: Rng + ?Sized> {
    Inference,
    Train(&'a mut R),
}

impl Network {
    /// He-initialized weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        let shapes = config.shapes()?;
        let mut params = Vec::new();
        for (layer, shape) in config.layers.iter().zip(&shapes) {
            match *layer {
                LayerSpec::Conv2d { filters, kernel, .. } => {
                    let n_in = kernel.0 * kernel.1 * shape[2];
                    params.push(he_init(vec![kernel.0, kernel.1, shape[2], filters], n_in, rng)?);
                    params.push(Tensor::zeros(vec![filters]));
                }
                LayerSpec::Dense { units } => {
                    let n_in = shape[2];
                    params.push(he_init(vec![n_in, units], n_in, rng)?);
                    params.push(Tensor::zeros(vec![units]));
                }
                _ => {}
            }
        }
        Self::from_params(config, params)
    }

    pub fn from_params(config: NetworkConfig, params: Vec<Tensor>) -> Result<Self> {
        let shapes = config.shapes()?;
        let mut ops = Vec::with_capacity(config.layers.len());
        let mut p = 0;
        for (layer, &shape) in config.layers.iter().zip(&shapes) {
            let op = match *layer {
                LayerSpec::Conv2d { filters, kernel, padding } => {
                    let geom = conv_geom(shape, filters, kernel, padding);
                    expect_shape(&params, p, &[kernel.0, kernel.1, shape[2], filters])?;
                    expect_shape(&params, p + 1, &[filters])?;
                    p += 2;
                    Op::Conv { geom, param: p - 2 }
                }
                LayerSpec::Dense { units } => {
                    expect_shape(&params, p, &[shape[2], units])?;
                    expect_shape(&params, p + 1, &[units])?;
                    p += 2;
                    Op::Dense { param: p - 2 }
                }
                LayerSpec::Maxpool2d { pool, stride } => Op::Pool(PoolGeom { in_shape: shape, pool, stride }),
                LayerSpec::Relu => Op::Relu,
                LayerSpec::Softmax => Op::Softmax,
                LayerSpec::Dropout { p } => Op::Dropout(p),
                LayerSpec::Flatten => Op::Flatten,
            };
            ops.push(op);
        }
        if p != params.len() {
            return Err(Error::Shape(format!(
                "config expects {p} parameter tensors, got {}",
                params.len()
            )));
        }
        Ok(Network { config, params, ops })
    }

    pub fn input_len(&self) -> usize {
        self.config.input_shape.iter().product()
    }

    /// Parameter tensors owned by layer `l`.
    pub fn layer_param_count(&self, l: usize) -> usize {
        if self.config.layers[l].has_params() { 2 } else { 0 }
    }

    pub(crate) fn forward<R: Rng + ?Sized>(&self, x: &[f32], mut mode: Mode<'_, R>, keep: bool) -> Trace {
        let mut inputs = Vec::with_capacity(if keep { self.ops.len() } else { 0 });
        let mut aux = Vec::with_capacity(if keep { self.ops.len() } else { 0 });
        let mut cur = x.to_vec();
        for op in &self.ops {
            let (next, a) = match op {
                Op::Conv { geom, param } => (
                    kernels::conv_forward(geom, &cur, &self.params[*param].data, &self.params[param + 1].data),
                    Aux::None,
                ),
                Op::Pool(g) => {
                    let (o, arg) = kernels::pool_forward(g, &cur);
                    (o, Aux::Argmax(arg))
                }
                Op::Dense { param } => (
                    kernels::dense_forward(&cur, &self.params[*param].data, &self.params[param + 1].data),
                    Aux::None,
                ),
                Op::Relu => (kernels::relu_forward(&cur), Aux::None),
                Op::Softmax => (kernels::softmax_forward(&cur), Aux::None),
                Op::Dropout(p) => match &mut mode {
                    Mode::Train(rng) if *p > 0.0 => {
                        let mask = kernels::dropout_mask(cur.len(), *p, &mut **rng);
                        (kernels::apply_mask(&cur, &mask), Aux::Mask(mask))
                    }
                    _ => (cur.clone(), Aux::None),
                },
                Op::Flatten => (cur.clone(), Aux::None),
            };
            if keep {
                inputs.push(std::mem::replace(&mut cur, next));
                aux.push(a);
            } else {
                cur = next;
            }
        }
        Trace { inputs, aux, output: cur }
    }

    /// Output of layer `l` (the input to layer `l + 1`) at inference.
    pub(crate) fn activation_at(&self, x: &[f32], l: usize) -> Vec<f32> {
        let trace = self.forward::<rand_chacha::ChaCha8Rng>(x, Mode::Inference, true);
        if l + 1 < trace.inputs.len() {
            trace.inputs[l + 1].clone()
        } else {
            trace.output
        }
    }

    /// Backpropagate `dlogits` (gradient at the input of the final softmax)
    /// and add parameter gradients into `grads`.
    pub(crate) fn accumulate_grads(&self, trace: &Trace, dlogits: &[f32], grads: &mut [Vec<f32>]) {
        let n = self.ops.len();
        let mut g = dlogits.to_vec();
        // The final softmax is folded into the loss gradient.
        let last = match self.ops.last() {
            Some(Op::Softmax) => n - 1,
            _ => n,
        };
        for l in (0..last).rev() {
            let x = &trace.inputs[l];
            let need_dx = l > 0;
            g = match &self.ops[l] {
                Op::Conv { geom, param } => {
                    let (dw, rest) = grads[*param..].split_at_mut(1);
                    kernels::conv_backward(geom, x, &self.params[*param].data, &g, &mut dw[0], &mut rest[0], need_dx)
                }
                Op::Dense { param } => {
                    let (dw, rest) = grads[*param..].split_at_mut(1);
                    kernels::dense_backward(x, &self.params[*param].data, &g, &mut dw[0], &mut rest[0], need_dx)
                }
                Op::Pool(_) => match &trace.aux[l] {
                    Aux::Argmax(arg) => kernels::pool_backward(x.len(), arg, &g),
                    _ => unreachable!("pool trace without argmax"),
                },
                Op::Relu => kernels::relu_backward(x, &g),
                Op::Softmax => kernels::softmax_backward(&trace.inputs[l + 1], &g),
                Op::Dropout(_) => match &trace.aux[l] {
                    Aux::Mask(m) => kernels::apply_mask(&g, m),
                    _ => g,
                },
                Op::Flatten => g,
            };
        }
    }

    pub fn zero_grads(&self) -> Vec<Vec<f32>> {
        self.params.iter().map(|t| vec![0.0; t.len()]).collect()
    }
}

fn expect_shape(params: &[Tensor], i: usize, shape: &[usize]) -> Result<()> {
    match params.get(i) {
        Some(t) if t.shape == shape => Ok(()),
        Some(t) => Err(Error::Shape(format!(
            "parameter {i} has shape {:?}, expected {shape:?}",
            t.shape
        ))),
        None => Err(Error::Shape(format!("missing parameter tensor {i}"))),
    }
}

/// `(128, 2, 1)` input: I then Q for every time step.
pub fn frame_to_input(frame: &IQFrame) -> Vec<f32> {
    frame
        .samples
        .iter()
        .flat_map(|s| [s.re as f32, s.im as f32])
        .collect()
}
