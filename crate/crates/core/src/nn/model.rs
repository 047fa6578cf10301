use log::debug;
use rand::seq::SliceRandom;

use super::layers::cross_entropy_loss;
use super::network::{frame_to_input, Mode, Network, NetworkConfig};
use super::optim::{adam_step, AdamState, TrainConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::derived_rng;
use crate::sigsynth::{IQFrame, LabeledDataset, ModulationScheme};

/// Anything that maps a frame to a modulation label.
pub trait Classifier {
    fn classify(&self, frame: &IQFrame) -> Result<ModulationScheme>;
}

/// A trained network with its optimizer state and per-epoch mean loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub adam: AdamState,
    pub loss_history: Vec<f64>,
}

impl TrainedModel {
    pub fn config(&self) -> &NetworkConfig {
        &self.network.config
    }

    fn check_frame(&self, frame: &IQFrame) -> Result<Vec<f32>> {
        let x = frame_to_input(frame);
        if x.len() != self.network.input_len() {
            return Err(Error::Shape(format!(
                "frame gives {} inputs, model expects {}",
                x.len(),
                self.network.input_len()
            )));
        }
        Ok(x)
    }

    /// Class probabilities in `config().classes` order, dropout disabled.
    pub fn probabilities(&self, frame: &IQFrame) -> Result<Vec<f32>> {
        let x = self.check_frame(frame)?;
        Ok(self.network.forward::<rand_chacha::ChaCha8Rng>(&x, Mode::Inference, false).output)
    }

    /// Most likely label (lowest class index on exact ties) and the full
    /// probability vector.
    pub fn predict(&self, frame: &IQFrame) -> Result<(ModulationScheme, Vec<f32>)> {
        let probs = self.probabilities(frame)?;
        let best = argmax(&probs);
        Ok((self.config().classes[best], probs))
    }

    /// Post-ReLU activations of the last hidden dense layer, one row per frame.
    pub fn last_hidden_activations<'a>(&self, frames: impl IntoIterator<Item = &'a IQFrame>) -> Result<Matrix> {
        let probe = self.config().probe_layer()?;
        let mut rows = Vec::new();
        for f in frames {
            let x = self.check_frame(f)?;
            let a: Vec<f64> = self.network.activation_at(&x, probe).into_iter().map(f64::from).collect();
            rows.push(a);
        }
        if rows.is_empty() {
            let cols = self.config().shapes()?[probe + 1][2];
            return Ok(Matrix::zeros(0, cols));
        }
        Matrix::from_rows(&rows)
    }

    /// Fraction of frames whose predicted label equals `frame.label`.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Validation("accuracy of an empty dataset".into()));
        }
        let mut hits = 0usize;
        for f in data {
            if self.predict(f)?.0 == f.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

impl Classifier for TrainedModel {
    fn classify(&self, frame: &IQFrame) -> Result<ModulationScheme> {
        Ok(self.predict(frame)?.0)
    }
}

pub(crate) fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Minibatch training with Adam over seeded shuffles. Single-threaded and
/// bitwise deterministic for a fixed `cfg.seed`.
pub fn train(dataset: &LabeledDataset, net: &NetworkConfig, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    let labels = dataset
        .iter()
        .map(|f| {
            net.class_index(f.label).ok_or_else(|| {
                Error::Validation(format!("label {} is not one of the network classes", f.label))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<Vec<f32>> = dataset.iter().map(frame_to_input).collect();

    let mut network = Network::init(net.clone(), &mut derived_rng(cfg.seed, "nn.init", 0))?;
    if inputs[0].len() != network.input_len() {
        return Err(Error::Shape("frames do not match the network input shape".into()));
    }
    let mut adam = AdamState::new(&network.params);
    let mut dropout_rng = derived_rng(cfg.seed, "nn.dropout", 0);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut derived_rng(cfg.seed, "nn.shuffle", epoch as u64));
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = network.zero_grads();
            for &i in batch {
                let trace = network.forward(&inputs[i], Mode::Train(&mut dropout_rng), true);
                let (loss, dlogits) = cross_entropy_loss(&trace.output, labels[i])?;
                epoch_loss += loss as f64;
                network.accumulate_grads(&trace, &dlogits, &mut grads);
            }
            let scale = 1.0 / batch.len() as f32;
            grads.iter_mut().flatten().for_each(|g| *g *= scale);
            adam_step(&mut network.params, &grads, &mut adam, cfg)?;
        }
        let mean = epoch_loss / inputs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}")));
        }
        debug!("epoch {epoch}: loss {mean:.5}");
        history.push(mean);
    }
    Ok(TrainedModel { network, adam, loss_history: history })
}
