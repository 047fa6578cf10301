//! Binary model container.
//!
//! ```text
//! "RFTM" | version u16 | config records | per layer: tensor count u8, tensors
//! record: tag u8 | length u32 | value          (tag 0 terminates the config)
//! tensor: rank u8 | dims u32 x rank | f32 data
//! ```
//! Config records: 1 input shape (3 x u32), 2 class ids (u8 each), 3 one layer
//! spec (repeated, in order), 4 per-epoch loss history (f64 each).
//! Adam moments are not persisted; a loaded model starts a fresh optimizer.

use std::path::Path;

use super::layers::{LayerSpec, Padding};
use super::model::TrainedModel;
use super::network::{Network, NetworkConfig};
use super::optim::AdamState;
use super::Tensor;
use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::sigsynth::ModulationScheme;

const MAGIC: &[u8; 4] = b"RFTM";
const VERSION: u16 = 1;

const TAG_END: u8 = 0;
const TAG_INPUT: u8 = 1;
const TAG_CLASSES: u8 = 2;
const TAG_LAYER: u8 = 3;
const TAG_LOSS: u8 = 4;

fn put_record(buf: &mut Vec<u8>, tag: u8, value: &[u8]) {
    buf.put_u8(tag);
    buf.put_u32(value.len() as u32);
    buf.extend_from_slice(value);
}

fn encode_layer(layer: &LayerSpec) -> Vec<u8> {
    let mut v = Vec::new();
    match *layer {
        LayerSpec::Conv2d { filters, kernel, padding } => {
            v.put_u8(1);
            v.put_u32(filters as u32);
            v.put_u32(kernel.0 as u32);
            v.put_u32(kernel.1 as u32);
            v.put_u8(matches!(padding, Padding::Same) as u8);
        }
        LayerSpec::Maxpool2d { pool, stride } => {
            v.put_u8(2);
            for d in [pool.0, pool.1, stride.0, stride.1] {
                v.put_u32(d as u32);
            }
        }
        LayerSpec::Dense { units } => {
            v.put_u8(3);
            v.put_u32(units as u32);
        }
        LayerSpec::Relu => v.put_u8(4),
        LayerSpec::Softmax => v.put_u8(5),
        LayerSpec::Dropout { p } => {
            v.put_u8(6);
            v.extend_from_slice(&p.to_le_bytes());
        }
        LayerSpec::Flatten => v.put_u8(7),
    }
    v
}

fn decode_layer(bytes: &[u8]) -> Result<LayerSpec> {
    let mut r = Reader::new(bytes);
    let u = |r: &mut Reader| -> Result<usize> { Ok(r.u32()? as usize) };
    let layer = match r.u8()? {
        1 => {
            let filters = u(&mut r)?;
            let kernel = (u(&mut r)?, u(&mut r)?);
            let padding = if r.u8()? == 1 { Padding::Same } else { Padding::Valid };
            LayerSpec::Conv2d { filters, kernel, padding }
        }
        2 => LayerSpec::Maxpool2d {
            pool: (u(&mut r)?, u(&mut r)?),
            stride: (u(&mut r)?, u(&mut r)?),
        },
        3 => LayerSpec::Dense { units: u(&mut r)? },
        4 => LayerSpec::Relu,
        5 => LayerSpec::Softmax,
        6 => LayerSpec::Dropout {
            p: f64::from_le_bytes(r.take(8)?.try_into().unwrap()),
        },
        7 => LayerSpec::Flatten,
        k => return Err(Error::Format(format!("unknown layer kind {k}"))),
    };
    if !r.is_empty() {
        return Err(Error::Format("layer record has trailing bytes".into()));
    }
    Ok(layer)
}

pub fn encode_model(model: &TrainedModel) -> Vec<u8> {
    let cfg = model.config();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.put_u16(VERSION);

    let mut v = Vec::new();
    for d in cfg.input_shape {
        v.put_u32(d as u32);
    }
    put_record(&mut buf, TAG_INPUT, &v);
    let ids: Vec<u8> = cfg.classes.iter().map(|c| c.id()).collect();
    put_record(&mut buf, TAG_CLASSES, &ids);
    for layer in &cfg.layers {
        put_record(&mut buf, TAG_LAYER, &encode_layer(layer));
    }
    let loss: Vec<u8> = model.loss_history.iter().flat_map(|l| l.to_le_bytes()).collect();
    put_record(&mut buf, TAG_LOSS, &loss);
    put_record(&mut buf, TAG_END, &[]);

    let mut p = 0;
    for l in 0..cfg.layers.len() {
        let count = model.network.layer_param_count(l);
        buf.put_u8(count as u8);
        for t in &model.network.params[p..p + count] {
            buf.put_u8(t.shape.len() as u8);
            for &d in &t.shape {
                buf.put_u32(d as u32);
            }
            for &x in &t.data {
                buf.put_f32(x);
            }
        }
        p += count;
    }
    buf
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let mut input_shape = None;
    let mut classes = Vec::new();
    let mut layers = Vec::new();
    let mut loss_history = Vec::new();
    loop {
        let tag = r.u8()?;
        let len = r.u32()? as usize;
        let value = r.take(len)?;
        match tag {
            TAG_END => break,
            TAG_INPUT => {
                let mut v = Reader::new(value);
                input_shape = Some([v.u32()? as usize, v.u32()? as usize, v.u32()? as usize]);
            }
            TAG_CLASSES => {
                classes = value.iter().map(|&id| ModulationScheme::from_id(id)).collect::<Result<_>>()?;
            }
            TAG_LAYER => layers.push(decode_layer(value)?),
            TAG_LOSS => {
                if len % 8 != 0 {
                    return Err(Error::Format("loss record length not a multiple of 8".into()));
                }
                loss_history = value
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
            }
            // Unknown records are skipped so newer writers stay readable.
            _ => {}
        }
    }
    let config = NetworkConfig {
        input_shape: input_shape.ok_or_else(|| Error::Format("model has no input shape".into()))?,
        layers,
        classes,
    };
    let mut params = Vec::new();
    for _ in 0..config.layers.len() {
        let count = r.u8()?;
        for _ in 0..count {
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            params.push(Tensor::new(shape, data)?);
        }
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after model tensors".into()));
    }
    let network = Network::from_params(config, params).map_err(|e| Error::Format(e.to_string()))?;
    let adam = AdamState::new(&network.params);
    Ok(TrainedModel { network, adam, loss_history })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
