use rftrojan::nn::{
    decode_model, encode_model, load_model, save_model, train, LayerSpec, NetworkConfig, Padding,
    TrainConfig, TrainedModel,
};
use rftrojan::sigsynth::{generate_dataset, DatasetSpec, IQFrame, LabeledDataset, ModulationScheme};

fn classes() -> Vec<ModulationScheme> {
    vec![ModulationScheme::Psk8, ModulationScheme::Qam16]
}

fn small_data(frames: usize, seed: u64) -> LabeledDataset {
    let spec = DatasetSpec {
        schemes: classes(),
        snr_grid_db: vec![18.0],
        frames_per_scheme_per_snr: frames,
        seed,
        ..DatasetSpec::default()
    };
    generate_dataset(&spec).unwrap()
}

/// Straightforward nested-loop forward pass written independently of the
/// optimized kernels: cross-correlation, max pooling, dense, ReLU, softmax.
fn naive_forward(model: &TrainedModel, frame: &IQFrame) -> Vec<f64> {
    let cfg = model.config();
    let [h0, w0, c0] = cfg.input_shape;
    // act[i][j][c]
    let mut act: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; c0]; w0]; h0];
    for (t, s) in frame.samples.iter().enumerate() {
        act[t][0][0] = s.re as f32 as f64;
        act[t][1][0] = s.im as f32 as f64;
    }
    let mut flat: Option<Vec<f64>> = None;
    let mut p = 0;
    for layer in &cfg.layers {
        match *layer {
            LayerSpec::Conv2d { filters, kernel, padding } => {
                let w = &model.network.params[p].data;
                let b = &model.network.params[p + 1].data;
                p += 2;
                let (h, wd, c) = (act.len(), act[0].len(), act[0][0].len());
                let (ph, pw) = match padding {
                    Padding::Valid => (0i64, 0i64),
                    Padding::Same => (((kernel.0 - 1) / 2) as i64, ((kernel.1 - 1) / 2) as i64),
                };
                let (ho, wo) = match padding {
                    Padding::Valid => (h - kernel.0 + 1, wd - kernel.1 + 1),
                    Padding::Same => (h, wd),
                };
                let mut out = vec![vec![vec![0.0; filters]; wo]; ho];
                for i in 0..ho {
                    for j in 0..wo {
                        for f in 0..filters {
                            let mut acc = b[f] as f64;
                            for di in 0..kernel.0 {
                                for dj in 0..kernel.1 {
                                    let ii = i as i64 + di as i64 - ph;
                                    let jj = j as i64 + dj as i64 - pw;
                                    if ii < 0 || jj < 0 || ii >= h as i64 || jj >= wd as i64 {
                                        continue;
                                    }
                                    for ch in 0..c {
                                        let widx = ((di * kernel.1 + dj) * c + ch) * filters + f;
                                        acc += w[widx] as f64 * act[ii as usize][jj as usize][ch];
                                    }
                                }
                            }
                            out[i][j][f] = acc;
                        }
                    }
                }
                act = out;
            }
            LayerSpec::Maxpool2d { pool, stride } => {
                let (h, wd, c) = (act.len(), act[0].len(), act[0][0].len());
                let ho = (h - pool.0) / stride.0 + 1;
                let wo = (wd - pool.1) / stride.1 + 1;
                let mut out = vec![vec![vec![f64::NEG_INFINITY; c]; wo]; ho];
                for i in 0..ho {
                    for j in 0..wo {
                        for ch in 0..c {
                            for di in 0..pool.0 {
                                for dj in 0..pool.1 {
                                    let v = act[i * stride.0 + di][j * stride.1 + dj][ch];
                                    out[i][j][ch] = out[i][j][ch].max(v);
                                }
                            }
                        }
                    }
                }
                act = out;
            }
            LayerSpec::Flatten => {
                flat = Some(act.iter().flatten().flatten().copied().collect());
            }
            LayerSpec::Dense { units } => {
                let x = flat.take().unwrap();
                let w = &model.network.params[p].data;
                let b = &model.network.params[p + 1].data;
                p += 2;
                let y = (0..units)
                    .map(|u| b[u] as f64 + (0..x.len()).map(|i| w[i * units + u] as f64 * x[i]).sum::<f64>())
                    .collect();
                flat = Some(y);
            }
            LayerSpec::Relu => match flat.as_mut() {
                Some(v) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
                None => act.iter_mut().flatten().flatten().for_each(|x| *x = x.max(0.0)),
            },
            LayerSpec::Dropout { .. } => {}
            LayerSpec::Softmax => {
                let z = flat.take().unwrap();
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                flat = Some(e.into_iter().map(|v| v / s).collect());
            }
        }
    }
    flat.unwrap()
}

fn quick_cfg(epochs: usize) -> TrainConfig {
    TrainConfig { learning_rate: 1e-3, epochs, batch_size: 16, seed: 5, ..TrainConfig::default() }
}

#[test]
fn predict_matches_naive_forward_oracle() {
    let data = small_data(6, 1);
    let model = train(&data, &NetworkConfig::desk_scale(classes()), &quick_cfg(2)).unwrap();
    for f in &data {
        let (_, probs) = model.predict(f).unwrap();
        let oracle = naive_forward(&model, f);
        assert!((probs.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        for (a, b) in probs.iter().zip(&oracle) {
            assert!((*a as f64 - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}

#[test]
fn same_padding_network_matches_oracle() {
    let cfg = NetworkConfig {
        input_shape: [128, 2, 1],
        layers: vec![
            LayerSpec::conv_same(4, (3, 3)),
            LayerSpec::Relu,
            LayerSpec::pool_2x1(),
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ],
        classes: classes(),
    };
    let data = small_data(3, 2);
    let model = train(&data, &cfg, &quick_cfg(1)).unwrap();
    for f in &data {
        let probs = model.probabilities(f).unwrap();
        for (a, b) in probs.iter().zip(naive_forward(&model, f)) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }
}

#[test]
fn training_fits_a_small_set() {
    let data = small_data(24, 3);
    let model = train(&data, &NetworkConfig::desk_scale(classes()), &quick_cfg(40)).unwrap();
    let h = &model.loss_history;
    assert_eq!(h.len(), 40);
    assert!(h[39] < 0.5 * h[0], "loss {} -> {}", h[0], h[39]);
    assert!(model.accuracy(&data).unwrap() >= 0.9);
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = small_data(8, 4);
    let net = NetworkConfig::desk_scale(classes());
    let a = train(&data, &net, &quick_cfg(2)).unwrap();
    let b = train(&data, &net, &quick_cfg(2)).unwrap();
    assert_eq!(a, b);
    let c = train(&data, &net, &TrainConfig { seed: 6, ..quick_cfg(2) }).unwrap();
    assert_ne!(a.network.params, c.network.params);
}

#[test]
fn rejects_labels_outside_the_class_list() {
    let spec = DatasetSpec {
        schemes: vec![ModulationScheme::Bpsk],
        snr_grid_db: vec![10.0],
        frames_per_scheme_per_snr: 2,
        ..DatasetSpec::default()
    };
    let data = generate_dataset(&spec).unwrap();
    let err = train(&data, &NetworkConfig::desk_scale(classes()), &quick_cfg(1)).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn hidden_activations_are_nonnegative_rows() {
    let data = small_data(4, 5);
    let model = train(&data, &NetworkConfig::desk_scale(classes()), &quick_cfg(1)).unwrap();
    let m = model.last_hidden_activations(&data).unwrap();
    assert_eq!((m.rows, m.cols), (8, 32));
    assert!(m.data.iter().all(|&v| v >= 0.0 && v.is_finite()));
}

#[test]
fn model_file_round_trips() {
    let data = small_data(4, 6);
    let model = train(&data, &NetworkConfig::desk_scale(classes()), &quick_cfg(2)).unwrap();
    let bytes = encode_model(&model);
    assert_eq!(&bytes[..4], b"RFTM");
    let back = decode_model(&bytes).unwrap();
    assert_eq!(back.network, model.network);
    assert_eq!(back.loss_history, model.loss_history);
    assert_eq!(encode_model(&back), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rftm");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    for f in &data {
        assert_eq!(loaded.predict(f).unwrap(), model.predict(f).unwrap());
    }
}

#[test]
fn model_file_rejects_corruption() {
    let data = small_data(2, 7);
    let model = train(&data, &NetworkConfig::desk_scale(classes()), &quick_cfg(1)).unwrap();
    let bytes = encode_model(&model);
    assert!(decode_model(&bytes[..bytes.len() - 3]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_model(&bad).is_err());
    let mut extra = bytes;
    extra.push(0);
    assert!(decode_model(&extra).is_err());
}
