//! Training loop (Adam, mini-batches, early stopping) and prediction for
//! the three classifier architectures, plus their on-disk format.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::VarietyLabel;
use crate::embeddings::SentenceMatrix;
use crate::error::{Error, Result};

use super::arch::{self, ConvBranch, LstmParams};
use super::params::{AdamState, BoundParams, ParamSet};
use super::tape::{NodeId, Tape};
use super::{NeuralConfig, TrainingParams};

const MAGIC: &[u8; 4] = b"DINN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    Cnn,
    Lstm,
    CLstm,
}

impl ArchKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ArchKind::Cnn => "cnn",
            ArchKind::Lstm => "lstm",
            ArchKind::CLstm => "clstm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_loss: f64,
}

/// A trained CNN/LSTM/C-LSTM with its label list and config snapshot.
#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub arch: ArchKind,
    pub config: NeuralConfig,
    pub labels: Vec<VarietyLabel>,
    pub dim: usize,
    pub params: ParamSet,
    /// (epoch, train loss, held-out loss) rows; not serialized.
    pub log: Vec<EpochLog>,
}

fn arch_of(config: &NeuralConfig) -> ArchKind {
    match config {
        NeuralConfig::Cnn(_) => ArchKind::Cnn,
        NeuralConfig::Lstm(_) => ArchKind::Lstm,
        NeuralConfig::CLstm(_) => ArchKind::CLstm,
    }
}

/// Minimum number of timesteps fed to an architecture.
fn pad_floor(config: &NeuralConfig) -> usize {
    match config {
        NeuralConfig::Cnn(c) => 5.max(c.filter_sizes.iter().copied().max().unwrap_or(1)),
        NeuralConfig::Lstm(_) => 1,
        NeuralConfig::CLstm(c) => 5.max(c.kernel_sizes.iter().copied().max().unwrap_or(1)),
    }
}

fn init_params(config: &NeuralConfig, dim: usize, k: usize, seed: u64) -> ParamSet {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    match config {
        NeuralConfig::Cnn(c) => {
            for &m in &c.filter_sizes {
                params.add_glorot(&format!("conv_w_{m}"), m * dim, c.filters_per_size, &mut rng);
                params.add_zeros(&format!("conv_b_{m}"), 1, c.filters_per_size);
            }
            let features = c.filter_sizes.len() * c.filters_per_size;
            params.add_glorot("fc_w", features, k, &mut rng);
            params.add_zeros("fc_b", 1, k);
        }
        NeuralConfig::Lstm(c) => {
            params.add_glorot("lstm_w", dim, 4 * c.hidden_size, &mut rng);
            params.add_glorot("lstm_u", c.hidden_size, 4 * c.hidden_size, &mut rng);
            params.add_zeros("lstm_b", 1, 4 * c.hidden_size);
            params.add_glorot("fc_w", c.hidden_size, k, &mut rng);
            params.add_zeros("fc_b", 1, k);
        }
        NeuralConfig::CLstm(c) => {
            for &m in &c.kernel_sizes {
                params.add_glorot(&format!("conv_w_{m}"), m * dim, c.filters_per_size, &mut rng);
                params.add_zeros(&format!("conv_b_{m}"), 1, c.filters_per_size);
            }
            let features = c.kernel_sizes.len() * c.filters_per_size;
            params.add_glorot("lstm_w", features, 4 * c.hidden_size, &mut rng);
            params.add_glorot("lstm_u", c.hidden_size, 4 * c.hidden_size, &mut rng);
            params.add_zeros("lstm_b", 1, 4 * c.hidden_size);
            params.add_glorot("fc_w", c.hidden_size, k, &mut rng);
            params.add_zeros("fc_b", 1, k);
        }
    }
    params
}

/// Valid prefix of the sentence matrix, zero-padded up to `floor` rows.
fn input_matrix(matrix: &SentenceMatrix, floor: usize) -> Array2<f64> {
    let valid = matrix.valid_len().max(1);
    let rows = valid.max(floor);
    let mut out = Array2::zeros((rows, matrix.rows.ncols()));
    let take = valid.min(matrix.rows.nrows());
    out.slice_mut(s![0..take, ..])
        .assign(&matrix.rows.slice(s![0..take, ..]));
    out
}

/// Build the forward graph; returns the logits node.
pub(crate) fn forward_logits(
    tape: &mut Tape,
    config: &NeuralConfig,
    params: &ParamSet,
    bound: &BoundParams,
    input: Array2<f64>,
    mask: Option<Array2<f64>>,
) -> NodeId {
    let input = tape.leaf(input);
    let mask = mask.map(|m| tape.leaf(m));
    let fc_w = bound.id(params, "fc_w");
    let fc_b = bound.id(params, "fc_b");
    match config {
        NeuralConfig::Cnn(c) => {
            let branches: Vec<ConvBranch> = c
                .filter_sizes
                .iter()
                .map(|m| ConvBranch {
                    weight: bound.id(params, &format!("conv_w_{m}")),
                    bias: bound.id(params, &format!("conv_b_{m}")),
                })
                .collect();
            arch::cnn_logits(tape, input, &branches, fc_w, fc_b, mask)
        }
        NeuralConfig::Lstm(c) => {
            let lstm = LstmParams {
                w: bound.id(params, "lstm_w"),
                u: bound.id(params, "lstm_u"),
                b: bound.id(params, "lstm_b"),
                hidden: c.hidden_size,
            };
            arch::lstm_logits(tape, input, lstm, fc_w, fc_b, mask)
        }
        NeuralConfig::CLstm(c) => {
            let branches: Vec<ConvBranch> = c
                .kernel_sizes
                .iter()
                .map(|m| ConvBranch {
                    weight: bound.id(params, &format!("conv_w_{m}")),
                    bias: bound.id(params, &format!("conv_b_{m}")),
                })
                .collect();
            let lstm = LstmParams {
                w: bound.id(params, "lstm_w"),
                u: bound.id(params, "lstm_u"),
                b: bound.id(params, "lstm_b"),
                hidden: c.hidden_size,
            };
            arch::clstm_logits(tape, input, &branches, lstm, fc_w, fc_b, mask)
        }
    }
}

fn mask_shape(config: &NeuralConfig) -> (usize, usize) {
    match config {
        NeuralConfig::Cnn(c) => (1, c.filter_sizes.len() * c.filters_per_size),
        NeuralConfig::Lstm(c) => (1, c.hidden_size),
        NeuralConfig::CLstm(c) => (1, c.hidden_size),
    }
}

fn mean_loss(
    config: &NeuralConfig,
    params: &ParamSet,
    data: &[SentenceMatrix],
    indices: &[usize],
    labels: &[VarietyLabel],
    floor: usize,
) -> f64 {
    let mut total = 0.0;
    for &i in indices {
        let matrix = &data[i];
        let target = labels.iter().position(|l| l == &matrix.label).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let logits = forward_logits(
            &mut tape,
            config,
            params,
            &bound,
            input_matrix(matrix, floor),
            None,
        );
        let loss = tape.softmax_cross_entropy(logits, target);
        total += tape.value(loss)[[0, 0]];
    }
    total / indices.len() as f64
}

/// Train a classifier on precomputed sentence matrices.
///
/// 10% of the data is held out for early stopping; training stops after
/// `patience` epochs without held-out improvement or at the epoch cap,
/// and the parameters of the best held-out epoch are returned.
pub fn train_classifier(
    config: &NeuralConfig,
    data: &[SentenceMatrix],
) -> Result<TrainedClassifier> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no training sentences".into()));
    }
    let dim = data[0].rows.ncols();
    let train_cfg: &TrainingParams = config.training();
    if train_cfg.dropout < 0.0 || train_cfg.dropout >= 1.0 {
        return Err(Error::InvalidConfig("dropout must be in [0, 1)".into()));
    }

    // label order: descending frequency, ties by label
    let mut freq: std::collections::BTreeMap<&VarietyLabel, usize> = Default::default();
    for m in data {
        *freq.entry(&m.label).or_default() += 1;
    }
    let mut labels: Vec<VarietyLabel> = freq.keys().map(|l| (*l).clone()).collect();
    labels.sort_by(|a, b| freq[b].cmp(&freq[a]).then_with(|| a.cmp(b)));
    if labels.len() < 2 {
        return Err(Error::Training {
            run: None,
            message: "training data has a single class".into(),
        });
    }
    let k = labels.len();
    let floor = pad_floor(config);

    let mut rng = ChaCha20Rng::seed_from_u64(train_cfg.seed);
    let mut params = init_params(config, dim, k, rng.gen());
    let mut adam = AdamState::new(&params);

    // 10% held out for early stopping (at least 1 sample when possible)
    let mut order: Vec<usize> = (0..data.len()).collect();
    shuffle(&mut order, &mut rng);
    let n_val = (data.len() / 10).max(1).min(data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let targets: Vec<usize> = data
        .iter()
        .map(|m| labels.iter().position(|l| l == &m.label).unwrap())
        .collect();

    let (mask_rows, mask_cols) = mask_shape(config);
    let mut best_values = params.values().to_vec();
    let mut best_loss = f64::INFINITY;
    let mut stall = 0usize;
    let mut log = Vec::new();

    for epoch in 0..train_cfg.epochs {
        shuffle(&mut train_idx, &mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(train_cfg.batch_size) {
            params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mask = if train_cfg.dropout > 0.0 {
                    Some(arch::dropout_mask(
                        mask_rows,
                        mask_cols,
                        train_cfg.dropout,
                        &mut rng,
                    ))
                } else {
                    None
                };
                let mut tape = Tape::new();
                let bound = params.bind(&mut tape);
                let logits = forward_logits(
                    &mut tape,
                    config,
                    &params,
                    &bound,
                    input_matrix(&data[i], floor),
                    mask,
                );
                let loss = tape.softmax_cross_entropy(logits, targets[i]);
                epoch_loss += tape.value(loss)[[0, 0]];
                tape.backward(loss, scale);
                params.accumulate(&tape, &bound);
            }
            adam.step(&mut params, train_cfg.learning_rate);
        }
        let train_loss = epoch_loss / train_idx.len() as f64;
        let heldout_loss = mean_loss(config, &params, data, &val_idx, &labels, floor);
        log.push(EpochLog {
            epoch,
            train_loss,
            heldout_loss,
        });
        log::info!(
            "{} epoch {epoch}: train loss {train_loss:.6}, held-out loss {heldout_loss:.6}",
            arch_of(config).tag()
        );

        if heldout_loss < best_loss {
            best_loss = heldout_loss;
            best_values = params.values().to_vec();
            stall = 0;
        } else {
            stall += 1;
            if stall >= train_cfg.patience {
                break;
            }
        }
    }
    params.set_values(best_values);

    Ok(TrainedClassifier {
        arch: arch_of(config),
        config: config.clone(),
        labels,
        dim,
        params,
        log,
    })
}

fn shuffle(items: &mut [usize], rng: &mut ChaCha20Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Predict the variety of one sentence matrix; dropout is disabled.
pub fn predict_classifier(
    model: &TrainedClassifier,
    matrix: &SentenceMatrix,
) -> Result<(VarietyLabel, Vec<f64>)> {
    if matrix.rows.ncols() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: matrix.rows.ncols(),
        });
    }
    let floor = pad_floor(&model.config);
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let logits = forward_logits(
        &mut tape,
        &model.config,
        &model.params,
        &bound,
        input_matrix(matrix, floor),
        None,
    );
    let loss = tape.softmax_cross_entropy(logits, 0);
    let probs: Vec<f64> = tape.probabilities(loss).unwrap().iter().cloned().collect();
    let best = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    Ok((model.labels[best].clone(), probs))
}

impl TrainedClassifier {
    pub fn save<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(w, VERSION)?;
        let config_json = serde_json::to_string(&self.config).expect("config serialize");
        binio::write_str(w, &config_json)?;
        binio::write_u64(w, self.dim as u64)?;
        binio::write_u64(w, self.labels.len() as u64)?;
        for label in &self.labels {
            binio::write_str(w, label.as_str())?;
        }
        binio::write_u64(w, self.params.len() as u64)?;
        for name in self.params.names().to_vec() {
            let value = self.params.value(&name);
            binio::write_str(w, &name)?;
            binio::write_u64(w, value.nrows() as u64)?;
            binio::write_u64(w, value.ncols() as u64)?;
            binio::write_f64_slice(w, value.as_slice().unwrap())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        binio::check_magic(r, MAGIC, "neural classifier")?;
        let version = binio::read_u32(r)?;
        if version != VERSION {
            return Err(Error::Model(format!(
                "unsupported classifier version {version}"
            )));
        }
        let config_json = binio::read_str(r)?;
        let config: NeuralConfig = serde_json::from_str(&config_json)
            .map_err(|e| Error::Model(format!("bad config snapshot: {e}")))?;
        let dim = binio::read_u64(r)? as usize;
        let n_labels = binio::read_u64(r)? as usize;
        let mut labels = Vec::with_capacity(n_labels);
        for _ in 0..n_labels {
            labels.push(VarietyLabel::new(&binio::read_str(r)?)?);
        }
        let n_params = binio::read_u64(r)? as usize;
        let mut params = ParamSet::new();
        for _ in 0..n_params {
            let name = binio::read_str(r)?;
            let rows = binio::read_u64(r)? as usize;
            let cols = binio::read_u64(r)? as usize;
            let data = binio::read_f64_vec(r)?;
            let value = Array2::from_shape_vec((rows, cols), data)
                .map_err(|_| Error::Model(format!("tensor {name} size mismatch")))?;
            params.add(&name, value);
        }
        Ok(TrainedClassifier {
            arch: arch_of(&config),
            config,
            labels,
            dim,
            params,
            log: Vec::new(),
        })
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.save(&mut BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load(&mut BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{CnnConfig, LstmConfig};

    /// Two well-separated classes in a 4-dim embedding space.
    fn toy_data(n_per_class: usize, seed: u64) -> Vec<SentenceMatrix> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        for class in 0..2u8 {
            let label = VarietyLabel::new(if class == 0 { "AA" } else { "BB" }).unwrap();
            for _ in 0..n_per_class {
                let len = rng.gen_range(5..9);
                let mut rows = Array2::zeros((10, 4));
                let mut mask = vec![false; 10];
                for t in 0..len {
                    for j in 0..4 {
                        let center = if class == 0 { 1.0 } else { -1.0 };
                        rows[[t, j]] = center + rng.gen_range(-0.3..0.3);
                    }
                    mask[t] = true;
                }
                data.push(SentenceMatrix {
                    rows,
                    mask,
                    label: label.clone(),
                });
            }
        }
        data
    }

    fn small_train(seed: u64) -> TrainingParams {
        TrainingParams {
            dropout: 0.2,
            epochs: 12,
            learning_rate: 0.01,
            patience: 3,
            batch_size: 16,
            seed,
        }
    }

    fn accuracy(model: &TrainedClassifier, data: &[SentenceMatrix]) -> f64 {
        let correct = data
            .iter()
            .filter(|m| predict_classifier(model, m).unwrap().0 == m.label)
            .count();
        correct as f64 / data.len() as f64
    }

    #[test]
    fn cnn_learns_separable_toy_set() {
        let data = toy_data(30, 1);
        let config = NeuralConfig::Cnn(CnnConfig {
            filter_sizes: vec![3, 4, 5],
            filters_per_size: 8,
            train: small_train(1),
        });
        let model = train_classifier(&config, &data).unwrap();
        assert!(accuracy(&model, &data) >= 0.99);
    }

    #[test]
    fn lstm_learns_separable_toy_set() {
        let data = toy_data(30, 2);
        let config = NeuralConfig::Lstm(LstmConfig {
            hidden_size: 8,
            train: small_train(2),
        });
        let model = train_classifier(&config, &data).unwrap();
        assert!(accuracy(&model, &data) >= 0.99);
    }

    #[test]
    fn clstm_learns_separable_toy_set() {
        let data = toy_data(30, 3);
        let config = NeuralConfig::CLstm(crate::neural::CLstmConfig {
            kernel_sizes: vec![2, 3, 4],
            filters_per_size: 8,
            hidden_size: 8,
            train: small_train(3),
        });
        let model = train_classifier(&config, &data).unwrap();
        assert!(accuracy(&model, &data) >= 0.99);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data(10, 4);
        let config = NeuralConfig::Lstm(LstmConfig {
            hidden_size: 4,
            train: TrainingParams {
                epochs: 3,
                ..small_train(4)
            },
        });
        let m1 = train_classifier(&config, &data).unwrap();
        let m2 = train_classifier(&config, &data).unwrap();
        assert_eq!(m1.params.values(), m2.params.values());
    }

    #[test]
    fn prediction_is_pure_and_normalized() {
        let data = toy_data(10, 5);
        let config = NeuralConfig::Cnn(CnnConfig {
            filter_sizes: vec![3],
            filters_per_size: 4,
            train: TrainingParams {
                epochs: 2,
                ..small_train(5)
            },
        });
        let model = train_classifier(&config, &data).unwrap();
        let (l1, p1) = predict_classifier(&model, &data[0]).unwrap();
        let (l2, p2) = predict_classifier(&model, &data[0]).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
        assert!((p1.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_class_data_is_error() {
        let mut data = toy_data(6, 6);
        data.retain(|m| m.label.as_str() == "AA");
        let config = NeuralConfig::Lstm(LstmConfig {
            hidden_size: 4,
            train: small_train(6),
        });
        assert!(train_classifier(&config, &data).is_err());
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let data = toy_data(10, 7);
        let config = NeuralConfig::Lstm(LstmConfig {
            hidden_size: 4,
            train: TrainingParams {
                epochs: 1,
                ..small_train(7)
            },
        });
        let model = train_classifier(&config, &data).unwrap();
        let bad = SentenceMatrix {
            rows: Array2::zeros((5, 9)),
            mask: vec![true; 5],
            label: VarietyLabel::new("AA").unwrap(),
        };
        assert!(matches!(
            predict_classifier(&model, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn save_load_roundtrip() {
        let data = toy_data(8, 8);
        let config = NeuralConfig::Cnn(CnnConfig {
            filter_sizes: vec![3, 4],
            filters_per_size: 4,
            train: TrainingParams {
                epochs: 2,
                ..small_train(8)
            },
        });
        let model = train_classifier(&config, &data).unwrap();
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let loaded = TrainedClassifier::load(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded.labels, model.labels);
        assert_eq!(loaded.params.values(), model.params.values());
        let (l1, p1) = predict_classifier(&model, &data[3]).unwrap();
        let (l2, p2) = predict_classifier(&loaded, &data[3]).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn early_stopping_returns_before_cap_when_stalled() {
        // lr=0 -> held-out loss never improves after epoch 0
        let data = toy_data(10, 9);
        let config = NeuralConfig::Lstm(LstmConfig {
            hidden_size: 4,
            train: TrainingParams {
                epochs: 25,
                learning_rate: 0.0,
                patience: 2,
                ..small_train(9)
            },
        });
        let model = train_classifier(&config, &data).unwrap();
        assert!(model.log.len() < 25);
    }
}
