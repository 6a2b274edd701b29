//! Neural sentence classifiers (CNN, LSTM, C-LSTM) on top of a minimal
//! reverse-mode autodiff core.

pub mod arch;
mod params;
pub mod tape;
mod train;

pub use params::{AdamState, ParamSet};
pub use train::{
    predict_classifier, train_classifier, ArchKind, TrainedClassifier,
};

use serde::{Deserialize, Serialize};

/// Hyperparameters shared by all three architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Early-stopping patience on the held-out loss, in epochs.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        TrainingParams {
            dropout: 0.5,
            epochs: 25,
            learning_rate: 0.001,
            patience: 3,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub filter_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub train: TrainingParams,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            filter_sizes: vec![3, 4, 5],
            filters_per_size: 100,
            train: TrainingParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub train: TrainingParams,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            hidden_size: 100,
            train: TrainingParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CLstmConfig {
    pub kernel_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub hidden_size: usize,
    pub train: TrainingParams,
}

impl Default for CLstmConfig {
    fn default() -> Self {
        CLstmConfig {
            kernel_sizes: vec![2, 3, 4],
            filters_per_size: 150,
            hidden_size: 100,
            train: TrainingParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NeuralConfig {
    Cnn(CnnConfig),
    Lstm(LstmConfig),
    CLstm(CLstmConfig),
}

impl NeuralConfig {
    pub fn training(&self) -> &TrainingParams {
        match self {
            NeuralConfig::Cnn(c) => &c.train,
            NeuralConfig::Lstm(c) => &c.train,
            NeuralConfig::CLstm(c) => &c.train,
        }
    }

    pub fn training_mut(&mut self) -> &mut TrainingParams {
        match self {
            NeuralConfig::Cnn(c) => &mut c.train,
            NeuralConfig::Lstm(c) => &mut c.train,
            NeuralConfig::CLstm(c) => &mut c.train,
        }
    }
}
