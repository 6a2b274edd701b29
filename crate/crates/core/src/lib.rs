//! Dialect identification toolkit: corpus handling, five classifier
//! families, an evaluation harness and a synthetic corpus generator.

pub mod binio;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod neural;
pub mod pipeline;
pub mod svm;
pub mod synthgen;
pub mod textcat;

pub use corpus::{Corpus, CorpusStats, Document, LabeledSentence, VarietyLabel, VarietyStats};
pub use embeddings::{EmbeddingConfig, EmbeddingModel, SentenceMatrix};
pub use error::{Error, Result};
pub use eval::{
    ConfusionMatrix, EvaluationReport, ScoreReport, SentenceClassifierTrainer, SplitMode,
};
pub use neural::{CLstmConfig, CnnConfig, LstmConfig, NeuralConfig, TrainedClassifier, TrainingParams};
pub use pipeline::{Arch, ArchTrainer, PipelineConfig, SavedModel};
pub use svm::{GammaMode, SvmConfig, SvmModel};
pub use synthgen::SynthConfig;
pub use textcat::{NGramProfile, TextCatModel};
