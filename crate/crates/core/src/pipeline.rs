//! End-to-end pipelines: one trainer per model family, combined model
//! files for the command line, and per-line classification.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::binio;
use crate::corpus::{LabeledSentence, VarietyLabel};
use crate::embeddings::{
    embed_sentence, mean_sentence_vector, train_embeddings, EmbeddingConfig, EmbeddingModel,
};
use crate::error::{Error, Result};
use crate::eval::SentenceClassifierTrainer;
use crate::neural::{
    predict_classifier, train_classifier, NeuralConfig, TrainedClassifier,
};
use crate::svm::{predict_svm, train_svm, SvmConfig, SvmModel};
use crate::textcat::{TextCatModel, DEFAULT_N_MAX, DEFAULT_N_MIN, DEFAULT_PROFILE_SIZE};

const MAGIC: &[u8; 4] = b"DIPM";
const VERSION: u32 = 1;

/// The five model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    TextCat,
    Svm,
    Cnn,
    Lstm,
    CLstm,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::TextCat, Arch::Svm, Arch::Cnn, Arch::Lstm, Arch::CLstm];

    pub fn tag(&self) -> &'static str {
        match self {
            Arch::TextCat => "textcat",
            Arch::Svm => "svm",
            Arch::Cnn => "cnn",
            Arch::Lstm => "lstm",
            Arch::CLstm => "clstm",
        }
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "textcat" => Ok(Arch::TextCat),
            "svm" => Ok(Arch::Svm),
            "cnn" => Ok(Arch::Cnn),
            "lstm" => Ok(Arch::Lstm),
            "clstm" => Ok(Arch::CLstm),
            other => Err(Error::InvalidConfig(format!(
                "unknown architecture {other:?}; valid values: textcat, svm, cnn, lstm, clstm"
            ))),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// All randomness is derived from one base seed, a run index and a
/// component tag.
pub fn derive_seed(base: u64, run: usize, tag: &str) -> u64 {
    base ^ (run as u64).wrapping_mul(0x9e3779b97f4a7c15) ^ fnv1a(tag.as_bytes())
}

/// Hyperparameters for every family, bundled for the harness and CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub profile_size: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub embedding: EmbeddingConfig,
    pub max_len: usize,
    pub svm: SvmConfig,
    pub cnn: crate::neural::CnnConfig,
    pub lstm: crate::neural::LstmConfig,
    pub clstm: crate::neural::CLstmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            profile_size: DEFAULT_PROFILE_SIZE,
            n_min: DEFAULT_N_MIN,
            n_max: DEFAULT_N_MAX,
            // 2^16 hash buckets keep model files desk-sized; raise for
            // large corpora.
            embedding: EmbeddingConfig {
                bucket_count: 1 << 16,
                ..Default::default()
            },
            max_len: 60,
            svm: SvmConfig::default(),
            cnn: crate::neural::CnnConfig::default(),
            lstm: crate::neural::LstmConfig::default(),
            clstm: crate::neural::CLstmConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialize");
        format!("{:016x}", fnv1a(json.as_bytes()))
    }

    fn neural(&self, arch: Arch) -> Option<NeuralConfig> {
        match arch {
            Arch::Cnn => Some(NeuralConfig::Cnn(self.cnn.clone())),
            Arch::Lstm => Some(NeuralConfig::Lstm(self.lstm.clone())),
            Arch::CLstm => Some(NeuralConfig::CLstm(self.clstm.clone())),
            _ => None,
        }
    }
}

fn sentence_text(s: &LabeledSentence) -> String {
    s.tokens.join(" ")
}

/// Lowercased, NFC-normalized whitespace tokens of a raw input line.
pub fn normalize_line(line: &str) -> Vec<String> {
    line.nfc()
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn train_textcat(
    sentences: &[&LabeledSentence],
    cfg: &PipelineConfig,
) -> Result<TextCatModel> {
    let mut groups: BTreeMap<VarietyLabel, Vec<String>> = BTreeMap::new();
    for s in sentences {
        groups
            .entry(s.variety.clone())
            .or_default()
            .push(sentence_text(s));
    }
    let borrowed: BTreeMap<VarietyLabel, Vec<&str>> = groups
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(String::as_str).collect()))
        .collect();
    TextCatModel::train(&borrowed, cfg.n_min, cfg.n_max, cfg.profile_size)
}

fn train_embedding_stage(
    sentences: &[&LabeledSentence],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    let owned: Vec<LabeledSentence> = sentences.iter().map(|&s| s.clone()).collect();
    let config = EmbeddingConfig {
        seed: derive_seed(seed, 0, "embeddings"),
        ..cfg.embedding.clone()
    };
    train_embeddings(&owned, &config)
}

fn mean_vectors(
    embeddings: &EmbeddingModel,
    sentences: &[&LabeledSentence],
    max_len: usize,
) -> Result<Vec<Array1<f64>>> {
    sentences
        .iter()
        .map(|s| mean_sentence_vector(&embed_sentence(embeddings, s, max_len)))
        .collect()
}

/// A model family trained end to end, ready to serialize or classify.
#[derive(Debug, Clone)]
pub enum SavedModel {
    TextCat(TextCatModel),
    Svm {
        embeddings: EmbeddingModel,
        svm: SvmModel,
        max_len: usize,
    },
    Neural {
        embeddings: EmbeddingModel,
        net: TrainedClassifier,
        max_len: usize,
    },
}

impl SavedModel {
    pub fn arch(&self) -> Arch {
        match self {
            SavedModel::TextCat(_) => Arch::TextCat,
            SavedModel::Svm { .. } => Arch::Svm,
            SavedModel::Neural { net, .. } => match net.arch {
                crate::neural::ArchKind::Cnn => Arch::Cnn,
                crate::neural::ArchKind::Lstm => Arch::Lstm,
                crate::neural::ArchKind::CLstm => Arch::CLstm,
            },
        }
    }

    pub fn embeddings(&self) -> Option<&EmbeddingModel> {
        match self {
            SavedModel::TextCat(_) => None,
            SavedModel::Svm { embeddings, .. } => Some(embeddings),
            SavedModel::Neural { embeddings, .. } => Some(embeddings),
        }
    }

    /// TextCat models are directories; the others are single files.
    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            SavedModel::TextCat(model) => model.save(path),
            SavedModel::Svm {
                embeddings,
                svm,
                max_len,
            } => {
                let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
                let mut w = BufWriter::new(file);
                let io = |e| Error::io(path, e);
                w.write_all(MAGIC).map_err(io)?;
                binio::write_u32(&mut w, VERSION).map_err(io)?;
                binio::write_str(&mut w, "svm").map_err(io)?;
                binio::write_u64(&mut w, *max_len as u64).map_err(io)?;
                embeddings.save(&mut w).map_err(io)?;
                svm.save(&mut w).map_err(io)
            }
            SavedModel::Neural {
                embeddings,
                net,
                max_len,
            } => {
                let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
                let mut w = BufWriter::new(file);
                let io = |e| Error::io(path, e);
                w.write_all(MAGIC).map_err(io)?;
                binio::write_u32(&mut w, VERSION).map_err(io)?;
                binio::write_str(&mut w, net.arch.tag()).map_err(io)?;
                binio::write_u64(&mut w, *max_len as u64).map_err(io)?;
                embeddings.save(&mut w).map_err(io)?;
                net.save(&mut w).map_err(io)
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            return Ok(SavedModel::TextCat(TextCatModel::load(path)?));
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        binio::check_magic(&mut r, MAGIC, "pipeline")?;
        let version = binio::read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Model(format!(
                "unsupported pipeline model version {version}"
            )));
        }
        let tag = binio::read_str(&mut r)?;
        let max_len = binio::read_u64(&mut r)? as usize;
        let embeddings = EmbeddingModel::load(&mut r)?;
        match tag.as_str() {
            "svm" => Ok(SavedModel::Svm {
                embeddings,
                svm: SvmModel::load(&mut r)?,
                max_len,
            }),
            "cnn" | "lstm" | "clstm" => Ok(SavedModel::Neural {
                embeddings,
                net: TrainedClassifier::load(&mut r)?,
                max_len,
            }),
            other => Err(Error::Model(format!("unknown model tag {other:?}"))),
        }
    }

    /// Rank all labels for one tokenized sentence, best first, with
    /// probabilities summing to 1.
    pub fn classify_tokens(&self, tokens: &[String]) -> Result<Vec<(VarietyLabel, f64)>> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("no tokens to classify".into()));
        }
        match self {
            SavedModel::TextCat(model) => Ok(model
                .classify(&tokens.join(" "))?
                .into_iter()
                .map(|(label, _, p)| (label, p))
                .collect()),
            SavedModel::Svm {
                embeddings,
                svm,
                max_len,
            } => {
                let sentence = tokens_to_sentence(tokens);
                let matrix = embed_sentence(embeddings, &sentence, *max_len);
                let mean = mean_sentence_vector(&matrix)?;
                let (_, values) = predict_svm(svm, mean.as_slice().unwrap())?;
                Ok(rank_with_softmax(&svm.classes, &values))
            }
            SavedModel::Neural {
                embeddings,
                net,
                max_len,
            } => {
                let sentence = tokens_to_sentence(tokens);
                let matrix = embed_sentence(embeddings, &sentence, *max_len);
                let (_, probs) = predict_classifier(net, &matrix)?;
                let mut ranked: Vec<(VarietyLabel, f64)> = net
                    .labels
                    .iter()
                    .cloned()
                    .zip(probs)
                    .collect();
                ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
                Ok(ranked)
            }
        }
    }
}

fn tokens_to_sentence(tokens: &[String]) -> LabeledSentence {
    LabeledSentence {
        tokens: tokens.to_vec(),
        variety: VarietyLabel::new("X").expect("placeholder label"),
        doc_id: String::new(),
    }
}

/// Softmax over decision values, ranked descending, ties by label.
fn rank_with_softmax(labels: &[VarietyLabel], values: &[f64]) -> Vec<(VarietyLabel, f64)> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut ranked: Vec<(VarietyLabel, f64)> = labels
        .iter()
        .cloned()
        .zip(exps.into_iter().map(|e| e / total))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Train one family on a full dataset (used by `train` on the CLI).
pub fn train_arch(
    arch: Arch,
    dataset: &[LabeledSentence],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<SavedModel> {
    let refs: Vec<&LabeledSentence> = dataset.iter().collect();
    match arch {
        Arch::TextCat => Ok(SavedModel::TextCat(train_textcat(&refs, cfg)?)),
        Arch::Svm => {
            let embeddings = train_embedding_stage(&refs, cfg, seed)?;
            let samples = mean_vectors(&embeddings, &refs, cfg.max_len)?;
            let labels: Vec<VarietyLabel> = refs.iter().map(|s| s.variety.clone()).collect();
            let svm = train_svm(&samples, &labels, &cfg.svm)?;
            Ok(SavedModel::Svm {
                embeddings,
                svm,
                max_len: cfg.max_len,
            })
        }
        Arch::Cnn | Arch::Lstm | Arch::CLstm => {
            let embeddings = train_embedding_stage(&refs, cfg, seed)?;
            let mut neural = cfg.neural(arch).expect("neural arch");
            neural.training_mut().seed = derive_seed(seed, 0, arch.tag());
            let matrices: Vec<_> = refs
                .iter()
                .map(|s| embed_sentence(&embeddings, s, cfg.max_len))
                .collect();
            let net = train_classifier(&neural, &matrices)?;
            Ok(SavedModel::Neural {
                embeddings,
                net,
                max_len: cfg.max_len,
            })
        }
    }
}

/// Evaluation-harness adapter: trains the family on the train split and
/// predicts the test split.
pub struct ArchTrainer {
    pub arch: Arch,
    pub config: PipelineConfig,
}

impl SentenceClassifierTrainer for ArchTrainer {
    fn name(&self) -> String {
        self.arch.tag().to_string()
    }

    fn train_and_predict(
        &self,
        train: &[&LabeledSentence],
        test: &[&LabeledSentence],
        seed: u64,
    ) -> Result<Vec<VarietyLabel>> {
        let cfg = &self.config;
        match self.arch {
            Arch::TextCat => {
                let model = train_textcat(train, cfg)?;
                test.iter()
                    .map(|s| model.predict(&sentence_text(s)))
                    .collect()
            }
            Arch::Svm => {
                let embeddings = train_embedding_stage(train, cfg, seed)?;
                let samples = mean_vectors(&embeddings, train, cfg.max_len)?;
                let labels: Vec<VarietyLabel> =
                    train.iter().map(|s| s.variety.clone()).collect();
                let model = train_svm(&samples, &labels, &cfg.svm)?;
                let queries = mean_vectors(&embeddings, test, cfg.max_len)?;
                queries
                    .iter()
                    .map(|q| Ok(predict_svm(&model, q.as_slice().unwrap())?.0))
                    .collect()
            }
            Arch::Cnn | Arch::Lstm | Arch::CLstm => {
                let embeddings = train_embedding_stage(train, cfg, seed)?;
                let mut neural = cfg.neural(self.arch).expect("neural arch");
                neural.training_mut().seed = derive_seed(seed, 0, self.arch.tag());
                let matrices: Vec<_> = train
                    .iter()
                    .map(|s| embed_sentence(&embeddings, s, cfg.max_len))
                    .collect();
                let net = train_classifier(&neural, &matrices)?;
                test.iter()
                    .map(|s| {
                        let matrix = embed_sentence(&embeddings, s, cfg.max_len);
                        Ok(predict_classifier(&net, &matrix)?.0)
                    })
                    .collect()
            }
        }
    }
}
