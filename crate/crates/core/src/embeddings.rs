//! Subword-aware skip-gram embeddings with negative sampling, and sentence
//! representations built from them.
//!
//! A token's vector is its word vector (when in vocabulary) plus the sum of
//! its hashed character n-gram vectors, so out-of-vocabulary tokens still
//! receive a representation.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::{LabeledSentence, VarietyLabel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DIEM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub subword_min: usize,
    pub subword_max: usize,
    pub bucket_count: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Tokens seen fewer times than this are out-of-vocabulary.
    pub min_count: u64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            subword_min: 3,
            subword_max: 6,
            bucket_count: 1 << 20,
            epochs: 5,
            learning_rate: 0.05,
            min_count: 2,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 {
            return Err(Error::InvalidConfig(
                "dim, window and negatives must be >= 1".into(),
            ));
        }
        if !self.bucket_count.is_power_of_two() {
            return Err(Error::InvalidConfig(
                "bucket_count must be a power of two".into(),
            ));
        }
        if self.subword_min == 0 || self.subword_min > self.subword_max {
            return Err(Error::InvalidConfig("invalid subword n range".into()));
        }
        Ok(())
    }
}

/// Word vectors plus hashed subword vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub config: EmbeddingConfig,
    /// (token, frequency) by descending frequency, ties by token.
    pub vocab: Vec<(String, u64)>,
    token_index: HashMap<String, usize>,
    /// (vocab + buckets) x dim input vectors; bucket row b lives at vocab_len + b.
    pub input: Array2<f64>,
    /// vocab x dim output (context) vectors.
    pub output: Array2<f64>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hashed bucket indices for the character n-grams of `<token>`.
pub fn subword_buckets(token: &str, n_min: usize, n_max: usize, buckets: usize) -> Vec<usize> {
    let padded: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for n in n_min..=n_max {
        if padded.len() < n {
            break;
        }
        for window in padded.windows(n) {
            let gram: String = window.iter().collect();
            out.push((fnv1a(gram.as_bytes()) as usize) & (buckets - 1));
        }
    }
    out
}

// Loss for one positive pair against sampled negatives:
//   L = -log sigma(h . o_pos) - sum_i log sigma(-h . o_neg_i)
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn pair_loss(h: &[f64], pos: &[f64], negs: &[&[f64]]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut loss = -sigmoid(dot(h, pos)).max(1e-300).ln();
    for neg in negs {
        loss -= sigmoid(-dot(h, neg)).max(1e-300).ln();
    }
    loss
}

/// Gradients of `pair_loss` w.r.t. `h`, `pos` and each negative.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn pair_grads(
    h: &[f64],
    pos: &[f64],
    negs: &[&[f64]],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let dim = h.len();
    let mut dh = vec![0.0; dim];

    let g_pos = sigmoid(dot(h, pos)) - 1.0;
    let dpos: Vec<f64> = h.iter().map(|x| g_pos * x).collect();
    for (d, o) in dh.iter_mut().zip(pos) {
        *d += g_pos * o;
    }

    let mut dnegs = Vec::with_capacity(negs.len());
    for neg in negs {
        let g = sigmoid(dot(h, neg));
        dnegs.push(h.iter().map(|x| g * x).collect());
        for (d, o) in dh.iter_mut().zip(*neg) {
            *d += g * o;
        }
    }
    (dh, dpos, dnegs)
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn vocab_index(&self, token: &str) -> Option<usize> {
        self.token_index.get(token).copied()
    }

    /// Compose the vector for any token: word vector (if in vocabulary)
    /// plus the sum of its hashed subword vectors.
    pub fn embed_token(&self, token: &str) -> Array1<f64> {
        let mut v = Array1::zeros(self.config.dim);
        if let Some(idx) = self.vocab_index(token) {
            v += &self.input.row(idx);
        }
        let offset = self.vocab.len();
        for bucket in subword_buckets(
            token,
            self.config.subword_min,
            self.config.subword_max,
            self.config.bucket_count,
        ) {
            v += &self.input.row(offset + bucket);
        }
        v
    }

    /// Cosine-similar vocabulary neighbors of `token`.
    pub fn nearest_neighbors(&self, token: &str, top: usize) -> Vec<(String, f64)> {
        let query = self.embed_token(token);
        let qn = query.dot(&query).sqrt();
        let mut scored: Vec<(String, f64)> = self
            .vocab
            .iter()
            .filter(|(w, _)| w != token)
            .map(|(w, _)| {
                let v = self.embed_token(w);
                let vn = v.dot(&v).sqrt();
                let cos = if qn > 0.0 && vn > 0.0 {
                    query.dot(&v) / (qn * vn)
                } else {
                    0.0
                };
                (w.clone(), cos)
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored.truncate(top);
        scored
    }

    pub fn save<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(w, VERSION)?;
        let cfg = &self.config;
        for v in [
            cfg.dim,
            cfg.window,
            cfg.negatives,
            cfg.subword_min,
            cfg.subword_max,
            cfg.bucket_count,
            cfg.epochs,
        ] {
            binio::write_u64(w, v as u64)?;
        }
        binio::write_f64(w, cfg.learning_rate)?;
        binio::write_u64(w, cfg.min_count)?;
        binio::write_u64(w, cfg.seed)?;
        binio::write_u64(w, self.vocab.len() as u64)?;
        for (token, freq) in &self.vocab {
            binio::write_str(w, token)?;
            binio::write_u64(w, *freq)?;
        }
        binio::write_f64_slice(w, self.input.as_slice().unwrap())?;
        binio::write_f64_slice(w, self.output.as_slice().unwrap())?;
        Ok(())
    }

    pub fn load<R: std::io::Read>(r: &mut R) -> Result<Self> {
        binio::check_magic(r, MAGIC, "embedding")?;
        let version = binio::read_u32(r)?;
        if version != VERSION {
            return Err(Error::Model(format!(
                "unsupported embedding model version {version}"
            )));
        }
        let mut u = || -> Result<usize> { Ok(binio::read_u64(r)? as usize) };
        let dim = u()?;
        let window = u()?;
        let negatives = u()?;
        let subword_min = u()?;
        let subword_max = u()?;
        let bucket_count = u()?;
        let epochs = u()?;
        let learning_rate = binio::read_f64(r)?;
        let min_count = binio::read_u64(r)?;
        let seed = binio::read_u64(r)?;
        let vocab_len = binio::read_u64(r)? as usize;
        let mut vocab = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let token = binio::read_str(r)?;
            let freq = binio::read_u64(r)?;
            vocab.push((token, freq));
        }
        let input = binio::read_f64_vec(r)?;
        let output = binio::read_f64_vec(r)?;
        let config = EmbeddingConfig {
            dim,
            window,
            negatives,
            subword_min,
            subword_max,
            bucket_count,
            epochs,
            learning_rate,
            min_count,
            seed,
        };
        let rows = vocab_len + bucket_count;
        let input = Array2::from_shape_vec((rows, dim), input)
            .map_err(|_| Error::Model("input matrix size mismatch".into()))?;
        let output = Array2::from_shape_vec((vocab_len, dim), output)
            .map_err(|_| Error::Model("output matrix size mismatch".into()))?;
        let token_index = vocab
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
        Ok(EmbeddingModel {
            config,
            vocab,
            token_index,
            input,
            output,
        })
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.save(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load(&mut BufReader::new(file))
    }
}

/// Train skip-gram-with-negative-sampling embeddings on labeled sentences.
///
/// Single-threaded and fully seeded: identical seed and data give a
/// bit-identical model. Mean loss on a held-out 1% sentence sample is
/// logged once per epoch.
pub fn train_embeddings(
    sentences: &[LabeledSentence],
    config: &EmbeddingConfig,
) -> Result<EmbeddingModel> {
    config.validate()?;
    if sentences.is_empty() {
        return Err(Error::EmptyInput("no sentences to train on".into()));
    }

    let mut freqs: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for t in &s.tokens {
            *freqs.entry(t).or_insert(0) += 1;
        }
    }
    let mut vocab: Vec<(String, u64)> = freqs
        .into_iter()
        .filter(|(_, f)| *f >= config.min_count)
        .map(|(t, f)| (t.to_string(), f))
        .collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if vocab.is_empty() {
        return Err(Error::EmptyInput(format!(
            "empty vocabulary: no token reaches min_count = {}",
            config.min_count
        )));
    }
    let token_index: HashMap<String, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (t.clone(), i))
        .collect();

    // Per-word subword bucket lists, computed once.
    let subwords: Vec<Vec<usize>> = vocab
        .iter()
        .map(|(t, _)| {
            subword_buckets(t, config.subword_min, config.subword_max, config.bucket_count)
        })
        .collect();

    // Unigram^0.75 cumulative table for negative sampling.
    let mut cumulative = Vec::with_capacity(vocab.len());
    let mut acc = 0.0;
    for (_, f) in &vocab {
        acc += (*f as f64).powf(0.75);
        cumulative.push(acc);
    }

    let vocab_len = vocab.len();
    let dim = config.dim;
    let rows = vocab_len + config.bucket_count;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let bound = 0.5 / dim as f64;
    let mut input = Array2::zeros((rows, dim));
    for v in input.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    let mut output: Array2<f64> = Array2::zeros((vocab_len, dim));

    // Sentence id sequences with OOV tokens dropped.
    let ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .filter_map(|t| token_index.get(t.as_str()).copied())
                .collect()
        })
        .collect();

    // Hold out ~1% of sentences as a loss monitor when there is room.
    let n = ids.len();
    let n_monitor = if n > 200 { n / 100 } else { 0 };
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut rng);
    let (monitor_idx, train_idx) = order.split_at(n_monitor);
    let monitor_idx = monitor_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    if train_idx.iter().all(|&i| ids[i].len() < 2) {
        return Err(Error::EmptyInput(
            "no training sentence has two in-vocabulary tokens".into(),
        ));
    }

    let sample_negative = |rng: &mut ChaCha20Rng, exclude: usize| -> usize {
        for _ in 0..8 {
            let x = rng.gen_range(0.0..acc);
            let idx = cumulative.partition_point(|&c| c <= x).min(vocab_len - 1);
            if idx != exclude {
                return idx;
            }
        }
        (exclude + 1) % vocab_len
    };

    let compose = |input: &Array2<f64>, word: usize| -> Vec<f64> {
        let mut h = input.row(word).to_vec();
        for &b in &subwords[word] {
            for (hv, iv) in h.iter_mut().zip(input.row(vocab_len + b)) {
                *hv += iv;
            }
        }
        h
    };

    let lr = config.learning_rate;
    for epoch in 0..config.epochs {
        for &si in &train_idx {
            let sent = &ids[si];
            for (i, &center) in sent.iter().enumerate() {
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window + 1).min(sent.len());
                for j in lo..hi {
                    if j == i {
                        continue;
                    }
                    let context = sent[j];
                    let h = compose(&input, center);

                    let mut dh = vec![0.0; dim];
                    // positive
                    let g = sigmoid(dot_row(&h, &output, context)) - 1.0;
                    for (d, o) in dh.iter_mut().zip(output.row(context)) {
                        *d += g * o;
                    }
                    axpy_row(&mut output, context, -lr * g, &h);
                    // negatives
                    for _ in 0..config.negatives {
                        let neg = sample_negative(&mut rng, context);
                        let g = sigmoid(dot_row(&h, &output, neg));
                        for (d, o) in dh.iter_mut().zip(output.row(neg)) {
                            *d += g * o;
                        }
                        axpy_row(&mut output, neg, -lr * g, &h);
                    }
                    // distribute dh over the word vector and its subwords
                    axpy_row(&mut input, center, -lr, &dh);
                    for &b in &subwords[center] {
                        axpy_row(&mut input, vocab_len + b, -lr, &dh);
                    }
                }
            }
        }

        if !monitor_idx.is_empty() {
            let loss = monitor_loss(
                &ids,
                &monitor_idx,
                &input,
                &output,
                &subwords,
                vocab_len,
                config,
            );
            log::info!("embeddings epoch {epoch}: held-out loss {loss:.6}");
        }
    }

    Ok(EmbeddingModel {
        config: config.clone(),
        vocab,
        token_index,
        input,
        output,
    })
}

fn dot_row(h: &[f64], m: &Array2<f64>, row: usize) -> f64 {
    h.iter().zip(m.row(row)).map(|(a, b)| a * b).sum()
}

fn axpy_row(m: &mut Array2<f64>, row: usize, alpha: f64, x: &[f64]) {
    for (v, xv) in m.row_mut(row).iter_mut().zip(x) {
        *v += alpha * xv;
    }
}

fn shuffle(items: &mut [usize], rng: &mut ChaCha20Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

#[allow(clippy::too_many_arguments)]
fn monitor_loss(
    ids: &[Vec<usize>],
    monitor_idx: &[usize],
    input: &Array2<f64>,
    output: &Array2<f64>,
    subwords: &[Vec<usize>],
    vocab_len: usize,
    config: &EmbeddingConfig,
) -> f64 {
    // Deterministic negatives so the curve is comparable across epochs.
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x6d6f6e69746f72);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for &si in monitor_idx {
        let sent = &ids[si];
        for (i, &center) in sent.iter().enumerate() {
            let lo = i.saturating_sub(config.window);
            let hi = (i + config.window + 1).min(sent.len());
            for j in lo..hi {
                if j == i {
                    continue;
                }
                let context = sent[j];
                let mut h = input.row(center).to_vec();
                for &b in &subwords[center] {
                    for (hv, iv) in h.iter_mut().zip(input.row(vocab_len + b)) {
                        *hv += iv;
                    }
                }
                let negs: Vec<usize> = (0..config.negatives)
                    .map(|_| rng.gen_range(0..vocab_len))
                    .collect();
                let neg_rows: Vec<Vec<f64>> =
                    negs.iter().map(|&n| output.row(n).to_vec()).collect();
                let neg_refs: Vec<&[f64]> = neg_rows.iter().map(|v| v.as_slice()).collect();
                total += pair_loss(&h, &output.row(context).to_vec(), &neg_refs);
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// L x dim sentence matrix with a validity mask.
#[derive(Debug, Clone)]
pub struct SentenceMatrix {
    pub rows: Array2<f64>,
    pub mask: Vec<bool>,
    pub label: VarietyLabel,
}

impl SentenceMatrix {
    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Embed a sentence into an `max_len x dim` matrix; truncation keeps the
/// sentence prefix, padding rows are zero with mask false.
pub fn embed_sentence(
    model: &EmbeddingModel,
    sentence: &LabeledSentence,
    max_len: usize,
) -> SentenceMatrix {
    let dim = model.dim();
    let valid = sentence.tokens.len().min(max_len);
    let mut rows = Array2::zeros((max_len, dim));
    let mut mask = vec![false; max_len];
    for (i, token) in sentence.tokens.iter().take(valid).enumerate() {
        rows.row_mut(i).assign(&model.embed_token(token));
        mask[i] = true;
    }
    SentenceMatrix {
        rows,
        mask,
        label: sentence.variety.clone(),
    }
}

/// Arithmetic mean over the valid rows only.
pub fn mean_sentence_vector(matrix: &SentenceMatrix) -> Result<Array1<f64>> {
    let valid = matrix.valid_len();
    if valid == 0 {
        return Err(Error::EmptyInput("all rows of the matrix are masked".into()));
    }
    let mut mean = Array1::zeros(matrix.rows.ncols());
    for (i, row) in matrix.rows.rows().into_iter().enumerate() {
        if matrix.mask[i] {
            mean += &row;
        }
    }
    Ok(mean / valid as f64)
}
