//! Synthetic dialect corpora from per-class order-2 character Markov
//! chains, with a divergence knob interpolating between one shared
//! transition table and fully class-specific tables.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, VarietyLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub sentences_per_class: usize,
    pub tokens_per_sentence: (usize, usize),
    pub token_length: (usize, usize),
    pub alphabet: String,
    /// 0 = all classes share one character distribution,
    /// 1 = fully class-specific transition tables.
    pub divergence: f64,
    pub sentences_per_document: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 6,
            sentences_per_class: 500,
            tokens_per_sentence: (6, 12),
            token_length: (5, 15),
            alphabet: "aehiklmnopstuwxy".into(),
            divergence: 1.0,
            sentences_per_document: 25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig("need at least 2 classes".into()));
        }
        if self.alphabet.chars().count() < 3 {
            return Err(Error::InvalidConfig(
                "alphabet needs at least 3 symbols".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.divergence) {
            return Err(Error::InvalidConfig("divergence must be in [0, 1]".into()));
        }
        if self.sentences_per_class == 0
            || self.tokens_per_sentence.0 == 0
            || self.tokens_per_sentence.0 > self.tokens_per_sentence.1
            || self.token_length.0 == 0
            || self.token_length.0 > self.token_length.1
        {
            return Err(Error::InvalidConfig("invalid size ranges".into()));
        }
        Ok(())
    }
}

/// Labels VA, VB, ... VZ, then WA, WB, ...
pub fn class_label(index: usize) -> VarietyLabel {
    let first = (b'V' + (index / 26) as u8) as char;
    let second = (b'A' + (index % 26) as u8) as char;
    VarietyLabel::new(&format!("{first}{second}")).expect("generated label")
}

/// One transition table: for every (prev, cur) context, a distribution
/// over the next character.
struct TransitionTable {
    /// [prev * a + cur][next]
    rows: Vec<Vec<f64>>,
    alphabet: Vec<char>,
}

impl TransitionTable {
    /// Sharply peaked random distributions: probability mass decays
    /// geometrically along a per-context random permutation of the
    /// alphabet, so different seeds give visibly different statistics.
    fn random(alphabet: &[char], rng: &mut ChaCha20Rng) -> Self {
        let a = alphabet.len();
        let mut rows = Vec::with_capacity(a * a);
        for _ in 0..a * a {
            let mut perm: Vec<usize> = (0..a).collect();
            for i in (1..a).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let mut row = vec![0.0; a];
            let mut weight = 1.0;
            for &idx in &perm {
                row[idx] = weight;
                weight *= 0.35;
            }
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            rows.push(row);
        }
        TransitionTable {
            rows,
            alphabet: alphabet.to_vec(),
        }
    }

    fn blend(shared: &TransitionTable, unique: &TransitionTable, divergence: f64) -> Self {
        let rows = shared
            .rows
            .iter()
            .zip(&unique.rows)
            .map(|(s, u)| {
                s.iter()
                    .zip(u)
                    .map(|(sv, uv)| (1.0 - divergence) * sv + divergence * uv)
                    .collect()
            })
            .collect();
        TransitionTable {
            rows,
            alphabet: shared.alphabet.clone(),
        }
    }

    fn sample_next(&self, prev: usize, cur: usize, rng: &mut ChaCha20Rng) -> usize {
        let row = &self.rows[prev * self.alphabet.len() + cur];
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if x < acc {
                return i;
            }
        }
        row.len() - 1
    }
}

/// Generate a labeled corpus; deterministic by seed.
pub fn generate(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let alphabet: Vec<char> = config.alphabet.chars().collect();

    let mut shared_rng = ChaCha20Rng::seed_from_u64(config.seed);
    let shared = TransitionTable::random(&alphabet, &mut shared_rng);

    let mut documents = Vec::new();
    for class in 0..config.classes {
        let label = class_label(class);
        let mut class_rng =
            ChaCha20Rng::seed_from_u64(config.seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(class as u64 + 1)));
        let unique = TransitionTable::random(&alphabet, &mut class_rng);
        let table = TransitionTable::blend(&shared, &unique, config.divergence);

        let mut sentences = Vec::with_capacity(config.sentences_per_class);
        for _ in 0..config.sentences_per_class {
            let n_tokens =
                class_rng.gen_range(config.tokens_per_sentence.0..=config.tokens_per_sentence.1);
            let tokens: Vec<String> = (0..n_tokens)
                .map(|_| {
                    let len = class_rng.gen_range(config.token_length.0..=config.token_length.1);
                    let mut prev = class_rng.gen_range(0..alphabet.len());
                    let mut cur = class_rng.gen_range(0..alphabet.len());
                    let mut token = String::new();
                    token.push(alphabet[prev]);
                    token.push(alphabet[cur]);
                    while token.chars().count() < len {
                        let next = table.sample_next(prev, cur, &mut class_rng);
                        token.push(alphabet[next]);
                        prev = cur;
                        cur = next;
                    }
                    token
                })
                .collect();
            sentences.push(format!("{}.", tokens.join(" ")));
        }

        for (doc_idx, chunk) in sentences.chunks(config.sentences_per_document).enumerate() {
            documents.push(Document {
                id: format!("{label}-{doc_idx:04}"),
                variety: label.clone(),
                text: chunk.join(" "),
                source: "synthetic".into(),
            });
        }
    }
    Ok(Corpus { documents })
}

/// Write the corpus as text files plus a manifest and a JSON sidecar with
/// the generating config, all consumable by `load_corpus`.
pub fn write_corpus(corpus: &Corpus, config: &SynthConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("# id\tlabel\tpath\tsource\n");
    for doc in &corpus.documents {
        let file = format!("{}.txt", doc.id);
        let path = dir.join(&file);
        std::fs::write(&path, &doc.text).map_err(|e| Error::io(path, e))?;
        manifest.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            doc.id, doc.variety, file, doc.source
        ));
    }
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest).map_err(|e| Error::io(path, e))?;
    let path = dir.join("synth_config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap())
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}
