//! Character n-gram profiles with out-of-place distance classification.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::VarietyLabel;
use crate::error::{Error, Result};

pub const DEFAULT_N_MIN: usize = 2;
pub const DEFAULT_N_MAX: usize = 5;
pub const DEFAULT_PROFILE_SIZE: usize = 2000;

/// Token padding sentinel; printable so it survives profile dumps.
const PAD: char = '_';

/// A ranked table of the most frequent character n-grams of one text or
/// one variety. Entry order is the rank: index 0 is the most frequent
/// n-gram, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramProfile {
    pub n_min: usize,
    pub n_max: usize,
    pub profile_size: usize,
    /// (ngram, count) in rank order; length <= profile_size.
    pub entries: Vec<(String, u64)>,
    ranks: HashMap<String, usize>,
}

impl NGramProfile {
    pub fn rank(&self, ngram: &str) -> Option<usize> {
        self.ranks.get(ngram).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Count all character n-grams of lengths `n_min..=n_max` in `text`.
///
/// Each whitespace-separated token is padded with one `_` on each side
/// before extraction; counts are summed across tokens.
pub fn extract_ngrams(text: &str, n_min: usize, n_max: usize) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for token in text.split_whitespace() {
        let mut padded: Vec<char> = Vec::with_capacity(token.chars().count() + 2);
        padded.push(PAD);
        padded.extend(token.chars());
        padded.push(PAD);
        for n in n_min..=n_max {
            if padded.len() < n {
                continue;
            }
            for window in padded.windows(n) {
                *counts.entry(window.iter().collect()).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Build a ranked profile from a collection of texts.
pub fn build_profile(texts: &[&str], profile_size: usize) -> Result<NGramProfile> {
    build_profile_range(texts, DEFAULT_N_MIN, DEFAULT_N_MAX, profile_size)
}

pub fn build_profile_range(
    texts: &[&str],
    n_min: usize,
    n_max: usize,
    profile_size: usize,
) -> Result<NGramProfile> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in texts {
        for (ngram, c) in extract_ngrams(text, n_min, n_max) {
            *counts.entry(ngram).or_insert(0) += c;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyInput("no n-grams extracted".into()));
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(profile_size);
    let ranks = entries
        .iter()
        .enumerate()
        .map(|(i, (g, _))| (g.clone(), i))
        .collect();
    Ok(NGramProfile {
        n_min,
        n_max,
        profile_size,
        entries,
        ranks,
    })
}

/// Sum of rank displacements of the query's n-grams relative to the
/// reference. An n-gram absent from the reference contributes the
/// reference's `profile_size` as penalty.
pub fn out_of_place_distance(query: &NGramProfile, reference: &NGramProfile) -> u64 {
    debug_assert_eq!(query.n_min, reference.n_min);
    debug_assert_eq!(query.n_max, reference.n_max);
    query
        .entries
        .iter()
        .enumerate()
        .map(|(q_rank, (ngram, _))| match reference.rank(ngram) {
            Some(r_rank) => (q_rank as i64 - r_rank as i64).unsigned_abs(),
            None => reference.profile_size as u64,
        })
        .sum()
}

/// One ranked profile per variety.
#[derive(Debug, Clone)]
pub struct TextCatModel {
    pub profiles: BTreeMap<VarietyLabel, NGramProfile>,
    pub profile_size: usize,
    pub n_min: usize,
    pub n_max: usize,
}

#[derive(Serialize, Deserialize)]
struct TextCatManifest {
    n_min: usize,
    n_max: usize,
    profile_size: usize,
    labels: Vec<String>,
}

impl TextCatModel {
    /// Train one profile per variety from `(label, texts)` groups.
    pub fn train(
        groups: &BTreeMap<VarietyLabel, Vec<&str>>,
        n_min: usize,
        n_max: usize,
        profile_size: usize,
    ) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::InvalidConfig(
                "textcat needs at least 2 varieties".into(),
            ));
        }
        let mut profiles = BTreeMap::new();
        for (label, texts) in groups {
            profiles.insert(
                label.clone(),
                build_profile_range(texts, n_min, n_max, profile_size)?,
            );
        }
        Ok(TextCatModel {
            profiles,
            profile_size,
            n_min,
            n_max,
        })
    }

    /// Rank varieties by out-of-place distance to `text`'s profile.
    ///
    /// Returns `(label, distance, membership probability)` sorted by
    /// ascending distance, ties broken by label order. Probabilities are
    /// `exp(-d/T)` normalized, with temperature `T = profile_size`.
    pub fn classify(&self, text: &str) -> Result<Vec<(VarietyLabel, u64, f64)>> {
        if text.split_whitespace().next().is_none() {
            return Err(Error::EmptyInput("cannot classify empty text".into()));
        }
        let query = build_profile_range(&[text], self.n_min, self.n_max, self.profile_size)?;
        let mut ranked: Vec<(VarietyLabel, u64)> = self
            .profiles
            .iter()
            .map(|(label, profile)| (label.clone(), out_of_place_distance(&query, profile)))
            .collect();
        ranked.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));

        let temperature = self.profile_size as f64;
        let weights: Vec<f64> = ranked
            .iter()
            .map(|(_, d)| (-(*d as f64) / temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        Ok(ranked
            .into_iter()
            .zip(weights)
            .map(|((label, d), w)| (label, d, w / total))
            .collect())
    }

    pub fn predict(&self, text: &str) -> Result<VarietyLabel> {
        Ok(self.classify(text)?.remove(0).0)
    }

    /// Write one `<LABEL>.profile` file per variety (lines of
    /// `rank<TAB>ngram<TAB>count`) plus a `textcat.json` manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (label, profile) in &self.profiles {
            let mut out = String::new();
            for (rank, (ngram, count)) in profile.entries.iter().enumerate() {
                out.push_str(&format!("{rank}\t{ngram}\t{count}\n"));
            }
            let path = dir.join(format!("{label}.profile"));
            std::fs::write(&path, out).map_err(|e| Error::io(path, e))?;
        }
        let manifest = TextCatManifest {
            n_min: self.n_min,
            n_max: self.n_max,
            profile_size: self.profile_size,
            labels: self.profiles.keys().map(|l| l.to_string()).collect(),
        };
        let path = dir.join("textcat.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
            .map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("textcat.json");
        let raw = std::fs::read_to_string(&manifest_path)
            .map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: TextCatManifest = serde_json::from_str(&raw)
            .map_err(|e| Error::Model(format!("bad textcat manifest: {e}")))?;
        let mut profiles = BTreeMap::new();
        for label in &manifest.labels {
            let label = VarietyLabel::new(label)?;
            let path = dir.join(format!("{label}.profile"));
            let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut entries = Vec::new();
            for (i, line) in raw.lines().enumerate() {
                let mut fields = line.split('\t');
                let rank: usize = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| Error::Model(format!("{}: bad rank on line {}", path.display(), i + 1)))?;
                let ngram = fields
                    .next()
                    .ok_or_else(|| Error::Model(format!("{}: missing ngram on line {}", path.display(), i + 1)))?;
                let count: u64 = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| Error::Model(format!("{}: bad count on line {}", path.display(), i + 1)))?;
                if rank != i {
                    return Err(Error::Model(format!(
                        "{}: rank {} out of order on line {}",
                        path.display(),
                        rank,
                        i + 1
                    )));
                }
                entries.push((ngram.to_string(), count));
            }
            let ranks = entries
                .iter()
                .enumerate()
                .map(|(i, (g, _))| (g.clone(), i))
                .collect();
            profiles.insert(
                label,
                NGramProfile {
                    n_min: manifest.n_min,
                    n_max: manifest.n_max,
                    profile_size: manifest.profile_size,
                    entries,
                    ranks,
                },
            );
        }
        Ok(TextCatModel {
            profiles,
            profile_size: manifest.profile_size,
            n_min: manifest.n_min,
            n_max: manifest.n_max,
        })
    }
}
