//! Corpus loading, sentence segmentation, tokenization, filtering and
//! descriptive statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Number of token-length histogram buckets: lengths 1..=39 plus a 40+ bucket.
pub const HISTOGRAM_BUCKETS: usize = 40;

/// Short uppercase code naming one dialectal variety (e.g. `HV`, `GUE`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarietyLabel(String);

impl VarietyLabel {
    pub fn new(code: &str) -> Result<Self> {
        if code.is_empty() || !code.chars().all(|c| c.is_ascii_uppercase()) {
            return Err(Error::InvalidLabel(code.to_string()));
        }
        Ok(VarietyLabel(code.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VarietyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One source document: raw text plus its variety label and provenance.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub variety: VarietyLabel,
    pub text: String,
    pub source: String,
}

/// A loaded collection of documents, in manifest order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn labels(&self) -> Vec<VarietyLabel> {
        let mut labels: Vec<_> = self.documents.iter().map(|d| d.variety.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }
}

/// The classification unit: a tokenized sentence with its variety label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub tokens: Vec<String>,
    pub variety: VarietyLabel,
    pub doc_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VarietyStats {
    pub documents: u64,
    pub tokens: u64,
    pub characters: u64,
    /// characters / tokens; 0 when the variety has no tokens.
    pub chars_per_token: f64,
    /// Token-length histogram: index i counts tokens of length i+1,
    /// the last bucket counts lengths >= 40.
    pub token_length_histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_variety: BTreeMap<VarietyLabel, VarietyStats>,
    pub global: VarietyStats,
}

/// Load a corpus from a tab-separated manifest.
///
/// Each non-comment row is `id<TAB>label<TAB>path<TAB>source`; paths are
/// resolved relative to the manifest's directory. Text is read as UTF-8 and
/// NFC-normalized on load.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus> {
    let manifest = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut documents = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for (idx, line) in manifest.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Manifest {
                path: manifest_path.to_path_buf(),
                line: lineno,
                message: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let (id, label, rel_path, source) = (fields[0], fields[1], fields[2], fields[3]);
        if id.is_empty() {
            return Err(Error::Manifest {
                path: manifest_path.to_path_buf(),
                line: lineno,
                message: "empty document id".into(),
            });
        }
        if !seen_ids.insert(id.to_string()) {
            return Err(Error::Manifest {
                path: manifest_path.to_path_buf(),
                line: lineno,
                message: format!("duplicate document id {id:?}"),
            });
        }
        let variety = VarietyLabel::new(label).map_err(|_| Error::Manifest {
            path: manifest_path.to_path_buf(),
            line: lineno,
            message: format!("invalid label {label:?}"),
        })?;
        let doc_path: PathBuf = base.join(rel_path);
        let raw = std::fs::read_to_string(&doc_path).map_err(|e| Error::Manifest {
            path: manifest_path.to_path_buf(),
            line: lineno,
            message: format!("cannot read {}: {e}", doc_path.display()),
        })?;
        let text: String = raw.nfc().collect();
        if text.trim().is_empty() {
            return Err(Error::Manifest {
                path: manifest_path.to_path_buf(),
                line: lineno,
                message: format!("document {} is empty", doc_path.display()),
            });
        }
        documents.push(Document {
            id: id.to_string(),
            variety,
            text,
            source: source.to_string(),
        });
    }
    Ok(Corpus { documents })
}

const TERMINALS: [char; 5] = ['.', '!', '?', ':', ';'];

/// Split text into sentences.
///
/// Splits after `.` `!` `?` `:` `;` followed by whitespace or end-of-text,
/// and on newline runs; the delimiter stays with the left sentence.
/// Internal whitespace is collapsed to single spaces.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut current = String::new();

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            flush(&mut current, &mut sentences);
            i += 1;
            continue;
        }
        current.push(c);
        if TERMINALS.contains(&c) {
            let at_end = i + 1 == chars.len();
            let before_ws = chars.get(i + 1).is_some_and(|n| n.is_whitespace());
            if at_end || before_ws {
                flush(&mut current, &mut sentences);
            }
        }
        i += 1;
    }
    flush(&mut current, &mut sentences);
    sentences
}

fn flush(current: &mut String, out: &mut Vec<String>) {
    let normalized = current.split_whitespace().collect::<Vec<_>>().join(" ");
    if !normalized.is_empty() {
        out.push(normalized);
    }
    current.clear();
}

/// Split a sentence on Unicode whitespace.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence.split_whitespace().map(str::to_string).collect()
}

/// Segment, tokenize, lowercase and filter the corpus into labeled sentences.
///
/// Varieties whose total token count is `<= min_variety_tokens` are dropped,
/// then sentences shorter than `min_sentence_len` tokens are dropped. Output
/// order is deterministic: by document id, then sentence index.
pub fn prepare_dataset(
    corpus: &Corpus,
    min_variety_tokens: u64,
    min_sentence_len: usize,
) -> Result<Vec<LabeledSentence>> {
    let mut variety_tokens: BTreeMap<&VarietyLabel, u64> = BTreeMap::new();
    for doc in &corpus.documents {
        let count: u64 = segment_sentences(&doc.text)
            .iter()
            .map(|s| tokenize(s).len() as u64)
            .sum();
        *variety_tokens.entry(&doc.variety).or_default() += count;
    }

    let mut docs: Vec<&Document> = corpus.documents.iter().collect();
    docs.sort_by(|a, b| a.id.cmp(&b.id));

    let mut out = Vec::new();
    for doc in docs {
        if variety_tokens[&doc.variety] <= min_variety_tokens {
            continue;
        }
        for sentence in segment_sentences(&doc.text) {
            let tokens: Vec<String> = tokenize(&sentence)
                .into_iter()
                .map(|t| t.to_lowercase())
                .collect();
            if tokens.len() < min_sentence_len {
                continue;
            }
            out.push(LabeledSentence {
                tokens,
                variety: doc.variety.clone(),
                doc_id: doc.id.clone(),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::NoData);
    }
    Ok(out)
}

/// Compute per-variety and global document/token/character counts, the
/// chars-per-token ratio and the token-length histogram.
pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let mut per_variety: BTreeMap<VarietyLabel, VarietyStats> = BTreeMap::new();
    for doc in &corpus.documents {
        let stats = per_variety
            .entry(doc.variety.clone())
            .or_insert_with(|| VarietyStats {
                token_length_histogram: vec![0; HISTOGRAM_BUCKETS],
                ..Default::default()
            });
        stats.documents += 1;
        for sentence in segment_sentences(&doc.text) {
            for token in tokenize(&sentence) {
                let len = token.chars().count();
                stats.tokens += 1;
                stats.characters += len as u64;
                let bucket = len.clamp(1, HISTOGRAM_BUCKETS) - 1;
                stats.token_length_histogram[bucket] += 1;
            }
        }
    }

    let mut global = VarietyStats {
        token_length_histogram: vec![0; HISTOGRAM_BUCKETS],
        ..Default::default()
    };
    for stats in per_variety.values_mut() {
        stats.chars_per_token = ratio(stats.characters, stats.tokens);
        global.documents += stats.documents;
        global.tokens += stats.tokens;
        global.characters += stats.characters;
        for (g, v) in global
            .token_length_histogram
            .iter_mut()
            .zip(&stats.token_length_histogram)
        {
            *g += v;
        }
    }
    global.chars_per_token = ratio(global.characters, global.tokens);
    CorpusStats { per_variety, global }
}

fn ratio(chars: u64, tokens: u64) -> f64 {
    if tokens == 0 {
        0.0
    } else {
        chars as f64 / tokens as f64
    }
}

impl CorpusStats {
    /// One row per variety: `label,docs,tokens,chars,ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,documents,tokens,characters,chars_per_token\n");
        for (label, s) in &self.per_variety {
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                label, s.documents, s.tokens, s.characters, s.chars_per_token
            ));
        }
        out.push_str(&format!(
            "TOTAL,{},{},{},{:.6}\n",
            self.global.documents, self.global.tokens, self.global.characters,
            self.global.chars_per_token
        ));
        out
    }

    /// Same content as the CSV plus the token-length histograms.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, label: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            variety: VarietyLabel::new(label).unwrap(),
            text: text.into(),
            source: "test".into(),
        }
    }

    #[test]
    fn label_validation() {
        assert!(VarietyLabel::new("HV").is_ok());
        assert!(VarietyLabel::new("").is_err());
        assert!(VarietyLabel::new("hv").is_err());
        assert!(VarietyLabel::new("H1").is_err());
    }

    #[test]
    fn segmentation_splits_on_terminals() {
        assert_eq!(
            segment_sentences("Nikitak. Nikchixki!"),
            vec!["Nikitak.", "Nikchixki!"]
        );
    }

    #[test]
    fn segmentation_empty_input() {
        assert!(segment_sentences("").is_empty());
    }

    #[test]
    fn segmentation_no_terminal() {
        assert_eq!(segment_sentences("  se ome  yei "), vec!["se ome yei"]);
    }

    #[test]
    fn segmentation_newline_runs_and_abbrev_dot() {
        assert_eq!(segment_sentences("ab\n\ncd"), vec!["ab", "cd"]);
        // dot not followed by whitespace does not split
        assert_eq!(segment_sentences("a.b c"), vec!["a.b c"]);
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Niman kataya se lakal"),
            vec!["Niman", "kataya", "se", "lakal"]
        );
        assert_eq!(tokenize("  tlakatl  "), vec!["tlakatl"]);
        assert_eq!(tokenize("a\tb\nc"), vec!["a", "b", "c"]);
    }

    #[test]
    fn prepare_drops_short_sentences_and_small_varieties() {
        // HV: plenty of tokens; HP: below cutoff.
        let hv_text = "tok ".repeat(30).trim_end().to_string() + ".";
        let corpus = Corpus {
            documents: vec![
                doc("a", "HV", &hv_text),
                doc("b", "HV", "uan se ome yei nawi. se ome yei."),
                doc("c", "HP", "se ome yei nawi makwili."),
            ],
        };
        let ds = prepare_dataset(&corpus, 20, 5).unwrap();
        assert!(ds.iter().all(|s| s.variety.as_str() == "HV"));
        // "se ome yei." has 3 tokens -> dropped; 5-token sentences kept
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].doc_id, "a");
        assert_eq!(ds[1].tokens, vec!["uan", "se", "ome", "yei", "nawi."]);
    }

    #[test]
    fn prepare_empty_result_is_error() {
        let corpus = Corpus {
            documents: vec![doc("a", "HV", "se ome.")],
        };
        assert!(matches!(
            prepare_dataset(&corpus, 10_000, 5),
            Err(Error::NoData)
        ));
    }

    #[test]
    fn stats_hand_counts() {
        let corpus = Corpus {
            documents: vec![doc("a", "HV", "ab cd")],
        };
        let stats = compute_stats(&corpus);
        let hv = &stats.per_variety[&VarietyLabel::new("HV").unwrap()];
        assert_eq!(hv.tokens, 2);
        assert_eq!(hv.characters, 4);
        assert_eq!(hv.chars_per_token, 2.0);
        assert_eq!(hv.token_length_histogram[1], 2);
    }

    #[test]
    fn stats_empty_corpus() {
        let stats = compute_stats(&Corpus::default());
        assert_eq!(stats.global.documents, 0);
        assert_eq!(stats.global.chars_per_token, 0.0);
    }

    #[test]
    fn stats_long_token_buckets() {
        let text = format!("{} {}", "a".repeat(11).as_str().to_string(), "b".repeat(15));
        let corpus = Corpus {
            documents: vec![doc("a", "HV", &text)],
        };
        let stats = compute_stats(&corpus);
        assert_eq!(stats.global.token_length_histogram[10], 1);
        assert_eq!(stats.global.token_length_histogram[14], 1);
    }

    #[test]
    fn stats_additivity() {
        let corpus = Corpus {
            documents: vec![
                doc("a", "HV", "se ome yei"),
                doc("b", "HP", "nawi makwili"),
                doc("c", "HV", "chikwase"),
            ],
        };
        let stats = compute_stats(&corpus);
        let sum: u64 = stats.per_variety.values().map(|s| s.tokens).sum();
        assert_eq!(sum, stats.global.tokens);
        let hist_sum: u64 = stats.global.token_length_histogram.iter().sum();
        assert_eq!(hist_sum, stats.global.tokens);
    }
}
