//! Stratified 80/20 evaluation over repeated runs: split plans, per-class
//! precision/recall/F1, confusion matrices and report emission.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledSentence, VarietyLabel};
use crate::error::{Error, Result};

/// Fraction of each class reserved for testing.
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Split per sentence (the default evaluation unit).
    Sentence,
    /// Keep all sentences of a document on the same side of the split.
    Document,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub run: usize,
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// k x k counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<VarietyLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for l in &self.labels {
            out.push(',');
            out.push_str(l.as_str());
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l.as_str());
            for c in &self.counts[i] {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub seed: u64,
    pub runs: Vec<ScoreReport>,
    pub labels: Vec<VarietyLabel>,
    /// Per-class metrics averaged over runs, in label order.
    pub mean_per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Class order used throughout the harness: descending sentence frequency,
/// ties by label.
pub fn label_order(dataset: &[LabeledSentence]) -> Vec<VarietyLabel> {
    let mut freq: BTreeMap<&VarietyLabel, usize> = BTreeMap::new();
    for s in dataset {
        *freq.entry(&s.variety).or_default() += 1;
    }
    let mut labels: Vec<VarietyLabel> = freq.keys().map(|l| (*l).clone()).collect();
    labels.sort_by(|a, b| freq[b].cmp(&freq[a]).then_with(|| a.cmp(b)));
    labels
}

/// Deterministic per-class 80/20 split: `floor(0.2 * n_c)` test sentences
/// per class (at least 1), shuffled with `seed ^ run`.
pub fn stratified_split(
    dataset: &[LabeledSentence],
    run: usize,
    seed: u64,
    mode: SplitMode,
) -> Result<SplitPlan> {
    let mut by_class: BTreeMap<&VarietyLabel, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.iter().enumerate() {
        by_class.entry(&s.variety).or_default().push(i);
    }
    for (label, indices) in &by_class {
        if indices.len() < 5 {
            return Err(Error::Training {
                run: Some(run),
                message: format!("class {label} has {} sentences, need >= 5", indices.len()),
            });
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ run as u64);
    let mut train = Vec::new();
    let mut test = Vec::new();
    match mode {
        SplitMode::Sentence => {
            for indices in by_class.values() {
                let mut indices = indices.clone();
                shuffle(&mut indices, &mut rng);
                let n_test = ((indices.len() as f64 * TEST_FRACTION).floor() as usize).max(1);
                test.extend_from_slice(&indices[..n_test]);
                train.extend_from_slice(&indices[n_test..]);
            }
        }
        SplitMode::Document => {
            for indices in by_class.values() {
                // group by document, then fill the test side document by
                // document up to the per-class quota
                let mut docs: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
                for &i in indices {
                    docs.entry(dataset[i].doc_id.as_str()).or_default().push(i);
                }
                let mut doc_ids: Vec<&str> = docs.keys().copied().collect();
                let mut order: Vec<usize> = (0..doc_ids.len()).collect();
                shuffle(&mut order, &mut rng);
                doc_ids = order.into_iter().map(|i| doc_ids[i]).collect();
                let quota = ((indices.len() as f64 * TEST_FRACTION).floor() as usize).max(1);
                let mut taken = 0;
                for doc_id in doc_ids {
                    let group = &docs[doc_id];
                    if taken < quota {
                        test.extend_from_slice(group);
                        taken += group.len();
                    } else {
                        train.extend_from_slice(group);
                    }
                }
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        run,
        seed,
        train,
        test,
    })
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha20Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Confusion matrix and per-class precision/recall/F1 with macro means.
/// Zero denominators yield 0.
pub fn score(
    truth: &[VarietyLabel],
    predicted: &[VarietyLabel],
    labels: &[VarietyLabel],
) -> Result<ScoreReport> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("nothing to score".into()));
    }
    let index: BTreeMap<&VarietyLabel, usize> =
        labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        let (Some(&ti), Some(&pi)) = (index.get(t), index.get(p)) else {
            return Err(Error::InvalidLabel(format!(
                "label outside the declared order: {t} / {p}"
            )));
        };
        counts[ti][pi] += 1;
    }

    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let tp = counts[c][c] as f64;
        let fp: f64 = (0..k).filter(|&r| r != c).map(|r| counts[r][c] as f64).sum();
        let fn_: f64 = (0..k).filter(|&p| p != c).map(|p| counts[c][p] as f64).sum();
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
        });
    }
    let k_f = k as f64;
    Ok(ScoreReport {
        confusion: ConfusionMatrix {
            labels: labels.to_vec(),
            counts,
        },
        macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k_f,
        macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k_f,
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k_f,
        per_class,
    })
}

/// Anything that can be trained on a sentence split and then asked for
/// per-sentence predictions.
pub trait SentenceClassifierTrainer: Sync {
    fn name(&self) -> String;

    /// Train on the given sentences and return a prediction function over
    /// the test sentences.
    fn train_and_predict(
        &self,
        train: &[&LabeledSentence],
        test: &[&LabeledSentence],
        seed: u64,
    ) -> Result<Vec<VarietyLabel>>;
}

/// Train and score `runs` stratified resamples, then average per-class
/// metrics over runs. Runs may execute in parallel; aggregation is in run
/// order.
pub fn run_experiment(
    trainer: &dyn SentenceClassifierTrainer,
    dataset: &[LabeledSentence],
    runs: usize,
    seed: u64,
    mode: SplitMode,
    jobs: usize,
) -> Result<EvaluationReport> {
    let labels = label_order(dataset);
    let run_one = |run: usize| -> Result<ScoreReport> {
        let plan = stratified_split(dataset, run, seed, mode)?;
        let train: Vec<&LabeledSentence> = plan.train.iter().map(|&i| &dataset[i]).collect();
        let test: Vec<&LabeledSentence> = plan.test.iter().map(|&i| &dataset[i]).collect();
        let predicted = trainer
            .train_and_predict(&train, &test, seed ^ plan.run as u64)
            .map_err(|e| Error::Training {
                run: Some(run),
                message: e.to_string(),
            })?;
        let truth: Vec<VarietyLabel> = test.iter().map(|s| s.variety.clone()).collect();
        score(&truth, &predicted, &labels)
    };

    let reports: Vec<Result<ScoreReport>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Training {
                run: None,
                message: format!("thread pool: {e}"),
            })?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..runs).into_par_iter().map(run_one).collect()
        })
    } else {
        (0..runs).map(run_one).collect()
    };
    let runs_done: Vec<ScoreReport> = reports.into_iter().collect::<Result<_>>()?;

    let k = labels.len();
    let mut mean_per_class = vec![ClassMetrics::default(); k];
    for report in &runs_done {
        for (mean, m) in mean_per_class.iter_mut().zip(&report.per_class) {
            mean.precision += m.precision;
            mean.recall += m.recall;
            mean.f1 += m.f1;
        }
    }
    let n_runs = runs_done.len() as f64;
    for m in &mut mean_per_class {
        m.precision /= n_runs;
        m.recall /= n_runs;
        m.f1 /= n_runs;
    }
    let k_f = k as f64;
    Ok(EvaluationReport {
        model: trainer.name(),
        seed,
        labels,
        macro_precision: mean_per_class.iter().map(|m| m.precision).sum::<f64>() / k_f,
        macro_recall: mean_per_class.iter().map(|m| m.recall).sum::<f64>() / k_f,
        macro_f1: mean_per_class.iter().map(|m| m.f1).sum::<f64>() / k_f,
        mean_per_class,
        runs: runs_done,
    })
}

impl EvaluationReport {
    /// One row per class plus a mean row: `label,P,R,F`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,precision,recall,f1\n");
        for (label, m) in self.labels.iter().zip(&self.mean_per_class) {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                label, m.precision, m.recall, m.f1
            ));
        }
        out.push_str(&format!(
            "Mean,{:.6},{:.6},{:.6}\n",
            self.macro_precision, self.macro_recall, self.macro_f1
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialize")
    }
}

/// Merged table over several models: one row per class, P/R/F columns per
/// model, plus a mean row.
pub fn merged_csv(reports: &[EvaluationReport]) -> Result<String> {
    let Some(first) = reports.first() else {
        return Err(Error::EmptyInput("no reports to merge".into()));
    };
    for r in reports {
        if r.labels != first.labels {
            return Err(Error::InvalidConfig(
                "reports cover different label sets".into(),
            ));
        }
    }
    let mut out = String::from("label");
    for r in reports {
        out.push_str(&format!(",{m}_P,{m}_R,{m}_F", m = r.model));
    }
    out.push('\n');
    for (i, label) in first.labels.iter().enumerate() {
        out.push_str(label.as_str());
        for r in reports {
            let m = &r.mean_per_class[i];
            out.push_str(&format!(",{:.6},{:.6},{:.6}", m.precision, m.recall, m.f1));
        }
        out.push('\n');
    }
    out.push_str("Mean");
    for r in reports {
        out.push_str(&format!(
            ",{:.6},{:.6},{:.6}",
            r.macro_precision, r.macro_recall, r.macro_f1
        ));
    }
    out.push('\n');
    Ok(out)
}

/// Write `<model>_report.csv`, `<model>_report.json` and one
/// `<model>_confusion_run<i>.csv` per run into `dir`.
pub fn emit_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let base = report.model.clone();
    let path = dir.join(format!("{base}_report.csv"));
    std::fs::write(&path, report.to_csv()).map_err(|e| Error::io(path, e))?;
    let path = dir.join(format!("{base}_report.json"));
    std::fs::write(&path, report.to_json()).map_err(|e| Error::io(path, e))?;
    for (i, run) in report.runs.iter().enumerate() {
        let path = dir.join(format!("{base}_confusion_run{i}.csv"));
        std::fs::write(&path, run.confusion.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
