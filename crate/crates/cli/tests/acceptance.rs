//! Acceptance gate: every criterion below prints one PASS line; a failed
//! assertion is the corresponding FAIL.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use dialectid::corpus::{Corpus, Document, LabeledSentence, VarietyLabel};
use dialectid::embeddings::EmbeddingConfig;
use dialectid::eval::{run_experiment, score, SplitMode};
use dialectid::neural::arch::{
    clstm_logits, cnn_logits, conv1d, lstm_logits, lstm_step, ConvBranch, LstmParams,
};
use dialectid::neural::tape::{NodeId, Tape};
use dialectid::neural::TrainingParams;
use dialectid::pipeline::{Arch, ArchTrainer, PipelineConfig};
use dialectid::svm::{predict_svm, rbf_kernel, train_svm, GammaMode, SvmConfig};
use dialectid::synthgen::{self, SynthConfig};
use dialectid::textcat::{build_profile_range, extract_ngrams, out_of_place_distance, NGramProfile};

fn label(code: &str) -> VarietyLabel {
    VarietyLabel::new(code).unwrap()
}

// ---------------------------------------------------------------- 1. metrics

fn oracle_metrics(
    truth: &[VarietyLabel],
    predicted: &[VarietyLabel],
    labels: &[VarietyLabel],
) -> (Vec<(f64, f64, f64)>, f64, f64, f64) {
    let mut per_class = Vec::new();
    for class in labels {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for (t, p) in truth.iter().zip(predicted) {
            if t == class && p == class {
                tp += 1;
            } else if t != class && p == class {
                fp += 1;
            } else if t == class && p != class {
                fn_ += 1;
            }
        }
        let (tp, fp, fn_) = (tp as f64, fp as f64, fn_ as f64);
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push((precision, recall, f1));
    }
    let k = labels.len() as f64;
    let mp = per_class.iter().map(|m| m.0).sum::<f64>() / k;
    let mr = per_class.iter().map(|m| m.1).sum::<f64>() / k;
    let mf = per_class.iter().map(|m| m.2).sum::<f64>() / k;
    (per_class, mp, mr, mf)
}

#[test]
fn criterion_1_metric_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let codes = ["VA", "VB", "VC", "VD", "VE", "VF"];
    for _ in 0..1000 {
        let k = rng.gen_range(2..=6);
        let labels: Vec<VarietyLabel> = codes[..k].iter().map(|c| label(c)).collect();
        let n = rng.gen_range(1..=60);
        let pick = |rng: &mut ChaCha20Rng| labels[rng.gen_range(0..k)].clone();
        let truth: Vec<VarietyLabel> = (0..n).map(|_| pick(&mut rng)).collect();
        let predicted: Vec<VarietyLabel> = (0..n).map(|_| pick(&mut rng)).collect();

        let report = score(&truth, &predicted, &labels).unwrap();
        let (per_class, mp, mr, mf) = oracle_metrics(&truth, &predicted, &labels);

        for (got, want) in report.per_class.iter().zip(&per_class) {
            assert_eq!(got.precision, want.0);
            assert_eq!(got.recall, want.1);
            assert_eq!(got.f1, want.2);
        }
        assert_eq!(report.macro_precision, mp);
        assert_eq!(report.macro_recall, mr);
        assert_eq!(report.macro_f1, mf);

        let correct = truth
            .iter()
            .zip(&predicted)
            .filter(|(t, p)| t == p)
            .count() as u64;
        assert_eq!(report.confusion.trace(), correct);
        assert_eq!(report.confusion.total(), n as u64);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}");
    println!("PASS [1/9] metric oracle: 1000 random sets exact, trace = correct count ({elapsed:?})");
}

// ---------------------------------------------------------------- 2. textcat

fn naive_profile(texts: &[&str], n_min: usize, n_max: usize, size: usize) -> Vec<(String, u64)> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in texts {
        for token in text.split_whitespace() {
            let padded: Vec<char> = format!("_{token}_").chars().collect();
            for n in n_min..=n_max {
                if padded.len() < n {
                    continue;
                }
                for window in padded.windows(n) {
                    *counts.entry(window.iter().collect()).or_insert(0) += 1;
                }
            }
        }
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(size);
    entries
}

fn naive_distance(query: &NGramProfile, reference: &NGramProfile) -> u64 {
    let mut total = 0u64;
    for (q_rank, (ngram, _)) in query.entries.iter().enumerate() {
        let position = reference.entries.iter().position(|(g, _)| g == ngram);
        total += match position {
            Some(r_rank) => (q_rank as i64 - r_rank as i64).unsigned_abs(),
            None => reference.profile_size as u64,
        };
    }
    total
}

fn random_text(rng: &mut ChaCha20Rng, tokens: usize) -> String {
    let alphabet: Vec<char> = "aehiklmnopstx".chars().collect();
    (0..tokens)
        .map(|_| {
            let len = rng.gen_range(1..=8);
            (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn criterion_2_textcat_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let mut profiles = Vec::new();
    for _ in 0..100 {
        let tokens = rng.gen_range(5..80);
        let text = random_text(&mut rng, tokens);
        let size = *[50, 300, 2000].iter().nth(rng.gen_range(0..3)).unwrap();
        let profile = build_profile_range(&[text.as_str()], 2, 5, size).unwrap();
        let naive = naive_profile(&[text.as_str()], 2, 5, size);
        assert_eq!(profile.entries, naive, "profile mismatch on {text:?}");

        // counting helper must agree with the naive padded window count
        let counted = extract_ngrams(&text, 2, 5);
        let full = naive_profile(&[text.as_str()], 2, 5, usize::MAX);
        assert_eq!(counted.len(), full.len());
        for (ngram, count) in &full {
            assert_eq!(counted.get(ngram), Some(count));
        }
        profiles.push(profile);
    }
    for pair in profiles.chunks(2) {
        if let [a, b] = pair {
            assert_eq!(out_of_place_distance(a, b), naive_distance(a, b));
            assert_eq!(out_of_place_distance(b, a), naive_distance(b, a));
        }
    }
    for p in &profiles {
        assert_eq!(out_of_place_distance(p, p), 0);
    }
    println!("PASS [2/9] textcat oracle: profiles and distances match naive reference on 100 texts; d(p,p)=0");
}

// --------------------------------------------------------------- 3. gradients

const FD_STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Central finite differences on every coordinate of every leaf against
/// the tape's reverse-mode gradients.
fn check_gradients<F>(leaves: &[Array2<f64>], build: F, context: &str)
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = leaves.iter().map(|l| tape.leaf(l.clone())).collect();
    let loss = build(&mut tape, &ids);
    assert_eq!(tape.value(loss).dim(), (1, 1), "{context}: loss not scalar");
    tape.backward(loss, 1.0);

    for (leaf_idx, leaf) in leaves.iter().enumerate() {
        let analytic = tape.grad(ids[leaf_idx]).clone();
        for ((r, c), _) in leaf.indexed_iter() {
            let eval = |delta: f64| -> f64 {
                let mut tape = Tape::new();
                let ids: Vec<NodeId> = leaves
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        let mut v = l.clone();
                        if i == leaf_idx {
                            v[[r, c]] += delta;
                        }
                        tape.leaf(v)
                    })
                    .collect();
                let loss = build(&mut tape, &ids);
                tape.value(loss)[[0, 0]]
            };
            let fd = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            let an = analytic[[r, c]];
            assert!(
                rel_err(fd, an) < FD_TOLERANCE,
                "{context}: leaf {leaf_idx} [{r},{c}] fd={fd} analytic={an}"
            );
        }
    }
}

fn randn(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// 1x1 sum of all entries via ones-vector contractions.
fn scalar_sum(tape: &mut Tape, node: NodeId) -> NodeId {
    let (rows, cols) = tape.value(node).dim();
    let left = tape.leaf(Array2::ones((1, rows)));
    let right = tape.leaf(Array2::ones((cols, 1)));
    let row = tape.matmul(left, node);
    tape.matmul(row, right)
}

#[test]
fn criterion_3_gradient_suite() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(303);

    for i in 0..20 {
        // conv branch: input 7x3, kernel m=3, 4 filters
        let leaves = vec![randn(&mut rng, 7, 3), randn(&mut rng, 9, 4), randn(&mut rng, 1, 4)];
        check_gradients(&leaves, |tape, ids| {
            let branch = ConvBranch { weight: ids[1], bias: ids[2] };
            let out = conv1d(tape, ids[0], branch);
            scalar_sum(tape, out)
        }, &format!("conv[{i}]"));

        // LSTM cell: d=3, H=4
        let leaves = vec![
            randn(&mut rng, 1, 3),
            randn(&mut rng, 1, 4),
            randn(&mut rng, 1, 4),
            randn(&mut rng, 3, 16),
            randn(&mut rng, 4, 16),
            randn(&mut rng, 1, 16),
        ];
        check_gradients(&leaves, |tape, ids| {
            let params = LstmParams { w: ids[3], u: ids[4], b: ids[5], hidden: 4 };
            let (h, c) = lstm_step(tape, ids[0], ids[1], ids[2], params);
            let hc = tape.concat_cols(&[h, c]);
            scalar_sum(tape, hc)
        }, &format!("lstm_cell[{i}]"));

        // affine + softmax cross-entropy
        let target = rng.gen_range(0..4);
        let leaves = vec![randn(&mut rng, 1, 5), randn(&mut rng, 5, 4), randn(&mut rng, 1, 4)];
        check_gradients(&leaves, |tape, ids| {
            let scores = tape.matmul(ids[0], ids[1]);
            let logits = tape.add_row(scores, ids[2]);
            tape.softmax_cross_entropy(logits, target)
        }, &format!("affine[{i}]"));

        // embedding rows: gather with a duplicate index
        let indices = vec![
            rng.gen_range(0..6),
            rng.gen_range(0..6),
            rng.gen_range(0..6),
            rng.gen_range(0..6),
        ];
        let dup = indices[0];
        let indices = vec![indices[0], indices[1], dup, indices[3]];
        let leaves = vec![randn(&mut rng, 6, 3)];
        check_gradients(&leaves, |tape, ids| {
            let rows = tape.gather_rows(ids[0], &indices);
            scalar_sum(tape, rows)
        }, &format!("embedding_rows[{i}]"));
    }

    // full graphs, 20 instances each
    for i in 0..20 {
        let target = rng.gen_range(0..3);

        // CNN: L=8, d=3, kernels 2 and 3 with 2 filters, k=3
        let leaves = vec![
            randn(&mut rng, 8, 3),
            randn(&mut rng, 6, 2),
            randn(&mut rng, 1, 2),
            randn(&mut rng, 9, 2),
            randn(&mut rng, 1, 2),
            randn(&mut rng, 4, 3),
            randn(&mut rng, 1, 3),
        ];
        check_gradients(&leaves, |tape, ids| {
            let branches = [
                ConvBranch { weight: ids[1], bias: ids[2] },
                ConvBranch { weight: ids[3], bias: ids[4] },
            ];
            let logits = cnn_logits(tape, ids[0], &branches, ids[5], ids[6], None);
            tape.softmax_cross_entropy(logits, target)
        }, &format!("cnn_graph[{i}]"));

        // LSTM: T=5, d=3, H=4, k=3
        let leaves = vec![
            randn(&mut rng, 5, 3),
            randn(&mut rng, 3, 16),
            randn(&mut rng, 4, 16),
            randn(&mut rng, 1, 16),
            randn(&mut rng, 4, 3),
            randn(&mut rng, 1, 3),
        ];
        check_gradients(&leaves, |tape, ids| {
            let params = LstmParams { w: ids[1], u: ids[2], b: ids[3], hidden: 4 };
            let logits = lstm_logits(tape, ids[0], params, ids[4], ids[5], None);
            tape.softmax_cross_entropy(logits, target)
        }, &format!("lstm_graph[{i}]"));

        // C-LSTM: L=8, d=3, kernels 2/3 with 2 filters, H=3, k=3
        let leaves = vec![
            randn(&mut rng, 8, 3),
            randn(&mut rng, 6, 2),
            randn(&mut rng, 1, 2),
            randn(&mut rng, 9, 2),
            randn(&mut rng, 1, 2),
            randn(&mut rng, 4, 12),
            randn(&mut rng, 3, 12),
            randn(&mut rng, 1, 12),
            randn(&mut rng, 3, 3),
            randn(&mut rng, 1, 3),
        ];
        check_gradients(&leaves, |tape, ids| {
            let branches = [
                ConvBranch { weight: ids[1], bias: ids[2] },
                ConvBranch { weight: ids[3], bias: ids[4] },
            ];
            let lstm = LstmParams { w: ids[5], u: ids[6], b: ids[7], hidden: 3 };
            let logits = clstm_logits(tape, ids[0], &branches, lstm, ids[8], ids[9], None);
            tape.softmax_cross_entropy(logits, target)
        }, &format!("clstm_graph[{i}]"));
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}");
    println!("PASS [3/9] gradient suite: conv, LSTM cell, affine, embedding rows and full graphs within {FD_TOLERANCE} ({elapsed:?})");
}

// -------------------------------------------------------------------- 4. svm

/// Dual box-constrained QP by projected gradient ascent; projection onto
/// the alpha.y = 0 hyperplane intersected with [0, C]^n via bisection.
fn qp_reference(
    gram: &Array2<f64>,
    y: &[f64],
    c: f64,
) -> (Vec<f64>, f64) {
    let n = y.len();
    let project = |v: &[f64]| -> Vec<f64> {
        let clip =
            |lambda: f64| -> f64 {
                (0..n)
                    .map(|i| (v[i] - lambda * y[i]).clamp(0.0, c) * y[i])
                    .sum()
            };
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if clip(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        (0..n).map(|i| (v[i] - lambda * y[i]).clamp(0.0, c)).collect()
    };

    let mut alpha = project(&vec![0.0; n]);
    let lr = 0.02;
    for _ in 0..100_000 {
        // grad of sum(a) - 1/2 a'Qa with Q_ij = y_i y_j K_ij
        let grad: Vec<f64> = (0..n)
            .map(|i| {
                1.0 - y[i]
                    * (0..n)
                        .map(|j| alpha[j] * y[j] * gram[[i, j]])
                        .sum::<f64>()
            })
            .collect();
        let stepped: Vec<f64> = (0..n).map(|i| alpha[i] + lr * grad[i]).collect();
        alpha = project(&stepped);
    }

    // bias from margin support vectors
    let mut biases = Vec::new();
    for i in 0..n {
        if alpha[i] > 1e-6 && alpha[i] < c - 1e-6 {
            let f: f64 = (0..n).map(|j| alpha[j] * y[j] * gram[[i, j]]).sum();
            biases.push(y[i] - f);
        }
    }
    assert!(!biases.is_empty(), "QP reference found no margin support vectors");
    let bias = biases.iter().sum::<f64>() / biases.len() as f64;
    (alpha, bias)
}

#[test]
fn criterion_4_svm_small_instance_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let config = SvmConfig {
        c: 1.0,
        gamma: GammaMode::Fixed(0.5),
        tolerance: 1e-5,
        max_passes: 1000,
    };

    for trial in 0..6 {
        let k = 2 + trial % 2;
        let all_centers = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
        let centers = &all_centers[..k];
        let per_class = 6;
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        let codes = ["VA", "VB", "VC"];
        for (ci, center) in centers.iter().enumerate() {
            for _ in 0..per_class {
                samples.push(Array1::from(vec![
                    center[0] + rng.gen_range(-0.5..0.5),
                    center[1] + rng.gen_range(-0.5..0.5),
                ]));
                labels.push(label(codes[ci]));
            }
        }
        let n = samples.len();
        assert!(n <= 20);

        let model = train_svm(&samples, &labels, &config).unwrap();

        let mut gram = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                gram[[i, j]] = rbf_kernel(
                    samples[i].as_slice().unwrap(),
                    samples[j].as_slice().unwrap(),
                    model.gamma,
                )
                .unwrap();
            }
        }

        for (class, problem) in model.classes.iter().zip(&model.problems) {
            let y: Vec<f64> = labels
                .iter()
                .map(|l| if l == class { 1.0 } else { -1.0 })
                .collect();
            let (alpha, bias) = qp_reference(&gram, &y, config.c);
            for (i, sample) in samples.iter().enumerate() {
                let reference: f64 = bias
                    + (0..n)
                        .map(|j| {
                            alpha[j]
                                * y[j]
                                * rbf_kernel(
                                    sample.as_slice().unwrap(),
                                    samples[j].as_slice().unwrap(),
                                    model.gamma,
                                )
                                .unwrap()
                        })
                        .sum::<f64>();
                let got = problem
                    .decision_value(sample.as_slice().unwrap(), model.gamma)
                    .unwrap();
                assert!(
                    (got - reference).abs() < 1e-3,
                    "trial {trial} class {class} point {i}: smo={got} qp={reference}"
                );
            }
        }

        // toy separable set classified perfectly
        for (sample, want) in samples.iter().zip(&labels) {
            let (got, _) = predict_svm(&model, sample.as_slice().unwrap()).unwrap();
            assert_eq!(&got, want);
        }
    }
    println!("PASS [4/9] SVM oracle: SMO decision values match projected-gradient QP within 1e-3; toy sets 100%");
}

// ------------------------------------------------- 5-7. synthetic benchmarks

fn benchmark_config(seed: u64) -> PipelineConfig {
    let train = TrainingParams {
        dropout: 0.3,
        epochs: 8,
        learning_rate: 0.01,
        patience: 3,
        batch_size: 32,
        seed,
    };
    let mut cfg = PipelineConfig {
        profile_size: 1000,
        embedding: EmbeddingConfig {
            dim: 24,
            window: 3,
            negatives: 3,
            bucket_count: 1 << 13,
            epochs: 2,
            min_count: 1,
            seed,
            ..Default::default()
        },
        max_len: 16,
        ..Default::default()
    };
    cfg.cnn.filters_per_size = 16;
    cfg.cnn.train = train.clone();
    cfg.lstm.hidden_size = 24;
    cfg.lstm.train = train.clone();
    cfg.clstm.filters_per_size = 16;
    cfg.clstm.hidden_size = 24;
    cfg.clstm.train = train;
    cfg
}

fn synthetic_dataset(divergence: f64, seed: u64) -> Vec<LabeledSentence> {
    let corpus = synthgen::generate(&SynthConfig {
        classes: 6,
        sentences_per_class: 500,
        divergence,
        seed,
        ..Default::default()
    })
    .unwrap();
    dialectid::corpus::prepare_dataset(&corpus, 0, 5).unwrap()
}

fn benchmark_scores(divergence: f64) -> &'static HashMap<&'static str, f64> {
    static DIVERGENT: OnceLock<HashMap<&'static str, f64>> = OnceLock::new();
    static UNIFORM: OnceLock<HashMap<&'static str, f64>> = OnceLock::new();
    let cell = if divergence == 0.0 { &UNIFORM } else { &DIVERGENT };
    cell.get_or_init(|| {
        let seed = 2024;
        let dataset = synthetic_dataset(divergence, seed);
        let cfg = benchmark_config(seed);
        Arch::ALL
            .iter()
            .map(|&arch| {
                let trainer = ArchTrainer { arch, config: cfg.clone() };
                let report =
                    run_experiment(&trainer, &dataset, 1, seed, SplitMode::Sentence, 1).unwrap();
                (arch.tag(), report.macro_f1)
            })
            .collect()
    })
}

#[test]
fn criterion_5_end_to_end_synthetic_benchmark() {
    let start = Instant::now();
    let scores = benchmark_scores(1.0);
    for (arch, f1) in scores {
        assert!(*f1 >= 0.95, "{arch}: macro F1 {f1} < 0.95");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    println!("PASS [5/9] end-to-end benchmark (k=6, divergence 1.0): {scores:?} all >= 0.95 ({elapsed:?})");
}

#[test]
fn criterion_6_chance_floor() {
    let scores = benchmark_scores(0.0);
    let floor = 1.0 / 6.0;
    for (arch, f1) in scores {
        assert!(
            (f1 - floor).abs() <= 0.1,
            "{arch}: macro F1 {f1} not within 0.1 of {floor}"
        );
    }
    println!("PASS [6/9] chance floor (divergence 0.0): {scores:?} all within 0.1 of 1/6");
}

#[test]
fn criterion_7_ordering_sanity() {
    let scores = benchmark_scores(1.0);
    let lstm = scores["lstm"];
    let textcat = scores["textcat"];
    assert!(
        lstm >= textcat - 0.02,
        "lstm {lstm} < textcat {textcat} - 0.02"
    );
    println!("PASS [7/9] ordering sanity: lstm {lstm:.4} >= textcat {textcat:.4} - 0.02");
}

// ---------------------------------------------------------- 8. preprocessing

#[test]
fn criterion_8_preprocessing_conformance() {
    // Variety KEEP: 2001 sentences of 5 tokens (10005 tokens > 10000)
    // plus 3 sentences of 2 tokens that must be dropped for length.
    // Variety DROP: 2000 sentences of 5 tokens = exactly 10000 tokens,
    // which is not strictly more than the cutoff, so the variety goes.
    let five = "Alpha beta gamma delta epsilon. ";
    let two = "Alpha beta. ";
    let keep_text = five.repeat(2001) + &two.repeat(3);
    let drop_text = five.repeat(2000);
    let corpus = Corpus {
        documents: vec![
            Document {
                id: "keep-1".into(),
                variety: label("KEEP"),
                text: keep_text,
                source: "fixture".into(),
            },
            Document {
                id: "drop-1".into(),
                variety: label("DROP"),
                text: drop_text,
                source: "fixture".into(),
            },
        ],
    };
    let dataset = dialectid::corpus::prepare_dataset(&corpus, 10_000, 5).unwrap();
    assert_eq!(dataset.len(), 2001, "expected exactly the 2001 long sentences");
    for s in &dataset {
        assert_eq!(s.variety, label("KEEP"));
        assert_eq!(s.tokens.len(), 5);
        assert_eq!(s.tokens[0], "alpha", "tokens must be lowercased");
    }
    println!("PASS [8/9] preprocessing: short sentences and <=10000-token varieties dropped, hand-counted");
}

// ------------------------------------------------------------ 9. determinism

#[test]
fn criterion_9_determinism_byte_identical_reports() {
    let bin = env!("CARGO_BIN_EXE_dialectid");
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");

    let synth = std::process::Command::new(bin)
        .args([
            "synth", "--out", corpus_dir.to_str().unwrap(),
            "--classes", "3", "--sentences-per-class", "60",
            "--divergence", "1.0", "--seed", "9",
        ])
        .output()
        .unwrap();
    assert!(synth.status.success(), "{synth:?}");

    let evaluate = |out: &str| {
        let status = std::process::Command::new(bin)
            .args([
                "evaluate", "--arch", "textcat,svm",
                "--manifest", corpus_dir.join("manifest.tsv").to_str().unwrap(),
                "--runs", "2", "--seed", "9",
                "--out", dir.path().join(out).to_str().unwrap(),
                "--min-variety-tokens", "0",
                "--dim", "16", "--buckets", "4096", "--min-count", "1",
                "--max-len", "16",
            ])
            .status()
            .unwrap();
        assert!(status.success());
    };
    evaluate("run_a");
    evaluate("run_b");

    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("run_a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.len() >= 5, "expected report files, got {names:?}");
    for name in &names {
        let a = std::fs::read(dir.path().join("run_a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("run_b").join(name)).unwrap();
        assert_eq!(a, b, "file {name} differs between identical runs");
    }
    println!("PASS [9/9] determinism: two evaluate invocations produced byte-identical reports ({} files)", names.len());
}
