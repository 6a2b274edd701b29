//! One-vs-rest soft-margin SVM with an RBF kernel, trained by a simplified
//! SMO solver on dense Gram matrices.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::VarietyLabel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DISV";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaMode {
    Scale,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: GammaMode,
    pub tolerance: f64,
    /// Cap on full SMO sweeps per binary subproblem.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            gamma: GammaMode::Scale,
            tolerance: 1e-3,
            max_passes: 100,
        }
    }
}

/// exp(-gamma * ||x - y||^2)
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-gamma * sq).exp())
}

/// `gamma = 1 / (dim * mean per-coordinate variance)` of the training matrix.
pub fn resolve_gamma(samples: &[Array1<f64>], mode: GammaMode) -> Result<f64> {
    match mode {
        GammaMode::Fixed(g) => {
            if g <= 0.0 {
                return Err(Error::InvalidConfig("gamma must be positive".into()));
            }
            Ok(g)
        }
        GammaMode::Scale => {
            if samples.len() < 2 {
                return Err(Error::EmptyInput("gamma=scale needs >= 2 samples".into()));
            }
            let dim = samples[0].len();
            let n = samples.len() as f64;
            let mut var_sum = 0.0;
            for j in 0..dim {
                let mean: f64 = samples.iter().map(|s| s[j]).sum::<f64>() / n;
                let var: f64 = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / n;
                var_sum += var;
            }
            let mean_var = var_sum / dim as f64;
            if mean_var <= 0.0 {
                return Err(Error::DegenerateFeatures(
                    "all features are constant; gamma=scale is undefined".into(),
                ));
            }
            Ok(1.0 / (dim as f64 * mean_var))
        }
    }
}

/// One binary one-vs-rest subproblem at convergence.
#[derive(Debug, Clone)]
pub struct BinaryProblem {
    /// Dual coefficient alpha_i * y_i per support vector.
    pub coefficients: Vec<f64>,
    pub support_vectors: Vec<Array1<f64>>,
    pub bias: f64,
}

impl BinaryProblem {
    pub fn decision_value(&self, x: &[f64], gamma: f64) -> Result<f64> {
        let mut value = self.bias;
        for (coef, sv) in self.coefficients.iter().zip(&self.support_vectors) {
            value += coef * rbf_kernel(x, sv.as_slice().unwrap(), gamma)?;
        }
        Ok(value)
    }
}

#[derive(Debug, Clone)]
pub struct SvmModel {
    pub classes: Vec<VarietyLabel>,
    pub gamma: f64,
    pub dim: usize,
    pub config: SvmConfig,
    pub problems: Vec<BinaryProblem>,
}

/// Result of one binary SMO run, on full index space.
struct SmoSolution {
    alphas: Vec<f64>,
    bias: f64,
}

/// Simplified SMO over a precomputed Gram matrix. `labels` are +-1.
fn smo_solve(gram: &Array2<f64>, labels: &[f64], c: f64, tol: f64, max_passes: usize) -> SmoSolution {
    let n = labels.len();
    let mut alphas = vec![0.0f64; n];
    let mut bias = 0.0f64;
    // error cache: E_i = f(x_i) - y_i; starts at -y_i since f = 0
    let mut errors: Vec<f64> = labels.iter().map(|y| -y).collect();

    for _sweep in 0..max_passes {
        let mut changed = 0usize;
        for i in 0..n {
            let e_i = errors[i];
            let r = e_i * labels[i];
            let violates = (r < -tol && alphas[i] < c) || (r > tol && alphas[i] > 0.0);
            if !violates {
                continue;
            }
            // second choice: maximal |E_i - E_j|, remaining partners as
            // fallback so a stuck pair cannot stall the sweep
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| {
                let ga = (e_i - errors[a]).abs();
                let gb = (e_i - errors[b]).abs();
                gb.partial_cmp(&ga).unwrap()
            });
            for j in order {
                if try_update(gram, labels, c, i, j, &mut alphas, &mut bias, &mut errors) {
                    changed += 1;
                    break;
                }
            }
        }
        if changed == 0 {
            break;
        }
    }
    SmoSolution { alphas, bias }
}

#[allow(clippy::too_many_arguments)]
fn try_update(
    gram: &Array2<f64>,
    labels: &[f64],
    c: f64,
    i: usize,
    j: usize,
    alphas: &mut [f64],
    bias: &mut f64,
    errors: &mut [f64],
) -> bool {
    let (y_i, y_j) = (labels[i], labels[j]);
    let (a_i_old, a_j_old) = (alphas[i], alphas[j]);
    let (e_i, e_j) = (errors[i], errors[j]);

    let (low, high) = if (y_i - y_j).abs() > f64::EPSILON {
        let diff = a_j_old - a_i_old;
        (diff.max(0.0), (c + diff).min(c))
    } else {
        let total = a_i_old + a_j_old;
        ((total - c).max(0.0), total.min(c))
    };
    if (high - low).abs() < 1e-12 {
        return false;
    }

    let eta = 2.0 * gram[[i, j]] - gram[[i, i]] - gram[[j, j]];
    if eta >= 0.0 {
        return false;
    }
    let mut a_j = a_j_old - y_j * (e_i - e_j) / eta;
    a_j = a_j.clamp(low, high);
    if (a_j - a_j_old).abs() < 1e-7 {
        return false;
    }
    let a_i = a_i_old + y_i * y_j * (a_j_old - a_j);

    let b1 = *bias - e_i
        - y_i * (a_i - a_i_old) * gram[[i, i]]
        - y_j * (a_j - a_j_old) * gram[[i, j]];
    let b2 = *bias - e_j
        - y_i * (a_i - a_i_old) * gram[[i, j]]
        - y_j * (a_j - a_j_old) * gram[[j, j]];
    let new_bias = if a_i > 0.0 && a_i < c {
        b1
    } else if a_j > 0.0 && a_j < c {
        b2
    } else {
        (b1 + b2) / 2.0
    };

    let db = new_bias - *bias;
    let (d_i, d_j) = (y_i * (a_i - a_i_old), y_j * (a_j - a_j_old));
    for k in 0..labels.len() {
        errors[k] += d_i * gram[[i, k]] + d_j * gram[[j, k]] + db;
    }
    alphas[i] = a_i;
    alphas[j] = a_j;
    *bias = new_bias;
    true
}

/// Train a one-vs-rest RBF SVM. Classes are ordered by label.
pub fn train_svm(
    samples: &[Array1<f64>],
    labels: &[VarietyLabel],
    config: &SvmConfig,
) -> Result<SvmModel> {
    if config.c <= 0.0 {
        return Err(Error::InvalidConfig("C must be positive".into()));
    }
    if samples.len() != labels.len() || samples.is_empty() {
        return Err(Error::EmptyInput("samples and labels must align".into()));
    }
    let mut classes: Vec<VarietyLabel> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Training {
            run: None,
            message: "SVM needs at least 2 classes".into(),
        });
    }
    for class in &classes {
        if labels.iter().filter(|l| *l == class).count() < 2 {
            return Err(Error::Training {
                run: None,
                message: format!("class {class} has fewer than 2 samples"),
            });
        }
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: samples.iter().map(|s| s.len()).find(|&l| l != dim).unwrap(),
        });
    }
    let gamma = resolve_gamma(samples, config.gamma)?;

    // shared Gram matrix for all one-vs-rest subproblems
    let n = samples.len();
    let mut gram = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let k = rbf_kernel(
                samples[i].as_slice().unwrap(),
                samples[j].as_slice().unwrap(),
                gamma,
            )?;
            gram[[i, j]] = k;
            gram[[j, i]] = k;
        }
    }

    let problems = classes
        .iter()
        .map(|class| {
            let signed: Vec<f64> = labels
                .iter()
                .map(|l| if l == class { 1.0 } else { -1.0 })
                .collect();
            let solution = smo_solve(&gram, &signed, config.c, config.tolerance, config.max_passes);
            let mut coefficients = Vec::new();
            let mut support_vectors = Vec::new();
            for (i, &alpha) in solution.alphas.iter().enumerate() {
                if alpha > 1e-12 {
                    coefficients.push(alpha * signed[i]);
                    support_vectors.push(samples[i].clone());
                }
            }
            BinaryProblem {
                coefficients,
                support_vectors,
                bias: solution.bias,
            }
        })
        .collect();

    Ok(SvmModel {
        classes,
        gamma,
        dim,
        config: config.clone(),
        problems,
    })
}

/// Argmax over one-vs-rest decision values; ties break by class order.
pub fn predict_svm(model: &SvmModel, x: &[f64]) -> Result<(VarietyLabel, Vec<f64>)> {
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: x.len(),
        });
    }
    let values: Vec<f64> = model
        .problems
        .iter()
        .map(|p| p.decision_value(x, model.gamma))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    Ok((model.classes[best].clone(), values))
}

impl SvmModel {
    pub fn save<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(w, VERSION)?;
        let config_json = serde_json::to_string(&self.config).expect("config serialize");
        binio::write_str(w, &config_json)?;
        binio::write_f64(w, self.gamma)?;
        binio::write_u64(w, self.dim as u64)?;
        binio::write_u64(w, self.classes.len() as u64)?;
        for class in &self.classes {
            binio::write_str(w, class.as_str())?;
        }
        for problem in &self.problems {
            binio::write_f64(w, problem.bias)?;
            binio::write_u64(w, problem.support_vectors.len() as u64)?;
            for (coef, sv) in problem.coefficients.iter().zip(&problem.support_vectors) {
                binio::write_f64(w, *coef)?;
                binio::write_f64_slice(w, sv.as_slice().unwrap())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        binio::check_magic(r, MAGIC, "svm")?;
        let version = binio::read_u32(r)?;
        if version != VERSION {
            return Err(Error::Model(format!("unsupported svm version {version}")));
        }
        let config: SvmConfig = serde_json::from_str(&binio::read_str(r)?)
            .map_err(|e| Error::Model(format!("bad svm config: {e}")))?;
        let gamma = binio::read_f64(r)?;
        let dim = binio::read_u64(r)? as usize;
        let n_classes = binio::read_u64(r)? as usize;
        let mut classes = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            classes.push(VarietyLabel::new(&binio::read_str(r)?)?);
        }
        let mut problems = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            let bias = binio::read_f64(r)?;
            let n_sv = binio::read_u64(r)? as usize;
            let mut coefficients = Vec::with_capacity(n_sv);
            let mut support_vectors = Vec::with_capacity(n_sv);
            for _ in 0..n_sv {
                coefficients.push(binio::read_f64(r)?);
                support_vectors.push(Array1::from_vec(binio::read_f64_vec(r)?));
            }
            problems.push(BinaryProblem {
                coefficients,
                support_vectors,
                bias,
            });
        }
        Ok(SvmModel {
            classes,
            gamma,
            dim,
            config,
            problems,
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
