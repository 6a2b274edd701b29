//! Named parameter tensors with accumulated gradients and the Adam update.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::tape::{NodeId, Tape};

#[derive(Debug, Clone)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    grads: Vec<Array2<f64>>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Array2<f64>) -> usize {
        assert!(!self.index.contains_key(name), "duplicate param {name}");
        let grad = Array2::zeros(value.raw_dim());
        self.names.push(name.to_string());
        self.values.push(value);
        self.grads.push(grad);
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    /// Glorot-style uniform init in +-sqrt(6 / (fan_in + fan_out)).
    pub fn add_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha20Rng) {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let value = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound));
        self.add(name, value);
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.add(name, Array2::zeros((rows, cols)));
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, name: &str) -> &Array2<f64> {
        &self.values[self.index[name]]
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Array2<f64> {
        let i = self.index[name];
        &mut self.values[i]
    }

    pub fn grad(&self, name: &str) -> &Array2<f64> {
        &self.grads[self.index[name]]
    }

    /// Push every parameter onto the tape as a leaf, in declaration order.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let ids = self.values.iter().map(|v| tape.leaf(v.clone())).collect();
        BoundParams { ids }
    }

    /// Add the tape gradients of a bound forward pass into the accumulators.
    pub fn accumulate(&mut self, tape: &Tape, bound: &BoundParams) {
        for (grad, &id) in self.grads.iter_mut().zip(&bound.ids) {
            *grad += tape.grad(id);
        }
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn values(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn set_values(&mut self, values: Vec<Array2<f64>>) {
        assert_eq!(values.len(), self.values.len());
        self.values = values;
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Tape node ids of one forward pass, parallel to `ParamSet` order.
pub struct BoundParams {
    ids: Vec<NodeId>,
}

impl BoundParams {
    pub fn id(&self, params: &ParamSet, name: &str) -> NodeId {
        self.ids[params.index[name]]
    }
}

/// Adam optimizer state: first/second moments per parameter plus the
/// shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            m: params.values.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
            v: params.values.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam step using the accumulated gradients.
    pub fn step(&mut self, params: &mut ParamSet, learning_rate: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.values.len() {
            let g = &params.grads[i];
            self.m[i] = &self.m[i] * self.beta1 + g * (1.0 - self.beta1);
            self.v[i] = &self.v[i] * self.beta2 + &(g * g) * (1.0 - self.beta2);
            let m_hat = &self.m[i] / bc1;
            let v_hat = &self.v[i] / bc2;
            let update = m_hat / (v_hat.mapv(f64::sqrt) + self.epsilon);
            params.values[i] -= &(update * learning_rate);
        }
    }
}
