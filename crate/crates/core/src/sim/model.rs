//! Per-class sigmoid linear scorer standing in for the detector head.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `p(c | x) = sigmoid(w_c . x + b_c)`, independently per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    /// `classes x features`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ToyModel {
    /// Small Gaussian weights (std 0.01), zero bias.
    pub fn init(classes: usize, features: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.01).expect("valid std");
        let weights = Array2::from_shape_simple_fn((classes, features), || normal.sample(&mut rng));
        Self {
            weights,
            bias: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    /// Logits for a batch of rows (`n x features` -> `n x classes`).
    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + self.bias.view().insert_axis(Axis(0))
    }

    pub fn logits_one(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weights.dot(&x) + &self.bias
    }

    pub fn probs(&self, x: &Array2<f64>) -> Array2<f64> {
        self.logits(x).mapv(sigmoid)
    }

    pub fn probs_one(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.logits_one(x).mapv(sigmoid)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Accumulated parameter gradient.
#[derive(Debug, Clone)]
pub struct ModelGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ModelGrad {
    pub fn zeros_like(model: &ToyModel) -> Self {
        Self {
            weights: Array2::zeros(model.weights.dim()),
            bias: Array1::zeros(model.bias.len()),
        }
    }

    /// Adds `scale * dlogits ⊗ x` for one input row.
    pub fn add_row(&mut self, x: ArrayView1<f64>, dlogits: ArrayView1<f64>, scale: f64) {
        for (c, &d) in dlogits.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let g = scale * d;
            self.weights.row_mut(c).scaled_add(g, &x);
            self.bias[c] += g;
        }
    }

    pub fn apply(&self, model: &mut ToyModel, lr: f64) {
        model.weights.scaled_add(-lr, &self.weights);
        model.bias.scaled_add(-lr, &self.bias);
    }
}
