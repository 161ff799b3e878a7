//! Two-layer ReLU classifier with hand-written backpropagation.

use crate::datagen::Prng;
use crate::error::{Result, UkdError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    /// hidden × input
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// classes × hidden
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl StudentModel {
    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(input_dim: usize, hidden_dim: usize, classes: usize, rng: &mut Prng) -> Self {
        let mut layer = |rows: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..rows * fan_in)
                .map(|_| bound * (2.0 * rng.next_f64() - 1.0))
                .collect();
            Matrix::from_vec(rows, fan_in, data).expect("sized above")
        };
        let w1 = layer(hidden_dim, input_dim);
        let w2 = layer(classes, hidden_dim);
        StudentModel {
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; classes],
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, classes: usize) -> Self {
        StudentModel {
            w1: Matrix::zeros(hidden_dim, input_dim),
            b1: vec![0.0; hidden_dim],
            w2: Matrix::zeros(classes, hidden_dim),
            b2: vec![0.0; classes],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn classes(&self) -> usize {
        self.w2.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }

    /// Every parameter in a fixed order: w1, b1, w2, b2.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .as_mut_slice()
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.as_mut_slice().iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    /// `θ ← θ − lr · ∇θ`
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        let g = grads
            .w1
            .as_slice()
            .iter()
            .chain(&grads.b1)
            .chain(grads.w2.as_slice())
            .chain(&grads.b2);
        for (p, d) in self.params_mut().zip(g) {
            *p -= lr * d;
        }
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.w1
            .as_slice()
            .iter()
            .chain(&self.b1)
            .chain(self.w2.as_slice())
            .chain(&self.b2)
            .copied()
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Hidden pre-activations kept from the forward pass for backpropagation.
pub(crate) struct ForwardCache {
    pub pre: Matrix,
}

fn check_input(model: &StudentModel, features: &Matrix) -> Result<()> {
    if features.cols() != model.input_dim() {
        return Err(UkdError::dims(format!(
            "model expects {} features, got {}",
            model.input_dim(),
            features.cols()
        )));
    }
    Ok(())
}

pub(crate) fn forward_cached(model: &StudentModel, features: &Matrix) -> Result<(Matrix, ForwardCache)> {
    check_input(model, features)?;
    let (b, h, c) = (features.rows(), model.hidden_dim(), model.classes());
    let mut pre = Matrix::zeros(b, h);
    let mut logits = Matrix::zeros(b, c);
    let mut act = vec![0.0; h];
    for i in 0..b {
        let x = features.row(i);
        let pre_row = pre.row_mut(i);
        for (u, (a, pu)) in act.iter_mut().zip(pre_row.iter_mut()).enumerate() {
            let w = model.w1.row(u);
            let mut s = model.b1[u];
            for (wj, xj) in w.iter().zip(x) {
                s += wj * xj;
            }
            *pu = s;
            *a = s.max(0.0);
        }
        let out = logits.row_mut(i);
        for (k, o) in out.iter_mut().enumerate() {
            let w = model.w2.row(k);
            let mut s = model.b2[k];
            for (wj, aj) in w.iter().zip(&act) {
                s += wj * aj;
            }
            *o = s;
        }
    }
    Ok((logits, ForwardCache { pre }))
}

/// `W2 · relu(W1 · x + b1) + b2` for every row of `features`.
pub fn forward(model: &StudentModel, features: &Matrix) -> Result<Matrix> {
    forward_cached(model, features).map(|(l, _)| l)
}

/// Backpropagates a logit gradient through both layers.
pub(crate) fn backward(
    model: &StudentModel,
    features: &Matrix,
    cache: &ForwardCache,
    dlogits: &Matrix,
) -> Gradients {
    let (h, c) = (model.hidden_dim(), model.classes());
    let mut g = Gradients {
        w1: Matrix::zeros(h, model.input_dim()),
        b1: vec![0.0; h],
        w2: Matrix::zeros(c, h),
        b2: vec![0.0; c],
    };
    let mut dpre = vec![0.0; h];
    for i in 0..features.rows() {
        let x = features.row(i);
        let pre = cache.pre.row(i);
        let dl = dlogits.row(i);
        dpre.iter_mut().for_each(|v| *v = 0.0);
        for (k, &dk) in dl.iter().enumerate() {
            if dk == 0.0 {
                continue;
            }
            g.b2[k] += dk;
            let gw = g.w2.row_mut(k);
            for (gwj, &p) in gw.iter_mut().zip(pre) {
                if p > 0.0 {
                    *gwj += dk * p;
                }
            }
            for (dp, &w) in dpre.iter_mut().zip(model.w2.row(k)) {
                *dp += dk * w;
            }
        }
        for (u, (&p, &d)) in pre.iter().zip(&dpre).enumerate() {
            if p <= 0.0 {
                continue;
            }
            g.b1[u] += d;
            for (gw, &xj) in g.w1.row_mut(u).iter_mut().zip(x) {
                *gw += d * xj;
            }
        }
    }
    g
}
