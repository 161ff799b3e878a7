//! Shared helpers for the integration tests: random cases and independent
//! finite-difference / brute-force oracles.

#![allow(dead_code)]

use ukd_core::trainer::{parameter_gradients, Batch};
use ukd_core::{
    build_targets, softmax_t, DistillConfig, LabelVector, LogitMatrix, Matrix, Prng, ProbMatrix, Strategy,
    StudentModel, TargetSet, TeacherBank, Temperature,
};

pub fn random_matrix(rng: &mut Prng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.next_normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_labels(rng: &mut Prng, n: usize, c: usize) -> LabelVector {
    LabelVector::new((0..n).map(|_| rng.below(c)).collect(), c).unwrap()
}

pub fn random_bank(rng: &mut Prng, k: usize, n: usize, c: usize, scale: f64) -> TeacherBank {
    TeacherBank::new(
        (0..k)
            .map(|t| LogitMatrix::new(format!("t{t}"), random_matrix(rng, n, c, scale)).unwrap())
            .collect(),
    )
    .unwrap()
}

pub fn random_probs(rng: &mut Prng, n: usize, c: usize) -> ProbMatrix {
    let z = random_matrix(rng, n, c, 2.0);
    softened(&z, 1.0)
}

pub fn softened(z: &Matrix, tau: f64) -> ProbMatrix {
    let t = Temperature::new(tau).unwrap();
    let rows: Vec<Vec<f64>> = z.iter_rows().map(|r| softmax_t(r, t).unwrap()).collect();
    ProbMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap()
}

/// Target set of the given strategy built from a random K-teacher bank.
pub fn random_targets(
    rng: &mut Prng,
    strategy: Strategy,
    labels: &LabelVector,
    config: &DistillConfig,
    k: usize,
) -> TargetSet {
    if strategy == Strategy::None {
        return TargetSet::none();
    }
    let k = if strategy == Strategy::KdSingle { 1 } else { k };
    let bank = random_bank(rng, k, labels.len(), labels.classes(), 2.0);
    build_targets(&bank, labels, config).unwrap()
}

/// Largest entrywise relative error, with magnitudes below `floor` compared
/// in absolute terms.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_diff(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

fn with_params(model: &StudentModel, params: &[f64]) -> StudentModel {
    let mut m = model.clone();
    for (p, &v) in m.params_mut().zip(params) {
        *p = v;
    }
    m
}

fn flat(model: &StudentModel) -> Vec<f64> {
    let mut m = model.clone();
    m.params_mut().map(|p| *p).collect()
}

/// Analytic vs finite-difference parameter gradients of the batch loss.
pub fn param_grad_check(model: &StudentModel, batch: &Batch, config: &DistillConfig, step: f64) -> (Vec<f64>, Vec<f64>) {
    let (_, g) = parameter_gradients(model, batch, config).unwrap();
    let x = flat(model);
    let numeric = central_diff(&x, step, |p| {
        let m = with_params(model, p);
        let logits = ukd_core::forward(&m, &batch.features).unwrap();
        ukd_core::trainer::total_loss(&logits, &batch.labels, &batch.targets, config).unwrap()
    });
    (g.flatten(), numeric)
}

/// Smallest |pre-activation| over the batch; small values mean a finite
/// difference may straddle a ReLU kink.
pub fn min_abs_preactivation(model: &StudentModel, features: &Matrix) -> f64 {
    let mut best = f64::INFINITY;
    for x in features.iter_rows() {
        for u in 0..model.hidden_dim() {
            let mut s = model.b1[u];
            for (w, xi) in model.w1.row(u).iter().zip(x) {
                s += w * xi;
            }
            best = best.min(s.abs());
        }
    }
    best
}
