//! Per-sample teacher weighting and assembly of the ensemble soft target.
//!
//! Each teacher's distribution for sample `n` is scored by the inverse
//! cross-entropy against a reference built from the label (one-hot for GTD,
//! the preferred knowledge distribution for PKD). Scores are normalized across
//! teachers per sample and the assembled target is the resulting convex
//! combination of softened teacher distributions. All of this happens once,
//! before student training, so no teacher is needed afterwards.

use crate::config::{DistillConfig, Strategy};
use crate::error::{Result, UkdError};
use crate::matrix::{LogitMatrix, Matrix, ProbMatrix};
use crate::numerics::{cross_entropy_unchecked, kl_unchecked, softmax_into, Temperature};

/// Divergences below this are clamped before inversion.
pub const SIMILARITY_CLAMP: f64 = 1e-12;

/// Allowed drift of a normalized weight row sum before `assemble` refuses it.
pub const WEIGHT_SUM_TOL: f64 = 1e-6;

/// Approximate floating-point operation costs of the assembly kernels.
const SOFTMAX_OPS_PER_CLASS: u64 = 5;
const CE_OPS_PER_CLASS: u64 = 3;
const MIX_OPS_PER_CLASS: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(UkdError::LabelOutOfRange { label, classes });
        }
        Ok(LabelVector { labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn select(&self, indices: &[usize]) -> LabelVector {
        LabelVector {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }
}

/// K aligned teacher logit matrices; row `n` of each belongs to sample `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherBank {
    teachers: Vec<LogitMatrix>,
}

impl TeacherBank {
    pub fn new(teachers: Vec<LogitMatrix>) -> Result<Self> {
        let first = teachers
            .first()
            .ok_or_else(|| UkdError::precondition("teacher bank needs at least one teacher"))?;
        let (n, c) = (first.n(), first.c());
        for t in &teachers[1..] {
            if t.n() != n || t.c() != c {
                return Err(UkdError::dims(format!(
                    "teacher `{}` is {}x{}, bank is {n}x{c}",
                    t.source(),
                    t.n(),
                    t.c()
                )));
            }
        }
        Ok(TeacherBank { teachers })
    }

    pub fn k(&self) -> usize {
        self.teachers.len()
    }

    pub fn n(&self) -> usize {
        self.teachers[0].n()
    }

    pub fn c(&self) -> usize {
        self.teachers[0].c()
    }

    pub fn teachers(&self) -> &[LogitMatrix] {
        &self.teachers
    }

    pub fn ids(&self) -> Vec<&str> {
        self.teachers.iter().map(LogitMatrix::source).collect()
    }

    fn check_labels(&self, labels: &LabelVector) -> Result<()> {
        if labels.len() != self.n() {
            return Err(UkdError::dims(format!(
                "bank has {} samples but {} labels were given",
                self.n(),
                labels.len()
            )));
        }
        if labels.classes() != self.c() {
            return Err(UkdError::dims(format!(
                "bank has {} classes but labels declare {}",
                self.c(),
                labels.classes()
            )));
        }
        Ok(())
    }
}

/// Raw similarity scores and their per-sample normalization across teachers.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights {
    raw: Matrix,
    normalized: Matrix,
}

impl EnsembleWeights {
    /// Normalizes each row of positive raw scores to sum to one.
    pub fn from_raw(raw: Matrix) -> Result<Self> {
        let mut normalized = raw.clone();
        for i in 0..raw.rows() {
            let row = normalized.row_mut(i);
            if row.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(UkdError::precondition(format!(
                    "raw weights must be positive and finite, row {i} is {row:?}"
                )));
            }
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(EnsembleWeights { raw, normalized })
    }

    /// Uses already-normalized weights (zeros allowed) as both raw and normalized.
    pub fn from_normalized(weights: Matrix) -> Self {
        EnsembleWeights {
            raw: weights.clone(),
            normalized: weights,
        }
    }

    pub fn raw(&self) -> &Matrix {
        &self.raw
    }

    pub fn normalized(&self) -> &Matrix {
        &self.normalized
    }

    pub fn select_rows(&self, indices: &[usize]) -> EnsembleWeights {
        EnsembleWeights {
            raw: self.raw.select_rows(indices),
            normalized: self.normalized.select_rows(indices),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PkdParams {
    h: f64,
    classes: usize,
}

impl PkdParams {
    /// `h` must exceed the uniform share `1/C` and be at most 1. With a single
    /// class only `h = 1` is meaningful.
    pub fn new(h: f64, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(UkdError::precondition("PKD needs at least one class"));
        }
        if !(h <= 1.0) {
            return Err(UkdError::precondition(format!("PKD h must be <= 1, got {h}")));
        }
        if classes == 1 && h < 1.0 {
            return Err(UkdError::precondition(
                "PKD with one class leaves off-class mass undefined unless h = 1",
            ));
        }
        if classes > 1 && !(h > 1.0 / classes as f64) {
            return Err(UkdError::precondition(format!(
                "PKD h must exceed 1/C = {}, got {h}",
                1.0 / classes as f64
            )));
        }
        Ok(PkdParams { h, classes })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

/// Reference distribution used to score teachers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Gtd,
    Pkd,
}

/// One-hot ground-truth distribution.
pub fn make_gtd(label: usize, classes: usize) -> Result<Vec<f64>> {
    if label >= classes {
        return Err(UkdError::LabelOutOfRange { label, classes });
    }
    let mut row = vec![0.0; classes];
    row[label] = 1.0;
    Ok(row)
}

/// `h` on the label, `(1 - h) / (C - 1)` on every other class.
pub fn make_pkd(label: usize, params: PkdParams) -> Result<Vec<f64>> {
    let c = params.classes;
    if label >= c {
        return Err(UkdError::LabelOutOfRange { label, classes: c });
    }
    let off = if c > 1 {
        (1.0 - params.h) / (c - 1) as f64
    } else {
        0.0
    };
    let mut row = vec![off; c];
    row[label] = params.h;
    Ok(row)
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(UkdError::dims(format!(
            "reference has {} classes, teacher has {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Inverse KL divergence of the teacher distribution from the reference,
/// saturating at `1 / SIMILARITY_CLAMP`.
pub fn similarity_kl(reference: &[f64], teacher_dist: &[f64]) -> Result<f64> {
    check_pair(reference, teacher_dist)?;
    Ok(1.0 / kl_unchecked(reference, teacher_dist).max(SIMILARITY_CLAMP))
}

/// Inverse cross-entropy of the teacher distribution against the reference.
pub fn similarity_ce(reference: &[f64], teacher_dist: &[f64]) -> Result<f64> {
    check_pair(reference, teacher_dist)?;
    Ok(inverse_ce(reference, teacher_dist))
}

#[inline]
fn inverse_ce(reference: &[f64], teacher_dist: &[f64]) -> f64 {
    // A one-hot reference against a teacher that puts all of its mass on the
    // label gives CE = 0; saturate like the KL form.
    1.0 / cross_entropy_unchecked(reference, teacher_dist).max(SIMILARITY_CLAMP)
}

fn softened(bank: &TeacherBank, tau: Temperature) -> Vec<Matrix> {
    bank.teachers
        .iter()
        .map(|t| {
            let mut out = Matrix::zeros(t.n(), t.c());
            for i in 0..t.n() {
                softmax_into(t.row(i), tau, out.row_mut(i));
            }
            out
        })
        .collect()
}

fn weights_counted(
    bank: &TeacherBank,
    labels: &LabelVector,
    mode: WeightMode,
    params: PkdParams,
    weight_tau: Temperature,
    ops: &mut u64,
) -> Result<EnsembleWeights> {
    bank.check_labels(labels)?;
    if mode == WeightMode::Pkd && params.classes != bank.c() {
        return Err(UkdError::dims(format!(
            "PKD parameters are for {} classes, bank has {}",
            params.classes,
            bank.c()
        )));
    }
    let (n, k, c) = (bank.n(), bank.k(), bank.c() as u64);
    let dists = softened(bank, weight_tau);
    let mut raw = Matrix::zeros(n, k);
    for i in 0..n {
        let reference = match mode {
            WeightMode::Gtd => make_gtd(labels.get(i), bank.c())?,
            WeightMode::Pkd => make_pkd(labels.get(i), params)?,
        };
        for (t, dist) in dists.iter().enumerate() {
            raw.set(i, t, inverse_ce(&reference, dist.row(i)));
        }
    }
    *ops += n as u64 * k as u64 * ((SOFTMAX_OPS_PER_CLASS + CE_OPS_PER_CLASS) * c + 3);
    EnsembleWeights::from_raw(raw)
}

/// Scores every teacher on every sample and normalizes across teachers.
pub fn compute_weights(
    bank: &TeacherBank,
    labels: &LabelVector,
    mode: WeightMode,
    params: PkdParams,
    weight_tau: Temperature,
) -> Result<EnsembleWeights> {
    weights_counted(bank, labels, mode, params, weight_tau, &mut 0)
}

fn assemble_counted(
    bank: &TeacherBank,
    weights: &EnsembleWeights,
    assembly_tau: Temperature,
    ops: &mut u64,
) -> Result<ProbMatrix> {
    let w = weights.normalized();
    if w.rows() != bank.n() || w.cols() != bank.k() {
        return Err(UkdError::dims(format!(
            "weights are {}x{}, bank needs {}x{}",
            w.rows(),
            w.cols(),
            bank.n(),
            bank.k()
        )));
    }
    for (i, row) in w.iter_rows().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL || row.iter().any(|&v| v < 0.0) {
            return Err(UkdError::precondition(format!(
                "weight row {i} is not normalized (sum {sum})"
            )));
        }
    }
    let (n, c) = (bank.n(), bank.c());
    let mut out = Matrix::zeros(n, c);
    let mut dist = vec![0.0; c];
    for i in 0..n {
        let target = out.row_mut(i);
        for (t, teacher) in bank.teachers.iter().enumerate() {
            softmax_into(teacher.row(i), assembly_tau, &mut dist);
            let s = w.get(i, t);
            for (o, &d) in target.iter_mut().zip(&dist) {
                *o += s * d;
            }
        }
    }
    *ops += n as u64 * bank.k() as u64 * (SOFTMAX_OPS_PER_CLASS + MIX_OPS_PER_CLASS) * c as u64;
    ProbMatrix::new(out)
}

/// Convex combination of the softened teacher distributions, per sample.
pub fn assemble(
    bank: &TeacherBank,
    weights: &EnsembleWeights,
    assembly_tau: Temperature,
) -> Result<ProbMatrix> {
    assemble_counted(bank, weights, assembly_tau, &mut 0)
}

/// Soft targets for one strategy, ready for student training.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    strategy: Strategy,
    targets: Vec<ProbMatrix>,
    weights: Option<EnsembleWeights>,
    assembly_ops: u64,
}

impl TargetSet {
    /// Empty target set for hard-label training.
    pub fn none() -> Self {
        TargetSet {
            strategy: Strategy::None,
            targets: Vec::new(),
            weights: None,
            assembly_ops: 0,
        }
    }

    /// Checks the per-strategy target count: none for NONE, one or more for
    /// AVG1, exactly one otherwise.
    pub fn new(
        strategy: Strategy,
        targets: Vec<ProbMatrix>,
        weights: Option<EnsembleWeights>,
    ) -> Result<Self> {
        let ok = match strategy {
            Strategy::None => targets.is_empty(),
            Strategy::Avg1 => !targets.is_empty(),
            _ => targets.len() == 1,
        };
        if !ok {
            return Err(UkdError::StrategyMismatch(format!(
                "{strategy} cannot carry {} target matrices",
                targets.len()
            )));
        }
        if let Some(first) = targets.first() {
            if targets.iter().any(|t| t.n() != first.n() || t.c() != first.c()) {
                return Err(UkdError::dims("target matrices are not aligned"));
            }
        }
        Ok(TargetSet {
            strategy,
            targets,
            weights,
            assembly_ops: 0,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn targets(&self) -> &[ProbMatrix] {
        &self.targets
    }

    pub fn weights(&self) -> Option<&EnsembleWeights> {
        self.weights.as_ref()
    }

    /// Floating-point operations spent building these targets.
    pub fn assembly_ops(&self) -> u64 {
        self.assembly_ops
    }

    /// Sample count, or `None` for hard-label training.
    pub fn n(&self) -> Option<usize> {
        self.targets.first().map(ProbMatrix::n)
    }

    pub fn select_rows(&self, indices: &[usize]) -> TargetSet {
        TargetSet {
            strategy: self.strategy,
            targets: self.targets.iter().map(|t| t.select_rows(indices)).collect(),
            weights: self.weights.as_ref().map(|w| w.select_rows(indices)),
            assembly_ops: self.assembly_ops,
        }
    }
}

/// Dispatches on `config.strategy` and builds the distillation targets.
pub fn build_targets(
    bank: &TeacherBank,
    labels: &LabelVector,
    config: &DistillConfig,
) -> Result<TargetSet> {
    bank.check_labels(labels)?;
    let tau = config.temperature()?;
    let mut ops = 0u64;
    let (targets, weights) = match config.strategy {
        Strategy::None => {
            return Err(UkdError::StrategyMismatch(
                "NONE trains on hard labels and has no distillation targets".into(),
            ))
        }
        Strategy::KdSingle => {
            if bank.k() != 1 {
                return Err(UkdError::StrategyMismatch(format!(
                    "KD_SINGLE needs exactly one teacher, bank has {}",
                    bank.k()
                )));
            }
            ops += (bank.n() * bank.c()) as u64 * SOFTMAX_OPS_PER_CLASS;
            (softened(bank, tau), None)
        }
        Strategy::Avg1 => {
            ops += (bank.n() * bank.c() * bank.k()) as u64 * SOFTMAX_OPS_PER_CLASS;
            (softened(bank, tau), None)
        }
        Strategy::Avg2 => {
            let k = bank.k() as f64;
            let w = Matrix::from_vec(bank.n(), bank.k(), vec![1.0 / k; bank.n() * bank.k()])?;
            let weights = EnsembleWeights::from_normalized(w);
            let mean = assemble_counted(bank, &weights, tau, &mut ops)?;
            (vec![mean.into_values()], None)
        }
        Strategy::Gtd | Strategy::Pkd => {
            let mode = if config.strategy == Strategy::Gtd {
                WeightMode::Gtd
            } else {
                WeightMode::Pkd
            };
            let params = match mode {
                WeightMode::Gtd => PkdParams::new(1.0, bank.c())?,
                WeightMode::Pkd => PkdParams::new(config.h, bank.c())?,
            };
            let weights = weights_counted(
                bank,
                labels,
                mode,
                params,
                config.weight_temperature()?,
                &mut ops,
            )?;
            let target = assemble_counted(bank, &weights, tau, &mut ops)?;
            (vec![target.into_values()], Some(weights))
        }
    };
    let targets = targets.into_iter().map(ProbMatrix::from_trusted).collect();
    let mut set = TargetSet::new(config.strategy, targets, weights)?;
    set.assembly_ops = ops;
    Ok(set)
}
