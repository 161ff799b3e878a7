//! Distillation losses and their exact gradients with respect to student logits.

use crate::config::{DistillConfig, Strategy};
use crate::ensemble::{LabelVector, TargetSet};
use crate::error::{Result, UkdError};
use crate::matrix::{Matrix, ProbMatrix};
use crate::numerics::{kl_unchecked, softmax_into, Temperature, PROB_FLOOR};

fn check_rows(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(UkdError::dims(format!("{what}: {a} rows vs {b}")));
    }
    Ok(())
}

fn check_shape(logits: &Matrix, target: &ProbMatrix) -> Result<()> {
    if logits.rows() != target.n() || logits.cols() != target.c() {
        return Err(UkdError::dims(format!(
            "student logits are {}x{}, target is {}x{}",
            logits.rows(),
            logits.cols(),
            target.n(),
            target.c()
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood of the labels.
pub fn ce_loss(student_probs: &ProbMatrix, labels: &LabelVector) -> Result<f64> {
    check_rows("ce_loss", student_probs.n(), labels.len())?;
    if student_probs.n() == 0 {
        return Err(UkdError::precondition("ce_loss over zero samples"));
    }
    let mut acc = 0.0;
    for (i, &y) in labels.as_slice().iter().enumerate() {
        let row = student_probs.row(i);
        if y >= row.len() {
            return Err(UkdError::LabelOutOfRange {
                label: y,
                classes: row.len(),
            });
        }
        acc -= row[y].max(PROB_FLOOR).ln();
    }
    Ok(acc / student_probs.n() as f64)
}

/// `τ² / N · Σ_n KL(target_n || softmax(logits_n / τ))`.
pub fn kd_loss(student_logits: &Matrix, target: &ProbMatrix, tau: Temperature) -> Result<f64> {
    check_shape(student_logits, target)?;
    let n = student_logits.rows();
    if n == 0 {
        return Err(UkdError::precondition("kd_loss over zero samples"));
    }
    let mut p = vec![0.0; student_logits.cols()];
    let mut acc = 0.0;
    for i in 0..n {
        softmax_into(student_logits.row(i), tau, &mut p);
        acc += kl_unchecked(target.row(i), &p);
    }
    Ok(tau.get() * tau.get() * acc / n as f64)
}

/// Mean of the per-teacher distillation losses.
pub fn avg1_loss(student_logits: &Matrix, targets: &[ProbMatrix], tau: Temperature) -> Result<f64> {
    if targets.is_empty() {
        return Err(UkdError::precondition("avg1_loss needs at least one target"));
    }
    let mut acc = 0.0;
    for t in targets {
        acc += kd_loss(student_logits, t, tau)?;
    }
    Ok(acc / targets.len() as f64)
}

fn check_strategy(target_set: &TargetSet, config: &DistillConfig) -> Result<()> {
    if target_set.strategy() != config.strategy {
        return Err(UkdError::StrategyMismatch(format!(
            "targets were built for {} but config requests {}",
            target_set.strategy(),
            config.strategy
        )));
    }
    Ok(())
}

fn plain_probs(student_logits: &Matrix) -> ProbMatrix {
    let mut p = Matrix::zeros(student_logits.rows(), student_logits.cols());
    for i in 0..student_logits.rows() {
        softmax_into(student_logits.row(i), Temperature::ONE, p.row_mut(i));
    }
    ProbMatrix::from_trusted(p)
}

/// `α · CE + (1 − α) · KD`. [`Strategy::None`] has no KD term and trains on
/// the plain cross-entropy.
pub fn total_loss(
    student_logits: &Matrix,
    labels: &LabelVector,
    target_set: &TargetSet,
    config: &DistillConfig,
) -> Result<f64> {
    check_strategy(target_set, config)?;
    let ce = ce_loss(&plain_probs(student_logits), labels)?;
    if config.strategy == Strategy::None {
        return Ok(ce);
    }
    let tau = config.temperature()?;
    let kd = match config.strategy {
        Strategy::Avg1 => avg1_loss(student_logits, target_set.targets(), tau)?,
        _ => kd_loss(student_logits, &target_set.targets()[0], tau)?,
    };
    Ok(config.alpha * ce + (1.0 - config.alpha) * kd)
}

/// Loss value and its gradient with respect to every student logit.
///
/// Per row the gradient is `α (p¹ − y) / N + (1 − α) τ (p^τ − q) / N`, where
/// `q` is the target row (the mean of the K targets for AVG1).
pub fn loss_and_gradient(
    student_logits: &Matrix,
    labels: &LabelVector,
    target_set: &TargetSet,
    config: &DistillConfig,
) -> Result<(f64, Matrix)> {
    check_strategy(target_set, config)?;
    let (n, c) = (student_logits.rows(), student_logits.cols());
    check_rows("loss_gradient", n, labels.len())?;
    if n == 0 {
        return Err(UkdError::precondition("loss over zero samples"));
    }
    for t in target_set.targets() {
        check_shape(student_logits, t)?;
    }
    let distill = config.strategy != Strategy::None;
    let alpha = if distill { config.alpha } else { 1.0 };
    let tau = config.temperature()?;
    let inv_n = 1.0 / n as f64;
    let k = target_set.targets().len().max(1) as f64;

    let mut grad = Matrix::zeros(n, c);
    let mut p1 = vec![0.0; c];
    let mut pt = vec![0.0; c];
    let mut q = vec![0.0; c];
    let (mut ce, mut kd) = (0.0, 0.0);
    for i in 0..n {
        let logits = student_logits.row(i);
        let y = labels.get(i);
        if y >= c {
            return Err(UkdError::LabelOutOfRange {
                label: y,
                classes: c,
            });
        }
        softmax_into(logits, Temperature::ONE, &mut p1);
        ce -= p1[y].max(PROB_FLOOR).ln();
        let g = grad.row_mut(i);
        for (gj, &pj) in g.iter_mut().zip(&p1) {
            *gj = alpha * pj * inv_n;
        }
        g[y] -= alpha * inv_n;

        if distill {
            softmax_into(logits, tau, &mut pt);
            q.iter_mut().for_each(|v| *v = 0.0);
            for t in target_set.targets() {
                let row = t.row(i);
                kd += kl_unchecked(row, &pt);
                for (qj, &tj) in q.iter_mut().zip(row) {
                    *qj += tj;
                }
            }
            let scale = (1.0 - alpha) * tau.get() * inv_n;
            for ((gj, &pj), &qj) in g.iter_mut().zip(&pt).zip(&q) {
                *gj += scale * (pj - qj / k);
            }
        }
    }
    let ce = ce * inv_n;
    let loss = if distill {
        let kd = tau.get() * tau.get() * kd * inv_n / k;
        alpha * ce + (1.0 - alpha) * kd
    } else {
        alpha * ce
    };
    Ok((loss, grad))
}

pub fn loss_gradient(
    student_logits: &Matrix,
    labels: &LabelVector,
    target_set: &TargetSet,
    config: &DistillConfig,
) -> Result<Matrix> {
    loss_and_gradient(student_logits, labels, target_set, config).map(|(_, g)| g)
}
