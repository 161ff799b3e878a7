//! Probability and divergence kernels.
//!
//! All arithmetic is `f64` with plain left-to-right accumulation, so results
//! are bit-reproducible for a fixed input order. Every logarithm takes its
//! argument floored at [`PROB_FLOOR`], and `0 * ln(0)` is treated as zero.

use crate::error::{Result, UkdError};

/// Floor applied to the argument of every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Softmax temperature, strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 {
            Ok(Temperature(tau))
        } else {
            Err(UkdError::precondition(format!(
                "temperature must be finite and > 0, got {tau}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(UkdError::dims(format!(
            "distributions have {} and {} classes",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Temperature softmax written into `out`. Max-subtracted for stability.
///
/// The caller guarantees `logits` is non-empty and finite and that
/// `out.len() == logits.len()`; the checked entry point is [`softmax_t`].
#[inline]
pub fn softmax_into(logits: &[f64], tau: Temperature, out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inv_tau = 1.0 / tau.0;
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        let e = ((z - max) * inv_tau).exp();
        *o = e;
        sum += e;
    }
    let inv = 1.0 / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

pub fn softmax_t(logits: &[f64], tau: Temperature) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(UkdError::precondition("softmax of an empty logit row"));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(UkdError::precondition(format!("non-finite logit {v}")));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, tau, &mut out);
    Ok(out)
}

/// `Σ q_j ln(q_j / max(p_j, ε))`, skipping terms with `q_j = 0`.
#[inline]
pub(crate) fn kl_unchecked(q: &[f64], p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&qj, &pj) in q.iter().zip(p) {
        if qj > 0.0 {
            acc += qj * (qj.max(PROB_FLOOR).ln() - pj.max(PROB_FLOOR).ln());
        }
    }
    acc
}

#[inline]
pub(crate) fn cross_entropy_unchecked(target: &[f64], pred: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&t, &p) in target.iter().zip(pred) {
        if t > 0.0 {
            acc -= t * p.max(PROB_FLOOR).ln();
        }
    }
    acc
}

#[inline]
pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &pj in p {
        if pj > 0.0 {
            acc -= pj * pj.ln();
        }
    }
    acc
}

/// KL divergence `D(q || p)`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> Result<f64> {
    same_len(q, p)?;
    Ok(kl_unchecked(q, p))
}

/// Cross-entropy `-Σ target_j ln(max(pred_j, ε))`.
pub fn cross_entropy_dist(target: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(target, pred)?;
    Ok(cross_entropy_unchecked(target, pred))
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    entropy_unchecked(p)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn top1(p: &[f64]) -> Result<usize> {
    if p.is_empty() {
        return Err(UkdError::precondition("top1 of an empty row"));
    }
    Ok(argmax(p))
}

#[inline]
pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn t(v: f64) -> Temperature {
        Temperature::new(v).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let u = softmax_t(&[0.0, 0.0, 0.0], t(1.0)).unwrap();
        for v in &u {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax_t(&[LN2, 0.0], t(1.0)).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);

        // 50-digit reference: e^1 / (e^1 + e^0.5)
        let hi = softmax_t(&[2.0, 1.0], t(2.0)).unwrap();
        let lo = softmax_t(&[1.0, 0.5], t(1.0)).unwrap();
        assert!((hi[0] - 0.622_459_331_201_854_6).abs() < 1e-15);
        assert!((hi[1] - 0.377_540_668_798_145_4).abs() < 1e-15);
        assert!((hi[0] - lo[0]).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert!(softmax_t(&[1.0, f64::INFINITY], t(1.0)).is_err());
        assert!(softmax_t(&[], t(1.0)).is_err());
    }

    #[test]
    fn softmax_large_logits_are_stable() {
        let p = softmax_t(&[1000.0, 999.0], t(1.0)).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let q = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - LN2).abs() < 1e-15);
        // 50-digit reference value
        let v = kl_divergence(&[0.7, 0.2, 0.1], &[0.5, 0.3, 0.2]).unwrap();
        assert!((v - 0.085_122_825_957_221_64).abs() < 1e-15);
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let u = [0.25; 4];
        assert!((cross_entropy_dist(&u, &u).unwrap() - 4f64.ln()).abs() < 1e-15);
        let q = [0.1, 0.6, 0.3];
        let one_hot = [0.0, 1.0, 0.0];
        assert!((cross_entropy_dist(&one_hot, &q).unwrap() + 0.6f64.ln()).abs() < 1e-15);
        let v = cross_entropy_dist(&[0.9, 0.05, 0.05], &[0.8, 0.1, 0.1]).unwrap();
        assert!((v - 0.431_087_705_482_193_35).abs() < 1e-15);
        assert!(cross_entropy_dist(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[0.2; 5]) - 5f64.ln()).abs() < 1e-15);
        assert!((entropy(&[0.5, 0.25, 0.25]) - 1.5 * LN2).abs() < 1e-15);
    }

    #[test]
    fn top1_examples() {
        assert_eq!(top1(&[0.1, 0.7, 0.2]).unwrap(), 1);
        assert_eq!(top1(&[0.5, 0.5]).unwrap(), 0);
        assert!(top1(&[]).is_err());
    }

    fn logits(c: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, c)
    }

    fn dist(c: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-6.0f64..6.0, c).prop_map(|z| softmax_t(&z, Temperature::ONE).unwrap())
    }

    proptest! {
        #[test]
        fn shift_invariance(o in logits(1..16), k in -50.0f64..50.0, tau in 0.1f64..100.0) {
            let shifted: Vec<f64> = o.iter().map(|v| v + k).collect();
            let a = softmax_t(&o, t(tau)).unwrap();
            let b = softmax_t(&shifted, t(tau)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn high_temperature_is_near_uniform(o in logits(1..16)) {
            let p = softmax_t(&o, t(1e6)).unwrap();
            let u = 1.0 / o.len() as f64;
            prop_assert!(p.iter().all(|v| (v - u).abs() < 1e-3));
        }

        #[test]
        fn kl_nonnegative_and_zero_iff_equal((q, p) in (1usize..12).prop_flat_map(|c| (dist(c), dist(c)))) {
            let d = kl_divergence(&q, &p).unwrap();
            prop_assert!(d >= -1e-12);
            prop_assert!(kl_divergence(&q, &q).unwrap().abs() < 1e-12);
            let close = q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-9);
            if !close {
                prop_assert!(d > 0.0);
            }
        }

        #[test]
        fn cross_entropy_decomposes((q, p) in (1usize..12).prop_flat_map(|c| (dist(c), dist(c)))) {
            let ce = cross_entropy_dist(&q, &p).unwrap();
            let kl = kl_divergence(&q, &p).unwrap();
            prop_assert!((ce - (kl + entropy(&q))).abs() < 1e-9);
        }

        #[test]
        fn top1_survives_softmax(o in logits(1..16), tau in 0.05f64..1e4) {
            let p = softmax_t(&o, t(tau)).unwrap();
            prop_assert_eq!(top1(&p).unwrap(), top1(&o).unwrap());
        }

        #[test]
        fn top1_is_permutation_equivariant(o in logits(1..12), seed in any::<u64>()) {
            // Fisher-Yates with a splitmix stream; distinct values make the argmax unique.
            let mut o = o;
            for (j, v) in o.iter_mut().enumerate() {
                *v += j as f64 * 1e-7;
            }
            let mut perm: Vec<usize> = (0..o.len()).collect();
            let mut s = seed;
            for i in (1..perm.len()).rev() {
                s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
                let j = (s % (i as u64 + 1)) as usize;
                perm.swap(i, j);
            }
            let permuted: Vec<f64> = perm.iter().map(|&i| o[i]).collect();
            let orig = top1(&o).unwrap();
            let pos = perm.iter().position(|&i| i == orig).unwrap();
            prop_assert_eq!(top1(&permuted).unwrap(), pos);
        }
    }
}
