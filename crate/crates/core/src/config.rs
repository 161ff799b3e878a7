//! Strategy tags and the scalar hyperparameters of a distillation run.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, UkdError};
use crate::numerics::Temperature;

/// How the teacher bank becomes a soft target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    /// Hard-label training only.
    None,
    /// One teacher, plain distillation.
    KdSingle,
    /// Mean of per-teacher KL losses.
    Avg1,
    /// KL to the mean teacher distribution.
    Avg2,
    /// Per-sample weights scored against the one-hot label.
    Gtd,
    /// Per-sample weights scored against the preferred knowledge distribution.
    Pkd,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::None,
        Strategy::KdSingle,
        Strategy::Avg1,
        Strategy::Avg2,
        Strategy::Gtd,
        Strategy::Pkd,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::None => "NONE",
            Strategy::KdSingle => "KD_SINGLE",
            Strategy::Avg1 => "AVG1",
            Strategy::Avg2 => "AVG2",
            Strategy::Gtd => "GTD",
            Strategy::Pkd => "PKD",
        }
    }

    /// Temperature presets used for the ensemble ablation.
    pub fn tau_preset(self) -> f64 {
        match self {
            Strategy::None => 1.0,
            Strategy::KdSingle => 5.0,
            Strategy::Avg1 => 10.0,
            Strategy::Avg2 => 60.0,
            Strategy::Gtd | Strategy::Pkd => 20.0,
        }
    }

    pub fn uses_teachers(self) -> bool {
        self != Strategy::None
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = UkdError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Ok(match norm.as_str() {
            "NONE" | "BASELINE" => Strategy::None,
            "KD_SINGLE" | "KD" => Strategy::KdSingle,
            "AVG1" | "AVG_1" => Strategy::Avg1,
            "AVG2" | "AVG_2" => Strategy::Avg2,
            "GTD" => Strategy::Gtd,
            "PKD" | "UKD" => Strategy::Pkd,
            _ => return Err(UkdError::UnknownStrategy(s.to_string())),
        })
    }
}

/// Default temperature when neither a preset nor an override is requested.
pub const DEFAULT_TAU: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// Weight of the hard-label cross-entropy term.
    pub alpha: f64,
    /// Softening temperature of the distillation term and of assembly.
    pub tau: f64,
    /// Preferred-class mass of the PKD reference.
    pub h: f64,
    pub strategy: Strategy,
    /// Temperature applied to teacher logits when scoring ensemble weights.
    pub weight_tau: f64,
    /// Gamma of the intensity correction applied to the student modality.
    pub gamma: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_dim: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            alpha: 0.5,
            tau: DEFAULT_TAU,
            h: 0.99,
            strategy: Strategy::Pkd,
            weight_tau: 1.0,
            gamma: 3.0,
            lr: 0.01,
            epochs: 200,
            batch_size: 16,
            seed: 0,
            hidden_dim: 32,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(UkdError::Precondition(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0,1], got {}", self.alpha));
        }
        Temperature::new(self.tau)?;
        Temperature::new(self.weight_tau)?;
        if !(self.h > 0.0 && self.h <= 1.0) {
            return fail(format!("h must lie in (0,1], got {}", self.h));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return fail(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail(format!("lr must be >= 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.hidden_dim == 0 {
            return fail("hidden_dim must be positive".into());
        }
        Ok(())
    }

    pub fn temperature(&self) -> Result<Temperature> {
        Temperature::new(self.tau)
    }

    pub fn weight_temperature(&self) -> Result<Temperature> {
        Temperature::new(self.weight_tau)
    }

    /// Copy with the strategy set and τ taken from that strategy's preset.
    pub fn with_preset(&self, strategy: Strategy) -> Self {
        DistillConfig {
            strategy,
            tau: strategy.tau_preset(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.tag().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("ukd".parse::<Strategy>().unwrap(), Strategy::Pkd);
        assert!("MEDIAN".parse::<Strategy>().is_err());
    }

    #[test]
    fn defaults_are_valid() {
        let c = DistillConfig::default();
        c.validate().unwrap();
        assert_eq!((c.alpha, c.h, c.gamma, c.lr), (0.5, 0.99, 3.0, 0.01));
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let bad = DistillConfig {
            alpha: 1.5,
            ..DistillConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = DistillConfig {
            tau: 0.0,
            ..DistillConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
