//! `key = value` run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{DistillConfig, Strategy};
use crate::datagen::{DataParams, Modality};
use crate::error::{FormatError, Result, UkdError};

/// Where the distillation temperature of a run comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauChoice {
    /// Per-strategy preset, see [`Strategy::tau_preset`].
    Preset,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub distill: DistillConfig,
    pub tau: TauChoice,
    pub data: DataParams,
    /// Teacher logit dumps, in teacher order. Empty means teachers are trained
    /// in-pipeline on `teacher_modalities`.
    pub teachers: Vec<PathBuf>,
    pub teacher_modalities: Vec<Modality>,
    /// Optional student-view dataset files replacing generated data.
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Strategies and seeds crossed by an ablation.
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    /// Record wall-time and memory in reports. Off by default so reports are
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            distill: DistillConfig::default(),
            tau: TauChoice::Preset,
            data: DataParams::default(),
            teachers: Vec::new(),
            teacher_modalities: vec![Modality::A, Modality::B],
            train_data: None,
            test_data: None,
            out: None,
            strategies: Strategy::ALL.to_vec(),
            seeds: (0..5).collect(),
            timing: false,
        }
    }
}

impl RunConfig {
    /// Effective distillation config for one (strategy, seed) cell.
    pub fn cell(&self, strategy: Strategy, seed: u64) -> DistillConfig {
        DistillConfig {
            strategy,
            seed,
            tau: match self.tau {
                TauChoice::Preset => strategy.tau_preset(),
                TauChoice::Fixed(t) => t,
            },
            ..self.distill.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.distill.validate()?;
        self.data.validate()?;
        if let TauChoice::Fixed(t) = self.tau {
            crate::numerics::Temperature::new(t)?;
        }
        for p in self.teachers.iter().chain(&self.train_data).chain(&self.test_data) {
            if !p.exists() {
                return Err(UkdError::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
                ));
            }
        }
        if self.strategies.is_empty() || self.seeds.is_empty() {
            return Err(UkdError::precondition("an ablation needs at least one strategy and one seed"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| UkdError::io(path, e))?;
        Self::parse(&text, path.parent()).map_err(|e| UkdError::format(path, e))
    }

    /// Parses config text. Relative paths resolve against `base` when given.
    pub fn parse(text: &str, base: Option<&Path>) -> std::result::Result<Self, FormatError> {
        let mut cfg = RunConfig::default();
        let mut teachers_seen = false;
        let resolve = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| FormatError::Config {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| FormatError::Config {
                line,
                message: format!("`{key}`: {what} `{value}`"),
            };
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| bad("invalid number"))?
                };
            }
            let d = &mut cfg.distill;
            match key {
                "alpha" => d.alpha = num!(),
                "tau" => {
                    cfg.tau = if value.eq_ignore_ascii_case("preset") {
                        TauChoice::Preset
                    } else {
                        let t: f64 = num!();
                        d.tau = t;
                        TauChoice::Fixed(t)
                    }
                }
                "h" => d.h = num!(),
                "strategy" => d.strategy = value.parse().map_err(|_| bad("unknown strategy"))?,
                "weight_tau" => d.weight_tau = num!(),
                "gamma" => {
                    d.gamma = num!();
                    cfg.data.gamma = d.gamma;
                }
                "lr" => d.lr = num!(),
                "epochs" => d.epochs = num!(),
                "batch_size" => d.batch_size = num!(),
                "seed" => d.seed = num!(),
                "hidden_dim" => d.hidden_dim = num!(),
                "n_train" => cfg.data.n_train = num!(),
                "n_test" => cfg.data.n_test = num!(),
                "classes" => cfg.data.classes = num!(),
                "dim" => cfg.data.dim = num!(),
                "noise" => cfg.data.noise = num!(),
                "darken_factor" => cfg.data.darken_factor = num!(),
                "quant_levels" => cfg.data.quant_levels = num!(),
                "teacher" => {
                    if !teachers_seen {
                        cfg.teachers.clear();
                        teachers_seen = true;
                    }
                    cfg.teachers.push(resolve(value));
                }
                "teacher_modalities" => {
                    cfg.teacher_modalities = list(value)
                        .map(|t| t.parse().map_err(|_| bad("unknown modality")))
                        .collect::<std::result::Result<_, _>>()?;
                }
                "train_data" => cfg.train_data = Some(resolve(value)),
                "test_data" => cfg.test_data = Some(resolve(value)),
                "out" => cfg.out = Some(resolve(value)),
                "strategies" => {
                    cfg.strategies = list(value)
                        .map(|t| t.parse().map_err(|_| bad("unknown strategy")))
                        .collect::<std::result::Result<_, _>>()?;
                }
                "seeds" => {
                    cfg.seeds = list(value)
                        .map(|t| t.parse().map_err(|_| bad("invalid seed")))
                        .collect::<std::result::Result<_, _>>()?;
                }
                "timing" => cfg.timing = value.parse().map_err(|_| bad("expected true/false"))?,
                _ => {
                    return Err(FormatError::Config {
                        line,
                        message: format!("unknown key `{key}`"),
                    })
                }
            }
        }
        Ok(cfg)
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|t| !t.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let text = "# ablation\nalpha = 0.4\ntau = 7   # fixed\nstrategies = NONE, PKD\nseeds = 3,4\n\
                    teacher = a.txt\nteacher = /abs/b.txt\ntiming = true\nnoise=0.2\n";
        let c = RunConfig::parse(text, Some(Path::new("/base"))).unwrap();
        assert_eq!(c.distill.alpha, 0.4);
        assert_eq!(c.tau, TauChoice::Fixed(7.0));
        assert_eq!(c.strategies, vec![Strategy::None, Strategy::Pkd]);
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.teachers, vec![PathBuf::from("/base/a.txt"), PathBuf::from("/abs/b.txt")]);
        assert!(c.timing);
        assert_eq!(c.data.noise, 0.2);
        assert_eq!(c.cell(Strategy::Pkd, 9).tau, 7.0);
    }

    #[test]
    fn preset_tau_per_strategy() {
        let c = RunConfig::default();
        assert_eq!(c.cell(Strategy::KdSingle, 0).tau, 5.0);
        assert_eq!(c.cell(Strategy::Avg2, 0).tau, 60.0);
        assert_eq!(c.cell(Strategy::Pkd, 0).tau, 20.0);
    }

    #[test]
    fn rejects_unknown_key_and_bad_value() {
        assert!(matches!(RunConfig::parse("colour = red\n", None), Err(FormatError::Config { line: 1, .. })));
        assert!(matches!(RunConfig::parse("\nalpha = x\n", None), Err(FormatError::Config { line: 2, .. })));
        assert!(RunConfig::parse("alpha 0.5\n", None).is_err());
    }

    #[test]
    fn validate_checks_referenced_files() {
        let c = RunConfig {
            teachers: vec![PathBuf::from("/definitely/not/here.txt")],
            ..RunConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }
}
