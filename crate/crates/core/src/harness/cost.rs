//! Training-cost comparison between hard-label, single-teacher and assembled
//! multi-teacher distillation.
//!
//! GPU memory is not portable, so the probe reports wall-time per epoch and
//! the operation count of the one-shot assembly stage instead.

use crate::config::{DistillConfig, Strategy};
use crate::error::Result;
use crate::harness::pipeline::{prepare, targets_for, train_student};
use crate::harness::runconfig::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeSettings {
    pub epochs: usize,
    pub repeats: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            epochs: 5,
            repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub epochs: usize,
    pub repeats: usize,
    /// Median wall-time per epoch.
    pub none_epoch_seconds: f64,
    pub kd_epoch_seconds: f64,
    pub pkd_epoch_seconds: f64,
    pub kd_assembly_ops: u64,
    pub pkd_assembly_ops: u64,
    /// PKD assembly ops when the run is configured with twice the epochs.
    pub pkd_assembly_ops_double_epochs: u64,
    pub teachers: usize,
}

impl CostReport {
    /// `|pkd − kd| / kd`
    pub fn pkd_vs_kd_relative_gap(&self) -> f64 {
        (self.pkd_epoch_seconds - self.kd_epoch_seconds).abs() / self.kd_epoch_seconds
    }

    pub fn assembly_independent_of_epochs(&self) -> bool {
        self.pkd_assembly_ops == self.pkd_assembly_ops_double_epochs
    }

    pub fn to_text(&self) -> String {
        format!(
            "epochs per run      {}\nrepeats             {}\nteachers (PKD)      {}\n\
             NONE s/epoch        {:.6}\nKD_SINGLE s/epoch   {:.6}\nPKD s/epoch         {:.6}\n\
             PKD vs KD gap       {:.2}%\nKD assembly ops     {}\nPKD assembly ops    {}\n\
             PKD ops at 2x epochs {}\n",
            self.epochs,
            self.repeats,
            self.teachers,
            self.none_epoch_seconds,
            self.kd_epoch_seconds,
            self.pkd_epoch_seconds,
            100.0 * self.pkd_vs_kd_relative_gap(),
            self.kd_assembly_ops,
            self.pkd_assembly_ops,
            self.pkd_assembly_ops_double_epochs,
        )
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Times student training for NONE, KD_SINGLE and PKD on the same data and
/// seed. Runs are interleaved so drift in machine load hits all three alike.
pub fn cost_probe(config: &RunConfig, settings: ProbeSettings) -> Result<CostReport> {
    let seed = config.distill.seed;
    let prepared = prepare(config, seed, true)?;
    let cell = |s: Strategy| DistillConfig {
        epochs: settings.epochs,
        ..config.cell(s, seed)
    };
    let (none, kd, pkd) = (cell(Strategy::None), cell(Strategy::KdSingle), cell(Strategy::Pkd));
    let none_t = targets_for(&prepared, &none)?;
    let kd_t = targets_for(&prepared, &kd)?;
    let pkd_t = targets_for(&prepared, &pkd)?;
    let doubled = DistillConfig {
        epochs: 2 * settings.epochs,
        ..pkd.clone()
    };
    let pkd_doubled = targets_for(&prepared, &doubled)?;

    let mut times = [Vec::new(), Vec::new(), Vec::new()];
    // warm-up so the first timed run does not pay for page faults
    train_student(&prepared, &kd_t, &DistillConfig { epochs: 1, ..kd.clone() })?;
    for _ in 0..settings.repeats.max(1) {
        for (slot, (targets, cfg)) in [(&none_t, &none), (&kd_t, &kd), (&pkd_t, &pkd)].into_iter().enumerate() {
            let outcome = train_student(&prepared, targets, cfg)?;
            times[slot].extend(outcome.epoch_seconds);
        }
    }
    let [none_s, kd_s, pkd_s] = times;
    Ok(CostReport {
        epochs: settings.epochs,
        repeats: settings.repeats.max(1),
        none_epoch_seconds: median(none_s),
        kd_epoch_seconds: median(kd_s),
        pkd_epoch_seconds: median(pkd_s),
        kd_assembly_ops: kd_t.assembly_ops(),
        pkd_assembly_ops: pkd_t.assembly_ops(),
        pkd_assembly_ops_double_epochs: pkd_doubled.assembly_ops(),
        teachers: prepared.bank.as_ref().map_or(0, |b| b.k()),
    })
}
