//! Ablation reports: an aligned text table plus tab-separated per-cell rows.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::Strategy;
use crate::error::{Result, UkdError};

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub strategy: Strategy,
    pub tau: f64,
    pub seed: u64,
    pub top1: f64,
    /// Mean wall-time per epoch, recorded only when timing is enabled.
    pub epoch_seconds: Option<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Done(CellResult),
    Failed {
        strategy: Strategy,
        tau: f64,
        seed: u64,
        error: String,
    },
}

impl CellOutcome {
    fn key(&self) -> (Strategy, f64, u64) {
        match self {
            CellOutcome::Done(r) => (r.strategy, r.tau, r.seed),
            CellOutcome::Failed { strategy, tau, seed, .. } => (*strategy, *tau, *seed),
        }
    }
}

/// Per-strategy summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: Strategy,
    pub tau: f64,
    pub mean_top1: Option<f64>,
    pub per_seed: Vec<(u64, Option<f64>)>,
    pub epoch_seconds: Option<f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    cells: Vec<CellOutcome>,
    pub peak_rss_kib: Option<u64>,
}

impl AblationReport {
    /// Sorts cells by strategy tag order, then τ, then seed.
    pub fn new(mut cells: Vec<CellOutcome>, peak_rss_kib: Option<u64>) -> Self {
        cells.sort_by(|a, b| {
            let (sa, ta, ea) = a.key();
            let (sb, tb, eb) = b.key();
            sa.cmp(&sb).then(ta.total_cmp(&tb)).then(ea.cmp(&eb))
        });
        AblationReport { cells, peak_rss_kib }
    }

    pub fn cells(&self) -> &[CellOutcome] {
        &self.cells
    }

    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| matches!(c, CellOutcome::Failed { .. }))
    }

    /// One row per (strategy, τ) in sorted order.
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows: Vec<ReportRow> = Vec::new();
        for cell in &self.cells {
            let (strategy, tau, seed) = cell.key();
            let same = rows
                .last()
                .is_some_and(|r| r.strategy == strategy && r.tau.to_bits() == tau.to_bits());
            if !same {
                rows.push(ReportRow {
                    strategy,
                    tau,
                    mean_top1: None,
                    per_seed: Vec::new(),
                    epoch_seconds: None,
                    failures: Vec::new(),
                });
            }
            let row = rows.last_mut().expect("pushed above");
            match cell {
                CellOutcome::Done(r) => row.per_seed.push((seed, Some(r.top1))),
                CellOutcome::Failed { error, .. } => {
                    row.per_seed.push((seed, None));
                    row.failures.push(format!("seed {seed}: {error}"));
                }
            }
        }
        for row in &mut rows {
            let done: Vec<&CellResult> = self
                .cells
                .iter()
                .filter_map(|c| match c {
                    CellOutcome::Done(r) if r.strategy == row.strategy && r.tau.to_bits() == row.tau.to_bits() => Some(r),
                    _ => None,
                })
                .collect();
            if !done.is_empty() {
                row.mean_top1 = Some(done.iter().map(|r| r.top1).sum::<f64>() / done.len() as f64);
                let times: Vec<f64> = done.iter().filter_map(|r| r.epoch_seconds).collect();
                if times.len() == done.len() {
                    row.epoch_seconds = Some(times.iter().sum::<f64>() / times.len() as f64);
                }
            }
        }
        rows
    }

    /// Mean top-1 of a strategy across seeds, if any seed succeeded.
    pub fn mean_top1(&self, strategy: Strategy) -> Option<f64> {
        self.rows()
            .into_iter()
            .find(|r| r.strategy == strategy)
            .and_then(|r| r.mean_top1)
    }

    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let mut lines = vec![[
            "strategy".to_string(),
            "tau".to_string(),
            "mean_top1".to_string(),
            "per_seed_top1".to_string(),
            "epoch_s".to_string(),
            "peak_rss_kib".to_string(),
        ]];
        let rss = self.peak_rss_kib.map_or("-".to_string(), |v| v.to_string());
        for r in &rows {
            let per_seed = r
                .per_seed
                .iter()
                .map(|(_, v)| v.map_or("FAILED".to_string(), |t| format!("{t:.4}")))
                .collect::<Vec<_>>()
                .join(",");
            lines.push([
                r.strategy.tag().to_string(),
                format!("{}", r.tau),
                r.mean_top1.map_or("FAILED".to_string(), |m| format!("{m:.4}")),
                per_seed,
                r.epoch_seconds.map_or("-".to_string(), |s| format!("{s:.6}")),
                rss.clone(),
            ]);
        }
        let widths: Vec<usize> = (0..6)
            .map(|j| lines.iter().map(|l| l[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).expect("writing to a String");
        }
        for r in &rows {
            for f in &r.failures {
                writeln!(out, "# {} failed, {f}", r.strategy).expect("writing to a String");
            }
        }
        out
    }

    /// `strategy tau seed top1 epoch_seconds`, tab-separated, one cell per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("strategy\ttau\tseed\ttop1\tepoch_seconds\n");
        for c in &self.cells {
            match c {
                CellOutcome::Done(r) => writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    r.strategy,
                    r.tau,
                    r.seed,
                    r.top1,
                    r.epoch_seconds.map_or("-".to_string(), |s| s.to_string())
                ),
                CellOutcome::Failed { strategy, tau, seed, .. } => {
                    writeln!(out, "{strategy}\t{tau}\t{seed}\tFAILED\t-")
                }
            }
            .expect("writing to a String");
        }
        out
    }

    /// Writes `report.txt` and `report.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| UkdError::io(dir, e))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.to_table()).map_err(|e| UkdError::io(&txt, e))?;
        let tsv = dir.join("report.tsv");
        std::fs::write(&tsv, self.to_tsv()).map_err(|e| UkdError::io(&tsv, e))
    }
}
