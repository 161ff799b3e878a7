//! `ukd`: generate data, train teachers, dump and assemble logits, distill,
//! evaluate, and run ablations and cost probes.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed input file, 3 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ukd_core::harness::pipeline::{targets_for, train_student, Prepared};
use ukd_core::harness::{
    cost_probe, dump_logits, load_bank, load_dataset, load_model, run_ablation, train_teacher,
    write_dataset, write_model, write_targets, write_weights, ProbeSettings, RunConfig, TauChoice,
};
use ukd_core::{evaluate, gen_dataset, Strategy, UkdError};

#[derive(Parser)]
#[command(name = "ukd", version, about = "Offline multi-teacher knowledge distillation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// `key = value` run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<String>,
    /// Distillation temperature, or `preset` for the per-strategy value
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Teacher logit dump; repeat to add teachers in order
    #[arg(long = "teacher")]
    teachers: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/test splits of every modality view into a directory
    GenData(Common),
    /// Train a hard-label teacher on a dataset file and save the model
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Write a model's logits on a dataset
    DumpLogits {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        id: String,
    },
    /// Build the strategy's soft targets (and weights) from teacher dumps
    Assemble {
        #[command(flatten)]
        common: Common,
        /// Dataset whose labels align with the dumps
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a student on a dataset with targets assembled from teacher dumps
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Optional held-out dataset to report top-1 accuracy on
        #[arg(long)]
        test_data: Option<PathBuf>,
    },
    /// Top-1 accuracy of a saved model
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Cross strategies with seeds and write report.txt / report.tsv
    Ablate(Common),
    /// Compare per-epoch training time of NONE, KD_SINGLE and PKD
    CostProbe {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn usage(msg: impl Into<String>) -> UkdError {
    UkdError::Precondition(msg.into())
}

fn run_config(c: &Common) -> Result<RunConfig, UkdError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.distill.seed = s;
        cfg.seeds = vec![s];
    }
    if let Some(s) = &c.strategy {
        let s: Strategy = s.parse()?;
        cfg.distill.strategy = s;
        cfg.strategies = vec![s];
    }
    if let Some(t) = &c.tau {
        cfg.tau = if t.eq_ignore_ascii_case("preset") {
            TauChoice::Preset
        } else {
            let v: f64 = t.parse().map_err(|_| usage(format!("invalid --tau `{t}`")))?;
            cfg.distill.tau = v;
            TauChoice::Fixed(v)
        };
    }
    if let Some(a) = c.alpha {
        cfg.distill.alpha = a;
    }
    if let Some(h) = c.h {
        cfg.distill.h = h;
    }
    if let Some(g) = c.gamma {
        cfg.distill.gamma = g;
        cfg.data.gamma = g;
    }
    if !c.teachers.is_empty() {
        cfg.teachers = c.teachers.clone();
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    Ok(cfg)
}

fn out_path(cfg: &RunConfig) -> Result<&Path, UkdError> {
    cfg.out.as_deref().ok_or_else(|| usage("--out is required"))
}

fn file_name(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn loaded(cfg: &RunConfig, data: &Path, test: Option<&Path>) -> Result<Prepared, UkdError> {
    let student_train = load_dataset(data)?;
    let student_test = match test {
        Some(t) => load_dataset(t)?,
        None => student_train.clone(),
    };
    let bank = if cfg.teachers.is_empty() {
        None
    } else {
        Some(load_bank(&cfg.teachers)?)
    };
    Ok(Prepared {
        student_train,
        student_test,
        bank,
    })
}

fn run(cmd: Command) -> Result<(), UkdError> {
    match cmd {
        Command::GenData(c) => {
            let cfg = run_config(&c)?;
            let dir = out_path(&cfg)?;
            let mut params = cfg.data.clone();
            params.gamma = cfg.distill.gamma;
            let data = gen_dataset(cfg.distill.seed, &params)?;
            for views in [&data.train, &data.test] {
                for d in [&views.a, &views.b, &views.a_dark] {
                    let path = dir.join(format!("{}_{}.txt", d.split, d.modality));
                    write_dataset(&path, d)?;
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::TrainTeacher { common, data } => {
            let cfg = run_config(&common)?;
            let out = out_path(&cfg)?;
            let d = load_dataset(&data)?;
            let model = train_teacher(&d, &cfg.distill, cfg.distill.seed, 0)?;
            write_model(out, &model)?;
            println!("train top-1 {:.4}", evaluate(&model, &d)?);
        }
        Command::DumpLogits {
            common,
            model,
            data,
            id,
        } => {
            let cfg = run_config(&common)?;
            let out = out_path(&cfg)?;
            dump_logits(&load_model(&model)?, &load_dataset(&data)?, &id, out)?;
            println!("wrote {}", out.display());
        }
        Command::Assemble { common, data } => {
            let cfg = run_config(&common)?;
            let out = out_path(&cfg)?;
            if cfg.teachers.is_empty() {
                return Err(usage("assemble needs at least one --teacher"));
            }
            let prepared = loaded(&cfg, &data, None)?;
            let cell = cfg.cell(cfg.distill.strategy, cfg.distill.seed);
            let targets = targets_for(&prepared, &cell)?;
            write_targets(out, &targets)?;
            println!("wrote {}", out.display());
            if let (Some(w), Some(bank)) = (targets.weights(), prepared.bank.as_ref()) {
                let path = file_name(out, ".weights");
                write_weights(&path, &bank.ids(), w)?;
                println!("wrote {}", path.display());
            }
            println!("assembly ops {}", targets.assembly_ops());
        }
        Command::Distill {
            common,
            data,
            test_data,
        } => {
            let cfg = run_config(&common)?;
            let out = out_path(&cfg)?;
            let cell = cfg.cell(cfg.distill.strategy, cfg.distill.seed);
            cell.validate()?;
            let prepared = loaded(&cfg, &data, test_data.as_deref())?;
            let targets = targets_for(&prepared, &cell)?;
            let outcome = train_student(&prepared, &targets, &cell)?;
            write_model(out, &outcome.model)?;
            if let Some(last) = outcome.loss_trace.last() {
                println!("final epoch loss {last}");
            }
            if test_data.is_some() {
                println!("test top-1 {:.4}", evaluate(&outcome.model, &prepared.student_test)?);
            }
        }
        Command::Evaluate {
            common: _,
            model,
            data,
        } => {
            let acc = evaluate(&load_model(&model)?, &load_dataset(&data)?)?;
            println!("{acc}");
        }
        Command::Ablate(c) => {
            let cfg = run_config(&c)?;
            let report = run_ablation(&cfg)?;
            print!("{}", report.to_table());
            if let Some(dir) = &cfg.out {
                report.write(dir)?;
            }
        }
        Command::CostProbe {
            common,
            epochs,
            repeats,
        } => {
            let cfg = run_config(&common)?;
            let probe = cost_probe(&cfg, ProbeSettings { epochs, repeats })?;
            let text = probe.to_text();
            print!("{text}");
            if let Some(out) = &cfg.out {
                std::fs::write(out, &text).map_err(|e| UkdError::Io {
                    path: out.clone(),
                    source: e,
                })?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
