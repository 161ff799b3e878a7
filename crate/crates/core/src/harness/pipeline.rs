//! End-to-end runs: data, teachers, offline assembly, student training and
//! evaluation.

use rayon::prelude::*;

use crate::config::{DistillConfig, Strategy};
use crate::datagen::{derive_seed, gen_dataset, Dataset, GeneratedData};
use crate::ensemble::{build_targets, TargetSet, TeacherBank};
use crate::error::{Result, UkdError};
use crate::harness::formats::{load_bank, load_dataset};
use crate::harness::report::{AblationReport, CellOutcome, CellResult};
use crate::harness::runconfig::RunConfig;
use crate::matrix::LogitMatrix;
use crate::trainer::{evaluate, forward, train, StudentModel, TrainOutcome};

const DATA_STAGE: u64 = 0;
const TEACHER_INIT_STAGE: u64 = 10;
const TEACHER_TRAIN_STAGE: u64 = 20;
const STUDENT_INIT_STAGE: u64 = 30;
const STUDENT_TRAIN_STAGE: u64 = 31;

/// Training config for a teacher: hard labels only.
pub fn teacher_config(base: &DistillConfig, seed: u64, index: usize) -> DistillConfig {
    DistillConfig {
        strategy: Strategy::None,
        seed: derive_seed(seed, TEACHER_TRAIN_STAGE + index as u64),
        ..base.clone()
    }
}

/// Trains a fresh model on `data` with hard labels.
pub fn train_teacher(data: &Dataset, base: &DistillConfig, seed: u64, index: usize) -> Result<StudentModel> {
    let cfg = teacher_config(base, seed, index);
    let mut rng = crate::datagen::Prng::new(derive_seed(seed, TEACHER_INIT_STAGE + index as u64));
    let init = StudentModel::init(data.dim(), cfg.hidden_dim, data.classes(), &mut rng);
    Ok(train(init, data, &TargetSet::none(), &cfg)?.model)
}

/// Data, teacher bank and student splits shared by every strategy of one seed.
pub struct Prepared {
    pub student_train: Dataset,
    pub student_test: Dataset,
    /// All teachers, in order. KD_SINGLE uses the first.
    pub bank: Option<TeacherBank>,
}

fn generate(config: &RunConfig, seed: u64) -> Result<GeneratedData> {
    let mut params = config.data.clone();
    params.gamma = config.distill.gamma;
    gen_dataset(derive_seed(seed, DATA_STAGE), &params)
}

/// Runs the stages before student training. Teachers are only built when
/// `need_teachers` is set.
pub fn prepare(config: &RunConfig, seed: u64, need_teachers: bool) -> Result<Prepared> {
    let needs_generated = config.train_data.is_none()
        || config.test_data.is_none()
        || (need_teachers && config.teachers.is_empty());
    let generated = if needs_generated {
        Some(generate(config, seed).map_err(|e| e.in_stage("generate-data"))?)
    } else {
        None
    };
    let load_or = |path: &Option<std::path::PathBuf>, fallback: fn(&GeneratedData) -> &Dataset| {
        match path {
            Some(p) => load_dataset(p).map_err(|e| e.in_stage("load-data")),
            None => Ok(fallback(generated.as_ref().expect("generated above")).clone()),
        }
    };
    let student_train = load_or(&config.train_data, |g| &g.train.a_dark)?;
    let student_test = load_or(&config.test_data, |g| &g.test.a_dark)?;

    let bank = if !need_teachers {
        None
    } else if !config.teachers.is_empty() {
        Some(load_bank(&config.teachers).map_err(|e| e.in_stage("load-teachers"))?)
    } else {
        let g = generated.as_ref().expect("generated above");
        let mut logits = Vec::with_capacity(config.teacher_modalities.len());
        for (k, &m) in config.teacher_modalities.iter().enumerate() {
            let view = g.train.get(m);
            let model = train_teacher(view, &config.distill, seed, k).map_err(|e| e.in_stage("train-teacher"))?;
            let values = forward(&model, &view.features).map_err(|e| e.in_stage("train-teacher"))?;
            let id = format!("teacher-{}", m.tag());
            logits.push(LogitMatrix::new(id, values).map_err(|e| e.in_stage("train-teacher"))?);
        }
        Some(TeacherBank::new(logits).map_err(|e| e.in_stage("train-teacher"))?)
    };
    if let Some(b) = &bank {
        if b.n() != student_train.len() || b.c() != student_train.classes() {
            return Err(UkdError::dims(format!(
                "teacher bank is {}x{} but the student training set is {}x{}",
                b.n(),
                b.c(),
                student_train.len(),
                student_train.classes()
            ))
            .in_stage("align-teachers"));
        }
    }
    Ok(Prepared {
        student_train,
        student_test,
        bank,
    })
}

/// Offline target construction. KD_SINGLE keeps only the first teacher.
pub fn targets_for(prepared: &Prepared, cfg: &DistillConfig) -> Result<TargetSet> {
    if cfg.strategy == Strategy::None {
        return Ok(TargetSet::none());
    }
    let bank = prepared
        .bank
        .as_ref()
        .ok_or_else(|| UkdError::precondition(format!("{} needs teacher logits", cfg.strategy)))?;
    let bank = if cfg.strategy == Strategy::KdSingle && bank.k() > 1 {
        TeacherBank::new(vec![bank.teachers()[0].clone()])?
    } else {
        bank.clone()
    };
    build_targets(&bank, &prepared.student_train.labels, cfg)
}

/// Student init and training seeds for one cell.
pub fn student_configs(cfg: &DistillConfig) -> (u64, DistillConfig) {
    let init_seed = derive_seed(cfg.seed, STUDENT_INIT_STAGE);
    let train_cfg = DistillConfig {
        seed: derive_seed(cfg.seed, STUDENT_TRAIN_STAGE),
        ..cfg.clone()
    };
    (init_seed, train_cfg)
}

pub fn train_student(prepared: &Prepared, targets: &TargetSet, cfg: &DistillConfig) -> Result<TrainOutcome> {
    let (init_seed, train_cfg) = student_configs(cfg);
    let data = &prepared.student_train;
    let mut rng = crate::datagen::Prng::new(init_seed);
    let init = StudentModel::init(data.dim(), cfg.hidden_dim, data.classes(), &mut rng);
    train(init, data, targets, &train_cfg)
}

/// One (strategy, seed) cell of an ablation.
pub fn run_cell(config: &RunConfig, strategy: Strategy, seed: u64) -> Result<CellResult> {
    let cfg = config.cell(strategy, seed);
    cfg.validate()?;
    let prepared = prepare(config, seed, strategy.uses_teachers())?;
    let targets = targets_for(&prepared, &cfg).map_err(|e| e.in_stage("build-targets"))?;
    let outcome = train_student(&prepared, &targets, &cfg).map_err(|e| e.in_stage("train-student"))?;
    let top1 = evaluate(&outcome.model, &prepared.student_test).map_err(|e| e.in_stage("evaluate"))?;
    let epoch_seconds = (config.timing && !outcome.epoch_seconds.is_empty())
        .then(|| outcome.epoch_seconds.iter().sum::<f64>() / outcome.epoch_seconds.len() as f64);
    Ok(CellResult {
        strategy,
        tau: cfg.tau,
        seed,
        top1,
        epoch_seconds,
        final_loss: outcome.loss_trace.last().copied(),
    })
}

/// Runs the strategy in `config.distill` at `config.distill.seed`.
pub fn run_pipeline(config: &RunConfig) -> Result<CellResult> {
    run_cell(config, config.distill.strategy, config.distill.seed)
}

/// Crosses every configured strategy with every seed. Cells run in parallel
/// with private state; the report is order-normalized afterwards, so its
/// contents do not depend on scheduling.
pub fn run_ablation(config: &RunConfig) -> Result<AblationReport> {
    config.validate()?;
    let cells: Vec<(Strategy, u64)> = config
        .strategies
        .iter()
        .flat_map(|&s| config.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(s, seed)| match run_cell(config, s, seed) {
            Ok(r) => CellOutcome::Done(r),
            Err(e) => CellOutcome::Failed {
                strategy: s,
                tau: config.cell(s, seed).tau,
                seed,
                error: e.to_string(),
            },
        })
        .collect();
    Ok(AblationReport::new(outcomes, config.timing.then(peak_rss_kib).flatten()))
}

/// Peak resident set size of this process, where the platform exposes it.
pub fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

