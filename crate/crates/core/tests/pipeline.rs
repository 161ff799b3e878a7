use std::path::PathBuf;

use ukd_core::harness::{
    dump_logits, load_logits, run_ablation, run_cell, run_pipeline, train_teacher, write_dataset, RunConfig,
    TauChoice,
};
use ukd_core::{gen_dataset, DataParams, DistillConfig, Strategy, UkdError};

fn quick() -> RunConfig {
    RunConfig {
        distill: DistillConfig {
            epochs: 3,
            lr: 0.05,
            hidden_dim: 8,
            ..DistillConfig::default()
        },
        data: DataParams {
            n_train: 120,
            n_test: 60,
            classes: 4,
            dim: 8,
            ..DataParams::default()
        },
        seeds: vec![0],
        ..RunConfig::default()
    }
}

/// Student datasets plus one dump per teacher modality, written to `dir`.
fn materialize(config: &RunConfig, dir: &std::path::Path, modalities: &[ukd_core::Modality]) -> RunConfig {
    let data = gen_dataset(42, &config.data).unwrap();
    let train = dir.join("train.txt");
    let test = dir.join("test.txt");
    write_dataset(&train, &data.train.a_dark).unwrap();
    write_dataset(&test, &data.test.a_dark).unwrap();
    let teachers: Vec<PathBuf> = modalities
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let view = data.train.get(m);
            let model = train_teacher(view, &config.distill, 0, k).unwrap();
            let path = dir.join(format!("teacher_{k}.txt"));
            dump_logits(&model, view, &format!("teacher-{m}"), &path).unwrap();
            path
        })
        .collect();
    RunConfig {
        train_data: Some(train),
        test_data: Some(test),
        teachers,
        ..config.clone()
    }
}

#[test]
fn baseline_needs_no_dumps() {
    let config = RunConfig {
        distill: DistillConfig {
            strategy: Strategy::None,
            ..quick().distill
        },
        teachers: vec![PathBuf::from("/nonexistent/never-read.txt")],
        ..quick()
    };
    // run_cell skips teacher loading for NONE
    let row = run_cell(&config, Strategy::None, 0).unwrap();
    assert!((0.0..=1.0).contains(&row.top1));
    assert_eq!(row.tau, 1.0);
}

#[test]
fn single_dump_pkd_matches_kd_single() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        tau: TauChoice::Fixed(4.0),
        ..materialize(&quick(), dir.path(), &[ukd_core::Modality::B])
    };
    let pkd = run_cell(&config, Strategy::Pkd, 3).unwrap();
    let kd = run_cell(&config, Strategy::KdSingle, 3).unwrap();
    assert_eq!(pkd.top1, kd.top1);
}

#[test]
fn dumps_from_one_dataset_share_headers() {
    let dir = tempfile::tempdir().unwrap();
    let config = materialize(&quick(), dir.path(), &[ukd_core::Modality::A, ukd_core::Modality::B]);
    let a = load_logits(&config.teachers[0]).unwrap();
    let b = load_logits(&config.teachers[1]).unwrap();
    assert_eq!((a.n(), a.c()), (b.n(), b.c()));
    assert_eq!(a.teacher_id, "teacher-A");
}

#[test]
fn more_teachers_change_only_assembly() {
    let dir = tempfile::tempdir().unwrap();
    let two = materialize(&quick(), dir.path(), &[ukd_core::Modality::A, ukd_core::Modality::B]);
    let many = RunConfig {
        teachers: (0..16).map(|k| two.teachers[k % 2].clone()).collect(),
        ..two.clone()
    };
    use ukd_core::harness::pipeline::{prepare, targets_for};
    let cfg = two.cell(Strategy::Pkd, 0);
    let t2 = targets_for(&prepare(&two, 0, true).unwrap(), &cfg).unwrap();
    let t16 = targets_for(&prepare(&many, 0, true).unwrap(), &cfg).unwrap();
    assert_eq!(t2.targets().len(), 1);
    assert_eq!(t16.targets().len(), 1);
    assert_eq!(t16.assembly_ops(), 8 * t2.assembly_ops());
    // duplicating teachers leaves the normalized mixture unchanged
    assert!(t2.targets()[0].values().max_abs_diff(t16.targets()[0].values()) < 1e-12);
}

#[test]
fn stage_failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "#logits v1 n=5 c=4 teacher=x\n1 2 3 4\n").unwrap();
    let config = RunConfig {
        teachers: vec![bad],
        ..quick()
    };
    let err = run_pipeline(&config).unwrap_err();
    assert!(matches!(err, UkdError::Stage { stage, .. } if stage == "load-teachers"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn single_cell_ablation_and_partial_failures() {
    let one = RunConfig {
        strategies: vec![Strategy::Gtd],
        ..quick()
    };
    let report = run_ablation(&one).unwrap();
    assert_eq!(report.rows().len(), 1);
    assert!(!report.has_failures());

    // teacher dump misaligned with the student data: only NONE can run
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.txt");
    std::fs::write(&short, "#logits v1 n=2 c=4 teacher=x\n1 2 3 4\n4 3 2 1\n").unwrap();
    let mixed = RunConfig {
        strategies: vec![Strategy::Pkd, Strategy::None],
        seeds: vec![0, 1],
        teachers: vec![short],
        ..quick()
    };
    let report = run_ablation(&mixed).unwrap();
    assert!(report.has_failures());
    let rows = report.rows();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].strategy, Strategy::None);
    assert!(rows[0].mean_top1.is_some() && rows[0].failures.is_empty());
    assert!(rows[1].mean_top1.is_none() && rows[1].failures.len() == 2);
    assert!(report.to_table().contains("failed"));
    let tsv = report.to_tsv();
    assert_eq!(tsv.lines().next(), Some("strategy\ttau\tseed\ttop1\tepoch_seconds"));
}
