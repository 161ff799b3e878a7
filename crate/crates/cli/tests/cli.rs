use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const QUICK: &str = "\
# small, fast run
epochs = 3
lr = 0.05
hidden_dim = 8
n_train = 90
n_test = 45
classes = 3
dim = 6
seeds = 0, 1
strategies = NONE, KD_SINGLE, PKD
";

fn ukd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ukd")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ukd(args);
    assert!(
        out.status.success(),
        "ukd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn offline_workflow_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("run.cfg");
    fs::write(&config, QUICK).unwrap();
    let cfg = s(&config);

    ok(&["gen-data", "--config", cfg, "--out", s(d)]);
    for name in ["train_A", "train_B", "train_A_dark", "test_A", "test_B", "test_A_dark"] {
        assert!(d.join(format!("{name}.txt")).exists(), "{name}");
    }

    for m in ["A", "B"] {
        let data = d.join(format!("train_{m}.txt"));
        let model = d.join(format!("teacher_{m}.model"));
        ok(&["train-teacher", "--config", cfg, "--data", s(&data), "--out", s(&model)]);
        let dump = d.join(format!("teacher_{m}.logits"));
        let id = format!("teacher-{m}");
        ok(&["dump-logits", "--model", s(&model), "--data", s(&data), "--id", &id, "--out", s(&dump)]);
        assert!(fs::read_to_string(&dump).unwrap().starts_with(&format!("#logits v1 n=90 c=3 teacher={id}")));
    }

    let (ta, tb) = (d.join("teacher_A.logits"), d.join("teacher_B.logits"));
    let student = d.join("train_A_dark.txt");
    let targets = d.join("pkd.targets");
    let out = ok(&[
        "assemble", "--config", cfg, "--strategy", "PKD", "--teacher", s(&ta), "--teacher", s(&tb), "--data",
        s(&student), "--out", s(&targets),
    ]);
    assert!(out.contains("assembly ops"));
    assert!(fs::read_to_string(&targets).unwrap().starts_with("#targets v1"));
    let weights = fs::read_to_string(d.join("pkd.targets.weights")).unwrap();
    assert!(weights.starts_with("#weights v1 n=90 k=2"));

    let model = d.join("student.model");
    let test = d.join("test_A_dark.txt");
    let out = ok(&[
        "distill", "--config", cfg, "--strategy", "PKD", "--tau", "4", "--teacher", s(&ta), "--teacher", s(&tb),
        "--data", s(&student), "--test-data", s(&test), "--out", s(&model),
    ]);
    assert!(out.contains("test top-1"));
    let acc: f64 = ok(&["evaluate", "--model", s(&model), "--data", s(&test)]).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn ablate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, QUICK).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        fs::create_dir(out).unwrap();
        let table = ok(&["ablate", "--config", s(&config), "--out", s(out)]);
        assert!(table.contains("PKD"));
    }
    for name in ["report.txt", "report.tsv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let tsv = fs::read_to_string(a.join("report.tsv")).unwrap();
    // header plus 3 strategies x 2 seeds
    assert_eq!(tsv.lines().count(), 7);
}

#[test]
fn cost_probe_reports_assembly_ops() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, QUICK).unwrap();
    let out = ok(&["cost-probe", "--config", s(&config), "--epochs", "2", "--repeats", "1"]);
    assert!(out.contains("PKD ops at 2x epochs"));
}

#[test]
fn exit_codes() {
    assert_eq!(ukd(&[]).status.code(), Some(1));
    assert_eq!(ukd(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(ukd(&["ablate", "--strategy", "BOGUS"]).status.code(), Some(1));
    assert_eq!(ukd(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    assert_eq!(ukd(&["evaluate", "--model", s(&missing), "--data", s(&missing)]).status.code(), Some(2));

    let bad = dir.path().join("bad.logits");
    fs::write(&bad, "#logits v1 n=5 c=2 teacher=t\n0 1\n1 0\n1 1\n0 0\n").unwrap();
    let data = dir.path().join("d.txt");
    fs::write(&data, "#dataset v1 n=1 d=2 c=2 modality=A split=train\n0.5 0.5 1\n").unwrap();
    let out = ukd(&["assemble", "--teacher", s(&bad), "--data", s(&data), "--out", s(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row count mismatch"));

    let nan = dir.path().join("nan.logits");
    fs::write(&nan, "#logits v1 n=1 c=2 teacher=t\nNaN 0\n").unwrap();
    let out = ukd(&["assemble", "--teacher", s(&nan), "--data", s(&data), "--out", s(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite value"));

    // a learning rate this large overflows the logits within a few steps
    let cfg = dir.path().join("diverge.cfg");
    fs::write(&cfg, "lr = 1e300\nepochs = 5\n").unwrap();
    let out = ukd(&["distill", "--config", s(&cfg), "--strategy", "NONE", "--data", s(&data), "--out", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
