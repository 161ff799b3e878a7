//! Line-oriented text formats for logit dumps, datasets, targets, weights and
//! student models.
//!
//! Every file starts with a magic line of the form `#<kind> v1 key=value ...`.
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical to the value written.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::datagen::{Dataset, Modality, Split};
use crate::ensemble::{EnsembleWeights, LabelVector, TargetSet, TeacherBank};
use crate::error::{FormatError, Result, UkdError};
use crate::matrix::{LogitMatrix, Matrix};
use crate::trainer::{forward, StudentModel};

const LOGITS_MAGIC: &str = "#logits";
const DATASET_MAGIC: &str = "#dataset";
const MODEL_MAGIC: &str = "#model";
const TARGETS_MAGIC: &str = "#targets";
const WEIGHTS_MAGIC: &str = "#weights";
const VERSION: &str = "v1";

/// A teacher's logits on a dataset, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDump {
    pub teacher_id: String,
    pub logits: LogitMatrix,
}

impl LogitDump {
    pub fn n(&self) -> usize {
        self.logits.n()
    }

    pub fn c(&self) -> usize {
        self.logits.c()
    }
}

struct Header {
    fields: HashMap<String, String>,
}

impl Header {
    fn parse(line: &str, magic: &'static str) -> std::result::Result<Header, FormatError> {
        let mut tokens = line.split_whitespace();
        let first = tokens.next().unwrap_or("");
        let version = tokens.next().unwrap_or("");
        if first != magic || version != VERSION {
            return Err(FormatError::BadMagic {
                expected: magic,
                found: line.chars().take(64).collect(),
            });
        }
        let mut fields = HashMap::new();
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| FormatError::MalformedHeader(format!("token `{t}` is not key=value")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        Ok(Header { fields })
    }

    fn str(&self, key: &str) -> std::result::Result<&str, FormatError> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| FormatError::MalformedHeader(format!("missing `{key}`")))
    }

    fn usize(&self, key: &str) -> std::result::Result<usize, FormatError> {
        let v = self.str(key)?;
        v.parse()
            .map_err(|_| FormatError::MalformedHeader(format!("`{key}={v}` is not a count")))
    }
}

fn parse_float(token: &str, line: usize) -> std::result::Result<f64, FormatError> {
    let v: f64 = token.parse().map_err(|_| FormatError::BadToken {
        line,
        token: token.to_string(),
    })?;
    if !v.is_finite() {
        return Err(FormatError::NonFinite {
            line,
            token: token.to_string(),
        });
    }
    Ok(v)
}

/// Header line plus the non-empty body lines, numbered from 2.
fn split_body<'a>(
    text: &'a str,
    magic: &'static str,
) -> std::result::Result<(Header, Vec<(usize, &'a str)>), FormatError> {
    let mut lines = text.lines();
    let header = Header::parse(lines.next().unwrap_or(""), magic)?;
    let body = lines
        .enumerate()
        .map(|(i, l)| (i + 2, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    Ok((header, body))
}

fn parse_rows(
    body: &[(usize, &str)],
    rows: usize,
    cols: usize,
) -> std::result::Result<Matrix, FormatError> {
    if body.len() != rows {
        return Err(FormatError::RowCountMismatch {
            expected: rows,
            found: body.len(),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for &(line, text) in body {
        let before = data.len();
        for token in text.split_whitespace() {
            data.push(parse_float(token, line)?);
        }
        if data.len() - before != cols {
            return Err(FormatError::ColumnCountMismatch {
                line,
                expected: cols,
                found: data.len() - before,
            });
        }
    }
    Ok(Matrix::from_vec(rows, cols, data).expect("sized while parsing"))
}

fn push_row(out: &mut String, row: &[f64]) {
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        write!(out, "{v}").expect("writing to a String");
    }
    out.push('\n');
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| UkdError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| UkdError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| UkdError::io(path, e))
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(UkdError::precondition(format!(
            "teacher id `{id}` must be non-empty and contain no whitespace"
        )));
    }
    Ok(())
}

pub fn logits_to_string(teacher_id: &str, logits: &Matrix) -> String {
    let mut out = format!(
        "{LOGITS_MAGIC} {VERSION} n={} c={} teacher={teacher_id}\n",
        logits.rows(),
        logits.cols()
    );
    for row in logits.iter_rows() {
        push_row(&mut out, row);
    }
    out
}

pub fn parse_logits(text: &str) -> std::result::Result<LogitDump, FormatError> {
    let (header, body) = split_body(text, LOGITS_MAGIC)?;
    let n = header.usize("n")?;
    let c = header.usize("c")?;
    let teacher_id = header.str("teacher")?.to_string();
    let values = parse_rows(&body, n, c)?;
    let logits = LogitMatrix::new(teacher_id.clone(), values).expect("finite values checked while parsing");
    Ok(LogitDump { teacher_id, logits })
}

pub fn write_logits(path: &Path, teacher_id: &str, logits: &Matrix) -> Result<()> {
    check_id(teacher_id)?;
    if !logits.is_finite() {
        return Err(UkdError::Numerical(format!("teacher `{teacher_id}` produced non-finite logits")));
    }
    write(path, &logits_to_string(teacher_id, logits))
}

/// Runs `model` on every sample of `data` and writes the logits.
pub fn dump_logits(model: &StudentModel, data: &Dataset, teacher_id: &str, path: &Path) -> Result<()> {
    if data.is_empty() {
        return Err(UkdError::precondition("refusing to dump logits of an empty dataset"));
    }
    let logits = forward(model, &data.features)?;
    write_logits(path, teacher_id, &logits)
}

pub fn load_logits(path: &Path) -> Result<LogitDump> {
    parse_logits(&read(path)?).map_err(|e| UkdError::format(path, e))
}

/// Loads dumps in order (teacher k = position k) into an aligned bank.
pub fn load_bank(paths: &[impl AsRef<Path>]) -> Result<TeacherBank> {
    let mut dumps: Vec<LogitDump> = Vec::with_capacity(paths.len());
    for p in paths {
        let p = p.as_ref();
        let dump = load_logits(p)?;
        if let Some(first) = dumps.first() {
            if dump.c() != first.c() {
                return Err(UkdError::format(
                    p,
                    FormatError::ClassMismatch {
                        id: dump.teacher_id.clone(),
                        expected: first.c(),
                        found: dump.c(),
                    },
                ));
            }
            if dump.n() != first.n() {
                return Err(UkdError::format(
                    p,
                    FormatError::SampleMismatch {
                        id: dump.teacher_id.clone(),
                        expected: first.n(),
                        found: dump.n(),
                    },
                ));
            }
        }
        dumps.push(dump);
    }
    TeacherBank::new(dumps.into_iter().map(|d| d.logits).collect())
}

pub fn dataset_to_string(data: &Dataset) -> String {
    let mut out = format!(
        "{DATASET_MAGIC} {VERSION} n={} d={} c={} modality={} split={}\n",
        data.len(),
        data.dim(),
        data.classes(),
        data.modality,
        data.split
    );
    for (row, y) in data.features.iter_rows().zip(data.labels.as_slice()) {
        for v in row {
            write!(out, "{v} ").expect("writing to a String");
        }
        writeln!(out, "{y}").expect("writing to a String");
    }
    out
}

pub fn parse_dataset(text: &str) -> std::result::Result<Dataset, FormatError> {
    let (header, body) = split_body(text, DATASET_MAGIC)?;
    let n = header.usize("n")?;
    let d = header.usize("d")?;
    let c = header.usize("c")?;
    let modality: Modality = header
        .str("modality")?
        .parse()
        .map_err(|e: UkdError| FormatError::MalformedHeader(e.to_string()))?;
    let split: Split = header
        .str("split")?
        .parse()
        .map_err(|e: UkdError| FormatError::MalformedHeader(e.to_string()))?;
    if body.len() != n {
        return Err(FormatError::RowCountMismatch {
            expected: n,
            found: body.len(),
        });
    }
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for &(line, text) in &body {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != d + 1 {
            return Err(FormatError::ColumnCountMismatch {
                line,
                expected: d + 1,
                found: tokens.len(),
            });
        }
        for t in &tokens[..d] {
            let v = parse_float(t, line)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(FormatError::BadToken {
                    line,
                    token: t.to_string(),
                });
            }
            features.push(v);
        }
        let label: usize = tokens[d].parse().map_err(|_| FormatError::BadToken {
            line,
            token: tokens[d].to_string(),
        })?;
        if label >= c {
            return Err(FormatError::LabelOutOfRange {
                line,
                label,
                classes: c,
            });
        }
        labels.push(label);
    }
    let features = Matrix::from_vec(n, d, features).expect("sized while parsing");
    let labels = LabelVector::new(labels, c).expect("range checked while parsing");
    Ok(Dataset::new(features, labels, modality, split).expect("validated while parsing"))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write(path, &dataset_to_string(data))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&read(path)?).map_err(|e| UkdError::format(path, e))
}

pub fn model_to_string(model: &StudentModel) -> String {
    let mut out = format!(
        "{MODEL_MAGIC} {VERSION} d={} h={} c={}\n",
        model.input_dim(),
        model.hidden_dim(),
        model.classes()
    );
    for row in model.w1.iter_rows() {
        push_row(&mut out, row);
    }
    push_row(&mut out, &model.b1);
    for row in model.w2.iter_rows() {
        push_row(&mut out, row);
    }
    push_row(&mut out, &model.b2);
    out
}

pub fn parse_model(text: &str) -> std::result::Result<StudentModel, FormatError> {
    let (header, body) = split_body(text, MODEL_MAGIC)?;
    let d = header.usize("d")?;
    let h = header.usize("h")?;
    let c = header.usize("c")?;
    let expected = h + 1 + c + 1;
    if body.len() != expected {
        return Err(FormatError::RowCountMismatch {
            expected,
            found: body.len(),
        });
    }
    let w1 = parse_rows(&body[..h], h, d)?;
    let b1 = parse_rows(&body[h..h + 1], 1, h)?;
    let w2 = parse_rows(&body[h + 1..h + 1 + c], c, h)?;
    let b2 = parse_rows(&body[h + 1 + c..], 1, c)?;
    Ok(StudentModel {
        w1,
        b1: b1.as_slice().to_vec(),
        w2,
        b2: b2.as_slice().to_vec(),
    })
}

pub fn write_model(path: &Path, model: &StudentModel) -> Result<()> {
    write(path, &model_to_string(model))
}

pub fn load_model(path: &Path) -> Result<StudentModel> {
    parse_model(&read(path)?).map_err(|e| UkdError::format(path, e))
}

/// Writes the assembled (single) target matrix of a target set.
pub fn write_targets(path: &Path, targets: &TargetSet) -> Result<()> {
    let mut out = String::new();
    for (k, t) in targets.targets().iter().enumerate() {
        writeln!(
            out,
            "{TARGETS_MAGIC} {VERSION} n={} c={} strategy={} index={k}",
            t.n(),
            t.c(),
            targets.strategy()
        )
        .expect("writing to a String");
        for row in t.values().iter_rows() {
            push_row(&mut out, row);
        }
    }
    write(path, &out)
}

/// Writes raw scores followed by normalized weights, one sample per line.
pub fn write_weights(path: &Path, teacher_ids: &[&str], weights: &EnsembleWeights) -> Result<()> {
    let raw = weights.raw();
    let mut out = format!(
        "{WEIGHTS_MAGIC} {VERSION} n={} k={} teachers={} layout=raw,normalized\n",
        raw.rows(),
        raw.cols(),
        teacher_ids.join(",")
    );
    for (r, w) in raw.iter_rows().zip(weights.normalized().iter_rows()) {
        let row: Vec<f64> = r.iter().chain(w).copied().collect();
        push_row(&mut out, &row);
    }
    write(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_valid_logits() {
        let dump = parse_logits("#logits v1 n=2 c=3 teacher=rgb\n1 2 3\n-0.5 0 1e-3\n").unwrap();
        assert_eq!((dump.n(), dump.c()), (2, 3));
        assert_eq!(dump.teacher_id, "rgb");
        assert_eq!(dump.logits.row(1), &[-0.5, 0.0, 1e-3]);
    }

    #[test]
    fn logit_diagnostics() {
        assert!(matches!(
            parse_logits("#logit v1 n=1 c=1 teacher=t\n1\n"),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            parse_logits("#logits v1 n=1 teacher=t\n1\n"),
            Err(FormatError::MalformedHeader(_))
        ));
        let four_rows = "#logits v1 n=5 c=1 teacher=t\n1\n2\n3\n4\n";
        let err = parse_logits(four_rows).unwrap_err();
        assert!(matches!(err, FormatError::RowCountMismatch { expected: 5, found: 4 }));
        assert!(err.to_string().contains("row count mismatch"));
        let err = parse_logits("#logits v1 n=1 c=2 teacher=t\n1 NaN\n").unwrap_err();
        assert!(matches!(err, FormatError::NonFinite { line: 2, .. }));
        assert!(err.to_string().contains("non-finite value"));
        assert!(matches!(
            parse_logits("#logits v1 n=1 c=2 teacher=t\n1 2 3\n"),
            Err(FormatError::ColumnCountMismatch { .. })
        ));
        assert!(matches!(
            parse_logits("#logits v1 n=1 c=2 teacher=t\n1 x\n"),
            Err(FormatError::BadToken { .. })
        ));
    }

    #[test]
    fn dataset_diagnostics() {
        let ok = "#dataset v1 n=1 d=2 c=3 modality=A split=train\n0.5 0.25 2\n";
        let d = parse_dataset(ok).unwrap();
        assert_eq!(d.labels.as_slice(), &[2]);
        assert!(matches!(
            parse_dataset("#dataset v1 n=1 d=2 c=3 modality=A split=train\n0.5 0.25 3\n"),
            Err(FormatError::LabelOutOfRange { .. })
        ));
        assert!(matches!(
            parse_dataset("#dataset v1 n=1 d=2 c=3 modality=A split=train\n0.5 inf 1\n"),
            Err(FormatError::NonFinite { .. })
        ));
        assert!(matches!(
            parse_dataset("#dataset v1 n=1 d=2 c=3 modality=Z split=train\n0.5 0.5 1\n"),
            Err(FormatError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_dataset("#datasets v1 n=1 d=2 c=3 modality=A split=train\n0.5 0.5 1\n"),
            Err(FormatError::BadMagic { .. })
        ));
    }

    #[test]
    fn bank_rejects_class_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        write_logits(&a, "a", &Matrix::zeros(2, 3)).unwrap();
        write_logits(&b, "b", &Matrix::zeros(2, 4)).unwrap();
        let err = load_bank(&[&a, &b]).unwrap_err();
        assert!(matches!(
            err,
            UkdError::Format {
                source: FormatError::ClassMismatch { .. },
                ..
            }
        ));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rejects_bad_teacher_id() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_logits(&dir.path().join("x"), "two words", &Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn model_round_trip() {
        let mut rng = crate::datagen::Prng::new(1);
        let m = StudentModel::init(4, 3, 2, &mut rng);
        assert_eq!(parse_model(&model_to_string(&m)).unwrap(), m);
    }

    proptest! {
        #[test]
        fn logits_round_trip_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 1..6)
        ) {
            let m = Matrix::from_rows(&rows).unwrap();
            let back = parse_logits(&logits_to_string("t", &m)).unwrap();
            let same = m.as_slice().iter().zip(back.logits.values().as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
