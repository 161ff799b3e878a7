//! Seeded two-modality classification data.
//!
//! Every class owns a latent center in `[0.2, 0.8]^D`. Modality A holds the
//! first `D/2` coordinates of each sample and modality B the rest, so the two
//! teachers see complementary evidence. The student view `A_dark` is modality
//! A after darkening and gamma correction.

use std::fmt;
use std::str::FromStr;

use crate::ensemble::LabelVector;
use crate::error::{Result, UkdError};
use crate::matrix::Matrix;
use crate::preprocess::{
    darken, gamma_correct, DEFAULT_DARKEN_FACTOR, DEFAULT_GAMMA, DEFAULT_QUANT_LEVELS,
};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`: the top 53 bits of the next output over 2^53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal from two consecutive uniforms (Box–Muller, cosine branch).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, n)` by 128-bit multiply-high.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Seed for pipeline stage `stage`: first splitmix64 output of `seed + stage`.
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    Prng::new(seed.wrapping_add(stage)).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    A,
    B,
    ADark,
}

impl Modality {
    pub fn tag(self) -> &'static str {
        match self {
            Modality::A => "A",
            Modality::B => "B",
            Modality::ADark => "A_dark",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Modality {
    type Err = UkdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Modality::A),
            "B" | "b" => Ok(Modality::B),
            "A_dark" | "a_dark" | "A_DARK" => Ok(Modality::ADark),
            other => Err(UkdError::precondition(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Split {
    type Err = UkdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(UkdError::precondition(format!("unknown split `{other}`"))),
        }
    }
}

/// Features in `[0,1]` with aligned labels for one modality view of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: LabelVector,
    pub modality: Modality,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Matrix, labels: LabelVector, modality: Modality, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(UkdError::dims(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(v) = features.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(UkdError::precondition(format!("feature {v} outside [0,1]")));
        }
        Ok(Dataset {
            features,
            labels,
            modality,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.labels.classes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataParams {
    pub n_train: usize,
    pub n_test: usize,
    pub classes: usize,
    pub dim: usize,
    pub noise: f64,
    pub darken_factor: f64,
    pub quant_levels: u32,
    pub gamma: f64,
}

impl Default for DataParams {
    fn default() -> Self {
        DataParams {
            n_train: 2000,
            n_test: 1000,
            classes: 11,
            dim: 20,
            noise: 0.15,
            darken_factor: DEFAULT_DARKEN_FACTOR,
            quant_levels: DEFAULT_QUANT_LEVELS,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl DataParams {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(UkdError::precondition("need at least two classes"));
        }
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(UkdError::precondition(format!(
                "feature dimension must be positive and even, got {}",
                self.dim
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(UkdError::precondition(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

/// The three aligned views of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityViews {
    pub a: Dataset,
    pub b: Dataset,
    pub a_dark: Dataset,
}

impl ModalityViews {
    pub fn get(&self, modality: Modality) -> &Dataset {
        match modality {
            Modality::A => &self.a,
            Modality::B => &self.b,
            Modality::ADark => &self.a_dark,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub train: ModalityViews,
    pub test: ModalityViews,
}

const CENTER_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

fn sample_split(
    rng: &mut Prng,
    centers: &Matrix,
    n: usize,
    params: &DataParams,
    split: Split,
) -> Result<ModalityViews> {
    let (c, d) = (params.classes, params.dim);
    let mut labels = Vec::with_capacity(n);
    let mut full = Matrix::zeros(n, d);
    for i in 0..n {
        let y = rng.below(c);
        labels.push(y);
        for (x, &z) in full.row_mut(i).iter_mut().zip(centers.row(y)) {
            *x = (z + params.noise * rng.next_normal()).clamp(0.0, 1.0);
        }
    }
    let labels = LabelVector::new(labels, c)?;
    let a = full.column_range(0, d / 2);
    let b = full.column_range(d / 2, d);
    let dark = darken(a.as_slice(), params.darken_factor, params.quant_levels)?;
    let dark = gamma_correct(&dark, params.gamma)?;
    let dark = Matrix::from_vec(n, d / 2, dark)?;
    Ok(ModalityViews {
        a: Dataset::new(a, labels.clone(), Modality::A, split)?,
        b: Dataset::new(b, labels.clone(), Modality::B, split)?,
        a_dark: Dataset::new(dark, labels, Modality::ADark, split)?,
    })
}

/// Generates train and test splits, each in all three modality views.
pub fn gen_dataset(seed: u64, params: &DataParams) -> Result<GeneratedData> {
    params.validate()?;
    let mut rng = Prng::new(derive_seed(seed, CENTER_STREAM));
    let mut centers = Matrix::zeros(params.classes, params.dim);
    for v in centers.as_mut_slice() {
        *v = 0.2 + 0.6 * rng.next_f64();
    }
    let train = sample_split(
        &mut Prng::new(derive_seed(seed, TRAIN_STREAM)),
        &centers,
        params.n_train,
        params,
        Split::Train,
    )?;
    let test = sample_split(
        &mut Prng::new(derive_seed(seed, TEST_STREAM)),
        &centers,
        params.n_test,
        params,
        Split::Test,
    )?;
    Ok(GeneratedData { train, test })
}
