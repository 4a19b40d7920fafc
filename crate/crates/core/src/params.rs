//! Parameter bundles for the two-type, K-type, weighted and preferential
//! attachment models.
//!
//! Types are 0-based internally. In the two-type model type `0` is `A` and
//! type `1` is `B`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for probability vectors and stochastic rows summing to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("p must lie in (0, 1], got {0}")]
    TwoTypeP(f64),
    #[error("q must lie in [0, 1], got {0}")]
    TwoTypeQ(f64),
    #[error("at least one type is required")]
    NoTypes,
    #[error("type probabilities must be finite and non-negative (entry {index} = {value})")]
    NegativeProbability { index: usize, value: f64 },
    #[error("type probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("{name} must be {expected}x{expected}, got {rows} rows")]
    MatrixRows { name: &'static str, expected: usize, rows: usize },
    #[error("{name} row {row} has {len} entries, expected {expected}")]
    MatrixCols { name: &'static str, row: usize, len: usize, expected: usize },
    #[error("row {row} of q is not a probability vector (sum {sum})")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("{name}[{row}][{col}] = {value} must be strictly positive")]
    NotPositive { name: &'static str, row: usize, col: usize, value: f64 },
}

/// Dense K x K matrix, row major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMatrix {
    k: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ParamError> {
        Self::from_rows_named("matrix", rows)
    }

    fn from_rows_named(name: &'static str, rows: Vec<Vec<f64>>) -> Result<Self, ParamError> {
        let k = rows.len();
        let mut data = Vec::with_capacity(k * k);
        for (row, r) in rows.into_iter().enumerate() {
            if r.len() != k {
                return Err(ParamError::MatrixCols { name, row, len: r.len(), expected: k });
            }
            data.extend(r);
        }
        Ok(Self { k, data })
    }

    pub fn filled(k: usize, value: f64) -> Self {
        Self { k, data: vec![value; k * k] }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.k.max(1)).map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = ParamError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::from_rows(rows)
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        m.rows()
    }
}

fn check_dim(name: &'static str, m: &SquareMatrix, k: usize) -> Result<(), ParamError> {
    if m.k != k {
        return Err(ParamError::MatrixRows { name, expected: k, rows: m.k });
    }
    Ok(())
}

fn check_positive(name: &'static str, m: &SquareMatrix) -> Result<(), ParamError> {
    for i in 0..m.k {
        for j in 0..m.k {
            let v = m.get(i, j);
            if !(v > 0.0 && v.is_finite()) {
                return Err(ParamError::NotPositive { name, row: i, col: j, value: v });
            }
        }
    }
    Ok(())
}

fn check_probability_vector(p: &[f64]) -> Result<(), ParamError> {
    if p.is_empty() {
        return Err(ParamError::NoTypes);
    }
    for (index, &value) in p.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(ParamError::NegativeProbability { index, value });
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(ParamError::ProbabilitySum(sum));
    }
    Ok(())
}

/// Canonical two-type model: a newcomer is type `A` with probability `p` and
/// attaches within its own type with probability `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTwoType")]
pub struct TwoTypeParams {
    p: f64,
    q: f64,
}

#[derive(Deserialize)]
struct RawTwoType {
    p: f64,
    q: f64,
}

impl TryFrom<RawTwoType> for TwoTypeParams {
    type Error = ParamError;
    fn try_from(raw: RawTwoType) -> Result<Self, Self::Error> {
        Self::new(raw.p, raw.q)
    }
}

impl TwoTypeParams {
    pub fn new(p: f64, q: f64) -> Result<Self, ParamError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(ParamError::TwoTypeP(p));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(ParamError::TwoTypeQ(q));
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// The same model written as a K = 2 parameter set with type A first.
    pub fn to_k_type(&self) -> KTypeParams {
        let (p, q) = (self.p, self.q);
        KTypeParams {
            p: vec![p, 1.0 - p],
            q: SquareMatrix { k: 2, data: vec![q, 1.0 - q, 1.0 - q, q] },
        }
    }
}

/// K-type community modulated model. `q[i][j]` is the probability that a
/// type-`i` newcomer attaches to a type-`j` vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKType")]
pub struct KTypeParams {
    p: Vec<f64>,
    q: SquareMatrix,
}

#[derive(Deserialize)]
struct RawKType {
    p: Vec<f64>,
    q: SquareMatrix,
}

impl TryFrom<RawKType> for KTypeParams {
    type Error = ParamError;
    fn try_from(raw: RawKType) -> Result<Self, Self::Error> {
        Self::new(raw.p, raw.q)
    }
}

impl KTypeParams {
    pub fn new(p: Vec<f64>, q: SquareMatrix) -> Result<Self, ParamError> {
        check_probability_vector(&p)?;
        check_dim("q", &q, p.len())?;
        for i in 0..q.k {
            let row = q.row(i);
            if let Some(col) = row.iter().position(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(ParamError::NegativeProbability { index: col, value: row[col] });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(ParamError::RowNotStochastic { row: i, sum });
            }
        }
        Ok(Self { p, q })
    }

    pub fn from_rows(p: Vec<f64>, q: Vec<Vec<f64>>) -> Result<Self, ParamError> {
        Self::new(p, SquareMatrix::from_rows_named("q", q)?)
    }

    pub fn num_types(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &SquareMatrix {
        &self.q
    }

    /// Probability that the parent of a newcomer has type `i`:
    /// `sum_j p_j q_ji`.
    pub fn parent_type_probability(&self, i: usize) -> f64 {
        (0..self.num_types()).map(|j| self.p[j] * self.q.get(j, i)).sum()
    }
}

/// Community weighted model: newcomer type drawn from `p`, attachment to a
/// type-`j` vertex weighted by `omega[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCwrt")]
pub struct CwrtParams {
    p: Vec<f64>,
    omega: SquareMatrix,
}

#[derive(Deserialize)]
struct RawCwrt {
    p: Vec<f64>,
    omega: SquareMatrix,
}

impl TryFrom<RawCwrt> for CwrtParams {
    type Error = ParamError;
    fn try_from(raw: RawCwrt) -> Result<Self, Self::Error> {
        Self::new(raw.p, raw.omega)
    }
}

impl CwrtParams {
    pub fn new(p: Vec<f64>, omega: SquareMatrix) -> Result<Self, ParamError> {
        check_probability_vector(&p)?;
        check_dim("omega", &omega, p.len())?;
        check_positive("omega", &omega)?;
        Ok(Self { p, omega })
    }

    pub fn from_rows(p: Vec<f64>, omega: Vec<Vec<f64>>) -> Result<Self, ParamError> {
        Self::new(p, SquareMatrix::from_rows_named("omega", omega)?)
    }

    pub fn num_types(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn omega(&self) -> &SquareMatrix {
        &self.omega
    }
}

/// Community modulated preferential attachment: K-type type and target
/// rules, then a type-`j` vertex `v` is chosen proportionally to
/// `D_v + alpha[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCmpa")]
pub struct CmpaParams {
    #[serde(flatten)]
    base: KTypeParams,
    alpha: SquareMatrix,
}

#[derive(Deserialize)]
struct RawCmpa {
    p: Vec<f64>,
    q: SquareMatrix,
    alpha: SquareMatrix,
}

impl TryFrom<RawCmpa> for CmpaParams {
    type Error = ParamError;
    fn try_from(raw: RawCmpa) -> Result<Self, Self::Error> {
        Self::new(KTypeParams::new(raw.p, raw.q)?, raw.alpha)
    }
}

impl CmpaParams {
    pub fn new(base: KTypeParams, alpha: SquareMatrix) -> Result<Self, ParamError> {
        check_dim("alpha", &alpha, base.num_types())?;
        check_positive("alpha", &alpha)?;
        Ok(Self { base, alpha })
    }

    pub fn from_rows(p: Vec<f64>, q: Vec<Vec<f64>>, alpha: Vec<Vec<f64>>) -> Result<Self, ParamError> {
        Self::new(
            KTypeParams::from_rows(p, q)?,
            SquareMatrix::from_rows_named("alpha", alpha)?,
        )
    }

    /// Single-type linear preferential attachment with offset `alpha`.
    pub fn single_type(alpha: f64) -> Result<Self, ParamError> {
        Self::from_rows(vec![1.0], vec![vec![1.0]], vec![vec![alpha]])
    }

    pub fn base(&self) -> &KTypeParams {
        &self.base
    }

    pub fn alpha(&self) -> &SquareMatrix {
        &self.alpha
    }

    pub fn num_types(&self) -> usize {
        self.base.num_types()
    }
}
