//! Circulant-block pooling designs and their combinatorial certificates.
//!
//! For a prime `q` and a sparsity level `s < q`, the design has `s + 1`
//! block rows and `q` block columns. Block `(a, b)` (0-based) is the cyclic
//! shift `P^(a * b mod q)` where `P` maps basis vector `e_j` to
//! `e_{j+1 mod q}`. The binary matrix `B` has `(s + 1) q` rows (tests) and
//! `q^2` columns (individuals); the normalized matrix is `A = B / (s + 1)`,
//! so every column of `A` sums to one.

use crate::matrix::{BinaryMatrix, CscMatrix};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative singular value cutoff used for the pseudoinverse.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Default cap on elementary set operations for exhaustive disjunctness.
pub const DEFAULT_DISJUNCT_BUDGET: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("pool size q = {0} is not prime")]
    NonPrimeQ(u64),
    #[error("s = {s} must be smaller than q = {q}")]
    STooLarge { s: u64, q: u64 },
    #[error("s must be at least 1")]
    ZeroS,
    #[error("design dimensions disagree with (q, s): {0}")]
    DimensionMismatch(String),
    #[error("exhaustive disjunctness check needs ~{work:.3e} set operations, budget is {budget:.3e}")]
    TooLargeToVerify { work: f64, budget: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("recovery certificate unavailable: {0}")]
    CertificateUnavailable(String),
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n % 2 == 0 {
        return false;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Pool size `q` (prime) and guaranteed sparsity `s`, with `q > s >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DesignParams {
    q: u64,
    s: u64,
}

impl DesignParams {
    pub fn new(q: u64, s: u64) -> Result<Self, DesignError> {
        if !is_prime(q) {
            return Err(DesignError::NonPrimeQ(q));
        }
        if s == 0 {
            return Err(DesignError::ZeroS);
        }
        if s >= q {
            return Err(DesignError::STooLarge { s, q });
        }
        Ok(Self { q, s })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    /// Number of tests `(s + 1) q`.
    pub fn tests(&self) -> usize {
        ((self.s + 1) * self.q) as usize
    }

    /// Number of individuals `q^2`.
    pub fn individuals(&self) -> usize {
        (self.q * self.q) as usize
    }

    /// Tests per individual, `(s + 1) / q`.
    pub fn tests_per_individual(&self) -> f64 {
        (self.s + 1) as f64 / self.q as f64
    }
}

/// A pooling design: the binary matrix `B` and the normalization `1/(s+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolingDesign {
    params: DesignParams,
    binary: BinaryMatrix,
}

/// Builds the circulant-block design for `params`.
pub fn construct_design(params: DesignParams) -> PoolingDesign {
    let q = params.q as usize;
    let blocks = params.s as usize + 1;
    let supports = (0..q * q)
        .map(|n| {
            let (b, j) = (n / q, n % q);
            (0..blocks).map(|a| a * q + (j + a * b) % q).collect()
        })
        .collect();
    let binary = BinaryMatrix::from_supports(params.tests(), supports)
        .expect("construction stays in range");
    PoolingDesign { params, binary }
}

impl PoolingDesign {
    /// Wraps an arbitrary binary matrix, e.g. one read back from a file.
    /// Only the dimensions are checked; see [`PoolingDesign::structure`].
    pub fn from_binary(params: DesignParams, binary: BinaryMatrix) -> Result<Self, DesignError> {
        if binary.rows() != params.tests() || binary.cols() != params.individuals() {
            return Err(DesignError::DimensionMismatch(format!(
                "expected {}x{}, got {}x{}",
                params.tests(),
                params.individuals(),
                binary.rows(),
                binary.cols()
            )));
        }
        Ok(Self { params, binary })
    }

    pub fn params(&self) -> DesignParams {
        self.params
    }

    pub fn m(&self) -> usize {
        self.binary.rows()
    }

    pub fn n(&self) -> usize {
        self.binary.cols()
    }

    /// Entry value of the normalized matrix, `1/(s+1)`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.params.s + 1) as f64
    }

    pub fn binary(&self) -> &BinaryMatrix {
        &self.binary
    }

    /// The normalized sensing matrix `A`.
    pub fn normalized(&self) -> CscMatrix {
        self.binary.scaled(self.scale())
    }

    pub fn normalized_dense(&self) -> DMatrix<f64> {
        self.binary.to_dense(self.scale())
    }

    /// Specimens pooled into each test.
    pub fn pools(&self) -> Vec<Vec<usize>> {
        self.binary.row_supports()
    }

    pub fn structure(&self) -> StructureReport {
        let d = self.params.s as usize + 1;
        let q = self.params.q as usize;
        let cw = self.binary.column_weights();
        let rw = self.binary.row_weights();
        StructureReport {
            ones: self.binary.count_ones(),
            expected_ones: d * q * q,
            column_weight_range: min_max(&cw),
            row_weight_range: min_max(&rw),
            expected_column_weight: d,
            expected_row_weight: q,
            lambda: max_column_coherence(&self.binary),
        }
    }

    pub fn certificate(&self) -> Result<DesignCertificate, DesignError> {
        certificate(self)
    }
}

fn min_max(v: &[usize]) -> (usize, usize) {
    let min = v.iter().copied().min().unwrap_or(0);
    let max = v.iter().copied().max().unwrap_or(0);
    (min, max)
}

/// Structural invariants of a design, as counted from its ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StructureReport {
    pub ones: usize,
    pub expected_ones: usize,
    pub column_weight_range: (usize, usize),
    pub row_weight_range: (usize, usize),
    pub expected_column_weight: usize,
    pub expected_row_weight: usize,
    pub lambda: usize,
}

impl StructureReport {
    pub fn is_valid(&self) -> bool {
        self.ones == self.expected_ones
            && self.column_weight_range
                == (self.expected_column_weight, self.expected_column_weight)
            && self.row_weight_range == (self.expected_row_weight, self.expected_row_weight)
            && self.lambda <= 1
    }
}

/// Largest number of ones shared by two distinct columns.
pub fn max_column_coherence(matrix: &BinaryMatrix) -> usize {
    let n = matrix.cols();
    (0..n)
        .into_par_iter()
        .map(|a| ((a + 1)..n).map(|b| matrix.column_overlap(a, b)).max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Work estimate `N * C(N-1, s)` for an exhaustive disjunctness check.
pub fn disjunct_work(cols: usize, s: usize) -> f64 {
    if cols == 0 {
        return 0.0;
    }
    cols as f64 * binomial(cols - 1, s.min(cols - 1))
}

/// Exhaustively decides whether `matrix` is `s`-disjunct: no column's
/// support is covered by the union of at most `s` other columns.
///
/// Refuses with [`DesignError::TooLargeToVerify`] when the work estimate
/// exceeds `budget`, unless `force` is set.
pub fn verify_disjunct(
    matrix: &BinaryMatrix,
    s: usize,
    budget: f64,
    force: bool,
) -> Result<bool, DesignError> {
    let work = disjunct_work(matrix.cols(), s);
    if !force && work > budget {
        return Err(DesignError::TooLargeToVerify { work, budget });
    }
    let words = matrix.rows().div_ceil(64).max(1);
    let bits: Vec<Vec<u64>> = matrix
        .supports()
        .iter()
        .map(|sup| {
            let mut w = vec![0u64; words];
            for &r in sup {
                w[r / 64] |= 1 << (r % 64);
            }
            w
        })
        .collect();
    let depth = s.min(matrix.cols().saturating_sub(1));
    let ok = (0..matrix.cols()).into_par_iter().all(|target| {
        let others: Vec<usize> = (0..matrix.cols()).filter(|&c| c != target).collect();
        !covered(&bits, &others, bits[target].clone(), 0, depth)
    });
    Ok(ok)
}

/// Whether `remaining` can be emptied by removing at most `depth` of the
/// columns `others[start..]`.
fn covered(bits: &[Vec<u64>], others: &[usize], remaining: Vec<u64>, start: usize, depth: usize) -> bool {
    if remaining.iter().all(|&w| w == 0) {
        return true;
    }
    if depth == 0 {
        return false;
    }
    for i in start..others.len() {
        let col = &bits[others[i]];
        if remaining.iter().zip(col).all(|(r, c)| r & c == 0) {
            continue;
        }
        let next: Vec<u64> = remaining.iter().zip(col).map(|(r, c)| r & !c).collect();
        if covered(bits, others, next, i + 1, depth - 1) {
            return true;
        }
    }
    false
}

/// Moore-Penrose pseudoinverse computed from a thin SVD, with singular
/// values below `max_singular * PINV_RELATIVE_CUTOFF` treated as zero.
pub fn pseudoinverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, DesignError> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(DMatrix::zeros(n, m));
    }
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| DesignError::NumericalFailure("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = max_sv * PINV_RELATIVE_CUTOFF;
    let mut pinv = DMatrix::zeros(n, m);
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv > cutoff {
            pinv += v_t.row(k).transpose() * u.column(k).transpose() / sv;
        }
    }
    Ok(pinv)
}

/// Largest absolute column sum.
pub fn one_to_one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `||A^+||_{1->1}` for a dense matrix.
pub fn pinv_one_norm(a: &DMatrix<f64>) -> Result<f64, DesignError> {
    Ok(one_to_one_norm(&pseudoinverse(a)?))
}

/// Constants of the robust null space property and the resulting
/// `l1` error bound `||x - x#||_1 <= bound_constant * ||e||_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignCertificate {
    pub lambda: usize,
    pub d: usize,
    pub rho: f64,
    pub tau: f64,
    pub pinv_norm: f64,
    pub bound_constant: f64,
}

impl DesignCertificate {
    /// Combines coherence `lambda`, column weight `d`, sparsity `s` and
    /// `||A^+||_{1->1}` into the certificate. The bound uses the all-ones
    /// test vector, valid because every column of `A` sums to one.
    pub fn from_constants(lambda: usize, d: usize, s: u64, pinv_norm: f64) -> Result<Self, DesignError> {
        if lambda == 0 {
            return Err(DesignError::CertificateUnavailable("columns have disjoint supports".into()));
        }
        let s = s as f64;
        let ratio = 2.0 * d as f64 / lambda as f64;
        if ratio - s <= 0.0 {
            return Err(DesignError::CertificateUnavailable(format!("2d/lambda = {ratio} <= s")));
        }
        let rho = s / (ratio - s);
        if rho >= 1.0 {
            return Err(DesignError::CertificateUnavailable(format!("rho = {rho} >= 1")));
        }
        let tau = s * (ratio + 1.0) / (ratio - s) * pinv_norm;
        let bound_constant = 2.0 * ((1.0 + rho) / (1.0 - rho) + 2.0 * tau / (1.0 - rho));
        Ok(Self { lambda, d, rho, tau, pinv_norm, bound_constant })
    }
}

pub fn certificate(design: &PoolingDesign) -> Result<DesignCertificate, DesignError> {
    let lambda = max_column_coherence(design.binary());
    let pinv_norm = pinv_one_norm(&design.normalized_dense())?;
    DesignCertificate::from_constants(lambda, design.params.s as usize + 1, design.params.s, pinv_norm)
}
