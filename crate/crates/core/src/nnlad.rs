//! Nonnegative least absolute deviation: `min_{z >= 0} ||A z - y||_1`.
//!
//! The main solver is a restarted primal-dual hybrid gradient method on the
//! saddle-point form `min_{z >= 0} max_{|u|_inf <= 1} <u, A z - y>`. The
//! data term has a closed-form proximal map (clipping in the dual) and the
//! constraint is a projection, so each iteration costs one product with
//! `A` and one with `A^T`.
//!
//! Optimality is certified with a duality gap. Any dual point `u` in the
//! box yields the lower bound `-<u, y> - K max_j (A^T u)^-_j / c_j`, where
//! `c_j` are the column sums of `A` and `K` bounds `||A z*||_1`. The bound
//! is rigorous when `A` is nonnegative, which
//! holds for every pooling design; other matrices are certified only by
//! dual-feasible points (`A^T u >= 0`), which PDHG rarely hits exactly, so
//! they usually run to the iteration cap or the exact fallback.

use crate::design::PoolingDesign;
use crate::lp::{LinearProgram, LpError};
use crate::matrix::CscMatrix;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("readout has length {got}, design has {expected} tests")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("readout entry {0} is not finite")]
    NonFinite(usize),
    #[error("exact solver failed: {0}")]
    Exact(#[from] LpError),
}

/// A sensing matrix together with a readout of matching length.
#[derive(Clone, Debug, PartialEq)]
pub struct NnladProblem {
    matrix: CscMatrix,
    readout: Vec<f64>,
}

impl NnladProblem {
    pub fn new(matrix: CscMatrix, readout: Vec<f64>) -> Result<Self, SolverError> {
        if readout.len() != matrix.nrows() {
            return Err(SolverError::DimensionMismatch { expected: matrix.nrows(), got: readout.len() });
        }
        if let Some(i) = readout.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite(i));
        }
        Ok(Self { matrix, readout })
    }

    pub fn from_design(design: &PoolingDesign, readout: Vec<f64>) -> Result<Self, SolverError> {
        Self::new(design.normalized(), readout)
    }

    pub fn matrix(&self) -> &CscMatrix {
        &self.matrix
    }

    pub fn readout(&self) -> &[f64] {
        &self.readout
    }

    /// `||A z - y||_1`
    pub fn objective(&self, z: &[f64]) -> f64 {
        l1_residual(&self.matrix.mul(z), &self.readout)
    }

    /// Absolute optimality tolerance `max(tol_floor, tol_rel * ||y||_1)`.
    pub fn tolerance(&self, options: &SolverOptions) -> f64 {
        let y1: f64 = self.readout.iter().map(|v| v.abs()).sum();
        options.tol_floor.max(options.tol_rel * y1)
    }
}

fn l1_residual(az: &[f64], y: &[f64]) -> f64 {
    az.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative optimality tolerance, scaled by `||y||_1`.
    pub tol_rel: f64,
    /// Absolute floor of the optimality tolerance.
    pub tol_floor: f64,
    pub max_iters: usize,
    /// Power iterations used to estimate `||A||_2` for the step sizes.
    pub power_iters: usize,
    /// Iterations between optimality checks and restart decisions.
    pub check_every: usize,
    /// Try an active-set least-squares refinement at each check.
    pub polish: bool,
    /// Fall back to the exact simplex when the first-order method does not
    /// certify optimality and `M + N <= 64`.
    pub exact_fallback: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_rel: 1e-8,
            tol_floor: 1e-8,
            max_iters: 50_000,
            power_iters: 20,
            check_every: 64,
            polish: true,
            exact_fallback: true,
        }
    }
}

/// Largest `M + N` handled by the exact fallback.
pub const EXACT_FALLBACK_SIZE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NnladSolution {
    pub estimate: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Certified duality gap of the returned estimate (infinite when no
    /// dual bound was obtained).
    pub gap: f64,
    /// Best objective seen at each optimality check.
    pub history: Vec<f64>,
}

/// The `l1` epigraph form over variables `(z, t)`:
/// `min sum t` s.t. `A z - t <= y`, `-A z - t <= -y`, `z, t >= 0`.
pub fn lp_form(problem: &NnladProblem) -> LinearProgram {
    let a = problem.matrix.to_dense();
    let (m, n) = a.shape();
    let mut objective = vec![0.0; n + m];
    objective[n..].iter_mut().for_each(|c| *c = 1.0);
    let mut constraints = Vec::with_capacity(2 * m);
    let mut bounds = Vec::with_capacity(2 * m);
    for i in 0..m {
        let mut upper = vec![0.0; n + m];
        let mut lower = vec![0.0; n + m];
        for j in 0..n {
            upper[j] = a[(i, j)];
            lower[j] = -a[(i, j)];
        }
        upper[n + i] = -1.0;
        lower[n + i] = -1.0;
        constraints.push(upper);
        bounds.push(problem.readout[i]);
        constraints.push(lower);
        bounds.push(-problem.readout[i]);
    }
    LinearProgram { objective, constraints, bounds }
}

/// Solves the epigraph LP with the dense simplex. Exact up to rounding,
/// but only practical for small instances.
pub fn solve_nnlad_exact(problem: &NnladProblem) -> Result<NnladSolution, SolverError> {
    let n = problem.matrix.ncols();
    let sol = lp_form(problem).solve()?;
    let estimate = sol.x[..n].to_vec();
    let objective = problem.objective(&estimate);
    Ok(NnladSolution {
        estimate,
        objective,
        iterations: sol.pivots,
        status: SolveStatus::Converged,
        gap: 0.0,
        history: vec![objective],
    })
}

/// Longest run of checks skipped between polish attempts.
const MAX_POLISH_BACKOFF: usize = 15;

pub fn solve_nnlad(problem: &NnladProblem, options: &SolverOptions) -> NnladSolution {
    let mut sol = Pdhg::new(problem, options).run();
    let small = problem.matrix.nrows() + problem.matrix.ncols() <= EXACT_FALLBACK_SIZE;
    if sol.status != SolveStatus::Converged && options.exact_fallback && small {
        if let Ok(exact) = solve_nnlad_exact(problem) {
            if exact.objective <= sol.objective {
                sol.estimate = exact.estimate;
                sol.objective = exact.objective;
                sol.history.push(exact.objective);
            }
            sol.status = SolveStatus::Converged;
            sol.gap = 0.0;
        }
    }
    sol
}

struct Pdhg<'a> {
    a: &'a CscMatrix,
    y: &'a [f64],
    opts: &'a SolverOptions,
    tol: f64,
    y1: f64,
    col_sums: Vec<f64>,
    rigorous_bound: bool,
    best_z: Vec<f64>,
    best_obj: f64,
    best_lb: f64,
    history: Vec<f64>,
}

/// A primal-dual pair with the products needed to score it.
struct Scored {
    z: Vec<f64>,
    u: Vec<f64>,
    objective: f64,
    lower_bound: f64,
    kkt: f64,
}

impl<'a> Pdhg<'a> {
    fn new(problem: &'a NnladProblem, opts: &'a SolverOptions) -> Self {
        let a = &problem.matrix;
        let col_sums = a.column_sums();
        // Empty columns have (A^T u)_j = 0 and drop out of the bound.
        let rigorous_bound = a.is_nonnegative();
        let y = problem.readout.as_slice();
        let y1 = y.iter().map(|v| v.abs()).sum();
        let zero = vec![0.0; a.ncols()];
        Self {
            a,
            y,
            opts,
            tol: problem.tolerance(opts),
            y1,
            col_sums,
            rigorous_bound,
            best_obj: y1,
            best_z: zero,
            best_lb: 0.0,
            history: Vec::new(),
        }
    }

    fn gap(&self) -> f64 {
        self.best_obj - self.best_lb
    }

    fn lower_bound(&self, u: &[f64], atu: &[f64]) -> f64 {
        // max <z, (A^T u)^-> over the region known to contain z*.
        let penalty = if self.rigorous_bound {
            // sum_j c_j z*_j = ||A z*||_1 <= ||A z* - y||_1 + ||y||_1
            let k = self.best_obj + self.y1;
            k * atu
                .iter()
                .zip(&self.col_sums)
                .filter(|(_, &c)| c > 0.0)
                .map(|(&g, &c)| (-g).max(0.0) / c)
                .fold(0.0, f64::max)
        } else if atu.iter().all(|&g| g >= 0.0) {
            // Without sign structure z* can be arbitrarily large, so only a
            // dual-feasible u gives a bound.
            0.0
        } else {
            return 0.0;
        };
        let dual: f64 = -u.iter().zip(self.y).map(|(a, b)| a * b).sum::<f64>();
        (dual - penalty).max(0.0)
    }

    fn score(&mut self, z: Vec<f64>, u: Vec<f64>) -> Scored {
        let az = self.a.mul(&z);
        let objective = l1_residual(&az, self.y);
        let atu = self.a.mul_transpose(&u);
        self.offer(&z, objective);
        let lower_bound = self.lower_bound(&u, &atu);
        self.best_lb = self.best_lb.max(lower_bound);
        let dual: f64 = -u.iter().zip(self.y).map(|(a, b)| a * b).sum::<f64>();
        let infeas: f64 = atu.iter().map(|&g| (-g).max(0.0).powi(2)).sum::<f64>().sqrt();
        let kkt = ((objective - dual).powi(2) + (self.y1.max(1.0) * infeas).powi(2)).sqrt();
        Scored { z, u, objective, lower_bound, kkt }
    }

    fn offer(&mut self, z: &[f64], objective: f64) {
        if objective < self.best_obj {
            self.best_obj = objective;
            self.best_z.copy_from_slice(z);
        }
    }

    /// Refits the apparent support on the rows that look uncorrupted.
    /// Returns whether the refit improved the best objective.
    fn polish(&mut self, z: &[f64]) -> bool {
        let zmax = z.iter().copied().fold(0.0, f64::max);
        if zmax <= 0.0 {
            return false;
        }
        let support: Vec<usize> = (0..z.len()).filter(|&j| z[j] > 1e-6 * zmax).collect();
        let az = self.a.mul(z);
        let scale = self.y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
        let rows: Vec<usize> = (0..self.y.len()).filter(|&i| (az[i] - self.y[i]).abs() <= 1e-3 * scale).collect();
        if support.is_empty() || rows.len() < support.len() {
            return false;
        }
        let mut row_pos = vec![usize::MAX; self.y.len()];
        for (k, &i) in rows.iter().enumerate() {
            row_pos[i] = k;
        }
        let mut sub = DMatrix::zeros(rows.len(), support.len());
        for (k, &j) in support.iter().enumerate() {
            for (i, v) in self.a.column(j) {
                if row_pos[i] != usize::MAX {
                    sub[(row_pos[i], k)] = v;
                }
            }
        }
        let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        let Ok(fit) = sub.svd(true, true).solve(&rhs, 1e-12) else { return false };
        if fit.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let mut candidate = vec![0.0; z.len()];
        for (k, &j) in support.iter().enumerate() {
            candidate[j] = fit[k].max(0.0);
        }
        let objective = l1_residual(&self.a.mul(&candidate), self.y);
        let improved = objective < self.best_obj;
        self.offer(&candidate, objective);
        improved
    }

    fn run(mut self) -> NnladSolution {
        let (m, n) = (self.a.nrows(), self.a.ncols());
        let mut iterations = 0;
        let zeros = (vec![0.0; n], vec![0.0; m]);
        self.score(zeros.0.clone(), zeros.1.clone());
        self.history.push(self.best_obj);
        if self.gap() <= self.tol || n == 0 || m == 0 {
            return self.finish(SolveStatus::Converged, 0);
        }

        let norm = self.a.norm_estimate(self.opts.power_iters);
        if !(norm.is_finite() && norm > 0.0) {
            return self.finish(SolveStatus::NumericalFailure, 0);
        }
        let eta = 0.9 / norm;
        let y2 = self.y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut omega = (m as f64).sqrt() / y2.max(1e-12);

        let (mut z, mut u) = zeros;
        let mut az = vec![0.0; m];
        let mut atu = vec![0.0; n];
        let mut z_next = vec![0.0; n];
        let mut az_next = vec![0.0; m];
        let mut z_avg = vec![0.0; n];
        let mut u_avg = vec![0.0; m];
        let mut averaged = 0usize;
        let mut restart_z = z.clone();
        let mut restart_u = u.clone();
        let mut restart_kkt = f64::INFINITY;
        let mut last_kkt = f64::INFINITY;
        let mut since_restart = 0usize;
        // Checks to skip before the next polish; grows while polishing fails.
        let (mut polish_wait, mut polish_backoff) = (0usize, 0usize);

        while iterations < self.opts.max_iters {
            let (tau, sigma) = (eta / omega, eta * omega);
            for _ in 0..self.opts.check_every {
                self.a.mul_transpose_into(&u, &mut atu);
                for j in 0..n {
                    z_next[j] = (z[j] - tau * atu[j]).max(0.0);
                }
                self.a.mul_into(&z_next, &mut az_next);
                for i in 0..m {
                    let extrapolated = 2.0 * az_next[i] - az[i];
                    u[i] = (u[i] + sigma * (extrapolated - self.y[i])).clamp(-1.0, 1.0);
                }
                std::mem::swap(&mut z, &mut z_next);
                std::mem::swap(&mut az, &mut az_next);
                averaged += 1;
                let w = 1.0 / averaged as f64;
                z_avg.iter_mut().zip(&z).for_each(|(a, v)| *a += w * (v - *a));
                u_avg.iter_mut().zip(&u).for_each(|(a, v)| *a += w * (v - *a));
                iterations += 1;
                since_restart += 1;
            }
            if z.iter().chain(&u).any(|v| !v.is_finite()) {
                return self.finish(SolveStatus::NumericalFailure, iterations);
            }

            let current = self.score(z.clone(), u.clone());
            let average = self.score(z_avg.clone(), u_avg.clone());
            let candidate = if average.kkt < current.kkt { average } else { current };
            if self.opts.polish {
                if polish_wait == 0 {
                    polish_backoff = if self.polish(&candidate.z) { 0 } else { (2 * polish_backoff + 1).min(MAX_POLISH_BACKOFF) };
                    polish_wait = polish_backoff;
                } else {
                    polish_wait -= 1;
                }
            }
            self.history.push(self.best_obj);
            if self.gap() <= self.tol {
                return self.finish(SolveStatus::Converged, iterations);
            }
            debug_assert!(candidate.lower_bound <= candidate.objective + self.tol.max(1e-9) * 10.0);

            let restart = candidate.kkt <= 0.2 * restart_kkt
                || (candidate.kkt <= 0.8 * restart_kkt && candidate.kkt > last_kkt)
                || since_restart as f64 >= 0.36 * iterations as f64;
            last_kkt = candidate.kkt;
            if restart {
                let dz = dist(&candidate.z, &restart_z);
                let du = dist(&candidate.u, &restart_u);
                if dz > 1e-10 && du > 1e-10 {
                    omega = (0.5 * (du / dz).ln() + 0.5 * omega.ln()).exp();
                }
                z.copy_from_slice(&candidate.z);
                u.copy_from_slice(&candidate.u);
                self.a.mul_into(&z, &mut az);
                restart_z.copy_from_slice(&z);
                restart_u.copy_from_slice(&u);
                restart_kkt = candidate.kkt;
                last_kkt = f64::INFINITY;
                z_avg.copy_from_slice(&z);
                u_avg.copy_from_slice(&u);
                averaged = 0;
                since_restart = 0;
            }
        }
        self.finish(SolveStatus::IterationLimit, iterations)
    }

    fn finish(self, status: SolveStatus, iterations: usize) -> NnladSolution {
        NnladSolution {
            objective: self.best_obj,
            estimate: self.best_z,
            iterations,
            status,
            gap: (self.best_obj - self.best_lb).max(0.0),
            history: self.history,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_problem(y: Vec<f64>) -> NnladProblem {
        let n = y.len();
        NnladProblem::new(CscMatrix::from_dense(&DMatrix::identity(n, n)), y).unwrap()
    }

    #[test]
    fn zero_readout_gives_zero() {
        let p = identity_problem(vec![0.0; 3]);
        let sol = solve_nnlad(&p, &SolverOptions::default());
        assert_eq!(sol.estimate, vec![0.0; 3]);
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.status, SolveStatus::Converged);
    }

    #[test]
    fn identity_clips_negative_readouts() {
        let p = identity_problem(vec![5.0, 0.0, -2.0]);
        let opts = SolverOptions { exact_fallback: false, ..Default::default() };
        let sol = solve_nnlad(&p, &opts);
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!((sol.objective - 2.0).abs() < 1e-7);
        for (got, want) in sol.estimate.iter().zip([5.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-6, "{:?}", sol.estimate);
        }
    }

    #[test]
    fn dimension_mismatch_and_non_finite() {
        let a = CscMatrix::from_dense(&DMatrix::identity(2, 2));
        assert_eq!(
            NnladProblem::new(a.clone(), vec![1.0]),
            Err(SolverError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(NnladProblem::new(a, vec![1.0, f64::NAN]), Err(SolverError::NonFinite(1)));
    }

    #[test]
    fn lp_form_counts_and_witness() {
        let design = crate::design::construct_design(crate::design::DesignParams::new(2, 1).unwrap());
        let y = vec![1.0, -2.0, 0.5, 3.0];
        let p = NnladProblem::from_design(&design, y.clone()).unwrap();
        let lp = lp_form(&p);
        assert_eq!(lp.num_variables(), 8);
        assert_eq!(lp.num_constraints(), 8);
        let mut witness = vec![0.0; 4];
        witness.extend(y.iter().map(|v| v.abs()));
        assert!(lp.is_feasible(&witness, 0.0));
    }

    #[test]
    fn lp_and_direct_agree_on_half_identity() {
        let a = CscMatrix::from_dense(&(DMatrix::identity(2, 2) * 0.5));
        let p = NnladProblem::new(a, vec![1.0, 3.0]).unwrap();
        let exact = solve_nnlad_exact(&p).unwrap();
        assert!(exact.objective.abs() < 1e-12);
        assert!((exact.estimate[0] - 2.0).abs() < 1e-12 && (exact.estimate[1] - 6.0).abs() < 1e-12);
        let opts = SolverOptions { exact_fallback: false, ..Default::default() };
        let fo = solve_nnlad(&p, &opts);
        assert!(fo.objective < 1e-7);
    }

    #[test]
    fn history_is_nonincreasing() {
        let d = DMatrix::from_row_slice(3, 4, &[1.0, 0.2, 0.0, 0.5, 0.0, 1.0, 0.3, 0.5, 0.4, 0.0, 1.0, 0.1]);
        let p = NnladProblem::new(CscMatrix::from_dense(&d), vec![2.0, -1.0, 4.0]).unwrap();
        let sol = solve_nnlad(&p, &SolverOptions { exact_fallback: false, ..Default::default() });
        assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.estimate.iter().all(|&v| v >= 0.0));
    }
}
